use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ScenarioEvent, SimError};
use crate::exec::ExecMode;
use crate::gateway::RemoteConfig;
use crate::memory::{DecayPolicy, RetrievalWeights};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Stub,
    Remote,
}

impl std::str::FromStr for BackendChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stub" => Ok(BackendChoice::Stub),
            "remote" => Ok(BackendChoice::Remote),
            other => Err(format!("unknown backend `{other}` (expected stub or remote)")),
        }
    }
}

/// Run configuration, usually read from TOML. Relative paths resolve against the
/// configuration file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub start_date: NaiveDate,
    /// Horizon in whole days.
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendChoice,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
    /// Fall back to the scripted stub when the remote backend fails.
    #[serde(default = "default_true")]
    pub stub_fallback: bool,
    /// Network document; the bundled Nguyen–Dupuis network when absent.
    #[serde(default)]
    pub network: Option<PathBuf>,
    /// Population document; the bundled 70-person population when absent.
    #[serde(default)]
    pub population: Option<PathBuf>,
    /// Keep only the first `n` agents (and their households).
    #[serde(default)]
    pub agent_limit: Option<usize>,
    /// Override every road link's capacity.
    #[serde(default)]
    pub road_capacity: Option<u32>,
    /// TOML file with `[[events]]` tables, appended to `events`.
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    /// Minutes between periodic plan checks at a facility or in a queue.
    #[serde(default = "default_periodic")]
    pub periodic_interval: u32,
    /// Minutes between checkpoints when an output directory is set.
    #[serde(default = "default_checkpoint")]
    pub checkpoint_interval: u32,
    #[serde(default)]
    pub exec: ExecMode,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retrieval: RetrievalWeights,
    #[serde(default)]
    pub decay: Option<DecayPolicy>,
    /// Directory of prompt template overrides.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    /// Scripted stub policy override.
    #[serde(default)]
    pub stub_policy: Option<PathBuf>,
}

fn default_name() -> String {
    "run".into()
}
fn default_days() -> u32 {
    1
}
fn default_true() -> bool {
    true
}
fn default_periodic() -> u32 {
    30
}
fn default_checkpoint() -> u32 {
    60
}
fn default_in_flight() -> usize {
    8
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    events: Vec<ScenarioEvent>,
}

impl SimConfig {
    /// A stub-backed run of `days` days on the bundled fixtures.
    pub fn new(start_date: NaiveDate, days: u32, seed: u64) -> Self {
        SimConfig {
            name: default_name(),
            start_date,
            days,
            seed,
            backend: BackendChoice::Stub,
            remote: None,
            stub_fallback: true,
            network: None,
            population: None,
            agent_limit: None,
            road_capacity: None,
            scenario: None,
            events: Vec::new(),
            periodic_interval: default_periodic(),
            checkpoint_interval: default_checkpoint(),
            exec: ExecMode::default(),
            max_in_flight: default_in_flight(),
            retrieval: RetrievalWeights::default(),
            decay: None,
            templates: None,
            stub_policy: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    /// Reads a config file, resolves relative paths and merges the scenario file.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.network, &mut c.population, &mut c.scenario, &mut c.templates, &mut c.stub_policy].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        c.merge_scenario_file()?;
        Ok(c)
    }

    /// Moves the events of `scenario` into `events` so the run no longer needs the file.
    pub fn merge_scenario_file(&mut self) -> Result<(), SimError> {
        if let Some(p) = self.scenario.take() {
            let text = std::fs::read_to_string(&p).map_err(|e| SimError::Config(format!("{}: {e}", p.display())))?;
            let f: ScenarioFile = toml::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", p.display())))?;
            self.events.extend(f.events);
        }
        Ok(())
    }

    /// Checks everything that does not need the network.
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.days == 0 {
            return bad("days must be at least 1");
        }
        if self.periodic_interval == 0 || self.checkpoint_interval == 0 {
            return bad("periodic_interval and checkpoint_interval must be positive");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be positive");
        }
        if self.backend == BackendChoice::Remote && self.remote.is_none() {
            return bad("backend = \"remote\" needs a [remote] table");
        }
        if self.road_capacity == Some(0) {
            return bad("road_capacity must be at least 1");
        }
        self.retrieval.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if let Some(d) = &self.decay {
            d.validate().map_err(|e| SimError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn end_tick(&self) -> crate::Tick {
        self.days * crate::MINUTES_PER_DAY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_uses_defaults() {
        let c = SimConfig::from_toml("start_date = \"2025-03-03\"\ndays = 3\nseed = 9\n").unwrap();
        assert_eq!(c.days, 3);
        assert_eq!(c.periodic_interval, 30);
        assert_eq!(c.backend, BackendChoice::Stub);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(SimConfig::from_toml("start_date = \"2025-03-03\"\nhorizon = 3\n").is_err());
        let mut c = SimConfig::new(NaiveDate::from_ymd_opt(2025, 3, 3).unwrap(), 0, 1);
        assert!(c.validate().is_err());
        c.days = 1;
        c.backend = BackendChoice::Remote;
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = SimConfig::new(NaiveDate::from_ymd_opt(2025, 3, 3).unwrap(), 1, 1);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed = 2;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn scenario_file_is_merged_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("incident.toml"),
            "[[events]]\nkind = \"capacity_change\"\ntarget = \"Ave_2_link_2\"\ncapacity = 1\ndate = \"2025-03-11\"\nstart = \"07:30\"\nend = \"08:30\"\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("run.toml"), "start_date = \"2025-03-03\"\nscenario = \"incident.toml\"\n").unwrap();
        let c = SimConfig::load(&dir.path().join("run.toml")).unwrap();
        assert_eq!(c.events.len(), 1);
        assert!(c.scenario.is_none());
    }
}
