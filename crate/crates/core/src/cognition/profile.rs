use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::ClockTime;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub name: String,
    pub gender: String,
    pub age: u32,
    pub family_role: String,
    pub licensed_driver: bool,
    pub home_facility: String,
    #[serde(default)]
    pub work_facility: Option<String>,
    #[serde(default)]
    pub occupation: String,
    /// `"HH:MM-HH:MM"`.
    #[serde(default)]
    pub work_time: Option<String>,
    #[serde(default)]
    pub preferences_in_transportation: String,
    #[serde(default)]
    pub innate: String,
    #[serde(default)]
    pub lifestyle: String,
    #[serde(default)]
    pub household: String,
    pub household_income: String,
    #[serde(default)]
    pub friends: Vec<String>,
    #[serde(default)]
    pub other_description: String,
}

impl AgentProfile {
    /// Parsed work window, if the agent works.
    pub fn work_window(&self) -> Option<(ClockTime, ClockTime)> {
        let wt = self.work_time.as_deref()?;
        let (a, b) = wt.split_once('-')?;
        Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
    }

    pub fn is_child(&self) -> bool {
        matches!(self.family_role.as_str(), "son" | "daughter")
    }

    pub fn prefers_transit(&self) -> bool {
        let p = self.preferences_in_transportation.to_lowercase();
        p.contains("metro") || p.contains("transit")
    }

    /// Profile rendered as the key/value text used in prompts.
    pub fn describe(&self) -> String {
        let mut s = format!(
            "'name': '{}'\n'gender': '{}', 'age': {},\n'family_role': '{}', 'licensed_driver': {},\n",
            self.name,
            self.gender,
            self.age,
            self.family_role,
            if self.licensed_driver { "True" } else { "False" }
        );
        if let Some(w) = &self.work_facility {
            s.push_str(&format!("'work_facility': '{}', 'occupation': '{}',\n", w, self.occupation));
        }
        if let Some(t) = &self.work_time {
            s.push_str(&format!("'work_time': \"{t}\",\n"));
        }
        s.push_str(&format!(
            "'preferences_in_transportation': '{}'\n'innate': \"{}\"\n'lifestyle': \"{}\"\n'home_facility': '{}'\n'household_income': '{}', 'friends': {:?}\n'other_description': '{}'",
            self.preferences_in_transportation,
            self.innate,
            self.lifestyle,
            self.home_facility,
            self.household_income,
            self.friends,
            self.other_description
        ));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Household {
    pub id: String,
    pub home_facility: String,
    pub vehicles: u32,
    pub members: Vec<String>,
}

/// Agents plus the household registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Population {
    #[serde(default)]
    pub households: Vec<Household>,
    pub agents: Vec<AgentProfile>,
}

impl Population {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut p: Population = serde_json::from_str(text)?;
        p.agents.sort_by(|a, b| a.name.cmp(&b.name));
        p.households.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(p)
    }

    /// The bundled 70-person population for the Nguyen–Dupuis network.
    pub fn bundled() -> Self {
        Population::from_json(include_str!("../../data/population.json")).expect("bundled population is valid")
    }

    pub fn household(&self, id: &str) -> Option<&Household> {
        self.households.iter().find(|h| h.id == id)
    }

    pub fn household_of(&self, agent: &AgentProfile) -> Option<&Household> {
        self.household(&agent.household)
    }

    pub fn agent(&self, name: &str) -> Option<&AgentProfile> {
        self.agents.iter().find(|a| a.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }

    /// Family members and friends of `agent`.
    pub fn social_network(&self, agent: &AgentProfile) -> Vec<String> {
        let mut out: Vec<String> = self
            .household_of(agent)
            .map(|h| h.members.iter().filter(|m| **m != agent.name).cloned().collect())
            .unwrap_or_default();
        for f in &agent.friends {
            if !out.contains(f) {
                out.push(f.clone());
            }
        }
        out
    }

    /// Households in which licensed adults outnumber vehicles (and at least one vehicle exists).
    pub fn contested_households(&self) -> Vec<&Household> {
        let licensed: BTreeMap<&str, bool> = self.agents.iter().map(|a| (a.name.as_str(), a.licensed_driver)).collect();
        self.households
            .iter()
            .filter(|h| {
                let drivers = h.members.iter().filter(|m| licensed.get(m.as_str()).copied().unwrap_or(false)).count();
                h.vehicles >= 1 && drivers as u32 > h.vehicles
            })
            .collect()
    }
}
