use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::cognition::Population;

/// Target demographic totals for a synthesized population. Empty maps are not checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationConstraints {
    pub agents: usize,
    #[serde(default)]
    pub gender: BTreeMap<String, usize>,
    #[serde(default)]
    pub children: Option<usize>,
    #[serde(default)]
    pub family_role: BTreeMap<String, usize>,
    #[serde(default)]
    pub households: Option<usize>,
    /// Household count keyed by member count.
    #[serde(default)]
    pub household_size: BTreeMap<usize, usize>,
    #[serde(default)]
    pub income: BTreeMap<String, usize>,
    /// Household count keyed by vehicle count.
    #[serde(default)]
    pub vehicles: BTreeMap<u32, usize>,
    #[serde(default)]
    pub licensed_drivers: Option<usize>,
    #[serde(default)]
    pub workers: BTreeMap<String, usize>,
    #[serde(default)]
    pub residents: BTreeMap<String, usize>,
}

impl PopulationConstraints {
    /// Totals of the bundled 70-person population.
    pub fn nguyen_dupuis() -> Self {
        fn m<K: Ord + Clone>(v: &[(K, usize)]) -> BTreeMap<K, usize> {
            v.iter().cloned().collect()
        }
        PopulationConstraints {
            agents: 70,
            gender: m(&[("female".into(), 36), ("male".into(), 34)]),
            children: Some(10),
            family_role: m(&[
                ("single".into(), 26),
                ("husband".into(), 17),
                ("wife".into(), 17),
                ("son".into(), 5),
                ("daughter".into(), 5),
            ]),
            households: Some(43),
            household_size: m(&[(1, 26), (2, 8), (3, 8), (4, 1)]),
            income: m(&[("low".into(), 10), ("medium".into(), 43), ("high".into(), 17)]),
            vehicles: m(&[(0, 4), (1, 25), (2, 14)]),
            licensed_drivers: Some(50),
            workers: m(&[
                ("Coffee shop".into(), 3),
                ("Factory".into(), 20),
                ("Hospital".into(), 3),
                ("Gym".into(), 3),
                ("Office".into(), 17),
                ("Food court".into(), 3),
                ("Amusement park".into(), 2),
                ("Museum".into(), 2),
                ("Cinema".into(), 2),
                ("Supermarket".into(), 3),
                ("School".into(), 2),
            ]),
            residents: m(&[("Uptown apartment".into(), 36), ("Midtown apartment".into(), 34)]),
        }
    }

    /// A request for `n` agents with no distribution targets.
    pub fn count_only(n: usize) -> Self {
        PopulationConstraints {
            agents: n,
            gender: BTreeMap::new(),
            children: None,
            family_role: BTreeMap::new(),
            households: None,
            household_size: BTreeMap::new(),
            income: BTreeMap::new(),
            vehicles: BTreeMap::new(),
            licensed_drivers: None,
            workers: BTreeMap::new(),
            residents: BTreeMap::new(),
        }
    }
}

fn compare<K: Ord + std::fmt::Display>(label: &str, want: &BTreeMap<K, usize>, got: &BTreeMap<K, usize>, out: &mut Vec<String>) {
    for (k, w) in want {
        let g = got.get(k).copied().unwrap_or(0);
        if g != *w {
            out.push(format!("{label} {k}: expected {w}, found {g}"));
        }
    }
}

fn tally<K: Ord, I: IntoIterator<Item = K>>(items: I) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// Every count in `c` that `pop` misses, as readable lines. Empty means valid.
pub fn validate_population(pop: &Population, c: &PopulationConstraints) -> Vec<String> {
    let mut out = Vec::new();
    if pop.agents.len() != c.agents {
        out.push(format!("agents: expected {}, found {}", c.agents, pop.agents.len()));
    }
    compare("gender", &c.gender, &tally(pop.agents.iter().map(|a| a.gender.clone())), &mut out);
    if let Some(n) = c.children {
        let g = pop.agents.iter().filter(|a| a.is_child()).count();
        if g != n {
            out.push(format!("children: expected {n}, found {g}"));
        }
    }
    compare("family_role", &c.family_role, &tally(pop.agents.iter().map(|a| a.family_role.clone())), &mut out);
    if let Some(n) = c.households {
        if pop.households.len() != n {
            out.push(format!("households: expected {n}, found {}", pop.households.len()));
        }
    }
    compare("household_size", &c.household_size, &tally(pop.households.iter().map(|h| h.members.len())), &mut out);
    compare("income", &c.income, &tally(pop.agents.iter().map(|a| a.household_income.clone())), &mut out);
    compare("vehicles", &c.vehicles, &tally(pop.households.iter().map(|h| h.vehicles)), &mut out);
    if let Some(n) = c.licensed_drivers {
        let g = pop.agents.iter().filter(|a| a.licensed_driver).count();
        if g != n {
            out.push(format!("licensed_drivers: expected {n}, found {g}"));
        }
    }
    compare("workers", &c.workers, &tally(pop.agents.iter().filter_map(|a| a.work_facility.clone())), &mut out);
    compare("residents", &c.residents, &tally(pop.agents.iter().map(|a| a.home_facility.clone())), &mut out);
    // Structural consistency between agents and households.
    for a in &pop.agents {
        match pop.household_of(a) {
            None => out.push(format!("agent {} references unknown household {}", a.name, a.household)),
            Some(h) if h.home_facility != a.home_facility => {
                out.push(format!("agent {} lives at {} but household {} is at {}", a.name, a.home_facility, h.id, h.home_facility))
            }
            Some(h) if !h.members.contains(&a.name) => out.push(format!("household {} does not list {}", h.id, a.name)),
            _ => {}
        }
        for f in &a.friends {
            if pop.agent(f).is_none() {
                out.push(format!("agent {} lists unknown friend {f}", a.name));
            }
        }
    }
    out
}

/// Produces a population meeting `c`. Offline synthesis uses the bundled fixture; a
/// request for zero agents yields an empty population.
pub fn synthesize_population(c: &PopulationConstraints) -> Result<Population, GatewayError> {
    if c.agents == 0 {
        return Ok(Population::default());
    }
    let pop = Population::bundled();
    let problems = validate_population(&pop, c);
    if problems.is_empty() {
        Ok(pop)
    } else {
        Err(GatewayError::Population(problems))
    }
}
