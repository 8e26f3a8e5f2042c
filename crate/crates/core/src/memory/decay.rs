use serde::{Deserialize, Serialize};

use super::{ConceptKind, MemoryError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifespanParams {
    pub min_hours: f64,
    pub max_hours: f64,
    pub power: f64,
}

/// Power-law lifespan parameters per concept kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPolicy {
    pub event: LifespanParams,
    pub chat: LifespanParams,
    pub thought: LifespanParams,
}

impl Default for DecayPolicy {
    fn default() -> Self {
        DecayPolicy {
            event: LifespanParams { min_hours: 2.0, max_hours: 96.0, power: 2.4 },
            chat: LifespanParams { min_hours: 4.0, max_hours: 48.0, power: 3.2 },
            thought: LifespanParams { min_hours: 8.0, max_hours: 192.0, power: 1.6 },
        }
    }
}

impl DecayPolicy {
    pub fn params(&self, kind: ConceptKind) -> LifespanParams {
        match kind {
            ConceptKind::Event => self.event,
            ConceptKind::Chat => self.chat,
            ConceptKind::Thought => self.thought,
        }
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        for p in [self.event, self.chat, self.thought] {
            if !(p.min_hours > 0.0 && p.min_hours < p.max_hours && p.power > 0.0) {
                return Err(MemoryError::InvalidPolicy(format!("{p:?}")));
            }
        }
        Ok(())
    }
}

/// Lifespan in hours: `min + (max - min) * importance^power`.
pub fn assign_lifespan(kind: ConceptKind, importance: f64, policy: &DecayPolicy) -> Result<f64, MemoryError> {
    if !(0.0..=1.0).contains(&importance) {
        return Err(MemoryError::ImportanceOutOfRange(importance));
    }
    let p = policy.params(kind);
    Ok(p.min_hours + (p.max_hours - p.min_hours) * importance.powf(p.power))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let p = DecayPolicy::default();
        assert_eq!(assign_lifespan(ConceptKind::Event, 1.0, &p).unwrap(), 96.0);
        assert_eq!(assign_lifespan(ConceptKind::Event, 0.0, &p).unwrap(), 2.0);
        assert_eq!(assign_lifespan(ConceptKind::Chat, 0.0, &p).unwrap(), 4.0);
        assert_eq!(assign_lifespan(ConceptKind::Chat, 1.0, &p).unwrap(), 48.0);
        assert_eq!(assign_lifespan(ConceptKind::Thought, 0.0, &p).unwrap(), 8.0);
        assert_eq!(assign_lifespan(ConceptKind::Thought, 1.0, &p).unwrap(), 192.0);
        let mid = assign_lifespan(ConceptKind::Event, 0.5, &p).unwrap();
        assert!((mid - 19.8).abs() < 0.1, "{mid}");
        assert!(assign_lifespan(ConceptKind::Event, 1.2, &p).is_err());
        p.validate().unwrap();
    }
}
