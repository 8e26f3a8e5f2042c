use std::collections::BTreeSet;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Event,
    Chat,
    Thought,
}

impl ConceptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConceptKind::Event => "event",
            ConceptKind::Chat => "chat",
            ConceptKind::Thought => "thought",
        }
    }
}

/// Half-open interval `[start, end)` at minute resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl Interval {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime) -> Self {
        Interval { start, end }
    }

    pub fn minutes(&self) -> i64 {
        (self.end - self.start).num_minutes().max(0)
    }
}

/// A set of minutes, kept as sorted, disjoint, non-empty intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct TimeScope {
    intervals: Vec<Interval>,
}

impl From<Vec<Interval>> for TimeScope {
    fn from(v: Vec<Interval>) -> Self {
        TimeScope::from_intervals(v)
    }
}

impl From<TimeScope> for Vec<Interval> {
    fn from(t: TimeScope) -> Self {
        t.intervals
    }
}

impl TimeScope {
    pub fn empty() -> Self {
        TimeScope::default()
    }

    pub fn single(start: NaiveDateTime, end: NaiveDateTime) -> Self {
        TimeScope::from_intervals(vec![Interval::new(start, end)])
    }

    /// A scope covering `minutes` minutes starting at `start`.
    pub fn span(start: NaiveDateTime, minutes: i64) -> Self {
        TimeScope::single(start, start + Duration::minutes(minutes))
    }

    pub fn from_intervals(mut v: Vec<Interval>) -> Self {
        v.retain(|i| i.end > i.start);
        v.sort();
        let mut out: Vec<Interval> = Vec::with_capacity(v.len());
        for i in v {
            match out.last_mut() {
                Some(last) if i.start <= last.end => last.end = last.end.max(i.end),
                _ => out.push(i),
            }
        }
        TimeScope { intervals: out }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn minutes(&self) -> i64 {
        self.intervals.iter().map(Interval::minutes).sum()
    }

    /// Minutes shared by both scopes.
    pub fn intersection_minutes(&self, other: &TimeScope) -> i64 {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j, mut total) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            let lo = a[i].start.max(b[j].start);
            let hi = a[i].end.min(b[j].end);
            if hi > lo {
                total += (hi - lo).num_minutes();
            }
            if a[i].end < b[j].end {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }
}

/// One memory record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptNode {
    pub id: u64,
    pub kind: ConceptKind,
    pub content: String,
    pub embedding: Vec<f32>,
    pub keywords: BTreeSet<String>,
    pub spatial: BTreeSet<String>,
    pub temporal: TimeScope,
    pub importance: f64,
    pub created_at: NaiveDateTime,
    pub last_access: NaiveDateTime,
    pub expires_at: NaiveDateTime,
    /// Lifespan assigned at creation; each retrieval extends expiry by this much.
    pub lifespan_hours: f64,
}

impl ConceptNode {
    pub fn initial_lifespan(&self) -> Duration {
        hours(self.lifespan_hours)
    }
}

pub(crate) fn hours(h: f64) -> Duration {
    Duration::seconds((h * 3600.0).round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn at(h: u32, m: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2025, 3, 10).unwrap().and_hms_opt(h, m, 0).unwrap()
    }

    #[test]
    fn scopes_merge_and_intersect() {
        let a = TimeScope::from_intervals(vec![Interval::new(at(7, 0), at(7, 40)), Interval::new(at(7, 30), at(8, 0))]);
        assert_eq!(a.intervals().len(), 1);
        assert_eq!(a.minutes(), 60);
        let b = TimeScope::single(at(7, 30), at(8, 30));
        assert_eq!(a.intersection_minutes(&b), 30);
        assert_eq!(b.intersection_minutes(&a), 30);
        assert_eq!(a.intersection_minutes(&TimeScope::empty()), 0);
    }

    #[test]
    fn scope_roundtrips_as_interval_list() {
        let a = TimeScope::single(at(7, 0), at(8, 0));
        let text = serde_json::to_string(&a).unwrap();
        assert!(text.contains("2025-03-10T07:00:00"));
        let back: TimeScope = serde_json::from_str(&text).unwrap();
        assert_eq!(a, back);
    }
}
