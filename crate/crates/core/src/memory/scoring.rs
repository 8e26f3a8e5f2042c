use std::collections::BTreeSet;

use chrono::NaiveDateTime;

use super::{ConceptNode, MemoryError, TimeScope};

/// Jaccard similarity of two keyword sets; 0 when both are empty.
pub fn score_keyword(q: &BTreeSet<String>, m: &BTreeSet<String>) -> f64 {
    let inter = q.intersection(m).count();
    let union = q.len() + m.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `1 - |e_q - e_m| / 2` for unit vectors.
pub fn score_semantic(q: &[f32], m: &[f32]) -> Result<f64, MemoryError> {
    if q.len() != m.len() {
        return Err(MemoryError::DimensionMismatch { query: q.len(), node: m.len() });
    }
    let d2: f64 = q
        .iter()
        .zip(m)
        .map(|(a, b)| {
            let d = f64::from(*a) - f64::from(*b);
            d * d
        })
        .sum();
    Ok((1.0 - d2.sqrt() / 2.0).clamp(0.0, 1.0))
}

/// Overlap (Szymkiewicz–Simpson) coefficient of two id sets; 0 if either is empty.
pub fn overlap_sets(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let min = a.len().min(b.len());
    if min == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / min as f64
}

/// Overlap coefficient of two minute sets; 0 if either is empty.
pub fn overlap_time(a: &TimeScope, b: &TimeScope) -> f64 {
    let min = a.minutes().min(b.minutes());
    if min == 0 {
        return 0.0;
    }
    a.intersection_minutes(b) as f64 / min as f64
}

pub fn score_spatiotemporal(
    s_q: &BTreeSet<String>,
    t_q: &TimeScope,
    s_m: &BTreeSet<String>,
    t_m: &TimeScope,
) -> f64 {
    overlap_sets(s_q, s_m) * overlap_time(t_q, t_m)
}

/// `λ^t` where `t` is fractional days since the later of creation and last access.
pub fn recency(now: NaiveDateTime, node: &ConceptNode, lambda: f64) -> f64 {
    let reference = node.created_at.max(node.last_access);
    let days = ((now - reference).num_seconds() as f64 / 86_400.0).max(0.0);
    recency_days(days, lambda)
}

pub fn recency_days(days: f64, lambda: f64) -> f64 {
    lambda.powf(days.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn keyword_examples() {
        let a = set(&["metro", "delay", "morning"]);
        assert_eq!(score_keyword(&a, &a), 1.0);
        assert_eq!(score_keyword(&a, &set(&["x"])), 0.0);
        assert_eq!(score_keyword(&a, &set(&["metro", "delay", "evening"])), 0.5);
        assert_eq!(score_keyword(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn semantic_examples() {
        let e1 = [1.0f32, 0.0, 0.0];
        let e2 = [0.0f32, 1.0, 0.0];
        let neg = [-1.0f32, 0.0, 0.0];
        assert_abs_diff_eq!(score_semantic(&e1, &e1).unwrap(), 1.0);
        assert_abs_diff_eq!(score_semantic(&e1, &neg).unwrap(), 0.0);
        assert_abs_diff_eq!(score_semantic(&e1, &e2).unwrap(), 1.0 - 2f64.sqrt() / 2.0, epsilon = 1e-12);
        assert!(score_semantic(&e1, &[1.0]).is_err());
    }

    #[test]
    fn spatiotemporal_partial_overlap() {
        let d = NaiveDate::from_ymd_opt(2025, 3, 18).unwrap();
        let t = |h, m| d.and_hms_opt(h, m, 0).unwrap();
        let tq = TimeScope::single(t(7, 0), t(8, 0));
        let tm = TimeScope::single(t(7, 30), t(8, 30));
        let s = score_spatiotemporal(&set(&["Ave_2_link_2"]), &tq, &set(&["Ave_2_link_2", "St_4_link_1"]), &tm);
        assert_abs_diff_eq!(s, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn recency_table() {
        assert_abs_diff_eq!(recency_days(1.0, 0.90), 0.90, epsilon = 0.005);
        assert_abs_diff_eq!(recency_days(7.0, 0.90), 0.48, epsilon = 0.005);
        assert_abs_diff_eq!(recency_days(30.0, 0.90), 0.04, epsilon = 0.005);
        assert_abs_diff_eq!(recency_days(7.0, 0.95), 0.70, epsilon = 0.005);
        assert_abs_diff_eq!(recency_days(30.0, 0.95), 0.21, epsilon = 0.005);
        assert_eq!(recency_days(0.0, 0.9), 1.0);
    }
}
