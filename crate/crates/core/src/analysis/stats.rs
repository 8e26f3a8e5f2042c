use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

use super::AnalysisError;

/// Pairwise evaluation outcome counts (A wins, B wins, ties).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub wins_a: u64,
    pub wins_b: u64,
    pub ties: u64,
}

impl EvalCounts {
    pub fn new(wins_a: u64, wins_b: u64, ties: u64) -> Result<Self, AnalysisError> {
        let c = EvalCounts { wins_a, wins_b, ties };
        if c.total() == 0 {
            return Err(AnalysisError::InvalidCounts("no outcomes".into()));
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.wins_a + self.wins_b + self.ties
    }

    pub fn decisive(&self) -> u64 {
        self.wins_a + self.wins_b
    }
}

/// How ties enter the Beta posterior.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieHandling {
    /// Ties are dropped.
    Exclude,
    /// Ties count as wins for A.
    #[default]
    FavorA,
    /// Each tie adds half a success and half a failure.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub ties: TieHandling,
    /// Null success rate for the decisive-outcome test.
    pub decisive_null: f64,
    /// Null win rate for the A-wins-over-all-trials test.
    pub win_null: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { prior_alpha: 1.0, prior_beta: 1.0, ties: TieHandling::FavorA, decisive_null: 2.0 / 3.0, win_null: 1.0 / 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    /// One-sided exact sign test: P(X >= wins_a) for X ~ Bin(wins_a + wins_b, 1/2).
    pub sign_test_p: f64,
    /// P(X >= decisive) for X ~ Bin(total, decisive_null).
    pub decisive_binomial_p: f64,
    /// P(X >= wins_a) for X ~ Bin(total, win_null), ties counted as trials.
    pub win_binomial_p: f64,
    /// Posterior probability that A's win rate is at least 1/2.
    pub posterior_prob_at_least_half: f64,
}

/// Upper binomial tail P(X >= k).
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> Result<f64, AnalysisError> {
    let b = Binomial::new(p, n).map_err(|e| AnalysisError::InvalidCounts(e.to_string()))?;
    Ok(if k == 0 { 1.0 } else { b.sf(k - 1) })
}

pub fn eval_stats(c: &EvalCounts, opts: &EvalOptions) -> Result<EvalStats, AnalysisError> {
    if c.total() == 0 {
        return Err(AnalysisError::InvalidCounts("no outcomes".into()));
    }
    if c.decisive() == 0 {
        return Err(AnalysisError::NoDecisiveOutcomes);
    }
    let sign_test_p = binomial_upper_tail(c.wins_a, c.decisive(), 0.5)?;
    let decisive_binomial_p = binomial_upper_tail(c.decisive(), c.total(), opts.decisive_null)?;
    let win_binomial_p = binomial_upper_tail(c.wins_a, c.total(), opts.win_null)?;
    let (succ, fail) = match opts.ties {
        TieHandling::Exclude => (c.wins_a as f64, c.wins_b as f64),
        TieHandling::FavorA => ((c.wins_a + c.ties) as f64, c.wins_b as f64),
        TieHandling::Split => (c.wins_a as f64 + c.ties as f64 / 2.0, c.wins_b as f64 + c.ties as f64 / 2.0),
    };
    let post = Beta::new(opts.prior_alpha + succ, opts.prior_beta + fail).map_err(|e| AnalysisError::InvalidCounts(e.to_string()))?;
    Ok(EvalStats { sign_test_p, decisive_binomial_p, win_binomial_p, posterior_prob_at_least_half: post.sf(0.5) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tail_edges() {
        assert_eq!(binomial_upper_tail(0, 10, 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(binomial_upper_tail(10, 10, 0.5).unwrap(), 0.5f64.powi(10), epsilon = 1e-15);
        assert_eq!(binomial_upper_tail(11, 10, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn zero_decisive_is_an_error() {
        let c = EvalCounts::new(0, 0, 10).unwrap();
        let e = eval_stats(&c, &EvalOptions::default()).unwrap_err();
        assert_eq!(e.to_string(), "no decisive outcomes");
        assert!(EvalCounts::new(0, 0, 0).is_err());
    }

    #[test]
    fn uniform_prior_posterior_is_symmetric() {
        let s = eval_stats(&EvalCounts::new(5, 5, 0).unwrap(), &EvalOptions::default()).unwrap();
        assert_abs_diff_eq!(s.posterior_prob_at_least_half, 0.5, epsilon = 1e-12);
    }
}
