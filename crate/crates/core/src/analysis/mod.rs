//! Post-hoc statistics over evaluated candidates: Pareto fronts, operator
//! probabilities and their divergence between two searches, a 2-D projection
//! of the one-hot space, centroid separation, relative distillation gain,
//! winning ratio and pairwise KL between output distributions.

mod pca;
pub mod plot;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pca::{project_2d, Projection};
pub use stats::{
    centroid_separation, distribution_divergence, family_divergence, operator_probability,
    relative_gain, select_top_k, winning_ratio, winning_ratio_with, FamilyDivergence,
    OperatorProbability, SeparationStats, WinStats,
};

use crate::cost::{compute_reward, RewardConfig};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("input is empty")]
    EmptyInput,
    #[error("family needs at least {need} members, got {got}")]
    TooFewMembers { need: usize, got: usize },
    #[error("input is degenerate: {0}")]
    DegenerateInput(String),
    #[error("distribution {0} is not normalized or has negative entries")]
    NotNormalized(usize),
    #[error("vectors have inconsistent lengths")]
    LengthMismatch,
}

/// One evaluated candidate as persisted in a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub generation: usize,
    pub candidate_index: usize,
    pub arch: Vec<usize>,
    pub onehot: Vec<u8>,
    pub accuracy: f64,
    pub latency_ms: f64,
    pub mflops: f64,
    pub reward: f64,
    /// Per-candidate seed derived from `(run_seed, generation, candidate_index)`.
    pub seed: u64,
    pub run_seed: u64,
    /// `kd` or `hard`.
    pub objective: String,
    pub teacher: String,
    #[serde(default)]
    pub diverged: bool,
    pub reward_cfg: RewardConfig,
    pub latency_intercept: f64,
    pub latency_coefficient: f64,
}

impl CandidateRecord {
    /// Recomputes the reward from accuracy and cost under `cfg`.
    pub fn rederive_reward(&self, cfg: &RewardConfig) -> Option<f64> {
        compute_reward(
            self.accuracy,
            cfg.cost_of(self.latency_ms, self.mflops),
            cfg,
        )
        .ok()
    }
}

/// `a` dominates `b` under (maximize accuracy, minimize latency).
pub fn dominates(a: &CandidateRecord, b: &CandidateRecord) -> bool {
    a.accuracy >= b.accuracy
        && a.latency_ms <= b.latency_ms
        && (a.accuracy > b.accuracy || a.latency_ms < b.latency_ms)
}

/// Exact non-dominated subset, ordered by latency ascending. Records tied on
/// both axes collapse onto the earliest (generation, candidate index).
pub fn pareto_front(records: &[CandidateRecord]) -> Result<Vec<CandidateRecord>, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut order: Vec<&CandidateRecord> = records.iter().collect();
    order.sort_by(|a, b| {
        a.latency_ms
            .total_cmp(&b.latency_ms)
            .then(b.accuracy.total_cmp(&a.accuracy))
            .then(a.generation.cmp(&b.generation))
            .then(a.candidate_index.cmp(&b.candidate_index))
    });
    let mut front: Vec<CandidateRecord> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for r in order {
        if r.accuracy > best {
            best = r.accuracy;
            front.push(r.clone());
        }
    }
    Ok(front)
}


#[cfg(test)]
mod tests {
    use super::testutil::rec;
    use super::*;

    #[test]
    fn singleton_front() {
        let r = vec![rec(0.5, 10.0, 0, 0)];
        assert_eq!(pareto_front(&r).unwrap(), r);
        assert_eq!(pareto_front(&[]), Err(AnalysisError::EmptyInput));
    }

    #[test]
    fn hand_checked_front() {
        let r = vec![
            rec(0.6, 10.0, 0, 0),
            rec(0.7, 12.0, 0, 1),
            rec(0.65, 13.0, 0, 2),
        ];
        let f = pareto_front(&r).unwrap();
        assert_eq!(f, vec![r[0].clone(), r[1].clone()]);
    }

    #[test]
    fn ties_keep_earliest_generation() {
        let r = vec![
            rec(0.6, 10.0, 3, 0),
            rec(0.6, 10.0, 1, 5),
            rec(0.6, 10.0, 1, 2),
        ];
        let f = pareto_front(&r).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].generation, f[0].candidate_index), (1, 2));
    }
}
