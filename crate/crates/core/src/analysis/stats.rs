use serde::{Deserialize, Serialize};

use super::{AnalysisError, CandidateRecord};
use crate::space::SearchSpaceDef;

const KL_FLOOR: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;

/// Per-bit frequency of a one-hot population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorProbability {
    pub labels: Vec<String>,
    pub probability: Vec<f64>,
    /// Population standard deviation of each indicator bit.
    pub std: Vec<f64>,
    pub count: usize,
}

pub fn operator_probability(
    records: &[CandidateRecord],
    space: &SearchSpaceDef,
) -> Result<OperatorProbability, AnalysisError> {
    let rows: Vec<&[u8]> = records.iter().map(|r| r.onehot.as_slice()).collect();
    bit_frequencies(&rows, space)
}

pub(crate) fn bit_frequencies(
    rows: &[&[u8]],
    space: &SearchSpaceDef,
) -> Result<OperatorProbability, AnalysisError> {
    if rows.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let e = space.onehot_len();
    if rows.iter().any(|r| r.len() != e) {
        return Err(AnalysisError::LengthMismatch);
    }
    let mut counts = vec![0usize; e];
    for r in rows {
        for (c, &b) in counts.iter_mut().zip(r.iter()) {
            *c += usize::from(b != 0);
        }
    }
    let n = rows.len() as f64;
    let probability: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let std = probability.iter().map(|p| (p * (1.0 - p)).sqrt()).collect();
    Ok(OperatorProbability {
        labels: (0..e).filter_map(|b| space.bit_label(b)).collect(),
        probability,
        std,
        count: rows.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyDivergence {
    pub labels: Vec<String>,
    /// `p_a - p_b` per bit, in bit order.
    pub difference: Vec<f64>,
    /// Bit indices sorted by `|difference|` descending, ties by index.
    pub order: Vec<usize>,
}

impl FamilyDivergence {
    pub fn sorted(&self) -> Vec<(String, f64)> {
        self.order
            .iter()
            .map(|&b| (self.labels[b].clone(), self.difference[b]))
            .collect()
    }
}

pub fn family_divergence(
    family_a: &[CandidateRecord],
    family_b: &[CandidateRecord],
    space: &SearchSpaceDef,
) -> Result<FamilyDivergence, AnalysisError> {
    let pa = operator_probability(family_a, space)?;
    let pb = operator_probability(family_b, space)?;
    let difference: Vec<f64> = pa
        .probability
        .iter()
        .zip(&pb.probability)
        .map(|(a, b)| a - b)
        .collect();
    let mut order: Vec<usize> = (0..difference.len()).collect();
    order.sort_by(|&i, &j| {
        difference[j]
            .abs()
            .total_cmp(&difference[i].abs())
            .then(i.cmp(&j))
    });
    Ok(FamilyDivergence {
        labels: pa.labels,
        difference,
        order,
    })
}

/// `(kd_akd - cls_akd) - (kd_nas - cls_nas)`.
pub fn relative_gain(kd_akd: f64, cls_akd: f64, kd_nas: f64, cls_nas: f64) -> f64 {
    (kd_akd - cls_akd) - (kd_nas - cls_nas)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinStats {
    pub ratio: f64,
    pub average_gain: f64,
    pub wins: usize,
    pub valid: usize,
    pub excluded: usize,
}

/// Fraction of pairs where the first gain strictly beats the second. Pairs
/// with a non-finite entry are excluded from both statistics.
pub fn winning_ratio(pairs: &[(f64, f64)]) -> Result<WinStats, AnalysisError> {
    winning_ratio_with(pairs, |a, b| !a.is_finite() || !b.is_finite())
}

/// As [`winning_ratio`] with a caller-supplied exclusion predicate.
pub fn winning_ratio_with(
    pairs: &[(f64, f64)],
    exclude: impl Fn(f64, f64) -> bool,
) -> Result<WinStats, AnalysisError> {
    if pairs.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let valid: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|&(a, b)| !exclude(a, b))
        .collect();
    let excluded = pairs.len() - valid.len();
    if valid.is_empty() {
        return Ok(WinStats {
            ratio: 0.0,
            average_gain: 0.0,
            wins: 0,
            valid: 0,
            excluded,
        });
    }
    let wins = valid.iter().filter(|(a, b)| a > b).count();
    let n = valid.len() as f64;
    Ok(WinStats {
        ratio: wins as f64 / n,
        average_gain: valid.iter().map(|(a, b)| a - b).sum::<f64>() / n,
        wins,
        valid: valid.len(),
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationStats {
    pub inter: f64,
    pub intra_a: f64,
    pub intra_b: f64,
    /// `inter / mean(intra_a, intra_b)`; `+inf` when only the intra spread is zero.
    pub ratio: f64,
}

fn centroid(rows: &[&[u8]]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut c = vec![0.0; rows[0].len()];
    for r in rows {
        c.iter_mut()
            .zip(r.iter())
            .for_each(|(m, &b)| *m += f64::from(b));
    }
    c.iter_mut().for_each(|m| *m /= n);
    c
}

fn euclid(a: &[f64], b: impl Iterator<Item = f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn centroid_separation<V: AsRef<[u8]>>(
    family_a: &[V],
    family_b: &[V],
) -> Result<SeparationStats, AnalysisError> {
    for f in [family_a, family_b] {
        if f.len() < 2 {
            return Err(AnalysisError::TooFewMembers {
                need: 2,
                got: f.len(),
            });
        }
    }
    let a: Vec<&[u8]> = family_a.iter().map(AsRef::as_ref).collect();
    let b: Vec<&[u8]> = family_b.iter().map(AsRef::as_ref).collect();
    let len = a[0].len();
    if a.iter().chain(&b).any(|r| r.len() != len) {
        return Err(AnalysisError::LengthMismatch);
    }
    let (ca, cb) = (centroid(&a), centroid(&b));
    let spread = |rows: &[&[u8]], c: &[f64]| {
        rows.iter()
            .map(|r| euclid(c, r.iter().map(|&x| f64::from(x))))
            .sum::<f64>()
            / rows.len() as f64
    };
    let inter = euclid(&ca, cb.iter().copied());
    let (intra_a, intra_b) = (spread(&a, &ca), spread(&b, &cb));
    let intra = 0.5 * (intra_a + intra_b);
    let ratio = if intra > 0.0 {
        inter / intra
    } else if inter > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(SeparationStats {
        inter,
        intra_a,
        intra_b,
        ratio,
    })
}

/// Pairwise `KL(p_i || p_j)` matrix with a floor on the second argument.
pub fn distribution_divergence(dists: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, AnalysisError> {
    if dists.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let len = dists[0].len();
    for (i, d) in dists.iter().enumerate() {
        if d.len() != len {
            return Err(AnalysisError::LengthMismatch);
        }
        let ok = d.iter().all(|&x| x.is_finite() && x >= 0.0)
            && (d.iter().sum::<f64>() - 1.0).abs() <= NORM_TOL;
        if !ok {
            return Err(AnalysisError::NotNormalized(i));
        }
    }
    Ok(dists
        .iter()
        .enumerate()
        .map(|(i, p)| {
            dists
                .iter()
                .enumerate()
                .map(|(j, q)| if i == j { 0.0 } else { kl(p, q) })
                .collect()
        })
        .collect())
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(KL_FLOOR)).ln())
        .sum()
}

/// Highest-reward records with latency inside `[lo, hi]`, at most `k` of them.
/// Ties on reward keep the earlier (generation, candidate index).
pub fn select_top_k(
    records: &[CandidateRecord],
    window: (f64, f64),
    k: usize,
) -> Vec<CandidateRecord> {
    let (lo, hi) = window;
    let mut pool: Vec<&CandidateRecord> = records
        .iter()
        .filter(|r| r.reward.is_finite() && r.latency_ms >= lo && r.latency_ms <= hi)
        .collect();
    pool.sort_by(|a, b| {
        b.reward
            .total_cmp(&a.reward)
            .then(a.generation.cmp(&b.generation))
            .then(a.candidate_index.cmp(&b.candidate_index))
    });
    pool.into_iter().take(k).cloned().collect()
}
