//! FLOPs accounting, the linear latency model and the weighted-product reward.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::NetworkPlan;
use crate::seed;
use crate::space::{ArchitectureConfig, SearchSpaceDef};

/// Slope band of the latency/FLOPs relation, `lo * (lat - 7) <= mFLOPS <= hi * (lat - 7)`.
pub const BAND_LO: f64 = 3.4;
pub const BAND_HI: f64 = 10.47;
pub const BAND_INTERCEPT_MS: f64 = 7.0;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("cost value must be positive and finite, got {0}")]
    NonPositiveCost(f64),
    #[error("accuracy must lie in [0, 1], got {0}")]
    AccuracyOutOfRange(f64),
    #[error("invalid cost configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    Latency,
    Flops,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// ms in latency mode, mFLOPS in flops mode.
    pub target: f64,
    pub weight_exponent: f64,
    pub mode: CostMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            target: 15.0,
            weight_exponent: -0.07,
            mode: CostMode::Latency,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.target > 0.0 && self.target.is_finite()) {
            return Err(CostError::Invalid(format!(
                "target must be positive, got {}",
                self.target
            )));
        }
        if !(self.weight_exponent <= 0.0) {
            return Err(CostError::Invalid(format!(
                "weight_exponent must be <= 0, got {}",
                self.weight_exponent
            )));
        }
        Ok(())
    }

    /// Picks the cost term this config constrains.
    pub fn cost_of(&self, latency_ms: f64, mflops: f64) -> f64 {
        match self.mode {
            CostMode::Latency => latency_ms,
            CostMode::Flops => mflops,
        }
    }
}

/// `reward = accuracy * (cost / target)^w`.
pub fn compute_reward(
    accuracy: f64,
    cost_value: f64,
    cfg: &RewardConfig,
) -> Result<f64, CostError> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(CostError::AccuracyOutOfRange(accuracy));
    }
    if !(cost_value > 0.0 && cost_value.is_finite()) {
        return Err(CostError::NonPositiveCost(cost_value));
    }
    Ok(accuracy * (cost_value / cfg.target).powf(cfg.weight_exponent))
}

/// How architecture FLOPs are counted: nominal input width and the number of
/// positions each dense layer is applied at (the spatial-map analog).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlopsSpec {
    pub input_width: usize,
    pub spatial_positions: u64,
}

impl Default for FlopsSpec {
    fn default() -> Self {
        Self {
            input_width: 16,
            spatial_positions: 4096,
        }
    }
}

/// Architecture FLOPs in mFLOPS (1 mFLOPS = 10^6 FLOPs).
pub fn flops(space: &SearchSpaceDef, arch: &ArchitectureConfig, spec: &FlopsSpec) -> f64 {
    let plan = NetworkPlan::from_arch(space, arch, spec.input_width);
    plan_mflops(&plan, spec.spatial_positions)
}

pub fn plan_mflops(plan: &NetworkPlan, positions: u64) -> f64 {
    (plan.body_flops() * positions) as f64 * 1e-6
}

/// `latency = intercept + mFLOPS / coefficient`, optionally times a
/// log-normal jitter factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub intercept: f64,
    pub coefficient: f64,
    /// Log-space standard deviation of the jitter factor; 0 disables it.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            intercept: BAND_INTERCEPT_MS,
            coefficient: 0.5 * (BAND_LO + BAND_HI),
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }
}

impl LatencyModel {
    pub fn with_coefficient(coefficient: f64) -> Self {
        Self {
            coefficient,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.intercept >= 0.0 && self.intercept.is_finite()) {
            return Err(CostError::Invalid("intercept must be >= 0".into()));
        }
        if !(self.coefficient > 0.0 && self.coefficient.is_finite()) {
            return Err(CostError::Invalid("coefficient must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CostError::Invalid("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// True when the model sits inside the published linear band.
    pub fn in_band(&self) -> bool {
        self.intercept == BAND_INTERCEPT_MS && (BAND_LO..=BAND_HI).contains(&self.coefficient)
    }

    /// Latency for a FLOPs count. `noise_key` selects the jitter draw and is
    /// ignored when noise is off.
    pub fn latency_ms(&self, mflops: f64, noise_key: u64) -> f64 {
        let base = self.intercept + mflops / self.coefficient;
        if self.noise_sigma == 0.0 {
            return base;
        }
        let mut rng = seed::rng(seed::derive(
            self.noise_seed,
            &[seed::stream::LATENCY_NOISE, noise_key],
        ));
        let z: f64 = StandardNormal.sample(&mut rng);
        base * (self.noise_sigma * z).exp()
    }
}

pub fn latency(
    space: &SearchSpaceDef,
    arch: &ArchitectureConfig,
    spec: &FlopsSpec,
    model: &LatencyModel,
    noise_key: u64,
) -> f64 {
    model.latency_ms(flops(space, arch, spec), noise_key)
}
