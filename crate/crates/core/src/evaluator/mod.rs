//! Accuracy term of the reward.
//!
//! Two environments produce it: [`tabular::TabularEnv`], a deterministic
//! teacher-preference surrogate that is cheap enough for long searches, and
//! [`ProxyEnvironment`], which trains a freshly initialized micro network per
//! candidate on a synthetic proxy task under a distillation objective.

pub mod kd;
pub mod micronet;
pub mod tabular;
pub mod task;
pub mod teacher;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kd::{ensemble_soft_targets, feature_mse_loss, kd_loss, kd_loss_with_targets};
pub use micronet::MicroNet;
pub use tabular::{TabularEnv, TabularTeacher};
pub use task::{DatasetKind, ProxyTaskSpec, TaskData};
pub use teacher::{PreparedTeacher, TeacherNetSpec, TeacherSpec};
pub use train::{train_student, ProxyEnvironment, ProxyResult};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("distillation weight must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("ensemble teacher list is empty")]
    EmptyEnsemble,
    #[error("unknown teacher `{0}`")]
    UnknownTeacher(String),
    #[error("invalid proxy task: {0}")]
    InvalidTask(String),
    #[error("teacher cannot provide {0}")]
    TeacherUnsupported(String),
    #[error("teacher logits file: {0}")]
    TeacherFile(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdObjective {
    SoftLogit,
    FeatureMse,
    HardLabel,
}

impl KdObjective {
    /// Objective tag stored in trajectory records.
    pub fn tag(self) -> &'static str {
        match self {
            KdObjective::HardLabel => "hard",
            _ => "kd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KDConfig {
    pub temperature: f64,
    pub alpha: f64,
    pub objective: KdObjective,
    pub teacher: TeacherSpec,
}

impl Default for KDConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            alpha: 0.9,
            objective: KdObjective::SoftLogit,
            teacher: TeacherSpec::default(),
        }
    }
}

impl KDConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(EvalError::NonPositiveTemperature(self.temperature));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(EvalError::InvalidAlpha(self.alpha));
        }
        self.teacher.validate()
    }
}
