use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::controller::ControllerConfig;
use crate::cost::{FlopsSpec, LatencyModel, RewardConfig};
use crate::evaluator::{KDConfig, ProxyTaskSpec, TabularTeacher};
use crate::space::SearchSpaceDef;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSource {
    /// The bundled 7-block catalog.
    Default,
    /// A TOML space file; relative paths resolve against the run config.
    File {
        path: PathBuf,
    },
    Inline {
        def: SearchSpaceDef,
    },
}

impl Default for SpaceSource {
    fn default() -> Self {
        SpaceSource::Default
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularSpec {
    pub teacher_seed: u64,
    pub theta_scale: f64,
    pub noise_sigma: f64,
    /// Build the teacher orthogonal to the one seeded by this value.
    pub orthogonal_to: Option<u64>,
}

impl Default for TabularSpec {
    fn default() -> Self {
        Self {
            teacher_seed: 0,
            theta_scale: 1.0,
            noise_sigma: 0.01,
            orthogonal_to: None,
        }
    }
}

impl TabularSpec {
    pub fn teacher(&self, onehot_len: usize) -> TabularTeacher {
        match self.orthogonal_to {
            None => TabularTeacher::seeded(
                format!("tabular-s{}", self.teacher_seed),
                onehot_len,
                self.teacher_seed,
                self.theta_scale,
            ),
            Some(base_seed) => {
                let base = TabularTeacher::seeded("base", onehot_len, base_seed, self.theta_scale);
                let tag = format!("tabular-orth{base_seed}-s{}", self.teacher_seed);
                TabularTeacher::orthogonal_to(&base, tag, self.teacher_seed)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Tabular(TabularSpec),
    MicroKd {
        #[serde(default)]
        task: ProxyTaskSpec,
        #[serde(default)]
        kd: KDConfig,
    },
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::MicroKd {
            task: ProxyTaskSpec::default(),
            kd: KDConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinalizeConfig {
    pub top_k: usize,
    /// Latency window in milliseconds, inclusive.
    pub window: (f64, f64),
    pub long_epochs: usize,
}

impl Default for FinalizeConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            window: (10.0, 20.0),
            long_epochs: 80,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub generations: usize,
    pub batch_size: usize,
    pub space: SpaceSource,
    pub reward: RewardConfig,
    pub latency: LatencyModel,
    pub flops: FlopsSpec,
    pub env: EnvConfig,
    pub controller: ControllerConfig,
    pub finalize: FinalizeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            generations: 500,
            batch_size: 16,
            space: SpaceSource::Default,
            reward: RewardConfig::default(),
            latency: LatencyModel::default(),
            flops: FlopsSpec::default(),
            env: EnvConfig::default(),
            controller: ControllerConfig::default(),
            finalize: FinalizeConfig::default(),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::ConfigInvalid(e.to_string())
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, OrchestratorError> {
        toml::from_str(s).map_err(invalid)
    }

    /// Reads a config file and rewrites relative file references against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let SpaceSource::File { path } = &mut cfg.space {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let EnvConfig::MicroKd { kd, .. } = &mut cfg.env {
            if let crate::evaluator::TeacherSpec::LogitsCsv { path } = &mut kd.teacher {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_space(&self) -> Result<SearchSpaceDef, OrchestratorError> {
        match &self.space {
            SpaceSource::Default => Ok(SearchSpaceDef::default_space()),
            SpaceSource::File { path } => SearchSpaceDef::from_file(path).map_err(invalid),
            SpaceSource::Inline { def } => Ok(def.clone()),
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.generations == 0 {
            return Err(invalid("generations must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be >= 1"));
        }
        self.reward.validate().map_err(invalid)?;
        self.latency.validate().map_err(invalid)?;
        if self.flops.input_width == 0 || self.flops.spatial_positions == 0 {
            return Err(invalid("flops spec must be positive"));
        }
        self.controller.validate().map_err(invalid)?;
        match &self.env {
            EnvConfig::Tabular(t) => {
                if !(t.noise_sigma >= 0.0 && t.noise_sigma.is_finite()) {
                    return Err(invalid("tabular noise_sigma must be >= 0"));
                }
                if !t.theta_scale.is_finite() {
                    return Err(invalid("tabular theta_scale must be finite"));
                }
            }
            EnvConfig::MicroKd { task, kd } => {
                task.validate().map_err(invalid)?;
                kd.validate().map_err(invalid)?;
                kd.teacher.validate().map_err(invalid)?;
            }
        }
        let (lo, hi) = self.finalize.window;
        if !(lo <= hi) || self.finalize.top_k == 0 || self.finalize.long_epochs == 0 {
            return Err(invalid(
                "finalize needs lo <= hi, top_k >= 1, long_epochs >= 1",
            ));
        }
        self.resolve_space().map(|_| ())
    }

    /// Tag of the training objective, `kd` or `hard`.
    pub fn objective_tag(&self) -> &'static str {
        match &self.env {
            EnvConfig::Tabular(_) => "kd",
            EnvConfig::MicroKd { kd, .. } => kd.objective.tag(),
        }
    }
}
