//! Seeded synthetic classification tasks used as the proxy dataset.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetKind {
    /// Unit-variance Gaussian blobs whose centers sit at distance
    /// `separation` from the origin in random directions.
    GaussianClusters { dim: usize, separation: f64 },
    /// Interleaved 2-D spiral arms, one per class.
    Spirals { turns: f64, noise: f64 },
}

impl DatasetKind {
    pub fn input_width(&self) -> usize {
        match self {
            DatasetKind::GaussianClusters { dim, .. } => *dim,
            DatasetKind::Spirals { .. } => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyTaskSpec {
    pub dataset: DatasetKind,
    pub classes: usize,
    /// Total generated samples; `holdout_fraction` of them form the holdout.
    pub samples: usize,
    pub holdout_fraction: f64,
    /// Probability that a training label is replaced by a different class.
    /// Holdout labels are always clean.
    pub label_noise: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub data_seed: u64,
}

impl Default for ProxyTaskSpec {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Spirals {
                turns: 1.0,
                noise: 0.05,
            },
            classes: 3,
            samples: 1500,
            holdout_fraction: 0.2,
            label_noise: 0.0,
            epochs: 5,
            warmup_epochs: 1,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            grad_clip: 5.0,
            data_seed: 0,
        }
    }
}

impl ProxyTaskSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidTask(m.to_string()));
        if self.classes < 2 {
            return bad("classes must be >= 2");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad("holdout_fraction must lie in (0, 1)");
        }
        let holdout = self.holdout_len();
        if holdout == 0 || holdout >= self.samples {
            return bad("both train and holdout splits must be non-empty");
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return bad("label_noise must lie in [0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if self.warmup_epochs > self.epochs {
            return bad("warmup_epochs exceeds epochs");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("learning_rate must be > 0 and momentum in [0, 1)");
        }
        match self.dataset {
            DatasetKind::GaussianClusters { dim, separation }
                if dim == 0 || !(separation >= 0.0) =>
            {
                bad("gaussian clusters need dim >= 1 and separation >= 0")
            }
            DatasetKind::Spirals { turns, noise } if !(turns > 0.0) || !(noise >= 0.0) => {
                bad("spirals need turns > 0 and noise >= 0")
            }
            _ => Ok(()),
        }
    }

    fn holdout_len(&self) -> usize {
        (self.samples as f64 * self.holdout_fraction).round() as usize
    }

    pub fn input_width(&self) -> usize {
        self.dataset.input_width()
    }

    /// Generates the train/holdout split. Pure in the spec.
    pub fn generate(&self) -> Result<TaskData, EvalError> {
        self.validate()?;
        let mut rng = seed::rng(seed::derive(self.data_seed, &[seed::stream::DATA]));
        let k = self.classes;
        let mut x = Vec::with_capacity(self.samples);
        let mut y = Vec::with_capacity(self.samples);
        match self.dataset {
            DatasetKind::GaussianClusters { dim, separation } => {
                let centers: Vec<Vec<f64>> = (0..k)
                    .map(|_| {
                        let v: Vec<f64> =
                            (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                        v.iter().map(|a| a / n * separation).collect()
                    })
                    .collect();
                for i in 0..self.samples {
                    let c = i % k;
                    let p = centers[c]
                        .iter()
                        .map(|m| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            m + z
                        })
                        .collect();
                    x.push(p);
                    y.push(c);
                }
            }
            DatasetKind::Spirals { turns, noise } => {
                for i in 0..self.samples {
                    let c = i % k;
                    let t: f64 = rng.random_range(0.05..1.0);
                    let angle = 2.0 * PI * (turns * t + c as f64 / k as f64);
                    let n1: f64 = StandardNormal.sample(&mut rng);
                    let n2: f64 = StandardNormal.sample(&mut rng);
                    x.push(vec![
                        2.0 * t * angle.cos() + noise * n1,
                        2.0 * t * angle.sin() + noise * n2,
                    ]);
                    y.push(c);
                }
            }
        }
        let mut order: Vec<usize> = (0..self.samples).collect();
        order.shuffle(&mut rng);
        let holdout_n = self.holdout_len();
        let (hold_idx, train_idx) = order.split_at(holdout_n);

        let holdout = Dataset {
            x: hold_idx.iter().map(|&i| x[i].clone()).collect(),
            labels: hold_idx.iter().map(|&i| y[i]).collect(),
            clean_labels: hold_idx.iter().map(|&i| y[i]).collect(),
        };
        let clean: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
        let labels = clean
            .iter()
            .map(|&c| {
                if self.label_noise > 0.0 && rng.random::<f64>() < self.label_noise {
                    let shift = rng.random_range(1..k);
                    (c + shift) % k
                } else {
                    c
                }
            })
            .collect();
        let train = Dataset {
            x: train_idx.iter().map(|&i| x[i].clone()).collect(),
            labels,
            clean_labels: clean,
        };
        Ok(TaskData {
            train,
            holdout,
            classes: k,
            input_width: self.input_width(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    /// Labels used for training (possibly noisy).
    pub labels: Vec<usize>,
    pub clean_labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub train: Dataset,
    pub holdout: Dataset,
    pub classes: usize,
    pub input_width: usize,
}
