//! Proxy-task training: mini-batch SGD with momentum, linear warm-up over the
//! first epoch(s), then a constant rate.

use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;

use super::kd::{cross_entropy, feature_mse_loss, kd_loss_with_targets};
use super::micronet::{Adapter, MicroNet};
use super::task::{Dataset, ProxyTaskSpec, TaskData};
use super::teacher::PreparedTeacher;
use super::{EvalError, KDConfig, KdObjective};
use crate::plan::NetworkPlan;
use crate::seed;
use crate::space::{ArchitectureConfig, SearchSpaceDef};

pub(crate) enum Supervision<'a> {
    Hard,
    Soft {
        targets: &'a [Vec<f64>],
        tau: f64,
        alpha: f64,
    },
    Feature {
        targets: &'a [Vec<f64>],
        alpha: f64,
    },
}

pub(crate) struct FitOutcome {
    pub final_loss: f64,
    pub diverged: bool,
}

/// Trains `net` in place. `adapter` is required for feature supervision.
pub(crate) fn fit(
    net: &mut MicroNet,
    mut adapter: Option<&mut Adapter>,
    xs: &[Vec<f64>],
    labels: &[usize],
    sup: Supervision<'_>,
    opts: &ProxyTaskSpec,
    run_seed: u64,
) -> FitOutcome {
    let n = xs.len();
    let bs = opts.batch_size.min(n).max(1);
    let steps_per_epoch = n.div_ceil(bs);
    let warmup_steps = opts.warmup_epochs * steps_per_epoch;
    let n_net = net.num_params();
    let n_ad = adapter.as_ref().map_or(0, |a| a.params.len());
    let mut grad = vec![0.0; n_net];
    let mut grad_ad = vec![0.0; n_ad];
    let mut vel = vec![0.0; n_net];
    let mut vel_ad = vec![0.0; n_ad];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive(run_seed, &[seed::stream::SHUFFLE]));
    let mut step = 0usize;
    let mut epoch_loss = f64::NAN;

    for _epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(bs) {
            grad.fill(0.0);
            grad_ad.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let trace = net.forward(&xs[i]);
                let (loss, dlogits, dfeat) = match &sup {
                    Supervision::Hard => {
                        let (l, g) =
                            cross_entropy(&trace.logits, labels[i]).expect("label in range");
                        (l, g, None)
                    }
                    Supervision::Soft {
                        targets,
                        tau,
                        alpha,
                    } => {
                        let (l, g) = kd_loss_with_targets(
                            &trace.logits,
                            &targets[i],
                            labels[i],
                            *tau,
                            *alpha,
                        )
                        .expect("validated kd parameters");
                        (l, g, None)
                    }
                    Supervision::Feature { targets, alpha } => {
                        let ad = adapter
                            .as_deref()
                            .expect("feature supervision needs an adapter");
                        let mapped = ad.apply(&trace.features);
                        let (mse, dmapped) =
                            feature_mse_loss(&mapped, &targets[i]).expect("adapter width");
                        let (ce, mut g) =
                            cross_entropy(&trace.logits, labels[i]).expect("label in range");
                        g.iter_mut().for_each(|v| *v *= 1.0 - alpha);
                        let dm: Vec<f64> = dmapped.iter().map(|v| v * alpha).collect();
                        let df = ad.backward(&trace.features, &dm, &mut grad_ad);
                        (alpha * mse + (1.0 - alpha) * ce, g, Some(df))
                    }
                };
                batch_loss += loss;
                net.backward(&trace, &dlogits, dfeat.as_deref(), &mut grad);
            }
            if !batch_loss.is_finite() {
                return FitOutcome {
                    final_loss: batch_loss,
                    diverged: true,
                };
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            let mut norm2 = 0.0;
            for g in grad.iter_mut().chain(grad_ad.iter_mut()) {
                *g *= scale;
                norm2 += *g * *g;
            }
            let clip = if opts.grad_clip > 0.0 && norm2.sqrt() > opts.grad_clip {
                opts.grad_clip / norm2.sqrt()
            } else {
                1.0
            };
            let lr = if step < warmup_steps {
                opts.learning_rate * (step + 1) as f64 / warmup_steps as f64
            } else {
                opts.learning_rate
            };
            sgd_step(net.params_mut(), &grad, &mut vel, lr, opts.momentum, clip);
            if let Some(ad) = adapter.as_deref_mut() {
                sgd_step(
                    &mut ad.params,
                    &grad_ad,
                    &mut vel_ad,
                    lr,
                    opts.momentum,
                    clip,
                );
            }
            step += 1;
        }
        epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() || net.params().iter().any(|p| !p.is_finite()) {
            return FitOutcome {
                final_loss: epoch_loss,
                diverged: true,
            };
        }
    }
    FitOutcome {
        final_loss: epoch_loss,
        diverged: false,
    }
}

fn sgd_step(p: &mut [f64], g: &[f64], v: &mut [f64], lr: f64, momentum: f64, clip: f64) {
    for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = momentum * *v + g * clip;
        *p -= lr * *v;
    }
}

/// Fraction of `data` classified correctly against its clean labels.
pub(crate) fn accuracy(net: &MicroNet, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .x
        .iter()
        .zip(&data.clean_labels)
        .filter(|(x, &y)| net.predict(x) == y)
        .count();
    hits as f64 / data.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxyResult {
    pub holdout_accuracy: f64,
    pub final_train_loss: f64,
    /// Training produced a non-finite loss; accuracy is reported as 0.
    pub diverged: bool,
}

/// Proxy task with its data and (lazily trained) teacher, shared read-only
/// across candidate evaluations.
#[derive(Debug)]
pub struct ProxyEnvironment {
    task: ProxyTaskSpec,
    kd: KDConfig,
    data: TaskData,
    teacher: OnceLock<Result<Arc<PreparedTeacher>, EvalError>>,
    soft_targets: OnceLock<Result<Arc<Vec<Vec<f64>>>, EvalError>>,
}

impl ProxyEnvironment {
    pub fn new(task: ProxyTaskSpec, kd: KDConfig) -> Result<Self, EvalError> {
        kd.validate()?;
        let data = task.generate()?;
        Ok(Self {
            task,
            kd,
            data,
            teacher: OnceLock::new(),
            soft_targets: OnceLock::new(),
        })
    }

    pub fn task(&self) -> &ProxyTaskSpec {
        &self.task
    }

    pub fn kd(&self) -> &KDConfig {
        &self.kd
    }

    pub fn data(&self) -> &TaskData {
        &self.data
    }

    pub fn teacher(&self) -> Result<Arc<PreparedTeacher>, EvalError> {
        self.teacher
            .get_or_init(|| {
                PreparedTeacher::prepare(&self.kd.teacher, &self.task, &self.data).map(Arc::new)
            })
            .clone()
    }

    fn soft_targets(&self) -> Result<Arc<Vec<Vec<f64>>>, EvalError> {
        self.soft_targets
            .get_or_init(|| Ok(Arc::new(self.teacher()?.soft_targets(self.kd.temperature)?)))
            .clone()
    }

    /// Trains one candidate with the configured objective and proxy budget.
    pub fn evaluate(
        &self,
        space: &SearchSpaceDef,
        arch: &ArchitectureConfig,
        rng_seed: u64,
    ) -> Result<ProxyResult, EvalError> {
        let plan = NetworkPlan::from_arch(space, arch, self.data.input_width);
        self.train_plan(plan, self.kd.objective, self.task.epochs, rng_seed)
    }

    /// Trains a fresh network for `plan`; weights are never shared between calls.
    pub fn train_plan(
        &self,
        plan: NetworkPlan,
        objective: KdObjective,
        epochs: usize,
        rng_seed: u64,
    ) -> Result<ProxyResult, EvalError> {
        let init = seed::derive(rng_seed, &[seed::stream::INIT]);
        let mut net = MicroNet::new(plan, self.data.classes, init);
        let opts = ProxyTaskSpec {
            epochs: epochs.max(1),
            warmup_epochs: self.task.warmup_epochs.min(epochs.max(1)),
            ..self.task.clone()
        };
        let xs = &self.data.train.x;
        let labels = &self.data.train.labels;
        let outcome = match objective {
            KdObjective::HardLabel => fit(
                &mut net,
                None,
                xs,
                labels,
                Supervision::Hard,
                &opts,
                rng_seed,
            ),
            KdObjective::SoftLogit => {
                let targets = self.soft_targets()?;
                let sup = Supervision::Soft {
                    targets: &targets,
                    tau: self.kd.temperature,
                    alpha: self.kd.alpha,
                };
                fit(&mut net, None, xs, labels, sup, &opts, rng_seed)
            }
            KdObjective::FeatureMse => {
                let teacher = self.teacher()?;
                let feats = teacher
                    .features
                    .as_ref()
                    .ok_or_else(|| EvalError::TeacherUnsupported("penultimate features".into()))?;
                let mut adapter = Adapter::new(
                    net.feature_width(),
                    feats[0].len(),
                    seed::derive(rng_seed, &[seed::stream::INIT, 1]),
                );
                let sup = Supervision::Feature {
                    targets: feats,
                    alpha: self.kd.alpha,
                };
                fit(
                    &mut net,
                    Some(&mut adapter),
                    xs,
                    labels,
                    sup,
                    &opts,
                    rng_seed,
                )
            }
        };
        Ok(if outcome.diverged {
            ProxyResult {
                holdout_accuracy: 0.0,
                final_train_loss: outcome.final_loss,
                diverged: true,
            }
        } else {
            ProxyResult {
                holdout_accuracy: accuracy(&net, &self.data.holdout),
                final_train_loss: outcome.final_loss,
                diverged: false,
            }
        })
    }
}

/// One-shot convenience: builds the task and teacher, then trains `arch`.
pub fn train_student(
    space: &SearchSpaceDef,
    arch: &ArchitectureConfig,
    task: &ProxyTaskSpec,
    kd: &KDConfig,
    rng_seed: u64,
) -> Result<ProxyResult, EvalError> {
    ProxyEnvironment::new(task.clone(), kd.clone())?.evaluate(space, arch, rng_seed)
}
