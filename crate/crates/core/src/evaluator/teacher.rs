//! Frozen teachers: seeded MLPs trained on clean labels, ensembles of them, or
//! logits imported from a CSV file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::kd::{ensemble_soft_targets, softmax_tempered};
use super::micronet::MicroNet;
use super::task::{ProxyTaskSpec, TaskData};
use super::train::{accuracy, fit, Supervision};
use super::EvalError;
use crate::plan::NetworkPlan;
use crate::seed;
use crate::space::OpType;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherNetSpec {
    pub hidden: Vec<usize>,
    pub activation: OpType,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TeacherNetSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            activation: OpType::Relu,
            epochs: 60,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

impl TeacherNetSpec {
    fn tag(&self) -> String {
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        format!(
            "mlp{}-{:?}-e{}-s{}",
            hidden.join("x"),
            self.activation,
            self.epochs,
            self.seed
        )
        .to_lowercase()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TeacherSpec {
    Single {
        net: TeacherNetSpec,
    },
    Ensemble {
        nets: Vec<TeacherNetSpec>,
    },
    /// One row per training sample (in split order), one column per class.
    LogitsCsv {
        path: PathBuf,
    },
}

impl Default for TeacherSpec {
    fn default() -> Self {
        TeacherSpec::Single {
            net: TeacherNetSpec::default(),
        }
    }
}

impl TeacherSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        match self {
            TeacherSpec::Ensemble { nets } if nets.is_empty() => Err(EvalError::EmptyEnsemble),
            _ => Ok(()),
        }
    }

    /// Identity tag recorded alongside every candidate.
    pub fn tag(&self) -> String {
        match self {
            TeacherSpec::Single { net } => net.tag(),
            TeacherSpec::Ensemble { nets } => {
                let parts: Vec<String> = nets.iter().map(TeacherNetSpec::tag).collect();
                format!("ensemble[{}]", parts.join(","))
            }
            TeacherSpec::LogitsCsv { path } => format!("csv:{}", path.display()),
        }
    }
}

/// Teacher outputs on the training split, computed once and shared read-only.
#[derive(Clone, Debug)]
pub struct PreparedTeacher {
    pub tag: String,
    /// `logits[teacher][sample]`.
    pub logits: Vec<Vec<Vec<f64>>>,
    /// Penultimate features per sample (mean over teachers when widths agree).
    pub features: Option<Vec<Vec<f64>>>,
    /// Holdout accuracy of each teacher network, when known.
    pub holdout_accuracy: Vec<f64>,
}

impl PreparedTeacher {
    pub fn prepare(
        spec: &TeacherSpec,
        task: &ProxyTaskSpec,
        data: &TaskData,
    ) -> Result<Self, EvalError> {
        spec.validate()?;
        let tag = spec.tag();
        match spec {
            TeacherSpec::Single { net } => {
                Self::from_nets(tag, std::slice::from_ref(net), task, data)
            }
            TeacherSpec::Ensemble { nets } => Self::from_nets(tag, nets, task, data),
            TeacherSpec::LogitsCsv { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| EvalError::TeacherFile(format!("{}: {e}", path.display())))?;
                let logits = parse_logits_csv(&text, data.train.len(), data.classes)?;
                Ok(Self {
                    tag,
                    logits: vec![logits],
                    features: None,
                    holdout_accuracy: vec![],
                })
            }
        }
    }

    fn from_nets(
        tag: String,
        nets: &[TeacherNetSpec],
        task: &ProxyTaskSpec,
        data: &TaskData,
    ) -> Result<Self, EvalError> {
        let mut logits = Vec::new();
        let mut feats: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut holdout_accuracy = Vec::new();
        for spec in nets {
            let net = train_teacher(spec, task, data)?;
            let (l, f): (Vec<_>, Vec<_>) = data
                .train
                .x
                .iter()
                .map(|x| {
                    let t = net.forward(x);
                    (t.logits, t.features)
                })
                .unzip();
            holdout_accuracy.push(accuracy(&net, &data.holdout));
            logits.push(l);
            feats.push(f);
        }
        let width = feats[0][0].len();
        let features = feats.iter().all(|f| f[0].len() == width).then(|| {
            let k = feats.len() as f64;
            (0..data.train.len())
                .map(|i| {
                    let mut m = vec![0.0; width];
                    for f in &feats {
                        m.iter_mut().zip(&f[i]).for_each(|(a, b)| *a += b / k);
                    }
                    m
                })
                .collect()
        });
        Ok(Self {
            tag,
            logits,
            features,
            holdout_accuracy,
        })
    }

    /// Tempered soft targets per training sample.
    pub fn soft_targets(&self, tau: f64) -> Result<Vec<Vec<f64>>, EvalError> {
        let n = self.logits[0].len();
        (0..n)
            .map(|i| {
                if self.logits.len() == 1 {
                    Ok(softmax_tempered(&self.logits[0][i], tau))
                } else {
                    let per: Vec<Vec<f64>> = self.logits.iter().map(|t| t[i].clone()).collect();
                    ensemble_soft_targets(&per, tau)
                }
            })
            .collect()
    }
}

fn train_teacher(
    spec: &TeacherNetSpec,
    task: &ProxyTaskSpec,
    data: &TaskData,
) -> Result<MicroNet, EvalError> {
    if spec.hidden.contains(&0) {
        return Err(EvalError::InvalidTask(
            "teacher hidden widths must be positive".into(),
        ));
    }
    let plan = NetworkPlan::mlp(data.input_width, &spec.hidden, spec.activation);
    let init = seed::derive(spec.seed, &[seed::stream::TEACHER]);
    let mut net = MicroNet::new(plan, data.classes, init);
    let opts = ProxyTaskSpec {
        epochs: spec.epochs.max(1),
        warmup_epochs: task.warmup_epochs.min(spec.epochs.max(1)),
        learning_rate: spec.learning_rate,
        ..task.clone()
    };
    // the teacher sees clean labels
    let out = fit(
        &mut net,
        None,
        &data.train.x,
        &data.train.clean_labels,
        Supervision::Hard,
        &opts,
        init,
    );
    if out.diverged {
        return Err(EvalError::InvalidTask(format!(
            "teacher {} diverged",
            spec.tag()
        )));
    }
    Ok(net)
}

fn parse_logits_csv(text: &str, rows: usize, classes: usize) -> Result<Vec<Vec<f64>>, EvalError> {
    let mut out = Vec::with_capacity(rows);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => {
                if v.len() != classes {
                    return Err(EvalError::TeacherFile(format!(
                        "line {}: expected {classes} columns, got {}",
                        i + 1,
                        v.len()
                    )));
                }
                out.push(v);
            }
            // a non-numeric first line is a header
            Err(_) if i == 0 => continue,
            Err(e) => return Err(EvalError::TeacherFile(format!("line {}: {e}", i + 1))),
        }
    }
    if out.len() != rows {
        return Err(EvalError::TeacherFile(format!(
            "expected {rows} rows (one per training sample), got {}",
            out.len()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parsing() {
        let v = parse_logits_csv("a,b\n1,2\n3.5,-1\n", 2, 2).unwrap();
        assert_eq!(v, vec![vec![1.0, 2.0], vec![3.5, -1.0]]);
        assert!(parse_logits_csv("1,2\n3\n", 2, 2).is_err());
        assert!(parse_logits_csv("1,2\n", 2, 2).is_err());
        assert!(parse_logits_csv("1,2\nx,y\n", 2, 2).is_err());
    }

    #[test]
    fn tags_are_descriptive() {
        let t = TeacherSpec::default().tag();
        assert_eq!(t, "mlp64x64x64-relu-e60-s0");
        let e = TeacherSpec::Ensemble {
            nets: vec![TeacherNetSpec::default(), TeacherNetSpec::default()],
        };
        assert!(e.tag().starts_with("ensemble["));
        assert_eq!(
            TeacherSpec::Ensemble { nets: vec![] }.validate(),
            Err(EvalError::EmptyEnsemble)
        );
    }
}
