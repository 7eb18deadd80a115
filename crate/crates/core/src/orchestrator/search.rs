use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::store::{write_atomic, RunHeader, Trajectory, TrajectoryStore};
use super::{EnvConfig, OrchestratorError, RunConfig};
use crate::analysis::CandidateRecord;
use crate::controller::{PolicyState, UpdateStats};
use crate::cost::{self, compute_reward};
use crate::evaluator::{KdObjective, ProxyEnvironment, TabularEnv};
use crate::exec::Executor;
use crate::seed;
use crate::space::SearchSpaceDef;

pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const POLICY_FILE: &str = "policy.json";
pub const METRICS_FILE: &str = "metrics.csv";

const METRICS_HEADER: &str =
    "generation,mean_reward,mean_accuracy,mean_latency_ms,best_reward,surrogate_loss,value_loss,entropy,clip_fraction";

/// Candidate evaluator built from a run config.
pub enum Environment {
    Tabular { env: TabularEnv, tag: String },
    Micro(ProxyEnvironment),
}

fn eval_err(e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::Evaluation(e.to_string())
}

impl Environment {
    pub fn build(cfg: &RunConfig, space: &SearchSpaceDef) -> Result<Self, OrchestratorError> {
        match &cfg.env {
            EnvConfig::Tabular(t) => {
                let teacher = t.teacher(space.onehot_len());
                let tag = teacher.tag.clone();
                let mut env = TabularEnv::new(t.noise_sigma);
                env.register(teacher);
                Ok(Environment::Tabular { env, tag })
            }
            EnvConfig::MicroKd { task, kd } => {
                let env = ProxyEnvironment::new(task.clone(), kd.clone()).map_err(eval_err)?;
                if kd.objective != KdObjective::HardLabel {
                    env.teacher().map_err(eval_err)?;
                }
                Ok(Environment::Micro(env))
            }
        }
    }

    pub fn teacher_tag(&self) -> String {
        match self {
            Environment::Tabular { tag, .. } => tag.clone(),
            Environment::Micro(p) if p.kd().objective == KdObjective::HardLabel => "none".into(),
            Environment::Micro(p) => p.kd().teacher.tag(),
        }
    }

    /// Accuracy in `[0, 1]` and whether training diverged.
    pub fn evaluate(
        &self,
        space: &SearchSpaceDef,
        decisions: &[usize],
        rng_seed: u64,
    ) -> Result<(f64, bool), OrchestratorError> {
        let arch = space.decode(decisions).map_err(eval_err)?;
        match self {
            Environment::Tabular { env, tag } => env
                .evaluate(space, &arch, tag, rng_seed)
                .map(|a| (a, false))
                .map_err(eval_err),
            Environment::Micro(p) => p
                .evaluate(space, &arch, rng_seed)
                .map(|r| (r.holdout_accuracy, r.diverged))
                .map_err(eval_err),
        }
    }
}

/// Everything a worker needs to score one candidate; shared read-only.
pub struct Evaluator<'a> {
    pub cfg: &'a RunConfig,
    pub space: &'a SearchSpaceDef,
    pub env: &'a Environment,
    pub teacher_tag: String,
}

impl Evaluator<'_> {
    pub fn candidate_seed(&self, generation: usize, index: usize) -> u64 {
        seed::derive(
            self.cfg.seed,
            &[seed::stream::CANDIDATE, generation as u64, index as u64],
        )
    }

    pub fn record(
        &self,
        generation: usize,
        index: usize,
        decisions: &[usize],
    ) -> Result<CandidateRecord, OrchestratorError> {
        let s = self.candidate_seed(generation, index);
        let (accuracy, diverged) = self.env.evaluate(self.space, decisions, s)?;
        let arch = self.space.decode(decisions).map_err(eval_err)?;
        let mflops = cost::flops(self.space, &arch, &self.cfg.flops);
        let latency_ms = self.cfg.latency.latency_ms(mflops, s);
        let reward = compute_reward(
            accuracy,
            self.cfg.reward.cost_of(latency_ms, mflops),
            &self.cfg.reward,
        )
        .map_err(eval_err)?;
        Ok(CandidateRecord {
            generation,
            candidate_index: index,
            onehot: self.space.encode_onehot(&arch).bits,
            arch: arch.decisions,
            accuracy,
            latency_ms,
            mflops,
            reward,
            seed: s,
            run_seed: self.cfg.seed,
            objective: self.cfg.objective_tag().into(),
            teacher: self.teacher_tag.clone(),
            diverged,
            reward_cfg: self.cfg.reward.clone(),
            latency_intercept: self.cfg.latency.intercept,
            latency_coefficient: self.cfg.latency.coefficient,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Evaluation workers; 0 means the available parallelism.
    pub workers: usize,
    pub resume: bool,
    /// Stop after this many generations in this call, leaving a resumable
    /// checkpoint.
    pub max_generations: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub generations_completed: usize,
    pub finished: bool,
    pub policy: PolicyState,
    pub trajectory: PathBuf,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    generations_completed: usize,
    policy: PolicyState,
}

fn storage(path: &Path, e: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::StorageFailure(format!("{}: {e}", path.display()))
}

fn metrics_row(generation: usize, records: &[CandidateRecord], s: &UpdateStats) -> String {
    let n = records.len() as f64;
    let mean = |f: fn(&CandidateRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let best = records
        .iter()
        .map(|r| r.reward)
        .fold(f64::NEG_INFINITY, f64::max);
    format!(
        "{generation},{},{},{},{best},{},{},{},{}",
        s.mean_reward,
        mean(|r| r.accuracy),
        mean(|r| r.latency_ms),
        s.surrogate_loss,
        s.value_loss,
        s.entropy,
        s.clip_fraction
    )
}

/// Runs (or resumes) a search, writing the trajectory, a per-generation policy
/// checkpoint and a metrics table into `out_dir`.
pub fn run_search(
    cfg: &RunConfig,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<RunSummary, OrchestratorError> {
    cfg.validate()?;
    let space = cfg.resolve_space()?;
    std::fs::create_dir_all(out_dir).map_err(|e| storage(out_dir, e))?;
    let traj_path = out_dir.join(TRAJECTORY_FILE);
    let policy_path = out_dir.join(POLICY_FILE);
    let metrics_path = out_dir.join(METRICS_FILE);
    let header = RunHeader::new(cfg.clone(), space.clone());

    let (mut store, mut policy, start, mut metrics) = if opts.resume && policy_path.exists() {
        let text = std::fs::read_to_string(&policy_path).map_err(|e| storage(&policy_path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| storage(&policy_path, e))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(storage(
                &policy_path,
                format!("unsupported checkpoint version {}", ck.version),
            ));
        }
        let existing = Trajectory::read(&traj_path)?;
        if existing.header != header {
            return Err(OrchestratorError::ConfigInvalid(
                "resume config differs from the trajectory header".into(),
            ));
        }
        ck.policy.validate().map_err(|e| storage(&policy_path, e))?;
        let (store, _) = TrajectoryStore::reopen(&traj_path, ck.generations_completed)?;
        let metrics: Vec<String> = std::fs::read_to_string(&metrics_path)
            .unwrap_or_default()
            .lines()
            .skip(1)
            .filter(|l| {
                l.split(',')
                    .next()
                    .and_then(|g| g.parse::<usize>().ok())
                    .is_some_and(|g| g < ck.generations_completed)
            })
            .map(str::to_string)
            .collect();
        (store, ck.policy, ck.generations_completed, metrics)
    } else {
        if !opts.resume && traj_path.exists() {
            return Err(storage(
                &traj_path,
                "already exists; resume it or choose another output directory",
            ));
        }
        let policy = PolicyState::new(&space, cfg.controller.clone())
            .map_err(|e| OrchestratorError::ConfigInvalid(e.to_string()))?;
        (
            TrajectoryStore::create(&traj_path, &header)?,
            policy,
            0,
            Vec::new(),
        )
    };

    let env = Environment::build(cfg, &space)?;
    let ev = Evaluator {
        cfg,
        space: &space,
        teacher_tag: env.teacher_tag(),
        env: &env,
    };
    let exec = Executor::new(opts.workers);
    let stop = opts
        .max_generations
        .map_or(cfg.generations, |m| (start + m).min(cfg.generations));

    for generation in start..stop {
        let mut batch = policy.sample_batch(
            cfg.batch_size,
            seed::derive(cfg.seed, &[seed::stream::SAMPLE, generation as u64]),
        );
        let records: Vec<CandidateRecord> = exec
            .map(&batch, |i, t| ev.record(generation, i, &t.decisions))
            .into_iter()
            .collect::<Result<_, _>>()?;
        for (t, r) in batch.iter_mut().zip(&records) {
            t.reward = Some(r.reward);
        }
        store.append(&records)?;
        let stats = policy
            .ppo_update(&batch)
            .map_err(|e| OrchestratorError::Controller(e.to_string()))?;
        metrics.push(metrics_row(generation, &records, &stats));

        let mut csv = String::from(METRICS_HEADER);
        csv.push('\n');
        for m in &metrics {
            let _ = writeln!(csv, "{m}");
        }
        write_atomic(&metrics_path, csv.as_bytes())?;
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            generations_completed: generation + 1,
            policy: policy.clone(),
        };
        let json = serde_json::to_vec(&ck).expect("checkpoint serializes");
        write_atomic(&policy_path, &json)?;
    }

    Ok(RunSummary {
        generations_completed: stop.max(start),
        finished: stop >= cfg.generations,
        policy,
        trajectory: traj_path,
    })
}
