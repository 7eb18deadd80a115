use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::store::Trajectory;
use super::{EnvConfig, OrchestratorError};
use crate::analysis::select_top_k;
use crate::evaluator::{KdObjective, ProxyEnvironment};
use crate::exec::Executor;
use crate::plan::NetworkPlan;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalResult {
    pub rank: usize,
    pub arch: Vec<usize>,
    pub generation: usize,
    pub candidate_index: usize,
    pub search_reward: f64,
    pub latency_ms: f64,
    pub mflops: f64,
    pub kd_accuracy: f64,
    pub hard_accuracy: f64,
    pub kd_diverged: bool,
    pub hard_diverged: bool,
}

/// Picks the `k` best in-window candidates of a search and retrains each from
/// scratch with the long budget, once with distillation and once on labels.
/// Both runs of a candidate share the same seed.
pub fn finalize_top(
    trajectory: &Trajectory,
    window: (f64, f64),
    k: usize,
    long_epochs: usize,
    workers: usize,
) -> Result<Vec<FinalResult>, OrchestratorError> {
    let picked = select_top_k(&trajectory.records, window, k);
    if k == 0 || picked.len() < k {
        return Err(OrchestratorError::InsufficientCandidates {
            need: k,
            got: picked.len(),
        });
    }
    let cfg = &trajectory.header.config;
    let EnvConfig::MicroKd { task, kd } = &cfg.env else {
        return Err(OrchestratorError::ConfigInvalid(
            "finalization needs the micro_kd environment".into(),
        ));
    };
    let kd_objective = match kd.objective {
        KdObjective::HardLabel => KdObjective::SoftLogit,
        o => o,
    };
    let env = ProxyEnvironment::new(task.clone(), kd.clone())
        .map_err(|e| OrchestratorError::Evaluation(e.to_string()))?;
    env.teacher()
        .map_err(|e| OrchestratorError::Evaluation(e.to_string()))?;
    let space = &trajectory.header.space;
    let jobs: Vec<(usize, KdObjective)> = (0..picked.len())
        .flat_map(|i| [(i, kd_objective), (i, KdObjective::HardLabel)])
        .collect();
    let runs = Executor::new(workers).map(&jobs, |_, &(i, objective)| {
        let r = &picked[i];
        let arch = space
            .decode(&r.arch)
            .map_err(|e| OrchestratorError::Evaluation(e.to_string()))?;
        let plan = NetworkPlan::from_arch(space, &arch, env.data().input_width);
        env.train_plan(
            plan,
            objective,
            long_epochs,
            seed::derive(r.seed, &[seed::stream::FINALIZE]),
        )
        .map_err(|e| OrchestratorError::Evaluation(e.to_string()))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_, _>>()?;
    Ok(picked
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (kd_run, hard_run) = (&runs[2 * i], &runs[2 * i + 1]);
            FinalResult {
                rank: i + 1,
                arch: r.arch.clone(),
                generation: r.generation,
                candidate_index: r.candidate_index,
                search_reward: r.reward,
                latency_ms: r.latency_ms,
                mflops: r.mflops,
                kd_accuracy: kd_run.holdout_accuracy,
                hard_accuracy: hard_run.holdout_accuracy,
                kd_diverged: kd_run.diverged,
                hard_diverged: hard_run.diverged,
            }
        })
        .collect())
}

pub fn results_csv(results: &[FinalResult]) -> String {
    let mut s = String::from(
        "rank,arch,generation,candidate_index,search_reward,latency_ms,mflops,kd_accuracy,hard_accuracy,kd_gain\n",
    );
    for r in results {
        let arch: Vec<String> = r.arch.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.rank,
            arch.join(" "),
            r.generation,
            r.candidate_index,
            r.search_reward,
            r.latency_ms,
            r.mflops,
            r.kd_accuracy,
            r.hard_accuracy,
            r.kd_accuracy - r.hard_accuracy
        );
    }
    s
}
