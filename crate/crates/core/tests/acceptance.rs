//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::time::Instant;

use akd_core::analysis::{
    centroid_separation, distribution_divergence, dominates, family_divergence,
    operator_probability, pareto_front, project_2d, relative_gain, winning_ratio, CandidateRecord,
};
use akd_core::controller::ControllerConfig;
use akd_core::cost::{compute_reward, flops, CostMode, FlopsSpec, LatencyModel, RewardConfig};
use akd_core::evaluator::micronet::Adapter;
use akd_core::evaluator::{
    feature_mse_loss, kd_loss, KDConfig, KdObjective, MicroNet, ProxyEnvironment, ProxyTaskSpec,
    TabularEnv, TeacherNetSpec, TeacherSpec,
};
use akd_core::orchestrator::{
    run_search, EnvConfig, RunConfig, RunOptions, SpaceSource, TabularSpec, Trajectory,
    METRICS_FILE, POLICY_FILE, TRAJECTORY_FILE,
};
use akd_core::plan::{LayerPlan, NetworkPlan, Skip};
use akd_core::seed;
use akd_core::space::{OpType, SearchSpaceDef};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normals(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel_norm_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12)
}

fn central_difference(x: &mut [f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let o = x[i];
            x[i] = o + h;
            let up = f(x);
            x[i] = o - h;
            let down = f(x);
            x[i] = o;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn reward_formula() -> Outcome {
    let mut rng = seed::rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let acc = rng.random_range(0.0..=1.0);
        let lat = rng.random_range(1.0..100.0);
        let cfg = RewardConfig {
            target: rng.random_range(1.0..100.0),
            weight_exponent: rng.random_range(-1.0..=0.0),
            mode: CostMode::Latency,
        };
        let got = compute_reward(acc, lat, &cfg).unwrap();
        let closed = acc * (cfg.weight_exponent * (lat / cfg.target).ln()).exp();
        worst = worst.max((got - closed).abs());
        let neutral = compute_reward(acc, cfg.target, &cfg).unwrap();
        worst = worst.max((neutral - acc).abs());
    }
    outcome(worst <= 1e-12, format!("max abs error {worst:.2e}"))
}

fn gradient_integrity() -> Outcome {
    let mut rng = seed::rng(102);
    let mut worst: f64 = 0.0;
    for tau in [0.5, 1.0, 4.0] {
        for alpha in [0.0, 0.5, 1.0] {
            for _ in 0..5 {
                let mut s = normals(&mut rng, 4, 2.0);
                let t = normals(&mut rng, 4, 2.0);
                let y = rng.random_range(0..4);
                let (_, g) = kd_loss(&s, &t, y, tau, alpha).unwrap();
                let num = central_difference(&mut s, |s| kd_loss(s, &t, y, tau, alpha).unwrap().0);
                worst = worst.max(rel_norm_error(&g, &num));
            }
        }
    }
    for trial in 0..5u64 {
        let adapter = Adapter::new(4, 6, trial);
        let mut s = normals(&mut rng, 4, 1.0);
        let t = normals(&mut rng, 6, 1.0);
        let (_, dy) = feature_mse_loss(&adapter.apply(&s), &t).unwrap();
        let mut g = vec![0.0; adapter.params.len()];
        let dx = adapter.backward(&s, &dy, &mut g);
        let mut p = adapter.params.clone();
        let num_p = central_difference(&mut p, |p| {
            let mut a = adapter.clone();
            a.params.copy_from_slice(p);
            feature_mse_loss(&a.apply(&s), &t).unwrap().0
        });
        let num_x = central_difference(&mut s, |x| {
            feature_mse_loss(&adapter.apply(x), &t).unwrap().0
        });
        worst = worst
            .max(rel_norm_error(&g, &num_p))
            .max(rel_norm_error(&dx, &num_x));
    }
    let skips = [
        (Skip::None, Skip::None),
        (Skip::None, Skip::Identity),
        (Skip::Projection, Skip::Projection),
        (Skip::GatedProjection, Skip::GatedIdentity),
    ];
    let mut variants = 0;
    for op in [OpType::Relu, OpType::Swish, OpType::Tanh] {
        for se_hidden in [None, Some(1)] {
            for (first, second) in skips {
                variants += 1;
                let layer = |input, skip| LayerPlan {
                    input,
                    output: 4,
                    op,
                    se_hidden,
                    skip,
                };
                let plan = NetworkPlan {
                    input_width: 3,
                    layers: vec![layer(3, first), layer(4, second)],
                };
                for point in 0..10u64 {
                    let mut net = MicroNet::new(plan.clone(), 3, point);
                    let shift = normals(&mut rng, net.num_params(), 0.1);
                    net.params_mut()
                        .iter_mut()
                        .zip(&shift)
                        .for_each(|(p, d)| *p += d);
                    let x = normals(&mut rng, 3, 1.0);
                    let c = normals(&mut rng, 3, 1.0);
                    let d = normals(&mut rng, 4, 1.0);
                    let tr = net.forward(&x);
                    let mut g = vec![0.0; net.num_params()];
                    net.backward(&tr, &c, Some(&d), &mut g);
                    let mut p = net.params().to_vec();
                    let num = central_difference(&mut p, |p| {
                        let mut n = net.clone();
                        n.params_mut().copy_from_slice(p);
                        let t = n.forward(&x);
                        dot(&c, &t.logits) + dot(&d, &t.features)
                    });
                    worst = worst.max(rel_norm_error(&g, &num));
                }
            }
        }
    }
    outcome(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over {variants} block variants"),
    )
}

fn toy_space() -> SearchSpaceDef {
    let full = SearchSpaceDef::default_space();
    SearchSpaceDef::new("toy", full.blocks()[1..3].to_vec()).unwrap()
}

fn run(cfg: &RunConfig, workers: usize) -> (tempfile::TempDir, Trajectory) {
    let dir = tempfile::tempdir().unwrap();
    run_search(
        cfg,
        dir.path(),
        &RunOptions {
            workers,
            ..RunOptions::default()
        },
    )
    .unwrap();
    let t = Trajectory::read(&dir.path().join(TRAJECTORY_FILE)).unwrap();
    (dir, t)
}

fn controller_learning() -> Outcome {
    let space = toy_space();
    let mut ratios = Vec::new();
    for s in 0..5u64 {
        let spec = TabularSpec {
            teacher_seed: 100 + s,
            ..TabularSpec::default()
        };
        let cfg = RunConfig {
            seed: s,
            generations: 500,
            batch_size: 16,
            space: SpaceSource::Inline { def: space.clone() },
            env: EnvConfig::Tabular(spec.clone()),
            controller: ControllerConfig {
                init_seed: s,
                ..ControllerConfig::default()
            },
            ..RunConfig::default()
        };
        let teacher = spec.teacher(space.onehot_len());
        let tag = teacher.tag.clone();
        let mut env = TabularEnv::new(0.0);
        env.register(teacher);
        let optimum = space
            .enumerate(4096)
            .unwrap()
            .iter()
            .map(|a| {
                let acc = env.expected_accuracy(&space, a, &tag).unwrap();
                let mf = flops(&space, a, &cfg.flops);
                let lat = cfg.latency.latency_ms(mf, 0);
                compute_reward(acc, cfg.reward.cost_of(lat, mf), &cfg.reward).unwrap()
            })
            .fold(0.0, f64::max);
        let (_dir, t) = run(&cfg, 1);
        let last: Vec<f64> = t
            .records
            .iter()
            .filter(|r| r.generation == cfg.generations - 1)
            .map(|r| r.reward)
            .collect();
        ratios.push(last.iter().sum::<f64>() / last.len() as f64 / optimum);
    }
    let ok = ratios.iter().filter(|&&r| r >= 0.95).count();
    outcome(
        ok == 5,
        format!("{ok}/5 seeds within 5% of the optimum, ratios {ratios:.3?}"),
    )
}

fn separability_run(seed_v: u64, spec: TabularSpec) -> Vec<Vec<u8>> {
    let cfg = RunConfig {
        seed: seed_v,
        generations: 300,
        batch_size: 32,
        env: EnvConfig::Tabular(spec),
        controller: ControllerConfig {
            init_seed: seed_v,
            entropy_coef: 0.08,
            learning_rate: 0.003,
            ..ControllerConfig::default()
        },
        ..RunConfig::default()
    };
    let (_dir, t) = run(&cfg, 0);
    let n = t.records.len();
    t.records[n - 500..]
        .iter()
        .map(|r| r.onehot.clone())
        .collect()
}

fn teacher_separability() -> Outcome {
    let mut orth = Vec::new();
    let mut same = Vec::new();
    for p in 0..5u64 {
        let base = TabularSpec {
            teacher_seed: 1000 + p,
            noise_sigma: 0.0,
            ..TabularSpec::default()
        };
        let other = TabularSpec {
            teacher_seed: 2000 + p,
            orthogonal_to: Some(1000 + p),
            ..base.clone()
        };
        let a = separability_run(p, base.clone());
        let b = separability_run(p, other);
        orth.push(centroid_separation(&a, &b).unwrap().ratio);
        let c = separability_run(p + 50, base);
        same.push(centroid_separation(&a, &c).unwrap().ratio);
    }
    let orth_ok = orth.iter().filter(|&&r| r >= 2.0).count();
    let same_ok = same.iter().filter(|&&r| r <= 0.75).count();
    outcome(
        orth_ok >= 4 && same_ok >= 4,
        format!(
            "orthogonal teachers {orth_ok}/5 >= 2.0 {orth:.2?}; same teacher {same_ok}/5 <= 0.75 {same:.2?}"
        ),
    )
}

fn kd_benefit() -> Outcome {
    let space = SearchSpaceDef::default_space();
    let task = ProxyTaskSpec {
        label_noise: 0.2,
        ..ProxyTaskSpec::default()
    };
    let kd_env = ProxyEnvironment::new(task.clone(), KDConfig::default()).unwrap();
    let hard_env = ProxyEnvironment::new(
        task,
        KDConfig {
            objective: KdObjective::HardLabel,
            ..KDConfig::default()
        },
    )
    .unwrap();
    let teacher_acc = kd_env.teacher().unwrap().holdout_accuracy[0];
    let mut rows = Vec::new();
    let mut ok = 0;
    for a in 0..3u64 {
        let arch = space.random_sample(2000 + a);
        let mean = |env: &ProxyEnvironment| {
            (0..10u64)
                .map(|s| env.evaluate(&space, &arch, s).unwrap().holdout_accuracy)
                .sum::<f64>()
                / 10.0
        };
        let (kd, hard) = (mean(&kd_env), mean(&hard_env));
        if kd >= hard {
            ok += 1;
        }
        rows.push(format!("{kd:.3}/{hard:.3}"));
    }
    outcome(
        ok == 3,
        format!(
            "{ok}/3 architectures with KD >= hard (kd/hard {}), teacher holdout {teacher_acc:.3}",
            rows.join(", ")
        ),
    )
}

fn relative_gain_pipeline() -> Outcome {
    let g = relative_gain(66.5, 61.4, 63.9, 59.73);
    let mut pairs = vec![(1.2, 0.4); 18];
    pairs.extend([(0.1, 0.9), (0.3, 0.3)]);
    let w = winning_ratio(&pairs).unwrap();
    outcome(
        (g - 0.93).abs() < 1e-9 && w.wins == 18 && w.valid == 20 && (w.ratio - 0.9).abs() < 1e-12,
        format!(
            "relative gain {g:.6}, winning ratio {}/{} = {:.2}",
            w.wins, w.valid, w.ratio
        ),
    )
}

fn synthetic(space: &SearchSpaceDef, i: usize, acc: f64, lat: f64) -> CandidateRecord {
    let arch = space.random_sample(i as u64);
    CandidateRecord {
        generation: i / 16,
        candidate_index: i % 16,
        onehot: space.encode_onehot(&arch).bits,
        arch: arch.decisions,
        accuracy: acc,
        latency_ms: lat,
        mflops: 1.0,
        reward: acc,
        seed: i as u64,
        run_seed: 0,
        objective: "kd".into(),
        teacher: "t".into(),
        diverged: false,
        reward_cfg: RewardConfig::default(),
        latency_intercept: 7.0,
        latency_coefficient: 6.935,
    }
}

fn oracle_front(records: &[CandidateRecord]) -> Vec<(usize, usize)> {
    let mut keep: Vec<&CandidateRecord> = records
        .iter()
        .filter(|r| !records.iter().any(|o| dominates(o, r)))
        .filter(|r| {
            !records.iter().any(|o| {
                o.accuracy == r.accuracy
                    && o.latency_ms == r.latency_ms
                    && (o.generation, o.candidate_index) < (r.generation, r.candidate_index)
            })
        })
        .collect();
    keep.sort_by(|a, b| a.latency_ms.total_cmp(&b.latency_ms));
    keep.iter()
        .map(|r| (r.generation, r.candidate_index))
        .collect()
}

fn pareto_correctness() -> Outcome {
    let space = SearchSpaceDef::default_space();
    let mut rng = seed::rng(107);
    let mut agree = 0;
    for set in 0..50 {
        let n = if set == 0 {
            10_000
        } else {
            rng.random_range(1..=10_000)
        };
        let coarse = set % 2 == 1;
        let recs: Vec<_> = (0..n)
            .map(|i| {
                let (a, l) = if coarse {
                    (
                        rng.random_range(0..50) as f64 / 50.0,
                        rng.random_range(8..40) as f64,
                    )
                } else {
                    (rng.random_range(0.0..1.0), rng.random_range(8.0..40.0))
                };
                synthetic(&space, i, a, l)
            })
            .collect();
        let front: Vec<_> = pareto_front(&recs)
            .unwrap()
            .iter()
            .map(|r| (r.generation, r.candidate_index))
            .collect();
        if front == oracle_front(&recs) {
            agree += 1;
        }
    }
    outcome(
        agree == 50,
        format!("{agree}/50 sets match the all-pairs oracle"),
    )
}

fn latency_band() -> Outcome {
    let space = SearchSpaceDef::default_space();
    let spec = FlopsSpec::default();
    let mut violations = 0;
    let mut checked = 0;
    for c in [3.4, 5.0, 6.935, 8.5, 10.47] {
        let model = LatencyModel::with_coefficient(c);
        for i in 0..1000 {
            let arch = space.random_sample(i);
            let mf = flops(&space, &arch, &spec);
            let lat = model.latency_ms(mf, i);
            let (lo, hi) = (3.4 * (lat - 7.0), 10.47 * (lat - 7.0));
            let slack = 1e-9 * mf.max(1.0);
            checked += 1;
            if !(lo <= mf + slack && mf <= hi + slack) {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over {checked} (c, architecture) pairs"),
    )
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

fn reproducibility() -> Outcome {
    let tabular = RunConfig {
        seed: 9,
        generations: 30,
        batch_size: 16,
        env: EnvConfig::Tabular(TabularSpec::default()),
        ..RunConfig::default()
    };
    let micro = RunConfig {
        seed: 9,
        generations: 3,
        batch_size: 8,
        env: EnvConfig::MicroKd {
            task: ProxyTaskSpec {
                samples: 240,
                epochs: 1,
                ..ProxyTaskSpec::default()
            },
            kd: KDConfig {
                teacher: TeacherSpec::Single {
                    net: TeacherNetSpec {
                        hidden: vec![16, 16],
                        epochs: 5,
                        ..TeacherNetSpec::default()
                    },
                },
                ..KDConfig::default()
            },
        },
        ..RunConfig::default()
    };
    let mut failures = Vec::new();
    for (name, cfg) in [("tabular", &tabular), ("micro", &micro)] {
        let (a, _) = run(cfg, 1);
        let (b, _) = run(cfg, 1);
        let (c, _) = run(cfg, 8);
        for file in [TRAJECTORY_FILE, POLICY_FILE, METRICS_FILE] {
            if read(a.path(), file) != read(b.path(), file) {
                failures.push(format!("{name} replay {file}"));
            }
            if read(a.path(), file) != read(c.path(), file) {
                failures.push(format!("{name} 1 vs 8 workers {file}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "replays and 1/8-worker runs byte-identical".to_string()
        } else {
            format!("differences: {}", failures.join(", "))
        },
    )
}

fn statistics_suite() -> Outcome {
    let space = SearchSpaceDef::default_space();
    let mut rng = seed::rng(110);
    let mut failures = Vec::new();

    for set in 0..100u64 {
        let n = rng.random_range(1..40);
        let recs: Vec<_> = (0..n)
            .map(|i| synthetic(&space, (set * 1000 + i) as usize, 0.5, 10.0))
            .collect();
        let p = operator_probability(&recs, &space).unwrap();
        if space.dims().iter().any(|d| {
            let sum: f64 = p.probability[d.offset..d.offset + d.cardinality]
                .iter()
                .sum();
            (sum - 1.0).abs() >= 1e-12
        }) {
            failures.push("normalization");
            break;
        }
        let half = recs.len() / 2;
        if half > 0 {
            let ab = family_divergence(&recs[..half], &recs[half..], &space).unwrap();
            let ba = family_divergence(&recs[half..], &recs[..half], &space).unwrap();
            if ab
                .difference
                .iter()
                .zip(&ba.difference)
                .any(|(x, y)| x + y != 0.0)
            {
                failures.push("antisymmetry");
                break;
            }
        }
    }

    for _ in 0..1000 {
        let k = rng.random_range(2..8);
        let mut draw = || {
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let m = distribution_divergence(&[draw(), draw()]).unwrap();
        if m[0][1] < -1e-15 || m[1][0] < -1e-15 {
            failures.push("gibbs");
            break;
        }
    }
    let m = distribution_divergence(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
    if (m[0][1] - 2f64.ln()).abs() >= 1e-12 {
        failures.push("ln 2");
    }

    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let dim = 10;
        let u = normals(&mut rng, dim, 1.0);
        let nu = dot(&u, &u).sqrt();
        let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
        let mut v = normals(&mut rng, dim, 1.0);
        let c = dot(&u, &v);
        v.iter_mut().zip(&u).for_each(|(x, y)| *x -= c * y);
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let (a, b) = (rng.random_range(-4.0..4.0), rng.random_range(-1.0..1.0));
                (0..dim).map(|j| 2.0 + a * u[j] + b * v[j]).collect()
            })
            .collect();
        let p = project_2d(&rows).unwrap();
        if (p.explained[0] + p.explained[1] - 1.0).abs() > 1e-9 || p.explained[0] < p.explained[1] {
            failures.push("explained variance");
            break;
        }
        for i in 0..rows.len() {
            for j in 0..i {
                let orig = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let (a, b) = (p.points[i], p.points[j]);
                let proj = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                worst = worst.max((orig - proj).abs());
            }
        }
    }
    if worst >= 1e-9 {
        failures.push("rank-2 exactness");
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("all properties hold (rank-2 distance error {worst:.1e})")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("reward formula", reward_formula),
        ("gradient integrity", gradient_integrity),
        ("controller learning", controller_learning),
        ("teacher separability", teacher_separability),
        ("kd benefit direction", kd_benefit),
        ("relative-gain pipeline", relative_gain_pipeline),
        ("pareto correctness", pareto_correctness),
        ("latency band", latency_band),
        ("reproducibility", reproducibility),
        ("statistics suite", statistics_suite),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|x| *x == id || name.contains(x.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {verdict} {name}: {} [{:.1}s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
