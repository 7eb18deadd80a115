use akd_core::analysis::{
    centroid_separation, distribution_divergence, dominates, family_divergence,
    operator_probability, pareto_front, project_2d, relative_gain, select_top_k, winning_ratio,
    AnalysisError, CandidateRecord,
};
use akd_core::cost::RewardConfig;
use akd_core::seed;
use akd_core::space::SearchSpaceDef;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn record(
    space: &SearchSpaceDef,
    arch_seed: u64,
    acc: f64,
    lat: f64,
    generation: usize,
    idx: usize,
) -> CandidateRecord {
    let arch = space.random_sample(arch_seed);
    CandidateRecord {
        generation,
        candidate_index: idx,
        onehot: space.encode_onehot(&arch).bits,
        arch: arch.decisions,
        accuracy: acc,
        latency_ms: lat,
        mflops: 1.0,
        reward: acc,
        seed: arch_seed,
        run_seed: 0,
        objective: "kd".into(),
        teacher: "t".into(),
        diverged: false,
        reward_cfg: RewardConfig::default(),
        latency_intercept: 7.0,
        latency_coefficient: 6.935,
    }
}

fn random_records(rng: &mut impl Rng, n: usize, coarse: bool) -> Vec<CandidateRecord> {
    let space = SearchSpaceDef::default_space();
    (0..n)
        .map(|i| {
            let (acc, lat) = if coarse {
                (
                    rng.random_range(0..20) as f64 / 20.0,
                    rng.random_range(0..20) as f64,
                )
            } else {
                (rng.random_range(0.0..1.0), rng.random_range(8.0..40.0))
            };
            record(&space, i as u64, acc, lat, i / 16, i % 16)
        })
        .collect()
}

/// All-pairs dominance; among exact duplicates the earliest (generation, index) survives.
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

fn ids(front: &[CandidateRecord]) -> Vec<(usize, usize)> {
    front
        .iter()
        .map(|r| (r.generation, r.candidate_index))
        .collect()
}

#[test]
fn pareto_matches_all_pairs_oracle() {
    let mut rng = seed::rng(1);
    for coarse in [false, true] {
        for _ in 0..5 {
            let recs = random_records(&mut rng, 1000, coarse);
            let front = pareto_front(&recs).unwrap();
            assert_eq!(ids(&front), oracle_front(&recs));
            for a in &front {
                assert!(!front.iter().any(|b| dominates(b, a)));
            }
        }
    }
}

#[test]
fn pareto_hand_example() {
    let s = SearchSpaceDef::default_space();
    let recs = vec![
        record(&s, 0, 0.6, 10.0, 0, 0),
        record(&s, 1, 0.7, 12.0, 0, 1),
        record(&s, 2, 0.65, 13.0, 0, 2),
    ];
    assert_eq!(ids(&pareto_front(&recs).unwrap()), vec![(0, 0), (0, 1)]);
    assert_eq!(pareto_front(&[]), Err(AnalysisError::EmptyInput));
}

#[test]
fn operator_probability_segments_are_normalized() {
    let space = SearchSpaceDef::default_space();
    let mut rng = seed::rng(2);
    for set in 0..100u64 {
        let n = rng.random_range(1..50);
        let recs: Vec<_> = (0..n)
            .map(|i| record(&space, set * 1000 + i, 0.5, 10.0, 0, i as usize))
            .collect();
        let p = operator_probability(&recs, &space).unwrap();
        assert_eq!(p.probability.len(), 77);
        for d in space.dims() {
            let sum: f64 = p.probability[d.offset..d.offset + d.cardinality]
                .iter()
                .sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
    let one = record(&space, 5, 0.5, 10.0, 0, 0);
    let p = operator_probability(std::slice::from_ref(&one), &space).unwrap();
    let expected: Vec<f64> = one.onehot.iter().map(|&b| b as f64).collect();
    assert_eq!(p.probability, expected);
    assert!(p.std.iter().all(|&s| s == 0.0));
}

#[test]
fn family_divergence_is_antisymmetric() {
    let space = SearchSpaceDef::default_space();
    for set in 0..20u64 {
        let a: Vec<_> = (0..10)
            .map(|i| record(&space, set * 100 + i, 0.5, 10.0, 0, 0))
            .collect();
        let b: Vec<_> = (0..7)
            .map(|i| record(&space, set * 100 + 50 + i, 0.5, 10.0, 0, 0))
            .collect();
        let ab = family_divergence(&a, &b, &space).unwrap();
        let ba = family_divergence(&b, &a, &space).unwrap();
        for (x, y) in ab.difference.iter().zip(&ba.difference) {
            assert_eq!(*x, -*y);
        }
        let same = family_divergence(&a, &a, &space).unwrap();
        assert!(same.difference.iter().all(|&d| d == 0.0));
    }
}

#[test]
fn family_divergence_of_single_records_one_dimension_apart() {
    let space = SearchSpaceDef::default_space();
    let mut a = record(&space, 0, 0.5, 10.0, 0, 0);
    let mut b = a.clone();
    a.arch = vec![0; 35];
    b.arch = a.arch.clone();
    b.arch[0] = 1;
    a.onehot = space.encode_onehot(&space.decode(&a.arch).unwrap()).bits;
    b.onehot = space.encode_onehot(&space.decode(&b.arch).unwrap()).bits;
    let d = family_divergence(&[a], &[b], &space).unwrap();
    assert_eq!(d.difference[0], 1.0);
    assert_eq!(d.difference[1], -1.0);
    assert_eq!(d.difference.iter().filter(|&&v| v != 0.0).count(), 2);
    assert_eq!(&d.order[..2], &[0, 1]);
}

#[test]
fn relative_gain_properties() {
    assert!((relative_gain(66.5, 61.4, 63.9, 59.73) - 0.93).abs() < 1e-9);
    assert_eq!(relative_gain(1.0, 1.0, 1.0, 1.0), 0.0);
    let (a, b, c, d) = (70.1, 65.2, 68.0, 64.4);
    assert!((relative_gain(a, b, c, d) + relative_gain(c, d, a, b)).abs() < 1e-12);
}

#[test]
fn winning_ratio_examples() {
    let w = winning_ratio(&[(1.0, 0.0), (-1.0, 0.0), (2.0, 0.0)]).unwrap();
    assert!((w.ratio - 2.0 / 3.0).abs() < 1e-12);
    assert!((w.average_gain - 2.0 / 3.0).abs() < 1e-12);
    let tie = winning_ratio(&[(0.5, 0.5); 4]).unwrap();
    assert_eq!((tie.ratio, tie.average_gain), (0.0, 0.0));
    let mut pairs = vec![(1.0, 0.0); 18];
    pairs.extend([
        (0.0, 1.0),
        (0.0, 1.0),
        (f64::NAN, 0.0),
        (0.0, f64::INFINITY),
    ]);
    let w = winning_ratio(&pairs).unwrap();
    assert_eq!((w.wins, w.valid, w.excluded), (18, 20, 2));
    assert!((w.ratio - 0.9).abs() < 1e-12);
    assert_eq!(winning_ratio(&[]), Err(AnalysisError::EmptyInput));
}

#[test]
fn centroid_separation_matches_direct_summation() {
    let space = SearchSpaceDef::default_space();
    let mut rng = seed::rng(4);
    for set in 0..20u64 {
        let na = rng.random_range(2..30);
        let nb = rng.random_range(2..30);
        let a: Vec<Vec<u8>> = (0..na)
            .map(|i| space.encode_onehot(&space.random_sample(set * 97 + i)).bits)
            .collect();
        let b: Vec<Vec<u8>> = (0..nb)
            .map(|i| {
                space
                    .encode_onehot(&space.random_sample(set * 97 + 60 + i))
                    .bits
            })
            .collect();
        let centroid = |f: &[Vec<u8>]| -> Vec<f64> {
            let mut c = vec![0.0; 77];
            for v in f {
                for (x, &b) in c.iter_mut().zip(v) {
                    *x += b as f64;
                }
            }
            c.iter().map(|x| x / f.len() as f64).collect()
        };
        let dist = |x: &[f64], y: &[f64]| {
            x.iter()
                .zip(y)
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let intra = |f: &[Vec<u8>], c: &[f64]| {
            f.iter()
                .map(|v| dist(&v.iter().map(|&b| b as f64).collect::<Vec<_>>(), c))
                .sum::<f64>()
                / f.len() as f64
        };
        let (ca, cb) = (centroid(&a), centroid(&b));
        let s = centroid_separation(&a, &b).unwrap();
        assert!((s.inter - dist(&ca, &cb)).abs() < 1e-12);
        assert!((s.intra_a - intra(&a, &ca)).abs() < 1e-12);
        assert!((s.intra_b - intra(&b, &cb)).abs() < 1e-12);
        assert!((s.ratio - s.inter / ((s.intra_a + s.intra_b) / 2.0)).abs() < 1e-12);
    }
}

#[test]
fn centroid_separation_degenerate_cases() {
    let x = vec![1u8, 0, 0, 1];
    let y = vec![0u8, 1, 0, 1];
    let same = centroid_separation(&[x.clone(), y.clone()], &[x.clone(), y.clone()]).unwrap();
    assert_eq!((same.inter, same.ratio), (0.0, 0.0));
    let point = centroid_separation(&[x.clone(), x.clone()], &[y.clone(), y.clone()]).unwrap();
    assert!((point.inter - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(point.ratio, f64::INFINITY);
    assert!(matches!(
        centroid_separation(&[x.clone()], &[y.clone(), y]),
        Err(AnalysisError::TooFewMembers { .. })
    ));
}

#[test]
fn divergence_examples() {
    let m = distribution_divergence(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
    assert!((m[0][1] - 2f64.ln()).abs() < 1e-12);
    assert_eq!(m[0][0], 0.0);
    assert!(m[1][0] > m[0][1]);
    assert!(matches!(
        distribution_divergence(&[vec![0.6, 0.6]]),
        Err(AnalysisError::NotNormalized(0))
    ));
}

#[test]
fn divergence_is_non_negative() {
    let mut rng = seed::rng(6);
    for _ in 0..1000 {
        let k = rng.random_range(2..8);
        let mut draw = || {
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let m = distribution_divergence(&[draw(), draw()]).unwrap();
        assert!(m[0][1] >= -1e-15 && m[1][0] >= -1e-15);
    }
}

/// Points `m + a u + b v` for orthonormal `u`, `v` in `R^dim`.
fn rank_two(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut u: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter_mut().for_each(|x| *x /= nu);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(&u).for_each(|(x, y)| *x -= c * y);
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let m: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    (0..n)
        .map(|_| {
            let (a, b) = (rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0));
            (0..dim).map(|j| m[j] + a * u[j] + b * v[j]).collect()
        })
        .collect()
}

#[test]
fn projection_preserves_rank_two_geometry() {
    let mut rng = seed::rng(8);
    for _ in 0..10 {
        let rows = rank_two(&mut rng, 40, 12);
        let p = project_2d(&rows).unwrap();
        assert!((p.explained[0] + p.explained[1] - 1.0).abs() < 1e-9);
        assert!(p.explained[0] >= p.explained[1]);
        for i in 0..rows.len() {
            for j in 0..i {
                let orig: f64 = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let (a, b) = (p.points[i], p.points[j]);
                let proj = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                assert!((orig - proj).abs() < 1e-9);
            }
        }
        let again = project_2d(&p.points.iter().map(|q| q.to_vec()).collect::<Vec<_>>()).unwrap();
        for (x, y) in again.points.iter().zip(&p.points) {
            let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            assert!(
                d < 1e-9
                    || ((x[0].abs() - y[0].abs()).abs() < 1e-9
                        && (x[1].abs() - y[1].abs()).abs() < 1e-9)
            );
        }
    }
}

#[test]
fn projection_ignores_row_order() {
    let space = SearchSpaceDef::default_space();
    let rows: Vec<Vec<f64>> = (0..60)
        .map(|i| space.encode_onehot(&space.random_sample(i)).to_f64())
        .collect();
    let p = project_2d(&rows).unwrap();
    let mut perm: Vec<usize> = (0..rows.len()).collect();
    perm.shuffle(&mut seed::rng(3));
    let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
    let q = project_2d(&shuffled).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        for c in 0..2 {
            assert!((q.points[k][c] - p.points[i][c]).abs() < 1e-9);
        }
    }
    assert!(p.explained[0] >= p.explained[1]);
}

#[test]
fn projection_rejects_degenerate_input() {
    let same = vec![vec![1.0, 0.0, 1.0]; 5];
    assert!(matches!(
        project_2d(&same),
        Err(AnalysisError::DegenerateInput(_))
    ));
    assert!(matches!(
        project_2d(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
        Err(AnalysisError::TooFewMembers { .. })
    ));
}

#[test]
fn top_k_respects_window_and_reward_order() {
    let mut rng = seed::rng(10);
    let recs = random_records(&mut rng, 500, false);
    let top = select_top_k(&recs, (15.0, 25.0), 10);
    assert_eq!(top.len(), 10);
    assert!(top.iter().all(|r| (15.0..=25.0).contains(&r.latency_ms)));
    assert!(top.windows(2).all(|w| w[0].reward >= w[1].reward));
    let best_outside_top = recs
        .iter()
        .filter(|r| (15.0..=25.0).contains(&r.latency_ms))
        .filter(|r| !top.iter().any(|t| t.seed == r.seed))
        .map(|r| r.reward)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best_outside_top <= top.last().unwrap().reward);
}

proptest! {
    #[test]
    fn pareto_members_are_mutually_non_dominated(
        pts in prop::collection::vec((0.0f64..1.0, 5.0f64..50.0), 1..200)
    ) {
        let space = SearchSpaceDef::default_space();
        let recs: Vec<_> = pts
            .iter()
            .enumerate()
            .map(|(i, &(a, l))| record(&space, i as u64, a, l, i, 0))
            .collect();
        let front = pareto_front(&recs).unwrap();
        prop_assert_eq!(ids(&front), oracle_front(&recs));
        prop_assert!(front.windows(2).all(|w| w[0].latency_ms <= w[1].latency_ms));
    }

    #[test]
    fn kl_obeys_gibbs(p in prop::collection::vec(0.0f64..1.0, 2..6), q in prop::collection::vec(0.01f64..1.0, 6)) {
        let norm = |v: &[f64]| {
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        prop_assume!(p.iter().sum::<f64>() > 0.0);
        let p = norm(&p);
        let q = norm(&q[..p.len()]);
        let m = distribution_divergence(&[p, q]).unwrap();
        prop_assert!(m[0][1] >= -1e-15 && m[1][0] >= -1e-15);
    }

    #[test]
    fn relative_gain_is_antisymmetric(a in -100.0f64..100.0, b in -100.0f64..100.0, c in -100.0f64..100.0, d in -100.0f64..100.0) {
        prop_assert!((relative_gain(a, b, c, d) + relative_gain(c, d, a, b)).abs() < 1e-9);
    }
}
