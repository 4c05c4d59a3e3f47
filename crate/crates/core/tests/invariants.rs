use proptest::prelude::*;

use lsos::finitesum::{make_partition, FiniteSum, QuadraticSum, SagaTable};
use lsos::harness::config::{Config, KEYS};
use lsos::harness::{aggregate, AggregateMode};
use lsos::steplen::{backtrack, sufficient_decrease, LineSearchConfig, Zeta};
use lsos::trace::{Phase, RunTrace, StepDiagnostics, TraceRecord};
use lsos::{RngStream, Vector};

fn trace(id: String, errors: &[f64], dt: f64) -> RunTrace {
    let mut t = RunTrace::new(id, 11);
    for (k, &e) in errors.iter().enumerate() {
        t.push(TraceRecord {
            iter: k,
            wall_time_s: dt * (k + 1) as f64,
            f_hat: e,
            true_error: Some(e),
            grad_norm_hat: 0.0,
            step_len: 0.0,
            phase: Phase::LineSearch,
            diag: StepDiagnostics::default(),
        })
        .unwrap();
    }
    t
}

#[derive(Debug, Clone)]
enum Op {
    Estimate(Vec<usize>),
    Update(Vec<usize>),
}

fn op(n: usize) -> impl Strategy<Value = Op> {
    let batch = proptest::collection::btree_set(0..n, 1..=n).prop_map(|s| s.into_iter().collect::<Vec<_>>());
    (any::<bool>(), batch).prop_map(|(est, b)| if est { Op::Estimate(b) } else { Op::Update(b) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_cover_each_index_once(n in 1usize..300, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let n_b = 1 + ((n - 1) as f64 * frac) as usize;
        let mut rng = RngStream::new(seed, 0);
        let mut p = make_partition(n, n_b, &mut rng).unwrap();
        for _ in 0..2 {
            let mut seen = vec![0u32; n];
            let sizes: Vec<usize> = p.batches().iter().map(Vec::len).collect();
            for b in p.batches() {
                for &i in b {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            prop_assert_eq!(p.n_batches(), n_b);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            p.reshuffle(&mut rng);
        }
    }

    #[test]
    fn saga_running_sum_survives_any_interleaving(ops in proptest::collection::vec(op(12), 1..60), seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 1);
        let q = QuadraticSum::random(12, 3, 1.0, &mut rng);
        let start = Vector::from_fn(3, |_, _| rng.standard_normal());
        let mut table = SagaTable::initialize(&q, &start).unwrap();
        for op in &ops {
            let x = Vector::from_fn(3, |_, _| 4.0 * rng.standard_normal());
            match op {
                Op::Estimate(b) => {
                    let before = table.running_sum().clone();
                    let g = table.estimate(&q, &x, b).unwrap();
                    prop_assert!(g.iter().all(|v| v.is_finite()));
                    prop_assert_eq!(table.running_sum(), &before);
                }
                Op::Update(b) => {
                    table.update(&q, &x, b).unwrap();
                    for &i in b {
                        prop_assert!((table.slot(i) - q.component_gradient(i, &x)).amax() <= 1e-14);
                    }
                }
            }
            prop_assert!((table.running_sum() - table.direct_sum()).amax() <= 1e-10);
        }
    }

    #[test]
    fn backtrack_returns_first_acceptable_trial(
        a in 0.1f64..100.0,
        x in -10.0f64..10.0,
        eta in 1e-4f64..0.9,
        beta in 0.1f64..0.9,
        t_start in 1e-3f64..100.0,
        zeta_k in 0.0f64..1.0,
        max_backtracks in 1usize..80,
    ) {
        let f = |y: f64| 0.5 * a * y * y;
        let g = a * x;
        let d = -g;
        let cfg = LineSearchConfig { eta, beta, zeta: Zeta::Zero, t_start, max_backtracks, ..LineSearchConfig::default() };
        let bt = backtrack(|t| f(x + t * d), f(x), g * d, &cfg, zeta_k);
        let j = bt.n_trials - 1;
        prop_assert!(bt.n_trials <= max_backtracks + 1);
        prop_assert!((bt.t - t_start * beta.powi(j as i32)).abs() <= 1e-12 * t_start);
        prop_assert_eq!(bt.accepted, sufficient_decrease(f(x + bt.t * d), f(x), bt.t, g * d, eta, zeta_k));
        let mut t = t_start;
        for _ in 0..j {
            prop_assert!(!sufficient_decrease(f(x + t * d), f(x), t, g * d, eta, zeta_k));
            t *= beta;
        }
    }

    #[test]
    fn config_text_round_trips(
        picks in proptest::collection::btree_map(0..KEYS.len(), "[a-z0-9][a-z0-9.,:_-]{0,11}", 0..12),
        scoped in proptest::option::of("[0-9.]{1,6}"),
    ) {
        let mut cfg = Config::new();
        for (i, v) in &picks {
            cfg.set(KEYS[*i].key, v.clone()).unwrap();
        }
        if let Some(v) = &scoped {
            cfg.set("lsos.ls.eta", v.clone()).unwrap();
        }
        let back = Config::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(&back, &cfg);
        let resolved = cfg.resolved();
        prop_assert_eq!(Config::parse(&resolved.to_text()).unwrap(), resolved);
    }

    #[test]
    fn aggregation_ignores_run_order(
        runs in proptest::collection::vec((proptest::collection::vec(1e-6f64..1e3, 3..20), 0.01f64..1.0), 1..8),
        rotate in 0usize..8,
    ) {
        let traces: Vec<RunTrace> = runs.iter().enumerate().map(|(i, (e, dt))| trace(format!("r{i}"), e, *dt)).collect();
        let mut permuted = traces.clone();
        permuted.reverse();
        let len = permuted.len();
        permuted.rotate_left(rotate % len);
        for mode in [AggregateMode::ByIteration, AggregateMode::ByTimeBucket { buckets: 7 }] {
            let a = aggregate(&traces, mode).unwrap();
            let b = aggregate(&permuted, mode).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.runs, traces.len());
            for p in &a.points {
                prop_assert!(p.ci_half_width >= 0.0);
                prop_assert!(p.mean_error.is_finite());
            }
        }
        let shortest = runs.iter().map(|(e, _)| e.len()).min().unwrap();
        prop_assert_eq!(aggregate(&traces, AggregateMode::ByIteration).unwrap().points.len(), shortest);
    }
}
