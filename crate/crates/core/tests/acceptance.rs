//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;

use lsos::finitesum::{subsampled_gradient, FiniteSum, QuadraticSum, SagaTable};
use lsos::harness::experiment::{execute, run_experiment, ExperimentSpec, SolverKind};
use lsos::harness::FsMethod;
use lsos::linalg::{fd_gradient_check, fd_hvp_check, solve_cg, solve_direct};
use lsos::logreg::{generate_synthetic_classification, LogRegModel};
use lsos::slbfgs::LbfgsMemory;
use lsos::solvers::{default_x0, run_lsos, Method, SolverConfig, StopRule};
use lsos::steplen::{backtrack, LineSearchConfig, SwitchRule, Zeta};
use lsos::synthetic::{ConvexRandomProblem, HessForm};
use lsos::trace::RunTrace;
use lsos::{RngStream, Vector};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn randn(n: usize, rng: &mut RngStream) -> Vector {
    Vector::from_fn(n, |_, _| rng.standard_normal())
}

fn random_spd(n: usize, lo: f64, hi: f64, rng: &mut RngStream) -> DMatrix<f64> {
    let q = DMatrix::from_fn(n, n, |_, _| rng.standard_normal()).qr().q();
    let eig = Vector::from_fn(n, |i, _| {
        if n == 1 {
            lo
        } else {
            lo * (hi / lo).powf(i as f64 / (n - 1) as f64)
        }
    });
    let a = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&a + a.transpose()) * 0.5
}

fn logistic(n_samples: usize, n_features: usize, seed: u64) -> LogRegModel {
    let mut rng = RngStream::new(seed, 0);
    let data = generate_synthetic_classification(n_samples, n_features, 1.0, &mut rng).unwrap();
    LogRegModel::with_default_mu(data).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn final_errors(runs: &[RunTrace]) -> Vec<f64> {
    runs.iter()
        .map(|t| t.final_error().expect("true error known"))
        .collect()
}

fn newton_sanity() -> Outcome {
    let mut worst_g: f64 = 0.0;
    let mut worst_x: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    let mut iters = 0;
    for seed in 0..5 {
        let mut rng = RngStream::new(100 + seed, 0);
        let p = ConvexRandomProblem::generate(50, 100.0, 0.0, HessForm::DenseSpd, 1.0, &mut rng).unwrap();
        let x_star = p.exact_solution(1e-10).unwrap().x_star;
        let mut cfg = SolverConfig::new(Method::Lsos);
        cfg.ls.switch_rule = SwitchRule::StepOnly;
        cfg.stop = StopRule {
            max_iters: 50,
            grad_tol: Some(1e-8),
            ..StopRule::default()
        };
        let x0 = default_x0(50, &mut RngStream::new(100 + seed, 1));
        let started = Instant::now();
        let tr = run_lsos(&p, &cfg, &x0).unwrap();
        worst_t = worst_t.max(started.elapsed().as_secs_f64());
        let x = Vector::from_vec(tr.final_x.clone().unwrap());
        worst_g = worst_g.max(p.gradient(&x).norm());
        worst_x = worst_x.max((x - &x_star).norm());
        iters = iters.max(tr.last().unwrap().iter);
    }
    check(
        worst_g <= 1e-8 && worst_x <= 1e-6 && worst_t < 1.0 && iters <= 50,
        format!(
            "5 problems: max |g| {worst_g:.2e}, max |x - x*| {worst_x:.2e}, max iters {iters}, max time {worst_t:.3}s"
        ),
    )
}

fn unbiasedness() -> Outcome {
    let batches: Vec<Vec<usize>> = (0..6).flat_map(|i| (i + 1..6).map(move |j| vec![i, j])).collect();
    let mut worst: f64 = 0.0;
    let mut rng = RngStream::new(200, 0);
    let problems: Vec<Box<dyn FiniteSum>> = vec![
        Box::new(QuadraticSum::random(6, 5, 1.0, &mut rng)),
        Box::new(logistic(6, 5, 201)),
    ];
    for p in &problems {
        for _ in 0..5 {
            let x = randn(5, &mut rng);
            let full = p.gradient(&x);
            let mut table = SagaTable::initialize(p.as_ref(), &randn(5, &mut rng)).unwrap();
            let mut sub = Vector::zeros(5);
            let mut saga = Vector::zeros(5);
            for b in &batches {
                sub += subsampled_gradient(p.as_ref(), &x, b).unwrap();
                saga += table.estimate(p.as_ref(), &x, b).unwrap();
            }
            let k = batches.len() as f64;
            worst = worst.max((sub / k - &full).amax()).max((saga / k - &full).amax());
        }
    }
    check(
        batches.len() == 15 && worst <= 1e-12,
        format!("{} batches, max deviation {worst:.2e}", batches.len()),
    )
}

fn saga_integrity() -> Outcome {
    let m = logistic(50, 8, 300);
    let mut rng = RngStream::new(301, 0);
    let mut table = SagaTable::initialize(&m, &randn(8, &mut rng)).unwrap();
    for _ in 0..1000 {
        let size = 1 + rng.index(10);
        let batch = rng.sample_indices(50, size);
        table.update(&m, &(3.0 * randn(8, &mut rng)), &batch).unwrap();
    }
    let direct: Vector = (0..50).map(|i| table.slot(i)).fold(Vector::zeros(8), |a, s| a + s);
    let gap = (table.running_sum() - &direct).amax();
    check(gap <= 1e-10, format!("1000 updates, |running - direct| {gap:.2e}"))
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`, oldest pair first.
fn dense_inverse(pairs: &[(Vector, Vector)], n: usize) -> DMatrix<f64> {
    let eye = DMatrix::<f64>::identity(n, n);
    let (s, y) = pairs.last().unwrap();
    let mut h = &eye * (s.dot(y) / y.norm_squared());
    for (s, y) in pairs {
        let rho = 1.0 / s.dot(y);
        h = (&eye - rho * s * y.transpose()) * h * (&eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    h
}

fn lbfgs() -> Outcome {
    let (n, m) = (20, 10);
    let mut rng = RngStream::new(400, 0);
    let mut worst_apply: f64 = 0.0;
    let mut worst_secant: f64 = 0.0;
    let mut non_positive = 0;
    for _ in 0..10 {
        let b = random_spd(n, 0.1, 100.0, &mut rng);
        let mut mem = LbfgsMemory::new(n, m, 5).unwrap();
        let mut kept: Vec<(Vector, Vector)> = Vec::new();
        for _ in 0..14 {
            let s = randn(n, &mut rng);
            let y = &b * &s;
            assert!(mem.push(s.clone(), y.clone()));
            kept.push((s, y));
        }
        let kept = &kept[kept.len() - m..];
        let h = dense_inverse(kept, n);
        for _ in 0..10 {
            let v = randn(n, &mut rng);
            let hv = &h * &v;
            worst_apply = worst_apply.max((mem.apply_inverse_hessian(&v) - &hv).norm() / hv.norm());
        }
        let (s, y) = kept.last().unwrap();
        worst_secant = worst_secant.max((mem.apply_inverse_hessian(y) - s).norm() / s.norm());
        for _ in 0..100 {
            let v = randn(n, &mut rng);
            let q = v.dot(&mem.apply_inverse_hessian(&v));
            if q.is_nan() || q <= 0.0 {
                non_positive += 1;
            }
        }
    }
    check(
        worst_apply <= 1e-10 && worst_secant <= 1e-8 && non_positive == 0,
        format!("apply gap {worst_apply:.2e}, secant gap {worst_secant:.2e}, non-positive probes {non_positive}/1000"),
    )
}

fn cg_contract() -> Outcome {
    let mut certified = 0;
    let mut violations = 0;
    let mut fallbacks = 0;
    for seed in 0..5 {
        let mut rng = RngStream::new(500 + seed, 0);
        let p = ConvexRandomProblem::generate(300, 1000.0, 1.0, HessForm::HouseholderFactored, 1.0, &mut rng).unwrap();
        let mut cfg = SolverConfig::new(Method::LsosInexact);
        cfg.stop.max_iters = 80;
        cfg.stream_id = seed;
        let tr = run_lsos(&p, &cfg, &default_x0(300, &mut RngStream::new(500 + seed, 1))).unwrap();
        for r in tr.records().iter().skip(1) {
            if r.diag.fallback {
                fallbacks += 1;
                continue;
            }
            let k = r.iter - 1;
            let bound = 0.95f64.powi(k as i32).max(1e-6);
            let achieved = r.diag.residual_ratio.unwrap_or(f64::INFINITY);
            if achieved > bound * (1.0 + 1e-12) {
                violations += 1;
            }
            certified += 1;
        }
    }
    let mut rng = RngStream::new(510, 0);
    let mut worst: f64 = 0.0;
    for n in [10, 50, 100] {
        let a = random_spd(n, 1.0, 1e3, &mut rng);
        let b = randn(n, &mut rng);
        let direct = solve_direct(&a, &b).unwrap();
        let cg = solve_cg(&a, &b, 1e-12, 20 * n).unwrap();
        worst = worst.max((cg.solution - &direct).norm() / direct.norm());
    }
    check(
        violations == 0 && certified > 0 && worst <= 1e-6,
        format!("{certified} certified directions, {violations} violations, {fallbacks} fallbacks; CG vs direct {worst:.2e}"),
    )
}

fn step_lower_bound() -> Outcome {
    let mut rng = RngStream::new(600, 0);
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for i in 0..10_000 {
        let n = 2 + rng.index(9);
        let mu = 10f64.powf(-2.0 + 2.0 * rng.uniform());
        let l = mu * 10f64.powf(3.0 * rng.uniform()).max(1.0 + 1e-9);
        let a = random_spd(n, mu, l, &mut rng);
        let x_min = randn(n, &mut rng);
        let f = |x: &Vector| {
            let r = x - &x_min;
            0.5 * r.dot(&(&a * &r))
        };
        let x = &x_min + 10.0 * randn(n, &mut rng);
        let g = &a * (&x - &x_min);
        // Half the instances use the exact Hessian, half a different SPD matrix with the same spectral bounds.
        let b = if i % 2 == 0 {
            a.clone()
        } else {
            random_spd(n, mu, l, &mut rng)
        };
        let d = -solve_direct(&b, &g).unwrap();
        let cfg = LineSearchConfig {
            eta: 0.9 * rng.uniform().max(1e-4),
            beta: 0.1 + 0.8 * rng.uniform(),
            zeta: Zeta::Zero,
            t_start: 10f64.powf(3.0 * rng.uniform()),
            max_backtracks: 200,
            ..LineSearchConfig::default()
        };
        let f0 = f(&x);
        let bt = backtrack(|t| f(&(&x + t * &d)), f0, g.dot(&d), &cfg, 0.0);
        let bound = cfg.t_start.min(cfg.beta * (1.0 - cfg.eta) * mu * mu / (l * l));
        if !bt.accepted || bt.t < bound {
            violations += 1;
        }
        min_ratio = min_ratio.min(bt.t / bound);
    }
    check(
        violations == 0,
        format!("10000 instances, {violations} violations, min t / bound {min_ratio:.3}"),
    )
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (sxy / sxx, sxy * sxy / (sxx * syy))
}

fn q_linear_trend() -> Outcome {
    let started = Instant::now();
    let spec = ExperimentSpec::parse(
        "experiment.solvers = lsos-fs
experiment.reps = 20
experiment.seed = 7
problem.kind = logistic
problem.samples = 2000
problem.features = 50
fs.zeta = zero
fs.estimator = saga
solver.delta = mu-over-2l
budget.epochs = 1000
budget.fs_max_iters = 300
",
    )
    .unwrap();
    let out = execute(&spec).unwrap();
    let runs = out.traces_of(SolverKind::FiniteSum(FsMethod::LsosFs)).unwrap();
    let mut ks = Vec::new();
    let mut ys = Vec::new();
    let mut non_positive = 0;
    for k in 50..=300 {
        let logs: Vec<f64> = runs
            .iter()
            .map(|t| t.records()[k].true_error.unwrap())
            .filter(|e| {
                let ok = *e > 0.0;
                non_positive += usize::from(!ok);
                ok
            })
            .map(f64::ln)
            .collect();
        ks.push(k as f64);
        ys.push(mean(&logs));
    }
    let (slope, r2) = linear_fit(&ks, &ys);
    let secs = started.elapsed().as_secs_f64();
    check(
        slope < 0.0 && r2 >= 0.9 && secs < 60.0,
        format!("slope {slope:.4}, R^2 {r2:.3}, {non_positive} non-positive errors dropped, {secs:.1}s"),
    )
}

fn noisy_solver_ranking() -> Outcome {
    let started = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for kappa in ["100", "1000"] {
        let spec = ExperimentSpec::preset("fig1-small")
            .unwrap()
            .with("problem.kappa", kappa)
            .unwrap()
            .with("experiment.reps", "20")
            .unwrap();
        let out = execute(&spec).unwrap();
        let e = |m| mean(&final_errors(out.traces_of(SolverKind::Stochastic(m)).unwrap()));
        let (lsos, sos, sgd) = (e(Method::Lsos), e(Method::Sos), e(Method::Sgd));
        ok &= lsos <= sos && lsos <= sgd;
        parts.push(format!("kappa {kappa}: LSOS {lsos:.3e}, SOS {sos:.3e}, SGD {sgd:.3e}"));
    }
    let secs = started.elapsed().as_secs_f64();
    check(ok && secs < 120.0, format!("{}; {secs:.1}s", parts.join("; ")))
}

fn inexact_cg_cost() -> Outcome {
    let spec = ExperimentSpec::preset("fig2-small")
        .unwrap()
        .with("experiment.solvers", "lsos,lsos-i")
        .unwrap()
        .with("budget.error_target", "1e-2")
        .unwrap()
        .with("budget.max_iters", "400")
        .unwrap();
    let out = execute(&spec).unwrap();
    let cost = |m| -> (usize, usize) {
        let runs = out.traces_of(SolverKind::Stochastic(m)).unwrap();
        let reached = runs.iter().filter(|t| t.final_error().unwrap() <= 1e-2).count();
        (runs.iter().map(RunTrace::total_cg_iters).sum(), reached)
    };
    let (exact, exact_reached) = cost(Method::Lsos);
    let (inexact, inexact_reached) = cost(Method::LsosInexact);
    let ratio = inexact as f64 / exact as f64;
    check(
        ratio <= 0.7 && exact_reached == 20 && inexact_reached == 20,
        format!(
            "CG iterations LSOS-I {inexact} vs LSOS {exact} (ratio {ratio:.3}); runs at target {inexact_reached}/20 and {exact_reached}/20"
        ),
    )
}

fn bfgs_vs_saga() -> Outcome {
    let spec = ExperimentSpec::preset("fig3-synthetic")
        .unwrap()
        .with("experiment.reps", "20")
        .unwrap();
    let out = execute(&spec).unwrap();
    let e = |m| mean(&final_errors(out.traces_of(SolverKind::FiniteSum(m)).unwrap()));
    let (bfgs, saga) = (e(FsMethod::LsosBfgs), e(FsMethod::SagaLs));
    let picks: Vec<String> = out
        .grid
        .iter()
        .map(|(k, g)| format!("{} t_ini {}", k.name(), g.best))
        .collect();
    check(
        bfgs < saga,
        format!(
            "20 epochs: LSOS-BFGS {bfgs:.3e} vs SAGA-LS {saga:.3e} ({})",
            picks.join(", ")
        ),
    )
}

/// Trace file contents without the `time_s` column.
fn iterate_columns(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(2);
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn manifest_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let specs = [
        "experiment.solvers = lsos,lsos-i,sgd-ls
experiment.reps = 4
problem.n = 30
problem.hess_form = householder
budget.max_iters = 40
grid.solvers = lsos
grid.candidates = 1,0.5
",
        "experiment.solvers = lsos-bfgs,saga-ls,lsos-fs
experiment.reps = 3
problem.kind = logistic
problem.samples = 300
problem.features = 10
budget.epochs = 4
grid.solvers = saga-ls
",
    ];
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (i, text) in specs.iter().enumerate() {
        let first = root.path().join(format!("a{i}"));
        let second = root.path().join(format!("b{i}"));
        let spec = ExperimentSpec::parse(text)
            .unwrap()
            .with("experiment.out", first.display().to_string())
            .unwrap();
        let out = run_experiment(&spec).unwrap();
        let rerun = ExperimentSpec::from_file(&first.join("manifest.txt"))
            .unwrap()
            .with("experiment.out", second.display().to_string())
            .unwrap();
        run_experiment(&rerun).unwrap();
        for path in out
            .files
            .iter()
            .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("trace_"))
        {
            let other = second.join(path.file_name().unwrap());
            compared += 1;
            if iterate_columns(path) != iterate_columns(&other) {
                mismatched.push(path.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
    }
    check(
        mismatched.is_empty() && compared == 3 * 4 + 3 * 3,
        format!("{compared} trace files compared, mismatched: {mismatched:?}"),
    )
}

fn derivative_checks() -> Outcome {
    let mut rng = RngStream::new(1200, 0);
    let mut lines = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, worst: f64| {
        ok &= worst <= 1e-4;
        lines.push(format!("{name} {worst:.1e}"));
    };
    for (form, name) in [
        (HessForm::DenseSpd, "dense"),
        (HessForm::HouseholderFactored, "factored"),
    ] {
        let p = ConvexRandomProblem::generate(20, 100.0, 0.0, form, 1.0, &mut rng).unwrap();
        let (mut wg, mut wh): (f64, f64) = (0.0, 0.0);
        for _ in 0..100 {
            let x = randn(20, &mut rng);
            let v = randn(20, &mut rng);
            wg = wg.max(fd_gradient_check(|x| p.value(x), |x| p.gradient(x), &x, 1e-6));
            wh = wh.max(fd_hvp_check(
                |x| p.gradient(x),
                |x, v| p.hessian_vector(x, v),
                &x,
                &v,
                1e-6,
            ));
        }
        record(&format!("synthetic {name} grad"), wg);
        record(&format!("synthetic {name} hvp"), wh);
    }
    let m = logistic(200, 10, 1201);
    let q = QuadraticSum::random(20, 10, 1.0, &mut rng);
    let sums: [(&str, &dyn FiniteSum); 2] = [("logistic", &m), ("quadratic-sum", &q)];
    for (name, p) in sums {
        let (mut wg, mut wh, mut cg, mut ch): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..100 {
            let x = 2.0 * randn(10, &mut rng);
            let v = randn(10, &mut rng);
            let i = rng.index(p.n_components());
            wg = wg.max(fd_gradient_check(|x| p.value(x), |x| p.gradient(x), &x, 1e-6));
            wh = wh.max(fd_hvp_check(|x| p.gradient(x), |x, v| p.hvp(x, v), &x, &v, 1e-6));
            cg = cg.max(fd_gradient_check(
                |x| p.component_value(i, x),
                |x| p.component_gradient(i, x),
                &x,
                1e-6,
            ));
            ch = ch.max(fd_hvp_check(
                |x| p.component_gradient(i, x),
                |x, v| p.component_hvp(i, x, v),
                &x,
                &v,
                1e-6,
            ));
        }
        record(&format!("{name} grad"), wg);
        record(&format!("{name} hvp"), wh);
        record(&format!("{name} component grad"), cg);
        record(&format!("{name} component hvp"), ch);
    }
    check(
        ok,
        format!("100 points each; worst relative gaps: {}", lines.join(", ")),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("deterministic Newton sanity", newton_sanity),
        ("estimator unbiasedness (exhaustive)", unbiasedness),
        ("SAGA table integrity", saga_integrity),
        ("L-BFGS correctness", lbfgs),
        ("CG contract", cg_contract),
        ("step-length lower bound", step_lower_bound),
        ("Q-linear trend of LSOS-FS", q_linear_trend),
        ("LSOS ahead of SOS and SGD", noisy_solver_ranking),
        ("inexact CG saves work", inexact_cg_cost),
        ("LSOS-BFGS beats SAGA-LS", bfgs_vs_saga),
        ("determinism from manifest", manifest_determinism),
        ("derivative checks", derivative_checks),
    ];
    let filter: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if filter.is_some_and(|n| n != i + 1) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2}. {name} [{secs:.1}s]: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2}. {name} [{secs:.1}s]: {d}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
