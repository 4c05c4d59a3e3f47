//! Quick invariant suite behind the `check` command.

use nalgebra::DMatrix;

use crate::finitesum::{subsampled_gradient, FiniteSum, QuadraticSum, SagaTable};
use crate::harness::fs::{run_finite_sum, FsConfig, FsMethod};
use crate::linalg::{fd_gradient_check, fd_hvp_check, solve_cg, solve_direct, Vector};
use crate::logreg::{generate_synthetic_classification, LogRegModel};
use crate::rng::RngStream;
use crate::slbfgs::LbfgsMemory;
use crate::solvers::{default_x0, run, Method, SolverConfig};
use crate::steplen::{backtrack, LineSearchConfig, Zeta};
use crate::synthetic::{ConvexRandomProblem, HessForm};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e}, tolerance {tol:.0e}"),
    }
}

fn randn(n: usize, rng: &mut RngStream) -> Vector {
    Vector::from_fn(n, |_, _| rng.standard_normal())
}

fn synthetic_derivatives() -> CheckResult {
    let mut worst: f64 = 0.0;
    for (seed, form) in [(1, HessForm::DenseSpd), (2, HessForm::HouseholderFactored)] {
        let mut rng = RngStream::new(seed, 0);
        let p = ConvexRandomProblem::generate(10, 100.0, 0.0, form, 1.0, &mut rng).unwrap();
        for _ in 0..20 {
            let x = randn(10, &mut rng);
            let v = randn(10, &mut rng);
            worst = worst.max(fd_gradient_check(|x| p.value(x), |x| p.gradient(x), &x, 1e-6));
            worst = worst.max(fd_hvp_check(
                |x| p.gradient(x),
                |x, v| p.hessian_vector(x, v),
                &x,
                &v,
                1e-6,
            ));
        }
    }
    result("synthetic gradient and Hessian vs finite differences", worst, 1e-4)
}

fn logistic_derivatives() -> CheckResult {
    let mut rng = RngStream::new(3, 0);
    let data = generate_synthetic_classification(30, 6, 1.0, &mut rng).unwrap();
    let m = LogRegModel::with_default_mu(data).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = randn(6, &mut rng);
        let v = randn(6, &mut rng);
        let i = rng.index(30);
        worst = worst.max(fd_gradient_check(|x| m.value(x), |x| m.gradient(x), &x, 1e-6));
        worst = worst.max(fd_hvp_check(|x| m.gradient(x), |x, v| m.hvp(x, v), &x, &v, 1e-6));
        worst = worst.max(fd_gradient_check(
            |x| m.component_value(i, x),
            |x| m.component_gradient(i, x),
            &x,
            1e-6,
        ));
    }
    result("logistic gradients and HVPs vs finite differences", worst, 1e-4)
}

fn batches_of_two(n: usize) -> Vec<Vec<usize>> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| vec![i, j])).collect()
}

fn unbiasedness() -> CheckResult {
    let mut rng = RngStream::new(4, 0);
    let q = QuadraticSum::random(6, 4, 1.0, &mut rng);
    let x = randn(4, &mut rng);
    let full = q.gradient(&x);
    let batches = batches_of_two(6);
    let mut table = SagaTable::initialize(&q, &randn(4, &mut rng)).unwrap();
    let mut sub = Vector::zeros(4);
    let mut saga = Vector::zeros(4);
    for b in &batches {
        sub += subsampled_gradient(&q, &x, b).unwrap();
        saga += table.estimate(&q, &x, b).unwrap();
    }
    let k = batches.len() as f64;
    let worst = ((sub / k) - &full).amax().max(((saga / k) - &full).amax());
    result("subsampled and SAGA gradients are unbiased", worst, 1e-12)
}

fn saga_integrity() -> CheckResult {
    let mut rng = RngStream::new(5, 0);
    let q = QuadraticSum::random(50, 3, 1.0, &mut rng);
    let mut table = SagaTable::initialize(&q, &randn(3, &mut rng)).unwrap();
    for _ in 0..1000 {
        let size = 1 + rng.index(5);
        let batch = rng.sample_indices(50, size);
        table.update(&q, &randn(3, &mut rng), &batch).unwrap();
    }
    let worst = (table.running_sum() - table.direct_sum()).amax();
    result("SAGA running sum matches recomputation", worst, 1e-10)
}

fn lbfgs() -> CheckResult {
    let mut rng = RngStream::new(6, 0);
    let n = 12;
    let m = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    let h = &m * m.transpose() + DMatrix::identity(n, n);
    let mut mem = LbfgsMemory::new(n, 6, 1).unwrap();
    for _ in 0..8 {
        let s = randn(n, &mut rng);
        let y = &h * &s;
        mem.push(s, y);
    }
    let dense = mem.materialize();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let v = randn(n, &mut rng);
        worst = worst.max((mem.apply_inverse_hessian(&v) - &dense * &v).amax());
    }
    let mut c = result("L-BFGS two-loop matches the dense update", worst, 1e-10);
    if !mem.verify_secant() {
        c.passed = false;
        c.detail.push_str("; secant equation failed");
    }
    c
}

fn cg_direct() -> CheckResult {
    let mut rng = RngStream::new(7, 0);
    let n = 40;
    let m = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    let a = &m * m.transpose() + DMatrix::identity(n, n);
    let b = randn(n, &mut rng);
    let direct = solve_direct(&a, &b).unwrap();
    let cg = solve_cg(&a, &b, 1e-12, 10 * n).unwrap();
    result(
        "CG agrees with the direct solve",
        (cg.solution - &direct).norm() / direct.norm(),
        1e-6,
    )
}

fn step_lower_bound() -> CheckResult {
    let mut rng = RngStream::new(8, 0);
    let mut violations = 0;
    for _ in 0..500 {
        let n = 2 + rng.index(5);
        let eig: Vec<f64> = (0..n).map(|_| 10f64.powf(2.0 * rng.uniform())).collect();
        let (mu, l) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
        let hess = DMatrix::from_diagonal(&Vector::from_vec(eig));
        let x = randn(n, &mut rng);
        let g = &hess * &x;
        let d = -solve_direct(&hess, &g).unwrap();
        let f = |y: &Vector| 0.5 * y.dot(&(&hess * y));
        let cfg = LineSearchConfig {
            zeta: Zeta::Zero,
            t_start: 1.0 + 4.0 * rng.uniform(),
            ..LineSearchConfig::default()
        };
        let bt = backtrack(|t| f(&(&x + t * &d)), f(&x), g.dot(&d), &cfg, 0.0);
        let bound = cfg.t_start.min(cfg.beta * (1.0 - cfg.eta) * mu * mu / (l * l));
        if !bt.accepted || bt.t < bound {
            violations += 1;
        }
    }
    result("accepted steps respect the lower bound", violations as f64, 0.0)
}

fn determinism() -> CheckResult {
    let mut rng = RngStream::new(9, 0);
    let p = ConvexRandomProblem::generate(10, 100.0, 0.1, HessForm::DenseSpd, 1.0, &mut rng).unwrap();
    let mut cfg = SolverConfig::new(Method::Lsos);
    cfg.stop.max_iters = 30;
    cfg.stream_id = 3;
    let x0 = default_x0(10, &mut RngStream::new(9, 1));
    let a = run(&p, &cfg, &x0).unwrap();
    let b = run(&p, &cfg, &x0).unwrap();
    let data = generate_synthetic_classification(100, 4, 1.0, &mut rng).unwrap();
    let m = LogRegModel::with_default_mu(data).unwrap();
    let mut fs = FsConfig::new(FsMethod::LsosBfgs);
    fs.max_epochs = 5;
    let c = run_finite_sum(&m, &fs, &Vector::zeros(4)).unwrap();
    let d = run_finite_sum(&m, &fs, &Vector::zeros(4)).unwrap();
    let same = a.final_x == b.final_x && c.final_x == d.final_x;
    CheckResult {
        name: "seeded runs repeat bitwise",
        passed: same,
        detail: String::new(),
    }
}

/// Runs every check; each takes well under a second.
pub fn run_checks() -> Vec<CheckResult> {
    vec![
        synthetic_derivatives(),
        logistic_derivatives(),
        unbiasedness(),
        saga_integrity(),
        lbfgs(),
        cg_direct(),
        step_lower_bound(),
        determinism(),
    ]
}
