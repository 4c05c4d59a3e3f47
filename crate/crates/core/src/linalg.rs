//! Newton-system solvers and derivative checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, LsosError, Result};

pub type Vector = DVector<f64>;

/// Largest system `solve_direct` will factor.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// CG recomputes the true residual this often to limit drift.
const CG_RESIDUAL_REFRESH: usize = 50;

/// A symmetric linear map, expected (but not required) to be positive definite.
pub trait SpdOperator {
    fn dim(&self) -> usize;

    fn apply(&self, v: &Vector) -> Vector;

    /// The explicit matrix, when one exists.
    fn dense(&self) -> Option<&DMatrix<f64>> {
        None
    }
}

impl SpdOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &Vector) -> Vector {
        self * v
    }

    fn dense(&self) -> Option<&DMatrix<f64>> {
        Some(self)
    }
}

/// Matrix-free operator from a closure.
pub struct FnOperator<F: Fn(&Vector) -> Vector> {
    n: usize,
    f: F,
}

impl<F: Fn(&Vector) -> Vector> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&Vector) -> Vector> SpdOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &Vector) -> Vector {
        (self.f)(v)
    }
}

/// Solves `B d = rhs` by Cholesky factorization.
pub fn solve_direct(b: &DMatrix<f64>, rhs: &Vector) -> Result<Vector> {
    let n = b.nrows();
    check_dim(n, b.ncols())?;
    check_dim(n, rhs.len())?;
    if n > DEFAULT_DENSE_CAP {
        return Err(LsosError::invalid(
            "dimension",
            format!("{n} exceeds dense cap {DEFAULT_DENSE_CAP}"),
        ));
    }
    let chol = nalgebra::Cholesky::new(b.clone())
        .ok_or_else(|| LsosError::NotPositiveDefinite("non-positive pivot in Cholesky".into()))?;
    let d = chol.solve(rhs);
    if d.iter().all(|v| v.is_finite()) {
        Ok(d)
    } else {
        Err(LsosError::NotPositiveDefinite("singular factor".into()))
    }
}

#[derive(Debug, Clone)]
pub struct CgReport {
    pub solution: Vector,
    /// `‖B d − rhs‖ / ‖rhs‖`, recomputed from the returned solution.
    pub rel_residual: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Conjugate gradients from `d₀ = 0`, stopping once
/// `‖B d − rhs‖ ≤ rel_tol·‖rhs‖` holds for the true residual or after
/// `max_iters` iterations. At least one iteration is taken for a nonzero
/// right-hand side, so `rel_tol = 1` still yields a nonzero direction.
pub fn solve_cg(op: &dyn SpdOperator, rhs: &Vector, rel_tol: f64, max_iters: usize) -> Result<CgReport> {
    check_dim(op.dim(), rhs.len())?;
    if !(rel_tol > 0.0 && rel_tol <= 1.0) {
        return Err(LsosError::invalid(
            "rel_tol",
            format!("must lie in (0, 1], got {rel_tol}"),
        ));
    }
    if max_iters == 0 {
        return Err(LsosError::invalid("max_iters", "must be at least 1"));
    }
    let n = rhs.len();
    let b_norm = rhs.norm();
    if b_norm == 0.0 {
        return Ok(CgReport {
            solution: Vector::zeros(n),
            rel_residual: 0.0,
            iters: 0,
            converged: true,
        });
    }
    let target = rel_tol * b_norm;
    let mut x = Vector::zeros(n);
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut iters = 0;
    let mut converged = false;

    while iters < max_iters {
        let q = op.apply(&p);
        let curvature = p.dot(&q);
        if !(curvature > 0.0) {
            return Err(LsosError::NotPositiveDefinite(format!(
                "pᵀBp = {curvature:e} at CG iteration {}",
                iters + 1
            )));
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p, 1.0);
        iters += 1;
        if iters % CG_RESIDUAL_REFRESH == 0 {
            r = rhs - op.apply(&x);
        } else {
            r.axpy(-alpha, &q, 1.0);
        }
        let mut rr_new = r.norm_squared();
        if rr_new.sqrt() <= target {
            let true_r = rhs - op.apply(&x);
            if true_r.norm() <= target {
                converged = true;
                break;
            }
            r = true_r;
            rr_new = r.norm_squared();
        }
        let beta = rr_new / rr;
        p = &r + beta * &p;
        rr = rr_new;
    }

    let rel_residual = (rhs - op.apply(&x)).norm() / b_norm;
    if !rel_residual.is_finite() {
        return Err(LsosError::NonFinite("conjugate gradients"));
    }
    Ok(CgReport {
        solution: x,
        rel_residual,
        iters,
        converged,
    })
}

/// Largest deviation between central differences of `f` and `grad(x)`,
/// relative to the largest gradient entry.
pub fn fd_gradient_check<F, G>(f: F, grad: G, x: &Vector, h: f64) -> f64
where
    F: Fn(&Vector) -> f64,
    G: Fn(&Vector) -> Vector,
{
    let g = grad(x);
    let mut fd = Vector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let plus = f(&probe);
        probe[i] = xi - h;
        let minus = f(&probe);
        probe[i] = xi;
        fd[i] = (plus - minus) / (2.0 * h);
    }
    relative_gap(&fd, &g)
}

/// Same check one order up: central differences of `grad` along `v`
/// against a Hessian-vector product.
pub fn fd_hvp_check<G, H>(grad: G, hvp: H, x: &Vector, v: &Vector, h: f64) -> f64
where
    G: Fn(&Vector) -> Vector,
    H: Fn(&Vector, &Vector) -> Vector,
{
    let plus = grad(&(x + h * v));
    let minus = grad(&(x - h * v));
    let fd = (plus - minus) / (2.0 * h);
    relative_gap(&fd, &hvp(x, v))
}

fn relative_gap(approx: &Vector, exact: &Vector) -> f64 {
    let scale = exact.amax().max(approx.amax()).max(f64::MIN_POSITIVE);
    (approx - exact).amax() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_spd(n: usize, rng: &mut RngStream) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
        &m * m.transpose() + DMatrix::identity(n, n) * (n as f64)
    }

    fn random_vec(n: usize, rng: &mut RngStream) -> Vector {
        Vector::from_fn(n, |_, _| rng.standard_normal())
    }

    #[test]
    fn direct_identity_and_diagonal() {
        let r = Vector::from_vec(vec![1.0, -2.0, 3.0]);
        let d = solve_direct(&DMatrix::identity(3, 3), &r).unwrap();
        assert_eq!(d, r);

        let b = DMatrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 4.0]));
        let d = solve_direct(&b, &Vector::from_vec(vec![1.0, 2.0, 4.0])).unwrap();
        for v in d.iter() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn direct_random_spd_residual() {
        let mut rng = RngStream::new(8, 0);
        let b = random_spd(8, &mut rng);
        let rhs = random_vec(8, &mut rng);
        let d = solve_direct(&b, &rhs).unwrap();
        assert!((&b * &d - &rhs).norm() / rhs.norm() <= 1e-10);
    }

    #[test]
    fn direct_rejects_indefinite() {
        let b = DMatrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            solve_direct(&b, &Vector::from_element(2, 1.0)),
            Err(LsosError::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn cg_identity_one_iteration() {
        let rhs = Vector::from_vec(vec![3.0, 1.0, -4.0, 1.0]);
        let rep = solve_cg(&DMatrix::<f64>::identity(4, 4), &rhs, 1e-12, 8).unwrap();
        assert_eq!(rep.iters, 1);
        assert!((rep.solution - rhs).norm() < 1e-14);
    }

    #[test]
    fn cg_terminates_by_distinct_eigenvalue_count() {
        // Oracle: an SPD matrix with exactly 3 distinct eigenvalues, solved directly.
        let mut rng = RngStream::new(20, 3);
        let n = 20;
        let q = DMatrix::from_fn(n, n, |_, _| rng.standard_normal()).qr().q();
        let eig = Vector::from_fn(n, |i, _| [1.0, 4.0, 9.0][i % 3]);
        let b = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        let b = (&b + b.transpose()) * 0.5;
        let rhs = random_vec(n, &mut rng);
        let rep = solve_cg(&b, &rhs, 1e-12, 2 * n).unwrap();
        assert!(rep.converged);
        assert!(rep.iters <= 3, "took {} iterations", rep.iters);
        let direct = solve_direct(&b, &rhs).unwrap();
        assert!((&rep.solution - &direct).norm() / direct.norm() < 1e-10);
    }

    #[test]
    fn cg_reported_residual_is_true_residual() {
        let mut rng = RngStream::new(5, 5);
        for n in [5, 30, 90] {
            let b = random_spd(n, &mut rng);
            let rhs = random_vec(n, &mut rng);
            for tol in [0.5, 1e-3, 1e-8] {
                let rep = solve_cg(&b, &rhs, tol, 2 * n).unwrap();
                let recomputed = (&b * &rep.solution - &rhs).norm() / rhs.norm();
                assert!((rep.rel_residual - recomputed).abs() <= 1e-12);
                assert!(rep.rel_residual <= tol);
            }
        }
    }

    #[test]
    fn cg_matches_direct_at_tight_tolerance() {
        let mut rng = RngStream::new(100, 1);
        let b = random_spd(100, &mut rng);
        let rhs = random_vec(100, &mut rng);
        let cg = solve_cg(&b, &rhs, 1e-10, 200).unwrap();
        let direct = solve_direct(&b, &rhs).unwrap();
        assert!((cg.solution - direct).amax() <= 1e-6);
    }

    #[test]
    fn cg_detects_negative_curvature() {
        let b = DMatrix::from_diagonal(&Vector::from_vec(vec![1.0, -3.0, 2.0]));
        let rhs = Vector::from_element(3, 1.0);
        assert!(matches!(
            solve_cg(&b, &rhs, 1e-8, 6),
            Err(LsosError::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn cg_unit_tolerance_still_moves() {
        let b = DMatrix::from_diagonal(&Vector::from_vec(vec![1.0, 10.0]));
        let rhs = Vector::from_vec(vec![1.0, 1.0]);
        let rep = solve_cg(&b, &rhs, 1.0, 4).unwrap();
        assert!(rep.iters >= 1);
        assert!(rep.solution.norm() > 0.0);
    }

    #[test]
    fn cg_zero_rhs() {
        let rep = solve_cg(&DMatrix::<f64>::identity(3, 3), &Vector::zeros(3), 1e-6, 3).unwrap();
        assert_eq!(rep.iters, 0);
        assert_eq!(rep.solution, Vector::zeros(3));
    }

    #[test]
    fn cg_is_deterministic() {
        let mut rng = RngStream::new(6, 0);
        let b = random_spd(40, &mut rng);
        let rhs = random_vec(40, &mut rng);
        let a = solve_cg(&b, &rhs, 1e-6, 80).unwrap();
        let c = solve_cg(&b, &rhs, 1e-6, 80).unwrap();
        assert_eq!(a.solution, c.solution);
    }

    #[test]
    fn fd_check_quadratic() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..10 {
            let x = random_vec(6, &mut rng);
            let err = fd_gradient_check(|z| 0.5 * z.norm_squared(), |z| z.clone(), &x, 1e-5);
            assert!(err <= 1e-9, "{err}");
        }
    }

    #[test]
    fn fd_check_flags_wrong_gradient() {
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let err = fd_gradient_check(|z| 0.5 * z.norm_squared(), |z| 2.0 * z, &x, 1e-5);
        assert!(err > 0.4);
    }
}
