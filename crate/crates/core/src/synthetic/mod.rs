//! Noisy strongly convex test problems
//!
//! `φ(x) = Σᵢ λᵢ (e^{xᵢ} − xᵢ) + (x − e)ᵀ A (x − e)`
//!
//! with `λ` log-spaced in `[1, κ]`, `A` SPD with eigenvalues `λ`, and `e` the
//! all-ones vector. Noise is additive Gaussian with standard deviation `σ` on
//! the value, on each gradient entry and on the Hessian diagonal.

mod householder;
mod quadratic;

use std::sync::Mutex;

use nalgebra::DMatrix;

pub use householder::HouseholderOperator;
pub use quadratic::NoisyQuadratic;

use crate::error::{check_dim, LsosError, Result};
use crate::linalg::{solve_cg, solve_direct, SpdOperator, Vector};
use crate::oracle::{EvalCounts, NoisyOracle, OracleSample, Want};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HessForm {
    DenseSpd,
    HouseholderFactored,
}

impl HessForm {
    pub fn as_str(self) -> &'static str {
        match self {
            HessForm::DenseSpd => "dense",
            HessForm::HouseholderFactored => "householder",
        }
    }
}

#[derive(Debug, Clone)]
pub enum QuadraticTerm {
    Dense(DMatrix<f64>),
    Factored(HouseholderOperator),
}

impl QuadraticTerm {
    pub fn apply(&self, v: &Vector) -> Vector {
        match self {
            QuadraticTerm::Dense(a) => a * v,
            QuadraticTerm::Factored(op) => op.apply(v),
        }
    }

    pub fn materialize(&self) -> DMatrix<f64> {
        match self {
            QuadraticTerm::Dense(a) => a.clone(),
            QuadraticTerm::Factored(op) => op.materialize(),
        }
    }
}

/// `diag(c) + 2A` for the factored form.
struct DiagPlusTwiceA<'a> {
    diag: Vector,
    a: &'a HouseholderOperator,
}

impl SpdOperator for DiagPlusTwiceA<'_> {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, v: &Vector) -> Vector {
        let mut out = 2.0 * self.a.apply(v);
        out += self.diag.component_mul(v);
        out
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x_star: Vector,
    pub f_star: f64,
    pub tol: f64,
}

#[derive(Debug)]
pub struct ConvexRandomProblem {
    kappa: f64,
    lambdas: Vector,
    a: QuadraticTerm,
    sigma: f64,
    hess_form: HessForm,
    density: f64,
    achieved_density: f64,
    seed: u64,
    solution: Mutex<Option<Solution>>,
}

/// `n` values log-spaced between 1 and `kappa`, endpoints exact.
pub fn log_spaced(n: usize, kappa: f64) -> Vector {
    if n == 1 {
        return Vector::from_element(1, 1.0);
    }
    let ln_k = kappa.ln();
    Vector::from_fn(n, |i, _| match i {
        0 => 1.0,
        i if i == n - 1 => kappa,
        i => (ln_k * i as f64 / (n - 1) as f64).exp(),
    })
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
fn random_orthogonal(n: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    g.qr().q()
}

fn density_of(a: &DMatrix<f64>) -> f64 {
    let nnz = a.iter().filter(|v| **v != 0.0).count();
    nnz as f64 / (a.nrows() * a.ncols()) as f64
}

/// Zeroes the smallest off-diagonal entries symmetrically until roughly
/// `density` of the entries remain. Returns `None` if the result is not SPD.
fn sparsify(a: &DMatrix<f64>, density: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let keep_total = (density * (n * n) as f64).round() as usize;
    let keep_off_pairs = keep_total.saturating_sub(n) / 2;
    let mut off: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (a[(i, j)].abs(), i, j))
        .collect();
    off.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut out = DMatrix::from_diagonal(&a.diagonal());
    for &(_, i, j) in off.iter().take(keep_off_pairs) {
        out[(i, j)] = a[(i, j)];
        out[(j, i)] = a[(j, i)];
    }
    nalgebra::Cholesky::new(out.clone()).map(|_| out)
}

impl ConvexRandomProblem {
    /// Builds a problem with `n` variables and target condition number `kappa`.
    ///
    /// `density` only affects the dense form: values below 1 request symmetric
    /// thresholding of `A`, which is kept only when `A` stays SPD (the achieved
    /// density is reported by [`Self::achieved_density`]).
    pub fn generate(
        n: usize,
        kappa: f64,
        sigma: f64,
        hess_form: HessForm,
        density: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if n < 1 {
            return Err(LsosError::invalid("n", "must be at least 1"));
        }
        if !(kappa > 1.0) || !kappa.is_finite() {
            return Err(LsosError::invalid("kappa", format!("must exceed 1, got {kappa}")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(LsosError::invalid(
                "sigma",
                format!("must be non-negative, got {sigma}"),
            ));
        }
        if !(density > 0.0 && density <= 1.0) {
            return Err(LsosError::invalid(
                "density",
                format!("must lie in (0, 1], got {density}"),
            ));
        }
        let lambdas = log_spaced(n, kappa);
        let (a, achieved_density) = match hess_form {
            HessForm::DenseSpd => {
                let q = random_orthogonal(n, rng);
                let a = &q * DMatrix::from_diagonal(&lambdas) * q.transpose();
                let a = (&a + a.transpose()) * 0.5;
                let a = if density < 1.0 {
                    sparsify(&a, density).unwrap_or(a)
                } else {
                    a
                };
                let d = density_of(&a);
                (QuadraticTerm::Dense(a), d)
            }
            HessForm::HouseholderFactored => {
                let op = HouseholderOperator::random(lambdas.clone(), rng)?;
                (QuadraticTerm::Factored(op), 1.0)
            }
        };
        Ok(Self {
            kappa,
            lambdas,
            a,
            sigma,
            hess_form,
            density,
            achieved_density,
            seed: rng.seed(),
            solution: Mutex::new(None),
        })
    }

    /// A problem with explicitly given coefficients and dense `A`.
    pub fn from_parts(lambdas: Vector, a: DMatrix<f64>, sigma: f64) -> Result<Self> {
        let n = lambdas.len();
        check_dim(n, a.nrows())?;
        check_dim(n, a.ncols())?;
        if lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(LsosError::invalid("lambdas", "must be positive"));
        }
        let kappa = lambdas.max() / lambdas.min();
        let achieved_density = density_of(&a);
        Ok(Self {
            kappa,
            lambdas,
            a: QuadraticTerm::Dense(a),
            sigma,
            hess_form: HessForm::DenseSpd,
            density: 1.0,
            achieved_density,
            seed: 0,
            solution: Mutex::new(None),
        })
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambdas(&self) -> &Vector {
        &self.lambdas
    }

    pub fn quadratic_term(&self) -> &QuadraticTerm {
        &self.a
    }

    pub fn hess_form(&self) -> HessForm {
        self.hess_form
    }

    pub fn achieved_density(&self) -> f64 {
        self.achieved_density
    }

    /// The same problem with a different noise level.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            kappa: self.kappa,
            lambdas: self.lambdas.clone(),
            a: self.a.clone(),
            sigma,
            hess_form: self.hess_form,
            density: self.density,
            achieved_density: self.achieved_density,
            seed: self.seed,
            solution: Mutex::new(self.solution.lock().unwrap().clone()),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let sep: f64 = x
            .iter()
            .zip(self.lambdas.iter())
            .map(|(xi, l)| l * (xi.exp() - xi))
            .sum();
        let shifted = x.add_scalar(-1.0);
        sep + shifted.dot(&self.a.apply(&shifted))
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let shifted = x.add_scalar(-1.0);
        let mut g = 2.0 * self.a.apply(&shifted);
        for i in 0..x.len() {
            g[i] += self.lambdas[i] * (x[i].exp() - 1.0);
        }
        g
    }

    /// Diagonal of the separable part of the Hessian, `λᵢ e^{xᵢ}`.
    fn separable_curvature(&self, x: &Vector) -> Vector {
        Vector::from_fn(x.len(), |i, _| self.lambdas[i] * x[i].exp())
    }

    pub fn hessian_vector(&self, x: &Vector, v: &Vector) -> Vector {
        let mut out = 2.0 * self.a.apply(v);
        out += self.separable_curvature(x).component_mul(v);
        out
    }

    /// Hessian operator with an extra diagonal shift (the sampled noise).
    fn hessian_operator(&self, x: &Vector, shift: Option<&Vector>) -> Box<dyn SpdOperator + '_> {
        let mut diag = self.separable_curvature(x);
        if let Some(s) = shift {
            diag += s;
        }
        match &self.a {
            QuadraticTerm::Dense(a) => {
                let mut h = 2.0 * a;
                for i in 0..diag.len() {
                    h[(i, i)] += diag[i];
                }
                Box::new(h)
            }
            QuadraticTerm::Factored(op) => Box::new(DiagPlusTwiceA { diag, a: op }),
        }
    }

    pub fn exact_hessian(&self, x: &Vector) -> Box<dyn SpdOperator + '_> {
        self.hessian_operator(x, None)
    }

    /// One noisy evaluation: each requested quantity gets fresh noise.
    pub fn noisy_eval(&self, x: &Vector, rng: &mut RngStream, want: Want) -> Result<OracleSample<'_>> {
        check_dim(self.n(), x.len())?;
        let mut counts = EvalCounts::default();
        let mut value = None;
        let mut value_noise = 0.0;
        if want.f {
            value_noise = rng.gaussian(0.0, self.sigma)?;
            value = Some(self.value(x) + value_noise);
            counts.f_evals += 1;
        }
        let gradient = if want.g {
            let mut g = self.gradient(x);
            if self.sigma > 0.0 {
                for gi in g.iter_mut() {
                    *gi += self.sigma * rng.standard_normal();
                }
            }
            counts.g_evals += 1;
            Some(g)
        } else {
            None
        };
        let hessian = if want.hessian {
            counts.hvp_evals += 1;
            if self.sigma > 0.0 {
                let shift = Vector::from_fn(self.n(), |_, _| self.sigma * rng.standard_normal());
                Some(self.hessian_operator(x, Some(&shift)))
            } else {
                Some(self.hessian_operator(x, None))
            }
        } else {
            None
        };
        Ok(OracleSample {
            value,
            gradient,
            hessian,
            eval_counts: counts,
            value_noise,
        })
    }

    /// Deterministic damped Newton on the exact `φ` until `‖∇φ‖ ≤ tol`. The
    /// result is cached; a later call with a looser tolerance reuses it.
    pub fn exact_solution(&self, tol: f64) -> Result<Solution> {
        if !(tol > 0.0) {
            return Err(LsosError::invalid("tol", "must be positive"));
        }
        if let Some(sol) = self.solution.lock().unwrap().as_ref() {
            if sol.tol <= tol {
                return Ok(sol.clone());
            }
        }
        let sol = self.newton_solve(tol)?;
        *self.solution.lock().unwrap() = Some(sol.clone());
        Ok(sol)
    }

    fn newton_solve(&self, tol: f64) -> Result<Solution> {
        const MAX_NEWTON: usize = 200;
        let n = self.n();
        let mut x = Vector::zeros(n);
        let mut f = self.value(&x);
        for _ in 0..MAX_NEWTON {
            let g = self.gradient(&x);
            let g_norm = g.norm();
            if g_norm <= tol {
                return Ok(Solution {
                    x_star: x,
                    f_star: f,
                    tol,
                });
            }
            let h = self.exact_hessian(&x);
            let d = match h.dense() {
                Some(m) => solve_direct(m, &(-&g))?,
                None => {
                    // Aim well below tol so the solve never limits the outer loop.
                    let rel = (0.01 * tol / g_norm).clamp(1e-14, 1e-2);
                    solve_cg(h.as_ref(), &(-&g), rel, 10 * n)?.solution
                }
            };
            let slope = g.dot(&d);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &x + t * &d;
                let ft = self.value(&trial);
                if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                    x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // Rounding floor: take the full step and let the gradient test decide.
                x += &d;
                f = self.value(&x);
            }
        }
        Err(LsosError::NonConvergence(format!(
            "Newton reached ‖∇φ‖ = {:e} > {tol:e} after {MAX_NEWTON} iterations",
            self.gradient(&x).norm()
        )))
    }

    /// Metadata stored next to traces.
    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("problem.n".into(), self.n().to_string()),
            ("problem.kappa".into(), self.kappa.to_string()),
            ("problem.sigma".into(), self.sigma.to_string()),
            ("problem.hess_form".into(), self.hess_form.as_str().into()),
            ("problem.density".into(), self.density.to_string()),
            ("problem.achieved_density".into(), self.achieved_density.to_string()),
            ("problem.seed".into(), self.seed.to_string()),
        ]
    }
}

impl NoisyOracle for ConvexRandomProblem {
    fn dim(&self) -> usize {
        self.n()
    }

    fn sample(&self, x: &Vector, want: Want, rng: &mut RngStream) -> Result<OracleSample<'_>> {
        self.noisy_eval(x, rng, want)
    }

    fn exact_value(&self, x: &Vector) -> f64 {
        self.value(x)
    }

    fn value_noise_stddev(&self) -> f64 {
        self.sigma
    }

    fn optimal_value(&self) -> Option<f64> {
        self.solution.lock().unwrap().as_ref().map(|s| s.f_star)
    }
}
