use nalgebra::DMatrix;

use crate::error::{check_dim, LsosError, Result};
use crate::linalg::{solve_direct, Vector};
use crate::oracle::{EvalCounts, NoisyOracle, OracleSample, Want};
use crate::rng::RngStream;

/// `φ(x) = ½ xᵀHx − bᵀx` with the same additive noise model as the
/// exponential test problems. Mostly a test fixture with a closed-form
/// minimizer.
#[derive(Debug, Clone)]
pub struct NoisyQuadratic {
    h: DMatrix<f64>,
    b: Vector,
    sigma: f64,
    x_star: Vector,
    f_star: f64,
}

impl NoisyQuadratic {
    pub fn new(h: DMatrix<f64>, b: Vector, sigma: f64) -> Result<Self> {
        check_dim(h.nrows(), b.len())?;
        check_dim(h.nrows(), h.ncols())?;
        if !(sigma >= 0.0) {
            return Err(LsosError::invalid("sigma", "must be non-negative"));
        }
        let x_star = solve_direct(&h, &b)?;
        let f_star = -0.5 * b.dot(&x_star);
        Ok(Self {
            h,
            b,
            sigma,
            x_star,
            f_star,
        })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn x_star(&self) -> &Vector {
        &self.x_star
    }

    pub fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.h * x)) - self.b.dot(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        &self.h * x - &self.b
    }
}

impl NoisyOracle for NoisyQuadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn sample(&self, x: &Vector, want: Want, rng: &mut RngStream) -> Result<OracleSample<'_>> {
        check_dim(self.dim(), x.len())?;
        let mut counts = EvalCounts::default();
        let mut value = None;
        let mut value_noise = 0.0;
        if want.f {
            value_noise = rng.gaussian(0.0, self.sigma)?;
            value = Some(self.value(x) + value_noise);
            counts.f_evals += 1;
        }
        let gradient = want.g.then(|| {
            counts.g_evals += 1;
            let mut g = self.gradient(x);
            if self.sigma > 0.0 {
                g.iter_mut().for_each(|gi| *gi += self.sigma * rng.standard_normal());
            }
            g
        });
        let hessian = want.hessian.then(|| {
            counts.hvp_evals += 1;
            let mut h = self.h.clone();
            if self.sigma > 0.0 {
                for i in 0..h.nrows() {
                    h[(i, i)] += self.sigma * rng.standard_normal();
                }
            }
            Box::new(h) as Box<dyn crate::linalg::SpdOperator>
        });
        Ok(OracleSample {
            value,
            gradient,
            hessian,
            eval_counts: counts,
            value_noise,
        })
    }

    fn exact_value(&self, x: &Vector) -> f64 {
        self.value(x)
    }

    fn value_noise_stddev(&self) -> f64 {
        self.sigma
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(self.f_star)
    }
}
