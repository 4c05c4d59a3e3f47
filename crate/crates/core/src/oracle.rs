//! Noisy function/gradient/Hessian oracles.
//!
//! An oracle returns `f = φ + ε_f`, `g = ∇φ + ε_g` and `B = ∇²φ + ε_B` at a
//! point. A sample also freezes its function-noise realization so that a line
//! search can compare trial values against `f(x_k)` on the same draw.

use std::ops::AddAssign;

use crate::error::Result;
use crate::linalg::{SpdOperator, Vector};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub f_evals: u64,
    pub g_evals: u64,
    pub hvp_evals: u64,
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.f_evals += rhs.f_evals;
        self.g_evals += rhs.g_evals;
        self.hvp_evals += rhs.hvp_evals;
    }
}

/// Which quantities a sample should carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Want {
    pub f: bool,
    pub g: bool,
    pub hessian: bool,
}

impl Want {
    pub const ALL: Want = Want {
        f: true,
        g: true,
        hessian: true,
    };
    pub const GRADIENT: Want = Want {
        f: false,
        g: true,
        hessian: false,
    };
    pub const VALUE_GRADIENT: Want = Want {
        f: true,
        g: true,
        hessian: false,
    };
    pub const GRADIENT_HESSIAN: Want = Want {
        f: false,
        g: true,
        hessian: true,
    };
}

/// How trial points inside one line search see the function noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseConsistency {
    /// Every trial reuses the draw of `f(x_k)`.
    Common,
    /// Every trial draws fresh noise.
    Fresh,
}

pub struct OracleSample<'a> {
    pub value: Option<f64>,
    pub gradient: Option<Vector>,
    pub hessian: Option<Box<dyn SpdOperator + 'a>>,
    /// Evaluations spent producing this sample.
    pub eval_counts: EvalCounts,
    /// Function-noise realization behind `value`.
    pub value_noise: f64,
}

impl std::fmt::Debug for OracleSample<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleSample")
            .field("value", &self.value)
            .field("gradient", &self.gradient)
            .field("hessian", &self.hessian.as_ref().map(|h| h.dim()))
            .field("eval_counts", &self.eval_counts)
            .finish()
    }
}

pub trait NoisyOracle: Sync {
    fn dim(&self) -> usize;

    fn sample(&self, x: &Vector, want: Want, rng: &mut RngStream) -> Result<OracleSample<'_>>;

    /// Noise-free objective.
    fn exact_value(&self, x: &Vector) -> f64;

    /// Standard deviation of the additive function noise.
    fn value_noise_stddev(&self) -> f64;

    /// Optimal value, when the problem knows it.
    fn optimal_value(&self) -> Option<f64> {
        None
    }

    fn true_error(&self, x: &Vector) -> Option<f64> {
        self.optimal_value().map(|f_star| self.exact_value(x) - f_star)
    }

    /// `f` at a trial point, on the realization of `base` or a fresh one.
    fn trial_value(
        &self,
        x: &Vector,
        base: &OracleSample<'_>,
        consistency: NoiseConsistency,
        rng: &mut RngStream,
    ) -> Result<f64> {
        let noise = match consistency {
            NoiseConsistency::Common => base.value_noise,
            NoiseConsistency::Fresh => rng.gaussian(0.0, self.value_noise_stddev())?,
        };
        Ok(self.exact_value(x) + noise)
    }
}
