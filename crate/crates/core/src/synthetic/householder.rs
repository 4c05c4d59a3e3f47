use nalgebra::DMatrix;

use crate::error::{check_dim, LsosError, Result};
use crate::linalg::{SpdOperator, Vector};
use crate::rng::RngStream;

/// `A = V D Vᵀ` with `V = (I − 2v₃v₃ᵀ)(I − 2v₂v₂ᵀ)(I − 2v₁v₁ᵀ)`, applied
/// without ever forming `V`.
#[derive(Debug, Clone)]
pub struct HouseholderOperator {
    diag: Vector,
    reflectors: [Vector; 3],
}

fn reflect(v: &Vector, x: &mut Vector) {
    let s = 2.0 * v.dot(x);
    x.axpy(-s, v, 1.0);
}

impl HouseholderOperator {
    pub fn new(diag: Vector, reflectors: [Vector; 3]) -> Result<Self> {
        let n = diag.len();
        for v in &reflectors {
            check_dim(n, v.len())?;
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(LsosError::invalid("reflector", format!("norm {} is not 1", v.norm())));
            }
        }
        if diag.iter().any(|d| !(*d > 0.0)) {
            return Err(LsosError::invalid("diag", "entries must be positive"));
        }
        Ok(Self { diag, reflectors })
    }

    /// Random unit reflectors around the given spectrum.
    pub fn random(diag: Vector, rng: &mut RngStream) -> Result<Self> {
        let n = diag.len();
        let mut unit = || {
            let v = Vector::from_fn(n, |_, _| rng.standard_normal());
            let norm = v.norm();
            v / norm
        };
        let reflectors = [unit(), unit(), unit()];
        Self::new(diag, reflectors)
    }

    pub fn diag(&self) -> &Vector {
        &self.diag
    }

    pub fn reflectors(&self) -> &[Vector; 3] {
        &self.reflectors
    }

    /// `x ↦ Vᵀx`.
    pub fn apply_vt(&self, x: &mut Vector) {
        let [v1, v2, v3] = &self.reflectors;
        reflect(v3, x);
        reflect(v2, x);
        reflect(v1, x);
    }

    /// `x ↦ Vx`.
    pub fn apply_v(&self, x: &mut Vector) {
        let [v1, v2, v3] = &self.reflectors;
        reflect(v1, x);
        reflect(v2, x);
        reflect(v3, x);
    }

    /// Dense `V D Vᵀ`, for verification at small sizes.
    pub fn materialize(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut v = DMatrix::<f64>::identity(n, n);
        for r in &self.reflectors {
            let h = DMatrix::<f64>::identity(n, n) - 2.0 * r * r.transpose();
            v = h * v;
        }
        &v * DMatrix::from_diagonal(&self.diag) * v.transpose()
    }
}

impl SpdOperator for HouseholderOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &Vector) -> Vector {
        let mut y = x.clone();
        self.apply_vt(&mut y);
        y.component_mul_assign(&self.diag);
        self.apply_v(&mut y);
        y
    }
}
