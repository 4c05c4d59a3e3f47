//! Finite-sum objectives `φ = (1/N) Σᵢ φᵢ`, mini-batch partitions,
//! subsampled estimators and the mini-batch SAGA gradient.

use nalgebra::DMatrix;

use crate::error::{check_dim, LsosError, Result};
use crate::linalg::Vector;
use crate::rng::RngStream;

pub trait FiniteSum: Sync {
    /// Number of components `N`.
    fn n_components(&self) -> usize;

    fn dim(&self) -> usize;

    fn component_value(&self, i: usize, x: &Vector) -> f64;

    /// `out += scale · ∇φᵢ(x)`.
    fn add_component_gradient(&self, i: usize, x: &Vector, scale: f64, out: &mut Vector);

    /// `out += scale · ∇²φᵢ(x) v`.
    fn add_component_hvp(&self, i: usize, x: &Vector, v: &Vector, scale: f64, out: &mut Vector);

    fn component_gradient(&self, i: usize, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim());
        self.add_component_gradient(i, x, 1.0, &mut out);
        out
    }

    fn component_hvp(&self, i: usize, x: &Vector, v: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim());
        self.add_component_hvp(i, x, v, 1.0, &mut out);
        out
    }

    fn value(&self, x: &Vector) -> f64 {
        let n = self.n_components();
        (0..n).map(|i| self.component_value(i, x)).sum::<f64>() / n as f64
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let n = self.n_components();
        let mut out = Vector::zeros(self.dim());
        for i in 0..n {
            self.add_component_gradient(i, x, 1.0 / n as f64, &mut out);
        }
        out
    }

    fn hvp(&self, x: &Vector, v: &Vector) -> Vector {
        let n = self.n_components();
        let mut out = Vector::zeros(self.dim());
        for i in 0..n {
            self.add_component_hvp(i, x, v, 1.0 / n as f64, &mut out);
        }
        out
    }

    /// Strong convexity constant of every component, when known.
    fn strong_convexity(&self) -> Option<f64> {
        None
    }

    /// Gradient Lipschitz constant of every component, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// `min φ`, when known.
    fn optimal_value(&self) -> Option<f64> {
        None
    }
}

pub(crate) fn check_batch(p: &dyn FiniteSum, batch: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(LsosError::EmptyBatch);
    }
    let len = p.n_components();
    match batch.iter().find(|&&i| i >= len) {
        Some(&index) => Err(LsosError::IndexOutOfRange { index, len }),
        None => Ok(()),
    }
}

/// `(1/|K|) Σ_{i∈K} φᵢ(x)`.
pub fn subsampled_value(p: &dyn FiniteSum, x: &Vector, batch: &[usize]) -> Result<f64> {
    check_batch(p, batch)?;
    check_dim(p.dim(), x.len())?;
    Ok(batch.iter().map(|&i| p.component_value(i, x)).sum::<f64>() / batch.len() as f64)
}

/// `(1/|K|) Σ_{i∈K} ∇φᵢ(x)`.
pub fn subsampled_gradient(p: &dyn FiniteSum, x: &Vector, batch: &[usize]) -> Result<Vector> {
    check_batch(p, batch)?;
    check_dim(p.dim(), x.len())?;
    let w = 1.0 / batch.len() as f64;
    let mut out = Vector::zeros(p.dim());
    for &i in batch {
        p.add_component_gradient(i, x, w, &mut out);
    }
    Ok(out)
}

/// `(1/|K|) Σ_{i∈K} ∇²φᵢ(x) v`.
pub fn subsampled_hvp(p: &dyn FiniteSum, x: &Vector, batch: &[usize], v: &Vector) -> Result<Vector> {
    check_batch(p, batch)?;
    check_dim(p.dim(), x.len())?;
    check_dim(p.dim(), v.len())?;
    let w = 1.0 / batch.len() as f64;
    let mut out = Vector::zeros(p.dim());
    for &i in batch {
        p.add_component_hvp(i, x, v, w, &mut out);
    }
    Ok(out)
}

/// Default sample size `⌈√N⌉`.
pub fn default_batch_size(n_components: usize) -> usize {
    ((n_components as f64).sqrt().ceil() as usize).max(1)
}

/// Batch count giving batches of about `⌈√N⌉` components.
pub fn default_batch_count(n_components: usize) -> usize {
    n_components.div_ceil(default_batch_size(n_components))
}

/// Random equi-partition of `0..N`, consumed batch by batch within an epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPartition {
    n_components: usize,
    batches: Vec<Vec<usize>>,
    cursor: usize,
}

/// Splits a shuffled `0..N` into `n_b` batches whose sizes differ by at most one.
pub fn make_partition(n_components: usize, n_b: usize, rng: &mut RngStream) -> Result<BatchPartition> {
    if n_b == 0 || n_b > n_components {
        return Err(LsosError::invalid(
            "batch.count",
            format!("need 1 ≤ n_b ≤ N = {n_components}, got {n_b}"),
        ));
    }
    let mut p = BatchPartition {
        n_components,
        batches: Vec::with_capacity(n_b),
        cursor: 0,
    };
    p.fill(n_b, rng);
    Ok(p)
}

impl BatchPartition {
    fn fill(&mut self, n_b: usize, rng: &mut RngStream) {
        let mut idx: Vec<usize> = (0..self.n_components).collect();
        rng.shuffle(&mut idx);
        let base = self.n_components / n_b;
        let extra = self.n_components % n_b;
        self.batches.clear();
        let mut start = 0;
        for b in 0..n_b {
            let size = base + usize::from(b < extra);
            self.batches.push(idx[start..start + size].to_vec());
            start += size;
        }
        self.cursor = 0;
    }

    /// Draws a new partition with the same batch count and restarts the epoch.
    pub fn reshuffle(&mut self, rng: &mut RngStream) {
        let n_b = self.batches.len();
        self.fill(n_b, rng);
    }

    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    /// Next batch of the epoch, or `None` once every batch was used.
    pub fn next_batch(&mut self) -> Option<&[usize]> {
        let b = self.batches.get(self.cursor)?;
        self.cursor += 1;
        Some(b)
    }
}

/// Stored component gradients `J⁽ⁱ⁾` with an incrementally maintained sum.
#[derive(Debug, Clone)]
pub struct SagaTable {
    /// Row `i` holds `J⁽ⁱ⁾`.
    slots: DMatrix<f64>,
    running_sum: Vector,
    initialized: bool,
    component_grad_evals: u64,
}

impl SagaTable {
    pub fn new(n_components: usize, dim: usize) -> Self {
        Self {
            slots: DMatrix::zeros(n_components, dim),
            running_sum: Vector::zeros(dim),
            initialized: false,
            component_grad_evals: 0,
        }
    }

    /// `J⁽ⁱ⁾ = ∇φᵢ(x₀)` for every `i`; the only full pass over the components.
    pub fn initialize(p: &dyn FiniteSum, x0: &Vector) -> Result<Self> {
        check_dim(p.dim(), x0.len())?;
        let mut t = Self::new(p.n_components(), p.dim());
        for i in 0..p.n_components() {
            let g = p.component_gradient(i, x0);
            t.slots.set_row(i, &g.transpose());
            t.running_sum += g;
        }
        t.component_grad_evals = p.n_components() as u64;
        t.initialized = true;
        Ok(t)
    }

    pub fn n_components(&self) -> usize {
        self.slots.nrows()
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn running_sum(&self) -> &Vector {
        &self.running_sum
    }

    pub fn slot(&self, i: usize) -> Vector {
        self.slots.row(i).transpose()
    }

    /// `Σᵢ J⁽ⁱ⁾` by direct summation.
    pub fn direct_sum(&self) -> Vector {
        self.slots.row_sum().transpose()
    }

    /// Component gradients evaluated through this table.
    pub fn component_grad_evals(&self) -> u64 {
        self.component_grad_evals
    }

    fn check(&self, p: &dyn FiniteSum, batch: &[usize]) -> Result<()> {
        if !self.initialized {
            return Err(LsosError::UninitializedTable);
        }
        check_batch(p, batch)?;
        check_dim(self.n_components(), p.n_components())
    }

    /// `(1/|K|) Σ_{i∈K} (∇φᵢ(x) − J⁽ⁱ⁾) + (1/N) Σ_l J⁽ˡ⁾`.
    pub fn estimate(&mut self, p: &dyn FiniteSum, x: &Vector, batch: &[usize]) -> Result<Vector> {
        self.check(p, batch)?;
        check_dim(p.dim(), x.len())?;
        let w = 1.0 / batch.len() as f64;
        let mut out = &self.running_sum / self.n_components() as f64;
        for &i in batch {
            p.add_component_gradient(i, x, w, &mut out);
            for (o, j) in out.iter_mut().zip(self.slots.row(i).iter()) {
                *o -= w * j;
            }
        }
        self.component_grad_evals += batch.len() as u64;
        Ok(out)
    }

    /// `J⁽ⁱ⁾ ← ∇φᵢ(x)` for `i ∈ K`.
    pub fn update(&mut self, p: &dyn FiniteSum, x: &Vector, batch: &[usize]) -> Result<()> {
        self.check(p, batch)?;
        check_dim(p.dim(), x.len())?;
        for &i in batch {
            let g = p.component_gradient(i, x);
            self.set_slot(i, &g)?;
        }
        self.component_grad_evals += batch.len() as u64;
        Ok(())
    }

    /// Overwrites one slot and patches the running sum.
    pub fn set_slot(&mut self, i: usize, g: &Vector) -> Result<()> {
        let len = self.n_components();
        if i >= len {
            return Err(LsosError::IndexOutOfRange { index: i, len });
        }
        check_dim(self.running_sum.len(), g.len())?;
        for (c, gc) in g.iter().enumerate() {
            self.running_sum[c] += gc - self.slots[(i, c)];
            self.slots[(i, c)] = *gc;
        }
        Ok(())
    }
}

/// `φᵢ(x) = ½ xᵀHᵢx − bᵢᵀx`, a finite sum with closed-form everything.
#[derive(Debug, Clone)]
pub struct QuadraticSum {
    pub h: Vec<DMatrix<f64>>,
    pub b: Vec<Vector>,
}

impl QuadraticSum {
    pub fn new(h: Vec<DMatrix<f64>>, b: Vec<Vector>) -> Result<Self> {
        if h.is_empty() {
            return Err(LsosError::invalid("components", "need at least one"));
        }
        check_dim(h.len(), b.len())?;
        let n = b[0].len();
        for (hi, bi) in h.iter().zip(&b) {
            check_dim(n, hi.nrows())?;
            check_dim(n, hi.ncols())?;
            check_dim(n, bi.len())?;
        }
        Ok(Self { h, b })
    }

    /// Components `Hᵢ = MᵢMᵢᵀ/n + c·I` with Gaussian `Mᵢ` and `bᵢ`.
    pub fn random(n_components: usize, dim: usize, shift: f64, rng: &mut RngStream) -> Self {
        let mut h = Vec::with_capacity(n_components);
        let mut b = Vec::with_capacity(n_components);
        for _ in 0..n_components {
            let m = DMatrix::from_fn(dim, dim, |_, _| rng.standard_normal());
            h.push(&m * m.transpose() / dim as f64 + DMatrix::identity(dim, dim) * shift);
            b.push(Vector::from_fn(dim, |_, _| rng.standard_normal()));
        }
        Self { h, b }
    }

    pub fn mean_hessian(&self, batch: &[usize]) -> DMatrix<f64> {
        let n = self.b[0].len();
        let mut m = DMatrix::zeros(n, n);
        for &i in batch {
            m += &self.h[i];
        }
        m / batch.len() as f64
    }
}

impl FiniteSum for QuadraticSum {
    fn n_components(&self) -> usize {
        self.h.len()
    }

    fn dim(&self) -> usize {
        self.b[0].len()
    }

    fn component_value(&self, i: usize, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.h[i] * x)) - self.b[i].dot(x)
    }

    fn add_component_gradient(&self, i: usize, x: &Vector, scale: f64, out: &mut Vector) {
        out.gemv(scale, &self.h[i], x, 1.0);
        out.axpy(-scale, &self.b[i], 1.0);
    }

    fn add_component_hvp(&self, i: usize, _x: &Vector, v: &Vector, scale: f64, out: &mut Vector) {
        out.gemv(scale, &self.h[i], v, 1.0);
    }

    fn optimal_value(&self) -> Option<f64> {
        let all: Vec<usize> = (0..self.n_components()).collect();
        let h = self.mean_hessian(&all);
        let b = self.b.iter().fold(Vector::zeros(self.dim()), |acc, bi| acc + bi) / self.n_components() as f64;
        let x = crate::linalg::solve_direct(&h, &b).ok()?;
        Some(-0.5 * b.dot(&x))
    }
}
