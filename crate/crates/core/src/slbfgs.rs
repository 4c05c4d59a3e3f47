//! Stochastic L-BFGS memory: correction pairs from block averages of the
//! iterates and subsampled Hessian-vector products, applied matrix-free.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{check_dim, LsosError, Result};
use crate::linalg::Vector;

/// Relative curvature threshold for accepting a pair.
pub const CURVATURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionPair {
    pub s: Vector,
    pub y: Vector,
    /// `1 / sᵀy`.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairUpdate {
    /// Not a pair boundary, or not enough history yet.
    None,
    Accepted,
    /// The pair failed the curvature test and was dropped.
    Rejected,
}

/// Vector operations spent by one application of `H_k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    pub dots: usize,
    pub axpys: usize,
    pub scalings: usize,
}

#[derive(Debug, Clone)]
pub struct LbfgsMemory {
    m: usize,
    l: usize,
    pairs: VecDeque<CorrectionPair>,
    accum: Vector,
    accum_count: usize,
    w_prev: Option<Vector>,
    pair_count: usize,
    rejected: usize,
}

impl LbfgsMemory {
    pub fn new(dim: usize, m: usize, l: usize) -> Result<Self> {
        if m == 0 {
            return Err(LsosError::invalid("bfgs.m", "memory must hold at least one pair"));
        }
        if l == 0 {
            return Err(LsosError::invalid("bfgs.l", "pair interval must be at least 1"));
        }
        Ok(Self {
            m,
            l,
            pairs: VecDeque::with_capacity(m),
            accum: Vector::zeros(dim),
            accum_count: 0,
            w_prev: None,
            pair_count: 0,
            rejected: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.accum.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stored pairs, oldest first.
    pub fn pairs(&self) -> impl Iterator<Item = &CorrectionPair> {
        self.pairs.iter()
    }

    /// Pairs accepted over the lifetime of the memory.
    pub fn pair_count(&self) -> usize {
        self.pair_count
    }

    pub fn rejected_count(&self) -> usize {
        self.rejected
    }

    /// Adds `x_k`. Blocks are `x_1..x_l`, `x_{l+1}..x_{2l}`, …; `x_0` is
    /// ignored. When `k` closes a block, `w_j` is the block mean; from
    /// `k = 2l` on, `s = w_j − w_{j−1}` and `y = hvp(w_j, s)` form a new pair.
    pub fn record_iterate<F>(&mut self, x: &Vector, k: usize, hvp: F) -> Result<PairUpdate>
    where
        F: FnOnce(&Vector, &Vector) -> Result<Vector>,
    {
        check_dim(self.dim(), x.len())?;
        if k == 0 {
            return Ok(PairUpdate::None);
        }
        self.accum += x;
        self.accum_count += 1;
        if !k.is_multiple_of(self.l) {
            return Ok(PairUpdate::None);
        }
        let complete = self.accum_count == self.l;
        let w = &self.accum / self.accum_count as f64;
        self.accum.fill(0.0);
        self.accum_count = 0;
        if !complete {
            return Ok(PairUpdate::None);
        }
        let outcome = match self.w_prev.take() {
            Some(w_prev) if k >= 2 * self.l => {
                let s = &w - w_prev;
                if s.norm() == 0.0 {
                    self.rejected += 1;
                    PairUpdate::Rejected
                } else {
                    let y = hvp(&w, &s)?;
                    check_dim(self.dim(), y.len())?;
                    if self.push(s, y) {
                        PairUpdate::Accepted
                    } else {
                        PairUpdate::Rejected
                    }
                }
            }
            _ => PairUpdate::None,
        };
        self.w_prev = Some(w);
        Ok(outcome)
    }

    /// Inserts a pair if `sᵀy ≥ 1e−12 ‖s‖‖y‖` and `sᵀy > 0`; returns whether it was kept.
    pub fn push(&mut self, s: Vector, y: Vector) -> bool {
        let sy = s.dot(&y);
        let ok = sy > 0.0 && sy >= CURVATURE_TOL * s.norm() * y.norm() && sy.is_finite();
        if ok {
            self.insert_unchecked(s, y);
            self.pair_count += 1;
        } else {
            self.rejected += 1;
        }
        ok
    }

    /// FIFO insert without the curvature test; negative controls only.
    pub(crate) fn insert_unchecked(&mut self, s: Vector, y: Vector) {
        if self.pairs.len() == self.m {
            self.pairs.pop_front();
        }
        let rho = 1.0 / s.dot(&y);
        self.pairs.push_back(CorrectionPair { s, y, rho });
    }

    /// `H⁽⁰⁾ = (s_mᵀ y_m / ‖y_m‖²) I` from the newest pair; 1 when empty.
    pub fn initial_scaling(&self) -> f64 {
        match self.pairs.back() {
            Some(p) => 1.0 / (p.rho * p.y.norm_squared()),
            None => 1.0,
        }
    }

    /// `H_k v` by the two-loop recursion; `v` itself when the memory is empty.
    pub fn apply_inverse_hessian(&self, v: &Vector) -> Vector {
        self.apply_with_stats(v).0
    }

    pub fn apply_with_stats(&self, v: &Vector) -> (Vector, ApplyStats) {
        let mut st = ApplyStats::default();
        let mut q = v.clone();
        let mut alpha = Vec::with_capacity(self.pairs.len());
        for p in self.pairs.iter().rev() {
            let a = p.rho * p.s.dot(&q);
            q.axpy(-a, &p.y, 1.0);
            alpha.push(a);
            st.dots += 1;
            st.axpys += 1;
        }
        q *= self.initial_scaling();
        st.scalings += 1;
        for (p, a) in self.pairs.iter().zip(alpha.into_iter().rev()) {
            let b = p.rho * p.y.dot(&q);
            q.axpy(a - b, &p.s, 1.0);
            st.dots += 1;
            st.axpys += 1;
        }
        (q, st)
    }

    /// Dense `H_k` from `H⁽ʲ⁾ = (I − ρ s yᵀ) H⁽ʲ⁻¹⁾ (I − ρ y sᵀ) + ρ s sᵀ`,
    /// oldest pair first. For verification at small sizes.
    pub fn materialize(&self) -> DMatrix<f64> {
        let n = self.dim();
        let eye = DMatrix::<f64>::identity(n, n);
        let mut h = &eye * self.initial_scaling();
        for p in &self.pairs {
            let left = &eye - p.rho * &p.s * p.y.transpose();
            let right = &eye - p.rho * &p.y * p.s.transpose();
            h = left * h * right + p.rho * &p.s * p.s.transpose();
        }
        h
    }

    /// `H_k y_m = s_m` for the newest pair to `1e−8` (relative) and `s_mᵀ y_m > 0`.
    pub fn verify_secant(&self) -> bool {
        let Some(p) = self.pairs.back() else {
            return false;
        };
        if !(p.s.dot(&p.y) > 0.0) {
            return false;
        }
        let hy = self.apply_inverse_hessian(&p.y);
        (hy - &p.s).norm() <= 1e-8 * p.s.norm().max(f64::MIN_POSITIVE)
    }
}
