//! ℓ2-regularized logistic regression on sparse rows, LIBSVM text I/O and a
//! synthetic two-cloud classification generator.
//!
//! Component `i` is `φᵢ(x) = log(1 + exp(−bᵢ aᵢᵀx)) + (μ/2)‖x‖²`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use flate2::read::MultiGzDecoder;
use log::warn;
use nalgebra::DMatrix;

use crate::error::{check_dim, LsosError, Result};
use crate::finitesum::FiniteSum;
use crate::linalg::{solve_cg, solve_direct, FnOperator, Vector};
use crate::rng::RngStream;

/// Feature count above which the reference solve switches from Cholesky to CG.
const DENSE_NEWTON_MAX: usize = 2000;

/// How raw labels were mapped onto `{−1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMap {
    PlusMinusOne,
    /// 0 → −1, 1 → +1.
    ZeroOne,
    /// 1 → −1, 2 → +1.
    OneTwo,
}

impl LabelMap {
    fn detect(raw: &[f64]) -> Option<LabelMap> {
        let within = |a: f64, b: f64| raw.iter().all(|&l| l == a || l == b);
        if within(-1.0, 1.0) {
            Some(LabelMap::PlusMinusOne)
        } else if within(0.0, 1.0) {
            Some(LabelMap::ZeroOne)
        } else if within(1.0, 2.0) {
            Some(LabelMap::OneTwo)
        } else {
            None
        }
    }

    fn map(self, l: f64) -> f64 {
        let negative = match self {
            LabelMap::PlusMinusOne => -1.0,
            LabelMap::ZeroOne => 0.0,
            LabelMap::OneTwo => 1.0,
        };
        if l == negative {
            -1.0
        } else {
            1.0
        }
    }
}

/// Binary classification data with rows in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    indptr: Vec<usize>,
    /// 0-based, strictly increasing within each row.
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
    label_map: LabelMap,
    max_row_norm_sq: f64,
}

impl Dataset {
    /// Builds a dataset from sparse rows with 0-based sorted indices.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>, n_features: usize) -> Result<Self> {
        check_dim(rows.len(), labels.len())?;
        if rows.is_empty() {
            return Err(LsosError::invalid("dataset", "no samples"));
        }
        if let Some(&b) = labels.iter().find(|&&b| b != 1.0 && b != -1.0) {
            return Err(LsosError::invalid("labels", format!("{b} is not ±1")));
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut max_row_norm_sq: f64 = 0.0;
        for row in rows {
            let mut norm_sq = 0.0;
            let mut prev = None;
            for (j, v) in row {
                if j >= n_features {
                    return Err(LsosError::IndexOutOfRange {
                        index: j,
                        len: n_features,
                    });
                }
                if prev.is_some_and(|p| j <= p) {
                    return Err(LsosError::invalid("row", "indices must be strictly increasing"));
                }
                if !v.is_finite() {
                    return Err(LsosError::NonFinite("dataset entry"));
                }
                prev = Some(j);
                norm_sq += v * v;
                indices.push(j);
                values.push(v);
            }
            max_row_norm_sq = max_row_norm_sq.max(norm_sq);
            indptr.push(indices.len());
        }
        Ok(Self {
            n_features,
            indptr,
            indices,
            values,
            labels,
            label_map: LabelMap::PlusMinusOne,
            max_row_norm_sq,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label_map(&self) -> LabelMap {
        self.label_map
    }

    pub fn max_row_norm_sq(&self) -> f64 {
        self.max_row_norm_sq
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    /// `aᵢᵀx`.
    pub fn dot_row(&self, i: usize, x: &Vector) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, v)| v * x[j]).sum()
    }

    /// `out += scale · aᵢ`.
    pub fn axpy_row(&self, i: usize, scale: f64, out: &mut Vector) {
        let (idx, val) = self.row(i);
        for (&j, v) in idx.iter().zip(val) {
            out[j] += scale * v;
        }
    }

    /// Writes LIBSVM text with `±1` labels and 1-based indices.
    pub fn write_libsvm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n_samples() {
            let label = if self.labels[i] > 0.0 { "+1" } else { "-1" };
            write!(out, "{label}")?;
            let (idx, val) = self.row(i);
            for (&j, v) in idx.iter().zip(val) {
                write!(out, " {}:{}", j + 1, v)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> LsosError {
    LsosError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses LIBSVM text. Labels `{−1,+1}`, `{0,1}` or `{1,2}` are mapped onto
/// `{−1,+1}`; indices are 1-based. `n_features` defaults to the largest index.
/// Out-of-order indices are sorted with a warning; repeated indices are summed.
pub fn parse_libsvm<R: BufRead>(input: R, n_features: Option<usize>) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in input.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("label `{label_tok}` is not a number")))?;
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut ordered = true;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected `index:value`, got `{tok}`")))?;
            let idx: usize = i
                .parse()
                .map_err(|_| parse_err(lineno, format!("index `{i}` is not a positive integer")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "indices are 1-based"));
            }
            let val: f64 = v
                .parse()
                .map_err(|_| parse_err(lineno, format!("value `{v}` is not a number")))?;
            if !val.is_finite() {
                return Err(parse_err(lineno, format!("value `{v}` is not finite")));
            }
            if row.last().is_some_and(|&(p, _)| idx - 1 <= p) {
                ordered = false;
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        if !ordered {
            warn!("line {lineno}: feature indices not increasing; sorted");
            row.sort_by_key(|&(j, _)| j);
            row.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
        }
        rows.push(row);
        raw_labels.push(label);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no samples in input"));
    }
    let map = LabelMap::detect(&raw_labels).ok_or_else(|| parse_err(0, "labels are not binary (±1, 0/1 or 1/2)"))?;
    let n = match n_features {
        Some(n) if n < max_index => {
            return Err(LsosError::invalid(
                "n_features",
                format!("{n} smaller than largest index {max_index}"),
            ))
        }
        Some(n) => n,
        None => max_index,
    };
    let labels = raw_labels.into_iter().map(|l| map.map(l)).collect();
    let mut ds = Dataset::from_rows(rows, labels, n)?;
    ds.label_map = map;
    Ok(ds)
}

/// Reads a LIBSVM file, decompressing gzip transparently.
pub fn load_libsvm(path: &Path, n_features: Option<usize>) -> Result<Dataset> {
    let mut file = File::open(path).map_err(|e| LsosError::io(path, e))?;
    let mut magic = [0u8; 2];
    let got = file.read(&mut magic).map_err(|e| LsosError::io(path, e))?;
    drop(file);
    let file = File::open(path).map_err(|e| LsosError::io(path, e))?;
    if got == 2 && magic == [0x1f, 0x8b] {
        parse_libsvm(BufReader::new(MultiGzDecoder::new(file)), n_features)
    } else {
        parse_libsvm(BufReader::new(file), n_features)
    }
}

/// Two Gaussian clouds centred at `±(separation/2)·w` for a random unit `w`,
/// each point perturbed by `N(0, I/n)`. The label is the cloud.
pub fn generate_synthetic_classification(
    n_samples: usize,
    n_features: usize,
    separation: f64,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if n_samples == 0 || n_features == 0 {
        return Err(LsosError::invalid("synthetic", "need N ≥ 1 and n ≥ 1"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(LsosError::invalid("separation", "must be finite and non-negative"));
    }
    let w = {
        let v = Vector::from_fn(n_features, |_, _| rng.standard_normal());
        let norm = v.norm();
        v / norm
    };
    let sd = 1.0 / (n_features as f64).sqrt();
    let mut rows = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let b = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        let row = (0..n_features)
            .map(|j| (j, b * 0.5 * separation * w[j] + sd * rng.standard_normal()))
            .collect();
        rows.push(row);
        labels.push(b);
    }
    Dataset::from_rows(rows, labels, n_features)
}

/// `log(1 + e^{−m})` without overflow.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// `1/(1 + e^{m})`, the magnitude of the loss gradient factor.
fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub x_star: Vector,
    pub f_star: f64,
}

/// Logistic loss with ridge term `μ`.
#[derive(Debug)]
pub struct LogRegModel {
    data: Dataset,
    mu: f64,
    reference: OnceLock<std::result::Result<Reference, String>>,
}

impl LogRegModel {
    pub fn new(data: Dataset, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(LsosError::invalid("mu", "must be positive"));
        }
        Ok(Self {
            data,
            mu,
            reference: OnceLock::new(),
        })
    }

    /// `μ = 1/N`.
    pub fn with_default_mu(data: Dataset) -> Result<Self> {
        let mu = 1.0 / data.n_samples() as f64;
        Self::new(data, mu)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `L = μ + maxᵢ ‖aᵢ‖²`.
    pub fn l(&self) -> f64 {
        self.mu + self.data.max_row_norm_sq()
    }

    fn margin(&self, i: usize, x: &Vector) -> f64 {
        self.data.labels[i] * self.data.dot_row(i, x)
    }

    /// `σ(m)(1 − σ(m))` at `m = bᵢaᵢᵀx`, the curvature weight of component `i`.
    pub fn curvature_weight(&self, i: usize, x: &Vector) -> f64 {
        let c = sigmoid_neg(self.margin(i, x));
        c * (1.0 - c)
    }

    /// Dense `∇²φ(x)`.
    pub fn full_hessian(&self, x: &Vector) -> DMatrix<f64> {
        let n = self.data.n_features();
        let mut h = DMatrix::<f64>::identity(n, n) * self.mu;
        let w = 1.0 / self.data.n_samples() as f64;
        for i in 0..self.data.n_samples() {
            let s = w * self.curvature_weight(i, x);
            let (idx, val) = self.data.row(i);
            for (a, &ja) in idx.iter().enumerate() {
                for (b, &jb) in idx.iter().enumerate() {
                    h[(ja, jb)] += s * val[a] * val[b];
                }
            }
        }
        h
    }

    /// Training accuracy of `sign(aᵢᵀx)`.
    pub fn accuracy(&self, x: &Vector) -> f64 {
        let hits = (0..self.data.n_samples()).filter(|&i| self.margin(i, x) > 0.0).count();
        hits as f64 / self.data.n_samples() as f64
    }

    /// Deterministic damped Newton on the full objective to `‖∇φ‖ ≤ 1e−10`,
    /// computed once.
    pub fn reference(&self) -> Result<Reference> {
        self.reference
            .get_or_init(|| self.solve_reference(1e-10).map_err(|e| e.to_string()))
            .clone()
            .map_err(LsosError::NonConvergence)
    }

    fn solve_reference(&self, tol: f64) -> Result<Reference> {
        const MAX_NEWTON: usize = 100;
        let n = self.data.n_features();
        let mut x = Vector::zeros(n);
        let mut f = self.value(&x);
        for _ in 0..MAX_NEWTON {
            let g = self.gradient(&x);
            if g.norm() <= tol {
                return Ok(Reference { x_star: x, f_star: f });
            }
            let d = if n <= DENSE_NEWTON_MAX {
                solve_direct(&self.full_hessian(&x), &(-&g))?
            } else {
                let xs = x.clone();
                let op = FnOperator::new(n, move |v: &Vector| self.hvp(&xs, v));
                let rel = (0.01 * tol / g.norm()).clamp(1e-14, 1e-2);
                solve_cg(&op, &(-&g), rel, 10 * n)?.solution
            };
            let slope = g.dot(&d);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial = &x + t * &d;
                let ft = self.value(&trial);
                if ft <= f + 1e-4 * t * slope {
                    x = trial;
                    f = ft;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                x += &d;
                f = self.value(&x);
            }
        }
        let g_norm = self.gradient(&x).norm();
        if g_norm <= tol * 10.0 {
            // Rounding floor on large sums; accept with a note.
            warn!("logistic reference stopped at ‖∇φ‖ = {g_norm:e}");
            return Ok(Reference { x_star: x, f_star: f });
        }
        Err(LsosError::NonConvergence(format!(
            "logistic reference reached ‖∇φ‖ = {g_norm:e} after {MAX_NEWTON} Newton steps"
        )))
    }
}

impl FiniteSum for LogRegModel {
    fn n_components(&self) -> usize {
        self.data.n_samples()
    }

    fn dim(&self) -> usize {
        self.data.n_features()
    }

    fn component_value(&self, i: usize, x: &Vector) -> f64 {
        softplus_neg(self.margin(i, x)) + 0.5 * self.mu * x.norm_squared()
    }

    fn add_component_gradient(&self, i: usize, x: &Vector, scale: f64, out: &mut Vector) {
        let c = -sigmoid_neg(self.margin(i, x)) * self.data.labels[i];
        self.data.axpy_row(i, scale * c, out);
        out.axpy(scale * self.mu, x, 1.0);
    }

    fn add_component_hvp(&self, i: usize, x: &Vector, v: &Vector, scale: f64, out: &mut Vector) {
        let s = self.curvature_weight(i, x) * self.data.dot_row(i, v);
        self.data.axpy_row(i, scale * s, out);
        out.axpy(scale * self.mu, v, 1.0);
    }

    fn value(&self, x: &Vector) -> f64 {
        let n = self.data.n_samples();
        let loss: f64 = (0..n).map(|i| softplus_neg(self.margin(i, x))).sum();
        loss / n as f64 + 0.5 * self.mu * x.norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let n = self.data.n_samples();
        let mut out = self.mu * x;
        for i in 0..n {
            let c = -sigmoid_neg(self.margin(i, x)) * self.data.labels[i];
            self.data.axpy_row(i, c / n as f64, &mut out);
        }
        out
    }

    fn hvp(&self, x: &Vector, v: &Vector) -> Vector {
        let n = self.data.n_samples();
        let mut out = self.mu * v;
        for i in 0..n {
            let s = self.curvature_weight(i, x) * self.data.dot_row(i, v);
            self.data.axpy_row(i, s / n as f64, &mut out);
        }
        out
    }

    fn strong_convexity(&self) -> Option<f64> {
        Some(self.mu)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.l())
    }

    fn optimal_value(&self) -> Option<f64> {
        self.reference().ok().map(|r| r.f_star)
    }
}
