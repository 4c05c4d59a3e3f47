//! Finite-sum drivers: LSOS-FS (subsampled inexact Newton), LSOS-BFGS (SAGA
//! gradient with stochastic L-BFGS directions) and the SAGA-LS baseline.
//! Record `k` describes `x_k`; `f_hat` is the mini-batch value `f_{N_k}(x_k)`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use log::{debug, warn};

use crate::error::{check_dim, LsosError, Result};
use crate::finitesum::{
    default_batch_size, make_partition, subsampled_gradient, subsampled_hvp, subsampled_value, FiniteSum, SagaTable,
};
use crate::linalg::{FnOperator, Vector};
use crate::rng::RngStream;
use crate::slbfgs::LbfgsMemory;
use crate::solvers::{newton_direction, CgConfig, DeltaSchedule};
use crate::steplen::{backtrack, LineSearchConfig, Zeta};
use crate::trace::{Phase, RunTrace, StepDiagnostics, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsMethod {
    LsosFs,
    LsosBfgs,
    SagaLs,
}

impl FsMethod {
    pub const ALL: [FsMethod; 3] = [FsMethod::LsosFs, FsMethod::LsosBfgs, FsMethod::SagaLs];

    pub fn as_str(self) -> &'static str {
        match self {
            FsMethod::LsosFs => "lsos-fs",
            FsMethod::LsosBfgs => "lsos-bfgs",
            FsMethod::SagaLs => "saga-ls",
        }
    }

    pub fn parse(s: &str) -> Option<FsMethod> {
        FsMethod::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradientEstimator {
    /// Plain mini-batch mean of component gradients.
    Subsampled,
    /// Mini-batch SAGA with a full table of stored component gradients.
    Saga,
}

impl GradientEstimator {
    pub fn as_str(self) -> &'static str {
        match self {
            GradientEstimator::Subsampled => "subsampled",
            GradientEstimator::Saga => "saga",
        }
    }

    pub fn parse(s: &str) -> Option<GradientEstimator> {
        [GradientEstimator::Subsampled, GradientEstimator::Saga]
            .into_iter()
            .find(|e| e.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsConfig {
    pub method: FsMethod,
    pub estimator: GradientEstimator,
    /// `t_start` is the constant initial trial `t_ini`; `zeta` is `ϑᵏ`.
    pub ls: LineSearchConfig,
    /// Mini-batch size; `None` means `⌈√N⌉`.
    pub batch_size: Option<usize>,
    /// Size of the fresh sample behind each `y` pair; `None` means `⌈√N⌉`.
    pub hessian_batch: Option<usize>,
    /// L-BFGS memory `m`.
    pub memory: usize,
    /// Pair-update interval `l`.
    pub pair_interval: usize,
    /// Forcing terms of LSOS-FS.
    pub delta: DeltaSchedule,
    pub cg: CgConfig,
    pub max_epochs: usize,
    pub max_iters: Option<usize>,
    pub time_budget_s: Option<f64>,
    pub seed: u64,
    pub stream_id: u64,
}

impl FsConfig {
    /// Defaults of the finite-sum experiments.
    pub fn new(method: FsMethod) -> Self {
        let estimator = match method {
            FsMethod::LsosFs => GradientEstimator::Subsampled,
            FsMethod::LsosBfgs | FsMethod::SagaLs => GradientEstimator::Saga,
        };
        Self {
            method,
            estimator,
            ls: LineSearchConfig {
                zeta: Zeta::Geometric { theta: 0.999 },
                ..LineSearchConfig::default()
            },
            batch_size: None,
            hessian_batch: None,
            memory: 10,
            pair_interval: 5,
            delta: DeltaSchedule::Geometric { rho: 0.95 },
            cg: CgConfig::default(),
            max_epochs: 20,
            max_iters: None,
            time_budget_s: None,
            seed: 0,
            stream_id: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ls.validate()?;
        if self.batch_size == Some(0) {
            return Err(LsosError::invalid("fs.batch", "must be at least 1"));
        }
        if self.hessian_batch == Some(0) {
            return Err(LsosError::invalid("fs.hessian_batch", "must be at least 1"));
        }
        if self.memory == 0 {
            return Err(LsosError::invalid("fs.m", "must be at least 1"));
        }
        if self.pair_interval == 0 {
            return Err(LsosError::invalid("fs.l", "must be at least 1"));
        }
        match self.delta {
            DeltaSchedule::Geometric { rho } if !(rho > 0.0 && rho < 1.0) => {
                return Err(LsosError::invalid(
                    "fs.delta",
                    format!("rho must lie in (0, 1), got {rho}"),
                ));
            }
            DeltaSchedule::Constant { value } if !(0.0..=1.0).contains(&value) => {
                return Err(LsosError::invalid(
                    "fs.delta",
                    format!("must lie in [0, 1], got {value}"),
                ));
            }
            _ => {}
        }
        if !(self.cg.rel_floor > 0.0 && self.cg.rel_floor <= 1.0) {
            return Err(LsosError::invalid("cg.rel_floor", "must lie in (0, 1]"));
        }
        if self.cg.max_iters == Some(0) {
            return Err(LsosError::invalid("cg.max_iters", "must be at least 1"));
        }
        if let Some(b) = self.time_budget_s {
            if !(b > 0.0) {
                return Err(LsosError::invalid("budget.time_s", "must be positive"));
            }
        }
        Ok(())
    }

    /// Hash of every setting except the seed and stream.
    pub fn spec_hash(&self) -> u64 {
        let mut c = self.clone();
        c.seed = 0;
        c.stream_id = 0;
        let mut h = DefaultHasher::new();
        format!("{c:?}").hash(&mut h);
        h.finish()
    }
}

fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs `cfg.method` on `p` from `x0`.
pub fn run_finite_sum(p: &dyn FiniteSum, cfg: &FsConfig, x0: &Vector) -> Result<RunTrace> {
    cfg.validate()?;
    let n = p.dim();
    let n_components = p.n_components();
    check_dim(n, x0.len())?;
    let batch_size = cfg
        .batch_size
        .unwrap_or_else(|| default_batch_size(n_components))
        .min(n_components);
    let n_batches = n_components.div_ceil(batch_size);
    let hessian_batch = cfg
        .hessian_batch
        .unwrap_or_else(|| default_batch_size(n_components))
        .min(n_components);
    let cg_max = cfg.cg.max_iters.unwrap_or(2 * n).max(1);
    let f_star = p.optimal_value();
    let mut rng = RngStream::new(cfg.seed, cfg.stream_id);
    let mut trace = RunTrace::new(format!("{}-r{}", cfg.method.as_str(), cfg.stream_id), cfg.spec_hash());

    let started = Instant::now();
    let mut partition = make_partition(n_components, n_batches, &mut rng)?;
    let mut table = match cfg.estimator {
        GradientEstimator::Saga => Some(SagaTable::initialize(p, x0)?),
        GradientEstimator::Subsampled => None,
    };
    let mut memory = match cfg.method {
        FsMethod::LsosBfgs => Some(LbfgsMemory::new(n, cfg.memory, cfg.pair_interval)?),
        _ => None,
    };
    let mut elapsed = started.elapsed().as_secs_f64();

    let mut x = x0.clone();
    let mut step_prev = 0.0;
    let mut diag_prev = StepDiagnostics::default();
    let mut cursor = 0;
    let mut epoch = 0;
    let mut sub_grad_evals = 0u64;
    let mut exhausted = 0usize;

    for k in 0.. {
        let started = Instant::now();
        if cursor == n_batches {
            partition.reshuffle(&mut rng);
            cursor = 0;
            epoch += 1;
        }
        let batch = partition.batches()[cursor].clone();
        cursor += 1;
        let f_hat = subsampled_value(p, &x, &batch)?;
        trace.eval_counts.f_evals += 1;
        let g = match table.as_mut() {
            Some(t) => t.estimate(p, &x, &batch)?,
            None => {
                sub_grad_evals += batch.len() as u64;
                subsampled_gradient(p, &x, &batch)?
            }
        };
        let g_norm = g.norm();
        elapsed += started.elapsed().as_secs_f64();
        if !f_hat.is_finite() || !g_norm.is_finite() {
            trace.diverged = true;
            break;
        }
        let true_error = f_star.map(|fs| p.value(&x) - fs);
        trace.push(TraceRecord {
            iter: k,
            wall_time_s: elapsed,
            f_hat,
            true_error,
            grad_norm_hat: g_norm,
            step_len: step_prev,
            phase: Phase::LineSearch,
            diag: std::mem::take(&mut diag_prev),
        })?;
        if epoch >= cfg.max_epochs
            || cfg.max_iters.is_some_and(|m| k >= m)
            || cfg.time_budget_s.is_some_and(|b| elapsed >= b)
        {
            break;
        }

        let started = Instant::now();
        let (d, mut diag) = match cfg.method {
            FsMethod::LsosFs => {
                let op = FnOperator::new(n, |v: &Vector| {
                    subsampled_hvp(p, &x, &batch, v).expect("batch validated by the value call")
                });
                let out = newton_direction(&op, &g, cfg.delta.at(k), &cfg.cg, cg_max)?;
                trace.eval_counts.hvp_evals += (out.1.cg_iters * batch.len()) as u64;
                out
            }
            FsMethod::LsosBfgs => {
                let mem = memory.as_ref().expect("memory exists for LSOS-BFGS");
                (-mem.apply_inverse_hessian(&g), StepDiagnostics::default())
            }
            FsMethod::SagaLs => (-&g, StepDiagnostics::default()),
        };
        let d_norm = d.norm();
        diag.direction_norm = d_norm;

        let t = if d_norm == 0.0 {
            0.0
        } else {
            let slope = g.dot(&d);
            diag.slope = Some(slope);
            let mut trial = x.clone();
            let bt = backtrack(
                |t| {
                    trial.copy_from(&x);
                    trial.axpy(t, &d, 1.0);
                    subsampled_value(p, &trial, &batch).unwrap_or(f64::NAN)
                },
                f_hat,
                slope,
                &cfg.ls,
                cfg.ls.zeta.at(k),
            );
            trace.eval_counts.f_evals += bt.n_trials as u64;
            diag.ls_trials = bt.n_trials;
            diag.ls_exhausted = !bt.accepted;
            if !bt.accepted {
                exhausted += 1;
                debug!("line search exhausted at k = {k}; taking t = {:e}", bt.t);
            }
            bt.t
        };

        if let Some(mem) = memory.as_mut() {
            let rng = &mut rng;
            let update = mem.record_iterate(&x, k, |w, s| {
                let sample = rng.sample_indices(n_components, hessian_batch);
                subsampled_hvp(p, w, &sample, s)
            })?;
            if update != crate::slbfgs::PairUpdate::None {
                trace.eval_counts.hvp_evals += hessian_batch as u64;
            }
        }
        x.axpy(t, &d, 1.0);
        if let Some(table) = table.as_mut() {
            table.update(p, &x, &batch)?;
        }
        elapsed += started.elapsed().as_secs_f64();
        step_prev = t;
        diag_prev = diag;
        if !all_finite(&x) {
            trace.diverged = true;
            break;
        }
    }
    if exhausted > 0 {
        warn!("{}: line search exhausted on {exhausted} iterations", trace.run_id);
    }
    trace.eval_counts.g_evals = sub_grad_evals + table.as_ref().map_or(0, |t| t.component_grad_evals());
    trace.final_x = Some(x.as_slice().to_vec());
    Ok(trace)
}

fn expect_method(cfg: &FsConfig, method: FsMethod) -> Result<()> {
    if cfg.method == method {
        Ok(())
    } else {
        Err(LsosError::invalid(
            "solver.method",
            format!("{} not handled here", cfg.method.as_str()),
        ))
    }
}

/// Subsampled inexact Newton with the nonmonotone line search.
pub fn run_lsos_fs(p: &dyn FiniteSum, cfg: &FsConfig, x0: &Vector) -> Result<RunTrace> {
    expect_method(cfg, FsMethod::LsosFs)?;
    run_finite_sum(p, cfg, x0)
}

/// SAGA gradient, stochastic L-BFGS direction, nonmonotone line search.
pub fn run_lsos_bfgs(p: &dyn FiniteSum, cfg: &FsConfig, x0: &Vector) -> Result<RunTrace> {
    expect_method(cfg, FsMethod::LsosBfgs)?;
    run_finite_sum(p, cfg, x0)
}

/// SAGA gradient along `−g` with the same line search.
pub fn run_saga_ls(p: &dyn FiniteSum, cfg: &FsConfig, x0: &Vector) -> Result<RunTrace> {
    expect_method(cfg, FsMethod::SagaLs)?;
    run_finite_sum(p, cfg, x0)
}
