//! Drivers for SOS, LSOS with exact or inexact Newton directions, and the
//! SGD / SGD-LS baselines. Every driver returns a [`RunTrace`] whose record
//! `k` describes the iterate `x_k`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use log::{debug, warn};

use crate::error::{check_dim, LsosError, Result};
use crate::linalg::{solve_cg, solve_direct, SpdOperator, Vector};
use crate::oracle::{NoisyOracle, Want};
use crate::rng::RngStream;
use crate::steplen::{backtrack, switch_check, GainKind, GainSchedule, LineSearchConfig, SwitchRule};
use crate::trace::{Phase, RunTrace, StepDiagnostics, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Sos,
    Lsos,
    LsosInexact,
    Sgd,
    SgdLs,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Sos,
        Method::Lsos,
        Method::LsosInexact,
        Method::Sgd,
        Method::SgdLs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sos => "sos",
            Method::Lsos => "lsos",
            Method::LsosInexact => "lsos-i",
            Method::Sgd => "sgd",
            Method::SgdLs => "sgd-ls",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }

    fn uses_newton(self) -> bool {
        matches!(self, Method::Sos | Method::Lsos | Method::LsosInexact)
    }

    fn uses_line_search(self) -> bool {
        matches!(self, Method::Lsos | Method::LsosInexact | Method::SgdLs)
    }
}

/// Forcing terms `δ_k` for `‖B d + g‖ ≤ δ_k ‖g‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSchedule {
    Zero,
    Geometric { rho: f64 },
    Constant { value: f64 },
}

impl DeltaSchedule {
    pub fn at(self, k: usize) -> f64 {
        match self {
            DeltaSchedule::Zero => 0.0,
            DeltaSchedule::Geometric { rho } => rho.powf(k as f64),
            DeltaSchedule::Constant { value } => value,
        }
    }
}

/// Where the first gain comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha0 {
    /// `α₀ = 1/‖d⁰‖`.
    InverseFirstDirection,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainConfig {
    TDamped { t: f64, alpha0: Alpha0 },
    Harmonic { alpha0: Alpha0 },
    Constant { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Lower limit on the CG relative tolerance.
    pub rel_floor: f64,
    /// Iteration cap; `None` means `2n`.
    pub max_iters: Option<usize>,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            rel_floor: 1e-6,
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iters: usize,
    pub time_budget_s: Option<f64>,
    /// Stop once the sampled gradient norm falls to this value.
    pub grad_tol: Option<f64>,
    /// Stop once the true error falls to this value (needs a known optimum).
    pub error_target: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iters: 100,
            time_budget_s: None,
            grad_tol: None,
            error_target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Gain sequence of SOS and SGD.
    pub gain: GainConfig,
    /// `T` of the anchored schedule used after the line search switches off.
    pub anchor_t: f64,
    pub ls: LineSearchConfig,
    pub delta: DeltaSchedule,
    pub cg: CgConfig,
    pub stop: StopRule,
    pub seed: u64,
    pub stream_id: u64,
}

impl SolverConfig {
    /// Defaults used in the synthetic experiments.
    pub fn new(method: Method) -> Self {
        let delta = match method {
            Method::LsosInexact => DeltaSchedule::Geometric { rho: 0.95 },
            _ => DeltaSchedule::Zero,
        };
        Self {
            method,
            gain: GainConfig::TDamped {
                t: 1e6,
                alpha0: Alpha0::InverseFirstDirection,
            },
            anchor_t: 1e6,
            ls: LineSearchConfig::default(),
            delta,
            cg: CgConfig::default(),
            stop: StopRule::default(),
            seed: 0,
            stream_id: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ls.validate()?;
        if !(self.anchor_t > 0.0 && self.anchor_t.is_finite()) {
            return Err(LsosError::invalid("solver.anchor_t", "must be positive and finite"));
        }
        match self.delta {
            DeltaSchedule::Geometric { rho } if !(rho > 0.0 && rho < 1.0) => {
                return Err(LsosError::invalid(
                    "solver.delta_rho",
                    format!("must lie in (0, 1), got {rho}"),
                ));
            }
            DeltaSchedule::Constant { value } if !(0.0..=1.0).contains(&value) => {
                return Err(LsosError::invalid(
                    "solver.delta",
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
        if let Some(b) = self.stop.time_budget_s {
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

    fn initial_gain(&self, d0_norm: f64) -> Result<GainSchedule> {
        let resolve = |a: Alpha0| match a {
            Alpha0::InverseFirstDirection if d0_norm > 0.0 => 1.0 / d0_norm,
            Alpha0::InverseFirstDirection => 1.0,
            Alpha0::Fixed(v) => v,
        };
        let kind = match self.gain {
            GainConfig::TDamped { t, alpha0 } => GainKind::TDamped {
                alpha0: resolve(alpha0),
                t,
            },
            GainConfig::Harmonic { alpha0 } => GainKind::Harmonic {
                alpha0: resolve(alpha0),
            },
            GainConfig::Constant { alpha } => GainKind::Constant { alpha },
        };
        GainSchedule::new(kind)
    }
}

/// Starting point with i.i.d. `N(0, 5)` entries (5 is the standard deviation).
pub fn default_x0(n: usize, rng: &mut RngStream) -> Vector {
    Vector::from_fn(n, |_, _| 5.0 * rng.standard_normal())
}

/// Direction `d` with `‖B d + g‖ ≤ δ ‖g‖`: Cholesky when `δ = 0` and `B` is
/// explicit, CG otherwise. Falls back to `−g` when `B` is not positive definite.
pub fn newton_direction(
    h: &dyn SpdOperator,
    g: &Vector,
    delta: f64,
    cg: &CgConfig,
    cg_max: usize,
) -> Result<(Vector, StepDiagnostics)> {
    let mut diag = StepDiagnostics::default();
    let rhs = -g;
    let g_norm = g.norm();
    let solved = match h.dense() {
        Some(m) if delta == 0.0 => solve_direct(m, &rhs).inspect(|d| {
            if g_norm > 0.0 {
                diag.residual_ratio = Some((m * d + g).norm() / g_norm);
            }
        }),
        _ => {
            let rel = delta.max(cg.rel_floor).min(1.0);
            solve_cg(h, &rhs, rel, cg_max).map(|rep| {
                if !rep.converged {
                    warn!(
                        "CG stopped at relative residual {:e} > {rel:e} after {} iterations",
                        rep.rel_residual, rep.iters
                    );
                }
                diag.cg_iters = rep.iters;
                diag.residual_ratio = Some(rep.rel_residual);
                diag.residual_bound = Some(rel);
                rep.solution
            })
        }
    };
    match solved {
        Ok(d) => Ok((d, diag)),
        Err(LsosError::NotPositiveDefinite(why)) => {
            debug!("sampled Hessian rejected ({why}); using -g");
            Ok((
                rhs,
                StepDiagnostics {
                    fallback: true,
                    ..StepDiagnostics::default()
                },
            ))
        }
        Err(e) => Err(e),
    }
}

fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs `cfg.method` from `x0`.
pub fn run(oracle: &dyn NoisyOracle, cfg: &SolverConfig, x0: &Vector) -> Result<RunTrace> {
    cfg.validate()?;
    let n = oracle.dim();
    check_dim(n, x0.len())?;
    let method = cfg.method;
    let newton = method.uses_newton();
    let want = if newton { Want::ALL } else { Want::VALUE_GRADIENT };
    let cg_max = cfg.cg.max_iters.unwrap_or(2 * n).max(1);
    let mut rng = RngStream::new(cfg.seed, cfg.stream_id);
    let mut trace = RunTrace::new(format!("{}-r{}", method.as_str(), cfg.stream_id), cfg.spec_hash());

    let mut phase = if method.uses_line_search() {
        Phase::LineSearch
    } else {
        Phase::GainSequence
    };
    let mut gain: Option<GainSchedule> = None;
    let mut x = x0.clone();
    let mut elapsed = 0.0;
    let mut step_prev = 0.0;
    let mut diag_prev = StepDiagnostics::default();

    for k in 0.. {
        let started = Instant::now();
        let sample = oracle.sample(&x, want, &mut rng)?;
        trace.eval_counts += sample.eval_counts;
        let f_hat = sample.value.expect("value requested");
        let g = sample.gradient.as_ref().expect("gradient requested");
        let g_norm = g.norm();
        elapsed += started.elapsed().as_secs_f64();
        if !f_hat.is_finite() || !g_norm.is_finite() {
            trace.diverged = true;
            break;
        }
        let true_error = oracle.true_error(&x);
        trace.push(TraceRecord {
            iter: k,
            wall_time_s: elapsed,
            f_hat,
            true_error,
            grad_norm_hat: g_norm,
            step_len: step_prev,
            phase,
            diag: std::mem::take(&mut diag_prev),
        })?;
        let stop = &cfg.stop;
        if k >= stop.max_iters
            || stop.time_budget_s.is_some_and(|b| elapsed >= b)
            || stop.grad_tol.is_some_and(|tol| g_norm <= tol)
            || matches!((stop.error_target, true_error), (Some(target), Some(e)) if e <= target)
        {
            break;
        }

        let started = Instant::now();
        let (d, mut diag) = if newton {
            let h = sample.hessian.as_deref().expect("Hessian requested");
            newton_direction(h, g, cfg.delta.at(k), &cfg.cg, cg_max)?
        } else {
            (-g, StepDiagnostics::default())
        };
        let d_norm = d.norm();
        diag.direction_norm = d_norm;

        let t = if d_norm == 0.0 {
            0.0
        } else if phase == Phase::LineSearch {
            let slope = g.dot(&d);
            diag.slope = Some(slope);
            let mut trial = x.clone();
            let bt = backtrack(
                |t| {
                    trial.copy_from(&x);
                    trial.axpy(t, &d, 1.0);
                    oracle
                        .trial_value(&trial, &sample, cfg.ls.noise, &mut rng)
                        .unwrap_or(f64::NAN)
                },
                f_hat,
                slope,
                &cfg.ls,
                cfg.ls.zeta.at(k),
            );
            trace.eval_counts.f_evals += bt.n_trials as u64;
            diag.ls_trials = bt.n_trials;
            diag.ls_exhausted = !bt.accepted;
            if !bt.accepted || switch_check(bt.t, d_norm, &cfg.ls) {
                phase = Phase::GainSequence;
                let anchor = match cfg.ls.switch_rule {
                    SwitchRule::StepNorm => cfg.ls.t_min / d_norm,
                    SwitchRule::StepOnly => cfg.ls.t_min,
                };
                debug!("line search off at k = {k}; anchored gain {anchor:e}");
                let mut s = GainSchedule::anchored(anchor, cfg.anchor_t, k)?;
                let a = s.next_gain();
                gain = Some(s);
                a
            } else {
                bt.t
            }
        } else {
            let s = match gain.as_mut() {
                Some(s) => s,
                None => {
                    let mut s = cfg.initial_gain(d_norm)?;
                    s.seek(k);
                    gain.insert(s)
                }
            };
            s.next_gain()
        };
        x.axpy(t, &d, 1.0);
        elapsed += started.elapsed().as_secs_f64();
        step_prev = t;
        diag_prev = diag;
        if !all_finite(&x) {
            trace.diverged = true;
            break;
        }
    }
    trace.final_x = Some(x.as_slice().to_vec());
    Ok(trace)
}

fn expect_method(cfg: &SolverConfig, allowed: &[Method]) -> Result<()> {
    if allowed.contains(&cfg.method) {
        Ok(())
    } else {
        Err(LsosError::invalid(
            "solver.method",
            format!("{} not handled here", cfg.method.as_str()),
        ))
    }
}

/// Stochastic Newton with a predefined gain sequence.
pub fn run_sos(oracle: &dyn NoisyOracle, cfg: &SolverConfig, x0: &Vector) -> Result<RunTrace> {
    expect_method(cfg, &[Method::Sos])?;
    run(oracle, cfg, x0)
}

/// Line-search stochastic Newton, exact or inexact.
pub fn run_lsos(oracle: &dyn NoisyOracle, cfg: &SolverConfig, x0: &Vector) -> Result<RunTrace> {
    expect_method(cfg, &[Method::Lsos, Method::LsosInexact])?;
    run(oracle, cfg, x0)
}

/// Stochastic gradient descent, with or without the line search.
pub fn run_sgd(oracle: &dyn NoisyOracle, cfg: &SolverConfig, x0: &Vector) -> Result<RunTrace> {
    expect_method(cfg, &[Method::Sgd, Method::SgdLs])?;
    run(oracle, cfg, x0)
}
