//! Step-length policies: predefined gain sequences and the nonmonotone
//! backtracking line search with its one-way switch to the gain sequence.

use crate::error::{LsosError, Result};
use crate::oracle::NoiseConsistency;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainKind {
    /// `α_k = α` for every k. Not a Robbins–Monro sequence; test override only.
    Constant { alpha: f64 },
    /// `α_k = α₀ / (k + 1)`.
    Harmonic { alpha0: f64 },
    /// `α_k = α₀ · T / (T + k)`.
    TDamped { alpha0: f64, t: f64 },
    /// `α_k = α_{k_τ} · T / (T + k − k_τ)` for `k ≥ k_τ`.
    TDampedAnchored { alpha_ktau: f64, t: f64, k_tau: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    kind: GainKind,
    current_k: usize,
}

impl GainSchedule {
    pub fn new(kind: GainKind) -> Result<Self> {
        let (alpha, t) = match kind {
            GainKind::Constant { alpha } => (alpha, 1.0),
            GainKind::Harmonic { alpha0 } => (alpha0, 1.0),
            GainKind::TDamped { alpha0, t } => (alpha0, t),
            GainKind::TDampedAnchored { alpha_ktau, t, .. } => (alpha_ktau, t),
        };
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LsosError::invalid("alpha0", format!("must be positive, got {alpha}")));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(LsosError::invalid("T", format!("must be positive, got {t}")));
        }
        let current_k = match kind {
            GainKind::TDampedAnchored { k_tau, .. } => k_tau,
            _ => 0,
        };
        Ok(Self { kind, current_k })
    }

    /// Anchored schedule started at the switching iteration.
    pub fn anchored(alpha_ktau: f64, t: f64, k_tau: usize) -> Result<Self> {
        Self::new(GainKind::TDampedAnchored { alpha_ktau, t, k_tau })
    }

    pub fn kind(&self) -> GainKind {
        self.kind
    }

    pub fn current_k(&self) -> usize {
        self.current_k
    }

    /// Moves the counter without drawing, e.g. to align with a global iteration count.
    pub fn seek(&mut self, k: usize) {
        self.current_k = k;
    }

    pub fn value_at(&self, k: usize) -> f64 {
        let k = k as f64;
        match self.kind {
            GainKind::Constant { alpha } => alpha,
            GainKind::Harmonic { alpha0 } => alpha0 / (k + 1.0),
            GainKind::TDamped { alpha0, t } => alpha0 * t / (t + k),
            GainKind::TDampedAnchored { alpha_ktau, t, k_tau } => {
                let since = (k - k_tau as f64).max(0.0);
                alpha_ktau * t / (t + since)
            }
        }
    }

    /// `α_k` for the current k, then advances k.
    pub fn next_gain(&mut self) -> f64 {
        let a = self.value_at(self.current_k);
        self.current_k += 1;
        a
    }
}

/// Nonmonotone slack sequence `ζ_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Zeta {
    Geometric { theta: f64 },
    Zero,
}

impl Zeta {
    pub fn at(self, k: usize) -> f64 {
        match self {
            Zeta::Geometric { theta } => theta.powf(k as f64),
            Zeta::Zero => 0.0,
        }
    }

    /// `Σ_k ζ_k`.
    pub fn total(self) -> f64 {
        match self {
            Zeta::Geometric { theta } => 1.0 / (1.0 - theta),
            Zeta::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SwitchRule {
    /// Deactivate when `t_k ‖d_k‖ < t_min`.
    StepNorm,
    /// Deactivate when `t_k < t_min`.
    StepOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    /// Armijo parameter.
    pub eta: f64,
    /// Backtracking factor.
    pub beta: f64,
    pub zeta: Zeta,
    /// First trial step of every search.
    pub t_start: f64,
    pub max_backtracks: usize,
    pub t_min: f64,
    pub switch_rule: SwitchRule,
    pub noise: NoiseConsistency,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            beta: 0.5,
            zeta: Zeta::Geometric { theta: 0.9 },
            t_start: 1.0,
            max_backtracks: 60,
            t_min: 1e-3,
            switch_rule: SwitchRule::StepNorm,
            noise: NoiseConsistency::Common,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.eta) {
            return Err(LsosError::invalid(
                "ls.eta",
                format!("must lie in (0, 1), got {}", self.eta),
            ));
        }
        if !open_unit(self.beta) {
            return Err(LsosError::invalid(
                "ls.beta",
                format!("must lie in (0, 1), got {}", self.beta),
            ));
        }
        if let Zeta::Geometric { theta } = self.zeta {
            if !open_unit(theta) {
                return Err(LsosError::invalid(
                    "ls.theta",
                    format!("must lie in (0, 1), got {theta}"),
                ));
            }
        }
        if !(self.t_start > 0.0 && self.t_start.is_finite()) {
            return Err(LsosError::invalid("ls.t_ini", "must be positive"));
        }
        if self.max_backtracks < 1 {
            return Err(LsosError::invalid("ls.max_backtracks", "must be at least 1"));
        }
        if !(self.t_min > 0.0) {
            return Err(LsosError::invalid("ls.t_min", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backtrack {
    pub t: f64,
    pub accepted: bool,
    pub n_trials: usize,
}

/// Armijo condition with additive slack.
#[inline]
pub fn sufficient_decrease(f_t: f64, f0: f64, t: f64, slope: f64, eta: f64, zeta: f64) -> bool {
    f_t.is_finite() && f_t <= f0 + eta * t * slope + zeta
}

/// Tries `t = t_start·βʲ` for `j = 0, 1, …, max_backtracks` and returns the
/// first `t` with `f̂(t) ≤ f0 + η t ĝᵀd + ζ_k`. `f_hat` must evaluate the
/// same sampled function that produced `f0`. On exhaustion the last trial is
/// returned with `accepted = false`.
pub fn backtrack<F>(mut f_hat: F, f0: f64, slope: f64, cfg: &LineSearchConfig, zeta_k: f64) -> Backtrack
where
    F: FnMut(f64) -> f64,
{
    let mut t = cfg.t_start;
    for j in 0..=cfg.max_backtracks {
        if sufficient_decrease(f_hat(t), f0, t, slope, cfg.eta, zeta_k) {
            return Backtrack {
                t,
                accepted: true,
                n_trials: j + 1,
            };
        }
        if j < cfg.max_backtracks {
            t *= cfg.beta;
        }
    }
    Backtrack {
        t,
        accepted: false,
        n_trials: cfg.max_backtracks + 1,
    }
}

/// `true` when the line search should be deactivated for the rest of the run.
pub fn switch_check(t: f64, d_norm: f64, cfg: &LineSearchConfig) -> bool {
    match cfg.switch_rule {
        SwitchRule::StepOnly => t < cfg.t_min,
        SwitchRule::StepNorm => t * d_norm < cfg.t_min,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tdamped_values() {
        let mut s = GainSchedule::new(GainKind::TDamped { alpha0: 0.5, t: 1e6 }).unwrap();
        assert_eq!(s.next_gain(), 0.5);
        assert_eq!(s.value_at(1_000_000), 0.25);
        for k in [0usize, 1, 17, 123_456] {
            assert!((s.value_at(k) * (1e6 + k as f64) / 1e6 - 0.5).abs() <= 1e-15);
        }
    }

    #[test]
    fn anchored_starts_at_alpha_ktau() {
        let t_min = 1e-3;
        let d_norm = 0.37;
        let mut s = GainSchedule::anchored(t_min / d_norm, 1e6, 37).unwrap();
        assert_eq!(s.current_k(), 37);
        assert_eq!(s.next_gain(), t_min / d_norm);
        assert!(s.next_gain() < t_min / d_norm);
    }

    #[test]
    fn harmonic_square_sum_bound() {
        let s = GainSchedule::new(GainKind::Harmonic { alpha0: 2.0 }).unwrap();
        let total: f64 = (0..1_000_000).map(|k| s.value_at(k).powi(2)).sum();
        assert!(total <= 4.0 * std::f64::consts::PI.powi(2) / 6.0);
        assert!((0..1000).all(|k| s.value_at(k) > 0.0));
    }

    #[test]
    fn rejects_non_positive_gain() {
        assert!(GainSchedule::new(GainKind::TDamped { alpha0: 0.0, t: 1.0 }).is_err());
    }

    #[test]
    fn geometric_zeta_total() {
        let z = Zeta::Geometric { theta: 0.9 };
        let partial: f64 = (0..2000).map(|k| z.at(k)).sum();
        assert!((partial - z.total()).abs() < 1e-9);
        assert!((z.total() - 10.0).abs() < 1e-12);
    }

    fn cfg(eta: f64, beta: f64) -> LineSearchConfig {
        LineSearchConfig {
            eta,
            beta,
            ..LineSearchConfig::default()
        }
    }

    #[test]
    fn armijo_holds_at_first_trial() {
        let f0 = 3.0;
        let r = backtrack(|t| f0 - t, f0, -1.0, &cfg(1e-4, 0.5), 0.0);
        assert_eq!(
            r,
            Backtrack {
                t: 1.0,
                accepted: true,
                n_trials: 1
            }
        );
    }

    #[test]
    fn slack_admits_ascent() {
        let f0 = 3.0;
        let r = backtrack(|t| f0 + t, f0, -1.0, &cfg(1e-4, 0.5), 1.5);
        assert!(r.accepted);
        assert_eq!(r.t, 1.0);
    }

    #[test]
    fn quadratic_accepts_unit_step() {
        let f = |t: f64| 0.5 * (t - 1.0).powi(2);
        let r = backtrack(f, 0.5, -1.0, &cfg(0.5, 0.5), 0.0);
        assert_eq!(r.t, 1.0);
        assert!(r.accepted);
    }

    #[test]
    fn non_finite_trials_keep_backtracking() {
        let r = backtrack(|t| if t > 0.2 { f64::NAN } else { -t }, 0.0, -1.0, &cfg(1e-4, 0.5), 0.0);
        assert!(r.accepted);
        assert_eq!(r.t, 0.125);
        assert_eq!(r.n_trials, 4);
    }

    #[test]
    fn exhaustion_reports_last_trial() {
        let c = LineSearchConfig {
            max_backtracks: 5,
            ..LineSearchConfig::default()
        };
        let r = backtrack(|_| 1.0, 0.0, -1.0, &c, 0.0);
        assert!(!r.accepted);
        assert_eq!(r.n_trials, 6);
        assert_eq!(r.t, 0.5f64.powi(5));
    }

    #[test]
    fn switch_boundaries() {
        let mut c = LineSearchConfig {
            switch_rule: SwitchRule::StepOnly,
            ..LineSearchConfig::default()
        };
        assert!(!switch_check(c.t_min, 10.0, &c));
        c.switch_rule = SwitchRule::StepNorm;
        assert!(switch_check(1e-2, 1e-2, &c));
        assert!(!switch_check(1.0, 1.0, &c));
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        assert!(cfg(1.0, 0.5).validate().is_err());
        assert!(cfg(0.1, 0.0).validate().is_err());
        assert!(LineSearchConfig {
            max_backtracks: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LineSearchConfig::default().validate().is_ok());
    }

    proptest! {
        // Soundness and minimality on an arbitrary smooth 1-D function.
        #[test]
        fn accepted_step_is_first_admissible(
            a in -5.0f64..5.0, b in 0.0f64..50.0, c in -3.0f64..3.0,
            eta in 0.01f64..0.9, beta in 0.1f64..0.9, zeta in 0.0f64..0.5,
            t_start in 0.01f64..8.0,
        ) {
            let f = |t: f64| a * t + b * t * t + (c * t).sin();
            let f0 = f(0.0);
            let slope = a + c;
            let c_ls = LineSearchConfig { eta, beta, t_start, max_backtracks: 60, ..Default::default() };
            let r = backtrack(f, f0, slope, &c_ls, zeta);
            if r.accepted {
                prop_assert!(sufficient_decrease(f(r.t), f0, r.t, slope, eta, zeta));
                if r.n_trials > 1 {
                    let prev = r.t / beta;
                    prop_assert!(!sufficient_decrease(f(prev), f0, prev, slope, eta, zeta));
                }
            }
        }
    }
}
