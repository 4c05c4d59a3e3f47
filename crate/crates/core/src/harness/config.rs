//! Flat `section.key = value` experiment files.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Keys in the `ls`, `gain`, `solver`, `cg` and `fs` sections may be prefixed
//! by a solver name (`saga-ls.ls.t_ini = 1`) to override them for one solver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{LsosError, Result};
use crate::harness::fs::FsMethod;
use crate::solvers::Method;

pub struct KeyDef {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(key: &'static str, default: &'static str, doc: &'static str) -> KeyDef {
    KeyDef { key, default, doc }
}

/// Every recognised key, its default and a one-line description.
pub const KEYS: &[KeyDef] = &[
    key("experiment.name", "experiment", "label written to the manifest"),
    key(
        "experiment.seed",
        "1",
        "master seed for problem, starting points and noise",
    ),
    key("experiment.reps", "20", "replications per solver"),
    key("experiment.solvers", "lsos,sos,sgd", "comma-separated solver names"),
    key("experiment.out", "out", "output directory"),
    key("experiment.aggregate", "iteration", "checkpoints: iteration | time"),
    key(
        "experiment.time_buckets",
        "100",
        "time-grid size when aggregating by time",
    ),
    key("problem.kind", "synthetic", "synthetic | logistic"),
    key("problem.n", "200", "synthetic: number of variables"),
    key("problem.kappa", "100", "synthetic: condition number of A"),
    key(
        "problem.sigma_pct",
        "0.1",
        "synthetic: noise standard deviation as a percentage of kappa",
    ),
    key(
        "problem.sigma",
        "none",
        "synthetic: absolute noise standard deviation, overrides sigma_pct",
    ),
    key("problem.hess_form", "dense", "synthetic: dense | householder"),
    key("problem.density", "1", "synthetic: requested density of A in (0, 1]"),
    key(
        "problem.solution_tol",
        "1e-10",
        "synthetic: gradient tolerance of the reference solve",
    ),
    key(
        "problem.data",
        "synthetic",
        "logistic: LIBSVM path (plain or gzip) or synthetic",
    ),
    key("problem.samples", "2000", "logistic synthetic: number of samples N"),
    key("problem.features", "50", "logistic synthetic: number of features n"),
    key(
        "problem.separation",
        "1",
        "logistic synthetic: distance between class centres",
    ),
    key(
        "problem.n_features",
        "auto",
        "logistic file: feature count, auto = largest index",
    ),
    key("problem.mu", "auto", "logistic: regularization, auto = 1/N"),
    key("budget.max_iters", "100", "iteration cap of the stochastic solvers"),
    key("budget.epochs", "20", "epoch cap of the finite-sum solvers"),
    key("budget.fs_max_iters", "none", "iteration cap of the finite-sum solvers"),
    key("budget.time_s", "none", "wall-clock cap per run in seconds"),
    key(
        "budget.error_target",
        "none",
        "stop once the true error reaches this value",
    ),
    key(
        "budget.grad_tol",
        "none",
        "stop once the sampled gradient norm reaches this value",
    ),
    key("ls.eta", "1e-4", "Armijo constant"),
    key("ls.beta", "0.5", "backtracking factor"),
    key("ls.t_ini", "1", "first trial step"),
    key("ls.max_backtracks", "60", "backtracking cap"),
    key("ls.zeta", "geometric", "nonmonotone slack: geometric | zero"),
    key(
        "ls.theta",
        "0.9",
        "slack base of the stochastic solvers, zeta_k = theta^k",
    ),
    key("ls.t_min", "1e-3", "switch threshold of the line-search phase"),
    key(
        "ls.switch",
        "step-norm",
        "switch rule: step-norm (t |d| < t_min) | step-only (t < t_min)",
    ),
    key("ls.noise", "common", "trial-point value noise: common | fresh"),
    key("gain.kind", "t-damped", "gain sequence: t-damped | harmonic | constant"),
    key("gain.t", "1e6", "T of the t-damped gain"),
    key("gain.alpha0", "inverse", "first gain: inverse (1/|d0|) or a number"),
    key(
        "gain.anchor_t",
        "1e6",
        "T of the gain used after the line search switches off",
    ),
    key(
        "solver.delta",
        "auto",
        "forcing terms: auto | zero | geometric:<rho> | mu-over-2l | <value>",
    ),
    key("cg.rel_floor", "1e-6", "lower limit on the CG relative tolerance"),
    key("cg.max_iters", "auto", "CG iteration cap, auto = 2n"),
    key("fs.theta", "0.999", "slack base of the finite-sum solvers"),
    key("fs.zeta", "geometric", "finite-sum slack: geometric | zero"),
    key("fs.batch", "auto", "mini-batch size, auto = ceil(sqrt(N))"),
    key(
        "fs.hessian_batch",
        "auto",
        "sample size behind each y pair, auto = ceil(sqrt(N))",
    ),
    key("fs.m", "10", "L-BFGS memory"),
    key("fs.l", "5", "pair-update interval"),
    key("fs.estimator", "auto", "gradient estimator: auto | subsampled | saga"),
    key(
        "grid.candidates",
        "1,0.5,0.1,0.05,0.01,0.005,0.001,0.0005,0.0001,0.00005,0.00001",
        "t_ini candidates of the step-length grid search",
    ),
    key(
        "grid.solvers",
        "none",
        "solvers whose t_ini is grid-searched on replication 0",
    ),
];

/// Sections whose keys can be overridden per solver.
pub const SCOPED_SECTIONS: [&str; 5] = ["ls", "gain", "solver", "cg", "fs"];

pub fn solver_names() -> impl Iterator<Item = &'static str> {
    Method::ALL
        .into_iter()
        .map(Method::as_str)
        .chain(FsMethod::ALL.into_iter().map(FsMethod::as_str))
}

fn key_def(key: &str) -> Option<&'static KeyDef> {
    KEYS.iter().find(|d| d.key == key)
}

fn config_error(key: &str, message: impl Into<String>) -> LsosError {
    LsosError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Splits `<solver>.<section>.<key>` into its solver and base key.
fn split_scoped(key: &str) -> Option<(&str, &str)> {
    let (solver, rest) = key.split_once('.')?;
    let section = rest.split('.').next()?;
    (solver_names().any(|s| s == solver) && SCOPED_SECTIONS.contains(&section)).then_some((solver, rest))
}

fn check_key(key: &str) -> Result<()> {
    let base = split_scoped(key).map_or(key, |(_, base)| base);
    if key_def(base).is_some() {
        Ok(())
    } else {
        Err(config_error(key, "unknown key"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(head, _)| head).trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(LsosError::Parse {
                    line: i + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            if cfg.entries.contains_key(k) {
                return Err(LsosError::Parse {
                    line: i + 1,
                    message: format!("duplicate key `{k}`"),
                });
            }
            cfg.set(k, v).map_err(|e| LsosError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| LsosError::io(path, e))?;
        Config::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        check_key(key)?;
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Explicitly set value, if any.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Value of a global key, falling back to its default.
    pub fn value(&self, key: &str) -> &str {
        self.get(key)
            .or_else(|| key_def(key).map(|d| d.default))
            .unwrap_or_else(|| panic!("`{key}` is not a known key"))
    }

    /// Value of `key` for `solver`: the scoped override, else the global value.
    pub fn solver_value(&self, solver: &str, key: &str) -> &str {
        self.get(&format!("{solver}.{key}")).unwrap_or_else(|| self.value(key))
    }

    /// Copy with every global key present, defaults filled in.
    pub fn resolved(&self) -> Config {
        let mut out = self.clone();
        for d in KEYS {
            out.entries
                .entry(d.key.to_string())
                .or_insert_with(|| d.default.to_string());
        }
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// One `key = value` line per entry, sorted by key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Reads typed values, naming the offending key on failure.
pub struct Reader<'a> {
    cfg: &'a Config,
    solver: Option<&'a str>,
}

impl<'a> Reader<'a> {
    pub fn global(cfg: &'a Config) -> Self {
        Self { cfg, solver: None }
    }

    pub fn for_solver(cfg: &'a Config, solver: &'a str) -> Self {
        Self {
            cfg,
            solver: Some(solver),
        }
    }

    fn path(&self, key: &str) -> String {
        match self.solver {
            Some(s) if self.cfg.get(&format!("{s}.{key}")).is_some() => format!("{s}.{key}"),
            _ => key.to_string(),
        }
    }

    pub fn str(&self, key: &str) -> &'a str {
        match self.solver {
            Some(s) => self.cfg.solver_value(s, key),
            None => self.cfg.value(key),
        }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        let raw = self.str(key);
        raw.parse()
            .map_err(|_| config_error(&self.path(key), format!("expected {what}, got `{raw}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parsed(key, "a number")?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(config_error(&self.path(key), "must be finite"))
        }
    }

    pub fn positive(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(config_error(&self.path(key), format!("must be positive, got {v}")))
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parsed(key, "a non-negative integer")
    }

    /// `none` / `auto` map to `None`.
    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.str(key) {
            "none" | "auto" => Ok(None),
            _ => self.f64(key).map(Some),
        }
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.str(key) {
            "none" | "auto" => Ok(None),
            _ => self.usize(key).map(Some),
        }
    }

    pub fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> Result<T> {
        let raw = self.str(key);
        options
            .iter()
            .find(|(name, _)| *name == raw)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                config_error(
                    &self.path(key),
                    format!("expected one of {}, got `{raw}`", names.join(" | ")),
                )
            })
    }

    /// Comma-separated list; `none` or empty is the empty list.
    pub fn list(&self, key: &str) -> Vec<&'a str> {
        match self.str(key) {
            "none" | "" => Vec::new(),
            raw => raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect(),
        }
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> LsosError {
        config_error(&self.path(key), message)
    }
}
