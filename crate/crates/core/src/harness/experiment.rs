//! Experiment specs, problem construction, replication pools and output files.
//!
//! Output layout of [`run_experiment`]:
//! `trace_<solver>_r<rep>.csv` per run, `aggregate_<solver>.csv` per solver
//! and `manifest.txt`, itself a spec file that reproduces the run.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use crate::error::{LsosError, Result};
use crate::harness::aggregate::{aggregate, AggregateCurve, AggregateMode, Z_95};
use crate::harness::config::{Config, Reader};
use crate::harness::fs::{run_finite_sum, FsConfig, FsMethod, GradientEstimator};
use crate::harness::grid::{grid_search, validate_candidates, GridOutcome};
use crate::linalg::Vector;
use crate::logreg::{generate_synthetic_classification, load_libsvm, LogRegModel};
use crate::rng::RngStream;
use crate::solvers::{default_x0, run, Alpha0, DeltaSchedule, GainConfig, Method, SolverConfig};
use crate::steplen::{SwitchRule, Zeta};
use crate::synthetic::{ConvexRandomProblem, HessForm};
use crate::trace::RunTrace;
use crate::NoiseConsistency;

/// Stream id of the problem generator.
pub const PROBLEM_STREAM: u64 = u64::MAX;
/// Fork tag of the starting-point stream.
pub const X0_TAG: u64 = 0x5830;
/// Fork tag from which the solver noise seed is derived.
pub const SOLVER_TAG: u64 = 0x534f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Stochastic(Method),
    FiniteSum(FsMethod),
}

impl SolverKind {
    pub fn parse(s: &str) -> Option<SolverKind> {
        Method::parse(s)
            .map(SolverKind::Stochastic)
            .or_else(|| FsMethod::parse(s).map(SolverKind::FiniteSum))
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Stochastic(m) => m.as_str(),
            SolverKind::FiniteSum(m) => m.as_str(),
        }
    }

    pub fn uses_line_search(self) -> bool {
        match self {
            SolverKind::Stochastic(m) => matches!(m, Method::Lsos | Method::LsosInexact | Method::SgdLs),
            SolverKind::FiniteSum(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        samples: usize,
        features: usize,
        separation: f64,
    },
    File {
        path: PathBuf,
        n_features: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Synthetic {
        n: usize,
        kappa: f64,
        sigma: f64,
        hess_form: HessForm,
        density: f64,
        solution_tol: f64,
    },
    Logistic {
        data: DataSource,
        mu: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Every key with defaults filled in; the source of all solver settings.
    pub config: Config,
    pub name: String,
    pub seed: u64,
    pub reps: usize,
    pub solvers: Vec<SolverKind>,
    pub output_dir: PathBuf,
    pub problem: ProblemSpec,
    pub aggregate: AggregateMode,
    pub grid_candidates: Vec<f64>,
    pub grid_solvers: Vec<SolverKind>,
}

/// Desk-scale preset spec files.
pub const PRESETS: [(&str, &str); 3] = [
    (
        "fig1-small",
        "experiment.name = fig1-small
experiment.solvers = lsos,sos,sgd
problem.kind = synthetic
problem.n = 200
problem.kappa = 100
problem.sigma_pct = 0.1
problem.hess_form = dense
budget.max_iters = 100
",
    ),
    (
        "fig2-small",
        "experiment.name = fig2-small
experiment.solvers = lsos,lsos-i,sgd-ls
problem.kind = synthetic
problem.n = 2000
problem.kappa = 100
problem.sigma_pct = 0.1
problem.hess_form = householder
budget.max_iters = 100
",
    ),
    (
        "fig3-synthetic",
        "experiment.name = fig3-synthetic
experiment.solvers = lsos-bfgs,saga-ls
problem.kind = logistic
problem.data = synthetic
problem.samples = 2000
problem.features = 50
budget.epochs = 20
grid.solvers = lsos-bfgs,saga-ls
",
    ),
];

pub fn preset(name: &str) -> Result<Config> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            LsosError::invalid(
                "preset",
                format!("unknown preset `{name}`; available: {}", names.join(", ")),
            )
        })?;
    Config::parse(text)
}

/// Re-labels a parameter error with the config key it came from.
fn scoped(r: &Reader, e: LsosError) -> LsosError {
    match e {
        LsosError::InvalidParameter { name, reason } => r.error(name, reason),
        other => other,
    }
}

fn parse_solvers(r: &Reader, key: &str) -> Result<Vec<SolverKind>> {
    let mut out = Vec::new();
    for name in r.list(key) {
        let kind = SolverKind::parse(name).ok_or_else(|| r.error(key, format!("unknown solver `{name}`")))?;
        if out.contains(&kind) {
            return Err(r.error(key, format!("solver `{name}` listed twice")));
        }
        out.push(kind);
    }
    Ok(out)
}

impl ExperimentSpec {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let config = cfg.resolved();
        let r = Reader::global(&config);
        let reps = r.usize("experiment.reps")?;
        if reps == 0 {
            return Err(r.error("experiment.reps", "must be at least 1"));
        }
        let solvers = parse_solvers(&r, "experiment.solvers")?;
        if solvers.is_empty() {
            return Err(r.error("experiment.solvers", "need at least one solver"));
        }
        let kind = r.choice("problem.kind", &[("synthetic", false), ("logistic", true)])?;
        let problem = if kind {
            let data = match r.str("problem.data") {
                "synthetic" => DataSource::Synthetic {
                    samples: r.usize("problem.samples")?,
                    features: r.usize("problem.features")?,
                    separation: r.f64("problem.separation")?,
                },
                path => DataSource::File {
                    path: PathBuf::from(path),
                    n_features: r.opt_usize("problem.n_features")?,
                },
            };
            let mu = match r.str("problem.mu") {
                "auto" => None,
                _ => Some(r.positive("problem.mu")?),
            };
            ProblemSpec::Logistic { data, mu }
        } else {
            let n = r.usize("problem.n")?;
            if n == 0 {
                return Err(r.error("problem.n", "must be at least 1"));
            }
            let kappa = r.f64("problem.kappa")?;
            if !(kappa > 1.0) {
                return Err(r.error("problem.kappa", "must exceed 1"));
            }
            let sigma = match r.opt_f64("problem.sigma")? {
                Some(s) => s,
                None => r.f64("problem.sigma_pct")? / 100.0 * kappa,
            };
            if sigma < 0.0 {
                return Err(r.error("problem.sigma", "must be non-negative"));
            }
            ProblemSpec::Synthetic {
                n,
                kappa,
                sigma,
                hess_form: r.choice(
                    "problem.hess_form",
                    &[
                        ("dense", HessForm::DenseSpd),
                        ("householder", HessForm::HouseholderFactored),
                    ],
                )?,
                density: r.positive("problem.density")?,
                solution_tol: r.positive("problem.solution_tol")?,
            }
        };
        for s in &solvers {
            let ok = matches!(
                (s, &problem),
                (SolverKind::Stochastic(_), ProblemSpec::Synthetic { .. })
                    | (SolverKind::FiniteSum(_), ProblemSpec::Logistic { .. })
            );
            if !ok {
                return Err(r.error(
                    "experiment.solvers",
                    format!(
                        "solver `{}` does not apply to a {} problem",
                        s.name(),
                        r.str("problem.kind")
                    ),
                ));
            }
        }
        let aggregate = match r.choice("experiment.aggregate", &[("iteration", false), ("time", true)])? {
            false => AggregateMode::ByIteration,
            true => AggregateMode::ByTimeBucket {
                buckets: r.usize("experiment.time_buckets")?,
            },
        };
        let grid_candidates = r
            .list("grid.candidates")
            .into_iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| r.error("grid.candidates", format!("bad number `{c}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let grid_solvers = parse_solvers(&r, "grid.solvers")?;
        if !grid_solvers.is_empty() {
            validate_candidates(&grid_candidates).map_err(|e| r.error("grid.candidates", e.to_string()))?;
        }
        for s in &grid_solvers {
            if !solvers.contains(s) {
                return Err(r.error("grid.solvers", format!("`{}` is not in experiment.solvers", s.name())));
            }
            if !s.uses_line_search() {
                return Err(r.error("grid.solvers", format!("`{}` has no line search", s.name())));
            }
        }
        let spec = ExperimentSpec {
            name: r.str("experiment.name").to_string(),
            seed: r.u64("experiment.seed")?,
            reps,
            solvers,
            output_dir: PathBuf::from(r.str("experiment.out")),
            problem,
            aggregate,
            grid_candidates,
            grid_solvers,
            config: config.clone(),
        };
        for &s in &spec.solvers {
            match s {
                SolverKind::Stochastic(m) => spec.stochastic_config(m, 0).map(drop)?,
                SolverKind::FiniteSum(m) => spec.fs_config(m, None, 0).map(drop)?,
            }
        }
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_config(&Config::parse(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_config(&Config::from_file(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_config(&preset(name)?)
    }

    /// Re-validates after setting `key`.
    pub fn with(&self, key: &str, value: impl Into<String>) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.set(key, value)?;
        Self::from_config(&cfg)
    }

    /// Seed of the solver noise streams; replication `r` uses stream `r`.
    pub fn solver_seed(&self) -> u64 {
        RngStream::new(self.seed, 0).fork(SOLVER_TAG).seed()
    }

    fn line_search(&self, r: &Reader, zeta_key: &str, theta_key: &str) -> Result<crate::steplen::LineSearchConfig> {
        let zeta = match r.choice(zeta_key, &[("geometric", true), ("zero", false)])? {
            true => Zeta::Geometric {
                theta: r.f64(theta_key)?,
            },
            false => Zeta::Zero,
        };
        let ls = crate::steplen::LineSearchConfig {
            eta: r.f64("ls.eta")?,
            beta: r.f64("ls.beta")?,
            zeta,
            t_start: r.f64("ls.t_ini")?,
            max_backtracks: r.usize("ls.max_backtracks")?,
            t_min: r.f64("ls.t_min")?,
            switch_rule: r.choice(
                "ls.switch",
                &[("step-norm", SwitchRule::StepNorm), ("step-only", SwitchRule::StepOnly)],
            )?,
            noise: r.choice(
                "ls.noise",
                &[("common", NoiseConsistency::Common), ("fresh", NoiseConsistency::Fresh)],
            )?,
        };
        ls.validate().map_err(|e| scoped(r, e))?;
        Ok(ls)
    }

    fn delta(&self, r: &Reader, default: DeltaSchedule, mu_over_2l: Option<f64>) -> Result<DeltaSchedule> {
        let raw = r.str("solver.delta");
        Ok(match raw {
            "auto" => default,
            "zero" => DeltaSchedule::Zero,
            "mu-over-2l" => match mu_over_2l {
                Some(v) => DeltaSchedule::Constant { value: v },
                // Spec validation runs before the model exists.
                None if r.str("problem.kind") == "logistic" => DeltaSchedule::Constant { value: 0.0 },
                None => return Err(r.error("solver.delta", "mu-over-2l needs a logistic problem")),
            },
            _ => match raw.strip_prefix("geometric:") {
                Some(rho) => DeltaSchedule::Geometric {
                    rho: rho
                        .parse()
                        .map_err(|_| r.error("solver.delta", format!("bad rho in `{raw}`")))?,
                },
                None => DeltaSchedule::Constant {
                    value: raw
                        .parse()
                        .map_err(|_| r.error("solver.delta", format!("unrecognised `{raw}`")))?,
                },
            },
        })
    }

    /// Resolved settings of a stochastic solver for replication `rep`.
    pub fn stochastic_config(&self, method: Method, rep: usize) -> Result<SolverConfig> {
        let r = Reader::for_solver(&self.config, method.as_str());
        let mut c = SolverConfig::new(method);
        c.ls = self.line_search(&r, "ls.zeta", "ls.theta")?;
        let alpha0 = match r.str("gain.alpha0") {
            "inverse" => Alpha0::InverseFirstDirection,
            _ => Alpha0::Fixed(r.positive("gain.alpha0")?),
        };
        c.gain = match r.choice("gain.kind", &[("t-damped", 0), ("harmonic", 1), ("constant", 2)])? {
            0 => GainConfig::TDamped {
                t: r.positive("gain.t")?,
                alpha0,
            },
            1 => GainConfig::Harmonic { alpha0 },
            _ => GainConfig::Constant {
                alpha: r.positive("gain.alpha0")?,
            },
        };
        c.anchor_t = r.positive("gain.anchor_t")?;
        c.delta = self.delta(&r, c.delta, None)?;
        c.cg.rel_floor = r.positive("cg.rel_floor")?;
        c.cg.max_iters = r.opt_usize("cg.max_iters")?;
        c.stop.max_iters = r.usize("budget.max_iters")?;
        c.stop.time_budget_s = r.opt_f64("budget.time_s")?;
        c.stop.error_target = r.opt_f64("budget.error_target")?;
        c.stop.grad_tol = r.opt_f64("budget.grad_tol")?;
        c.seed = self.solver_seed();
        c.stream_id = rep as u64;
        c.validate().map_err(|e| scoped(&r, e))?;
        Ok(c)
    }

    /// Resolved settings of a finite-sum solver; `model` supplies `μ/(2L)`.
    pub fn fs_config(&self, method: FsMethod, model: Option<&LogRegModel>, rep: usize) -> Result<FsConfig> {
        let r = Reader::for_solver(&self.config, method.as_str());
        let mut c = FsConfig::new(method);
        c.ls = self.line_search(&r, "fs.zeta", "fs.theta")?;
        c.batch_size = r.opt_usize("fs.batch")?;
        c.hessian_batch = r.opt_usize("fs.hessian_batch")?;
        c.memory = r.usize("fs.m")?;
        c.pair_interval = r.usize("fs.l")?;
        c.estimator = match r.str("fs.estimator") {
            "auto" => c.estimator,
            raw => GradientEstimator::parse(raw).ok_or_else(|| {
                r.error(
                    "fs.estimator",
                    format!("expected auto | subsampled | saga, got `{raw}`"),
                )
            })?,
        };
        c.delta = self.delta(&r, c.delta, model.map(|m| m.mu() / (2.0 * m.l())))?;
        c.cg.rel_floor = r.positive("cg.rel_floor")?;
        c.cg.max_iters = r.opt_usize("cg.max_iters")?;
        c.max_epochs = r.usize("budget.epochs")?;
        c.max_iters = r.opt_usize("budget.fs_max_iters")?;
        c.time_budget_s = r.opt_f64("budget.time_s")?;
        c.seed = self.solver_seed();
        c.stream_id = rep as u64;
        c.validate().map_err(|e| scoped(&r, e))?;
        Ok(c)
    }
}

/// A built problem, shared by every replication.
pub enum Problem {
    Synthetic(ConvexRandomProblem),
    Logistic(LogRegModel),
}

impl Problem {
    pub fn build(spec: &ExperimentSpec) -> Result<Problem> {
        let mut rng = RngStream::new(spec.seed, PROBLEM_STREAM);
        match &spec.problem {
            ProblemSpec::Synthetic {
                n,
                kappa,
                sigma,
                hess_form,
                density,
                solution_tol,
            } => {
                let p = ConvexRandomProblem::generate(*n, *kappa, *sigma, *hess_form, *density, &mut rng)?;
                p.exact_solution(*solution_tol)?;
                Ok(Problem::Synthetic(p))
            }
            ProblemSpec::Logistic { data, mu } => {
                let data = match data {
                    DataSource::Synthetic {
                        samples,
                        features,
                        separation,
                    } => generate_synthetic_classification(*samples, *features, *separation, &mut rng)?,
                    DataSource::File { path, n_features } => load_libsvm(path, *n_features)?,
                };
                let model = match mu {
                    Some(mu) => LogRegModel::new(data, *mu)?,
                    None => LogRegModel::with_default_mu(data)?,
                };
                model.reference()?;
                Ok(Problem::Logistic(model))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Synthetic(p) => p.n(),
            Problem::Logistic(m) => m.data().n_features(),
        }
    }

    /// Starting point of replication `rep`: `N(0, 5²)` entries for synthetic
    /// problems, the origin for logistic ones.
    pub fn x0(&self, seed: u64, rep: usize) -> Vector {
        match self {
            Problem::Synthetic(p) => default_x0(p.n(), &mut RngStream::new(seed, rep as u64).fork(X0_TAG)),
            Problem::Logistic(m) => Vector::zeros(m.data().n_features()),
        }
    }
}

/// One replication of one solver.
pub fn run_solver(spec: &ExperimentSpec, problem: &Problem, kind: SolverKind, rep: usize) -> Result<RunTrace> {
    let x0 = problem.x0(spec.seed, rep);
    match (kind, problem) {
        (SolverKind::Stochastic(m), Problem::Synthetic(p)) => run(p, &spec.stochastic_config(m, rep)?, &x0),
        (SolverKind::FiniteSum(m), Problem::Logistic(model)) => {
            run_finite_sum(model, &spec.fs_config(m, Some(model), rep)?, &x0)
        }
        _ => Err(LsosError::invalid(
            "experiment.solvers",
            format!("`{}` does not fit the problem", kind.name()),
        )),
    }
}

/// Grid search of `ls.t_ini` for `kind` using replication 0 as the pilot.
pub fn grid_search_step(
    spec: &ExperimentSpec,
    problem: &Problem,
    kind: SolverKind,
    candidates: &[f64],
) -> Result<GridOutcome> {
    let key = format!("{}.ls.t_ini", kind.name());
    grid_search(candidates, |t| {
        run_solver(&spec.with(&key, t.to_string())?, problem, kind, 0)
    })
}

pub struct ExperimentOutcome {
    /// The spec actually run, with grid-search results written in.
    pub spec: ExperimentSpec,
    pub grid: Vec<(SolverKind, GridOutcome)>,
    pub traces: Vec<(SolverKind, Vec<RunTrace>)>,
    pub curves: Vec<(SolverKind, AggregateCurve)>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn traces_of(&self, kind: SolverKind) -> Option<&[RunTrace]> {
        self.traces.iter().find(|(k, _)| *k == kind).map(|(_, t)| t.as_slice())
    }

    pub fn curve_of(&self, kind: SolverKind) -> Option<&AggregateCurve> {
        self.curves.iter().find(|(k, _)| *k == kind).map(|(_, c)| c)
    }
}

/// Grid search, replications and aggregation, without touching the disk.
pub fn execute(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let problem = Problem::build(spec)?;
    let mut spec = spec.clone();
    let mut grid = Vec::new();
    for &kind in &spec.grid_solvers.clone() {
        let outcome = grid_search_step(&spec, &problem, kind, &spec.grid_candidates)?;
        info!("{}: grid search picked t_ini = {}", kind.name(), outcome.best);
        spec = spec.with(&format!("{}.ls.t_ini", kind.name()), outcome.best.to_string())?;
        grid.push((kind, outcome));
    }
    if !grid.is_empty() {
        spec = spec.with("grid.solvers", "none")?;
    }
    let mut traces = Vec::new();
    let mut curves = Vec::new();
    for &kind in &spec.solvers {
        let runs = (0..spec.reps)
            .into_par_iter()
            .map(|rep| run_solver(&spec, &problem, kind, rep))
            .collect::<Result<Vec<RunTrace>>>()?;
        curves.push((kind, aggregate(&runs, spec.aggregate)?));
        traces.push((kind, runs));
    }
    Ok(ExperimentOutcome {
        spec,
        grid,
        traces,
        curves,
        files: Vec::new(),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LsosError::io(path, e))
}

/// Manifest text: comments describing seeds, the interval formula and grid
/// results, then every resolved key.
pub fn manifest_text(outcome: &ExperimentOutcome) -> String {
    let spec = &outcome.spec;
    let mut out = String::new();
    let _ = writeln!(out, "# manifest of experiment `{}`", spec.name);
    let _ = writeln!(out, "# lsos {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        out,
        "# confidence interval: mean +- {Z_95} * s / sqrt(R), s = sample standard deviation"
    );
    let _ = writeln!(out, "# problem stream: seed {}, stream {PROBLEM_STREAM}", spec.seed);
    let _ = writeln!(
        out,
        "# starting point of replication r: seed {} stream r forked with tag {X0_TAG}",
        spec.seed
    );
    let _ = writeln!(
        out,
        "# solver noise of replication r: seed {}, stream r",
        spec.solver_seed()
    );
    for (kind, g) in &outcome.grid {
        let scores: Vec<String> = g
            .scores
            .iter()
            .map(|(t, e)| format!("{t}:{}", e.map_or("diverged".to_string(), |e| format!("{e:e}"))))
            .collect();
        let _ = writeln!(
            out,
            "# grid search {}: t_ini = {} from {}",
            kind.name(),
            g.best,
            scores.join(" ")
        );
    }
    out.push_str(&spec.config.to_text());
    out
}

/// Runs `spec` and writes traces, aggregates and the manifest to its output directory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let dir = spec.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| LsosError::io(&dir, e))?;
    let mut outcome = execute(spec)?;
    let mut files = Vec::new();
    for (kind, runs) in &outcome.traces {
        for (rep, tr) in runs.iter().enumerate() {
            let path = dir.join(format!("trace_{}_r{rep}.csv", kind.name()));
            tr.write_csv(create(&path)?, true)?;
            files.push(path);
        }
    }
    for (kind, curve) in &outcome.curves {
        let path = dir.join(format!("aggregate_{}.csv", kind.name()));
        curve.write_csv(create(&path)?).map_err(|e| LsosError::io(&path, e))?;
        files.push(path);
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest_text(&outcome)).map_err(|e| LsosError::io(&path, e))?;
    files.push(path);
    outcome.files = files;
    Ok(outcome)
}

/// Aggregates every `trace_<solver>_r<rep>.csv` in `dir` into
/// `aggregate_<solver>.csv`; returns the files written.
pub fn aggregate_dir(dir: &Path, mode: AggregateMode) -> Result<Vec<PathBuf>> {
    let mut groups: std::collections::BTreeMap<String, Vec<RunTrace>> = Default::default();
    let entries = std::fs::read_dir(dir).map_err(|e| LsosError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| LsosError::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(solver) = name
            .strip_prefix("trace_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.rsplit_once("_r"))
            .map(|(solver, _)| solver.to_string())
        else {
            continue;
        };
        let file = File::open(&path).map_err(|e| LsosError::io(&path, e))?;
        groups.entry(solver).or_default().extend(RunTrace::read_csv(file)?);
    }
    let mut written = Vec::new();
    for (solver, runs) in groups {
        let curve = aggregate(&runs, mode)?;
        let path = dir.join(format!("aggregate_{solver}.csv"));
        curve.write_csv(create(&path)?).map_err(|e| LsosError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
