use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use lsos::harness::check::run_checks;
use lsos::harness::config::Config;
use lsos::harness::experiment::preset;
use lsos::harness::{aggregate_dir, grid_search_step, run_experiment, AggregateMode, ExperimentSpec, Problem};

#[derive(Parser)]
#[command(
    name = "lsos",
    version,
    about = "Seeded experiments for line-search stochastic optimizers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed (experiment.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replications per solver (experiment.reps).
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Output directory (experiment.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Wall-clock budget per run in seconds (budget.time_s).
    #[arg(long = "budget-s", global = true)]
    budget_s: Option<f64>,
    /// Start from a shipped preset: fig1-small, fig2-small, fig3-synthetic.
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces, aggregates and a manifest.
    Run { spec: Option<PathBuf> },
    /// Grid-search t_ini for the spec's grid.solvers and print the scores.
    Grid { spec: Option<PathBuf> },
    /// Aggregate the trace CSVs of a finished run directory.
    Aggregate {
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Iteration)]
        mode: Mode,
        #[arg(long, default_value_t = 100)]
        buckets: usize,
    },
    /// Run the invariant suite.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Iteration,
    Time,
}

impl Cli {
    /// Preset, then spec file, then flags; later sources win.
    fn spec(&self, file: Option<&PathBuf>) -> Result<ExperimentSpec> {
        let mut cfg = match &self.preset {
            Some(name) => preset(name)?,
            None => Config::new(),
        };
        match file {
            Some(path) => {
                let text = Config::from_file(path).with_context(|| format!("reading {}", path.display()))?;
                for (k, v) in text.entries() {
                    cfg.set(k, v)?;
                }
            }
            None if self.preset.is_none() => bail!("give a spec file or --preset"),
            None => {}
        }
        if let Some(seed) = self.seed {
            cfg.set("experiment.seed", seed.to_string())?;
        }
        if let Some(reps) = self.reps {
            cfg.set("experiment.reps", reps.to_string())?;
        }
        if let Some(out) = &self.out {
            cfg.set("experiment.out", out.display().to_string())?;
        }
        if let Some(b) = self.budget_s {
            cfg.set("budget.time_s", b.to_string())?;
        }
        Ok(ExperimentSpec::from_config(&cfg)?)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { spec } => {
            let spec = cli.spec(spec.as_ref())?;
            info!("running `{}` into {}", spec.name, spec.output_dir.display());
            let outcome = run_experiment(&spec)?;
            for (kind, curve) in &outcome.curves {
                if let Some(p) = curve.final_point() {
                    println!(
                        "{:<10} final mean error {:.4e} ± {:.2e} over {} runs",
                        kind.name(),
                        p.mean_error,
                        p.ci_half_width,
                        curve.runs
                    );
                }
            }
            println!("wrote {} files to {}", outcome.files.len(), spec.output_dir.display());
        }
        Command::Grid { spec } => {
            let spec = cli.spec(spec.as_ref())?;
            if spec.grid_solvers.is_empty() {
                bail!("grid.solvers is empty");
            }
            let problem = Problem::build(&spec)?;
            for &kind in &spec.grid_solvers {
                let g = grid_search_step(&spec, &problem, kind, &spec.grid_candidates)?;
                for (t, e) in &g.scores {
                    match e {
                        Some(e) => println!("{:<10} t_ini = {t:<8} final error {e:.4e}", kind.name()),
                        None => println!("{:<10} t_ini = {t:<8} diverged", kind.name()),
                    }
                }
                println!("{:<10} best t_ini = {}", kind.name(), g.best);
            }
        }
        Command::Aggregate { dir, mode, buckets } => {
            let mode = match mode {
                Mode::Iteration => AggregateMode::ByIteration,
                Mode::Time => AggregateMode::ByTimeBucket { buckets: *buckets },
            };
            for path in aggregate_dir(dir, mode)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Check => {
            let mut failed = 0;
            for c in run_checks() {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                println!("{failed} check(s) failed");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
