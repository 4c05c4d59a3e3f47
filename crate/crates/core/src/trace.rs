//! Per-iteration run records and their CSV form.
//!
//! CSV schema, one row per record:
//! `run_id,iter,time_s,f_hat,true_error,grad_norm,step,phase`
//! with `true_error` empty when unknown and `phase` one of `LS` / `GAIN`.

use std::io::{Read, Write};

use crate::error::{LsosError, Result};
use crate::oracle::EvalCounts;

pub const CSV_HEADER: [&str; 8] = [
    "run_id",
    "iter",
    "time_s",
    "f_hat",
    "true_error",
    "grad_norm",
    "step",
    "phase",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    LineSearch,
    GainSequence,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::LineSearch => "LS",
            Phase::GainSequence => "GAIN",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "LS" => Some(Phase::LineSearch),
            "GAIN" => Some(Phase::GainSequence),
            _ => None,
        }
    }
}

/// Bookkeeping for the iteration that produced a record's iterate. Not part
/// of the CSV schema; used by certificates and cost comparisons.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepDiagnostics {
    /// CG iterations spent on the direction.
    pub cg_iters: usize,
    /// Achieved `‖B d + g‖ / ‖g‖`, when the direction came from a linear solve.
    pub residual_ratio: Option<f64>,
    /// The tolerance the residual ratio had to meet.
    pub residual_bound: Option<f64>,
    /// The sampled Hessian was rejected as not positive definite and `-g` was used.
    pub fallback: bool,
    /// Line-search trials evaluated.
    pub ls_trials: usize,
    /// The line search ran out of backtracks.
    pub ls_exhausted: bool,
    /// Gradient directional derivative estimate `ĝᵀd` used by the line search.
    pub slope: Option<f64>,
    /// Norm of the search direction.
    pub direction_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub wall_time_s: f64,
    pub f_hat: f64,
    pub true_error: Option<f64>,
    pub grad_norm_hat: f64,
    /// Step length that produced this iterate (0 for the starting point).
    pub step_len: f64,
    pub phase: Phase,
    pub diag: StepDiagnostics,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub run_id: String,
    /// Hash of the resolved solver and problem settings (seed excluded), used
    /// to refuse aggregating traces from different experiments.
    pub spec_hash: u64,
    records: Vec<TraceRecord>,
    /// Final iterate, kept for callers that need the solution itself.
    pub final_x: Option<Vec<f64>>,
    /// Oracle evaluations spent over the run.
    pub eval_counts: EvalCounts,
    /// The run stopped because an iterate or sampled value became non-finite.
    pub diverged: bool,
}

impl RunTrace {
    pub fn new(run_id: impl Into<String>, spec_hash: u64) -> Self {
        Self {
            run_id: run_id.into(),
            spec_hash,
            records: Vec::new(),
            final_x: None,
            eval_counts: EvalCounts::default(),
            diverged: false,
        }
    }

    /// Appends a record, enforcing ascending `iter`, non-decreasing time and
    /// a single LineSearch → GainSequence transition.
    pub fn push(&mut self, rec: TraceRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.iter <= last.iter {
                return Err(LsosError::invalid(
                    "trace.iter",
                    format!("{} after {}", rec.iter, last.iter),
                ));
            }
            if rec.wall_time_s < last.wall_time_s {
                return Err(LsosError::invalid(
                    "trace.time_s",
                    format!("{} after {}", rec.wall_time_s, last.wall_time_s),
                ));
            }
            if last.phase == Phase::GainSequence && rec.phase == Phase::LineSearch {
                return Err(LsosError::invalid("trace.phase", "re-entered line-search phase"));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Error used for comparisons: the true error when known, else `f_hat`.
    pub fn final_error(&self) -> Option<f64> {
        self.last().map(|r| r.true_error.unwrap_or(r.f_hat))
    }

    pub fn total_cg_iters(&self) -> usize {
        self.records.iter().map(|r| r.diag.cg_iters).sum()
    }

    /// First iteration at which the line search was switched off, if any.
    pub fn switch_iteration(&self) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.phase == Phase::GainSequence)
            .map(|r| r.iter)
    }

    pub fn write_csv<W: Write>(&self, out: W, with_header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if with_header {
            w.write_record(CSV_HEADER)?;
        }
        for r in &self.records {
            w.write_record(&[
                self.run_id.clone(),
                r.iter.to_string(),
                r.wall_time_s.to_string(),
                r.f_hat.to_string(),
                r.true_error.map(|e| e.to_string()).unwrap_or_default(),
                r.grad_norm_hat.to_string(),
                r.step_len.to_string(),
                r.phase.as_str().to_string(),
            ])?;
        }
        w.flush().map_err(|e| LsosError::io("<csv>", e))?;
        Ok(())
    }

    /// Reads every run contained in a trace CSV (one trace per distinct `run_id`,
    /// in order of first appearance).
    pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunTrace>> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let mut traces: Vec<RunTrace> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i).parse::<f64>().map_err(|_| LsosError::Parse {
                    line,
                    message: format!("bad number in column {}: `{}`", CSV_HEADER[i], field(i)),
                })
            };
            let run_id = field(0).to_string();
            let iter = field(1).parse::<usize>().map_err(|_| LsosError::Parse {
                line,
                message: format!("bad iter `{}`", field(1)),
            })?;
            let true_error = if field(4).is_empty() { None } else { Some(num(4)?) };
            let phase = Phase::parse(field(7)).ok_or_else(|| LsosError::Parse {
                line,
                message: format!("bad phase `{}`", field(7)),
            })?;
            let record = TraceRecord {
                iter,
                wall_time_s: num(2)?,
                f_hat: num(3)?,
                true_error,
                grad_norm_hat: num(5)?,
                step_len: num(6)?,
                phase,
                diag: StepDiagnostics::default(),
            };
            match traces.iter_mut().find(|t| t.run_id == run_id) {
                Some(t) => t.push(record)?,
                None => {
                    let mut t = RunTrace::new(run_id, 0);
                    t.push(record)?;
                    traces.push(t);
                }
            }
        }
        Ok(traces)
    }
}
