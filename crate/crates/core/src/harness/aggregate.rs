//! Mean curves with 95% normal-approximation confidence intervals,
//! `mean ± 1.96 s/√R` with `s` the sample standard deviation.

use std::io::Write;

use crate::error::{LsosError, Result};
use crate::trace::{RunTrace, TraceRecord};

/// Normal quantile of the two-sided 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    /// One checkpoint per iteration shared by every run.
    ByIteration,
    /// `buckets` equally spaced times on `(0, min final time]`, error
    /// linearly interpolated between records.
    ByTimeBucket { buckets: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// Iteration index or bucket time.
    pub checkpoint: f64,
    pub mean_error: f64,
    pub ci_half_width: f64,
    pub mean_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub mode: AggregateMode,
    pub runs: usize,
    pub points: Vec<CurvePoint>,
}

pub const AGGREGATE_HEADER: &str = "checkpoint,mean_error,ci_half_width,mean_time_s,runs";

/// Error of a record: the true error when known, else the sampled value.
pub fn record_error(r: &TraceRecord) -> f64 {
    r.true_error.unwrap_or(r.f_hat)
}

/// Sample mean and 95% half-width; the half-width is 0 for a single value.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, Z_95 * var.sqrt() / r.sqrt())
}

/// Error at time `t` by linear interpolation over `(time, error)` records;
/// clamped to the first and last records outside their span.
fn interpolate(records: &[TraceRecord], t: f64) -> f64 {
    let first = &records[0];
    if t <= first.wall_time_s {
        return record_error(first);
    }
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if t <= b.wall_time_s {
            let span = b.wall_time_s - a.wall_time_s;
            if span <= 0.0 {
                return record_error(b);
            }
            let u = (t - a.wall_time_s) / span;
            return record_error(a) + u * (record_error(b) - record_error(a));
        }
    }
    record_error(records.last().expect("non-empty"))
}

/// Aggregates `traces`, which must share a spec hash. The reduction runs in
/// `run_id` order, so the result does not depend on input order.
pub fn aggregate(traces: &[RunTrace], mode: AggregateMode) -> Result<AggregateCurve> {
    let first = traces
        .first()
        .ok_or_else(|| LsosError::invalid("traces", "need at least one trace"))?;
    if let Some(other) = traces.iter().find(|t| t.spec_hash != first.spec_hash) {
        return Err(LsosError::MismatchedSpecs(first.spec_hash, other.spec_hash));
    }
    if traces.iter().any(RunTrace::is_empty) {
        return Err(LsosError::invalid("traces", "empty trace"));
    }
    let mut sorted: Vec<&RunTrace> = traces.iter().collect();
    sorted.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let mut points = Vec::new();
    match mode {
        AggregateMode::ByIteration => {
            let len = sorted.iter().map(|t| t.len()).min().expect("non-empty");
            for k in 0..len {
                let errs: Vec<f64> = sorted.iter().map(|t| record_error(&t.records()[k])).collect();
                let times: Vec<f64> = sorted.iter().map(|t| t.records()[k].wall_time_s).collect();
                let (mean_error, ci_half_width) = mean_ci(&errs);
                points.push(CurvePoint {
                    checkpoint: sorted[0].records()[k].iter as f64,
                    mean_error,
                    ci_half_width,
                    mean_time_s: mean_ci(&times).0,
                });
            }
        }
        AggregateMode::ByTimeBucket { buckets } => {
            if buckets == 0 {
                return Err(LsosError::invalid("experiment.time_buckets", "must be at least 1"));
            }
            let horizon = sorted
                .iter()
                .map(|t| t.last().expect("non-empty").wall_time_s)
                .fold(f64::INFINITY, f64::min);
            for b in 1..=buckets {
                let t = horizon * b as f64 / buckets as f64;
                let errs: Vec<f64> = sorted.iter().map(|tr| interpolate(tr.records(), t)).collect();
                let (mean_error, ci_half_width) = mean_ci(&errs);
                points.push(CurvePoint {
                    checkpoint: t,
                    mean_error,
                    ci_half_width,
                    mean_time_s: t,
                });
            }
        }
    }
    Ok(AggregateCurve {
        mode,
        runs: traces.len(),
        points,
    })
}

impl AggregateCurve {
    pub fn final_point(&self) -> Option<&CurvePoint> {
        self.points.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{AGGREGATE_HEADER}")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{}",
                p.checkpoint, p.mean_error, p.ci_half_width, p.mean_time_s, self.runs
            )?;
        }
        Ok(())
    }
}
