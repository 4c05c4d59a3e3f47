//! Step-length grid search: one pilot run per candidate `t_ini`, lowest
//! final error wins, ties go to the larger step.

use crate::error::{LsosError, Result};
use crate::harness::aggregate::record_error;
use crate::trace::RunTrace;

/// `{1, 5e−1, 1e−1, …, 5e−5, 1e−5}`.
pub const DEFAULT_STEP_GRID: [f64; 11] = [1.0, 5e-1, 1e-1, 5e-2, 1e-2, 5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5];

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: f64,
    /// Final error per candidate, `None` for diverged pilots.
    pub scores: Vec<(f64, Option<f64>)>,
}

pub fn validate_candidates(candidates: &[f64]) -> Result<()> {
    if candidates.is_empty() {
        return Err(LsosError::invalid("grid.candidates", "need at least one candidate"));
    }
    if let Some(c) = candidates.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(LsosError::invalid(
            "grid.candidates",
            format!("must be positive and finite, got {c}"),
        ));
    }
    for (i, a) in candidates.iter().enumerate() {
        if candidates[..i].contains(a) {
            return Err(LsosError::invalid(
                "grid.candidates",
                format!("duplicate candidate {a}"),
            ));
        }
    }
    Ok(())
}

fn pilot_score(trace: &RunTrace) -> Option<f64> {
    if trace.diverged {
        return None;
    }
    let e = record_error(trace.last()?);
    e.is_finite().then_some(e)
}

/// Runs `pilot(t)` for every candidate and returns the best `t`.
pub fn grid_search<F>(candidates: &[f64], mut pilot: F) -> Result<GridOutcome>
where
    F: FnMut(f64) -> Result<RunTrace>,
{
    validate_candidates(candidates)?;
    let mut scores = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, f64)> = None;
    for &t in candidates {
        let score = pilot_score(&pilot(t)?);
        scores.push((t, score));
        if let Some(e) = score {
            let better = match best {
                None => true,
                Some((bt, be)) => e < be || (e == be && t > bt),
            };
            if better {
                best = Some((t, e));
            }
        }
    }
    match best {
        Some((best, _)) => Ok(GridOutcome { best, scores }),
        None => {
            let listed: Vec<String> = candidates.iter().map(|t| format!("t_ini = {t}: non-finite")).collect();
            Err(LsosError::AllCandidatesDiverged(listed.join("; ")))
        }
    }
}
