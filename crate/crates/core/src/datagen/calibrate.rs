//! Search for a perturbation magnitude Δ that yields sequences of target difficulty.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyBand {
    pub lo: f64,
    pub hi: f64,
}

impl Default for DifficultyBand {
    fn default() -> Self {
        Self { lo: 0.65, hi: 0.85 }
    }
}

impl DifficultyBand {
    pub fn contains(&self, v: f64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub delta: f64,
    pub mean_difficulty: f64,
    pub iterations: usize,
    /// `(Δ, mean difficulty)` per iteration.
    pub history: Vec<(f64, f64)>,
}

/// Calibrates Δ. `difficulty(Δ, i)` rates sample `i` generated with Δ; the same
/// sample indices are used in every iteration. Difficulty is assumed to fall as
/// Δ grows: too easy doubles Δ, too hard halves it, and once both sides are known
/// the geometric midpoint of the bracket is tried.
pub fn calibrate_delta<G>(
    difficulty: G,
    delta0: f64,
    band: DifficultyBand,
    sample_count: usize,
    max_iter: usize,
) -> Result<CalibrationResult>
where
    G: Fn(f64, usize) -> Result<f64> + Sync,
{
    if !(delta0 > 0.0) || max_iter == 0 || sample_count == 0 {
        return Err(Error::InvalidArgument("calibration needs delta0 > 0, max_iter >= 1, sample_count >= 1".into()));
    }
    let mut delta = delta0;
    let mut easy: Option<f64> = None;
    let mut hard: Option<f64> = None;
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let values = (0..sample_count).into_par_iter().map(|i| difficulty(delta, i)).collect::<Result<Vec<_>>>()?;
        let mean = values.iter().sum::<f64>() / sample_count as f64;
        history.push((delta, mean));
        if band.contains(mean) {
            return Ok(CalibrationResult { delta, mean_difficulty: mean, iterations: it, history });
        }
        if mean > band.hi {
            easy = Some(easy.map_or(delta, |e: f64| e.max(delta)));
        } else {
            hard = Some(hard.map_or(delta, |h: f64| h.min(delta)));
        }
        delta = match (easy, hard) {
            (Some(e), Some(h)) => (e * h).sqrt(),
            (Some(_), None) => delta * 2.0,
            _ => delta * 0.5,
        };
    }
    let (last_delta, last_difficulty) = *history.last().expect("at least one iteration");
    Err(Error::CalibrationDiverged { iterations: max_iter, last_delta, last_difficulty })
}
