//! Experiment drivers: SRCC tables, difficulty histograms, invariance sweeps and
//! the case-study protocol. Reports render to CSV.

pub mod casestudy;
pub mod invariance;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VolumeField;
use crate::metrics::{srcc, DistanceMetric};
use crate::similarity::evaluate_distance_metric;

pub use casestudy::{case_study, model_curve_frames, CaseStudy};
pub use invariance::{rotation_invariance, sample_pairs, scale_invariance, scaled_dims, Curve, InvarianceReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub index: usize,
    pub srcc: f64,
    /// Constant predicted distances; scored 0.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub dataset: String,
    pub sequences: Vec<SequenceScore>,
    pub mean: f64,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,dataset,sequence,srcc,degenerate\n");
        for q in &self.sequences {
            let _ = writeln!(s, "{},{},{},{},{}", self.metric, self.dataset, q.index, q.srcc, q.degenerate);
        }
        s
    }

    pub fn degenerate_count(&self) -> usize {
        self.sequences.iter().filter(|s| s.degenerate).count()
    }
}

/// SRCC between the metric's pair distances and the normalized gaps, per
/// sequence, and its mean over the dataset.
pub fn dataset_srcc(metric: &dyn DistanceMetric, dataset: &str, sequences: &[Vec<VolumeField>]) -> Result<EvalReport> {
    if sequences.is_empty() {
        return Err(Error::EmptyStream);
    }
    let scores = sequences
        .par_iter()
        .enumerate()
        .map(|(index, states)| {
            if states.len() < 3 {
                return Err(Error::TooShort { need: 3, got: states.len() });
            }
            metric.check_dims(states[0].dims())?;
            let ev = evaluate_distance_metric(metric, states)?;
            let d = ev.distances.d.as_deref().expect("distances were evaluated");
            match srcc(d, &ev.distances.w) {
                Ok(v) => Ok(SequenceScore { index, srcc: v, degenerate: false }),
                Err(Error::ConstantInput) => Ok(SequenceScore { index, srcc: 0.0, degenerate: true }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = scores.iter().map(|s| s.srcc).sum::<f64>() / scores.len() as f64;
    Ok(EvalReport { metric: metric.id(), dataset: dataset.into(), sequences: scores, mean })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub bin: f64,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
    /// Population skewness; 0 when all values coincide.
    pub skew: f64,
}

impl Histogram {
    pub fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.bin
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(s, "{:.4},{:.4},{c}", self.edge(k), self.edge(k + 1));
        }
        s
    }
}

/// Counts over [-1, 1] in bins of width `bin`; values on an edge go to the bin
/// above it, and 1.0 to the last bin.
pub fn difficulty_histogram(values: &[f64], bin: f64) -> Result<Histogram> {
    if !(bin > 0.0) || bin > 2.0 {
        return Err(Error::InvalidArgument(format!("bin width {bin} outside (0, 2]")));
    }
    if values.is_empty() {
        return Err(Error::EmptyStream);
    }
    let (lo, hi) = (-1.0, 1.0);
    let bins = ((hi - lo) / bin).round() as usize;
    let mut counts = vec![0; bins];
    for &v in values {
        if !(lo..=hi).contains(&v) {
            return Err(Error::InvalidArgument(format!("difficulty {v} outside [-1, 1]")));
        }
        let x = (v - lo) / bin;
        let k = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.floor() } as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    Ok(Histogram { lo, bin, counts, mean, std: m2.sqrt(), skew })
}
