//! Rotation and scale sweeps over fixed field pairs.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{rotate_arbitrary, trilinear_resample, Axis, VolumeField};
use crate::metrics::{srcc, DistanceMetric};

/// Distances of one pair over the sweep and their deviation from the sweep mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub pair: usize,
    pub axis: Option<Axis>,
    pub distances: Vec<f64>,
    pub deviation: Vec<f64>,
}

impl Curve {
    fn new(pair: usize, axis: Option<Axis>, distances: Vec<f64>) -> Self {
        let mean = distances.iter().sum::<f64>() / distances.len() as f64;
        let deviation = distances.iter().map(|d| d - mean).collect();
        Self { pair, axis, distances, deviation }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub metric: String,
    /// `degrees` or `factor`.
    pub parameter: String,
    pub values: Vec<f64>,
    pub curves: Vec<Curve>,
}

impl InvarianceReport {
    /// Mean over pairs of the absolute per-pair deviation.
    pub fn mean_abs_deviation(&self) -> Vec<f64> {
        self.average(|c, k| c.deviation[k].abs())
    }

    /// Deviation of the pair-averaged distance from its sweep mean.
    pub fn pooled_deviation(&self) -> Vec<f64> {
        let pooled = self.average(|c, k| c.distances[k]);
        Curve::new(0, None, pooled).deviation
    }

    pub fn max_abs_deviation(&self) -> f64 {
        self.curves.iter().flat_map(|c| &c.deviation).fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Fraction of pairs whose distances rank-correlate positively with the sweep values.
    pub fn increasing_fraction(&self) -> f64 {
        let up = self.curves.iter().filter(|c| srcc(&self.values, &c.distances).is_ok_and(|r| r > 0.0)).count();
        up as f64 / self.curves.len().max(1) as f64
    }

    fn average(&self, f: impl Fn(&Curve, usize) -> f64) -> Vec<f64> {
        let n = self.curves.len().max(1) as f64;
        (0..self.values.len()).map(|k| self.curves.iter().map(|c| f(c, k)).sum::<f64>() / n).collect()
    }

    /// Long format: one row per pair and sweep value, then the `mean_abs` and
    /// `pooled` aggregate rows.
    pub fn to_csv(&self) -> String {
        let p = &self.parameter;
        let mut s = format!("metric,pair,axis,{p},distance,deviation\n");
        for c in &self.curves {
            let axis = c.axis.map(|a| a.to_string()).unwrap_or_default();
            for (k, v) in self.values.iter().enumerate() {
                let _ = writeln!(s, "{},{},{axis},{v},{},{}", self.metric, c.pair, c.distances[k], c.deviation[k]);
            }
        }
        for (label, dev) in [("mean_abs", self.mean_abs_deviation()), ("pooled", self.pooled_deviation())] {
            for (v, d) in self.values.iter().zip(dev) {
                let _ = writeln!(s, "{},{label},,{v},,{d}", self.metric);
            }
        }
        s
    }
}

/// `count` pairs drawn with a fixed seed: a random sequence, then two distinct states of it.
pub fn sample_pairs(sequences: &[Vec<VolumeField>], count: usize, seed: u64) -> Result<Vec<(VolumeField, VolumeField)>> {
    let usable: Vec<&Vec<VolumeField>> = sequences.iter().filter(|s| s.len() >= 2).collect();
    if usable.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let s = usable.choose(&mut rng).expect("non-empty");
            let i = rng.gen_range(0..s.len() - 1);
            let j = rng.gen_range(i + 1..s.len());
            (s[i].clone(), s[j].clone())
        })
        .collect())
}

fn prepared(metric: &dyn DistanceMetric, a: &VolumeField, b: &VolumeField) -> Result<(VolumeField, VolumeField)> {
    let mut p = metric.prepare(&[a.clone(), b.clone()])?;
    let b = p.pop().expect("two fields");
    Ok((p.pop().expect("two fields"), b))
}

/// Rotates both (prepared) fields of every pair by 0, step, ... < 360 degrees
/// about a per-pair random axis, filling uncovered cells with zero.
pub fn rotation_invariance(
    metric: &dyn DistanceMetric,
    pairs: &[(VolumeField, VolumeField)],
    step_degrees: f64,
    seed: u64,
) -> Result<InvarianceReport> {
    if !(step_degrees > 0.0) {
        return Err(Error::InvalidArgument(format!("rotation step {step_degrees} must be positive")));
    }
    let values: Vec<f64> = (0..).map(|k| k as f64 * step_degrees).take_while(|&d| d < 360.0 - 1e-9).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes: Vec<Axis> = pairs.iter().map(|_| *Axis::ALL.choose(&mut rng).expect("three axes")).collect();
    let curves = pairs
        .iter()
        .zip(&axes)
        .enumerate()
        .map(|(p, ((a, b), &axis))| {
            metric.check_dims(a.dims())?;
            let (a, b) = prepared(metric, a, b)?;
            let d = values
                .par_iter()
                .map(|&deg| metric.distance(&rotate_arbitrary(&a, axis, deg, 0.0)?, &rotate_arbitrary(&b, axis, deg, 0.0)?))
                .collect::<Result<Vec<_>>>()?;
            Ok(Curve::new(p, Some(axis), d))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InvarianceReport { metric: metric.id(), parameter: "degrees".into(), values, curves })
}

pub fn scaled_dims(dims: [usize; 3], factor: f64) -> [usize; 3] {
    dims.map(|d| ((d as f64 * factor).round() as usize).max(1))
}

/// Resamples both (prepared) fields of every pair by each factor and evaluates
/// the metric at the new resolution.
pub fn scale_invariance(metric: &dyn DistanceMetric, pairs: &[(VolumeField, VolumeField)], factors: &[f64]) -> Result<InvarianceReport> {
    if let Some(f) = factors.iter().find(|&&f| !(f > 0.0)) {
        return Err(Error::InvalidArgument(format!("scale factor {f} must be positive")));
    }
    let curves = pairs
        .iter()
        .enumerate()
        .map(|(p, (a, b))| {
            for &f in factors {
                metric.check_dims(scaled_dims(a.dims(), f))?;
            }
            let (a, b) = prepared(metric, a, b)?;
            let d = factors
                .par_iter()
                .map(|&f| {
                    let dims = scaled_dims(a.dims(), f);
                    metric.distance(&trilinear_resample(&a, dims)?, &trilinear_resample(&b, dims)?)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Curve::new(p, None, d))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InvarianceReport { metric: metric.id(), parameter: "factor".into(), values: factors.to_vec(), curves })
}
