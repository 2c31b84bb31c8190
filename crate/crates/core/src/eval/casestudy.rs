//! Trajectory comparison over an ordered frame stack.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{normalize_minmax, FieldKind, VolumeField};
use crate::metrics::{pearson_fields, srcc, DistanceMetric};
use crate::similarity::{entropy_distance, fit_c, normalize_unit, SimilarityFit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudy {
    pub metric: String,
    /// `1 - PCC(frame_0, frame_i)`, min-max normalized.
    pub pearson: Vec<f64>,
    /// Similarity model fitted to the Pearson trajectory.
    pub model: Vec<f64>,
    /// `metric(frame_0, frame_i)`, min-max normalized.
    pub distances: Vec<f64>,
    pub fit: SimilarityFit,
    pub srcc_a: f64,
    pub srcc_b: f64,
}

impl CaseStudy {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,pearson,model,metric\n");
        for i in 0..self.pearson.len() {
            let _ = writeln!(s, "{i},{},{},{}", self.pearson[i], self.model[i], self.distances[i]);
        }
        s
    }
}

fn normalize_frame(f: &VolumeField) -> Result<VolumeField> {
    match normalize_minmax(std::slice::from_ref(f), -1.0, 1.0) {
        Ok(mut v) => Ok(v.pop().expect("one field")),
        Err(Error::DegenerateRange(_)) => Ok(VolumeField::zeros(f.kind(), f.channels(), f.dims())),
        Err(e) => Err(e),
    }
}

/// Normalizes each frame to [-1, 1] on its own, compares every frame with the
/// first one through the Pearson distance, the fitted similarity model and the
/// metric, and rank-correlates the trajectories.
pub fn case_study(metric: &dyn DistanceMetric, frames: &[VolumeField]) -> Result<CaseStudy> {
    if frames.len() < 3 {
        return Err(Error::TooShort { need: 3, got: frames.len() });
    }
    metric.check_dims(frames[0].dims())?;
    let normalized = frames.iter().map(normalize_frame).collect::<Result<Vec<_>>>()?;
    let mut pearson = vec![0.0];
    for f in &normalized[1..] {
        pearson.push(1.0 - pearson_fields(&normalized[0], f)?);
    }
    let n = frames.len() - 1;
    let fit = if n >= 3 { fit_c(&normalize_unit(&pearson[1..]))? } else { SimilarityFit::linear_fallback() };
    let model: Vec<f64> = (0..=n).map(|i| entropy_distance(i as f64 / n as f64, fit.curvature())).collect();
    let prepared = metric.prepare(&normalized)?;
    let pairs: Vec<(usize, usize)> = (0..=n).map(|i| (0, i)).collect();
    let distances = normalize_unit(&metric.pair_distances(&prepared, &pairs)?);
    let pearson = normalize_unit(&pearson);
    let srcc_a = srcc(&pearson, &model)?;
    let srcc_b = srcc(&model, &distances)?;
    Ok(CaseStudy { metric: metric.id(), pearson, model, distances, fit, srcc_a, srcc_b })
}

/// Frames `cos θ_i · A + sin θ_i · B` with orthogonal zero-mean noise fields A, B
/// and `1 - cos θ_i = D(i / n, c)`, so the Pearson trajectory lies on the model curve.
pub fn model_curve_frames(dims: [usize; 3], frames: usize, c: f64, seed: u64) -> Result<Vec<VolumeField>> {
    if frames < 2 {
        return Err(Error::TooShort { need: 2, got: frames });
    }
    let len = dims.iter().product::<usize>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = || -> Vec<f64> {
        let v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let m = v.iter().sum::<f64>() / len as f64;
        v.into_iter().map(|x| x - m).collect()
    };
    let unit = |v: Vec<f64>| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<_>>()
    };
    let a = unit(noise());
    let b = noise();
    let proj = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>();
    let b = unit(b.iter().zip(&a).map(|(y, x)| y - proj * x).collect());
    let n = frames - 1;
    let scale = (len as f64).sqrt();
    (0..frames)
        .map(|i| {
            let theta = (1.0 - entropy_distance(i as f64 / n as f64, c)).clamp(-1.0, 1.0).acos();
            let (s, co) = theta.sin_cos();
            let data = a.iter().zip(&b).map(|(x, y)| ((co * x + s * y) * scale) as f32).collect();
            VolumeField::new(FieldKind::Scalar, 1, dims, data)
        })
        .collect()
}
