//! Correlation loss and its sliced approximation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss value with its gradient with respect to the predicted distances.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub mse: f64,
    pub r: f64,
    pub grad: Vec<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson correlation of `d` and `g` around the given means, restricted to the
/// given elements, and its gradient with respect to `d` (means held fixed).
fn partial_correlation(d: &[f64], g: &[f64], md: f64, mg: f64) -> (f64, Vec<f64>) {
    let sdd: f64 = d.iter().map(|x| (x - md) * (x - md)).sum();
    let sgg: f64 = g.iter().map(|x| (x - mg) * (x - mg)).sum();
    let sdg: f64 = d.iter().zip(g).map(|(x, y)| (x - md) * (y - mg)).sum();
    let (sd, sg) = (sdd.sqrt(), sgg.sqrt());
    if sd == 0.0 || sg == 0.0 {
        return (0.0, vec![0.0; d.len()]);
    }
    let r = sdg / (sd * sg);
    let grad = d.iter().zip(g).map(|(x, y)| (y - mg) / (sd * sg) - r * (x - md) / sdd).collect();
    (r, grad)
}

fn check(d: &[f64], g: &[f64]) -> Result<()> {
    if d.len() != g.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} targets", d.len(), g.len())));
    }
    if d.len() < 2 {
        return Err(Error::TooShort { need: 2, got: d.len() });
    }
    if g.iter().all(|&v| v == g[0]) {
        return Err(Error::ConstantGroundTruth);
    }
    Ok(())
}

/// `λ1·mean((d - g)²) + λ2·(1 - r(d, g))` with its gradient in `d`. A constant `d`
/// has no defined correlation; it counts as r = 0 with no correlation gradient.
pub fn correlation_loss(d: &[f64], g: &[f64], lambda1: f64, lambda2: f64) -> Result<LossValue> {
    check(d, g)?;
    let n = d.len() as f64;
    let mse = d.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let (r, dr) = partial_correlation(d, g, mean(d), mean(g));
    let grad = d.iter().zip(g).zip(&dr).map(|((a, b), dr)| lambda1 * 2.0 * (a - b) / n - lambda2 * dr).collect();
    Ok(LossValue { loss: lambda1 * mse + lambda2 * (1.0 - r), mse, r, grad })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceOptions {
    pub slice: usize,
    pub running_mean: bool,
    pub aggregate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlicedLoss {
    pub slice_losses: Vec<f64>,
    /// Partial correlation r_k of every slice.
    pub partial_r: Vec<f64>,
    /// Correlation actually used by each slice term (r̃_k with aggregation).
    pub used_r: Vec<f64>,
    /// Means used by the last slice.
    pub final_means: (f64, f64),
    /// Sum of the per-slice gradients.
    pub grad: Vec<f64>,
}

impl SlicedLoss {
    /// Mean of the slice losses.
    pub fn loss(&self) -> f64 {
        mean(&self.slice_losses)
    }
}

/// Splits `d` and `g` into consecutive slices of `opts.slice` elements and
/// computes one loss term per slice. Means are exact over the full vectors, or
/// running means over the slices seen so far. With aggregation, slice k uses the
/// mean of the partial correlations r_1..r_k. Earlier slices enter only as
/// constants, and the per-slice gradients are summed.
pub fn sliced_correlation_loss(d: &[f64], g: &[f64], opts: SliceOptions, lambda1: f64, lambda2: f64) -> Result<SlicedLoss> {
    check(d, g)?;
    let v = opts.slice;
    if v == 0 || d.len() % v != 0 {
        return Err(Error::IndivisibleSliceSize { len: d.len(), slice: v });
    }
    let exact = (mean(d), mean(g));
    let mut running = (0.0, 0.0);
    let mut seen = 0usize;
    let mut out = SlicedLoss {
        slice_losses: Vec::new(),
        partial_r: Vec::new(),
        used_r: Vec::new(),
        final_means: exact,
        grad: vec![0.0; d.len()],
    };
    for (k, (ds, gs)) in d.chunks(v).zip(g.chunks(v)).enumerate() {
        let means = if opts.running_mean {
            let total = seen + v;
            running.0 = (running.0 * seen as f64 + ds.iter().sum::<f64>()) / total as f64;
            running.1 = (running.1 * seen as f64 + gs.iter().sum::<f64>()) / total as f64;
            seen = total;
            running
        } else {
            exact
        };
        let (r, dr) = partial_correlation(ds, gs, means.0, means.1);
        out.partial_r.push(r);
        let (used, scale) = if opts.aggregate {
            (out.partial_r.iter().sum::<f64>() / (k + 1) as f64, 1.0 / (k + 1) as f64)
        } else {
            (r, 1.0)
        };
        out.used_r.push(used);
        let mse = ds.iter().zip(gs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / v as f64;
        out.slice_losses.push(lambda1 * mse + lambda2 * (1.0 - used));
        for (i, ((a, b), dr)) in ds.iter().zip(gs).zip(&dr).enumerate() {
            out.grad[k * v + i] += lambda1 * 2.0 * (a - b) / v as f64 - lambda2 * scale * dr;
        }
        out.final_means = means;
    }
    Ok(out)
}
