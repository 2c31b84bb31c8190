//! Distance head: normalized feature differences, weighted per channel, averaged
//! over space and channels, summed over layers, square-rooted.
//!
//! Features enter unnormalized. Subtracting the per-channel mean cancels in the
//! difference, so normalization reduces to a division by the channel std.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const SQRT_FLOOR: f64 = 1e-12;

/// Squared-difference sums per channel of one layer.
pub fn channel_sq_sums(a: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("features {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok((0..a.channels())
        .map(|c| a.channel(c).iter().zip(b.channel(c)).map(|(x, y)| (x - y) * (x - y)).sum())
        .collect())
}

/// Coefficient multiplying the channel's squared-difference sum.
fn coefficient(t: &Tensor, c: usize, weight: f64, std: Option<&[f64]>, mask: Option<&[f64]>) -> f64 {
    let s = std.map_or(1.0, |s| s[c]);
    weight * mask.map_or(1.0, |m| m[c]) / (s * s * (t.channels() * t.plane()) as f64)
}

/// Per-channel factors `k_c` with layer term `Σ_c k_c · sq_c`.
pub fn layer_coefficients(t: &Tensor, weights: &[f64], std: Option<&[f64]>, mask: Option<&[f64]>) -> Vec<f64> {
    (0..t.channels()).map(|c| coefficient(t, c, weights[c], std, mask)).collect()
}

/// Contribution of one layer to the squared distance.
pub fn layer_term(a: &Tensor, b: &Tensor, weights: &[f64], std: Option<&[f64]>, mask: Option<&[f64]>) -> Result<f64> {
    if weights.len() != a.channels() {
        return Err(Error::ShapeMismatch(format!("{} weights for {} channels", weights.len(), a.channels())));
    }
    let sq = channel_sq_sums(a, b)?;
    Ok(sq.iter().enumerate().map(|(c, s)| coefficient(a, c, weights[c], std, mask) * s).sum())
}

/// Per-layer optional arguments of the head.
#[derive(Clone, Copy, Default)]
pub struct HeadOptions<'a> {
    pub std: Option<&'a [Vec<f64>]>,
    pub mask: Option<&'a [Vec<f64>]>,
}

impl<'a> HeadOptions<'a> {
    fn std(&self, l: usize) -> Option<&'a [f64]> {
        self.std.map(|s| s[l].as_slice())
    }

    fn mask(&self, l: usize) -> Option<&'a [f64]> {
        self.mask.map(|m| m[l].as_slice())
    }
}

pub fn distance_squared(fa: &[Tensor], fb: &[Tensor], weights: &[Vec<f64>], opts: HeadOptions) -> Result<f64> {
    if fa.len() != fb.len() || fa.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!("{} / {} feature layers, {} weight sets", fa.len(), fb.len(), weights.len())));
    }
    let mut total = 0.0;
    for l in 0..fa.len() {
        total += layer_term(&fa[l], &fb[l], &weights[l], opts.std(l), opts.mask(l))?;
    }
    Ok(total)
}

pub fn distance(fa: &[Tensor], fb: &[Tensor], weights: &[Vec<f64>], opts: HeadOptions) -> Result<f64> {
    Ok(distance_squared(fa, fb, weights, opts)?.max(0.0).sqrt())
}

/// Accumulates the gradient of `upstream · distance` into the feature and weight
/// gradient buffers. Returns the distance.
#[allow(clippy::too_many_arguments)]
pub fn backward_into(
    fa: &[Tensor],
    fb: &[Tensor],
    weights: &[Vec<f64>],
    opts: HeadOptions,
    upstream: f64,
    ga: &mut [Tensor],
    gb: &mut [Tensor],
    gw: &mut [Vec<f64>],
) -> Result<f64> {
    let d2 = distance_squared(fa, fb, weights, opts)?;
    let d = d2.max(0.0).sqrt();
    let outer = upstream * 0.5 / d2.max(SQRT_FLOOR).sqrt();
    for l in 0..fa.len() {
        let (a, b) = (&fa[l], &fb[l]);
        let plane = a.plane();
        let norm = (a.channels() * plane) as f64;
        for c in 0..a.channels() {
            let s = opts.std(l).map_or(1.0, |s| s[c]);
            let m = opts.mask(l).map_or(1.0, |m| m[c]);
            let (xa, xb) = (a.channel(c), b.channel(c));
            let sq: f64 = xa.iter().zip(xb).map(|(x, y)| (x - y) * (x - y)).sum();
            gw[l][c] += outer * m * sq / (s * s * norm);
            let coef = outer * 2.0 * coefficient(a, c, weights[l][c], opts.std(l), opts.mask(l));
            if coef == 0.0 {
                continue;
            }
            let ra = &mut ga[l].data_mut()[c * plane..(c + 1) * plane];
            for (g, (x, y)) in ra.iter_mut().zip(xa.iter().zip(xb)) {
                *g += coef * (x - y);
            }
            let rb = &mut gb[l].data_mut()[c * plane..(c + 1) * plane];
            for (g, (x, y)) in rb.iter_mut().zip(xa.iter().zip(xb)) {
                *g -= coef * (x - y);
            }
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_computation() {
        let a = vec![Tensor::new(vec![2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()];
        let b = vec![Tensor::new(vec![2, 1, 1, 2], vec![0.0, 0.0, 3.0, 2.0]).unwrap()];
        let w = vec![vec![0.5, 2.0]];
        // channel 0: (1 + 4) · 0.5, channel 1: 4 · 2.0, over C·S = 4
        let expected = ((5.0 * 0.5 + 4.0 * 2.0) / 4.0f64).sqrt();
        assert!((distance(&a, &b, &w, HeadOptions::default()).unwrap() - expected).abs() < 1e-15);
        let std = vec![vec![2.0, 1.0]];
        let opts = HeadOptions { std: Some(&std), mask: None };
        let expected = ((5.0 * 0.5 / 4.0 + 4.0 * 2.0) / 4.0f64).sqrt();
        assert!((distance(&a, &b, &w, opts).unwrap() - expected).abs() < 1e-15);
        assert_eq!(distance(&a, &a, &w, opts).unwrap(), 0.0);
    }
}
