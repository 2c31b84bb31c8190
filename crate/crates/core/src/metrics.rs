//! Element-wise and statistical baseline metrics plus the correlation
//! statistics used throughout evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{normalize_minmax, VolumeField};
use crate::numeric::{exact_sum, ExactSum};

/// A named scalar metric outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric_id: String,
    pub value: f64,
}

/// A pairwise distance over prepared fields.
///
/// `prepare` is applied jointly to all states of a sequence (or to a pair)
/// before any distance is evaluated.
pub trait DistanceMetric: Sync {
    fn id(&self) -> String;

    fn distance(&self, a: &VolumeField, b: &VolumeField) -> Result<f64>;

    /// Default: joint normalization to [0, 1]; fields sharing one constant value pass through.
    fn prepare(&self, states: &[VolumeField]) -> Result<Vec<VolumeField>> {
        match normalize_minmax(states, 0.0, 1.0) {
            Err(Error::DegenerateRange(_)) => Ok(states.to_vec()),
            other => other,
        }
    }

    /// Rejects spatial sizes the metric cannot evaluate.
    fn check_dims(&self, _dims: [usize; 3]) -> Result<()> {
        Ok(())
    }

    /// Distances of the listed index pairs of prepared `states`. Metrics with
    /// expensive per-state work override this to share it across pairs.
    fn pair_distances(&self, states: &[VolumeField], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        pairs.iter().map(|&(i, j)| self.distance(&states[i], &states[j])).collect()
    }

    fn evaluate(&self, a: &VolumeField, b: &VolumeField) -> Result<MetricResult> {
        Ok(MetricResult { metric_id: self.id(), value: self.distance(a, b)? })
    }
}

pub fn mse(a: &VolumeField, b: &VolumeField) -> Result<f64> {
    a.ensure_same_shape(b)?;
    // order-independent sum keeps the value bitwise stable under index permutations
    let sum = exact_sum(a.data().iter().zip(b.data()).map(|(&x, &y)| {
        let d = x as f64 - y as f64;
        d * d
    }));
    Ok(sum / a.len() as f64)
}

pub fn psnr(a: &VolumeField, b: &VolumeField, max_value: f64) -> Result<f64> {
    if max_value <= 0.0 {
        return Err(Error::InvalidArgument(format!("max_value must be positive, got {max_value}")));
    }
    let e = mse(a, b)?;
    if e == 0.0 {
        return Err(Error::InfinitePsnr);
    }
    Ok(10.0 * (max_value * max_value / e).log10())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, range: 1.0 }
    }
}

pub(crate) fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - center).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of a single-channel volume.
fn filter_valid(input: &[f64], dims: [usize; 3], taps: &[f64]) -> (Vec<f64>, [usize; 3]) {
    let k = taps.len();
    let [d, h, w] = dims;
    let (od, oh, ow) = (d + 1 - k, h + 1 - k, w + 1 - k);

    let mut fx = vec![0.0; d * h * ow];
    for zy in 0..d * h {
        let row = &input[zy * w..(zy + 1) * w];
        let out = &mut fx[zy * ow..(zy + 1) * ow];
        for (x, o) in out.iter_mut().enumerate() {
            *o = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut fy = vec![0.0; d * oh * ow];
    for z in 0..d {
        for y in 0..oh {
            let out = &mut fy[(z * oh + y) * ow..(z * oh + y + 1) * ow];
            for (i, t) in taps.iter().enumerate() {
                let src = &fx[(z * h + y + i) * ow..(z * h + y + i + 1) * ow];
                out.iter_mut().zip(src).for_each(|(o, v)| *o += t * v);
            }
        }
    }
    let plane = oh * ow;
    let mut fz = vec![0.0; od * plane];
    for z in 0..od {
        let out = &mut fz[z * plane..(z + 1) * plane];
        for (i, t) in taps.iter().enumerate() {
            let src = &fy[(z + i) * plane..(z + i + 1) * plane];
            out.iter_mut().zip(src).for_each(|(o, v)| *o += t * v);
        }
    }
    (fz, [od, oh, ow])
}

/// Volumetric SSIM with a separable Gaussian window: mean local SSIM over all
/// valid window positions and channels.
pub fn ssim3d(a: &VolumeField, b: &VolumeField, params: &SsimParams) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let dims = a.dims();
    if dims.iter().any(|&d| d < params.window) {
        return Err(Error::FieldTooSmall(format!(
            "SSIM window {} exceeds dims {dims:?}",
            params.window
        )));
    }
    let taps = gaussian_window(params.window, params.sigma);
    let c1 = (params.k1 * params.range).powi(2);
    let c2 = (params.k2 * params.range).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels() {
        let x: Vec<f64> = a.channel(c).iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = b.channel(c).iter().map(|&v| v as f64).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, _) = filter_valid(&x, dims, &taps);
        let (my, _) = filter_valid(&y, dims, &taps);
        let (sxx, _) = filter_valid(&xx, dims, &taps);
        let (syy, _) = filter_valid(&yy, dims, &taps);
        let (sxy, _) = filter_valid(&xy, dims, &taps);
        for i in 0..mx.len() {
            let (mu_x, mu_y) = (mx[i], my[i]);
            let var_x = sxx[i] - mu_x * mu_x;
            let var_y = syy[i] - mu_y * mu_y;
            let cov = sxy[i] - mu_x * mu_y;
            let num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
            let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
            total += num / den;
        }
        count += mx.len();
    }
    Ok(total / count as f64)
}

fn pearson_by<X, Y>(n: usize, x: X, y: Y) -> Result<f64>
where
    X: Fn(usize) -> f64,
    Y: Fn(usize) -> f64,
{
    if n < 2 {
        return Err(Error::TooShort { need: 2, got: n });
    }
    let mx = exact_sum((0..n).map(&x)) / n as f64;
    let my = exact_sum((0..n).map(&y)) / n as f64;
    let (mut sxy, mut sxx, mut syy) = (ExactSum::new(), ExactSum::new(), ExactSum::new());
    for i in 0..n {
        let dx = x(i) - mx;
        let dy = y(i) - my;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    let (sxy, sxx, syy) = (sxy.value(), sxx.value(), syy.value());
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson product-moment correlation.
pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("lengths {} and {}", x.len(), y.len())));
    }
    pearson_by(x.len(), |i| x[i], |i| y[i])
}

/// Pearson correlation of two fields, flattened over all channels.
pub fn pearson_fields(a: &VolumeField, b: &VolumeField) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (x, y) = (a.data(), b.data());
    pearson_by(x.len(), |i| x[i] as f64, |i| y[i] as f64)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) share rank mean(start+1 ..= end)
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("lengths {} and {}", x.len(), y.len())));
    }
    pearson_corr(&average_ranks(x), &average_ranks(y))
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Mse;

impl DistanceMetric for Mse {
    fn id(&self) -> String {
        "mse".into()
    }
    fn distance(&self, a: &VolumeField, b: &VolumeField) -> Result<f64> {
        mse(a, b)
    }
}

/// PSNR turned into a distance by negation (higher PSNR = more similar).
#[derive(Clone, Copy, Debug)]
pub struct Psnr {
    pub max_value: f64,
}

impl Default for Psnr {
    fn default() -> Self {
        Self { max_value: 1.0 }
    }
}

impl DistanceMetric for Psnr {
    fn id(&self) -> String {
        "psnr".into()
    }
    fn distance(&self, a: &VolumeField, b: &VolumeField) -> Result<f64> {
        psnr(a, b, self.max_value).map(|v| -v)
    }
}

/// `1 - SSIM`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Ssim {
    pub params: SsimParams,
}

impl DistanceMetric for Ssim {
    fn id(&self) -> String {
        "ssim".into()
    }
    fn distance(&self, a: &VolumeField, b: &VolumeField) -> Result<f64> {
        ssim3d(a, b, &self.params).map(|v| 1.0 - v)
    }
    fn check_dims(&self, dims: [usize; 3]) -> Result<()> {
        if dims.iter().any(|&d| d < self.params.window) {
            Err(Error::FieldTooSmall(format!("dims {dims:?} below SSIM window {}", self.params.window)))
        } else {
            Ok(())
        }
    }
}

/// Pearson's distance `1 - PCC(a, b)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PearsonDistance;

impl DistanceMetric for PearsonDistance {
    fn id(&self) -> String {
        "pearson".into()
    }
    fn distance(&self, a: &VolumeField, b: &VolumeField) -> Result<f64> {
        Ok(1.0 - pearson_fields(a, b)?)
    }
    fn prepare(&self, states: &[VolumeField]) -> Result<Vec<VolumeField>> {
        Ok(states.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{circular_shift, flip, rotate90, Axis, FieldKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    fn random_field(dims: [usize; 3], seed: u64) -> VolumeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(0.0f32, 1.0);
        VolumeField::from_fn(FieldKind::Scalar, 1, dims, |_, _, _, _| u.sample(&mut rng))
    }

    #[test]
    fn mse_basics() {
        let a = random_field([4, 4, 4], 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = VolumeField::from_fn(FieldKind::Scalar, 1, [4, 4, 4], |c, z, y, x| a.get(c, z, y, x) + 0.5);
        assert!((mse(&a, &b).unwrap() - 0.25).abs() < 1e-12);
        let c = random_field([4, 4, 4], 2);
        assert_eq!(mse(&a, &c).unwrap(), mse(&c, &a).unwrap());
        let small = random_field([2, 2, 2], 1);
        assert!(matches!(mse(&a, &small), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn psnr_values() {
        let a = VolumeField::constant(FieldKind::Scalar, 1, [2, 2, 2], 0.0);
        let b = VolumeField::constant(FieldKind::Scalar, 1, [2, 2, 2], 0.5);
        let p1 = psnr(&a, &b, 1.0).unwrap();
        assert!((p1 - 6.0206).abs() < 1e-4);
        let p2 = psnr(&a, &b, 2.0).unwrap();
        assert!((p2 - p1 - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!(matches!(psnr(&a, &a, 1.0), Err(Error::InfinitePsnr)));
    }

    #[test]
    fn ssim_identity_and_constants() {
        let a = random_field([12, 12, 12], 3);
        assert!((ssim3d(&a, &a, &SsimParams::default()).unwrap() - 1.0).abs() < 1e-9);
        let c = VolumeField::constant(FieldKind::Scalar, 1, [11, 11, 11], 0.5);
        assert!((ssim3d(&c, &c, &SsimParams::default()).unwrap() - 1.0).abs() < 1e-9);
        let tiny = random_field([10, 11, 11], 1);
        assert!(matches!(ssim3d(&tiny, &tiny, &SsimParams::default()), Err(Error::FieldTooSmall(_))));
    }

    /// Direct triple loop over a single 11³ window.
    fn ssim_one_window(a: &VolumeField, b: &VolumeField, p: &SsimParams) -> f64 {
        let g = gaussian_window(p.window, p.sigma);
        let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for z in 0..p.window {
            for y in 0..p.window {
                for x in 0..p.window {
                    let w = g[z] * g[y] * g[x];
                    let u = a.get(0, z, y, x) as f64;
                    let v = b.get(0, z, y, x) as f64;
                    mx += w * u;
                    my += w * v;
                    sxx += w * u * u;
                    syy += w * v * v;
                    sxy += w * u * v;
                }
            }
        }
        let c1 = (p.k1 * p.range).powi(2);
        let c2 = (p.k2 * p.range).powi(2);
        ((2.0 * mx * my + c1) * (2.0 * (sxy - mx * my) + c2))
            / ((mx * mx + my * my + c1) * ((sxx - mx * mx) + (syy - my * my) + c2))
    }

    #[test]
    fn ssim_noisy_matches_direct_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0f32, 0.2).unwrap();
        let a = VolumeField::constant(FieldKind::Scalar, 1, [11, 11, 11], 0.5);
        let b = VolumeField::from_fn(FieldKind::Scalar, 1, [11, 11, 11], |_, _, _, _| 0.5 + noise.sample(&mut rng));
        let p = SsimParams::default();
        let s = ssim3d(&a, &b, &p).unwrap();
        let reference = ssim_one_window(&a, &b, &p);
        assert!((s - reference).abs() < 1e-10, "{s} vs {reference}");
        assert!(s < 1.0 && s > -1.0);
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.5];
        assert!((pearson_corr(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!((pearson_corr(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson_corr(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.98198).abs() < 1e-4);
        assert!(matches!(pearson_corr(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ConstantInput)));
    }

    /// Brute-force average rank: 1 + (#smaller) + (#equal - 1) / 2.
    fn brute_ranks(x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let less = x.iter().filter(|&&u| u < v).count() as f64;
                let eq = x.iter().filter(|&&u| u == v).count() as f64;
                1.0 + less + (eq - 1.0) / 2.0
            })
            .collect()
    }

    #[test]
    fn rank_ties() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        let x = [3.0, 1.0, 3.0, 3.0, 0.5, 1.0];
        assert_eq!(average_ranks(&x), brute_ranks(&x));
    }

    #[test]
    fn srcc_monotone_and_reversed() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert!((srcc(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        assert!((srcc(&x, &z).unwrap() - 1.0).abs() < 1e-12);
        let r: Vec<f64> = x.iter().rev().copied().collect();
        assert!((srcc(&x, &r).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutations_preserve_classic_metrics() {
        let a = random_field([12, 12, 12], 4);
        let b = random_field([12, 12, 12], 5);
        let base = (mse(&a, &b).unwrap(), psnr(&a, &b, 1.0).unwrap(), ssim3d(&a, &b, &SsimParams::default()).unwrap());
        let transforms: Vec<Box<dyn Fn(&VolumeField) -> VolumeField>> = vec![
            Box::new(|f| rotate90(f, Axis::Y, 1)),
            Box::new(|f| flip(f, Axis::Z)),
            Box::new(|f| circular_shift(f, [1, 2, 3])),
        ];
        for (i, t) in transforms.iter().enumerate() {
            let (ta, tb) = (t(&a), t(&b));
            assert_eq!(mse(&ta, &tb).unwrap(), base.0);
            assert_eq!(psnr(&ta, &tb, 1.0).unwrap(), base.1);
            assert_eq!(pearson_fields(&ta, &tb).unwrap(), pearson_fields(&a, &b).unwrap());
            // valid-window SSIM sees different windows across the wrap seam of a circular shift
            if i < 2 {
                assert!((ssim3d(&ta, &tb, &SsimParams::default()).unwrap() - base.2).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            xs in proptest::collection::vec(-10.0f64..10.0, 5..30),
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, v)| v * v + i as f64).collect();
            if let Ok(r) = pearson_corr(&xs, &ys) {
                let mapped: Vec<f64> = xs.iter().map(|v| scale * v + shift).collect();
                let r2 = pearson_corr(&mapped, &ys).unwrap();
                prop_assert!((r - r2).abs() <= 1e-9);
            }
        }

        #[test]
        fn average_ranks_match_brute_force(xs in proptest::collection::vec(0u8..6, 1..25)) {
            let v: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
            prop_assert_eq!(average_ranks(&v), brute_ranks(&v));
        }
    }
}
