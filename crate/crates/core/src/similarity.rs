//! Entropy-based similarity model: the logarithmic distance curve, per-sequence
//! curvature fitting, and ground-truth pair distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VolumeField;
use crate::metrics::{mse, pearson_corr, pearson_fields, DistanceMetric};

/// Search bounds for the curvature exponent γ (c = 10^γ).
pub const EXPONENT_MIN: f64 = -3.0;
pub const EXPONENT_MAX: f64 = 6.0;
const EXPONENT_TOL: f64 = 1e-4;
const GRID_STEP: f64 = 0.1;

/// Normalized logarithmic distance `log(c·w + 1) / log(c + 1)`.
pub fn entropy_distance(w: f64, c: f64) -> f64 {
    debug_assert!(c > 0.0);
    (c * w).ln_1p() / c.ln_1p()
}

/// Fitted curvature of one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFit {
    /// γ with c = 10^γ.
    pub exponent: f64,
    /// Sum of squared residuals at the optimum.
    pub residual: f64,
    /// Set when the proxy distances carried no usable shape and the near-linear
    /// model at the lower bound was substituted.
    pub degenerate: bool,
}

impl SimilarityFit {
    pub fn linear_fallback() -> Self {
        Self { exponent: EXPONENT_MIN, residual: 0.0, degenerate: true }
    }

    pub fn curvature(&self) -> f64 {
        10f64.powf(self.exponent)
    }
}

fn fit_objective(q: &[f64], exponent: f64) -> f64 {
    let c = 10f64.powf(exponent);
    let n = q.len() as f64;
    q.iter()
        .enumerate()
        .map(|(i, &qi)| {
            let r = entropy_distance((i + 1) as f64 / n, c) - qi;
            r * r
        })
        .sum()
}

/// Least-squares fit of the curvature exponent.
///
/// `q[i]` is the normalized proxy distance of state `i + 1` and is compared with the
/// model at `w = (i + 1) / n`. A coarse grid scan brackets the optimum, then
/// golden-section search refines it to `1e-4` in γ.
pub fn fit_c(q: &[f64]) -> Result<SimilarityFit> {
    if q.len() < 3 {
        return Err(Error::TooShort { need: 3, got: q.len() });
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Ok(SimilarityFit::linear_fallback());
    }
    let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        return Ok(SimilarityFit::linear_fallback());
    }

    let steps = ((EXPONENT_MAX - EXPONENT_MIN) / GRID_STEP).round() as usize;
    let grid = |k: usize| EXPONENT_MIN + k as f64 * GRID_STEP;
    let best = (0..=steps)
        .map(|k| (k, fit_objective(q, grid(k))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let mut a = grid(best.saturating_sub(1));
    let mut b = grid((best + 1).min(steps));

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = fit_objective(q, x1);
    let mut f2 = fit_objective(q, x2);
    while b - a > EXPONENT_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = fit_objective(q, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = fit_objective(q, x2);
        }
    }
    let exponent = ((a + b) / 2.0).clamp(EXPONENT_MIN, EXPONENT_MAX);
    let residual = fit_objective(q, exponent);
    if !residual.is_finite() {
        return Ok(SimilarityFit::linear_fallback());
    }
    Ok(SimilarityFit { exponent, residual, degenerate: false })
}

/// How ground-truth distances are derived from the pair gaps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthModel {
    /// The logarithmic entropy curve with the fitted curvature.
    #[default]
    Entropy,
    /// Ablation: ground truth equals the normalized gap.
    Identity,
}

/// Every `(i, j)` pair of a sequence with `n + 1` states, gaps, ground truth and
/// (once a metric ran) predicted distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDistances {
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
    pub w: Vec<f64>,
    pub g: Vec<f64>,
    pub d: Option<Vec<f64>>,
}

impl PairDistances {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pair indices in nested-loop order: i = 0..n-1 outer, j = i+1..=n inner.
pub fn pair_indices(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..=n).map(move |j| (i, j))).collect()
}

pub fn ground_truth_distances(n: usize, c: f64) -> PairDistances {
    ground_truth_with(n, c, GroundTruthModel::Entropy)
}

pub fn ground_truth_with(n: usize, c: f64, model: GroundTruthModel) -> PairDistances {
    let pairs = pair_indices(n);
    let w: Vec<f64> = pairs.iter().map(|&(i, j)| (j - i) as f64 / n as f64).collect();
    let g = match model {
        GroundTruthModel::Entropy => w.iter().map(|&v| entropy_distance(v, c)).collect(),
        GroundTruthModel::Identity => w.clone(),
    };
    PairDistances { n, pairs, w, g, d: None }
}

/// Pearson distances `1 - PCC(s_0, s_i)` for i = 1..n.
pub fn pearson_proxy(states: &[VolumeField]) -> Result<Vec<f64>> {
    let first = states.first().ok_or(Error::EmptyStream)?;
    states[1..].iter().map(|s| pearson_fields(first, s).map(|r| 1.0 - r)).collect()
}

/// Min-max normalization of a value list onto [0, 1]. Constant input comes back unchanged.
pub fn normalize_unit(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return values.to_vec();
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Fits the curvature of a sequence from its normalized Pearson distances.
/// Sequences with constant or undefined correlations get the linear fallback.
pub fn fit_sequence(states: &[VolumeField]) -> Result<SimilarityFit> {
    if states.len() < 4 {
        return Err(Error::TooShort { need: 4, got: states.len() });
    }
    match pearson_proxy(states) {
        Ok(q) => fit_c(&normalize_unit(&q)),
        Err(Error::ConstantInput) => Ok(SimilarityFit::linear_fallback()),
        Err(e) => Err(e),
    }
}

/// Result of running one metric over every pair of a sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEvaluation {
    pub distances: PairDistances,
    /// Normalized Pearson proxy distances (empty when undefined).
    pub q: Vec<f64>,
    pub fit: SimilarityFit,
}

/// Evaluates `metric` on every pair of `states`, in the same order as
/// [`ground_truth_distances`], and attaches the fitted ground truth.
pub fn evaluate_metric_on_sequence<F>(states: &[VolumeField], mut metric: F) -> Result<SequenceEvaluation>
where
    F: FnMut(&VolumeField, &VolumeField) -> Result<f64>,
{
    evaluate_pairs(states, |pairs| pairs.iter().map(|&(i, j)| metric(&states[i], &states[j])).collect())
}

/// Like [`evaluate_metric_on_sequence`] with all pair distances computed in one call.
pub fn evaluate_pairs<F>(states: &[VolumeField], all_pairs: F) -> Result<SequenceEvaluation>
where
    F: FnOnce(&[(usize, usize)]) -> Result<Vec<f64>>,
{
    if states.len() < 2 {
        return Err(Error::TooShort { need: 2, got: states.len() });
    }
    if let Some(s) = states.iter().find(|s| !s.same_shape(&states[0])) {
        states[0].ensure_same_shape(s)?;
    }
    let n = states.len() - 1;
    let q = match pearson_proxy(states) {
        Ok(q) => normalize_unit(&q),
        Err(Error::ConstantInput) => Vec::new(),
        Err(e) => return Err(e),
    };
    let fit = if q.len() >= 3 { fit_c(&q)? } else { SimilarityFit::linear_fallback() };
    let mut distances = ground_truth_distances(n, fit.curvature());
    let d = all_pairs(&distances.pairs)?;
    if d.len() != distances.pairs.len() {
        return Err(Error::ShapeMismatch(format!("{} distances for {} pairs", d.len(), distances.pairs.len())));
    }
    distances.d = Some(d);
    Ok(SequenceEvaluation { distances, q, fit })
}

/// Applies a [`DistanceMetric`] including its joint preparation. The fit uses the
/// raw states; the metric sees the prepared ones.
pub fn evaluate_distance_metric(metric: &dyn DistanceMetric, states: &[VolumeField]) -> Result<SequenceEvaluation> {
    let prepared = metric.prepare(states)?;
    evaluate_pairs(states, |pairs| metric.pair_distances(&prepared, pairs))
}

/// Pearson correlation between the MSE proxy trajectory `mse(s_0, s_i)` and the
/// linear ramp `i / n`. High values mean an easy (nearly linear) sequence.
pub fn proxy_difficulty(states: &[VolumeField]) -> Result<f64> {
    if states.len() < 3 {
        return Err(Error::TooShort { need: 3, got: states.len() });
    }
    let n = states.len() - 1;
    let proxy = states[1..].iter().map(|s| mse(&states[0], s)).collect::<Result<Vec<_>>>()?;
    let ramp: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    proxy_trajectory_difficulty(&proxy, &ramp)
}

fn proxy_trajectory_difficulty(proxy: &[f64], ramp: &[f64]) -> Result<f64> {
    pearson_corr(proxy, ramp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldKind;
    use crate::metrics::{srcc, Mse};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn entropy_distance_boundaries() {
        for c in [0.1, 1.0, 10.0, 100.0] {
            assert!(entropy_distance(0.0, c).abs() <= 1e-9);
            assert!((entropy_distance(1.0, c) - 1.0).abs() <= 1e-9);
        }
        assert!((entropy_distance(0.5, 1.0) - 1.5f64.ln() / 2f64.ln()).abs() < 1e-12);
        assert!((entropy_distance(0.5, 1.0) - 0.58496).abs() < 1e-5);
    }

    #[test]
    fn entropy_distance_linear_limit() {
        let dev = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .map(|w| (entropy_distance(w, 1e-6) - w).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-4, "{dev}");
    }

    fn model_q(c: f64, n: usize) -> Vec<f64> {
        (1..=n).map(|i| entropy_distance(i as f64 / n as f64, c)).collect()
    }

    #[test]
    fn fit_round_trip_noiseless() {
        for c in [1.0, 10.0, 100.0] {
            let fit = fit_c(&model_q(c, 10)).unwrap();
            assert!(!fit.degenerate);
            assert!((fit.curvature() - c).abs() / c <= 0.01, "c={c} got {}", fit.curvature());
        }
    }

    #[test]
    fn fit_round_trip_noisy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for c in [1.0, 10.0, 100.0] {
            let q: Vec<f64> = model_q(c, 10).into_iter().map(|v| v + rng.gen_range(-0.02..0.02)).collect();
            let fit = fit_c(&q).unwrap();
            assert!((fit.curvature() - c).abs() / c <= 0.25, "c={c} got {}", fit.curvature());
        }
    }

    #[test]
    fn fit_linear_and_degenerate() {
        let q: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let fit = fit_c(&q).unwrap();
        assert!((fit.exponent - EXPONENT_MIN).abs() < 1e-3);
        let c = fit.curvature();
        let dev = (0..=100).map(|i| i as f64 / 100.0).map(|w| (entropy_distance(w, c) - w).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3);

        let flat = fit_c(&[0.0; 10]).unwrap();
        assert!(flat.degenerate);
        assert!(matches!(fit_c(&[0.1, 0.2]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn ground_truth_layout() {
        let pd = ground_truth_distances(10, 10.0);
        assert_eq!(pd.len(), 55);
        assert_eq!(pd.pairs[0], (0, 1));
        let last_full = pd.pairs.iter().position(|&p| p == (0, 10)).unwrap();
        assert_eq!(pd.w[last_full], 1.0);
        assert!((pd.g[last_full] - 1.0).abs() < 1e-12);
        let adjacent = entropy_distance(0.1, 10.0);
        for (k, &(i, j)) in pd.pairs.iter().enumerate() {
            if j == i + 1 {
                assert_eq!(pd.g[k], adjacent);
            }
        }
        let identity = ground_truth_with(10, 10.0, GroundTruthModel::Identity);
        assert_eq!(identity.g, identity.w);
    }

    fn ramp_sequence(n: usize) -> Vec<VolumeField> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = VolumeField::from_fn(FieldKind::Scalar, 1, [6, 6, 6], |_, _, _, _| rng.gen_range(-1.0..1.0));
        let other = VolumeField::from_fn(FieldKind::Scalar, 1, [6, 6, 6], |_, _, _, _| rng.gen_range(-1.0..1.0));
        (0..=n)
            .map(|k| {
                let t = k as f32 / n as f32;
                VolumeField::from_fn(FieldKind::Scalar, 1, [6, 6, 6], |c, z, y, x| {
                    base.get(c, z, y, x) * (1.0 - t) + other.get(c, z, y, x) * t
                })
            })
            .collect()
    }

    #[test]
    fn evaluate_with_trivial_metrics() {
        let states = ramp_sequence(10);
        let ev = evaluate_metric_on_sequence(&states, |_, _| Ok(0.0)).unwrap();
        assert!(ev.distances.d.as_ref().unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(ev.q.len(), 10);

        // oracle reading the gap through a side channel: the states' first sample encodes the index
        let tagged: Vec<VolumeField> = states
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let mut d = s.data().to_vec();
                d[0] = k as f32;
                VolumeField::new(FieldKind::Scalar, 1, s.dims(), d).unwrap()
            })
            .collect();
        let ev = evaluate_metric_on_sequence(&tagged, |a, b| Ok((b.data()[0] - a.data()[0]) as f64 / 10.0)).unwrap();
        let d = ev.distances.d.unwrap();
        assert!((srcc(&d, &ev.distances.w).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_mse_on_ramp() {
        let states = ramp_sequence(10);
        let ev = evaluate_distance_metric(&Mse, &states).unwrap();
        let d = ev.distances.d.unwrap();
        assert!(d.iter().all(|&v| v >= 0.0));
        let k0n = ev.distances.pairs.iter().position(|&p| p == (0, 10)).unwrap();
        let adjacent: Vec<f64> = ev
            .distances
            .pairs
            .iter()
            .zip(&d)
            .filter(|((i, j), _)| j - i == 1)
            .map(|(_, &v)| v)
            .collect();
        assert!(adjacent.iter().sum::<f64>() / (adjacent.len() as f64) < d[k0n]);
    }

    #[test]
    fn difficulty_of_linear_and_constant_proxies() {
        assert!((proxy_trajectory_difficulty(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            proxy_trajectory_difficulty(&[1.0; 10], &(1..=10).map(|i| i as f64).collect::<Vec<_>>()),
            Err(Error::ConstantInput)
        ));
        // states whose MSE to s_0 grows exactly linearly in i
        let dims = [2, 2, 2];
        let states: Vec<VolumeField> = (0..=5)
            .map(|i| VolumeField::constant(FieldKind::Scalar, 1, dims, (i as f32).sqrt()))
            .collect();
        assert!((proxy_difficulty(&states).unwrap() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn entropy_distance_monotone_concave(c in 1e-3f64..1e5, w in 0.01f64..0.98) {
            let h = 0.01;
            let (a, b, d) = (entropy_distance(w - h, c), entropy_distance(w, c), entropy_distance(w + h, c));
            prop_assert!(b > a && d > b);
            prop_assert!(b - a >= d - b - 1e-12);
            // monotone decreasing in c at fixed interior w
            prop_assert!(entropy_distance(w, c * 2.0) >= b - 1e-12);
        }

        #[test]
        fn gap_monotonicity(n in 2usize..15, exponent in -3.0f64..6.0) {
            let pd = ground_truth_distances(n, 10f64.powf(exponent));
            prop_assert_eq!(pd.len(), n * (n + 1) / 2);
            for a in 0..pd.len() {
                for b in 0..pd.len() {
                    let (ga, gb) = (pd.pairs[a].1 - pd.pairs[a].0, pd.pairs[b].1 - pd.pairs[b].0);
                    if ga < gb {
                        prop_assert!(pd.g[a] <= pd.g[b]);
                    }
                }
            }
            prop_assert!(pd.g.iter().chain(&pd.w).all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
