//! The optimization loop.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::augment::augment_sequence;
use super::loss::{correlation_loss, sliced_correlation_loss, SliceOptions, SlicedLoss};
use crate::datagen::Sequence;
use crate::error::{Error, Result};
use crate::field::VolumeField;
use crate::metrics::srcc;
use crate::nn::head::{self, SQRT_FLOOR};
use crate::nn::model::Recorded;
use crate::nn::ops::dropout_mask;
use crate::nn::{prepare_inputs, MetricModel, ModelGrads, Tape, Tensor};
use crate::similarity::{fit_sequence, ground_truth_with, pair_indices, GroundTruthModel, SimilarityFit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    /// Pairs per loss slice; must divide the pair count.
    pub slice_size: usize,
    pub running_mean: bool,
    pub aggregate: bool,
    pub ground_truth: GroundTruthModel,
    /// Stop after this many optimizer steps.
    pub max_iterations: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.7,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 30,
            patience: 5,
            batch_size: 1,
            slice_size: 55,
            running_mean: false,
            aggregate: false,
            ground_truth: GroundTruthModel::Entropy,
            max_iterations: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size == 0 || self.slice_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs, batch_size and slice_size must be >= 1".into()));
        }
        Ok(())
    }

    fn slices(&self) -> SliceOptions {
        SliceOptions { slice: self.slice_size, running_mean: self.running_mean, aggregate: self.aggregate }
    }
}

/// A training sequence with its fitted curvature.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSequence {
    pub states: Vec<VolumeField>,
    pub fit: SimilarityFit,
}

impl TrainSequence {
    pub fn new(states: Vec<VolumeField>) -> Result<Self> {
        let fit = fit_sequence(&states)?;
        Ok(Self { states, fit })
    }

    pub fn n(&self) -> usize {
        self.states.len() - 1
    }

    fn ground_truth(&self, model: GroundTruthModel) -> Vec<f64> {
        ground_truth_with(self.n(), self.fit.curvature(), model).g
    }
}

impl From<&Sequence> for TrainSequence {
    fn from(s: &Sequence) -> Self {
        Self { states: s.states.clone(), fit: s.fit }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub loss: f64,
    pub epoch: usize,
    pub val_loss: Option<f64>,
    pub val_srcc: Option<f64>,
}

/// Per-iteration losses with validation results on each epoch's last row.
/// Wall-clock times are kept apart so the log itself is reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    /// Validation (loss, SRCC) before the first step.
    pub initial_validation: Option<(f64, f64)>,
    pub epoch_seconds: Vec<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,loss,epoch,val_loss,val_srcc\n");
        if let Some((l, r)) = self.initial_validation {
            let _ = writeln!(s, "0,,0,{l},{r}");
        }
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.iteration, r.loss, r.epoch, opt(r.val_loss), opt(r.val_srcc));
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,seconds\n");
        for (e, t) in self.epoch_seconds.iter().enumerate() {
            let _ = writeln!(s, "{},{t}", e + 1);
        }
        s
    }

    /// Mean loss over the first and last `k` iterations.
    pub fn loss_trend(&self, k: usize) -> Option<(f64, f64)> {
        let n = self.rows.len();
        if n < 2 * k || k == 0 {
            return None;
        }
        let avg = |r: &[LogRow]| r.iter().map(|r| r.loss).sum::<f64>() / r.len() as f64;
        Some((avg(&self.rows[..k]), avg(&self.rows[n - k..])))
    }
}

pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub model: MetricModel,
    pub log: TrainLog,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Loss, distances and parameter gradients of one prepared sequence.
pub struct SequenceGradient {
    pub loss: SlicedLoss,
    pub distances: Vec<f64>,
    pub grads: ModelGrads,
}

/// Records every state, evaluates all pair distances, applies the sliced loss
/// and backpropagates. `masks[p][l]` is the dropout mask of pair `p`.
pub fn sequence_gradient(
    model: &MetricModel,
    prepared: &[VolumeField],
    g: &[f64],
    masks: Option<&[Vec<Vec<f64>>]>,
    cfg: &TrainConfig,
) -> Result<SequenceGradient> {
    let n = prepared.len() - 1;
    let pairs = pair_indices(n);
    let precision = model.config.precision;
    let recorded: Vec<(Tape, Recorded)> = prepared
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new(precision);
            let rec = model.record(&mut tape, Tensor::from_field(s))?;
            Ok((tape, rec))
        })
        .collect::<Result<_>>()?;
    let feature = |i: usize, l: usize| recorded[i].0.value(recorded[i].1.features[l]);
    let layers = model.weights.len();
    let std = model.std();

    // per pair and layer: channel squared sums and weight-free coefficients mask / (std² · C · S)
    let terms: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &(i, j))| {
            let mut sq = Vec::with_capacity(layers);
            let mut unit = Vec::with_capacity(layers);
            let mut d2 = 0.0;
            for l in 0..layers {
                let f = feature(i, l);
                let s = head::channel_sq_sums(f, feature(j, l))?;
                let mask = masks.map(|m| m[p][l].as_slice());
                let u = head::layer_coefficients(f, &vec![1.0; f.channels()], std.map(|s| s[l].as_slice()), mask);
                d2 += s.iter().zip(&u).zip(&model.weights[l]).map(|((a, b), w)| a * b * w).sum::<f64>();
                sq.push(s);
                unit.push(u);
            }
            Ok((sq, unit, d2))
        })
        .collect::<Result<_>>()?;
    let distances: Vec<f64> = terms.iter().map(|t| t.2.max(0.0).sqrt()).collect();
    let loss = sliced_correlation_loss(&distances, g, cfg.slices(), cfg.lambda1, cfg.lambda2)?;
    let outer: Vec<f64> = terms.iter().zip(&loss.grad).map(|(t, up)| up * 0.5 / t.2.max(SQRT_FLOOR).sqrt()).collect();

    let mut grads = ModelGrads::zeros(model);
    for (p, (sq, unit, _)) in terms.iter().enumerate() {
        for l in 0..layers {
            for c in 0..sq[l].len() {
                grads.weights[l][c] += outer[p] * unit[l][c] * sq[l][c];
            }
        }
    }

    let state_grads: Vec<Vec<(Tensor, Tensor)>> = (0..prepared.len())
        .into_par_iter()
        .map(|i| {
            let (tape, rec) = &recorded[i];
            let seeds = (0..layers)
                .map(|l| {
                    let fi = feature(i, l);
                    let mut gf = Tensor::zeros(fi.shape().to_vec());
                    let plane = fi.plane();
                    for (p, &(a, b)) in pairs.iter().enumerate() {
                        let other = match (a == i, b == i) {
                            (true, _) => b,
                            (_, true) => a,
                            _ => continue,
                        };
                        let fo = feature(other, l);
                        for c in 0..fi.channels() {
                            let k = outer[p] * 2.0 * model.weights[l][c] * terms[p].1[l][c];
                            if k == 0.0 {
                                continue;
                            }
                            let dst = &mut gf.data_mut()[c * plane..(c + 1) * plane];
                            for (g, (x, y)) in dst.iter_mut().zip(fi.channel(c).iter().zip(fo.channel(c))) {
                                *g += k * (x - y);
                            }
                        }
                    }
                    (rec.features[l], gf)
                })
                .collect();
            let mut gr = tape.backward(seeds)?;
            rec.params
                .iter()
                .map(|&(w, b)| {
                    let gw = gr.take(w).ok_or_else(|| Error::InvalidArgument("missing kernel gradient".into()))?;
                    let gb = gr.take(b).ok_or_else(|| Error::InvalidArgument("missing bias gradient".into()))?;
                    Ok((gw, gb))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    for s in state_grads {
        for (l, (gw, gb)) in s.into_iter().enumerate() {
            grads.convs[l].0.add_assign(&gw)?;
            grads.convs[l].1.add_assign(&gb)?;
        }
    }
    Ok(SequenceGradient { loss, distances, grads })
}

/// Pair distances of one sequence after inference preparation.
pub fn sequence_distances(model: &MetricModel, states: &[VolumeField]) -> Result<Vec<f64>> {
    let prepared = prepare_inputs(states, model.config.input_channels)?;
    let features = prepared
        .par_iter()
        .map(|s| model.raw_features(&Tensor::from_field(s)))
        .collect::<Result<Vec<_>>>()?;
    pair_indices(states.len() - 1).par_iter().map(|&(i, j)| model.feature_distance(&features[i], &features[j])).collect()
}

/// Mean loss and mean SRCC(d, gaps) over `sequences`.
pub fn validate(model: &MetricModel, sequences: &[TrainSequence], cfg: &TrainConfig) -> Result<(f64, f64)> {
    if sequences.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut loss = 0.0;
    let mut score = 0.0;
    for s in sequences {
        let d = sequence_distances(model, &s.states)?;
        let gt = ground_truth_with(s.n(), s.fit.curvature(), cfg.ground_truth);
        loss += correlation_loss(&d, &gt.g, cfg.lambda1, cfg.lambda2)?.loss;
        score += match srcc(&d, &gt.w) {
            Ok(v) => v,
            Err(Error::ConstantInput) => 0.0,
            Err(e) => return Err(e),
        };
    }
    Ok((loss / sequences.len() as f64, score / sequences.len() as f64))
}

/// Tensors for feature statistics: every state of every sequence, prepared for inference.
pub fn normalization_samples(sequences: &[TrainSequence], channels: usize) -> impl Iterator<Item = Result<Tensor>> + '_ {
    sequences.iter().flat_map(move |s| match prepare_inputs(&s.states, channels) {
        Ok(p) => p.iter().map(|f| Ok(Tensor::from_field(f))).collect::<Vec<_>>(),
        Err(e) => vec![Err(e)],
    })
}

fn masks_for(model: &MetricModel, pairs: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<Vec<f64>>>> {
    let rate = model.config.dropout;
    (rate > 0.0).then(|| (0..pairs).map(|_| model.weights.iter().map(|w| dropout_mask(w.len(), rate, rng)).collect()).collect())
}

/// Trains `model` (whose feature statistics must already be set).
pub fn train(model: MetricModel, train: &[TrainSequence], val: &[TrainSequence], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(model, train, val, cfg, |_| {})
}

/// Like [`train`], calling `on_epoch` with the last log row of every validated epoch.
pub fn train_with_progress(
    mut model: MetricModel,
    train: &[TrainSequence],
    val: &[TrainSequence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.stats.is_none() {
        return Err(Error::Config("feature normalization must be initialized before training".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut log = TrainLog::default();
    let channels = model.config.input_channels;
    let initial = validate(&model, val, cfg)?;
    log.initial_validation = (!val.is_empty()).then_some(initial);
    let mut best = (initial.0, model.clone(), 0usize);
    let mut stale = 0;
    let mut iteration = 0;
    let mut epochs_run = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut capped = false;
        for batch in order.chunks(cfg.batch_size) {
            if cfg.max_iterations.is_some_and(|m| iteration >= m) {
                capped = true;
                break;
            }
            iteration += 1;
            let mut total = ModelGrads::zeros(&model);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let seq = &train[idx];
                let prepared = augment_sequence(&seq.states, channels, &mut rng)?;
                let g = seq.ground_truth(cfg.ground_truth);
                let masks = masks_for(&model, g.len(), &mut rng);
                let step = sequence_gradient(&model, &prepared, &g, masks.as_deref(), cfg)?;
                let loss = step.loss.loss();
                let gmax = step.grads.max_abs();
                if !loss.is_finite() || !gmax.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        iteration,
                        detail: format!("sequence {idx}: loss {loss}, max |gradient| {gmax}, distances {:?}", step.distances),
                    });
                }
                batch_loss += loss;
                total.add(&step.grads)?;
            }
            adam.step(model.param_slices_mut(), total.slices());
            model.clamp_weights();
            log.rows.push(LogRow { iteration, loss: batch_loss / batch.len() as f64, epoch, val_loss: None, val_srcc: None });
        }
        if capped && log.rows.last().map_or(true, |r| r.epoch != epoch) {
            break;
        }
        epochs_run = epoch;
        let (val_loss, val_srcc) = validate(&model, val, cfg)?;
        if let Some(last) = log.rows.last_mut() {
            last.val_loss = Some(val_loss);
            last.val_srcc = Some(val_srcc);
            on_epoch(last);
        }
        log.epoch_seconds.push(started.elapsed().as_secs_f64());
        if val.is_empty() || val_loss < best.0 {
            best = (val_loss, model.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
        if capped {
            break;
        }
    }
    Ok(TrainOutcome { model: best.1, log, best_epoch: best.2, epochs_run })
}
