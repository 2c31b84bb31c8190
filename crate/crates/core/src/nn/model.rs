//! Feature extractors and the Siamese distance model.
//!
//! The architecture is written once against [`Backend`] and executed by a
//! recording tape (training), an eager batch evaluator (inference) or a pure
//! shape propagator (validation).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::head::{self, HeadOptions};
use super::ops::{self, Precision};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const WEIGHT_INIT: f64 = 0.1;
pub const STD_FLOOR: f64 = 1e-6;

/// Plain CNN layers as (kernel, stride, padding, channels).
pub const PLAIN_CNN_LAYERS: [(usize, usize, usize, usize); 5] =
    [(12, 4, 4, 32), (5, 1, 2, 96), (3, 1, 1, 192), (3, 1, 1, 128), (3, 1, 1, 128)];
const PLAIN_POOL: (usize, usize) = (4, 2);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Multiscale,
    PlainCnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: Backbone,
    /// Output channels of each scale block; its length is the scale count.
    pub block_channels: Vec<usize>,
    pub convs_per_block: usize,
    pub kernel: usize,
    pub skip_connections: bool,
    pub pooling: bool,
    pub input_channels: usize,
    /// Dropout rate on the aggregation weights during training.
    pub dropout: f64,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Multiscale,
            block_channels: vec![16, 32, 48, 64],
            convs_per_block: 2,
            kernel: 3,
            skip_connections: true,
            pooling: true,
            input_channels: 3,
            dropout: 0.1,
            precision: Precision::F32,
        }
    }
}

/// One convolution of the architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.c_out, self.c_in, self.kernel, self.kernel, self.kernel]
    }

    pub fn param_count(&self) -> usize {
        self.c_out * self.c_in * self.kernel.pow(3) + self.c_out
    }
}

impl ModelConfig {
    pub const VARIANTS: [&'static str; 6] = ["default", "scales3", "scales5", "no_skip", "no_pool", "plain_cnn"];

    pub fn variant(name: &str) -> Result<Self> {
        let base = Self::default();
        Ok(match name {
            "default" | "multiscale" => base,
            "scales3" => Self { block_channels: vec![16, 32, 48], ..base },
            "scales5" => Self { block_channels: vec![16, 32, 48, 64, 64], ..base },
            "no_skip" => Self { skip_connections: false, ..base },
            "no_pool" => Self { pooling: false, ..base },
            "plain_cnn" => Self { backbone: Backbone::PlainCnn, block_channels: Vec::new(), ..base },
            other => return Err(Error::InvalidArgument(format!("unknown model variant `{other}`"))),
        })
    }

    pub fn scale_count(&self) -> usize {
        self.block_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.input_channels == 0 {
            return Err(Error::Config("input_channels must be >= 1".into()));
        }
        if self.backbone == Backbone::Multiscale {
            if self.block_channels.is_empty() || self.block_channels.contains(&0) {
                return Err(Error::Config("block_channels must be non-empty and positive".into()));
            }
            if self.convs_per_block == 0 || self.kernel % 2 == 0 {
                return Err(Error::Config("need convs_per_block >= 1 and an odd kernel".into()));
            }
        }
        Ok(())
    }

    pub fn conv_specs(&self) -> Vec<ConvSpec> {
        match self.backbone {
            Backbone::PlainCnn => {
                let mut c_in = self.input_channels;
                PLAIN_CNN_LAYERS
                    .iter()
                    .map(|&(kernel, stride, pad, c_out)| {
                        let s = ConvSpec { c_in, c_out, kernel, stride, pad };
                        c_in = c_out;
                        s
                    })
                    .collect()
            }
            Backbone::Multiscale => {
                let mut specs = Vec::new();
                let mut prev = 0;
                for (b, &ch) in self.block_channels.iter().enumerate() {
                    let mut c_in = if b > 0 && self.skip_connections { self.input_channels + prev } else { self.input_channels };
                    for _ in 0..self.convs_per_block {
                        specs.push(ConvSpec { c_in, c_out: ch, kernel: self.kernel, stride: 1, pad: self.kernel / 2 });
                        c_in = ch;
                    }
                    prev = ch;
                }
                specs
            }
        }
    }

    /// Channels of every compared feature map (one per ReLU output).
    pub fn feature_channels(&self) -> Vec<usize> {
        self.conv_specs().iter().map(|s| s.c_out).collect()
    }

    /// Trainable parameters: conv kernels and biases plus aggregation weights.
    pub fn param_count(&self) -> usize {
        self.conv_specs().iter().map(ConvSpec::param_count).sum::<usize>() + self.feature_channels().iter().sum::<usize>()
    }

    /// Feature shapes for an input of spatial `dims`, or the error the forward pass would raise.
    pub fn feature_shapes(&self, dims: [usize; 3]) -> Result<Vec<[usize; 4]>> {
        let specs = self.conv_specs();
        let mut b = ShapeBackend { specs: &specs, features: Vec::new() };
        self.run(&mut b, [self.input_channels, dims[0], dims[1], dims[2]])?;
        Ok(b.features)
    }

    pub(crate) fn run<B: Backend>(&self, b: &mut B, input: B::V) -> Result<()> {
        match self.backbone {
            Backbone::Multiscale => self.run_multiscale(b, input),
            Backbone::PlainCnn => {
                let mut x = b.conv(0, &input)?;
                x = b.relu(x);
                b.emit(0, &x)?;
                for l in 1..PLAIN_CNN_LAYERS.len() {
                    if l <= 2 {
                        x = b.max_pool(&x, PLAIN_POOL.0, PLAIN_POOL.1)?;
                    }
                    x = b.conv(l, &x)?;
                    x = b.relu(x);
                    b.emit(l, &x)?;
                }
                Ok(())
            }
        }
    }

    fn run_multiscale<B: Backend>(&self, b: &mut B, input: B::V) -> Result<()> {
        let mut layer = 0;
        let mut raw = input;
        let mut prev: Option<B::V> = None;
        for block in 0..self.scale_count() {
            let mut x = if block == 0 {
                b.conv(layer, &raw)?
            } else {
                if self.pooling {
                    raw = b.avg_pool(&raw, 2)?;
                }
                match (&prev, self.skip_connections) {
                    (Some(p), true) => {
                        let pooled;
                        let p = if self.pooling {
                            pooled = b.avg_pool(p, 2)?;
                            &pooled
                        } else {
                            p
                        };
                        let joined = b.concat(&raw, p)?;
                        b.conv(layer, &joined)?
                    }
                    _ => b.conv(layer, &raw)?,
                }
            };
            for c in 0..self.convs_per_block {
                if c > 0 {
                    x = b.conv(layer, &x)?;
                }
                x = b.relu(x);
                b.emit(layer, &x)?;
                layer += 1;
            }
            prev = Some(x);
        }
        Ok(())
    }
}

/// Execution strategy for one architecture description.
pub(crate) trait Backend {
    type V;
    fn conv(&mut self, layer: usize, x: &Self::V) -> Result<Self::V>;
    fn relu(&mut self, x: Self::V) -> Self::V;
    fn avg_pool(&mut self, x: &Self::V, k: usize) -> Result<Self::V>;
    fn max_pool(&mut self, x: &Self::V, k: usize, stride: usize) -> Result<Self::V>;
    fn concat(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn emit(&mut self, feature: usize, x: &Self::V) -> Result<()>;
}

struct ShapeBackend<'a> {
    specs: &'a [ConvSpec],
    features: Vec<[usize; 4]>,
}

impl Backend for ShapeBackend<'_> {
    type V = [usize; 4];

    fn conv(&mut self, layer: usize, x: &[usize; 4]) -> Result<[usize; 4]> {
        let s = self.specs[layer];
        if x[0] != s.c_in {
            return Err(Error::ShapeMismatch(format!("layer {layer} expects {} channels, got {}", s.c_in, x[0])));
        }
        let mut out = [s.c_out, 0, 0, 0];
        for a in 1..4 {
            let span = x[a] + 2 * s.pad;
            if span < s.kernel {
                return Err(Error::FieldTooSmall(format!("dim {} below kernel {} at layer {layer}", x[a], s.kernel)));
            }
            out[a] = (span - s.kernel) / s.stride + 1;
        }
        Ok(out)
    }

    fn relu(&mut self, x: [usize; 4]) -> [usize; 4] {
        x
    }

    fn avg_pool(&mut self, x: &[usize; 4], k: usize) -> Result<[usize; 4]> {
        if x[1..].iter().any(|&d| d % k != 0) {
            return Err(Error::IndivisibleDims { dims: x[1..].to_vec(), factor: k });
        }
        Ok([x[0], x[1] / k, x[2] / k, x[3] / k])
    }

    fn max_pool(&mut self, x: &[usize; 4], k: usize, stride: usize) -> Result<[usize; 4]> {
        if x[1..].iter().any(|&d| d < k) {
            return Err(Error::FieldTooSmall(format!("dims {:?} below max-pool window {k}", &x[1..])));
        }
        Ok([x[0], (x[1] - k) / stride + 1, (x[2] - k) / stride + 1, (x[3] - k) / stride + 1])
    }

    fn concat(&mut self, a: &[usize; 4], b: &[usize; 4]) -> Result<[usize; 4]> {
        if a[1..] != b[1..] {
            return Err(Error::ShapeMismatch(format!("concat of {a:?} and {b:?}")));
        }
        Ok([a[0] + b[0], a[1], a[2], a[3]])
    }

    fn emit(&mut self, _: usize, x: &[usize; 4]) -> Result<()> {
        self.features.push(*x);
        Ok(())
    }
}

struct TapeBackend<'a> {
    tape: &'a mut Tape,
    params: &'a [(Var, Var)],
    specs: Vec<ConvSpec>,
    features: Vec<Var>,
}

impl Backend for TapeBackend<'_> {
    type V = Var;

    fn conv(&mut self, layer: usize, x: &Var) -> Result<Var> {
        let (w, b) = self.params[layer];
        let s = self.specs[layer];
        self.tape.conv3d(*x, w, b, s.stride, s.pad)
    }

    fn relu(&mut self, x: Var) -> Var {
        self.tape.relu(x)
    }

    fn avg_pool(&mut self, x: &Var, k: usize) -> Result<Var> {
        self.tape.avg_pool(*x, k)
    }

    fn max_pool(&mut self, x: &Var, k: usize, stride: usize) -> Result<Var> {
        self.tape.max_pool(*x, k, stride)
    }

    fn concat(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.concat(*a, *b)
    }

    fn emit(&mut self, _: usize, x: &Var) -> Result<()> {
        self.features.push(*x);
        Ok(())
    }
}

/// Evaluates a batch of inputs layer by layer and hands each feature map to a sink.
struct EagerBackend<'a, F> {
    model: &'a MetricModel,
    sink: F,
}

impl<F: FnMut(usize, &[Tensor]) -> Result<()>> Backend for EagerBackend<'_, F> {
    type V = Vec<Tensor>;

    fn conv(&mut self, layer: usize, x: &Vec<Tensor>) -> Result<Vec<Tensor>> {
        let c = &self.model.convs[layer];
        let p = self.model.config.precision;
        x.iter().map(|t| ops::conv3d(t, &c.weight, &c.bias, c.stride, c.pad, p)).collect()
    }

    fn relu(&mut self, x: Vec<Tensor>) -> Vec<Tensor> {
        x.into_iter().map(ops::relu).collect()
    }

    fn avg_pool(&mut self, x: &Vec<Tensor>, k: usize) -> Result<Vec<Tensor>> {
        x.iter().map(|t| ops::avg_pool3d(t, k)).collect()
    }

    fn max_pool(&mut self, x: &Vec<Tensor>, k: usize, stride: usize) -> Result<Vec<Tensor>> {
        x.iter().map(|t| ops::max_pool3d(t, k, stride).map(|(y, _)| y)).collect()
    }

    fn concat(&mut self, a: &Vec<Tensor>, b: &Vec<Tensor>) -> Result<Vec<Tensor>> {
        a.iter().zip(b).map(|(a, b)| ops::concat_channels(a, b)).collect()
    }

    fn emit(&mut self, feature: usize, x: &Vec<Tensor>) -> Result<()> {
        (self.sink)(feature, x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

/// Frozen per-channel statistics of every feature map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

/// Streaming per-channel mean and variance (pairwise merge of sample moments).
#[derive(Clone, Debug)]
pub struct StatsAccumulator {
    count: Vec<f64>,
    mean: Vec<Vec<f64>>,
    m2: Vec<Vec<f64>>,
}

impl StatsAccumulator {
    pub fn new(channels: &[usize]) -> Self {
        Self {
            count: vec![0.0; channels.len()],
            mean: channels.iter().map(|&c| vec![0.0; c]).collect(),
            m2: channels.iter().map(|&c| vec![0.0; c]).collect(),
        }
    }

    pub fn samples(&self) -> f64 {
        self.count.first().copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, features: &[Tensor]) -> Result<()> {
        if features.len() != self.mean.len() {
            return Err(Error::ShapeMismatch(format!("{} feature maps, expected {}", features.len(), self.mean.len())));
        }
        for (l, f) in features.iter().enumerate() {
            if f.channels() != self.mean[l].len() {
                return Err(Error::ShapeMismatch(format!("feature {l} has {} channels", f.channels())));
            }
            let nb = f.plane() as f64;
            let na = self.count[l];
            let n = na + nb;
            for c in 0..f.channels() {
                let x = f.channel(c);
                let mb = x.iter().sum::<f64>() / nb;
                let m2b: f64 = x.iter().map(|v| (v - mb) * (v - mb)).sum();
                let delta = mb - self.mean[l][c];
                self.mean[l][c] += delta * nb / n;
                self.m2[l][c] += m2b + delta * delta * na * nb / n;
            }
            self.count[l] = n;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<FeatureStats> {
        if self.count.iter().any(|&c| c == 0.0) {
            return Err(Error::EmptyStream);
        }
        let std = self
            .m2
            .iter()
            .zip(&self.count)
            .map(|(m2, &n)| m2.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect())
            .collect();
        Ok(FeatureStats { mean: self.mean.clone(), std })
    }
}

/// Reference estimator: global mean first, then the mean squared deviation.
pub fn two_pass_stats(samples: &[Vec<Tensor>]) -> Result<FeatureStats> {
    let first = samples.first().ok_or(Error::EmptyStream)?;
    let mut mean = Vec::new();
    let mut std = Vec::new();
    for l in 0..first.len() {
        let channels = first[l].channels();
        let count: f64 = samples.iter().map(|s| s[l].plane() as f64).sum();
        let m: Vec<f64> = (0..channels).map(|c| samples.iter().map(|s| s[l].channel(c).iter().sum::<f64>()).sum::<f64>() / count).collect();
        let s = (0..channels)
            .map(|c| {
                let ss: f64 = samples.iter().map(|s| s[l].channel(c).iter().map(|v| (v - m[c]).powi(2)).sum::<f64>()).sum();
                (ss / count).sqrt().max(STD_FLOOR)
            })
            .collect();
        mean.push(m);
        std.push(s);
    }
    Ok(FeatureStats { mean, std })
}

/// Gradients with the layout of the trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub convs: Vec<(Tensor, Tensor)>,
    pub weights: Vec<Vec<f64>>,
}

impl ModelGrads {
    pub fn zeros(model: &MetricModel) -> Self {
        Self {
            convs: model.convs.iter().map(|c| (Tensor::zeros(c.weight.shape().to_vec()), Tensor::zeros(c.bias.shape().to_vec()))).collect(),
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &ModelGrads) -> Result<()> {
        for ((a, b), (c, d)) in self.convs.iter_mut().zip(&other.convs) {
            a.add_assign(c)?;
            b.add_assign(d)?;
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in &self.convs {
            out.push(w.data());
            out.push(b.data());
        }
        out.extend(self.weights.iter().map(Vec::as_slice));
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Result of recording one forward pass on a tape.
pub struct Recorded {
    pub params: Vec<(Var, Var)>,
    pub features: Vec<Var>,
}

/// Feature extractor, normalization statistics and aggregation weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricModel {
    pub config: ModelConfig,
    pub convs: Vec<ConvLayer>,
    /// Aggregation weight per channel of every feature map.
    pub weights: Vec<Vec<f64>>,
    pub stats: Option<FeatureStats>,
}

impl MetricModel {
    /// Fresh model with uniform ±1/sqrt(fan_in) kernels and biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = config
            .conv_specs()
            .iter()
            .map(|s| {
                let bound = 1.0 / ((s.c_in * s.kernel.pow(3)) as f64).sqrt();
                let shape = s.weight_shape();
                let n: usize = shape.iter().product();
                let w = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                let b = (0..s.c_out).map(|_| rng.gen_range(-bound..bound)).collect();
                ConvLayer {
                    weight: Tensor::new(shape, w).expect("sized"),
                    bias: Tensor::new(vec![s.c_out], b).expect("sized"),
                    stride: s.stride,
                    pad: s.pad,
                }
            })
            .collect();
        let weights = config.feature_channels().iter().map(|&c| vec![WEIGHT_INIT; c]).collect();
        Ok(Self { config, convs, weights, stats: None })
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(|c| c.weight.len() + c.bias.len()).sum::<usize>() + self.weights.iter().map(Vec::len).sum::<usize>()
    }

    pub fn std(&self) -> Option<&[Vec<f64>]> {
        self.stats.as_ref().map(|s| s.std.as_slice())
    }

    pub fn head_options(&self) -> HeadOptions<'_> {
        HeadOptions { std: self.std(), mask: None }
    }

    fn check_input(&self, t: &Tensor) -> Result<()> {
        t.ensure_activation()?;
        if t.channels() != self.config.input_channels {
            return Err(Error::ShapeMismatch(format!("model takes {} channels, got {}", self.config.input_channels, t.channels())));
        }
        Ok(())
    }

    /// Runs a batch of inputs in lockstep; `sink(layer, features)` sees each feature map once.
    pub fn run_batch<F>(&self, inputs: Vec<Tensor>, sink: F) -> Result<()>
    where
        F: FnMut(usize, &[Tensor]) -> Result<()>,
    {
        for t in &inputs {
            self.check_input(t)?;
        }
        let mut b = EagerBackend { model: self, sink };
        self.config.run(&mut b, inputs)
    }

    /// Unnormalized feature maps of one prepared input.
    pub fn raw_features(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        let mut out = Vec::new();
        self.run_batch(vec![input.clone()], |_, f| {
            out.push(f[0].clone());
            Ok(())
        })?;
        Ok(out)
    }

    /// Feature maps normalized with the frozen statistics (raw when none are set).
    pub fn forward_features(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        let raw = self.raw_features(input)?;
        match &self.stats {
            None => Ok(raw),
            Some(s) => raw.iter().enumerate().map(|(l, f)| ops::normalize(f, &s.mean[l], &s.std[l])).collect(),
        }
    }

    /// Distance between two prepared inputs, evaluated in lockstep so only one
    /// feature map per input is alive at a time.
    pub fn distance(&self, a: &Tensor, b: &Tensor) -> Result<f64> {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
        let std = self.std();
        let mut d2 = 0.0;
        self.run_batch(vec![a.clone(), b.clone()], |l, f| {
            d2 += head::layer_term(&f[0], &f[1], &self.weights[l], std.map(|s| s[l].as_slice()), None)?;
            Ok(())
        })?;
        Ok(d2.max(0.0).sqrt())
    }

    /// Distance from precomputed raw features.
    pub fn feature_distance(&self, fa: &[Tensor], fb: &[Tensor]) -> Result<f64> {
        head::distance(fa, fb, &self.weights, self.head_options())
    }

    /// Records the forward pass of one input with trainable parameter leaves.
    pub fn record(&self, tape: &mut Tape, input: Tensor) -> Result<Recorded> {
        self.check_input(&input)?;
        let params: Vec<(Var, Var)> =
            self.convs.iter().map(|c| (tape.leaf(c.weight.clone(), true), tape.leaf(c.bias.clone(), true))).collect();
        let x = tape.leaf(input, false);
        let mut b = TapeBackend { tape, params: &params, specs: self.config.conv_specs(), features: Vec::new() };
        self.config.run(&mut b, x)?;
        let features = b.features;
        Ok(Recorded { params, features })
    }

    /// Accumulates per-channel feature statistics over `samples` and freezes them.
    /// Samples are processed in parallel batches and merged in stream order.
    pub fn init_feature_normalization<I>(&mut self, samples: I) -> Result<()>
    where
        I: IntoIterator<Item = Result<Tensor>>,
    {
        const BATCH: usize = 8;
        let mut acc = StatsAccumulator::new(&self.config.feature_channels());
        let mut it = samples.into_iter();
        loop {
            let batch = it.by_ref().take(BATCH).collect::<Result<Vec<_>>>()?;
            if batch.is_empty() {
                break;
            }
            let features = batch.par_iter().map(|t| self.raw_features(t)).collect::<Result<Vec<_>>>()?;
            for f in &features {
                acc.add(f)?;
            }
        }
        if acc.samples() == 0.0 {
            return Err(Error::EmptyStream);
        }
        self.stats = Some(acc.finish()?);
        Ok(())
    }

    /// Flat views of all trainable parameters, in [`ModelGrads::slices`] order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for c in &mut self.convs {
            out.push(c.weight.data_mut());
            out.push(c.bias.data_mut());
        }
        out.extend(self.weights.iter_mut().map(Vec::as_mut_slice));
        out
    }

    pub fn clamp_weights(&mut self) {
        self.weights.iter_mut().flatten().for_each(|w| *w = w.max(0.0));
    }
}
