//! Central finite-difference checks of every differentiable op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::head::{self, HeadOptions};
use super::model::{MetricModel, ModelConfig, ModelGrads};
use super::ops::Precision;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-3;
/// Smaller step for the end-to-end model check, where ReLU kinks are dense.
const MODEL_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-3;
/// Magnitude below which errors are measured in absolute terms.
const REL_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub entries: usize,
    /// Entries whose one-sided differences disagree (a kink inside the step).
    pub skipped: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sized")
}

/// Values bounded away from zero so no finite-difference step crosses a ReLU kink.
fn away_from_zero(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = random(shape, rng);
    t.data_mut().iter_mut().for_each(|v| *v = v.signum() * (v.abs() + 0.05));
    t
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Compares analytic gradients of `f` against central differences over every input entry.
fn compare<F>(name: &str, inputs: &[Tensor], analytic: &[Tensor], f: F) -> Result<GradCheck>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    compare_with(name, inputs, analytic, f, FD_STEP, false)
}

fn compare_with<F>(name: &str, inputs: &[Tensor], analytic: &[Tensor], f: F, step: f64, skip_kinks: bool) -> Result<GradCheck>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    let mut worst: f64 = 0.0;
    let (mut entries, mut skipped) = (0, 0);
    let mut xs = inputs.to_vec();
    let center = if skip_kinks { f(&xs)? } else { 0.0 };
    for (k, g) in analytic.iter().enumerate() {
        for i in 0..xs[k].len() {
            let orig = xs[k].data()[i];
            xs[k].data_mut()[i] = orig + step;
            let up = f(&xs)?;
            xs[k].data_mut()[i] = orig - step;
            let down = f(&xs)?;
            xs[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            if skip_kinks && rel_error((up - center) / step, (center - down) / step) > TOLERANCE {
                skipped += 1;
                continue;
            }
            worst = worst.max(rel_error(g.data()[i], numeric));
            entries += 1;
        }
    }
    Ok(GradCheck { name: name.into(), max_rel_error: worst, entries, skipped })
}

/// Checks an op recorded on a tape through the scalar `<op(inputs), r>` for a random `r`.
fn tape_check<B>(name: &str, inputs: Vec<Tensor>, build: B, rng: &mut ChaCha8Rng) -> Result<GradCheck>
where
    B: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let forward = |xs: &[Tensor]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new(Precision::F64);
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
        let y = build(&mut tape, &vars)?;
        Ok((tape, vars, y))
    };
    let (tape, vars, y) = forward(&inputs)?;
    let r = random(tape.value(y).shape().to_vec(), rng);
    let mut grads = tape.backward(vec![(y, r.clone())])?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(&inputs)
        .map(|(v, x)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(x.shape().to_vec())))
        .collect();
    compare(name, &inputs, &analytic, |xs| {
        let (t, _, y) = forward(xs)?;
        Ok(dot(t.value(y), &r))
    })
}

fn head_check(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let shapes = [vec![2, 3, 3, 3], vec![3, 2, 2, 2]];
    let fa: Vec<Tensor> = shapes.iter().map(|s| random(s.clone(), rng)).collect();
    let fb: Vec<Tensor> = shapes.iter().map(|s| random(s.clone(), rng)).collect();
    let weights: Vec<Vec<f64>> = shapes.iter().map(|s| (0..s[0]).map(|_| rng.gen_range(0.05..1.0)).collect()).collect();
    let std: Vec<Vec<f64>> = shapes.iter().map(|s| (0..s[0]).map(|_| rng.gen_range(0.5..2.0)).collect()).collect();
    let mask: Vec<Vec<f64>> = shapes.iter().map(|s| (0..s[0]).map(|c| if c == 1 { 0.0 } else { 1.25 }).collect()).collect();
    let opts = HeadOptions { std: Some(&std), mask: Some(&mask) };
    let mut ga: Vec<Tensor> = fa.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
    let mut gb = ga.clone();
    let mut gw: Vec<Vec<f64>> = weights.iter().map(|w| vec![0.0; w.len()]).collect();
    head::backward_into(&fa, &fb, &weights, opts, 1.0, &mut ga, &mut gb, &mut gw)?;

    let flat_w = |w: &[Vec<f64>]| Tensor::new(vec![w.iter().map(Vec::len).sum()], w.concat()).expect("sized");
    let mut inputs = fa.clone();
    inputs.extend(fb.iter().cloned());
    inputs.push(flat_w(&weights));
    let mut analytic = ga;
    analytic.extend(gb);
    analytic.push(flat_w(&gw));
    let layers = fa.len();
    compare("head", &inputs, &analytic, |xs| {
        let mut w = Vec::new();
        let mut off = 0;
        for ws in &weights {
            w.push(xs[2 * layers].data()[off..off + ws.len()].to_vec());
            off += ws.len();
        }
        head::distance(&xs[..layers], &xs[layers..2 * layers], &w, opts)
    })
}

/// End-to-end check of a small model: tape features, head and parameter gradients.
fn model_check(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let config = ModelConfig { block_channels: vec![2, 3], precision: Precision::F64, ..Default::default() };
    let mut model = MetricModel::new(config, rng.gen())?;
    model.weights.iter_mut().flatten().for_each(|w| *w = rng.gen_range(0.05..0.5));
    let a = random(vec![3, 4, 4, 4], rng);
    let b = random(vec![3, 4, 4, 4], rng);
    model.init_feature_normalization(vec![Ok(a.clone()), Ok(b.clone())])?;

    let mut grads = ModelGrads::zeros(&model);
    let mut tapes = Vec::new();
    let mut feats = Vec::new();
    for x in [&a, &b] {
        let mut tape = Tape::new(Precision::F64);
        let rec = model.record(&mut tape, x.clone())?;
        feats.push(rec.features.iter().map(|v| tape.value(*v).clone()).collect::<Vec<_>>());
        tapes.push((tape, rec));
    }
    let mut gf: Vec<Vec<Tensor>> = feats.iter().map(|f| f.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect()).collect();
    let (g0, g1) = gf.split_at_mut(1);
    head::backward_into(&feats[0], &feats[1], &model.weights, model.head_options(), 1.0, &mut g0[0], &mut g1[0], &mut grads.weights)?;
    for ((tape, rec), g) in tapes.iter().zip(gf) {
        let seeds = rec.features.iter().copied().zip(g).collect();
        let mut gr = tape.backward(seeds)?;
        for (l, &(w, b)) in rec.params.iter().enumerate() {
            grads.convs[l].0.add_assign(&gr.take(w).expect("weight gradient"))?;
            grads.convs[l].1.add_assign(&gr.take(b).expect("bias gradient"))?;
        }
    }

    let mut inputs = Vec::new();
    let mut analytic = Vec::new();
    for (c, (gw, gb)) in model.convs.iter().zip(&grads.convs) {
        inputs.push(c.weight.clone());
        inputs.push(c.bias.clone());
        analytic.push(gw.clone());
        analytic.push(gb.clone());
    }
    let f = |xs: &[Tensor]| {
        let mut m = model.clone();
        for (l, c) in m.convs.iter_mut().enumerate() {
            c.weight = xs[2 * l].clone();
            c.bias = xs[2 * l + 1].clone();
        }
        m.distance(&a, &b)
    };
    compare_with("model", &inputs, &analytic, f, MODEL_STEP, true)
}

/// Runs the full suite on small random tensors.
pub fn run_all(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out = Vec::new();
    for (stride, pad) in [(1, 1), (2, 0)] {
        let inputs = vec![random(vec![2, 4, 4, 4], r), random(vec![3, 2, 3, 3, 3], r), random(vec![3], r)];
        out.push(tape_check(&format!("conv3d_s{stride}_p{pad}"), inputs, |t, v| t.conv3d(v[0], v[1], v[2], stride, pad), r)?);
    }
    out.push(tape_check("relu", vec![away_from_zero(vec![2, 3, 3, 3], r)], |t, v| Ok(t.relu(v[0])), r)?);
    out.push(tape_check("avg_pool3d", vec![random(vec![2, 4, 4, 4], r)], |t, v| t.avg_pool(v[0], 2), r)?);
    out.push(tape_check("max_pool3d", vec![random(vec![2, 5, 5, 5], r)], |t, v| t.max_pool(v[0], 4, 1), r)?);
    out.push(tape_check("concat", vec![random(vec![2, 3, 3, 3], r), random(vec![1, 3, 3, 3], r)], |t, v| t.concat(v[0], v[1]), r)?);
    out.push(tape_check(
        "dropout_off",
        vec![random(vec![2, 3, 3, 3], r)],
        |t, v| {
            let mut unused = ChaCha8Rng::seed_from_u64(0);
            Ok(t.dropout(v[0], 0.5, false, &mut unused))
        },
        r,
    )?);
    let mean: Vec<f64> = (0..2).map(|_| r.gen_range(-1.0..1.0)).collect();
    let std: Vec<f64> = (0..2).map(|_| r.gen_range(0.5..2.0)).collect();
    out.push(tape_check("normalize", vec![random(vec![2, 3, 3, 3], r)], |t, v| t.normalize(v[0], &mean, &std), r)?);
    out.push(head_check(r)?);
    out.push(model_check(r)?);
    Ok(out)
}
