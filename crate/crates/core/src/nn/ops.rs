//! Forward and backward kernels of the differentiable ops.
//!
//! Convolutions lower chunks of output depth planes to a column matrix and
//! multiply with a GEMM. Every accumulation outside the GEMM is done in f64.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Element type used inside convolution GEMMs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Target number of GEMM columns per chunk.
const CHUNK_COLUMNS: usize = 4096;

trait GemmScalar: Copy + Default + Send + Sync {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    /// C (m×n) = A (m×k) · B (k×n) with explicit row/column strides; C is overwritten.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], rsa: isize, csa: isize, b: &[Self], rsb: isize, csb: isize, c: &mut [Self], rsc: isize);
}

impl GemmScalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], rsa: isize, csa: isize, b: &[Self], rsb: isize, csb: isize, c: &mut [Self], rsc: isize) {
        debug_assert!(c.len() >= m * n);
        // SAFETY: callers size `a`, `b` and `c` to cover every strided index of the product.
        unsafe { matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 0.0, c.as_mut_ptr(), rsc, 1) }
    }
}

impl GemmScalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], rsa: isize, csa: isize, b: &[Self], rsb: isize, csb: isize, c: &mut [Self], rsc: isize) {
        debug_assert!(c.len() >= m * n);
        // SAFETY: as for f32.
        unsafe { matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 0.0, c.as_mut_ptr(), rsc, 1) }
    }
}

/// Geometry of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub input: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeometry {
    pub fn new(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        x.ensure_activation()?;
        let ws = w.shape();
        if ws.len() != 5 || ws[2] != ws[3] || ws[3] != ws[4] {
            return Err(Error::ShapeMismatch(format!("kernel shape {ws:?} must be [out, in, k, k, k]")));
        }
        if ws[1] != x.channels() {
            return Err(Error::ShapeMismatch(format!("kernel expects {} input channels, got {}", ws[1], x.channels())));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        let k = ws[2];
        let input = x.spatial();
        let mut output = [0; 3];
        for a in 0..3 {
            let span = input[a] + 2 * pad;
            if span < k {
                return Err(Error::FieldTooSmall(format!("dim {} with padding {pad} below kernel {k}", input[a])));
            }
            output[a] = (span - k) / stride + 1;
        }
        Ok(Self { c_in: ws[1], c_out: ws[0], k, stride, pad, input, output })
    }

    fn rows(&self) -> usize {
        self.c_in * self.k * self.k * self.k
    }

    fn plane(&self) -> usize {
        self.output[1] * self.output[2]
    }

    fn out_cells(&self) -> usize {
        self.output.iter().product()
    }

    fn planes_per_chunk(&self) -> usize {
        (CHUNK_COLUMNS / self.plane().max(1)).clamp(1, self.output[0])
    }

    /// Source index range along one axis: for output positions `0..out` and kernel tap `t`,
    /// the outputs whose source `o·s + t - p` lies in `0..len`.
    fn valid_range(&self, t: usize, len: usize, out: usize) -> (usize, usize) {
        let (s, p) = (self.stride as i64, self.pad as i64);
        let lo = ((p - t as i64).max(0) + s - 1) / s;
        let hi = ((len as i64 - 1 + p - t as i64).div_euclid(s) + 1).clamp(0, out as i64);
        (lo.min(out as i64) as usize, hi.max(lo.min(out as i64)) as usize)
    }
}

/// Writes the column matrix for output depth planes `z0..z1` into `col` (rows × cols).
fn im2col<T: GemmScalar>(x: &[f64], g: &ConvGeometry, z0: usize, z1: usize, col: &mut Vec<T>) {
    let [d, h, w] = g.input;
    let [_, ho, wo] = g.output;
    let cols = (z1 - z0) * ho * wo;
    col.clear();
    col.resize(g.rows() * cols, T::default());
    let mut row = 0;
    for ci in 0..g.c_in {
        let xc = &x[ci * d * h * w..(ci + 1) * d * h * w];
        for kz in 0..g.k {
            for ky in 0..g.k {
                let (oy0, oy1) = g.valid_range(ky, h, ho);
                for kx in 0..g.k {
                    let (ox0, ox1) = g.valid_range(kx, w, wo);
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for oz in z0..z1 {
                        let iz = (oz * g.stride + kz) as i64 - g.pad as i64;
                        if iz < 0 || iz >= d as i64 {
                            continue;
                        }
                        let zbase = iz as usize * h * w;
                        let obase = (oz - z0) * ho * wo;
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let src = zbase + iy * w;
                            let o = obase + oy * wo;
                            if g.stride == 1 {
                                let ix0 = ox0 + kx - g.pad;
                                for (dv, sv) in dst[o + ox0..o + ox1].iter_mut().zip(&xc[src + ix0..src + ix0 + (ox1 - ox0)]) {
                                    *dv = T::from_f64(*sv);
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    dst[o + ox] = T::from_f64(xc[src + ox * g.stride + kx - g.pad]);
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Scatter-adds a column-matrix gradient back onto the input gradient.
fn col2im<T: GemmScalar>(gcol: &[T], g: &ConvGeometry, z0: usize, z1: usize, gx: &mut [f64]) {
    let [d, h, w] = g.input;
    let [_, ho, wo] = g.output;
    let cols = (z1 - z0) * ho * wo;
    let mut row = 0;
    for ci in 0..g.c_in {
        let gc = &mut gx[ci * d * h * w..(ci + 1) * d * h * w];
        for kz in 0..g.k {
            for ky in 0..g.k {
                let (oy0, oy1) = g.valid_range(ky, h, ho);
                for kx in 0..g.k {
                    let (ox0, ox1) = g.valid_range(kx, w, wo);
                    let src = &gcol[row * cols..(row + 1) * cols];
                    for oz in z0..z1 {
                        let iz = (oz * g.stride + kz) as i64 - g.pad as i64;
                        if iz < 0 || iz >= d as i64 {
                            continue;
                        }
                        let zbase = iz as usize * h * w;
                        let obase = (oz - z0) * ho * wo;
                        for oy in oy0..oy1 {
                            let iy = oy * g.stride + ky - g.pad;
                            let dst = zbase + iy * w;
                            let o = obase + oy * wo;
                            for ox in ox0..ox1 {
                                gc[dst + ox * g.stride + kx - g.pad] += src[o + ox].to_f64();
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn conv_forward_impl<T: GemmScalar>(x: &Tensor, w: &Tensor, b: &Tensor, g: &ConvGeometry) -> Tensor {
    let wt: Vec<T> = w.data().iter().map(|&v| T::from_f64(v)).collect();
    let total = g.out_cells();
    let mut y = vec![0.0; g.c_out * total];
    let mut col = Vec::new();
    let mut buf = Vec::new();
    let step = g.planes_per_chunk();
    let rows = g.rows();
    for z0 in (0..g.output[0]).step_by(step) {
        let z1 = (z0 + step).min(g.output[0]);
        let cols = (z1 - z0) * g.plane();
        im2col(x.data(), g, z0, z1, &mut col);
        buf.clear();
        buf.resize(g.c_out * cols, T::default());
        T::gemm(g.c_out, rows, cols, &wt, rows as isize, 1, &col, cols as isize, 1, &mut buf, cols as isize);
        let off = z0 * g.plane();
        for co in 0..g.c_out {
            let bias = b.data()[co];
            let dst = &mut y[co * total + off..co * total + off + cols];
            for (o, v) in dst.iter_mut().zip(&buf[co * cols..(co + 1) * cols]) {
                *o = v.to_f64() + bias;
            }
        }
    }
    Tensor::new(vec![g.c_out, g.output[0], g.output[1], g.output[2]], y).expect("sized above")
}

/// 3D cross-correlation with zero padding. `w` is `[out, in, k, k, k]`, `b` is `[out]`.
pub fn conv3d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize, precision: Precision) -> Result<Tensor> {
    let g = ConvGeometry::new(x, w, stride, pad)?;
    if b.len() != g.c_out {
        return Err(Error::ShapeMismatch(format!("bias has {} entries for {} outputs", b.len(), g.c_out)));
    }
    Ok(match precision {
        Precision::F32 => conv_forward_impl::<f32>(x, w, b, &g),
        Precision::F64 => conv_forward_impl::<f64>(x, w, b, &g),
    })
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn conv_backward_impl<T: GemmScalar>(x: &Tensor, w: &Tensor, gy: &Tensor, g: &ConvGeometry, need_input: bool) -> ConvGrads {
    let wt: Vec<T> = w.data().iter().map(|&v| T::from_f64(v)).collect();
    let total = g.out_cells();
    let rows = g.rows();
    let mut gw = vec![0.0; g.c_out * rows];
    let mut gb = vec![0.0; g.c_out];
    for co in 0..g.c_out {
        gb[co] = gy.data()[co * total..(co + 1) * total].iter().sum();
    }
    let mut gx = if need_input { Some(vec![0.0; x.len()]) } else { None };
    let (mut col, mut gyc, mut gwc, mut gcol) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let step = g.planes_per_chunk();
    for z0 in (0..g.output[0]).step_by(step) {
        let z1 = (z0 + step).min(g.output[0]);
        let cols = (z1 - z0) * g.plane();
        let off = z0 * g.plane();
        gyc.clear();
        for co in 0..g.c_out {
            gyc.extend(gy.data()[co * total + off..co * total + off + cols].iter().map(|&v| T::from_f64(v)));
        }
        im2col(x.data(), g, z0, z1, &mut col);
        gwc.clear();
        gwc.resize(g.c_out * rows, T::default());
        // gW (out × rows) = gY (out × cols) · colᵀ (cols × rows)
        T::gemm(g.c_out, cols, rows, &gyc, cols as isize, 1, &col, 1, cols as isize, &mut gwc, rows as isize);
        gw.iter_mut().zip(&gwc).for_each(|(a, b)| *a += b.to_f64());
        if let Some(gx) = gx.as_mut() {
            gcol.clear();
            gcol.resize(rows * cols, T::default());
            // gcol (rows × cols) = Wᵀ (rows × out) · gY (out × cols)
            T::gemm(rows, g.c_out, cols, &wt, 1, rows as isize, &gyc, cols as isize, 1, &mut gcol, cols as isize);
            col2im(&gcol, g, z0, z1, gx);
        }
    }
    ConvGrads {
        input: gx.map(|v| Tensor::new(x.shape().to_vec(), v).expect("input shape")),
        weight: Tensor::new(w.shape().to_vec(), gw).expect("kernel shape"),
        bias: Tensor::new(vec![g.c_out], gb).expect("bias shape"),
    }
}

pub fn conv3d_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    stride: usize,
    pad: usize,
    precision: Precision,
    need_input: bool,
) -> Result<ConvGrads> {
    let g = ConvGeometry::new(x, w, stride, pad)?;
    if gy.shape() != [g.c_out, g.output[0], g.output[1], g.output[2]] {
        return Err(Error::ShapeMismatch(format!("output gradient shape {:?}", gy.shape())));
    }
    Ok(match precision {
        Precision::F32 => conv_backward_impl::<f32>(x, w, gy, &g, need_input),
        Precision::F64 => conv_backward_impl::<f64>(x, w, gy, &g, need_input),
    })
}

pub fn relu(mut x: Tensor) -> Tensor {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

/// Gradient of ReLU given its output `y`.
pub fn relu_backward(y: &Tensor, gy: &Tensor) -> Tensor {
    let data = y.data().iter().zip(gy.data()).map(|(&y, &g)| if y > 0.0 { g } else { 0.0 }).collect();
    Tensor::new(y.shape().to_vec(), data).expect("same shape")
}

fn pooled_dims(x: &Tensor, k: usize) -> Result<[usize; 3]> {
    x.ensure_activation()?;
    let s = x.spatial();
    if k == 0 || s.iter().any(|&d| d % k != 0) {
        return Err(Error::IndivisibleDims { dims: s.to_vec(), factor: k });
    }
    Ok(s.map(|d| d / k))
}

/// Mean over non-overlapping k³ blocks.
pub fn avg_pool3d(x: &Tensor, k: usize) -> Result<Tensor> {
    let [od, oh, ow] = pooled_dims(x, k)?;
    let [_, h, w] = x.spatial();
    let c = x.channels();
    let norm = 1.0 / (k * k * k) as f64;
    let mut out = Vec::with_capacity(c * od * oh * ow);
    for ch in 0..c {
        let xc = x.channel(ch);
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    for dz in 0..k {
                        for dy in 0..k {
                            let base = ((z * k + dz) * h + y * k + dy) * w + xx * k;
                            acc += xc[base..base + k].iter().sum::<f64>();
                        }
                    }
                    out.push(acc * norm);
                }
            }
        }
    }
    Tensor::new(vec![c, od, oh, ow], out)
}

pub fn avg_pool3d_backward(gy: &Tensor, k: usize, input_shape: &[usize]) -> Tensor {
    let [_, h, w] = [input_shape[1], input_shape[2], input_shape[3]];
    let [od, oh, ow] = gy.spatial();
    let c = gy.channels();
    let norm = 1.0 / (k * k * k) as f64;
    let mut gx = Tensor::zeros(input_shape.to_vec());
    let plane_in = input_shape[1] * h * w;
    let data = gx.data_mut();
    for ch in 0..c {
        let gc = gy.channel(ch);
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let g = gc[(z * oh + y) * ow + xx] * norm;
                    for dz in 0..k {
                        for dy in 0..k {
                            let base = ch * plane_in + ((z * k + dz) * h + y * k + dy) * w + xx * k;
                            data[base..base + k].iter_mut().for_each(|v| *v += g);
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Max over k³ windows with the given stride (no padding). Returns the output and,
/// per output value, the flat input index it was taken from.
pub fn max_pool3d(x: &Tensor, k: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    x.ensure_activation()?;
    let s = x.spatial();
    if k == 0 || stride == 0 || s.iter().any(|&d| d < k) {
        return Err(Error::FieldTooSmall(format!("dims {s:?} below max-pool window {k}")));
    }
    let o = s.map(|d| (d - k) / stride + 1);
    let c = x.channels();
    let plane = x.plane();
    let mut out = Vec::with_capacity(c * o.iter().product::<usize>());
    let mut arg = Vec::with_capacity(out.capacity());
    for ch in 0..c {
        for z in 0..o[0] {
            for y in 0..o[1] {
                for xx in 0..o[2] {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for dz in 0..k {
                        for dy in 0..k {
                            for dx in 0..k {
                                let idx = ch * plane + ((z * stride + dz) * s[1] + y * stride + dy) * s[2] + xx * stride + dx;
                                if x.data()[idx] > best {
                                    best = x.data()[idx];
                                    at = idx;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(at);
                }
            }
        }
    }
    Ok((Tensor::new(vec![c, o[0], o[1], o[2]], out)?, arg))
}

pub fn max_pool3d_backward(gy: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Tensor {
    let mut gx = Tensor::zeros(input_shape.to_vec());
    for (g, &i) in gy.data().iter().zip(argmax) {
        gx.data_mut()[i] += g;
    }
    gx
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.ensure_activation()?;
    b.ensure_activation()?;
    if a.spatial() != b.spatial() {
        return Err(Error::ShapeMismatch(format!("concat of {:?} and {:?}", a.shape(), b.shape())));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    let [d, h, w] = a.spatial();
    Tensor::new(vec![a.channels() + b.channels(), d, h, w], data)
}

/// Splits a concatenated gradient back into the parts for `a` (first `ca` channels) and `b`.
pub fn concat_backward(gy: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let p = gy.plane();
    let [d, h, w] = gy.spatial();
    let (ga, gb) = gy.data().split_at(ca * p);
    (
        Tensor::new(vec![ca, d, h, w], ga.to_vec()).expect("split"),
        Tensor::new(vec![gy.channels() - ca, d, h, w], gb.to_vec()).expect("split"),
    )
}

/// Inverted dropout. Returns the output and the multiplicative mask (None when inactive).
pub fn dropout(x: &Tensor, rate: f64, training: bool, rng: &mut impl Rng) -> (Tensor, Option<Vec<f64>>) {
    if !training || rate <= 0.0 {
        return (x.clone(), None);
    }
    let mask = dropout_mask(x.len(), rate, rng);
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    (Tensor::new(x.shape().to_vec(), data).expect("same shape"), Some(mask))
}

/// Entries are 0 with probability `rate`, otherwise `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
}

pub fn dropout_backward(gy: &Tensor, mask: Option<&[f64]>) -> Tensor {
    match mask {
        None => gy.clone(),
        Some(m) => {
            Tensor::new(gy.shape().to_vec(), gy.data().iter().zip(m).map(|(g, m)| g * m).collect()).expect("same shape")
        }
    }
}

/// Per-channel standardization `(x - mean) / std`.
pub fn normalize(x: &Tensor, mean: &[f64], std: &[f64]) -> Result<Tensor> {
    x.ensure_activation()?;
    if mean.len() != x.channels() || std.len() != x.channels() {
        return Err(Error::ShapeMismatch(format!("{} channels, {} statistics", x.channels(), mean.len())));
    }
    let p = x.plane();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i / p;
            (v - mean[c]) / std[c]
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn normalize_backward(gy: &Tensor, std: &[f64]) -> Tensor {
    let p = gy.plane();
    let data = gy.data().iter().enumerate().map(|(i, &g)| g / std[i / p]).collect();
    Tensor::new(gy.shape().to_vec(), data).expect("same shape")
}
