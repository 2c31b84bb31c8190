//! Dense volumetric fields and the grid transforms shared by every module.
//!
//! Samples are stored channel-major, then z, y, x (`dims = [depth, height, width]`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a field's channels represent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Scalar,
    Velocity,
    Marker,
}

/// Spatial axis. `Z` is the depth axis (dims[0]), `X` the fastest-varying one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Index into `dims` (z=0, y=1, x=2).
    pub fn dim_index(self) -> usize {
        match self {
            Axis::Z => 0,
            Axis::Y => 1,
            Axis::X => 2,
        }
    }

    /// The two dims spanning the plane of rotation about this axis, ordered so a
    /// positive quarter turn carries the first onto the second.
    fn rotation_plane(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 0),
            Axis::Y => (0, 2),
            Axis::Z => (2, 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeField {
    channels: usize,
    dims: [usize; 3],
    kind: FieldKind,
    data: Vec<f32>,
}

/// Mean, population standard deviation and extrema of all samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl VolumeField {
    pub fn new(kind: FieldKind, channels: usize, dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if channels == 0 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "field needs at least one channel and cell per axis (channels {channels}, dims {dims:?})"
            )));
        }
        let expected = channels * dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "data length {} but {channels}x{dims:?} needs {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {pos}")));
        }
        Ok(Self { channels, dims, kind, data })
    }

    pub fn zeros(kind: FieldKind, channels: usize, dims: [usize; 3]) -> Self {
        Self {
            channels,
            dims,
            kind,
            data: vec![0.0; channels * dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn constant(kind: FieldKind, channels: usize, dims: [usize; 3], value: f32) -> Self {
        let mut f = Self::zeros(kind, channels, dims);
        f.data.fill(value);
        f
    }

    /// Builds a field from a sample function `(c, z, y, x) -> value`.
    pub fn from_fn(
        kind: FieldKind,
        channels: usize,
        dims: [usize; 3],
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * dims[0] * dims[1] * dims[2]);
        for c in 0..channels {
            for z in 0..dims[0] {
                for y in 0..dims[1] {
                    for x in 0..dims[2] {
                        data.push(f(c, z, y, x));
                    }
                }
            }
        }
        Self { channels, dims, kind, data }
    }

    pub(crate) fn from_parts_unchecked(kind: FieldKind, channels: usize, dims: [usize; 3], data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), channels * dims[0] * dims[1] * dims[2]);
        Self { channels, dims, kind, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: FieldKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_cubic(&self) -> bool {
        self.dims[0] == self.dims[1] && self.dims[1] == self.dims[2]
    }

    #[inline]
    pub fn index(&self, c: usize, z: usize, y: usize, x: usize) -> usize {
        ((c * self.dims[0] + z) * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn get(&self, c: usize, z: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, z, y, x)]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.cells();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &VolumeField) -> bool {
        self.channels == other.channels && self.dims == other.dims
    }

    pub(crate) fn ensure_same_shape(&self, other: &VolumeField) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{:?} vs {}x{:?}",
                self.channels, self.dims, other.channels, other.dims
            )))
        }
    }

    pub fn stats(&self) -> FieldStats {
        field_stats(self)
    }

    /// Repeats a single-channel field `count` times along the channel axis.
    pub fn repeat_channels(&self, count: usize) -> Result<Self> {
        if self.channels == count {
            return Ok(self.clone());
        }
        if self.channels != 1 {
            return Err(Error::ShapeMismatch(format!(
                "cannot repeat {} channels into {count}",
                self.channels
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() * count);
        for _ in 0..count {
            data.extend_from_slice(&self.data);
        }
        Ok(Self { channels: count, dims: self.dims, kind: self.kind, data })
    }

    /// Reorders channels: output channel `i` is input channel `order[i]`.
    pub fn permute_channels(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.channels];
        if order.len() != self.channels || order.iter().any(|&c| c >= self.channels || std::mem::replace(&mut seen[c], true)) {
            return Err(Error::InvalidArgument(format!(
                "{order:?} is not a permutation of {} channels",
                self.channels
            )));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &c in order {
            data.extend_from_slice(self.channel(c));
        }
        Ok(Self { channels: self.channels, dims: self.dims, kind: self.kind, data })
    }

    /// Adds `other` sample-wise.
    pub fn add_assign(&mut self, other: &VolumeField) -> Result<()> {
        self.ensure_same_shape(other)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn map_indices(&self, dims: [usize; 3], mut src: impl FnMut(usize, usize, usize) -> (usize, usize, usize)) -> Self {
        let mut data = Vec::with_capacity(self.channels * dims[0] * dims[1] * dims[2]);
        for c in 0..self.channels {
            for z in 0..dims[0] {
                for y in 0..dims[1] {
                    for x in 0..dims[2] {
                        let (sz, sy, sx) = src(z, y, x);
                        data.push(self.get(c, sz, sy, sx));
                    }
                }
            }
        }
        Self { channels: self.channels, dims, kind: self.kind, data }
    }
}

/// Joint extrema over every sample of every field.
pub fn joint_range(fields: &[VolumeField]) -> Option<(f64, f64)> {
    let mut it = fields.iter().flat_map(|f| f.data.iter().copied());
    let first = it.next()? as f64;
    Some(it.fold((first, first), |(lo, hi), v| (lo.min(v as f64), hi.max(v as f64))))
}

/// Maps the joint `[min, max]` of all fields affinely onto `[lo, hi]`.
pub fn normalize_minmax(fields: &[VolumeField], lo: f64, hi: f64) -> Result<Vec<VolumeField>> {
    let (min, max) = joint_range(fields).ok_or(Error::EmptyStream)?;
    if min == max {
        return Err(Error::DegenerateRange(min));
    }
    let scale = (hi - lo) / (max - min);
    Ok(fields
        .iter()
        .map(|f| {
            let data = f
                .data
                .iter()
                .map(|&v| (lo + (v as f64 - min) * scale) as f32)
                .collect();
            VolumeField { channels: f.channels, dims: f.dims, kind: f.kind, data }
        })
        .collect())
}

/// Align-corners source coordinate of output index `i` when resizing `src` cells to `dst` cells.
#[inline]
fn align_corners(i: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 || src == 1 {
        0.0
    } else {
        i as f64 * (src - 1) as f64 / (dst - 1) as f64
    }
}

/// Linear resize of contiguous lines. `lines` lines of `stride`-spaced samples.
fn resample_axis(input: &[f64], outer: usize, src: usize, inner: usize, dst: usize) -> Vec<f64> {
    let mut out = vec![0.0; outer * dst * inner];
    let taps: Vec<(usize, usize, f64)> = (0..dst)
        .map(|i| {
            let s = align_corners(i, src, dst);
            let i0 = (s.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect();
    for o in 0..outer {
        let in_base = o * src * inner;
        let out_base = o * dst * inner;
        for (i, &(i0, i1, t)) in taps.iter().enumerate() {
            let a = &input[in_base + i0 * inner..in_base + (i0 + 1) * inner];
            let b = &input[in_base + i1 * inner..in_base + (i1 + 1) * inner];
            let dst_line = &mut out[out_base + i * inner..out_base + (i + 1) * inner];
            if t == 0.0 {
                dst_line.copy_from_slice(a);
            } else {
                for ((d, &va), &vb) in dst_line.iter_mut().zip(a).zip(b) {
                    *d = va * (1.0 - t) + vb * t;
                }
            }
        }
    }
    out
}

/// Trilinear (align-corners) resampling to `target` dims, applied per channel.
pub fn trilinear_resample(f: &VolumeField, target: [usize; 3]) -> Result<VolumeField> {
    if target.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!("target dims {target:?} must be >= 1")));
    }
    if target == f.dims {
        return Ok(f.clone());
    }
    let [d, h, w] = f.dims;
    let [td, th, tw] = target;
    let mut data = Vec::with_capacity(f.channels * td * th * tw);
    for c in 0..f.channels {
        let src: Vec<f64> = f.channel(c).iter().map(|&v| v as f64).collect();
        let sx = resample_axis(&src, d * h, w, 1, tw);
        let sy = resample_axis(&sx, d, h, tw, th);
        let sz = resample_axis(&sy, 1, d, th * tw, td);
        data.extend(sz.into_iter().map(|v| v as f32));
    }
    Ok(VolumeField { channels: f.channels, dims: target, kind: f.kind, data })
}

/// Rotation by `quarter_turns` × 90° about `axis`. Pure index permutation.
pub fn rotate90(f: &VolumeField, axis: Axis, quarter_turns: u32) -> VolumeField {
    let turns = quarter_turns % 4;
    let mut out = f.clone();
    for _ in 0..turns {
        out = rotate_quarter(&out, axis);
    }
    out
}

fn rotate_quarter(f: &VolumeField, axis: Axis) -> VolumeField {
    let (a, b) = axis.rotation_plane();
    let mut dims = f.dims;
    dims.swap(a, b);
    let nb_src = f.dims[b];
    f.map_indices(dims, |z, y, x| {
        let out = [z, y, x];
        let mut src = out;
        // inverse map of a positive quarter turn: src_a = out_b, src_b = N_b - 1 - out_a
        src[a] = out[b];
        src[b] = nb_src - 1 - out[a];
        (src[0], src[1], src[2])
    })
}

/// Exact sine/cosine for multiples of 90°, libm otherwise.
fn sin_cos_degrees(degrees: f64) -> (f64, f64) {
    let r = degrees.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        r.to_radians().sin_cos()
    }
}

/// Rotation about the volume center by an arbitrary angle using inverse mapping
/// and trilinear sampling. Samples whose source lies outside the frame take `fill`.
pub fn rotate_arbitrary(f: &VolumeField, axis: Axis, degrees: f64, fill: f32) -> Result<VolumeField> {
    if !f.is_cubic() {
        return Err(Error::NonCubicField(f.dims));
    }
    let (a, b) = axis.rotation_plane();
    let n = f.dims[0];
    let center = (n as f64 - 1.0) / 2.0;
    let (sin, cos) = sin_cos_degrees(degrees);
    let max = (n - 1) as f64;
    const EDGE_TOL: f64 = 1e-9;

    let mut data = Vec::with_capacity(f.data.len());
    for c in 0..f.channels {
        let chan = f.channel(c);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let p = [z as f64, y as f64, x as f64];
                    let (pa, pb) = (p[a] - center, p[b] - center);
                    let mut s = p;
                    s[a] = center + cos * pa + sin * pb;
                    s[b] = center - sin * pa + cos * pb;
                    if s.iter().any(|&v| v < -EDGE_TOL || v > max + EDGE_TOL) {
                        data.push(fill);
                        continue;
                    }
                    let s = s.map(|v| v.clamp(0.0, max));
                    data.push(sample_trilinear_clamped(chan, f.dims, s) as f32);
                }
            }
        }
    }
    Ok(VolumeField { channels: f.channels, dims: f.dims, kind: f.kind, data })
}

/// Trilinear sample of one channel at in-bounds coordinates `[z, y, x]`.
pub(crate) fn sample_trilinear_clamped(chan: &[f32], dims: [usize; 3], s: [f64; 3]) -> f64 {
    let mut i0 = [0usize; 3];
    let mut i1 = [0usize; 3];
    let mut t = [0f64; 3];
    for k in 0..3 {
        let fl = s[k].floor();
        i0[k] = (fl as usize).min(dims[k] - 1);
        t[k] = s[k] - i0[k] as f64;
        i1[k] = if t[k] > 0.0 { (i0[k] + 1).min(dims[k] - 1) } else { i0[k] };
    }
    let at = |z: usize, y: usize, x: usize| chan[(z * dims[1] + y) * dims[2] + x] as f64;
    let lerp = |u: f64, v: f64, w: f64| if w == 0.0 { u } else { u * (1.0 - w) + v * w };
    let c00 = lerp(at(i0[0], i0[1], i0[2]), at(i0[0], i0[1], i1[2]), t[2]);
    let c01 = lerp(at(i0[0], i1[1], i0[2]), at(i0[0], i1[1], i1[2]), t[2]);
    let c10 = lerp(at(i1[0], i0[1], i0[2]), at(i1[0], i0[1], i1[2]), t[2]);
    let c11 = lerp(at(i1[0], i1[1], i0[2]), at(i1[0], i1[1], i1[2]), t[2]);
    let c0 = lerp(c00, c01, t[1]);
    let c1 = lerp(c10, c11, t[1]);
    lerp(c0, c1, t[0])
}

pub fn flip(f: &VolumeField, axis: Axis) -> VolumeField {
    let k = axis.dim_index();
    let n = f.dims[k];
    f.map_indices(f.dims, |z, y, x| {
        let mut s = [z, y, x];
        s[k] = n - 1 - s[k];
        (s[0], s[1], s[2])
    })
}

/// Mean over non-overlapping k×k×k blocks.
pub fn avg_pool(f: &VolumeField, k: usize) -> Result<VolumeField> {
    if k == 0 || f.dims.iter().any(|&d| d % k != 0) {
        return Err(Error::IndivisibleDims { dims: f.dims.to_vec(), factor: k });
    }
    if k == 1 {
        return Ok(f.clone());
    }
    let dims = f.dims.map(|d| d / k);
    let norm = 1.0 / (k * k * k) as f64;
    let mut data = Vec::with_capacity(f.channels * dims[0] * dims[1] * dims[2]);
    for c in 0..f.channels {
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    let mut acc = 0.0f64;
                    for dz in 0..k {
                        for dy in 0..k {
                            let base = f.index(c, z * k + dz, y * k + dy, x * k);
                            acc += f.data[base..base + k].iter().map(|&v| v as f64).sum::<f64>();
                        }
                    }
                    data.push((acc * norm) as f32);
                }
            }
        }
    }
    Ok(VolumeField { channels: f.channels, dims, kind: f.kind, data })
}

/// Periodic shift: the sample at `p` moves to `p + offsets` (offsets in z, y, x order).
pub fn circular_shift(f: &VolumeField, offsets: [i64; 3]) -> VolumeField {
    let d = f.dims;
    let wrap = |i: usize, o: i64, n: usize| (i as i64 - o).rem_euclid(n as i64) as usize;
    f.map_indices(d, |z, y, x| (wrap(z, offsets[0], d[0]), wrap(y, offsets[1], d[1]), wrap(x, offsets[2], d[2])))
}

pub fn field_stats(f: &VolumeField) -> FieldStats {
    let n = f.data.len() as f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in &f.data {
        let v = v as f64;
        sum += v;
        min = min.min(v);
        max = max.max(v);
    }
    let mean = sum / n;
    let var = f.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    FieldStats { mean, std: var.sqrt(), min, max }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(channels: usize, dims: [usize; 3], seed: u64) -> VolumeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VolumeField::from_fn(FieldKind::Scalar, channels, dims, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    fn sorted(f: &VolumeField) -> Vec<f32> {
        let mut v = f.data().to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn new_rejects_bad_lengths_and_nan() {
        assert!(matches!(
            VolumeField::new(FieldKind::Scalar, 1, [2, 2, 2], vec![0.0; 7]),
            Err(Error::ShapeMismatch(_))
        ));
        let mut d = vec![0.0; 8];
        d[3] = f32::NAN;
        assert!(VolumeField::new(FieldKind::Scalar, 1, [2, 2, 2], d).is_err());
    }

    #[test]
    fn normalize_constant_is_degenerate() {
        let f = VolumeField::constant(FieldKind::Scalar, 1, [4, 4, 4], 0.5);
        assert!(matches!(normalize_minmax(&[f.clone(), f], -1.0, 1.0), Err(Error::DegenerateRange(_))));
    }

    #[test]
    fn normalize_joint_midpoint() {
        let a = VolumeField::constant(FieldKind::Scalar, 1, [2, 2, 2], 0.0);
        let mut b = VolumeField::constant(FieldKind::Scalar, 1, [2, 2, 2], 1.0);
        b.data[0] = 2.0;
        let out = normalize_minmax(&[a, b], -1.0, 1.0).unwrap();
        assert_eq!(out[0].data()[0], -1.0);
        assert_eq!(out[1].data()[0], 1.0);
        assert_eq!(out[1].data()[1], 0.0);
    }

    #[test]
    fn normalize_random_hits_target_extrema() {
        let f = random_field(1, [8, 8, 8], 3);
        let out = normalize_minmax(&[f], 0.0, 1.0).unwrap();
        let s = out[0].stats();
        assert_eq!(s.min, 0.0);
        assert_eq!(s.max, 1.0);
    }

    #[test]
    fn normalize_is_idempotent_on_target_range() {
        let f = random_field(2, [5, 4, 3], 4);
        let once = normalize_minmax(&[f], -1.0, 1.0).unwrap();
        let twice = normalize_minmax(&once, -1.0, 1.0).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn resample_identity_and_constant() {
        let f = random_field(3, [4, 5, 6], 1);
        assert_eq!(trilinear_resample(&f, [4, 5, 6]).unwrap(), f);
        let c = VolumeField::constant(FieldKind::Scalar, 1, [4, 4, 4], 0.25);
        let r = trilinear_resample(&c, [7, 3, 9]).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn resample_ramp_8_to_4() {
        // f(x) = x on 8 cells; align-corners samples at x = i * 7/3
        let f = VolumeField::from_fn(FieldKind::Scalar, 1, [2, 2, 8], |_, _, _, x| x as f32);
        let r = trilinear_resample(&f, [2, 2, 4]).unwrap();
        for x in 0..4 {
            let expected = x as f64 * 7.0 / 3.0;
            assert!((r.get(0, 1, 1, x) as f64 - expected).abs() < 1e-5);
        }
    }

    #[test]
    fn resample_reproduces_triaffine() {
        let g = |z: f64, y: f64, x: f64| 0.5 + 0.2 * z - 0.3 * y + 0.1 * x + 0.05 * x * y - 0.02 * x * y * z + 0.01 * z * y;
        let src = [5usize, 6, 7];
        let f = VolumeField::from_fn(FieldKind::Scalar, 1, src, |_, z, y, x| {
            g(z as f64 / 4.0, y as f64 / 5.0, x as f64 / 6.0) as f32
        });
        let dst = [9usize, 4, 11];
        let r = trilinear_resample(&f, dst).unwrap();
        for z in 0..dst[0] {
            for y in 0..dst[1] {
                for x in 0..dst[2] {
                    let e = g(z as f64 / 8.0, y as f64 / 3.0, x as f64 / 10.0);
                    assert!((r.get(0, z, y, x) as f64 - e).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn rotate90_identities() {
        let f = random_field(2, [4, 5, 6], 9);
        for axis in Axis::ALL {
            assert_eq!(rotate90(&f, axis, 0), f);
            let mut g = f.clone();
            for _ in 0..4 {
                g = rotate90(&g, axis, 1);
            }
            assert_eq!(g, f);
            let r = rotate90(&f, axis, 1);
            assert_eq!(sorted(&r), sorted(&f));
            let s0: f64 = f.data().iter().map(|&v| v as f64).sum();
            let s1: f64 = r.data().iter().map(|&v| v as f64).sum();
            assert!((s0 - s1).abs() < 1e-9);
        }
    }

    #[test]
    fn rotate90_about_z_moves_x_onto_y() {
        let n = 4;
        let f = VolumeField::from_fn(FieldKind::Scalar, 1, [n, n, n], |_, _, y, x| (x == n - 1 && y == 0) as u8 as f32);
        let r = rotate90(&f, Axis::Z, 1);
        // corner (+x, -y) lands on (+x, +y): x is carried onto y
        let idx = r.data().iter().position(|&v| v == 1.0).unwrap();
        let (y, x) = ((idx / n) % n, idx % n);
        assert_eq!((y, x), (n - 1, n - 1));
    }

    #[test]
    fn rotate_arbitrary_matches_permutation_path() {
        let f = random_field(1, [6, 6, 6], 11);
        for axis in Axis::ALL {
            assert_eq!(rotate_arbitrary(&f, axis, 0.0, 0.0).unwrap(), f);
            for q in 1..4u32 {
                let g = rotate_arbitrary(&f, axis, 90.0 * q as f64, 0.0).unwrap();
                let p = rotate90(&f, axis, q);
                for (a, b) in g.data().iter().zip(p.data()) {
                    assert!((a - b).abs() <= 1e-5);
                }
            }
        }
        let fill = VolumeField::constant(FieldKind::Scalar, 1, [5, 5, 5], 0.0);
        let r = rotate_arbitrary(&fill, Axis::Y, 37.0, 0.0).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rotate_arbitrary_rejects_non_cubic() {
        let f = random_field(1, [4, 4, 5], 1);
        assert!(matches!(rotate_arbitrary(&f, Axis::Z, 10.0, 0.0), Err(Error::NonCubicField(_))));
    }

    #[test]
    fn flip_shift_pool() {
        let f = random_field(2, [4, 6, 8], 5);
        for axis in Axis::ALL {
            assert_eq!(flip(&flip(&f, axis), axis), f);
            assert_eq!(sorted(&flip(&f, axis)), sorted(&f));
        }
        assert_eq!(circular_shift(&f, [4, 6, 8]), f);
        assert_eq!(circular_shift(&f, [0, 0, 0]), f);
        assert_eq!(sorted(&circular_shift(&f, [1, -2, 3])), sorted(&f));

        let c = VolumeField::constant(FieldKind::Scalar, 1, [4, 4, 4], 0.3);
        assert!(avg_pool(&c, 2).unwrap().data().iter().all(|&v| v == 0.3));
        let p = avg_pool(&f, 2).unwrap();
        assert_eq!(p.dims(), [2, 3, 4]);
        assert!((p.stats().mean - f.stats().mean).abs() < 1e-6);
        assert!(matches!(avg_pool(&f, 3), Err(Error::IndivisibleDims { .. })));
    }

    #[test]
    fn circular_shift_direction() {
        let f = VolumeField::from_fn(FieldKind::Scalar, 1, [1, 1, 4], |_, _, _, x| x as f32);
        let s = circular_shift(&f, [0, 0, 1]);
        assert_eq!(s.data(), &[3.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn channel_helpers() {
        let f = random_field(1, [2, 2, 2], 2);
        let r = f.repeat_channels(3).unwrap();
        assert_eq!(r.channels(), 3);
        assert_eq!(r.channel(0), r.channel(2));
        let v = VolumeField::from_fn(FieldKind::Velocity, 3, [2, 2, 2], |c, _, _, _| c as f32);
        let p = v.permute_channels(&[2, 0, 1]).unwrap();
        assert!(p.channel(0).iter().all(|&x| x == 2.0));
        assert!(v.permute_channels(&[0, 0, 1]).is_err());
    }
}
