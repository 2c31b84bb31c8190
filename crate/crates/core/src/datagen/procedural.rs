//! Moving shapes and damped waves on a marker grid.
//!
//! Each object travels along a straight random path. Coordinates are normalized
//! to the unit cube; wave distances are measured in cells of a 128³ reference
//! grid so the patterns look alike at every output resolution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{rng_for, Provenance, Sequence};
use crate::error::Result;
use crate::field::{FieldKind, VolumeField};

pub const REFERENCE_RESOLUTION: f64 = 128.0;
const GEOMETRY_STREAM: u64 = 0;
const NOISE_STREAM_BASE: u64 = 1000;
const MIN_PATH_LENGTH: f64 = 0.25;
const ENDPOINT_RANGE: (f64, f64) = (0.2, 0.8);
const SIZE_FRACTION: (f64, f64) = (0.15, 0.4);
const SIZE_LIMITS: (f64, f64) = (0.06, 0.2);
const WAVINESS: (f64, f64) = (0.1, 0.3);
const SMOOTH_BORDER: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProceduralParams {
    /// Fraction of the path covered by the last state (the sequence Δ).
    pub travel: f64,
    /// Inclusive object count range.
    pub objects: [usize; 2],
    /// Smoothed shape borders.
    pub smooth: bool,
    /// Gaussian noise overlay on every state.
    pub noise: bool,
    pub noise_std: f64,
}

impl Default for ProceduralParams {
    fn default() -> Self {
        Self { travel: 1.0, objects: [1, 4], smooth: false, noise: false, noise_std: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Box,
    Sphere,
}

/// One object moving from `start` to `end` (normalized xyz coordinates).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathObject {
    pub start: [f64; 3],
    pub end: [f64; 3],
    /// Normalized radius (sphere) or half-width (box).
    pub radius: f64,
    pub shape: ShapeKind,
    pub waviness: f64,
}

impl PathObject {
    pub fn center(&self, s: f64) -> [f64; 3] {
        [0, 1, 2].map(|a| self.start[a] + (self.end[a] - self.start[a]) * s)
    }

    pub fn path_length(&self) -> f64 {
        dist(&self.start, &self.end)
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

pub fn sample_objects(rng: &mut ChaCha8Rng, params: &ProceduralParams) -> Vec<PathObject> {
    let count = rng.gen_range(params.objects[0]..=params.objects[1].max(params.objects[0]));
    (0..count)
        .map(|_| {
            let mut point = || [0; 3].map(|_| rng.gen_range(ENDPOINT_RANGE.0..ENDPOINT_RANGE.1));
            let (start, end) = loop {
                let (a, b) = (point(), point());
                if dist(&a, &b) >= MIN_PATH_LENGTH {
                    break (a, b);
                }
            };
            let length = dist(&start, &end);
            let radius = (rng.gen_range(SIZE_FRACTION.0..SIZE_FRACTION.1) * length).clamp(SIZE_LIMITS.0, SIZE_LIMITS.1);
            let shape = if rng.gen_bool(0.5) { ShapeKind::Box } else { ShapeKind::Sphere };
            let waviness = rng.gen_range(WAVINESS.0..WAVINESS.1);
            PathObject { start, end, radius, shape, waviness }
        })
        .collect()
}

/// Damped cosine `cos(w·d)·exp(-3.7·d/r)`; `d` and `r` in reference cells.
pub fn wave_kernel(d: f64, w: f64, r: f64) -> f64 {
    (w * d).cos() * (-3.7 * d / r).exp()
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn shape_value(obj: &PathObject, c: &[f64; 3], p: &[f64; 3], smooth: bool) -> f64 {
    let d = match obj.shape {
        ShapeKind::Sphere => dist(p, c),
        ShapeKind::Box => (0..3).map(|k| (p[k] - c[k]).abs()).fold(0.0, f64::max),
    };
    if smooth {
        let b = SMOOTH_BORDER * obj.radius;
        1.0 - smoothstep(obj.radius - b, obj.radius + b, d)
    } else if d <= obj.radius {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deposit {
    Shapes { smooth: bool },
    Waves,
}

/// Renders all objects at path fraction `s` onto a fresh marker grid.
pub fn render(dims: [usize; 3], objects: &[PathObject], s: f64, deposit: Deposit) -> VolumeField {
    let [d, h, w] = dims;
    let centers: Vec<[f64; 3]> = objects.iter().map(|o| o.center(s)).collect();
    let mut data = Vec::with_capacity(d * h * w);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let p = [(x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64, (z as f64 + 0.5) / d as f64];
                let v: f64 = objects
                    .iter()
                    .zip(&centers)
                    .map(|(o, c)| match deposit {
                        Deposit::Shapes { smooth } => shape_value(o, c, &p, smooth),
                        Deposit::Waves => wave_kernel(
                            dist(&p, c) * REFERENCE_RESOLUTION,
                            o.waviness,
                            o.radius * REFERENCE_RESOLUTION,
                        ),
                    })
                    .sum();
                data.push(v as f32);
            }
        }
    }
    VolumeField::from_parts_unchecked(FieldKind::Marker, 1, dims, data)
}

fn generate(seed: u64, n: usize, dims: [usize; 3], params: &ProceduralParams, deposit: Deposit, method: &str) -> Result<Sequence> {
    let mut rng = rng_for(seed, GEOMETRY_STREAM);
    let objects = sample_objects(&mut rng, params);
    let states = (0..=n)
        .map(|k| {
            let s = if n == 0 { 0.0 } else { params.travel * k as f64 / n as f64 };
            let mut field = render(dims, &objects, s, deposit);
            if params.noise {
                let mut noise_rng = rng_for(seed, NOISE_STREAM_BASE + k as u64);
                let noise: Vec<f32> = (0..field.len())
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(&mut noise_rng);
                        (g * params.noise_std) as f32
                    })
                    .collect();
                field.add_assign(&VolumeField::from_parts_unchecked(FieldKind::Marker, 1, dims, noise))?;
            }
            Ok(field)
        })
        .collect::<Result<Vec<_>>>()?;
    let provenance = Provenance { method: method.into(), varied: "position".into(), delta: params.travel, seed };
    Sequence::new(states, provenance)
}

pub fn gen_shapes_sequence(seed: u64, n: usize, out_dims: [usize; 3], params: &ProceduralParams) -> Result<Sequence> {
    generate(seed, n, out_dims, params, Deposit::Shapes { smooth: params.smooth }, "shapes")
}

pub fn gen_waves_sequence(seed: u64, n: usize, out_dims: [usize; 3], params: &ProceduralParams) -> Result<Sequence> {
    generate(seed, n, out_dims, params, Deposit::Waves, "waves")
}
