//! Spatio-temporal cutouts from a volume repository.

use std::path::Path;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng_for, Provenance, Sequence};
use crate::error::{Error, Result};
use crate::field::{avg_pool, trilinear_resample, FieldKind, VolumeField};
use crate::io::volume::VsimReader;

enum Source {
    Memory(Vec<f32>),
    File(Mutex<VsimReader>),
}

/// A (t, c, z, y, x) data block, in memory or backed by a VSIM file.
pub struct VolumeRepository {
    shape: [usize; 5],
    kind: FieldKind,
    source: Source,
}

impl std::fmt::Debug for VolumeRepository {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VolumeRepository").field("shape", &self.shape).field("kind", &self.kind).finish()
    }
}

impl VolumeRepository {
    pub fn from_frames(frames: Vec<VolumeField>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyStream)?;
        for f in &frames {
            first.ensure_same_shape(f)?;
        }
        let [d, h, w] = first.dims();
        let shape = [frames.len(), first.channels(), d, h, w];
        let kind = first.kind();
        let data = frames.into_iter().flat_map(VolumeField::into_data).collect();
        Ok(Self { shape, kind, source: Source::Memory(data) })
    }

    /// Opens a VSIM file lazily; only requested blocks are read.
    pub fn open(path: &Path, kind: FieldKind) -> Result<Self> {
        let reader = VsimReader::open(path)?;
        let shape = reader.header().shape;
        Ok(Self { shape, kind, source: Source::File(Mutex::new(reader)) })
    }

    /// Extents (t, c, z, y, x).
    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn frames(&self) -> usize {
        self.shape[0]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[2], self.shape[3], self.shape[4]]
    }

    /// All channels of frame `t` inside `origin..origin+extent` (z, y, x).
    pub fn read_block(&self, t: usize, origin: [usize; 3], extent: [usize; 3]) -> Result<VolumeField> {
        let [nt, c, d, h, w] = self.shape;
        if t >= nt {
            return Err(Error::OutOfBounds { axis: "t", index: t as i64, bound: nt });
        }
        for (k, axis) in ["z", "y", "x"].into_iter().enumerate() {
            let end = origin[k] + extent[k];
            if end > [d, h, w][k] {
                return Err(Error::OutOfBounds { axis, index: end as i64 - 1, bound: [d, h, w][k] });
            }
        }
        let data = match &self.source {
            Source::File(reader) => reader.lock().expect("repository reader poisoned").read_block(t, origin, extent)?,
            Source::Memory(data) => {
                let mut out = Vec::with_capacity(c * extent.iter().product::<usize>());
                for ch in 0..c {
                    for z in origin[0]..origin[0] + extent[0] {
                        for y in origin[1]..origin[1] + extent[1] {
                            let start = (((t * c + ch) * d + z) * h + y) * w + origin[2];
                            out.extend_from_slice(&data[start..start + extent[2]]);
                        }
                    }
                }
                out
            }
        };
        VolumeField::new(self.kind, c, extent, data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoutParams {
    /// Minimum corner of the first cutout (t, z, y, x).
    pub base_pos: [usize; 4],
    pub delta_t: i64,
    /// Spatial step per state (z, y, x).
    pub delta_xyz: [i64; 3],
    /// Maximum per-axis integer jitter added to states 1..=n.
    pub jitter: usize,
    pub scale: f64,
    pub n: usize,
    pub out_dims: [usize; 3],
    pub seed: u64,
}

/// Source extent covered by one cutout at scale `s`.
pub fn source_extent(out_dims: [usize; 3], scale: f64) -> [usize; 3] {
    out_dims.map(|o| ((o as f64 * scale).round() as usize).max(1))
}

pub fn extract_cutout_sequence(repo: &VolumeRepository, p: &CutoutParams) -> Result<Sequence> {
    if !(0.25..=4.0).contains(&p.scale) {
        return Err(Error::InvalidArgument(format!("cutout scale {} outside [0.25, 4]", p.scale)));
    }
    let extent = source_extent(p.out_dims, p.scale);
    let mut rng = rng_for(p.seed, 0);
    let mut states = Vec::with_capacity(p.n + 1);
    for k in 0..=p.n {
        let t = p.base_pos[0] as i64 + k as i64 * p.delta_t;
        if t < 0 || t >= repo.frames() as i64 {
            return Err(Error::OutOfBounds { axis: "t", index: t, bound: repo.frames() });
        }
        let mut origin = [0usize; 3];
        for (a, axis) in ["z", "y", "x"].into_iter().enumerate() {
            let j = if k > 0 && p.jitter > 0 { rng.gen_range(-(p.jitter as i64)..=p.jitter as i64) } else { 0 };
            let o = p.base_pos[a + 1] as i64 + k as i64 * p.delta_xyz[a] + j;
            let bound = repo.spatial()[a];
            if o < 0 {
                return Err(Error::OutOfBounds { axis, index: o, bound });
            }
            if o + extent[a] as i64 > bound as i64 {
                return Err(Error::OutOfBounds { axis, index: o + extent[a] as i64 - 1, bound });
            }
            origin[a] = o as usize;
        }
        let block = repo.read_block(t as usize, origin, extent)?;
        let state = if extent == p.out_dims {
            block
        } else if p.scale > 1.0 && p.scale.fract() == 0.0 {
            avg_pool(&block, p.scale as usize)?
        } else {
            trilinear_resample(&block, p.out_dims)?
        };
        states.push(state);
    }
    let spatial = p.delta_xyz.iter().map(|&d| (d * d) as f64).sum::<f64>().sqrt();
    let delta = if p.delta_t != 0 { p.delta_t as f64 } else { spatial };
    Sequence::new(states, Provenance { method: "cutout".into(), varied: "offset".into(), delta, seed: p.seed })
}
