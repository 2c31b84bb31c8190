//! Similarity sequence synthesis.
//!
//! Every generator is a pure function of its seed and parameters. Sequences are
//! rated by [`proxy_difficulty`] and fitted with the similarity model on creation.

pub mod calibrate;
pub mod cutout;
pub mod dataset;
pub mod procedural;
pub mod sim;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VolumeField;
use crate::similarity::{fit_sequence, proxy_difficulty, SimilarityFit};

pub use calibrate::{calibrate_delta, CalibrationResult, DifficultyBand};
pub use cutout::{extract_cutout_sequence, CutoutParams, VolumeRepository};
pub use dataset::{generate_dataset, CalibrationSpec, CutoutSpec, DatasetSpec, GeneratedDataset, Generator, SequenceSource, SimulationSpec};
pub use procedural::{gen_shapes_sequence, gen_waves_sequence, wave_kernel, ProceduralParams};
pub use sim::{run_simulation_sequence, SimParams, SolverTag};

/// SplitMix64 finalizer; spreads `(seed, stream)` into an independent 64-bit seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Where a sequence came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `advdiff`, `advdiff_densitynoise`, `burgers`, `cutout`, `shapes` or `waves`.
    pub method: String,
    /// The perturbed parameter (`position` for moving-object generators, `offset` for cutouts).
    pub varied: String,
    pub delta: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub states: Vec<VolumeField>,
    pub provenance: Provenance,
    /// Proxy difficulty; 1.0 when the proxy trajectory is constant.
    pub difficulty: f64,
    /// Set when the proxy trajectory was constant (no usable signal).
    pub degenerate: bool,
    pub fit: SimilarityFit,
}

impl Sequence {
    /// Rates and fits `states`.
    pub fn new(states: Vec<VolumeField>, provenance: Provenance) -> Result<Self> {
        let first = states.first().ok_or(Error::EmptyStream)?;
        for s in &states {
            first.ensure_same_shape(s)?;
        }
        let (difficulty, mut degenerate) = if states.len() < 3 {
            (1.0, true)
        } else {
            match proxy_difficulty(&states) {
                Ok(v) => (v, false),
                Err(Error::ConstantInput) => (1.0, true),
                Err(e) => return Err(e),
            }
        };
        let fit = if states.len() >= 4 { fit_sequence(&states)? } else { SimilarityFit::linear_fallback() };
        degenerate |= fit.degenerate && difficulty == 1.0;
        Ok(Self { states, provenance, difficulty, degenerate, fit })
    }

    /// Number of gaps `n` (states minus one).
    pub fn n(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}
