//! Whole datasets: one generator, many seeds, one (optionally calibrated) Δ.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibrate::{calibrate_delta, CalibrationResult, DifficultyBand};
use super::cutout::{extract_cutout_sequence, source_extent, CutoutParams, VolumeRepository};
use super::procedural::{gen_shapes_sequence, gen_waves_sequence, ProceduralParams};
use super::sim::{run_simulation_sequence, SimParams, SolverTag, DEFAULT_NOISE, DEFAULT_STEPS, PERTURBABLE};
use super::{derive_seed, rng_for, Sequence};
use crate::error::{Error, Result};
use crate::field::FieldKind;

const CALIBRATION_STREAM: u64 = 1 << 32;
const CHOICE_STREAM: u64 = 77;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub solver: SolverTag,
    /// Perturbed parameter; drawn per sequence when absent.
    pub varied: Option<String>,
    pub steps: usize,
    pub noise: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self { solver: SolverTag::Advdiff, varied: None, steps: DEFAULT_STEPS, noise: DEFAULT_NOISE }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoutSpec {
    /// VSIM (t, c, z, y, x) file, relative to the data root.
    pub repository: PathBuf,
    pub kind: FieldKind,
    pub scale: f64,
    pub jitter: usize,
    /// Spatial step per state (z, y, x); Δ is the temporal step.
    pub delta_xyz: [i64; 3],
}

impl Default for CutoutSpec {
    fn default() -> Self {
        Self { repository: PathBuf::new(), kind: FieldKind::Velocity, scale: 1.0, jitter: 0, delta_xyz: [0; 3] }
    }
}

/// The sequence source. Δ is the travel fraction for moving objects, the
/// perturbation step for simulations and the frame step for cutouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Generator {
    Waves(ProceduralParams),
    Shapes(ProceduralParams),
    Simulation(SimulationSpec),
    Cutout(CutoutSpec),
}

impl Generator {
    pub fn method(&self) -> &'static str {
        match self {
            Generator::Waves(_) => "waves",
            Generator::Shapes(_) => "shapes",
            Generator::Simulation(s) => s.solver.name(),
            Generator::Cutout(_) => "cutout",
        }
    }

    pub fn default_delta(&self) -> f64 {
        match self {
            Generator::Waves(_) | Generator::Shapes(_) => 0.5,
            Generator::Simulation(_) => 0.05,
            Generator::Cutout(_) => 1.0,
        }
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            Generator::Waves(_) | Generator::Shapes(_) => FieldKind::Marker,
            Generator::Simulation(s) if s.solver == SolverTag::Burgers => FieldKind::Velocity,
            Generator::Simulation(_) => FieldKind::Scalar,
            Generator::Cutout(c) => c.kind,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    /// Starting Δ; the generator default when absent.
    pub delta0: Option<f64>,
    pub samples: usize,
    pub max_iterations: usize,
    pub band: DifficultyBand,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self { delta0: None, samples: 5, max_iterations: 10, band: DifficultyBand::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub id: String,
    pub generator: Generator,
    pub count: usize,
    /// Gaps per sequence (states minus one).
    pub n: usize,
    pub resolution: usize,
    pub seed: u64,
    /// Fixed Δ; calibrated when absent.
    pub delta: Option<f64>,
    pub calibration: CalibrationSpec,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            id: "waves".into(),
            generator: Generator::Waves(ProceduralParams::default()),
            count: 40,
            n: 10,
            resolution: 32,
            seed: 0,
            delta: None,
            calibration: CalibrationSpec::default(),
        }
    }
}

/// A generator bound to its inputs (an opened repository for cutouts).
pub struct SequenceSource<'a> {
    spec: &'a DatasetSpec,
    repo: Option<VolumeRepository>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Config(format!("n = {} is too short; need at least 3 gaps", self.n)));
        }
        if self.resolution < 2 {
            return Err(Error::Config(format!("resolution {} must be >= 2", self.resolution)));
        }
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(Error::Config(format!("dataset id `{}` must be a plain name", self.id)));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.resolution; 3]
    }

    /// Opens external inputs; relative repository paths resolve against `root`.
    pub fn source(&self, root: Option<&Path>) -> Result<SequenceSource<'_>> {
        self.validate()?;
        let repo = match &self.generator {
            Generator::Cutout(c) => {
                let path = match root {
                    Some(r) if c.repository.is_relative() => r.join(&c.repository),
                    _ => c.repository.clone(),
                };
                Some(VolumeRepository::open(&path, c.kind)?)
            }
            _ => None,
        };
        Ok(SequenceSource { spec: self, repo })
    }
}

impl SequenceSource<'_> {
    /// Seed of dataset sequence `k`.
    pub fn sequence_seed(&self, k: usize) -> u64 {
        derive_seed(self.spec.seed, k as u64)
    }

    /// Seed of calibration sample `i`, disjoint from the dataset seeds.
    pub fn calibration_seed(&self, i: usize) -> u64 {
        derive_seed(self.spec.seed, CALIBRATION_STREAM + i as u64)
    }

    pub fn sequence(&self, seed: u64, delta: f64) -> Result<Sequence> {
        let spec = self.spec;
        match &spec.generator {
            Generator::Waves(p) => gen_waves_sequence(seed, spec.n, spec.dims(), &ProceduralParams { travel: delta, ..p.clone() }),
            Generator::Shapes(p) => gen_shapes_sequence(seed, spec.n, spec.dims(), &ProceduralParams { travel: delta, ..p.clone() }),
            Generator::Simulation(s) => {
                let varied = match &s.varied {
                    Some(v) => v.clone(),
                    None => {
                        let options: Vec<&str> =
                            PERTURBABLE.iter().copied().filter(|&p| !(p == "od" && s.solver == SolverTag::Burgers)).collect();
                        options.choose(&mut rng_for(seed, CHOICE_STREAM)).expect("non-empty").to_string()
                    }
                };
                let base = SimParams::sample(seed, s.solver, s.noise);
                run_simulation_sequence(&base, &varied, delta, spec.n, s.steps, spec.resolution)
            }
            Generator::Cutout(c) => self.cutout(c, seed, delta),
        }
    }

    fn cutout(&self, c: &CutoutSpec, seed: u64, delta: f64) -> Result<Sequence> {
        use rand::Rng;
        let repo = self.repo.as_ref().expect("opened with the spec");
        let n = self.spec.n;
        let delta_t = delta.round() as i64;
        let extent = source_extent(self.spec.dims(), c.scale);
        let mut rng = rng_for(seed, CHOICE_STREAM);
        let t_span = n as i64 * delta_t;
        let t_lo = (-t_span).max(0);
        let t_hi = repo.frames() as i64 - 1 - t_span.max(0);
        if t_hi < t_lo {
            return Err(Error::OutOfBounds { axis: "t", index: t_span, bound: repo.frames() });
        }
        let mut base_pos = [rng.gen_range(t_lo..=t_hi) as usize, 0, 0, 0];
        for a in 0..3 {
            let span = n as i64 * c.delta_xyz[a];
            let j = c.jitter as i64;
            let lo = (-span).max(0) + j;
            let hi = repo.spatial()[a] as i64 - extent[a] as i64 - span.max(0) - j;
            if hi < lo {
                return Err(Error::OutOfBounds { axis: ["z", "y", "x"][a], index: hi, bound: repo.spatial()[a] });
            }
            base_pos[a + 1] = rng.gen_range(lo..=hi) as usize;
        }
        let p = CutoutParams {
            base_pos,
            delta_t,
            delta_xyz: c.delta_xyz,
            jitter: c.jitter,
            scale: c.scale,
            n,
            out_dims: self.spec.dims(),
            seed,
        };
        extract_cutout_sequence(repo, &p)
    }

    pub fn calibrate(&self) -> Result<CalibrationResult> {
        let cal = &self.spec.calibration;
        let delta0 = cal.delta0.unwrap_or_else(|| self.spec.generator.default_delta());
        calibrate_delta(
            |delta, i| self.sequence(self.calibration_seed(i), delta).map(|s| s.difficulty),
            delta0,
            cal.band,
            cal.samples,
            cal.max_iterations,
        )
    }
}

pub struct GeneratedDataset {
    pub sequences: Vec<Sequence>,
    pub delta: f64,
    pub calibration: Option<CalibrationResult>,
}

pub fn generate_dataset(spec: &DatasetSpec, root: Option<&Path>) -> Result<GeneratedDataset> {
    let source = spec.source(root)?;
    let (delta, calibration) = match spec.delta {
        Some(d) => (d, None),
        None => {
            let c = source.calibrate()?;
            (c.delta, Some(c))
        }
    };
    let sequences = (0..spec.count)
        .into_par_iter()
        .map(|k| source.sequence(source.sequence_seed(k), delta))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratedDataset { sequences, delta, calibration })
}
