//! Dataset manifests (TOML) and the sequence files they reference.
//!
//! A manifest lives next to its sequence files; entry paths are relative to the
//! manifest's directory. Each sequence is one VSIM stack with axes (t, c, z, y, x).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::volume::{read_volume_stack, write_volume_stack, VsimReader};
use crate::datagen::{CalibrationResult, DatasetSpec, GeneratedDataset, Generator};
use crate::error::{io_at, Error, Result};
use crate::field::{FieldKind, VolumeField};
use crate::similarity::SimilarityFit;
use crate::training::TrainSequence;

pub const MANIFEST_VERSION: u32 = 1;
pub const DATA_ROOT_VAR: &str = "VOLMETRIC_DATA_ROOT";

/// The data root from the environment, if set.
pub fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_VAR).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Relative paths are taken against the data root when one is set.
pub fn resolve(path: &Path) -> PathBuf {
    match data_root() {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

/// TOML integers are signed 64-bit; derived seeds use the full u64 range, so
/// they are stored as hex strings.
mod hex_seed {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#018x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(s.trim_start_matches("0x"), 16).map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    #[serde(with = "hex_seed")]
    pub seed: u64,
    pub varied: String,
    pub delta: f64,
    pub difficulty: f64,
    pub degenerate: bool,
    /// Fitted γ (c = 10^γ).
    pub exponent: f64,
    pub fit_residual: f64,
    pub fit_degenerate: bool,
}

impl ManifestEntry {
    pub fn fit(&self) -> SimilarityFit {
        SimilarityFit { exponent: self.exponent, residual: self.fit_residual, degenerate: self.fit_degenerate }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub id: String,
    pub method: String,
    pub seed: u64,
    pub n: usize,
    pub resolution: [usize; 3],
    pub kind: FieldKind,
    pub channels: usize,
    pub delta: f64,
    pub generator: Generator,
    pub calibration: Option<CalibrationResult>,
    pub sequences: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Writes every sequence and the manifest `<id>.toml` into `dir`; returns the manifest path.
    pub fn write_dataset(dir: &Path, spec: &DatasetSpec, data: &GeneratedDataset) -> Result<PathBuf> {
        let first = data.sequences.first().ok_or(Error::EmptyStream)?;
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(data.sequences.len());
        for (k, s) in data.sequences.iter().enumerate() {
            let file = format!("{}_{k:04}.vsim", spec.id);
            write_volume_stack(&dir.join(&file), &s.states)?;
            entries.push(ManifestEntry {
                file,
                seed: s.provenance.seed,
                varied: s.provenance.varied.clone(),
                delta: s.provenance.delta,
                difficulty: s.difficulty,
                degenerate: s.degenerate,
                exponent: s.fit.exponent,
                fit_residual: s.fit.residual,
                fit_degenerate: s.fit.degenerate,
            });
        }
        let manifest = DatasetManifest {
            version: MANIFEST_VERSION,
            id: spec.id.clone(),
            method: spec.generator.method().into(),
            seed: spec.seed,
            n: spec.n,
            resolution: first.states[0].dims(),
            kind: first.states[0].kind(),
            channels: first.states[0].channels(),
            delta: data.delta,
            generator: spec.generator.clone(),
            calibration: data.calibration.clone(),
            sequences: entries,
        };
        let path = dir.join(format!("{}.toml", spec.id));
        manifest.write(&path)?;
        Ok(path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(io_at(path))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        let m: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::VersionUnsupported(m.version));
        }
        Ok(m)
    }

    fn file_path(base: &Path, entry: &ManifestEntry) -> PathBuf {
        base.join(&entry.file)
    }

    /// Checks that every referenced file exists with the declared shape.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let [d, h, w] = self.resolution;
        let expected = [self.n + 1, self.channels, d, h, w];
        for e in &self.sequences {
            let path = Self::file_path(base, e);
            let shape = VsimReader::open(&path)?.header().shape;
            if shape != expected {
                return Err(Error::ShapeMismatch(format!("{}: shape {shape:?}, manifest declares {expected:?}", path.display())));
            }
        }
        Ok(())
    }

    pub fn load_states(&self, base: &Path) -> Result<Vec<Vec<VolumeField>>> {
        self.validate(base)?;
        self.sequences.iter().map(|e| read_volume_stack(&Self::file_path(base, e), self.kind)).collect()
    }

    pub fn load_training(&self, base: &Path) -> Result<Vec<TrainSequence>> {
        Ok(self
            .load_states(base)?
            .into_iter()
            .zip(&self.sequences)
            .map(|(states, e)| TrainSequence { states, fit: e.fit() })
            .collect())
    }

    pub fn difficulties(&self) -> Vec<f64> {
        self.sequences.iter().map(|e| e.difficulty).collect()
    }
}

/// Reads a manifest given on the command line; returns it with its directory.
pub fn open_manifest(path: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let path = resolve(path);
    let m = DatasetManifest::read(&path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((m, base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_dataset;

    #[test]
    fn write_read_validate() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec { id: "w".into(), count: 2, resolution: 8, delta: Some(0.3), ..Default::default() };
        let data = generate_dataset(&spec, None).unwrap();
        let path = DatasetManifest::write_dataset(dir.path(), &spec, &data).unwrap();
        let m = DatasetManifest::read(&path).unwrap();
        assert_eq!(m.sequences.len(), 2);
        assert_eq!(m.resolution, [8, 8, 8]);
        let states = m.load_states(dir.path()).unwrap();
        assert_eq!(states[1], data.sequences[1].states);
        let train = m.load_training(dir.path()).unwrap();
        assert_eq!(train[0].fit, data.sequences[0].fit);
        assert_eq!(m.to_toml().unwrap(), std::fs::read_to_string(&path).unwrap());

        let mut wrong = m.clone();
        wrong.n = 5;
        assert!(matches!(wrong.validate(dir.path()), Err(Error::ShapeMismatch(_))));
        std::fs::remove_file(dir.path().join("w_0001.vsim")).unwrap();
        assert!(matches!(m.validate(dir.path()), Err(Error::Io(_))));
    }
}
