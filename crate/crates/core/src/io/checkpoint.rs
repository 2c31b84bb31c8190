//! Model checkpoints.
//!
//! ```text
//! "VSCK" | u32 version | u64 header_len | JSON header | f64 payload
//! ```
//!
//! The header holds the architecture, an optional training configuration and a
//! tensor directory of `{name, shape, offset}` entries; offsets are bytes from
//! the start of the payload. All numbers are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::nn::{ConvLayer, FeatureStats, MetricModel, ModelConfig, Tensor};
use crate::training::TrainConfig;

pub const MAGIC: [u8; 4] = *b"VSCK";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

impl TensorEntry {
    fn bytes(&self) -> Result<u64> {
        self.shape
            .iter()
            .try_fold(8u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or(Error::ShapeOverflow)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    train: Option<TrainConfig>,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: MetricModel,
    pub train: Option<TrainConfig>,
}

fn named_tensors(model: &MetricModel) -> Result<Vec<(String, Vec<usize>, &[f64])>> {
    let stats = model
        .stats
        .as_ref()
        .ok_or_else(|| Error::Config("feature normalization must be initialized before saving".into()))?;
    let mut out = Vec::new();
    for (i, c) in model.convs.iter().enumerate() {
        out.push((format!("conv.{i}.weight"), c.weight.shape().to_vec(), c.weight.data()));
        out.push((format!("conv.{i}.bias"), c.bias.shape().to_vec(), c.bias.data()));
    }
    for (l, w) in model.weights.iter().enumerate() {
        out.push((format!("weights.{l}"), vec![w.len()], w.as_slice()));
    }
    for (l, (m, s)) in stats.mean.iter().zip(&stats.std).enumerate() {
        out.push((format!("stats.mean.{l}"), vec![m.len()], m.as_slice()));
        out.push((format!("stats.std.{l}"), vec![s.len()], s.as_slice()));
    }
    Ok(out)
}

pub fn encode_checkpoint(model: &MetricModel, train: Option<&TrainConfig>) -> Result<Vec<u8>> {
    let tensors = named_tensors(model)?;
    let mut offset = 0u64;
    let entries = tensors
        .iter()
        .map(|(name, shape, data)| {
            let e = TensorEntry { name: name.clone(), shape: shape.clone(), offset };
            offset += 8 * data.len() as u64;
            e
        })
        .collect();
    let header = Header { config: model.config.clone(), train: train.cloned(), tensors: entries };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, data) in &tensors {
        for v in data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn truncated(expected: u64, actual: usize) -> Error {
    Error::TruncatedFile { expected, actual: actual as u64 }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 {
        return Err(truncated(PREAMBLE as u64, bytes.len()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("four bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < PREAMBLE {
        return Err(truncated(PREAMBLE as u64, bytes.len()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes"));
    if version != VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes"));
    let payload_start = (PREAMBLE as u64).checked_add(header_len).ok_or(Error::ShapeOverflow)?;
    if payload_start > bytes.len() as u64 {
        return Err(truncated(payload_start, bytes.len()));
    }
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE..payload_start as usize])
        .map_err(|e| Error::InvalidArgument(format!("checkpoint header: {e}")))?;
    let payload = &bytes[payload_start as usize..];
    let mut end = 0u64;
    for t in &header.tensors {
        let stop = t.offset.checked_add(t.bytes()?).ok_or(Error::ShapeOverflow)?;
        if stop > payload.len() as u64 {
            return Err(truncated(payload_start + stop, bytes.len()));
        }
        end = end.max(stop);
    }
    if (payload.len() as u64) > end {
        return Err(Error::TrailingData(payload.len() as u64 - end));
    }
    let model = assemble(header.config, &header.tensors, payload)?;
    Ok(Checkpoint { model, train: header.train })
}

/// Rebuilds the model, checking every tensor against the architecture.
fn assemble(config: ModelConfig, tensors: &[TensorEntry], payload: &[u8]) -> Result<MetricModel> {
    config.validate()?;
    let mut taken = vec![false; tensors.len()];
    let mut take = |name: String, shape: Vec<usize>| -> Result<Vec<f64>> {
        let k = tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::ArchitectureMismatch(format!("missing tensor `{name}`")))?;
        let t = &tensors[k];
        if t.shape != shape {
            return Err(Error::ArchitectureMismatch(format!("`{name}` has shape {:?}, architecture needs {shape:?}", t.shape)));
        }
        taken[k] = true;
        let start = t.offset as usize;
        let len = shape.iter().product::<usize>();
        Ok(payload[start..start + 8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect())
    };
    let mut convs = Vec::new();
    for (i, s) in config.conv_specs().iter().enumerate() {
        let weight = Tensor::new(s.weight_shape(), take(format!("conv.{i}.weight"), s.weight_shape())?)?;
        let bias = Tensor::new(vec![s.c_out], take(format!("conv.{i}.bias"), vec![s.c_out])?)?;
        convs.push(ConvLayer { weight, bias, stride: s.stride, pad: s.pad });
    }
    let channels = config.feature_channels();
    let mut weights = Vec::new();
    let mut stats = FeatureStats { mean: Vec::new(), std: Vec::new() };
    for (l, &c) in channels.iter().enumerate() {
        weights.push(take(format!("weights.{l}"), vec![c])?);
        stats.mean.push(take(format!("stats.mean.{l}"), vec![c])?);
        stats.std.push(take(format!("stats.std.{l}"), vec![c])?);
    }
    if let Some(k) = taken.iter().position(|&t| !t) {
        return Err(Error::ArchitectureMismatch(format!("unexpected tensor `{}`", tensors[k].name)));
    }
    Ok(MetricModel { config, convs, weights, stats: Some(stats) })
}

pub fn save_checkpoint(path: &Path, model: &MetricModel, train: Option<&TrainConfig>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, train)?).map_err(io_at(path))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path).map_err(io_at(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Precision;

    fn model() -> MetricModel {
        let cfg = ModelConfig { block_channels: vec![4, 6], ..Default::default() };
        let mut m = MetricModel::new(cfg, 5).unwrap();
        let ch = m.config.feature_channels();
        m.stats = Some(FeatureStats {
            mean: ch.iter().map(|&c| (0..c).map(|k| k as f64 * 0.1).collect()).collect(),
            std: ch.iter().map(|&c| (0..c).map(|k| 1.0 + k as f64 / 3.0).collect()).collect(),
        });
        m.weights[1][2] = 0.123456789;
        m
    }

    #[test]
    fn round_trip_is_bitwise_stable() {
        let m = model();
        let cfg = TrainConfig { learning_rate: 3.3e-4, ..Default::default() };
        let bytes = encode_checkpoint(&m, Some(&cfg)).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.train, Some(cfg.clone()));
        assert_eq!(encode_checkpoint(&back.model, back.train.as_ref()).unwrap(), bytes);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let m = model();
        let bytes = encode_checkpoint(&m, None).unwrap();
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 8]), Err(Error::TruncatedFile { .. })));
        assert!(matches!(decode_checkpoint(&bytes[..10]), Err(Error::TruncatedFile { .. })));
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(matches!(decode_checkpoint(&extra), Err(Error::TrailingData(8))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic(_))));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(decode_checkpoint(&v2), Err(Error::VersionUnsupported(2))));
    }

    #[test]
    fn edited_architecture_is_a_mismatch() {
        let m = model();
        let bytes = encode_checkpoint(&m, None).unwrap();
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json = std::str::from_utf8(&bytes[16..16 + header_len]).unwrap();
        for (from, to) in [("[4,6]", "[4,6,8]"), ("\"precision\":\"f32\"", "\"precision\":\"f64\"")] {
            let edited = json.replace(from, to);
            assert_ne!(edited, json);
            let mut out = bytes[..8].to_vec();
            out.extend_from_slice(&(edited.len() as u64).to_le_bytes());
            out.extend_from_slice(edited.as_bytes());
            out.extend_from_slice(&bytes[16 + header_len..]);
            let r = decode_checkpoint(&out);
            if from.contains("precision") {
                assert_eq!(r.unwrap().model.config.precision, Precision::F64);
            } else {
                assert!(matches!(r, Err(Error::ArchitectureMismatch(_))));
            }
        }
        let mut no_stats = m;
        no_stats.stats = None;
        assert!(matches!(encode_checkpoint(&no_stats, None), Err(Error::Config(_))));
    }
}
