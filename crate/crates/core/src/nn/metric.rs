//! The learned model exposed as a [`DistanceMetric`].

use rayon::prelude::*;

use super::model::MetricModel;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::field::{normalize_minmax, VolumeField};
use crate::metrics::DistanceMetric;

/// Joint [-1, 1] normalization followed by repetition of scalar data to
/// `channels`. A jointly constant input maps to zero.
pub fn prepare_inputs(fields: &[VolumeField], channels: usize) -> Result<Vec<VolumeField>> {
    let normalized = match normalize_minmax(fields, -1.0, 1.0) {
        Ok(v) => v,
        Err(Error::DegenerateRange(_)) => {
            fields.iter().map(|f| VolumeField::zeros(f.kind(), f.channels(), f.dims())).collect()
        }
        Err(e) => return Err(e),
    };
    normalized.iter().map(|f| expand_channels(f, channels)).collect()
}

fn expand_channels(f: &VolumeField, channels: usize) -> Result<VolumeField> {
    match f.channels() {
        c if c == channels => Ok(f.clone()),
        1 => f.repeat_channels(channels),
        c => Err(Error::ShapeMismatch(format!("cannot map {c} channels onto {channels} model inputs"))),
    }
}

pub struct LearnedMetric {
    pub model: MetricModel,
    id: String,
}

impl LearnedMetric {
    pub fn new(model: MetricModel, id: impl Into<String>) -> Self {
        Self { model, id: id.into() }
    }

    fn tensor(&self, f: &VolumeField) -> Result<Tensor> {
        Ok(Tensor::from_field(&expand_channels(f, self.model.config.input_channels)?))
    }
}

impl DistanceMetric for LearnedMetric {
    fn id(&self) -> String {
        self.id.clone()
    }

    /// Expects prepared inputs (see [`DistanceMetric::prepare`]).
    fn distance(&self, a: &VolumeField, b: &VolumeField) -> Result<f64> {
        a.ensure_same_shape(b)?;
        self.model.distance(&self.tensor(a)?, &self.tensor(b)?)
    }

    fn prepare(&self, states: &[VolumeField]) -> Result<Vec<VolumeField>> {
        prepare_inputs(states, self.model.config.input_channels)
    }

    fn check_dims(&self, dims: [usize; 3]) -> Result<()> {
        self.model.config.feature_shapes(dims).map(|_| ())
    }

    fn pair_distances(&self, states: &[VolumeField], pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let features = states
            .par_iter()
            .map(|s| self.tensor(s).and_then(|t| self.model.raw_features(&t)))
            .collect::<Result<Vec<_>>>()?;
        pairs.par_iter().map(|&(i, j)| self.model.feature_distance(&features[i], &features[j])).collect()
    }
}
