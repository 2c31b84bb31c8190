//! Sequence-level data augmentation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::field::{flip, rotate90, Axis, FieldKind, VolumeField};
use crate::nn::prepare_inputs;

/// The transform drawn for one sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Augmentation {
    pub flips: [bool; 3],
    pub rotation_axis: Axis,
    pub quarter_turns: u32,
    /// Channel order for vector data.
    pub permutation: Option<Vec<usize>>,
}

impl Augmentation {
    pub fn sample(rng: &mut impl Rng, kind: FieldKind, channels: usize) -> Self {
        let flips = [rng.gen_bool(0.5), rng.gen_bool(0.5), rng.gen_bool(0.5)];
        let rotation_axis = *Axis::ALL.choose(rng).expect("three axes");
        let quarter_turns = rng.gen_range(0..4);
        let permutation = (kind == FieldKind::Velocity && channels > 1).then(|| {
            let mut p: Vec<usize> = (0..channels).collect();
            p.shuffle(rng);
            p
        });
        Self { flips, rotation_axis, quarter_turns, permutation }
    }

    pub fn apply(&self, f: &VolumeField) -> Result<VolumeField> {
        let mut out = f.clone();
        for (axis, &on) in Axis::ALL.iter().zip(&self.flips) {
            if on {
                out = flip(&out, *axis);
            }
        }
        if self.quarter_turns > 0 {
            out = rotate90(&out, self.rotation_axis, self.quarter_turns);
        }
        if let Some(p) = &self.permutation {
            out = out.permute_channels(p)?;
        }
        Ok(out)
    }
}

/// Joint [-1, 1] normalization, then one random flip/rotation (and channel
/// permutation for vector data) shared by all states, then channel repetition.
pub fn augment_sequence(states: &[VolumeField], channels: usize, rng: &mut impl Rng) -> Result<Vec<VolumeField>> {
    let Some(first) = states.first() else { return Ok(Vec::new()) };
    let aug = Augmentation::sample(rng, first.kind(), first.channels());
    let transformed = states.iter().map(|s| aug.apply(s)).collect::<Result<Vec<_>>>()?;
    prepare_inputs(&transformed, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(kind: FieldKind, c: usize) -> Vec<VolumeField> {
        (0..3).map(|k| VolumeField::from_fn(kind, c, [6, 6, 6], |ch, z, y, x| (ch * 50 + k + z * 3 + y * 2 + x) as f32)).collect()
    }

    #[test]
    fn identical_seeds_identical_output() {
        let s = ramp(FieldKind::Scalar, 1);
        let a = augment_sequence(&s, 3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = augment_sequence(&s, 3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].channels(), 3);
        assert_eq!(a[0].channel(0), a[0].channel(1));
        assert_eq!(a[0].channel(1), a[0].channel(2));
        let r = crate::field::joint_range(&a).unwrap();
        assert_eq!(r, (-1.0, 1.0));
    }

    #[test]
    fn channel_permutation_moves_means() {
        let s = ramp(FieldKind::Velocity, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let aug = loop {
            let a = Augmentation::sample(&mut rng, FieldKind::Velocity, 3);
            if a.permutation.as_deref() != Some(&[0, 1, 2]) {
                break a;
            }
        };
        let out = aug.apply(&s[0]).unwrap();
        let means = |f: &VolumeField| (0..3).map(|c| f.channel(c).iter().map(|&v| v as f64).sum::<f64>()).collect::<Vec<_>>();
        let (before, after) = (means(&s[0]), means(&out));
        for (k, &src) in aug.permutation.as_ref().unwrap().iter().enumerate() {
            assert_eq!(after[k], before[src]);
        }
    }
}
