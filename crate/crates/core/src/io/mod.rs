//! File formats: VSIM volumes, dataset manifests, checkpoints and configuration.

pub mod checkpoint;
pub mod config;
pub mod manifest;
pub mod volume;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::load_config;
pub use manifest::{open_manifest, DatasetManifest, ManifestEntry};
pub use volume::{read_volume, read_volume_stack, write_volume, write_volume_stack};
