//! Multi-view 3D object detection toolkit.
//!
//! The crate covers the numeric pipeline of a query-based multi-camera
//! detector with dynamic graph feature aggregation:
//!
//! - [`camgeo`]: pinhole rig geometry, visibility and the overlapping /
//!   non-overlapping region split.
//! - [`featcore`]: feature pyramids, the `GDT3` tensor format, bilinear
//!   sampling with analytic gradients and masked multi-view aggregation.
//! - [`dgfa`]: the decoder (reference points, dynamic graphs, propagation,
//!   self-attention, layer stack) and gradient checking.
//! - [`augment`]: depth-invariant multi-scale augmentation and its variants.
//! - [`matchloss`]: matching cost, Hungarian assignment and set loss.
//! - [`metrics`]: center-distance AP, TP errors, NDS and region-split reports.
//! - [`synth`]: seeded synthetic rigs, analytic feature fields and scenes.
//! - [`io`]: JSON file formats shared by the CLI.

pub mod augment;
pub mod camgeo;
pub mod dgfa;
pub mod error;
pub mod featcore;
pub mod io;
pub mod matchloss;
pub mod metrics;
pub mod synth;

pub use camgeo::{Box3D, CameraExtrinsics, CameraIntrinsics, CameraModel, CameraRig, Region};
pub use error::{Error, Result};
pub use featcore::{FeatureLevel, FeaturePyramid, SampleResult};

/// Deterministic generator used for every seeded operation.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's seeded generator.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
