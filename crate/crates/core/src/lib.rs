//! Extrinsic calibration of kaleidoscopic imaging systems.
//!
//! A camera looking into three planar mirrors sees a scene point in many
//! chambers at once: directly, once reflected, twice reflected, and so on.
//! This crate recovers the three mirror normals and distances linearly from
//! the 2D projections of one or more scene points of unknown position, then
//! optionally refines them by minimizing the reprojection error over all
//! chambers.
//!
//! Also included: the two reference-object-based comparison methods, a
//! synthetic scene generator, and a Monte-Carlo sweep harness.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod linear;
pub mod lm;
pub mod refine;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    compose, normalize, project, reflect, reflection_transform, CameraIntrinsics, MirrorPlane,
    NormalizedPoint, Pixel, Point3, ReflectionSequence, ReflectionTransform,
};
pub use linear::{calibrate_linear, LinearCalibration};
pub use refine::{bundle_adjust, RefinementReport};
pub use synth::{default_rig, generate, GroundTruth, KaleidoscopicObservation, SceneConfig};
