//! Error metrics against ground truth.

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::{CameraIntrinsics, MirrorPlane};
use crate::refine::reprojection_residuals;
use crate::synth::KaleidoscopicObservation;

/// Mean angle (rad) between estimated and true normals.
///
/// The angle is `atan2(|n × t|, n · t)`, which equals `acos(n · t)` for unit
/// vectors but stays accurate for nearly parallel ones, where `acos` of a
/// dot product one ulp below 1 already returns about 1.5e-8.
pub fn error_normal(est: &[Vector3<f64>; 3], truth: &[Vector3<f64>; 3]) -> f64 {
    est.iter()
        .zip(truth)
        .map(|(n, t)| n.cross(t).norm().atan2(n.dot(t)))
        .sum::<f64>()
        / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceScale {
    /// Estimate is in the gauge `d₁ = 1`; multiplied by the true `d₁` first.
    Relative,
    /// Estimate is already metric.
    Metric,
}

/// Mean absolute distance error.
pub fn error_distance(est: &[f64; 3], truth: &[f64; 3], scale: DistanceScale) -> f64 {
    let s = match scale {
        DistanceScale::Relative => truth[0],
        DistanceScale::Metric => 1.0,
    };
    est.iter()
        .zip(truth)
        .map(|(d, t)| (d * s - t).abs())
        .sum::<f64>()
        / 3.0
}

/// Mean reprojection distance (px) over every observed chamber of every
/// point, with each point re-triangulated from `mirrors`.
///
/// With the ten default chambers this is the sum of the per-chamber
/// residual magnitudes divided by `10L`.
pub fn error_reprojection(
    mirrors: &[MirrorPlane; 3],
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
) -> Result<f64> {
    let transforms = mirrors.map(|m| m.transform());
    let r = reprojection_residuals(&transforms, obs, a)?;
    let chambers = r.len() / 2;
    if chambers == 0 {
        return Ok(0.0);
    }
    let total: f64 = r
        .as_slice()
        .chunks_exact(2)
        .map(|c| c[0].hypot(c[1]))
        .sum();
    Ok(total / chambers as f64)
}
