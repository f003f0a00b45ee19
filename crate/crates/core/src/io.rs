//! JSON file formats of the command-line tool.

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, MirrorPlane};
use crate::linear::Diagnostics;
use crate::refine::RefinementReport;
use crate::synth::KaleidoscopicObservation;

/// Intrinsics plus, per scene point, a map from chamber key to pixel.
///
/// ```json
/// {"intrinsics": [[1000, 0, 500], [0, 1000, 500], [0, 0, 1]],
///  "points": [{"0": [512.3, 498.1], "1": [233.0, 910.4], "12": [...]}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceFile {
    pub intrinsics: CameraIntrinsics,
    pub points: Vec<KaleidoscopicObservation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    /// Distances relative to `d₁`.
    #[serde(rename = "d1=1")]
    Relative,
    #[serde(rename = "metric")]
    Metric,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationDiagnostics {
    /// Singular-value diagnostics of the linear solves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Diagnostics>,
    /// Total PnP refinement iterations of a reference-object method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pnp_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementReport>,
    /// Mean reprojection error (px) on the input correspondences.
    pub e_rep: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub mirrors: [MirrorPlane; 3],
    pub scale: Scale,
    pub diagnostics: CalibrationDiagnostics,
}

/// Triangulated scene points, in the scale of the calibration used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsFile {
    pub points: Vec<[f64; 3]>,
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("file types serialize");
    s.push('\n');
    s
}
