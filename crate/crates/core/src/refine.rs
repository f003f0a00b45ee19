//! Kaleidoscopic bundle adjustment.
//!
//! Minimizes the reprojection error over all chambers as a function of the
//! mirror parameters only. The scene points are re-triangulated from the
//! current mirrors at every evaluation, and `d₁` stays fixed at 1 to remove
//! the global scale.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compose_transforms, CameraIntrinsics, MirrorPlane, ReflectionTransform};
use crate::linear::{triangulate_observation, LinearCalibration};
use crate::lm::{minimize, LeastSquaresProblem, LmConfig, Termination};
use crate::synth::KaleidoscopicObservation;

/// Spherical angles `(θ, φ)` of the three normals and the distances `d₂`,
/// `d₃` (with `d₁ = 1`).
///
/// `n = (sinθ cosφ, sinθ sinφ, −cosθ)`, so `θ ∈ [0, π/2)` is front-facing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorParams {
    pub angles: [(f64, f64); 3],
    pub d2: f64,
    pub d3: f64,
}

pub const NUM_PARAMS: usize = 8;

pub fn normal_from_angles(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), -theta.cos())
}

pub fn angles_from_normal(n: &Vector3<f64>) -> (f64, f64) {
    let n = n.normalize();
    (n.x.hypot(n.y).atan2(-n.z), n.y.atan2(n.x))
}

impl MirrorParams {
    /// Parameters of the given mirrors after rescaling to `d₁ = 1`.
    pub fn from_mirrors(mirrors: &[MirrorPlane; 3]) -> Self {
        let d1 = mirrors[0].distance();
        Self {
            angles: mirrors.map(|m| angles_from_normal(m.normal())),
            d2: mirrors[1].distance() / d1,
            d3: mirrors[2].distance() / d1,
        }
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert_eq!(v.len(), NUM_PARAMS);
        Self {
            angles: [(v[0], v[1]), (v[2], v[3]), (v[4], v[5])],
            d2: v[6],
            d3: v[7],
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let [(t1, p1), (t2, p2), (t3, p3)] = self.angles;
        DVector::from_vec(vec![t1, p1, t2, p2, t3, p3, self.d2, self.d3])
    }

    pub fn normals(&self) -> [Vector3<f64>; 3] {
        self.angles.map(|(t, p)| normal_from_angles(t, p))
    }

    pub fn distances(&self) -> [f64; 3] {
        [1.0, self.d2, self.d3]
    }

    /// Reflection transforms without the front-facing checks, so that
    /// intermediate optimizer iterates can still be evaluated.
    pub fn transforms(&self) -> [ReflectionTransform; 3] {
        let n = self.normals();
        let d = self.distances();
        [0, 1, 2].map(|i| ReflectionTransform::from_plane(&n[i], d[i]))
    }

    pub fn to_mirrors(&self) -> Result<[MirrorPlane; 3]> {
        let n = self.normals();
        let d = self.distances();
        Ok([
            MirrorPlane::new(n[0], d[0])?,
            MirrorPlane::new(n[1], d[1])?,
            MirrorPlane::new(n[2], d[2])?,
        ])
    }
}

/// Reprojection residuals `q − q̂` (u then v) for every point and every
/// observed chamber, in observation order.
pub fn residual(
    params: &MirrorParams,
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
) -> Result<DVector<f64>> {
    reprojection_residuals(&params.transforms(), obs, a)
}

pub(crate) fn reprojection_residuals(
    transforms: &[ReflectionTransform],
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
) -> Result<DVector<f64>> {
    let total: usize = obs.iter().map(|o| o.len()).sum();
    let mut out = Vec::with_capacity(2 * total);
    for o in obs {
        let p0 = triangulate_observation(o, a, transforms)?;
        for (s, q) in o.iter() {
            let p = compose_transforms(s.indices(), transforms)?.apply(&p0);
            let q_hat = a.project(&p)?;
            out.push(q.u - q_hat.u);
            out.push(q.v - q_hat.v);
        }
    }
    Ok(DVector::from_vec(out))
}

/// The bundle adjustment as a least-squares problem over [`MirrorParams`].
pub struct KaleidoscopicProblem<'a> {
    pub obs: &'a [KaleidoscopicObservation],
    pub intrinsics: &'a CameraIntrinsics,
}

impl LeastSquaresProblem for KaleidoscopicProblem<'_> {
    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>> {
        residual(&MirrorParams::from_vector(params), self.obs, self.intrinsics)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    /// Squared reprojection error at the initial estimate (px²).
    pub initial_cost: f64,
    /// Squared reprojection error at the returned estimate (px²).
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

/// Refines a linear calibration. See [`bundle_adjust_mirrors`].
pub fn bundle_adjust(
    init: &LinearCalibration,
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
) -> Result<([MirrorPlane; 3], RefinementReport)> {
    bundle_adjust_mirrors(&init.mirrors, obs, a, &LmConfig::default())
}

/// Levenberg–Marquardt over the 8 mirror parameters starting from `init`
/// (any scale). The result is in the gauge `d₁ = 1`.
///
/// If no step ever decreases the cost, or the optimum leaves the valid
/// mirror domain, the rescaled initial mirrors come back with
/// `converged = false`.
pub fn bundle_adjust_mirrors(
    init: &[MirrorPlane; 3],
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
    config: &LmConfig,
) -> Result<([MirrorPlane; 3], RefinementReport)> {
    let start = MirrorParams::from_mirrors(init);
    let init_mirrors = start.to_mirrors().map_err(|e| match e {
        Error::Mirror(msg) => Error::InconsistentGeometry(msg),
        other => other,
    })?;
    let problem = KaleidoscopicProblem {
        obs,
        intrinsics: a,
    };
    let outcome = minimize(&problem, start.to_vector(), config)?;

    let fallback = |iterations| {
        (
            init_mirrors,
            RefinementReport {
                initial_cost: outcome.initial_cost,
                final_cost: outcome.initial_cost,
                iterations,
                converged: false,
                termination: outcome.termination,
            },
        )
    };

    if outcome.termination == Termination::DampingExhausted && outcome.accepted_steps == 0 {
        return Ok(fallback(outcome.iterations));
    }
    match MirrorParams::from_vector(&outcome.params).to_mirrors() {
        Ok(mirrors) => Ok((
            mirrors,
            RefinementReport {
                initial_cost: outcome.initial_cost,
                final_cost: outcome.final_cost,
                iterations: outcome.iterations,
                converged: outcome.termination.converged(),
                termination: outcome.termination,
            },
        )),
        Err(_) => Ok(fallback(outcome.iterations)),
    }
}
