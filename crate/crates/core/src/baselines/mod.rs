//! Reference-object-based comparison methods.
//!
//! Both methods first recover the 3D landmark positions of a known object in
//! every chamber by PnP, then compute the mirrors from those positions:
//!
//! - [`baseline_calibrate`]: each normal is the normalized sum of the
//!   displacement vectors between a point and its reflection in that mirror;
//!   each distance is the mean offset of the corresponding midpoints.
//! - [`takahashi_calibrate`]: the intersection direction `m_ij = n_i × n_j`
//!   of each mirror pair is orthogonal to the difference of any two points
//!   that are reflections of a common point in mirrors `i` and `j`. The
//!   normals are cross products of the intersection directions.

mod pnp;

pub use pnp::{estimate_pose, Pose, PoseEstimate, ReferenceObject};

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{compose, CameraIntrinsics, MirrorPlane, Pixel, Point3, ReflectionSequence};
use crate::linalg::null_vector;
use crate::synth::KaleidoscopicObservation;

/// Landmark positions in the camera frame, per chamber.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PosedLandmarks {
    chambers: Vec<(ReflectionSequence, Vec<Point3>)>,
}

impl PosedLandmarks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, chamber: ReflectionSequence, points: Vec<Point3>) {
        match self.chambers.iter_mut().find(|(s, _)| *s == chamber) {
            Some(entry) => entry.1 = points,
            None => self.chambers.push((chamber, points)),
        }
    }

    pub fn get(&self, chamber: &ReflectionSequence) -> Option<&[Point3]> {
        self.chambers
            .iter()
            .find(|(s, _)| s == chamber)
            .map(|(_, p)| p.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ReflectionSequence, &[Point3])> {
        self.chambers.iter().map(|(s, p)| (s, p.as_slice()))
    }

    /// Exact landmark positions for known mirrors.
    pub fn from_scene(
        mirrors: &[MirrorPlane],
        points: &[Point3],
        chambers: &[ReflectionSequence],
    ) -> Result<Self> {
        let mut out = Self::new();
        for s in chambers {
            let t = compose(s.indices(), mirrors)?;
            out.insert(s.clone(), points.iter().map(|p| t.apply(p)).collect());
        }
        Ok(out)
    }

    fn by_key(&self, key: &str) -> Result<&[Point3]> {
        let s: ReflectionSequence = key.parse()?;
        self.get(&s)
            .ok_or_else(|| Error::MissingChambers(vec![key.to_string()]))
    }

    fn require(&self, keys: &[&str]) -> Result<usize> {
        let missing: Vec<String> = keys
            .iter()
            .filter(|k| self.by_key(k).is_err())
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingChambers(missing));
        }
        let counts: Vec<usize> = keys.iter().map(|k| self.by_key(k).map_or(0, <[_]>::len)).collect();
        let l = counts[0];
        if l == 0 || counts.iter().any(|&c| c != l) {
            return Err(Error::DegenerateConfiguration(
                "chambers disagree on the number of landmarks".into(),
            ));
        }
        Ok(l)
    }
}

/// Chambers both methods need.
pub const REQUIRED_CHAMBERS: [&str; 10] = ["0", "1", "2", "3", "12", "13", "21", "23", "31", "32"];

pub fn required_chambers() -> Vec<ReflectionSequence> {
    REQUIRED_CHAMBERS.iter().map(|k| k.parse().unwrap()).collect()
}

/// Runs PnP in every chamber. `obs[l]` holds the pixels of landmark `l`.
///
/// Returns the posed landmarks and the total number of refinement
/// iterations.
pub fn pose_landmarks(
    obs: &[KaleidoscopicObservation],
    object: &ReferenceObject,
    a: &CameraIntrinsics,
    chambers: &[ReflectionSequence],
) -> Result<(PosedLandmarks, usize)> {
    if obs.len() != object.len() {
        return Err(Error::DegenerateConfiguration(format!(
            "{} observed points for {} landmarks",
            obs.len(),
            object.len()
        )));
    }
    let mut missing: Vec<String> = chambers
        .iter()
        .filter(|s| obs.iter().any(|o| !o.contains(s)))
        .map(|s| s.key())
        .collect();
    missing.dedup();
    if !missing.is_empty() {
        return Err(Error::MissingChambers(missing));
    }
    let mut posed = PosedLandmarks::new();
    let mut iterations = 0;
    for s in chambers {
        let pixels: Vec<Pixel> = obs.iter().map(|o| o.get(s).unwrap()).collect();
        let est = estimate_pose(&pixels, object, a, s.is_mirrored())?;
        iterations += est.iterations;
        posed.insert(s.clone(), est.points);
    }
    Ok((posed, iterations))
}

fn front_facing(n: Vector3<f64>) -> Vector3<f64> {
    if n.z > 0.0 {
        -n
    } else {
        n
    }
}

/// An estimate that fails the plane invariants (behind the camera or facing
/// away from it) is a degenerate result, not a caller error.
fn estimated_plane(mirror: usize, n: Vector3<f64>, d: f64) -> Result<MirrorPlane> {
    MirrorPlane::new(n, d).map_err(|e| {
        Error::DegenerateConfiguration(format!("estimate of mirror {mirror} is invalid: {e}"))
    })
}

fn sum_points(points: &[Point3]) -> Vector3<f64> {
    points.iter().sum()
}

/// Mirror `i` from the reflection pairs `(0, i)`, `(j, ij)`, `(k, ik)`.
pub fn baseline_calibrate(posed: &PosedLandmarks) -> Result<[MirrorPlane; 3]> {
    let l = posed.require(&REQUIRED_CHAMBERS)? as f64;
    let p = |k: &str| posed.by_key(k).map(sum_points);
    let mut mirrors = Vec::with_capacity(3);
    for (i, j, k) in [(1, 2, 3), (2, 3, 1), (3, 1, 2)] {
        let (pi, pj, pk) = (p(&i.to_string())?, p(&j.to_string())?, p(&k.to_string())?);
        let (pij, pik) = (p(&format!("{i}{j}"))?, p(&format!("{i}{k}"))?);
        let p0 = p("0")?;
        let sum = (pi - p0) + (pij - pj) + (pik - pk);
        let norm = sum.norm();
        if !(norm > 0.0) {
            return Err(Error::DegenerateConfiguration(format!(
                "displacement sum for mirror {i} vanishes"
            )));
        }
        // A point and its reflection differ by −2(nᵀp + d)n with nᵀp + d > 0, so
        // the sum points along −n. Validation rejects an estimate that is not
        // front-facing.
        let n = -sum / norm;
        // Each listed pair straddles the plane symmetrically: nᵀ(mid) + d = 0.
        let d = -n.dot(&(p0 + pi + pj + pk + pij + pik)) / (6.0 * l);
        mirrors.push(estimated_plane(i, n, d)?);
    }
    Ok([mirrors[0], mirrors[1], mirrors[2]])
}

/// Point pairs that are reflections of a common point by mirrors `i` and `j`,
/// for `m₁₂`, `m₂₃` and `m₃₁`.
pub const INTERSECTION_PAIRS: [[(&str, &str); 4]; 3] = [
    [("1", "2"), ("0", "21"), ("12", "0"), ("13", "23")],
    [("2", "3"), ("21", "31"), ("0", "32"), ("23", "0")],
    [("3", "1"), ("31", "0"), ("32", "12"), ("0", "13")],
];

/// Threshold on `|m_ij × m_ki|` for unit intersection directions.
pub const PARALLEL_INTERSECTION_TOLERANCE: f64 = 1e-6;

/// Unit intersection directions `m₁₂`, `m₂₃`, `m₃₁` (sign arbitrary).
pub fn intersection_vectors(posed: &PosedLandmarks) -> Result<[Vector3<f64>; 3]> {
    posed.require(&REQUIRED_CHAMBERS)?;
    let mut out = [Vector3::zeros(); 3];
    for (m, pairs) in out.iter_mut().zip(INTERSECTION_PAIRS.iter()) {
        let mut rows = Vec::new();
        for (a, b) in pairs {
            for (pa, pb) in posed.by_key(a)?.iter().zip(posed.by_key(b)?) {
                rows.push(pa - pb);
            }
        }
        let mat = DMatrix::from_fn(rows.len(), 3, |r, c| rows[r][c]);
        let nv = null_vector(&mat)
            .ok_or_else(|| Error::DegenerateIntersection("SVD failed".into()))?;
        *m = Vector3::new(nv.vector[0], nv.vector[1], nv.vector[2]).normalize();
    }
    Ok(out)
}

/// Normals from cross products of intersection directions; distances from
/// the midpoint of each first reflection and the direct view.
pub fn takahashi_calibrate(posed: &PosedLandmarks) -> Result<[MirrorPlane; 3]> {
    let l = posed.require(&REQUIRED_CHAMBERS)? as f64;
    let [m12, m23, m31] = intersection_vectors(posed)?;
    let p0 = sum_points(posed.by_key("0")?);
    let mut mirrors = Vec::with_capacity(3);
    for (i, (a, b)) in [(m12, m31), (m23, m12), (m31, m23)].into_iter().enumerate() {
        let c = a.cross(&b);
        if !(c.norm() >= PARALLEL_INTERSECTION_TOLERANCE) {
            return Err(Error::DegenerateIntersection(format!(
                "intersection vectors around mirror {} are parallel (|m × m| = {:e})",
                i + 1,
                c.norm()
            )));
        }
        let n = front_facing(c.normalize());
        let pi = sum_points(posed.by_key(&(i + 1).to_string())?);
        let d = -n.dot(&(pi + p0)) / (2.0 * l);
        mirrors.push(estimated_plane(i + 1, n, d)?);
    }
    Ok([mirrors[0], mirrors[1], mirrors[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMethod {
    Baseline,
    Takahashi,
}

/// PnP in the required chambers followed by the chosen method.
///
/// Returns the metric mirrors and the total PnP iteration count.
pub fn calibrate_with_reference(
    method: ReferenceMethod,
    obs: &[KaleidoscopicObservation],
    object: &ReferenceObject,
    a: &CameraIntrinsics,
) -> Result<([MirrorPlane; 3], usize)> {
    let (posed, iterations) = pose_landmarks(obs, object, a, &required_chambers())?;
    let mirrors = match method {
        ReferenceMethod::Baseline => baseline_calibrate(&posed)?,
        ReferenceMethod::Takahashi => takahashi_calibrate(&posed)?,
    };
    Ok((mirrors, iterations))
}
