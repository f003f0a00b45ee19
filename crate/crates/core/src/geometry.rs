//! Measurement model of a kaleidoscopic imaging system.
//!
//! The camera sits at the origin looking along `+z`. A planar mirror is
//! described by a unit normal `n` and a distance `d` with the plane equation
//! `nᵀx + d = 0`; the camera lies on the reflective side (`d > 0`) and the
//! normal points back toward the camera (`n.z < 0`).
//!
//! A chamber of the kaleidoscopic image is identified by a
//! [`ReflectionSequence`]. The sequence `[i, j]` is the image of a point
//! reflected first by mirror `j` and then by mirror `i`, i.e. the transform
//! `S_i S_j`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D point in the camera frame.
pub type Point3 = Vector3<f64>;

/// Pinhole intrinsics: an upper-triangular 3×3 matrix in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct CameraIntrinsics {
    a: Matrix3<f64>,
    a_inv: Matrix3<f64>,
}

impl CameraIntrinsics {
    pub fn new(a: Matrix3<f64>) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Intrinsics("non-finite entry".into()));
        }
        if a[(1, 0)] != 0.0 || a[(2, 0)] != 0.0 || a[(2, 1)] != 0.0 {
            return Err(Error::Intrinsics("matrix is not upper-triangular".into()));
        }
        if (a[(2, 2)] - 1.0).abs() > 1e-12 {
            return Err(Error::Intrinsics("a[2][2] must be 1".into()));
        }
        if a[(0, 0)] <= 0.0 || a[(1, 1)] <= 0.0 {
            return Err(Error::Intrinsics("focal lengths must be positive".into()));
        }
        let a_inv = a
            .try_inverse()
            .ok_or_else(|| Error::Intrinsics("matrix is singular".into()))?;
        Ok(Self { a, a_inv })
    }

    /// Square pixels, no skew.
    pub fn from_focal(focal: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::new(Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0))
    }

    pub fn identity() -> Self {
        Self {
            a: Matrix3::identity(),
            a_inv: Matrix3::identity(),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.a
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.a_inv
    }

    /// Projects a camera-frame point to pixels.
    pub fn project(&self, p: &Point3) -> Result<Pixel> {
        project(self, p)
    }

    pub fn normalize(&self, q: Pixel) -> NormalizedPoint {
        normalize(self, q)
    }
}

impl TryFrom<[[f64; 3]; 3]> for CameraIntrinsics {
    type Error = Error;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

impl From<CameraIntrinsics> for [[f64; 3]; 3] {
    fn from(k: CameraIntrinsics) -> Self {
        let a = k.a;
        [
            [a[(0, 0)], a[(0, 1)], a[(0, 2)]],
            [a[(1, 0)], a[(1, 1)], a[(1, 2)]],
            [a[(2, 0)], a[(2, 1)], a[(2, 2)]],
        ]
    }
}

/// An image measurement in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

impl From<[f64; 2]> for Pixel {
    fn from([u, v]: [f64; 2]) -> Self {
        Self { u, v }
    }
}

impl From<Pixel> for [f64; 2] {
    fn from(p: Pixel) -> Self {
        [p.u, p.v]
    }
}

/// Normalized image coordinates `(x, y, 1) = A⁻¹ (u, v, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }
}

/// Dehomogenized `A·p`.
pub fn project(a: &CameraIntrinsics, p: &Point3) -> Result<Pixel> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera { depth: p.z });
    }
    let q = a.a * p;
    Ok(Pixel::new(q.x / q.z, q.y / q.z))
}

pub fn normalize(a: &CameraIntrinsics, q: Pixel) -> NormalizedPoint {
    let x = a.a_inv * Vector3::new(q.u, q.v, 1.0);
    NormalizedPoint::new(x.x / x.z, x.y / x.z)
}

/// A planar mirror `nᵀx + d = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MirrorRecord", into = "MirrorRecord")]
pub struct MirrorPlane {
    normal: Vector3<f64>,
    distance: f64,
}

#[derive(Serialize, Deserialize)]
struct MirrorRecord {
    normal: [f64; 3],
    distance: f64,
}

impl TryFrom<MirrorRecord> for MirrorPlane {
    type Error = Error;

    fn try_from(r: MirrorRecord) -> Result<Self> {
        MirrorPlane::new(Vector3::from(r.normal), r.distance)
    }
}

impl From<MirrorPlane> for MirrorRecord {
    fn from(m: MirrorPlane) -> Self {
        MirrorRecord {
            normal: m.normal.into(),
            distance: m.distance,
        }
    }
}

impl MirrorPlane {
    /// Builds a mirror from a (not necessarily unit) normal and a distance.
    ///
    /// The normal must face the camera (`n.z < 0`) and the camera must be on
    /// the reflective side (`d > 0`).
    pub fn new(normal: Vector3<f64>, distance: f64) -> Result<Self> {
        let norm = normal.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Mirror(format!("invalid normal {:?}", normal.as_slice())));
        }
        if !distance.is_finite() || distance <= 0.0 {
            return Err(Error::Mirror(format!("distance must be positive, got {distance}")));
        }
        let normal = normal / norm;
        if normal.z >= 0.0 {
            return Err(Error::Mirror(format!(
                "normal must face the camera (n.z < 0), got n.z = {}",
                normal.z
            )));
        }
        Ok(Self { normal, distance })
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// Signed distance of `p` to the plane, positive on the camera side.
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(p) + self.distance
    }

    pub fn transform(&self) -> ReflectionTransform {
        reflection_transform(self)
    }

    pub fn reflect(&self, p: &Point3) -> Point3 {
        reflect(self, p)
    }

    /// Same plane expressed with every length multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.normal, self.distance * s)
    }
}

/// Rigid-or-reflected transform `p ↦ h·p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionTransform {
    pub h: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl ReflectionTransform {
    pub fn identity() -> Self {
        Self {
            h: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Reflection across `nᵀx + d = 0` for a raw unit normal. No checks.
    pub fn from_plane(n: &Vector3<f64>, d: f64) -> Self {
        Self {
            h: Matrix3::identity() - 2.0 * n * n.transpose(),
            translation: -2.0 * d * n,
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.h * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &ReflectionTransform) -> Self {
        Self {
            h: self.h * other.h,
            translation: self.h * other.translation + self.translation,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.h.determinant()
    }
}

impl std::ops::Mul for ReflectionTransform {
    type Output = ReflectionTransform;

    fn mul(self, rhs: ReflectionTransform) -> ReflectionTransform {
        self.compose(&rhs)
    }
}

/// Householder reflection `H = I − 2nnᵀ` with translation `−2dn`.
pub fn reflection_transform(m: &MirrorPlane) -> ReflectionTransform {
    ReflectionTransform::from_plane(&m.normal, m.distance)
}

/// `p − 2(nᵀp + d)n`.
pub fn reflect(m: &MirrorPlane, p: &Point3) -> Point3 {
    p - 2.0 * m.signed_distance(p) * m.normal
}

/// Ordered mirror indices (1-based), outermost reflection first.
///
/// The empty sequence is the base chamber. Two consecutive equal indices
/// are rejected since a double reflection in the same mirror is the
/// identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ReflectionSequence(Vec<usize>);

impl ReflectionSequence {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        check_indices(&indices)?;
        Ok(Self(indices))
    }

    pub fn base() -> Self {
        Self(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Odd number of reflections flips handedness.
    pub fn is_mirrored(&self) -> bool {
        self.0.len() % 2 == 1
    }

    /// The chamber obtained by reflecting this one in mirror `mirror`,
    /// or `None` when that would repeat the outermost mirror.
    pub fn prepend(&self, mirror: usize) -> Option<Self> {
        if mirror == 0 || self.0.first() == Some(&mirror) {
            return None;
        }
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.push(mirror);
        v.extend_from_slice(&self.0);
        Some(Self(v))
    }

    /// Digit-string key, `"0"` for the base chamber.
    pub fn key(&self) -> String {
        if self.0.is_empty() {
            return "0".to_string();
        }
        self.0.iter().map(|i| i.to_string()).collect()
    }

    /// The ten chambers up to second reflections of a three-mirror system,
    /// in the row order of the distance system.
    pub fn default_set() -> Vec<Self> {
        [
            &[][..],
            &[1],
            &[2],
            &[3],
            &[1, 2],
            &[2, 1],
            &[2, 3],
            &[3, 2],
            &[3, 1],
            &[1, 3],
        ]
        .iter()
        .map(|s| Self(s.to_vec()))
        .collect()
    }
}

/// Number of physical mirrors a sequence may refer to.
pub const NUM_MIRRORS: usize = 3;

fn check_indices(indices: &[usize]) -> Result<()> {
    if let Some(&index) = indices.iter().find(|&&i| i == 0 || i > NUM_MIRRORS) {
        return Err(Error::MirrorIndex {
            index,
            count: NUM_MIRRORS,
        });
    }
    if indices.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateSequence(indices.to_vec()));
    }
    Ok(())
}

impl fmt::Display for ReflectionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for ReflectionSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "0" {
            return Ok(Self::base());
        }
        if s.is_empty() {
            return Err(Error::SequenceKey(s.to_string()));
        }
        let indices = s
            .chars()
            .map(|c| match c.to_digit(10) {
                Some(d) if d > 0 => Ok(d as usize),
                _ => Err(Error::SequenceKey(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices)
    }
}

impl TryFrom<String> for ReflectionSequence {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ReflectionSequence> for String {
    fn from(s: ReflectionSequence) -> Self {
        s.key()
    }
}

/// Product `S_{i₁} S_{i₂} ⋯ S_{iₘ}` of the per-mirror transforms.
pub fn compose_transforms(
    indices: &[usize],
    mirrors: &[ReflectionTransform],
) -> Result<ReflectionTransform> {
    if indices.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateSequence(indices.to_vec()));
    }
    let mut out = ReflectionTransform::identity();
    for &i in indices {
        if i == 0 || i > mirrors.len() {
            return Err(Error::MirrorIndex {
                index: i,
                count: mirrors.len(),
            });
        }
        out = out.compose(&mirrors[i - 1]);
    }
    Ok(out)
}

/// Transform of the chamber `indices` for the given mirrors.
pub fn compose(indices: &[usize], mirrors: &[MirrorPlane]) -> Result<ReflectionTransform> {
    let transforms: Vec<_> = mirrors.iter().map(reflection_transform).collect();
    compose_transforms(indices, &transforms)
}
