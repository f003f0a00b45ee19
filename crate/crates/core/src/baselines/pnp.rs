//! Pose of a known reference object from its projections in one chamber.
//!
//! Linear initialization (homography decomposition for planar objects, DLT
//! otherwise) followed by reprojection-error refinement.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pixel, Point3};
use crate::linalg::null_vector;
use crate::lm::{minimize, LeastSquaresProblem, LmConfig};

/// Landmarks of a reference object in its own frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceObject {
    pub landmarks: Vec<[f64; 3]>,
    pub planar: bool,
}

impl ReferenceObject {
    pub fn new(landmarks: Vec<Point3>, planar: bool) -> Result<Self> {
        let object = Self {
            landmarks: landmarks.iter().map(|p| [p.x, p.y, p.z]).collect(),
            planar,
        };
        object.validate()?;
        Ok(object)
    }

    pub fn points(&self) -> Vec<Point3> {
        self.landmarks.iter().map(|p| Vector3::from(*p)).collect()
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let min = if self.planar { 4 } else { 6 };
        if self.landmarks.len() < min {
            return Err(Error::DegenerateConfiguration(format!(
                "{} landmarks, need at least {min} for a {} object",
                self.landmarks.len(),
                if self.planar { "planar" } else { "non-planar" }
            )));
        }
        let frame = PlaneFrame::fit(&self.points());
        let sv = frame.spread;
        if !(sv[1] > 1e-9 * sv[0]) {
            return Err(Error::DegenerateConfiguration("landmarks are collinear".into()));
        }
        if !self.planar && !(sv[2] > 1e-9 * sv[0]) {
            return Err(Error::DegenerateConfiguration(
                "landmarks are coplanar but the object is marked non-planar".into(),
            ));
        }
        Ok(())
    }
}

/// Centroid and principal axes of a point set; the third axis is the
/// direction of least spread (the plane normal for planar sets).
struct PlaneFrame {
    centroid: Vector3<f64>,
    axes: Matrix3<f64>,
    spread: [f64; 3],
}

impl PlaneFrame {
    fn fit(points: &[Point3]) -> Self {
        let n = points.len().max(1) as f64;
        let centroid = points.iter().sum::<Vector3<f64>>() / n;
        let centered = DMatrix::from_fn(points.len().max(3), 3, |r, c| {
            points.get(r).map_or(0.0, |p| p[c] - centroid[c])
        });
        let svd = centered.svd(false, true);
        let v_t = svd.v_t.expect("requested V");
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let e1: Vector3<f64> = v_t.row(order[0]).transpose().fixed_rows::<3>(0).into_owned();
        let e2: Vector3<f64> = v_t.row(order[1]).transpose().fixed_rows::<3>(0).into_owned();
        let e3 = e1.cross(&e2);
        Self {
            centroid,
            axes: Matrix3::from_columns(&[e1, e2, e3]),
            spread: order.map(|i| svd.singular_values[i]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn transform(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    /// Pose of the (possibly pre-mirrored) object model.
    pub pose: Pose,
    pub mirrored: bool,
    /// RMS reprojection error (px).
    pub rms_error: f64,
    pub iterations: usize,
    /// Landmark positions in the camera frame.
    pub points: Vec<Point3>,
}

/// Object model used for fitting: mirrored chambers see a left-handed copy
/// of the object, so its z axis is flipped and a proper rotation is fit.
fn model_points(object: &ReferenceObject, mirrored: bool) -> Vec<Point3> {
    object
        .points()
        .into_iter()
        .map(|p| if mirrored { Vector3::new(p.x, p.y, -p.z) } else { p })
        .collect()
}

fn project_normalized(p: &Point3) -> Option<(f64, f64)> {
    (p.z > 0.0).then(|| (p.x / p.z, p.y / p.z))
}

fn closest_rotation(m: &Matrix3<f64>) -> Rotation3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Rotation3::from_matrix_unchecked(u * d * v_t)
}

/// Similarity normalization of 2D points: zero mean, mean norm √2.
fn normalization_2d(pts: &[(f64, f64)]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (mx / n, my / n);
    let mean_dist = pts.iter().map(|p| (p.0 - mx).hypot(p.1 - my)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

fn apply_2d(t: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    let v = t * Vector3::new(p.0, p.1, 1.0);
    (v.x / v.z, v.y / v.z)
}

fn planar_init(model: &[Point3], image: &[(f64, f64)]) -> Result<Pose> {
    let frame = PlaneFrame::fit(model);
    let plane: Vec<(f64, f64)> = model
        .iter()
        .map(|p| {
            let local = frame.axes.transpose() * (p - frame.centroid);
            (local.x, local.y)
        })
        .collect();
    let t_obj = normalization_2d(&plane);
    let t_img = normalization_2d(image);

    let mut m = DMatrix::zeros(2 * model.len(), 9);
    for (i, (o, x)) in plane.iter().zip(image).enumerate() {
        let (a, b) = apply_2d(&t_obj, *o);
        let (x, y) = apply_2d(&t_img, *x);
        let r = 2 * i;
        m.row_mut(r).copy_from_slice(&[a, b, 1.0, 0.0, 0.0, 0.0, -x * a, -x * b, -x]);
        m.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, a, b, 1.0, -y * a, -y * b, -y]);
    }
    let nv = null_vector(&m).ok_or_else(|| Error::Pose("homography SVD failed".into()))?;
    let h_norm = Matrix3::from_row_slice(nv.vector.as_slice());
    let t_img_inv = t_img
        .try_inverse()
        .ok_or_else(|| Error::Pose("degenerate image points".into()))?;
    let h = t_img_inv * h_norm * t_obj;

    let (h1, h2, h3) = (h.column(0), h.column(1), h.column(2));
    let mut lambda = 2.0 / (h1.norm() + h2.norm());
    if h3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 * lambda;
    let r2 = h2 * lambda;
    let rot_plane = closest_rotation(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let t_plane = h3 * lambda;
    let rotation = rot_plane * Rotation3::from_matrix_unchecked(frame.axes.transpose());
    Ok(Pose {
        rotation,
        translation: t_plane - rotation * frame.centroid,
    })
}

fn general_init(model: &[Point3], image: &[(f64, f64)]) -> Result<Pose> {
    let frame = PlaneFrame::fit(model);
    let n = model.len() as f64;
    let scale = model.iter().map(|p| (p - frame.centroid).norm()).sum::<f64>() / n;
    let s = if scale > 0.0 { 3f64.sqrt() / scale } else { 1.0 };
    let t_img = normalization_2d(image);

    let mut m = DMatrix::zeros(2 * model.len(), 12);
    for (i, (p, x)) in model.iter().zip(image).enumerate() {
        let q = (p - frame.centroid) * s;
        let (x, y) = apply_2d(&t_img, *x);
        let r = 2 * i;
        m.row_mut(r).copy_from_slice(&[
            q.x, q.y, q.z, 1.0, 0.0, 0.0, 0.0, 0.0, -x * q.x, -x * q.y, -x * q.z, -x,
        ]);
        m.row_mut(r + 1).copy_from_slice(&[
            0.0, 0.0, 0.0, 0.0, q.x, q.y, q.z, 1.0, -y * q.x, -y * q.y, -y * q.z, -y,
        ]);
    }
    let nv = null_vector(&m).ok_or_else(|| Error::Pose("DLT SVD failed".into()))?;
    let p_norm = nalgebra::Matrix3x4::from_row_slice(nv.vector.as_slice());
    let t_img_inv = t_img
        .try_inverse()
        .ok_or_else(|| Error::Pose("degenerate image points".into()))?;
    let mut p = t_img_inv * p_norm;
    let mut m3: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).into_owned();
    if m3.determinant() < 0.0 {
        p = -p;
        m3 = -m3;
    }
    let svd = m3.svd(false, false);
    let k = svd.singular_values.mean();
    if !(k > 0.0) {
        return Err(Error::Pose("degenerate DLT solution".into()));
    }
    let rotation = closest_rotation(&m3);
    // P [s(p − c); 1] ∝ s(R p − R c) + m/k, hence t = m/(k s) − R c.
    let m_col: Vector3<f64> = p.column(3).into_owned();
    Ok(Pose {
        rotation,
        translation: m_col / (k * s) - rotation * frame.centroid,
    })
}

struct PoseProblem<'a> {
    model: &'a [Point3],
    pixels: &'a [Pixel],
    intrinsics: &'a CameraIntrinsics,
    base: Rotation3<f64>,
}

impl PoseProblem<'_> {
    fn pose(&self, x: &DVector<f64>) -> Pose {
        let omega = Vector3::new(x[0], x[1], x[2]);
        Pose {
            rotation: Rotation3::new(omega) * self.base,
            translation: Vector3::new(x[3], x[4], x[5]),
        }
    }
}

impl LeastSquaresProblem for PoseProblem<'_> {
    fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let pose = self.pose(x);
        let mut r = DVector::zeros(2 * self.model.len());
        for (i, (p, q)) in self.model.iter().zip(self.pixels).enumerate() {
            let q_hat = self.intrinsics.project(&pose.transform(p))?;
            r[2 * i] = q.u - q_hat.u;
            r[2 * i + 1] = q.v - q_hat.v;
        }
        Ok(r)
    }
}

fn refine(
    model: &[Point3],
    pixels: &[Pixel],
    a: &CameraIntrinsics,
    init: Pose,
) -> Result<(Pose, f64, usize)> {
    let problem = PoseProblem {
        model,
        pixels,
        intrinsics: a,
        base: init.rotation,
    };
    let x0 = DVector::from_vec(vec![
        0.0,
        0.0,
        0.0,
        init.translation.x,
        init.translation.y,
        init.translation.z,
    ]);
    let outcome = minimize(&problem, x0, &LmConfig::default())?;
    let rms = (outcome.final_cost / pixels.len() as f64).sqrt();
    Ok((problem.pose(&outcome.params), rms, outcome.iterations))
}

/// Pose of `object` from the pixels of its landmarks (same order).
///
/// `mirrored` marks chambers seen through an odd number of reflections.
/// Planar objects try two initializations, the homography pose and the same
/// pose rotated by 180° in the board plane; after refinement the one with
/// the lower reprojection error wins.
pub fn estimate_pose(
    pixels: &[Pixel],
    object: &ReferenceObject,
    a: &CameraIntrinsics,
    mirrored: bool,
) -> Result<PoseEstimate> {
    object.validate()?;
    if pixels.len() != object.len() {
        return Err(Error::Pose(format!(
            "{} pixels for {} landmarks",
            pixels.len(),
            object.len()
        )));
    }
    let model = model_points(object, mirrored);
    let image: Vec<(f64, f64)> = pixels
        .iter()
        .map(|q| {
            let x = a.normalize(*q);
            (x.x, x.y)
        })
        .collect();

    let mut candidates = Vec::new();
    if object.planar {
        let pose = planar_init(&model, &image)?;
        let frame = PlaneFrame::fit(&model);
        let normal = Unit::new_normalize(frame.axes.column(2).into_owned());
        let flip = Rotation3::from_axis_angle(&normal, std::f64::consts::PI);
        let flipped = Pose {
            rotation: pose.rotation * flip,
            translation: pose.transform(&frame.centroid) - pose.rotation * (flip * frame.centroid),
        };
        candidates.push(pose);
        candidates.push(flipped);
    } else {
        candidates.push(general_init(&model, &image)?);
    }

    let mut best: Option<(Pose, f64, usize)> = None;
    let mut total_iterations = 0;
    for init in candidates {
        if model.iter().any(|p| project_normalized(&init.transform(p)).is_none()) {
            continue;
        }
        let Ok((pose, rms, iterations)) = refine(&model, pixels, a, init) else {
            continue;
        };
        total_iterations += iterations;
        if best.as_ref().is_none_or(|b| rms < b.1) {
            best = Some((pose, rms, iterations));
        }
    }
    let (pose, rms_error, _) =
        best.ok_or_else(|| Error::Pose("no initialization places the object in front of the camera".into()))?;
    let points = model.iter().map(|p| pose.transform(p)).collect();
    Ok(PoseEstimate {
        pose,
        mirrored,
        rms_error,
        iterations: total_iterations,
        points,
    })
}
