//! Synthetic kaleidoscopic scenes with seeded Gaussian pixel noise.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::ReferenceObject;
use crate::error::{Error, Result};
use crate::geometry::{
    compose, CameraIntrinsics, MirrorPlane, Pixel, Point3, ReflectionSequence,
};

/// Pixel measurements of one scene point across chambers, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KaleidoscopicObservation {
    entries: Vec<(ReflectionSequence, Pixel)>,
}

impl KaleidoscopicObservation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the measurement of a chamber.
    pub fn insert(&mut self, sequence: ReflectionSequence, pixel: Pixel) {
        match self.entries.iter_mut().find(|(s, _)| *s == sequence) {
            Some(entry) => entry.1 = pixel,
            None => self.entries.push((sequence, pixel)),
        }
    }

    pub fn get(&self, sequence: &ReflectionSequence) -> Option<Pixel> {
        self.entries
            .iter()
            .find(|(s, _)| s == sequence)
            .map(|(_, p)| *p)
    }

    pub fn contains(&self, sequence: &ReflectionSequence) -> bool {
        self.entries.iter().any(|(s, _)| s == sequence)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ReflectionSequence, &Pixel)> {
        self.entries.iter().map(|(s, p)| (s, p))
    }

    pub fn sequences(&self) -> impl Iterator<Item = &ReflectionSequence> {
        self.entries.iter().map(|(s, _)| s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keys of `required` chambers that are not observed.
    pub fn missing(&self, required: &[ReflectionSequence]) -> Vec<String> {
        required
            .iter()
            .filter(|s| !self.contains(s))
            .map(|s| s.key())
            .collect()
    }

    /// Only the listed chambers, in the order of `chambers`.
    pub fn restricted_to(&self, chambers: &[ReflectionSequence]) -> Self {
        let entries = chambers
            .iter()
            .filter_map(|s| self.get(s).map(|p| (s.clone(), p)))
            .collect();
        Self { entries }
    }

    /// Largest reflection index used by any chamber.
    pub fn max_mirror_index(&self) -> usize {
        self.sequences()
            .flat_map(|s| s.indices().iter().copied())
            .max()
            .unwrap_or(0)
    }
}

impl FromIterator<(ReflectionSequence, Pixel)> for KaleidoscopicObservation {
    fn from_iter<T: IntoIterator<Item = (ReflectionSequence, Pixel)>>(iter: T) -> Self {
        let mut obs = Self::new();
        for (s, p) in iter {
            obs.insert(s, p);
        }
        obs
    }
}

impl Serialize for KaleidoscopicObservation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (s, p) in &self.entries {
            map.serialize_entry(&s.key(), p)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for KaleidoscopicObservation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ObsVisitor;

        impl<'de> Visitor<'de> for ObsVisitor {
            type Value = KaleidoscopicObservation;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from chamber keys to [u, v] pixels")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut obs = KaleidoscopicObservation::new();
                while let Some((key, pixel)) = map.next_entry::<ReflectionSequence, Pixel>()? {
                    if !(pixel.u.is_finite() && pixel.v.is_finite()) {
                        return Err(serde::de::Error::custom(format!(
                            "non-finite pixel in chamber {key}"
                        )));
                    }
                    if obs.contains(&key) {
                        return Err(serde::de::Error::custom(format!("duplicate chamber {key}")));
                    }
                    obs.entries.push((key, pixel));
                }
                Ok(obs)
            }
        }

        deserializer.deserialize_map(ObsVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Uniform in an axis-aligned box.
    Random,
    /// Uniform on a square patch of a plane, like the corners of a chessboard.
    Planar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Volume {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePatch {
    pub center: [f64; 3],
    pub normal: [f64; 3],
    /// Half side length of the square patch.
    pub extent: f64,
}

impl PlanePatch {
    /// Object-to-camera rotation whose third column is the patch normal.
    pub fn rotation(&self) -> Matrix3<f64> {
        let e3 = Vector3::from(self.normal).normalize();
        let helper = if e3.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (helper - helper.dot(&e3) * e3).normalize();
        let e2 = e3.cross(&e1);
        Matrix3::from_columns(&[e1, e2, e3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub count: usize,
    pub layout: Layout,
    pub volume: Volume,
    pub plane: PlanePatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub intrinsics: CameraIntrinsics,
    #[serde(default = "default_image_size")]
    pub image_size: [f64; 2],
    pub mirrors: [MirrorPlane; 3],
    pub points: PointSpec,
    #[serde(default = "ReflectionSequence::default_set")]
    pub sequences: Vec<ReflectionSequence>,
    pub noise_sigma: f64,
    pub seed: u64,
}

fn default_image_size() -> [f64; 2] {
    [1000.0, 1000.0]
}

/// Mirror normal tilted by `tilt_deg` out of the image plane, pointing
/// toward the optical axis from azimuth `azimuth_deg`.
fn tube_mirror(tilt_deg: f64, azimuth_deg: f64, distance: f64) -> MirrorPlane {
    let (tilt, azimuth) = (tilt_deg.to_radians(), azimuth_deg.to_radians());
    let n = Vector3::new(
        -tilt.cos() * azimuth.cos(),
        -tilt.cos() * azimuth.sin(),
        -tilt.sin(),
    );
    MirrorPlane::new(n, distance).expect("valid rig mirror")
}

/// Reference three-mirror rig.
///
/// The mirrors form a slightly tapered triangular tube around the optical
/// axis (azimuths 90°, 210°, 330°; tilts 4°, 3°, 5°; distances 0.17, 0.18,
/// 0.19). The target volume sits about one unit in front of the camera,
/// which has f = 1000 px and a 1000×1000 image. The ten chambers up to the
/// second reflection fill most of the image without leaving it.
pub fn default_rig() -> SceneConfig {
    SceneConfig {
        intrinsics: CameraIntrinsics::from_focal(1000.0, 500.0, 500.0).expect("valid intrinsics"),
        image_size: default_image_size(),
        mirrors: [
            tube_mirror(4.0, 90.0, 0.17),
            tube_mirror(3.0, 210.0, 0.18),
            tube_mirror(5.0, 330.0, 0.19),
        ],
        points: PointSpec {
            count: 5,
            layout: Layout::Random,
            volume: Volume {
                min: [-0.03, -0.03, 0.96],
                max: [0.03, 0.03, 1.04],
            },
            plane: PlanePatch {
                center: [0.0, 0.0, 1.0],
                normal: [0.1, -0.1, -1.0],
                extent: 0.03,
            },
        },
        sequences: ReflectionSequence::default_set(),
        noise_sigma: 1.0,
        seed: 0,
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            for j in i + 1..3 {
                let c = self.mirrors[i].normal().dot(self.mirrors[j].normal()).abs();
                if c >= 1.0 - 1e-6 {
                    return Err(Error::Config(format!(
                        "mirrors {} and {} are parallel",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        if self.points.count == 0 {
            return Err(Error::Config("point count must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("invalid noise sigma {}", self.noise_sigma)));
        }
        let v = &self.points.volume;
        if (0..3).any(|k| !(v.min[k] < v.max[k])) {
            return Err(Error::Config("volume bounds must satisfy min < max".into()));
        }
        let p = &self.points.plane;
        if !(p.extent > 0.0) || Vector3::from(p.normal).norm() == 0.0 {
            return Err(Error::Config("plane patch needs a normal and a positive extent".into()));
        }
        if !self.sequences.iter().any(|s| s.is_empty()) {
            return Err(Error::Config("sequences must include the base chamber".into()));
        }
        if let Some(s) = self.sequences.iter().find(|s| s.indices().iter().any(|&i| i > 3)) {
            return Err(Error::MirrorIndex {
                index: *s.indices().iter().max().unwrap(),
                count: 3,
            });
        }
        Ok(())
    }

    /// Same scene with seed `seed + trial`.
    pub fn for_trial(&self, trial: u64) -> Self {
        Self {
            seed: self.seed.wrapping_add(trial),
            ..self.clone()
        }
    }

    pub fn in_image(&self, q: &Pixel) -> bool {
        (0.0..=self.image_size[0]).contains(&q.u) && (0.0..=self.image_size[1]).contains(&q.v)
    }
}

/// Ground truth of a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mirrors: [MirrorPlane; 3],
    /// Camera-frame scene points.
    pub points: Vec<[f64; 3]>,
    /// The same points in the object frame (plane coordinates with z = 0
    /// for the planar layout, camera frame otherwise).
    pub object_points: Vec<[f64; 3]>,
    pub planar: bool,
}

impl GroundTruth {
    pub fn points(&self) -> Vec<Point3> {
        self.points.iter().map(|p| Vector3::from(*p)).collect()
    }

    pub fn normals(&self) -> [Vector3<f64>; 3] {
        self.mirrors.map(|m| *m.normal())
    }

    pub fn distances(&self) -> [f64; 3] {
        self.mirrors.map(|m| m.distance())
    }

    /// The scene points as a reference object of known geometry.
    pub fn reference_object(&self) -> Result<ReferenceObject> {
        let landmarks = self.object_points.iter().map(|p| Vector3::from(*p)).collect();
        ReferenceObject::new(landmarks, self.planar)
    }
}

fn sample_points(spec: &PointSpec, rng: &mut ChaCha8Rng) -> (Vec<Point3>, Vec<Point3>) {
    match spec.layout {
        Layout::Random => {
            let v = &spec.volume;
            let pts: Vec<Point3> = (0..spec.count)
                .map(|_| Vector3::from_fn(|k, _| rng.random_range(v.min[k]..v.max[k])))
                .collect();
            (pts.clone(), pts)
        }
        Layout::Planar => {
            let plane = &spec.plane;
            let rot = plane.rotation();
            let center = Vector3::from(plane.center);
            let e = plane.extent;
            let object: Vec<Point3> = (0..spec.count)
                .map(|_| Vector3::new(rng.random_range(-e..e), rng.random_range(-e..e), 0.0))
                .collect();
            let camera = object.iter().map(|o| rot * o + center).collect();
            (camera, object)
        }
    }
}

/// Projects every scene point through every configured chamber and adds
/// i.i.d. zero-mean Gaussian noise of standard deviation `noise_sigma` to
/// each pixel coordinate.
///
/// Scene points are drawn before any noise, so configurations differing
/// only in `noise_sigma` share their points, and their noise differs only
/// by scale.
pub fn generate(config: &SceneConfig) -> Result<(GroundTruth, Vec<KaleidoscopicObservation>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (points, object_points) = sample_points(&config.points, &mut rng);

    let transforms = config
        .sequences
        .iter()
        .map(|s| compose(s.indices(), &config.mirrors))
        .collect::<Result<Vec<_>>>()?;

    let mut observations = Vec::with_capacity(points.len());
    for (pi, p) in points.iter().enumerate() {
        // A real point must face the reflective side of every mirror, like the camera.
        for (mi, m) in config.mirrors.iter().enumerate() {
            let distance = m.signed_distance(p);
            if !(distance > 0.0) {
                return Err(Error::PointBehindMirror {
                    point: pi,
                    mirror: mi + 1,
                    distance,
                });
            }
        }
        let mut obs = KaleidoscopicObservation::new();
        for (s, t) in config.sequences.iter().zip(&transforms) {
            let virtual_point = t.apply(p);
            if !(virtual_point.z > 0.0) {
                return Err(Error::ReflectedBehindCamera {
                    point: pi,
                    chamber: s.key(),
                    depth: virtual_point.z,
                });
            }
            let q = config.intrinsics.project(&virtual_point)?;
            let du: f64 = rng.sample(StandardNormal);
            let dv: f64 = rng.sample(StandardNormal);
            obs.insert(
                s.clone(),
                Pixel::new(q.u + config.noise_sigma * du, q.v + config.noise_sigma * dv),
            );
        }
        observations.push(obs);
    }

    let truth = GroundTruth {
        mirrors: config.mirrors,
        points: points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        object_points: object_points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        planar: config.points.layout == Layout::Planar,
    };
    Ok((truth, observations))
}
