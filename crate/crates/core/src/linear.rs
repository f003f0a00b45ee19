//! Linear calibration of the mirror normals and distances from the
//! kaleidoscopic projections of unknown 3D points.
//!
//! Pipeline:
//!
//! 1. [`estimate_normals`]: each pair of chambers related by one extra
//!    reflection in mirror `i` gives a coplanarity row that annihilates
//!    `n_i`. Rows come from every observed pair, including pairs whose
//!    inner chamber is itself reflected (`q₂`/`q₁₂`, `q₂₃`/`q₁₂₃`, ...).
//! 2. [`build_distance_system`] + [`estimate_distances`]: with the normals
//!    fixed, the collinearity `xₛ × pₛ = 0` of every chamber is linear in the
//!    scene point and the three distances. The null vector of the stacked
//!    system gives them up to scale; the scale is fixed by `d₁ = 1`.
//! 3. [`triangulate`]: least-squares scene point for fully specified mirrors.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    compose_transforms, CameraIntrinsics, MirrorPlane, NormalizedPoint, Point3,
    ReflectionSequence, ReflectionTransform,
};
use crate::linalg::{null_vector, skew, sym3_eigenvalues};
use crate::synth::KaleidoscopicObservation;

/// A solve is flagged when `σ_second_smallest / σ_smallest` drops below this.
pub const DEGENERACY_RATIO: f64 = 10.0;

/// Singular values below `RANK_TOLERANCE · σ_max` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Triangulation is refused above this condition number of `K'ᵀK'`.
pub const MAX_TRIANGULATION_CONDITION: f64 = 1e12;

/// Mirrors whose normals satisfy `|nᵢ·nⱼ| ≥ 1 − PARALLEL_TOLERANCE` are parallel.
pub const PARALLEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostic {
    pub label: String,
    pub rows: usize,
    pub smallest: f64,
    pub second_smallest: f64,
}

impl SolveDiagnostic {
    pub fn ratio(&self) -> f64 {
        if self.smallest == 0.0 {
            return f64::INFINITY;
        }
        self.second_smallest / self.smallest
    }

    pub fn flagged(&self) -> bool {
        !(self.ratio() >= DEGENERACY_RATIO)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub solves: Vec<SolveDiagnostic>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn is_degenerate(&self) -> bool {
        !self.warnings.is_empty() || self.solves.iter().any(SolveDiagnostic::flagged)
    }

    fn extend(&mut self, other: Diagnostics) {
        self.solves.extend(other.solves);
        self.warnings.extend(other.warnings);
    }
}

/// `(y − y′, x′ − x, xy′ − x′y)`, i.e. `x̃ × x̃′`. Its dot product with the
/// normal of the mirror relating the two projections vanishes.
pub fn coplanarity_row(x: NormalizedPoint, x_prime: NormalizedPoint) -> Vector3<f64> {
    Vector3::new(
        x.y - x_prime.y,
        x_prime.x - x.x,
        x.x * x_prime.y - x_prime.x * x.y,
    )
}

fn front_facing(n: Vector3<f64>) -> Vector3<f64> {
    if n.z > 0.0 {
        -n
    } else {
        n
    }
}

fn solve_normal(rows: &[Vector3<f64>], label: String) -> Result<(Vector3<f64>, SolveDiagnostic)> {
    let m = DMatrix::from_fn(rows.len(), 3, |r, c| rows[r][c]);
    let nv = null_vector(&m)
        .ok_or_else(|| Error::DegenerateConfiguration(format!("{label}: SVD failed")))?;
    let rank = nv.rank(RANK_TOLERANCE);
    if rank < 2 {
        return Err(Error::DegenerateConfiguration(format!(
            "{label}: coplanarity rows have rank {rank}"
        )));
    }
    let n = front_facing(Vector3::new(nv.vector[0], nv.vector[1], nv.vector[2]).normalize());
    let diag = SolveDiagnostic {
        label,
        rows: rows.len(),
        smallest: nv.smallest(),
        second_smallest: nv.second_smallest(),
    };
    Ok((n, diag))
}

/// Normal of a single mirror from at least two point/mirror-image pairs.
///
/// The distance of the mirror is not observable from such pairs alone.
pub fn estimate_normal_single_mirror(
    pairs: &[(NormalizedPoint, NormalizedPoint)],
) -> Result<Vector3<f64>> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let rows: Vec<_> = pairs.iter().map(|(a, b)| coplanarity_row(*a, *b)).collect();
    solve_normal(&rows, "single mirror".into()).map(|(n, _)| n)
}

/// Coplanarity rows for mirror `mirror` (1-based) from all observed pairs
/// `(s, mirror·s)`.
pub fn normal_rows(
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
    mirror: usize,
) -> Vec<Vector3<f64>> {
    let mut rows = Vec::new();
    for o in obs {
        for (s, q) in o.iter() {
            let Some(outer) = s.prepend(mirror) else {
                continue;
            };
            if let Some(q_outer) = o.get(&outer) {
                rows.push(coplanarity_row(a.normalize(*q), a.normalize(q_outer)));
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalEstimate {
    pub normals: [Vector3<f64>; 3],
    pub diagnostics: Diagnostics,
}

/// Normals of mirrors 1, 2, 3, each from its own stack of coplanarity rows.
pub fn estimate_normals(
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
) -> Result<NormalEstimate> {
    let mut normals = [Vector3::zeros(); 3];
    let mut diagnostics = Diagnostics::default();
    for mirror in 1..=3 {
        let rows = normal_rows(obs, a, mirror);
        if rows.len() < 2 {
            return Err(Error::InsufficientConstraints {
                mirror,
                rows: rows.len(),
            });
        }
        let label = format!("normal {mirror}");
        let (n, diag) = solve_normal(&rows, label).map_err(|e| match e {
            Error::DegenerateConfiguration(_) => {
                let m = DMatrix::from_fn(rows.len(), 3, |r, c| rows[r][c]);
                let rank = null_vector(&m).map_or(0, |nv| nv.rank(RANK_TOLERANCE));
                Error::InsufficientConstraints { mirror, rows: rank }
            }
            other => other,
        })?;
        normals[mirror - 1] = n;
        diagnostics.solves.push(diag);
    }
    Ok(NormalEstimate {
        normals,
        diagnostics,
    })
}

/// Stacked collinearity constraints `K [p₀⁽¹⁾ … p₀⁽ᴸ⁾; d₁; d₂; d₃] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSystem {
    pub k: DMatrix<f64>,
    pub num_points: usize,
}

impl DistanceSystem {
    /// Column of distance `d_mirror` (1-based).
    pub fn distance_column(&self, mirror: usize) -> usize {
        3 * self.num_points + mirror - 1
    }

    /// The 3-row block of one chamber constraint.
    pub fn block(&self, index: usize) -> DMatrix<f64> {
        self.k.rows(3 * index, 3).into_owned()
    }

    pub fn num_blocks(&self) -> usize {
        self.k.nrows() / 3
    }
}

/// Coefficients of one chamber: `pₛ = H·p₀ + Σᵢ cᵢ dᵢ` with
/// `H = H_{i₁}⋯H_{iₘ}` and `cᵢ = −2 Σ_{k: iₖ = i} H_{i₁}⋯H_{iₖ₋₁} n_{iₖ}`.
fn chamber_coefficients(
    sequence: &ReflectionSequence,
    normals: &[Vector3<f64>; 3],
) -> (Matrix3<f64>, [Vector3<f64>; 3]) {
    let mut h = Matrix3::identity();
    let mut coeff = [Vector3::zeros(); 3];
    for &i in sequence.indices() {
        let n = normals[i - 1];
        coeff[i - 1] += -2.0 * h * n;
        h *= Matrix3::identity() - 2.0 * n * n.transpose();
    }
    (h, coeff)
}

/// Builds the distance system for the given normals: 3 rows per observed
/// chamber per point, in observation order, with point-specific `p₀`
/// columns and shared distance columns.
pub fn build_distance_system(
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
    normals: &[Vector3<f64>; 3],
) -> Result<DistanceSystem> {
    let num_points = obs.len();
    let blocks: usize = obs.iter().map(|o| o.len()).sum();
    let mut k = DMatrix::zeros(3 * blocks, 3 * num_points + 3);
    let mut row = 0;
    for (l, o) in obs.iter().enumerate() {
        if o.max_mirror_index() > 3 {
            return Err(Error::MirrorIndex {
                index: o.max_mirror_index(),
                count: 3,
            });
        }
        for (s, q) in o.iter() {
            let x = skew(&a.normalize(*q).homogeneous());
            let (h, coeff) = chamber_coefficients(s, normals);
            k.view_mut((row, 3 * l), (3, 3)).copy_from(&(x * h));
            for (i, c) in coeff.iter().enumerate() {
                k.view_mut((row, 3 * num_points + i), (3, 1))
                    .copy_from(&(x * c));
            }
            row += 3;
        }
    }
    Ok(DistanceSystem { k, num_points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceEstimate {
    /// Distances in the gauge `d₁ = 1`.
    pub distances: [f64; 3],
    pub points: Vec<Point3>,
    pub diagnostic: SolveDiagnostic,
}

/// Null vector of the distance system, scaled so that `d₁ = 1`.
pub fn estimate_distances(system: &DistanceSystem) -> Result<DistanceEstimate> {
    let nv = null_vector(&system.k)
        .ok_or_else(|| Error::InconsistentGeometry("SVD of the distance system failed".into()))?;
    let d1 = nv.vector[system.distance_column(1)];
    if d1 == 0.0 || !d1.is_finite() {
        return Err(Error::InconsistentGeometry("d₁ vanishes in the null vector".into()));
    }
    let v = &nv.vector / d1;
    let distances = [1.0, v[system.distance_column(2)], v[system.distance_column(3)]];
    let points: Vec<Point3> = (0..system.num_points)
        .map(|l| Vector3::new(v[3 * l], v[3 * l + 1], v[3 * l + 2]))
        .collect();
    if let Some(i) = distances.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::InconsistentGeometry(format!(
            "distance d{} = {} is not positive once d₁ = 1",
            i + 1,
            distances[i]
        )));
    }
    if let Some(l) = points.iter().position(|p| !(p.z > 0.0)) {
        return Err(Error::InconsistentGeometry(format!(
            "scene point {l} lies behind the camera once d₁ = 1"
        )));
    }
    Ok(DistanceEstimate {
        distances,
        points,
        diagnostic: SolveDiagnostic {
            label: "distances".into(),
            rows: system.k.nrows(),
            smallest: nv.smallest(),
            second_smallest: nv.second_smallest(),
        },
    })
}

/// Least-squares scene point of one observation for the given per-mirror
/// transforms, via the normal equations of `K′p₀ = −K″d`.
pub fn triangulate_observation(
    obs: &KaleidoscopicObservation,
    a: &CameraIntrinsics,
    mirrors: &[ReflectionTransform],
) -> Result<Point3> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (s, q) in obs.iter() {
        let t = compose_transforms(s.indices(), mirrors)?;
        let x = skew(&a.normalize(*q).homogeneous());
        let block = x * t.h;
        let rhs = -(x * t.translation);
        ata += block.transpose() * block;
        atb += block.transpose() * rhs;
    }
    let eig = sym3_eigenvalues(&ata);
    let condition = if eig[0] > 0.0 { eig[2] / eig[0] } else { f64::INFINITY };
    if !(condition <= MAX_TRIANGULATION_CONDITION) {
        return Err(Error::IllPosedTriangulation { condition });
    }
    ata.cholesky()
        .map(|c| c.solve(&atb))
        .ok_or(Error::IllPosedTriangulation { condition })
}

/// Scene point of every observation for fully specified mirrors.
pub fn triangulate(
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
    mirrors: &[MirrorPlane],
) -> Result<Vec<Point3>> {
    let transforms: Vec<_> = mirrors.iter().map(MirrorPlane::transform).collect();
    obs.iter()
        .map(|o| triangulate_observation(o, a, &transforms))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCalibration {
    /// Mirrors in the gauge `d₁ = 1`.
    pub mirrors: [MirrorPlane; 3],
    pub points: Vec<Point3>,
    pub diagnostics: Diagnostics,
}

fn parallel_warnings(normals: &[Vector3<f64>; 3]) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..3 {
        for j in i + 1..3 {
            let c = normals[i].dot(&normals[j]).abs();
            if c >= 1.0 - PARALLEL_TOLERANCE {
                out.push(format!("mirrors {} and {} are parallel (|nᵢ·nⱼ| = {c})", i + 1, j + 1));
            }
        }
    }
    out
}

/// Normals, then distances and scene points, then re-triangulation with
/// the final mirrors.
pub fn calibrate_linear(
    obs: &[KaleidoscopicObservation],
    a: &CameraIntrinsics,
) -> Result<LinearCalibration> {
    if obs.is_empty() {
        return Err(Error::DegenerateConfiguration("no observations".into()));
    }
    let base = ReflectionSequence::base();
    if let Some(l) = obs.iter().position(|o| !o.contains(&base)) {
        return Err(Error::MissingChambers(vec![format!("0 (point {l})")]));
    }
    let NormalEstimate {
        normals,
        mut diagnostics,
    } = estimate_normals(obs, a)?;
    diagnostics.warnings.extend(parallel_warnings(&normals));

    let system = build_distance_system(obs, a, &normals)?;
    let estimate = estimate_distances(&system)?;
    diagnostics.extend(Diagnostics {
        solves: vec![estimate.diagnostic.clone()],
        warnings: Vec::new(),
    });

    let d = estimate.distances;
    let mirrors = [
        MirrorPlane::new(normals[0], d[0])?,
        MirrorPlane::new(normals[1], d[1])?,
        MirrorPlane::new(normals[2], d[2])?,
    ];
    let points = triangulate(obs, a, &mirrors)?;
    Ok(LinearCalibration {
        mirrors,
        points,
        diagnostics,
    })
}
