//! Small dense linear-algebra helpers.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

/// `[v]ₓ`, the cross-product matrix: `skew(v) * w == v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Result of a homogeneous least-squares solve `min ‖Mx‖, ‖x‖ = 1`.
#[derive(Debug, Clone)]
pub struct NullVector {
    /// Unit right-singular vector of the smallest singular value.
    pub vector: DVector<f64>,
    /// Singular values in decreasing order (padded to the column count).
    pub singular_values: Vec<f64>,
}

impl NullVector {
    pub fn smallest(&self) -> f64 {
        *self.singular_values.last().unwrap_or(&0.0)
    }

    pub fn second_smallest(&self) -> f64 {
        let n = self.singular_values.len();
        if n < 2 {
            return 0.0;
        }
        self.singular_values[n - 2]
    }

    /// Numerical rank with singular values below `rel_tol · σ_max` treated as zero.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let max = self.singular_values.first().copied().unwrap_or(0.0);
        if max <= 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > rel_tol * max).count()
    }
}

/// SVD null-space solve. Matrices with fewer rows than columns are padded
/// with zero rows so that a full set of right-singular vectors exists.
pub fn null_vector(m: &DMatrix<f64>) -> Option<NullVector> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return None;
    }
    let padded;
    let m = if rows < cols {
        padded = m.clone().resize_vertically(cols, 0.0);
        &padded
    } else {
        m
    };
    let svd = m.clone().try_svd(false, true, f64::EPSILON, 0)?;
    let v_t = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let last = *order.last()?;
    let vector = v_t.row(last).transpose().into_owned();
    let singular_values = order.iter().map(|&i| svd.singular_values[i]).collect();
    Some(NullVector {
        vector,
        singular_values,
    })
}

/// Eigenvalues of a symmetric 3×3 matrix, ascending.
pub fn sym3_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let e = m.symmetric_eigenvalues();
    let mut v = [e[0], e[1], e[2]];
    v.sort_by(f64::total_cmp);
    v
}
