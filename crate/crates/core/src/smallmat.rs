//! Dense kernels for the small matrices that show up in continuation
//! feedback laws: pseudoinverses, the oriented null-space tangent and rank
//! tests. Everything here works on `nalgebra` dynamic matrices and is meant
//! for sizes up to roughly 16x17.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff used when callers do not supply one.
pub const DEFAULT_TOL: f64 = 1e-10;

fn ensure_finite(a: &Mat, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite entries")))
    }
}

fn ensure_nonempty(a: &Mat, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput(format!("{what} has an empty dimension")));
    }
    Ok(())
}

/// Singular values of `a`, largest first.
pub fn singular_values(a: &Mat) -> Result<Vec<f64>> {
    ensure_nonempty(a, "matrix")?;
    ensure_finite(a, "matrix")?;
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Moore-Penrose pseudoinverse. Singular values below `tol * sigma_max` are
/// treated as zero.
pub fn pinv(a: &Mat, tol: f64) -> Result<Mat> {
    ensure_nonempty(a, "matrix")?;
    ensure_finite(a, "matrix")?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let cutoff = tol * sigma_max;

    let mut out = Mat::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_k * u_k^T / s
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    Ok(out)
}

/// Weighted pseudoinverse `Q (A Q)^+` for a positive diagonal weight given by
/// its diagonal `q`.
pub fn weighted_pinv(a: &Mat, q: &Vector, tol: f64) -> Result<Mat> {
    if q.len() != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "weight has dimension {} but matrix has {} columns",
            q.len(),
            a.ncols()
        )));
    }
    if q.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("weight diagonal must be positive".into()));
    }
    let qm = Mat::from_diagonal(q);
    let aq = a * &qm;
    Ok(&qm * pinv(&aq, tol)?)
}

/// Numerical rank: number of singular values above `tol * sigma_max`.
pub fn rank(a: &Mat, tol: f64) -> Result<usize> {
    let s = singular_values(a)?;
    let sigma_max = s.first().copied().unwrap_or(0.0);
    if sigma_max == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > tol * sigma_max).count())
}

/// Determinant via LU with partial pivoting.
pub fn det(a: &Mat) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput("determinant of a non-square matrix".into()));
    }
    ensure_finite(a, "matrix")?;
    Ok(a.clone().lu().determinant())
}

/// `[A; t^T]`, the square matrix whose determinant fixes tangent orientation.
pub fn augment_with_row(a: &Mat, t: &Vector) -> Mat {
    let (m, n) = a.shape();
    let mut out = Mat::zeros(m + 1, n);
    out.rows_mut(0, m).copy_from(a);
    out.row_mut(m).copy_from(&t.transpose());
    out
}

/// Oriented unit tangent of an `m x (m+1)` matrix of full row rank:
/// `A t = 0`, `|t| = 1`, `det [A; t^T] > 0`.
///
/// Uses the default rank tolerance; see [`tangent_vector_tol`].
pub fn tangent_vector(a: &Mat) -> Result<Vector> {
    tangent_vector_tol(a, DEFAULT_TOL)
}

pub fn tangent_vector_tol(a: &Mat, tol: f64) -> Result<Vector> {
    ensure_nonempty(a, "matrix")?;
    ensure_finite(a, "matrix")?;
    let (m, n) = a.shape();
    if n != m + 1 {
        return Err(Error::InvalidInput(format!(
            "tangent needs an m x (m+1) matrix, got {m} x {n}"
        )));
    }

    // Pad with a zero row so the SVD returns the full right basis.
    let mut padded = Mat::zeros(n, n);
    padded.rows_mut(0, m).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("v_t requested");

    let s = svd.singular_values.as_slice();
    let sigma_max = s.iter().copied().fold(0.0_f64, f64::max);
    let rank = if sigma_max == 0.0 {
        0
    } else {
        s.iter().filter(|&&v| v > tol * sigma_max).count()
    };
    if rank < m {
        return Err(Error::RankDeficient { rank, expected: m });
    }
    let null_idx = s
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .expect("non-empty");

    let mut t: Vector = v_t.row(null_idx).transpose();
    t /= t.norm();
    if det(&augment_with_row(a, &t))? < 0.0 {
        t.neg_mut();
    }
    Ok(t)
}

/// Scalar pseudoinverse: `1/a` away from zero, `0` at zero.
pub fn scalar_pinv(a: f64) -> f64 {
    if a.abs() > DEFAULT_TOL {
        1.0 / a
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, data)
    }

    #[test]
    fn pinv_identity() {
        let p = pinv(&Mat::identity(3, 3), DEFAULT_TOL).unwrap();
        assert_relative_eq!(p, Mat::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn pinv_zero_singular_value() {
        let p = pinv(&m(2, 2, &[2.0, 0.0, 0.0, 0.0]), DEFAULT_TOL).unwrap();
        assert_relative_eq!(p, m(2, 2, &[0.5, 0.0, 0.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn pinv_row_vector() {
        let p = pinv(&m(1, 2, &[1.0, 1.0]), DEFAULT_TOL).unwrap();
        assert_relative_eq!(p, m(2, 1, &[0.5, 0.5]), epsilon = 1e-14);
    }

    #[test]
    fn pinv_rejects_nan() {
        let err = pinv(&m(1, 2, &[f64::NAN, 1.0]), DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn weighted_pinv_identity_weight_is_plain_pinv() {
        let a = m(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 4.0]);
        let w = weighted_pinv(&a, &Vector::from_element(3, 1.0), DEFAULT_TOL).unwrap();
        assert_relative_eq!(w, pinv(&a, DEFAULT_TOL).unwrap(), epsilon = 1e-13);
    }

    #[test]
    fn weighted_pinv_null_column_unaffected() {
        let a = m(1, 2, &[1.0, 0.0]);
        let w = weighted_pinv(&a, &Vector::from_vec(vec![1.0, 0.05]), DEFAULT_TOL).unwrap();
        assert_relative_eq!(w, m(2, 1, &[1.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn weighted_pinv_dimension_mismatch() {
        let a = m(1, 2, &[1.0, 0.0]);
        assert!(weighted_pinv(&a, &Vector::from_element(3, 1.0), DEFAULT_TOL).is_err());
    }

    #[test]
    fn tangent_examples() {
        let t = tangent_vector(&m(1, 2, &[1.0, 0.0])).unwrap();
        assert_relative_eq!(t, Vector::from_vec(vec![0.0, 1.0]), epsilon = 1e-14);

        let t = tangent_vector(&m(1, 2, &[0.0, 1.0])).unwrap();
        assert_relative_eq!(t, Vector::from_vec(vec![-1.0, 0.0]), epsilon = 1e-14);

        let t = tangent_vector(&m(2, 3, &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0])).unwrap();
        assert_relative_eq!(t, Vector::from_vec(vec![0.0, 0.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn tangent_rank_deficient() {
        let err = tangent_vector(&m(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { rank: 1, expected: 2 }));
    }

    #[test]
    fn tangent_wrong_shape() {
        assert!(tangent_vector(&Mat::identity(2, 2)).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&Mat::identity(2, 2), DEFAULT_TOL).unwrap(), 2);
        assert_eq!(rank(&Mat::zeros(2, 3), DEFAULT_TOL).unwrap(), 0);
        assert_eq!(rank(&m(2, 2, &[1.0, 1.0, 1.0, 1.0]), DEFAULT_TOL).unwrap(), 1);
    }

    #[test]
    fn scalar_pinv_examples() {
        assert_eq!(scalar_pinv(2.0), 0.5);
        assert_eq!(scalar_pinv(0.0), 0.0);
        assert_eq!(scalar_pinv(-4.0), -0.25);
    }

    #[test]
    fn det_by_lu() {
        assert_relative_eq!(det(&m(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap(), 1.0);
        assert_relative_eq!(det(&m(3, 3, &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0])).unwrap(), 6.0);
    }
}
