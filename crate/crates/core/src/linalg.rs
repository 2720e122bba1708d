//! Dense vector and matrix helpers sized for the low-dimensional problems
//! handled here (n is at most a few dozen).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(Error::InvalidArgument("matrix has no rows".into()));
        }
        let ncols = rows[0].len();
        if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidArgument("ragged or empty matrix rows".into()));
        }
        Ok(Self {
            rows: nrows,
            cols: ncols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            axpy(xi, self.row(i), &mut out);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Largest singular value of `a` by power iteration on `AᵀA`.
///
/// Stops once successive estimates agree to `tol` (relative) or after
/// `max_iter` sweeps.
pub fn spectral_norm(a: &Matrix, tol: f64, max_iter: usize) -> f64 {
    let n = a.cols();
    // Deterministic start with no special alignment to coordinate axes.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64 + 1.0).sqrt()).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut sigma_sq = 0.0;
    for _ in 0..max_iter {
        let w = a.transpose_mul_vec(&a.mul_vec(&v));
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw;
        v = w.iter().map(|x| x / nw).collect();
        if (next - sigma_sq).abs() <= tol * next.max(f64::MIN_POSITIVE) {
            sigma_sq = next;
            break;
        }
        sigma_sq = next;
    }
    sigma_sq.sqrt()
}

/// Eigenvalues of a symmetric 3×3 matrix in ascending order, from the roots
/// of its characteristic polynomial (trigonometric form of the cubic).
pub fn symmetric_eigenvalues_3x3(m: &Matrix) -> Result<[f64; 3]> {
    if m.rows() != 3 || !m.is_square() {
        return Err(Error::InvalidArgument("expected a 3x3 matrix".into()));
    }
    if !m.is_symmetric(1e-12 * (1.0 + m.data.iter().fold(0.0_f64, |a, v| a.max(v.abs())))) {
        return Err(Error::InvalidArgument("matrix is not symmetric".into()));
    }
    let (a11, a22, a33) = (m.get(0, 0), m.get(1, 1), m.get(2, 2));
    let (a12, a13, a23) = (m.get(0, 1), m.get(0, 2), m.get(1, 2));
    let off = a12 * a12 + a13 * a13 + a23 * a23;
    if off == 0.0 {
        let mut d = [a11, a22, a33];
        d.sort_by(f64::total_cmp);
        return Ok(d);
    }
    // Shifted characteristic polynomial: B = (A - qI)/p has eigenvalues
    // 2cos(phi + 2πk/3) with cos(3phi) = det(B)/2.
    let q = (a11 + a22 + a33) / 3.0;
    let p2 = (a11 - q).powi(2) + (a22 - q).powi(2) + (a33 - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    let b11 = (a11 - q) / p;
    let b22 = (a22 - q) / p;
    let b33 = (a33 - q) / p;
    let b12 = a12 / p;
    let b13 = a13 / p;
    let b23 = a23 / p;
    let det_b = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13)
        + b13 * (b12 * b23 - b22 * b13);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let two_pi_3 = 2.0 * std::f64::consts::PI / 3.0;
    let e_max = q + 2.0 * p * phi.cos();
    let e_min = q + 2.0 * p * (phi + two_pi_3).cos();
    let e_mid = 3.0 * q - e_max - e_min;
    let mut out = [e_min, e_mid, e_max];
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_m() -> Matrix {
        Matrix::from_rows(&[
            vec![1.0, 0.0, -1.0],
            vec![0.0, 1.5, 0.0],
            vec![-1.0, 0.0, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn eigenvalues_match_closed_form() {
        let e = symmetric_eigenvalues_3x3(&example_m()).unwrap();
        let s5 = 5.0_f64.sqrt();
        assert!((e[0] - (3.0 - s5) / 2.0).abs() < 1e-12);
        assert!((e[1] - 1.5).abs() < 1e-12);
        assert!((e[2] - (3.0 + s5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = Matrix::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        assert_eq!(symmetric_eigenvalues_3x3(&m).unwrap(), [-1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_nonsymmetric() {
        let m = Matrix::from_rows(&[
            vec![1.0, 2.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(symmetric_eigenvalues_3x3(&m).is_err());
    }

    #[test]
    fn spectral_norm_of_symmetric_is_largest_abs_eigenvalue() {
        let s = spectral_norm(&example_m(), 1e-14, 10_000);
        assert!((s - (3.0 + 5.0_f64.sqrt()) / 2.0).abs() < 1e-8);
        assert_eq!(spectral_norm(&Matrix::scalar(-1.0), 1e-14, 100), 1.0);
        assert_eq!(spectral_norm(&Matrix::zeros(2, 2), 1e-14, 100), 0.0);
    }

    #[test]
    fn spectral_norm_nonsymmetric() {
        // [[0, 2], [0, 0]] has singular values {2, 0}.
        let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!((spectral_norm(&a, 1e-14, 1000) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Matrix::from_rows(&[]).is_err());
    }
}
