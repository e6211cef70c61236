//! Dense linear algebra helpers shared by the rest of the crate.
//!
//! Everything here works on plain `f64` slices and a small row-major
//! [`Matrix`]. Dimensions in this project are small (a few hundred at most),
//! so the routines favour clarity over blocking or SIMD.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Latent codes, directions and feature vectors.
pub type Vector = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("eigen-iteration did not converge after {0} iterations")]
    ConvergenceFailure(usize),
    #[error("non-finite value produced: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(NumericsError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix whose rows are the given vectors.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NumericsError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(NumericsError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, rhs.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// Computes `selfᵀ · rhs` without materialising the transpose.
    pub fn transpose_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(NumericsError::DimensionMismatch(format!(
                "cannot form ({}x{})ᵀ·({}x{})",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for r in 0..self.rows {
            let rhs_row = rhs.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, rhs_row, out.row_mut(i));
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(NumericsError::DimensionMismatch(format!(
                "cannot apply {}x{} matrix to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    /// `selfᵀ · v`.
    pub fn transpose_matvec(&self, v: &[f64]) -> Result<Vector> {
        if self.rows != v.len() {
            return Err(NumericsError::DimensionMismatch(format!(
                "cannot apply transpose of {}x{} matrix to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &s) in self.row_iter().zip(v) {
            axpy(s, r, &mut out);
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "cannot subtract {}x{} from {}x{}",
                rhs.rows, rhs.cols, self.rows, self.cols
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Adds `value` to every diagonal entry of a square matrix.
    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(a: &[f64], s: f64) -> Vector {
    a.iter().map(|x| x * s).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Returns `a / ‖a‖`, or `None` when the norm is below `min_norm`.
pub fn normalized(a: &[f64], min_norm: f64) -> Option<Vector> {
    let n = norm(a);
    (n >= min_norm && n.is_finite()).then(|| scale(a, 1.0 / n))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(NumericsError::DimensionMismatch(format!(
                "Cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(NumericsError::NotPositiveDefinite { row: j, pivot: diag });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(NumericsError::DimensionMismatch(format!(
                "right-hand side has {} rows, system has {n}",
                b.rows()
            )));
        }
        let mut x = b.clone();
        for c in 0..b.cols() {
            // forward: L y = b
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
            // backward: Lᵀ x = y
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Solves `A X = B` for symmetric positive definite `A` via Cholesky.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(NumericsError::DimensionMismatch(format!(
            "system matrix must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() != b.rows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "system is {}x{} but right-hand side has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    let asym = a.max_asymmetry();
    if asym > 1e-10 {
        return Err(NumericsError::DimensionMismatch(format!(
            "system matrix is not symmetric (max |A_ij - A_ji| = {asym:.3e})"
        )));
    }
    let x = Cholesky::factor(a)?.solve(b)?;
    if !x.is_finite() {
        return Err(NumericsError::NonFinite("solve_spd solution".into()));
    }
    Ok(x)
}

/// Removes the components of `v` along each (orthonormal) basis vector and
/// rescales the residual to unit length.
///
/// Two passes of modified Gram-Schmidt are applied so that the residual dot
/// products stay near machine precision even when `v` is nearly in the span.
pub fn project_orthonormal<B: AsRef<[f64]>>(v: &[f64], basis: &[B]) -> Result<Vector> {
    let mut r = v.to_vec();
    for b in basis {
        if b.as_ref().len() != r.len() {
            return Err(NumericsError::DimensionMismatch(format!(
                "basis vector has length {}, expected {}",
                b.as_ref().len(),
                r.len()
            )));
        }
    }
    for _ in 0..2 {
        for b in basis {
            let b = b.as_ref();
            let c = dot(&r, b);
            axpy(-c, b, &mut r);
        }
    }
    let n = norm(&r);
    if !n.is_finite() {
        return Err(NumericsError::NonFinite("projection residual".into()));
    }
    if n < 1e-12 {
        return Err(NumericsError::DegenerateInput(format!(
            "residual norm {n:.3e} after projection"
        )));
    }
    Ok(scale(&r, 1.0 / n))
}

/// Principal axes of a sample matrix, with their covariance eigenvalues.
#[derive(Debug, Clone)]
pub struct PrincipalComponents {
    /// `k x features`, one unit-norm component per row.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
    pub mean: Vector,
}

pub const PCA_MAX_ITERATIONS: usize = 10_000;
pub const PCA_TOLERANCE: f64 = 1e-10;

/// Sample covariance (divisor `n - 1`) of the rows of `x`, plus the row mean.
pub fn covariance(x: &Matrix) -> Result<(Matrix, Vector)> {
    let n = x.rows();
    if n < 2 {
        return Err(NumericsError::DimensionMismatch(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let p = x.cols();
    let mut mean = vec![0.0; p];
    for r in x.row_iter() {
        axpy(1.0, r, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Matrix::zeros(p, p);
    let mut centered = vec![0.0; p];
    for r in x.row_iter() {
        for ((c, &v), &m) in centered.iter_mut().zip(r).zip(&mean) {
            *c = v - m;
        }
        for i in 0..p {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..p {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..p {
        for j in i..p {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((cov, mean))
}

/// Top-`k` principal components of the rows of `x` (samples by features),
/// found by power iteration on the covariance with Hotelling deflation.
pub fn top_principal_components(x: &Matrix, k: usize) -> Result<PrincipalComponents> {
    top_principal_components_with(x, k, PCA_MAX_ITERATIONS, PCA_TOLERANCE)
}

pub fn top_principal_components_with(
    x: &Matrix,
    k: usize,
    max_iterations: usize,
    tolerance: f64,
) -> Result<PrincipalComponents> {
    if k == 0 || x.rows() < k {
        return Err(NumericsError::DimensionMismatch(format!(
            "need 1 <= k <= samples, got k={k} with {} samples",
            x.rows()
        )));
    }
    if k > x.cols() {
        return Err(NumericsError::DimensionMismatch(format!(
            "cannot take {k} components of {}-dimensional features",
            x.cols()
        )));
    }
    let (cov, mean) = covariance(x)?;
    let p = cov.rows();
    let scale_ref = (0..p).map(|i| cov[(i, i)]).sum::<f64>().max(f64::MIN_POSITIVE);

    let mut deflated = cov.clone();
    let mut components: Vec<Vector> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for c in 0..k {
        // Deterministic start vector, kept away from previous components.
        let start: Vector = (0..p).map(|i| 1.0 + ((i * 7 + c * 13) % 11) as f64 * 0.1).collect();
        let mut v = match project_orthonormal(&start, &components) {
            Ok(v) => v,
            Err(_) => unit_axis_outside(&components, p)?,
        };
        let mut converged = false;
        for _ in 0..max_iterations {
            let mut w = deflated.matvec(&v)?;
            // Keep the iterate exactly in the orthogonal complement of the
            // components already extracted.
            for prev in &components {
                let d = dot(&w, prev);
                axpy(-d, prev, &mut w);
            }
            let lambda = dot(&v, &w);
            // Eigen-residual of the current iterate.
            let residual = norm(&sub(&w, &scale(&v, lambda)));
            if residual <= tolerance * scale_ref {
                converged = true;
                break;
            }
            let wn = norm(&w);
            if wn <= 1e-300 {
                converged = true;
                break;
            }
            v = scale(&w, 1.0 / wn);
        }
        if !converged {
            return Err(NumericsError::ConvergenceFailure(max_iterations));
        }
        // Rayleigh quotient on the undeflated covariance.
        let cv = cov.matvec(&v)?;
        let lambda = dot(&v, &cv).max(0.0);
        // Sign convention: largest-magnitude coordinate positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..p {
            for j in 0..p {
                deflated[(i, j)] -= lambda * v[i] * v[j];
            }
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    Ok(PrincipalComponents {
        components: Matrix::from_rows(&components)?,
        eigenvalues,
        mean,
    })
}

fn unit_axis_outside(basis: &[Vector], p: usize) -> Result<Vector> {
    for i in 0..p {
        let mut e = vec![0.0; p];
        e[i] = 1.0;
        if let Ok(v) = project_orthonormal(&e, basis) {
            return Ok(v);
        }
    }
    Err(NumericsError::DegenerateInput(
        "no direction left outside the extracted components".into(),
    ))
}

/// Central-difference gradient `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h`.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], h: f64) -> Vector
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Least-squares solution of `X B ≈ Y` through the normal equations, with an
/// optional ridge term. Used for pulling feature-space axes back to latent
/// space.
pub fn least_squares(x: &Matrix, y: &Matrix, ridge: f64) -> Result<Matrix> {
    let mut gram = x.transpose_matmul(x)?;
    gram.add_diagonal(ridge);
    let rhs = x.transpose_matmul(y)?;
    solve_spd(&gram, &rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let b = Matrix::from_rows(&[[1.0, -2.0], [3.0, 0.5], [7.0, 8.0]]).unwrap();
        let x = solve_spd(&Matrix::identity(3), &b).unwrap();
        assert_close(x.as_slice(), b.as_slice(), 1e-15);
    }

    #[test]
    fn solve_diagonal() {
        let a = Matrix::from_diagonal(&[4.0, 9.0]);
        let x = solve_spd(&a, &Matrix::column_vector(&[1.0, 1.0])).unwrap();
        assert_close(x.as_slice(), &[0.25, 1.0 / 9.0], 1e-15);
    }

    #[test]
    fn solve_two_by_two_by_substitution() {
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let b = Matrix::column_vector(&[3.0, 3.0]);
        let x = solve_spd(&a, &b).unwrap();
        assert_close(x.as_slice(), &[1.0, 1.0], 1e-14);
        let back = a.matmul(&x).unwrap();
        assert_close(back.as_slice(), b.as_slice(), 1e-14);
    }

    #[test]
    fn solve_rejects_indefinite_and_bad_shapes() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let b = Matrix::column_vector(&[1.0, 1.0]);
        assert!(matches!(
            solve_spd(&a, &b),
            Err(NumericsError::NotPositiveDefinite { .. })
        ));
        let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_spd(&singular, &b),
            Err(NumericsError::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            solve_spd(&Matrix::identity(3), &b),
            Err(NumericsError::DimensionMismatch(_))
        ));
        let asym = Matrix::from_rows(&[[2.0, 1.0], [0.0, 2.0]]).unwrap();
        assert!(matches!(
            solve_spd(&asym, &b),
            Err(NumericsError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn project_axis_aligned() {
        let s = 1.0 / 2f64.sqrt();
        let out = project_orthonormal(&[s, s, 0.0], &[[1.0, 0.0, 0.0]]).unwrap();
        assert_close(&out, &[0.0, 1.0, 0.0], 1e-15);
    }

    #[test]
    fn project_empty_basis_keeps_unit_vector() {
        let v = [0.6, 0.0, 0.8];
        let out = project_orthonormal::<Vector>(&v, &[]).unwrap();
        assert_close(&out, &v, 1e-15);
    }

    #[test]
    fn project_in_span_is_degenerate() {
        let err = project_orthonormal(&[2.0, 0.0], &[[1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, NumericsError::DegenerateInput(_)));
    }

    #[test]
    fn pca_rank_one_line() {
        let dir = [0.6, 0.8];
        let offset = [5.0, -3.0];
        let rows: Vec<Vector> = [-2.0, -1.0, 0.5, 1.0, 3.0]
            .iter()
            .map(|t| vec![offset[0] + t * dir[0], offset[1] + t * dir[1]])
            .collect();
        let pcs = top_principal_components(&Matrix::from_rows(&rows).unwrap(), 1).unwrap();
        let c = pcs.components.row(0);
        assert!((dot(c, &dir).abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pca_antipodal_pair() {
        let x = Matrix::from_rows(&[[1.0, 1.0, 0.0], [-1.0, -1.0, 0.0]]).unwrap();
        let pcs = top_principal_components(&x, 1).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((dot(pcs.components.row(0), &[s, s, 0.0]).abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pca_rejects_too_many_components() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(top_principal_components(&x, 3).is_err());
        assert!(top_principal_components(&x, 0).is_err());
    }

    #[test]
    fn finite_difference_of_quadratic() {
        let g = finite_difference_gradient(|x| dot(x, x), &[1.0, 2.0], 1e-5);
        assert_close(&g, &[2.0, 4.0], 1e-6);
        let g = finite_difference_gradient(|_| 3.5, &[1.0, 2.0, -1.0], 1e-5);
        assert_close(&g, &[0.0, 0.0, 0.0], 0.0);
    }

    #[test]
    fn least_squares_recovers_exact_fit() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let b_true = Matrix::from_rows(&[[2.0], [-1.0]]).unwrap();
        let y = x.matmul(&b_true).unwrap();
        let b = least_squares(&x, &y, 0.0).unwrap();
        assert_close(b.as_slice(), b_true.as_slice(), 1e-12);
    }
}
