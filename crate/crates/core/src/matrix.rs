//! Dense row-major matrices and the handful of linear algebra kernels the
//! solvers need: products, Cholesky solves, power iteration and a
//! minimum-norm least-squares solve.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default number of power iterations for [`spectral_norm_sq`].
pub const DEFAULT_POWER_ITERS: usize = 100;
/// Default seed for the power-iteration start vector.
pub const DEFAULT_POWER_SEED: u64 = 42;

/// A dense matrix of `f64` stored in row-major order: `data[r * cols + c]`.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Wraps a row-major buffer. Fails if `data.len() != rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                "DenseMatrix::new",
                format!("{} entries ({rows}x{cols})", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Like [`DenseMatrix::new`] but also rejects NaN and infinite entries.
    /// Use this for anything read from outside the process.
    pub fn from_external(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Self::new(rows, cols, data)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * m);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != m {
                return Err(Error::dims(
                    "DenseMatrix::from_rows",
                    format!("{m} columns"),
                    format!("{} columns in row {i}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, m, data)
    }

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

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Column vector from a slice.
    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero, and a zero-column matrix has no data anyway
        let width = self.cols.max(1);
        self.data.chunks_exact(width).take(self.rows)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Rows selected by index, in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Columns selected by index, in the order given.
    pub fn select_cols(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(indices.iter().map(|&j| row[j]));
        }
        Self {
            rows: self.rows,
            cols: indices.len(),
            data,
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sum of the Euclidean norms of the rows.
    pub fn l21_norm(&self) -> f64 {
        self.row_iter().map(l2_norm).sum()
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.row_iter().map(l2_norm).collect()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += factor * b;
        }
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dims(op, shape_str(self.shape()), shape_str(other.shape())));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[(i, j)] = m[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in self.row_iter() {
            writeln!(f, "  {r:?}")?;
        }
        write!(f, "]")
    }
}

pub(crate) fn shape_str((r, c): (usize, usize)) -> String {
    format!("{r}x{c}")
}

#[inline]
pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Matrix product `a * b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::dims(
            "matmul",
            format!("a.cols == b.rows ({})", a.cols),
            format!("{} x {}", shape_str(a.shape()), shape_str(b.shape())),
        ));
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out);
    Ok(out)
}

/// `out = a * b` without shape checks. Loop order i-k-j keeps the inner
/// loop contiguous for row-major storage.
pub(crate) fn matmul_into(a: &DenseMatrix, b: &DenseMatrix, out: &mut DenseMatrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.shape(), (a.rows, b.cols));
    out.data.iter_mut().for_each(|v| *v = 0.0);
    let m = b.cols;
    for i in 0..a.rows {
        let out_row = &mut out.data[i * m..(i + 1) * m];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * m..(k + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

/// `aᵀ * b` without materialising the transpose.
pub fn t_matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(Error::dims(
            "t_matmul",
            format!("a.rows == b.rows ({})", a.rows),
            format!("{} x {}", shape_str(a.shape()), shape_str(b.shape())),
        ));
    }
    let mut out = DenseMatrix::zeros(a.cols, b.cols);
    let m = b.cols;
    for r in 0..a.rows {
        let b_row = b.row(r);
        for (i, &ari) in a.row(r).iter().enumerate() {
            if ari == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * m..(i + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += ari * bv;
            }
        }
    }
    Ok(out)
}

/// Gram matrix `aᵀa`, exploiting symmetry.
pub fn gram(a: &DenseMatrix) -> DenseMatrix {
    let d = a.cols;
    let mut g = DenseMatrix::zeros(d, d);
    for row in a.row_iter() {
        for i in 0..d {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let g_row = &mut g.data[i * d..(i + 1) * d];
            for j in i..d {
                g_row[j] += ri * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            g.data[i * d + j] = g.data[j * d + i];
        }
    }
    g
}

/// Lower-triangular Cholesky factor `L` with `a = L Lᵀ`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != a.cols {
        return Err(Error::dims("cholesky", "square matrix", shape_str(a.shape())));
    }
    let n = a.rows;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            let (li, lj) = (i * n, j * n);
            for k in 0..j {
                s -= l.data[li + k] * l.data[lj + k];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `a z = b` for symmetric positive definite `a` by Cholesky
/// factorisation. `b` may have several right-hand-side columns.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != a.cols {
        return Err(Error::dims("solve_spd", "square matrix", shape_str(a.shape())));
    }
    if a.rows != b.rows {
        return Err(Error::dims(
            "solve_spd",
            format!("b with {} rows", a.rows),
            shape_str(b.shape()),
        ));
    }
    let l = cholesky(a)?;
    let n = a.rows;
    let mut z = b.clone();
    for c in 0..b.cols {
        // L u = b
        for i in 0..n {
            let mut s = z[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * z[(k, c)];
            }
            z[(i, c)] = s / l[(i, i)];
        }
        // Lᵀ z = u
        for i in (0..n).rev() {
            let mut s = z[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * z[(k, c)];
            }
            z[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(z)
}

/// Power-iteration estimate of `σ_max(a)²`, the largest eigenvalue of `aᵀa`.
///
/// The start vector is drawn from a ChaCha8 stream seeded with `seed`, so the
/// estimate is deterministic. The returned Rayleigh quotient never exceeds
/// the true value.
pub fn spectral_norm_sq(a: &DenseMatrix, iters: usize, seed: u64) -> f64 {
    let (n, d) = a.shape();
    if n == 0 || d == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = l2_norm(&v);
    v.iter_mut().for_each(|x| *x /= norm);

    let mut av = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        apply(a, &v, &mut av);
        estimate = av.iter().map(|x| x * x).sum::<f64>();
        let mut w = vec![0.0; d];
        for (row, &s) in a.row_iter().zip(&av) {
            for (wj, &aij) in w.iter_mut().zip(row) {
                *wj += aij * s;
            }
        }
        let wn = l2_norm(&w);
        if wn == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / wn).collect();
    }
    apply(a, &v, &mut av);
    estimate.max(av.iter().map(|x| x * x).sum::<f64>())
}

fn apply(a: &DenseMatrix, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(a.row_iter()) {
        *o = row.iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

/// Minimum-norm least-squares solution of `a z ≈ b` through the SVD
/// pseudoinverse. Singular values below `rcond * σ_max` are treated as zero.
pub fn lstsq_min_norm(a: &DenseMatrix, b: &DenseMatrix, rcond: f64) -> Result<DenseMatrix> {
    if a.rows != b.rows {
        return Err(Error::dims(
            "lstsq_min_norm",
            format!("b with {} rows", a.rows),
            shape_str(b.shape()),
        ));
    }
    if a.rows == 0 || a.cols == 0 {
        return Ok(DenseMatrix::zeros(a.cols, b.cols));
    }
    let svd = nalgebra::SVD::new(a.to_nalgebra(), true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let cutoff = rcond * sigma_max;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let b_na = b.to_nalgebra();
    // z = V Σ⁺ Uᵀ b
    let mut utb = u.transpose() * b_na;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let inv = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        utb.row_mut(k).scale_mut(inv);
    }
    let z = vt.transpose() * utb;
    Ok(DenseMatrix::from_nalgebra(&z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseMatrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::from_external(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::from_external(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn matmul_identity_zero_and_hand_case() {
        let a = lcg_matrix(3, 4, 1);
        assert_eq!(matmul(&DenseMatrix::identity(3), &a).unwrap(), a);

        let z = DenseMatrix::zeros(2, 2);
        let b = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&z, &b).unwrap(), z);

        let c = matmul(&b, &m(&[&[5.0], &[6.0]])).unwrap();
        assert_eq!(c, m(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let err = matmul(&DenseMatrix::zeros(2, 3), &DenseMatrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn t_matmul_and_gram_agree_with_explicit_transpose() {
        let a = lcg_matrix(7, 4, 3);
        let b = lcg_matrix(7, 2, 4);
        let expected = matmul(&a.transpose(), &b).unwrap();
        let got = t_matmul(&a, &b).unwrap();
        assert!(got.sub(&expected).unwrap().max_abs() < 1e-14);
        let g = gram(&a);
        let g_expected = matmul(&a.transpose(), &a).unwrap();
        assert!(g.sub(&g_expected).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn solve_spd_identity_and_scaled_identity() {
        let b = lcg_matrix(4, 2, 9);
        let z = solve_spd(&DenseMatrix::identity(4), &b).unwrap();
        assert_eq!(z, b);
        let z = solve_spd(&DenseMatrix::identity(4).scaled(2.0), &b).unwrap();
        assert!(z.sub(&b.scaled(0.5)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn solve_spd_random_residual() {
        let mm = lcg_matrix(8, 6, 11);
        let a = gram(&mm).add(&DenseMatrix::identity(6)).unwrap();
        let b = lcg_matrix(6, 3, 12);
        let z = solve_spd(&a, &b).unwrap();
        let resid = matmul(&a, &z).unwrap().sub(&b).unwrap();
        assert!(resid.frobenius() < 1e-10);
    }

    #[test]
    fn solve_spd_reports_pivot() {
        let a = m(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, -1.0]]);
        match solve_spd(&a, &DenseMatrix::zeros(3, 1)) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
        let singular = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            cholesky(&singular),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn spectral_norm_simple_cases() {
        assert!((spectral_norm_sq(&DenseMatrix::identity(3), 100, 42) - 1.0).abs() < 1e-12);
        let d = DenseMatrix::from_diag(&[3.0, 1.0]);
        assert!((spectral_norm_sq(&d, 100, 42) - 9.0).abs() < 1e-9);
        assert_eq!(spectral_norm_sq(&DenseMatrix::zeros(3, 3), 100, 42), 0.0);
        assert_eq!(spectral_norm_sq(&DenseMatrix::zeros(0, 3), 100, 42), 0.0);
    }

    #[test]
    fn spectral_norm_is_deterministic_and_bounded() {
        let a = lcg_matrix(10, 6, 5);
        let s1 = spectral_norm_sq(&a, 100, 7);
        let s2 = spectral_norm_sq(&a, 100, 7);
        assert_eq!(s1.to_bits(), s2.to_bits());
        assert!(s1 <= a.frobenius_sq());
        let exact = nalgebra::SymmetricEigen::new(gram(&a).to_nalgebra())
            .eigenvalues
            .iter()
            .fold(0.0_f64, |m, &e| m.max(e));
        assert!(s1 <= exact * (1.0 + 1e-12));
    }

    #[test]
    fn lstsq_min_norm_underdetermined() {
        // one equation, two unknowns: x + y = 2 → minimum norm (1, 1)
        let a = m(&[&[1.0, 1.0]]);
        let z = lstsq_min_norm(&a, &m(&[&[2.0]]), 1e-10).unwrap();
        assert!((z[(0, 0)] - 1.0).abs() < 1e-12 && (z[(1, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn select_rows_and_cols() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(a.select_rows(&[1]), m(&[&[4.0, 5.0, 6.0]]));
        assert_eq!(a.select_cols(&[2, 0]), m(&[&[3.0, 1.0], &[6.0, 4.0]]));
        assert_eq!(a.transpose().shape(), (3, 2));
        assert!((a.l21_norm() - (14f64.sqrt() + 77f64.sqrt())).abs() < 1e-12);
    }
}
