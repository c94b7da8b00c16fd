#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tglasso::{DenseMatrix, LongitudinalDataset, SolverConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// `Y = X B + noise` with `B` dense Gaussian.
pub fn linear_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, t: usize, noise: f64) -> LongitudinalDataset {
    let x = gaussian(rng, n, d);
    let b = gaussian(rng, d, t);
    let mut y = tglasso::matrix::matmul(&x, &b).unwrap();
    for v in y.as_mut_slice() {
        *v += noise * rng.sample::<f64, _>(StandardNormal) + 1.5;
    }
    LongitudinalDataset::from_matrices(x, y).unwrap()
}

pub fn tight_solver() -> SolverConfig {
    SolverConfig {
        max_iters: 200_000,
        rel_tol: 1e-15,
        ..SolverConfig::default()
    }
}

/// Columns of X centred and divided by their sample sd, columns of Y centred,
/// computed without the library.
pub fn standardized(data: &LongitudinalDataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = DMatrix::from_row_slice(data.n_samples(), data.n_features(), data.x().as_slice());
    let y = DMatrix::from_row_slice(data.n_samples(), data.n_times(), data.y().as_slice());
    let n = x.nrows() as f64;
    let mut xs = x.clone();
    for mut col in xs.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1.0)).sqrt();
        col /= sd;
    }
    let mut yc = y.clone();
    for mut col in yc.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    (xs, yc)
}

pub fn to_dense(m: &DMatrix<f64>) -> DenseMatrix {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    if rows.is_empty() {
        return DenseMatrix::zeros(0, m.ncols());
    }
    DenseMatrix::from_rows(&rows).unwrap()
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// `(XᵀX + λI)⁻¹ XᵀY` by LU.
pub fn ridge_closed_form(xs: &DMatrix<f64>, yc: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let d = xs.ncols();
    let a = xs.transpose() * xs + DMatrix::identity(d, d) * lambda;
    a.lu().solve(&(xs.transpose() * yc)).expect("ridge system is nonsingular")
}

pub fn lasso_objective(xs: &DMatrix<f64>, y: &[f64], w: &[f64], lambda: f64) -> f64 {
    let mut loss = 0.0;
    for i in 0..xs.nrows() {
        let fit: f64 = (0..xs.ncols()).map(|j| xs[(i, j)] * w[j]).sum();
        loss += (y[i] - fit).powi(2);
    }
    loss + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate descent for `‖y − Xw‖² + λ‖w‖₁`, run until no
/// coordinate moves by more than `tol`.
pub fn coordinate_descent_lasso(xs: &DMatrix<f64>, y: &[f64], lambda: f64, tol: f64) -> Vec<f64> {
    let (n, d) = (xs.nrows(), xs.ncols());
    let mut w = vec![0.0; d];
    let mut r = y.to_vec();
    let norms: Vec<f64> = (0..d).map(|j| xs.column(j).norm_squared()).collect();
    for _ in 0..1_000_000 {
        let mut max_step: f64 = 0.0;
        for j in 0..d {
            if norms[j] == 0.0 {
                continue;
            }
            let rho: f64 = (0..n).map(|i| xs[(i, j)] * r[i]).sum::<f64>() + norms[j] * w[j];
            let z = rho.abs() - lambda / 2.0;
            let new = if z > 0.0 { rho.signum() * z / norms[j] } else { 0.0 };
            let delta = new - w[j];
            if delta != 0.0 {
                for i in 0..n {
                    r[i] -= xs[(i, j)] * delta;
                }
                w[j] = new;
            }
            max_step = max_step.max(delta.abs());
        }
        if max_step < tol {
            break;
        }
    }
    w
}

/// Plain ISTA with the exact Lipschitz step, for a fixed iteration count.
pub fn ista_lasso(xs: &DMatrix<f64>, y: &[f64], lambda: f64, iters: usize) -> Vec<f64> {
    let g = xs.transpose() * xs;
    let lip = 2.0 * g.clone().symmetric_eigen().eigenvalues.max();
    let xty = xs.transpose() * DMatrix::from_column_slice(y.len(), 1, y);
    let step = 1.0 / lip;
    let mut w = DMatrix::<f64>::zeros(xs.ncols(), 1);
    for _ in 0..iters {
        let grad = (&g * &w - &xty) * 2.0;
        let v = &w - grad * step;
        w = v.map(|z| z.signum() * (z.abs() - step * lambda).max(0.0));
    }
    w.iter().copied().collect()
}

pub fn frob_diff(a: &DenseMatrix, b: &DMatrix<f64>) -> f64 {
    (to_na(a) - b).norm()
}

/// Runs until the objective stops changing at all, so the iterate settles
/// at machine precision rather than at the square root of it.
pub fn fixed_point_solver() -> SolverConfig {
    SolverConfig {
        max_iters: 20_000,
        rel_tol: f64::MIN_POSITIVE,
        ..SolverConfig::default()
    }
}
