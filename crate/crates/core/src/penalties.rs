//! The temporal group LASSO objective
//!
//! ```text
//! F(W) = ‖Y − XW‖²_F + λ1‖W‖²_F + λ2‖R Wᵀ‖²_F + λ3‖W‖_{2,1}
//! ```
//!
//! split into its smooth part (the first three terms) and the row-wise
//! group penalty handled through its proximal map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{l2_norm, matmul, shape_str, DenseMatrix};

/// `(T−1)×T` first-difference operator with optional per-difference weights.
///
/// Row `i` holds `weights[i]` at column `i` and `−weights[i]` at column
/// `i + 1`. With a single time point the operator is empty (0×1) and the
/// temporal penalty vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalDifferenceOperator {
    t: usize,
    weights: Vec<f64>,
    matrix: DenseMatrix,
}

impl TemporalDifferenceOperator {
    pub fn n_times(&self) -> usize {
        self.t
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// `RᵀR`, a symmetric tridiagonal `T×T` matrix.
    pub fn gram(&self) -> DenseMatrix {
        let t = self.t;
        let mut g = DenseMatrix::zeros(t, t);
        for (i, &w) in self.weights.iter().enumerate() {
            let w2 = w * w;
            g[(i, i)] += w2;
            g[(i + 1, i + 1)] += w2;
            g[(i, i + 1)] -= w2;
            g[(i + 1, i)] -= w2;
        }
        g
    }

    /// `‖R Wᵀ‖²_F` for a coefficient matrix with `T` columns.
    pub fn penalty(&self, w: &DenseMatrix) -> Result<f64> {
        if w.cols() != self.t {
            return Err(Error::dims(
                "temporal penalty",
                format!("W with {} columns", self.t),
                shape_str(w.shape()),
            ));
        }
        if self.t < 2 {
            return Ok(0.0);
        }
        Ok(matmul(&self.matrix, &w.transpose())?.frobenius_sq())
    }
}

/// Builds the temporal difference operator for `t` time points.
pub fn build_difference_operator(t: usize, weights: Option<&[f64]>) -> Result<TemporalDifferenceOperator> {
    if t == 0 {
        return Err(Error::InvalidInput("difference operator needs t >= 1".into()));
    }
    let weights = match weights {
        Some(w) => {
            if w.len() != t - 1 {
                return Err(Error::InvalidInput(format!(
                    "expected {} temporal weights for {t} time points, got {}",
                    t - 1,
                    w.len()
                )));
            }
            if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "temporal weights must be positive and finite, got {bad}"
                )));
            }
            w.to_vec()
        }
        None => vec![1.0; t - 1],
    };
    let mut matrix = DenseMatrix::zeros(t - 1, t);
    for (i, &w) in weights.iter().enumerate() {
        matrix[(i, i)] = w;
        matrix[(i, i + 1)] = -w;
    }
    Ok(TemporalDifferenceOperator { t, weights, matrix })
}

/// Hyperparameters of the temporal group LASSO. The default is unpenalized.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Frobenius (ridge) weight.
    pub lambda1: f64,
    /// Temporal smoothness weight.
    pub lambda2: f64,
    /// L2,1 (row sparsity) weight.
    pub lambda3: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temporal_weights: Option<Vec<f64>>,
}

impl PenaltyConfig {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            lambda3,
            temporal_weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn all_zero(&self) -> bool {
        self.lambda1 == 0.0 && self.lambda2 == 0.0 && self.lambda3 == 0.0
    }
}

fn check_dims(
    op: &'static str,
    w: &DenseMatrix,
    x: &DenseMatrix,
    y: &DenseMatrix,
    r: &TemporalDifferenceOperator,
) -> Result<()> {
    let (n, d) = x.shape();
    let t = y.cols();
    if y.rows() != n || w.shape() != (d, t) || r.n_times() != t {
        return Err(Error::dims(
            op,
            format!("X n×d, Y n×T, W d×T, R for T (X is {})", shape_str(x.shape())),
            format!(
                "Y {}, W {}, R for T={}",
                shape_str(y.shape()),
                shape_str(w.shape()),
                r.n_times()
            ),
        ));
    }
    Ok(())
}

/// Full objective value.
pub fn objective(
    w: &DenseMatrix,
    x: &DenseMatrix,
    y: &DenseMatrix,
    r: &TemporalDifferenceOperator,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    check_dims("objective", w, x, y, r)?;
    let loss = y.sub(&matmul(x, w)?)?.frobenius_sq();
    let mut value = loss;
    if cfg.lambda1 != 0.0 {
        value += cfg.lambda1 * w.frobenius_sq();
    }
    if cfg.lambda2 != 0.0 {
        value += cfg.lambda2 * r.penalty(w)?;
    }
    if cfg.lambda3 != 0.0 {
        value += cfg.lambda3 * w.l21_norm();
    }
    Ok(value)
}

/// `W · G` for a small symmetric `T×T` matrix `G` (typically `RᵀR`).
pub(crate) fn right_multiply(w: &DenseMatrix, g: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(w.rows(), g.cols());
    crate::matrix::matmul_into(w, g, &mut out);
    out
}

/// Gradient of the smooth part:
/// `2Xᵀ(XW − Y) + 2λ1 W + 2λ2 W (RᵀR)`.
pub fn smooth_gradient(
    w: &DenseMatrix,
    x: &DenseMatrix,
    y: &DenseMatrix,
    r: &TemporalDifferenceOperator,
    cfg: &PenaltyConfig,
) -> Result<DenseMatrix> {
    check_dims("smooth_gradient", w, x, y, r)?;
    let resid = matmul(x, w)?.sub(y)?;
    let mut grad = crate::matrix::t_matmul(x, &resid)?.scaled(2.0);
    if cfg.lambda1 != 0.0 {
        grad.axpy(2.0 * cfg.lambda1, w);
    }
    if cfg.lambda2 != 0.0 && r.n_times() > 1 {
        grad.axpy(2.0 * cfg.lambda2, &right_multiply(w, &r.gram()));
    }
    Ok(grad)
}

/// Row-wise block soft-thresholding, the proximal map of
/// `threshold · ‖·‖_{2,1}`.
pub fn prox_l21(v: &DenseMatrix, threshold: f64) -> DenseMatrix {
    debug_assert!(threshold >= 0.0);
    let mut out = v.clone();
    for i in 0..out.rows() {
        shrink_block(out.row_mut(i), threshold);
    }
    out
}

/// Element-wise soft-thresholding, the proximal map of `threshold · ‖·‖₁`.
pub fn prox_l1(v: &DenseMatrix, threshold: f64) -> DenseMatrix {
    let mut out = v.clone();
    out.as_mut_slice()
        .iter_mut()
        .for_each(|x| *x = soft_threshold(*x, threshold));
    out
}

#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Scales `block` by `max(0, 1 − threshold/‖block‖)`; zero stays zero.
pub(crate) fn shrink_block(block: &mut [f64], threshold: f64) {
    if let [x] = block {
        *x = soft_threshold(*x, threshold);
        return;
    }
    let norm = l2_norm(block);
    if norm <= threshold || norm == 0.0 {
        block.iter_mut().for_each(|x| *x = 0.0);
    } else {
        let scale = 1.0 - threshold / norm;
        block.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Group-wise block soft-thresholding for a single coefficient column.
/// Each entry of `groups` lists the row indices of one group.
pub fn prox_group(v: &DenseMatrix, groups: &[Vec<usize>], threshold: f64) -> DenseMatrix {
    let mut out = v.clone();
    let mut buf = Vec::new();
    for group in groups {
        for c in 0..v.cols() {
            buf.clear();
            buf.extend(group.iter().map(|&i| v[(i, c)]));
            shrink_block(&mut buf, threshold);
            for (&i, &b) in group.iter().zip(&buf) {
                out[(i, c)] = b;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn difference_operator_shapes() {
        let r3 = build_difference_operator(3, None).unwrap();
        assert_eq!(
            r3.matrix().to_rows(),
            vec![vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0]]
        );
        let r2 = build_difference_operator(2, None).unwrap();
        assert_eq!(r2.matrix().to_rows(), vec![vec![1.0, -1.0]]);
        let rw = build_difference_operator(3, Some(&[2.0, 0.5])).unwrap();
        assert_eq!(
            rw.matrix().to_rows(),
            vec![vec![2.0, -2.0, 0.0], vec![0.0, 0.5, -0.5]]
        );
        let r1 = build_difference_operator(1, None).unwrap();
        assert_eq!(r1.matrix().shape(), (0, 1));
        assert_eq!(r1.penalty(&DenseMatrix::identity(1)).unwrap(), 0.0);
    }

    #[test]
    fn difference_operator_rejects_bad_weights() {
        assert!(build_difference_operator(3, Some(&[1.0])).is_err());
        assert!(build_difference_operator(3, Some(&[1.0, 0.0])).is_err());
        assert!(build_difference_operator(3, Some(&[1.0, -2.0])).is_err());
        assert!(build_difference_operator(0, None).is_err());
    }

    #[test]
    fn gram_matches_explicit_product() {
        let r = build_difference_operator(5, Some(&[1.0, 2.0, 0.5, 3.0])).unwrap();
        let explicit = matmul(&r.matrix().transpose(), r.matrix()).unwrap();
        assert!(r.gram().sub(&explicit).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn objective_zero_and_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = rand_matrix(&mut rng, 3, 3);
        let x = rand_matrix(&mut rng, 3, 4);
        let r = build_difference_operator(3, None).unwrap();
        let cfg = PenaltyConfig::new(1.0, 2.0, 3.0);
        let f0 = objective(&DenseMatrix::zeros(4, 3), &x, &y, &r, &cfg).unwrap();
        assert!((f0 - y.frobenius_sq()).abs() < 1e-15);

        let f = objective(&y, &DenseMatrix::identity(3), &y, &r, &PenaltyConfig::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn objective_matches_term_by_term_evaluation() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [-0.5, 0.25]]).unwrap();
        let y = DenseMatrix::from_rows(&[[0.3, -1.0], [2.0, 0.5]]).unwrap();
        let w = DenseMatrix::from_rows(&[[0.7, -0.2], [1.5, 0.4]]).unwrap();
        let r = build_difference_operator(2, None).unwrap();
        let cfg = PenaltyConfig::new(1.0, 1.0, 1.0);

        // written out by hand
        let mut loss = 0.0;
        for i in 0..2 {
            for t in 0..2 {
                let pred = x[(i, 0)] * w[(0, t)] + x[(i, 1)] * w[(1, t)];
                loss += (y[(i, t)] - pred).powi(2);
            }
        }
        let ridge: f64 = w.as_slice().iter().map(|v| v * v).sum();
        let temporal = (w[(0, 0)] - w[(0, 1)]).powi(2) + (w[(1, 0)] - w[(1, 1)]).powi(2);
        let l21 = (w[(0, 0)].powi(2) + w[(0, 1)].powi(2)).sqrt()
            + (w[(1, 0)].powi(2) + w[(1, 1)].powi(2)).sqrt();
        let expected = loss + ridge + temporal + l21;
        let got = objective(&w, &x, &y, &r, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn objective_rejects_bad_dims() {
        let r = build_difference_operator(2, None).unwrap();
        let cfg = PenaltyConfig::new(0.0, 0.0, 0.0);
        let err = objective(
            &DenseMatrix::zeros(3, 2),
            &DenseMatrix::zeros(4, 2),
            &DenseMatrix::zeros(4, 2),
            &r,
            &cfg,
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        assert!(smooth_gradient(
            &DenseMatrix::zeros(2, 3),
            &DenseMatrix::zeros(4, 2),
            &DenseMatrix::zeros(4, 3),
            &r,
            &cfg
        )
        .is_err());
    }

    #[test]
    fn gradient_zero_residual_and_pure_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = rand_matrix(&mut rng, 3, 2);
        let x = rand_matrix(&mut rng, 5, 3);
        let y = matmul(&x, &w).unwrap();
        let r = build_difference_operator(2, None).unwrap();
        let g = smooth_gradient(&w, &x, &y, &r, &PenaltyConfig::new(0.0, 0.0, 5.0)).unwrap();
        assert!(g.max_abs() < 1e-14);

        let g = smooth_gradient(
            &w,
            &DenseMatrix::zeros(5, 3),
            &DenseMatrix::zeros(5, 2),
            &r,
            &PenaltyConfig::new(0.7, 0.0, 0.0),
        )
        .unwrap();
        assert!(g.sub(&w.scaled(1.4)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, d, t) = (5, 4, 3);
        let x = rand_matrix(&mut rng, n, d);
        let y = rand_matrix(&mut rng, n, t);
        let w = rand_matrix(&mut rng, d, t);
        let r = build_difference_operator(t, Some(&[1.0, 2.0])).unwrap();
        let cfg = PenaltyConfig::new(0.3, 0.8, 0.0);
        let g = smooth_gradient(&w, &x, &y, &r, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..d {
            for c in 0..t {
                let mut wp = w.clone();
                wp[(i, c)] += h;
                let mut wm = w.clone();
                wm[(i, c)] -= h;
                let fd = (objective(&wp, &x, &y, &r, &cfg).unwrap()
                    - objective(&wm, &x, &y, &r, &cfg).unwrap())
                    / (2.0 * h);
                let rel = (fd - g[(i, c)]).abs() / g[(i, c)].abs().max(1.0);
                assert!(rel < 1e-5, "({i},{c}): fd {fd} vs {}", g[(i, c)]);
            }
        }
    }

    #[test]
    fn prox_examples() {
        let v = DenseMatrix::from_rows(&[[3.0, 4.0], [0.0, 0.0], [-1.0, 2.0]]).unwrap();
        assert_eq!(prox_l21(&v, 0.0), v);
        let p = prox_l21(&DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap(), 5.0);
        assert_eq!(p.as_slice(), &[0.0, 0.0]);
        let p = prox_l21(&DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap(), 2.5);
        assert!((p[(0, 0)] - 1.5).abs() < 1e-15 && (p[(0, 1)] - 2.0).abs() < 1e-15);
        // zero row maps to itself
        assert_eq!(prox_l21(&v, 1.0).row(1), &[0.0, 0.0]);
    }

    #[test]
    fn prox_l21_is_minimizer_over_perturbation_grid() {
        let v = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let tau = 2.5;
        let h = |z: &DenseMatrix| 0.5 * z.sub(&v).unwrap().frobenius_sq() + tau * z.l21_norm();
        let z = prox_l21(&v, tau);
        let base = h(&z);
        for a in -10..=10 {
            for b in -10..=10 {
                if a == 0 && b == 0 {
                    continue;
                }
                let mut zp = z.clone();
                zp[(0, 0)] += a as f64 * 1e-3;
                zp[(0, 1)] += b as f64 * 1e-3;
                assert!(h(&zp) >= base - 1e-14);
            }
        }
    }

    #[test]
    fn prox_l1_and_group() {
        let v = DenseMatrix::column_vector(&[3.0, -0.5, -2.0]);
        assert_eq!(prox_l1(&v, 1.0).as_slice(), &[2.0, 0.0, -1.0]);
        // singleton groups reproduce element-wise soft thresholding
        let groups = vec![vec![0], vec![1], vec![2]];
        assert_eq!(prox_group(&v, &groups, 1.0), prox_l1(&v, 1.0));
        let all = vec![vec![0, 1, 2]];
        assert_eq!(prox_group(&v, &all, 100.0).as_slice(), &[0.0; 3]);
    }

    #[test]
    fn constant_rows_have_zero_temporal_penalty() {
        let w = DenseMatrix::from_rows(&[[2.0, 2.0, 2.0, 2.0], [-1.0, -1.0, -1.0, -1.0]]).unwrap();
        let r = build_difference_operator(4, Some(&[1.0, 3.0, 0.2])).unwrap();
        assert_eq!(r.penalty(&w).unwrap(), 0.0);
    }

    #[test]
    fn penalty_config_validation() {
        assert!(PenaltyConfig::new(0.0, 1.0, 2.0).validate().is_ok());
        assert!(PenaltyConfig::new(-1.0, 1.0, 2.0).validate().is_err());
        assert!(PenaltyConfig::new(0.0, f64::NAN, 2.0).validate().is_err());
        assert!(PenaltyConfig::new(0.0, 0.0, f64::INFINITY).validate().is_err());
    }
}
