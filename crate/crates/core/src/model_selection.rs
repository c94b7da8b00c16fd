//! K-fold cross-validated grid search over `(λ1, λ2, λ3)` and the per-time
//! point evaluation metrics (RMSE, R², response mean and sd).

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{standardize, LongitudinalDataset};
use crate::error::{Error, Result};
use crate::matrix::{shape_str, t_matmul};
use crate::penalties::PenaltyConfig;
use crate::solvers::{fit_ridge, fit_tgl, predict, FitResult, SolverConfig};

/// Shuffled assignment of `n` samples to `k` folds. Fold sizes differ by at
/// most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::InvalidInput(format!(
            "k_folds must satisfy 2 <= k <= n (k = {k}, n = {n})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// Candidate penalty weights. Each list must be nonempty, nondecreasing,
/// finite and nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
    pub lambda3_values: Vec<f64>,
    pub k_folds: usize,
    pub seed: u64,
    /// Temporal weights passed through to every fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal_weights: Option<Vec<f64>>,
}

impl CvGrid {
    pub fn new(lambda1: Vec<f64>, lambda2: Vec<f64>, lambda3: Vec<f64>, k_folds: usize, seed: u64) -> Self {
        Self {
            lambda1_values: lambda1,
            lambda2_values: lambda2,
            lambda3_values: lambda3,
            k_folds,
            seed,
            temporal_weights: None,
        }
    }

    /// Log-spaced grid of `per_axis` values per penalty over
    /// `[1e-3, 1e2] · ‖XᵀY‖_∞`, computed on the standardized data.
    pub fn default_for(data: &LongitudinalDataset, per_axis: usize, k_folds: usize, seed: u64) -> Result<Self> {
        let scale = default_lambda_scale(data)?;
        let values = log_space(1e-3 * scale, 1e2 * scale, per_axis);
        Ok(Self::new(values.clone(), values.clone(), values, k_folds, seed))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1_values", &self.lambda1_values),
            ("lambda2_values", &self.lambda2_values),
            ("lambda3_values", &self.lambda3_values),
        ] {
            if v.is_empty() {
                return Err(Error::InvalidInput(format!("{name} is empty")));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0")));
            }
            if v.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidInput(format!("{name} must be ascending")));
            }
        }
        if self.k_folds < 2 {
            return Err(Error::InvalidInput(format!("k_folds must be >= 2, got {}", self.k_folds)));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.lambda1_values.len() * self.lambda2_values.len() * self.lambda3_values.len()
    }

    /// Cell coordinates in row-major order (λ1 slowest, λ3 fastest).
    fn cells(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::with_capacity(self.n_cells());
        for i in 0..self.lambda1_values.len() {
            for j in 0..self.lambda2_values.len() {
                for k in 0..self.lambda3_values.len() {
                    out.push([i, j, k]);
                }
            }
        }
        out
    }

    fn config(&self, [i, j, k]: [usize; 3]) -> PenaltyConfig {
        PenaltyConfig {
            lambda1: self.lambda1_values[i],
            lambda2: self.lambda2_values[j],
            lambda3: self.lambda3_values[k],
            temporal_weights: self.temporal_weights.clone(),
        }
    }
}

/// `‖XᵀY‖_∞` on standardized data: the penalty scale for the unnormalized
/// squared loss.
pub fn default_lambda_scale(data: &LongitudinalDataset) -> Result<f64> {
    let (s, _) = standardize(data)?;
    let scale = t_matmul(s.x(), s.y())?.max_abs();
    Ok(if scale > 0.0 { scale } else { 1.0 })
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub index: [usize; 3],
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Mean over folds of the time-averaged validation RMSE.
    pub mean_rmse: f64,
    /// Standard error of the fold scores.
    pub se_rmse: f64,
    /// `fold_time_rmse[f][t]`: validation RMSE of fold `f` at time `t`.
    pub fold_time_rmse: Vec<Vec<f64>>,
    pub converged_folds: usize,
    /// False when any fold failed to fit or converge; such cells are
    /// excluded from the selection.
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: CvGrid,
    pub cells: Vec<CvCell>,
    pub best_index: [usize; 3],
    pub best_config: PenaltyConfig,
    pub best_mean_rmse: f64,
    pub fold_assignments: Vec<usize>,
}

impl CvReport {
    pub fn best_cell(&self) -> &CvCell {
        self.cells
            .iter()
            .find(|c| c.index == self.best_index)
            .expect("best cell is part of the report")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda1,lambda2,lambda3,mean_rmse,se_rmse,converged_folds\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.lambda1, c.lambda2, c.lambda3, c.mean_rmse, c.se_rmse, c.converged_folds
            ));
        }
        out
    }
}

struct FoldOutcome {
    time_rmse: Vec<f64>,
    converged: bool,
}

fn fold_splits(data: &LongitudinalDataset, folds: &[usize], k: usize) -> Vec<(LongitudinalDataset, LongitudinalDataset)> {
    (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            let valid: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
            (data.subset(&train), data.subset(&valid))
        })
        .collect()
}

fn score_fold(
    fit: Result<FitResult>,
    valid: &LongitudinalDataset,
) -> FoldOutcome {
    match fit.and_then(|m| {
        let converged = m.converged;
        evaluate(&m, valid).map(|e| (e, converged))
    }) {
        Ok((metrics, converged)) => FoldOutcome {
            time_rmse: metrics.rmse,
            converged,
        },
        Err(e) => {
            warn!("cross-validation fit failed: {e}");
            FoldOutcome {
                time_rmse: vec![f64::NAN; valid.n_times()],
                converged: false,
            }
        }
    }
}

fn summarize(index: [usize; 3], cfg: &PenaltyConfig, outcomes: Vec<FoldOutcome>) -> CvCell {
    let k = outcomes.len() as f64;
    let scores: Vec<f64> = outcomes
        .iter()
        .map(|o| o.time_rmse.iter().sum::<f64>() / o.time_rmse.len() as f64)
        .collect();
    let mean = scores.iter().sum::<f64>() / k;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let converged_folds = outcomes.iter().filter(|o| o.converged).count();
    CvCell {
        index,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        lambda3: cfg.lambda3,
        mean_rmse: mean,
        se_rmse: (var / k).sqrt(),
        converged_folds,
        valid: converged_folds == outcomes.len() && mean.is_finite(),
        fold_time_rmse: outcomes.into_iter().map(|o| o.time_rmse).collect(),
    }
}

/// Picks the valid cell with the smallest mean RMSE. Exact ties go to the
/// largest λ3, then λ2, then λ1, then the earliest cell.
fn select_best(cells: &[CvCell]) -> Option<&CvCell> {
    let mut best: Option<&CvCell> = None;
    for c in cells.iter().filter(|c| c.valid) {
        best = match best {
            None => Some(c),
            Some(b) => {
                let better = c.mean_rmse < b.mean_rmse
                    || (c.mean_rmse == b.mean_rmse
                        && (c.lambda3, c.lambda2, c.lambda1) > (b.lambda3, b.lambda2, b.lambda1));
                Some(if better { c } else { b })
            }
        };
    }
    best
}

/// K-fold cross-validation of the temporal group LASSO over every grid cell.
///
/// Cells and folds are evaluated in parallel; the report depends only on the
/// inputs and the grid seed.
pub fn grid_search_cv(data: &LongitudinalDataset, grid: &CvGrid, solver: &SolverConfig) -> Result<CvReport> {
    grid.validate()?;
    let folds = kfold_split(data.n_samples(), grid.k_folds, grid.seed)?;
    let splits = fold_splits(data, &folds, grid.k_folds);
    let cells = grid.cells();

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.k_folds).map(move |f| (c, f)))
        .collect();
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (train, valid) = &splits[f];
            score_fold(fit_tgl(train, &grid.config(cells[c]), solver), valid)
        })
        .collect();

    let mut outcomes = outcomes.into_iter();
    let summaries: Vec<CvCell> = cells
        .iter()
        .map(|&idx| {
            let per_fold: Vec<FoldOutcome> = outcomes.by_ref().take(grid.k_folds).collect();
            summarize(idx, &grid.config(idx), per_fold)
        })
        .collect();

    for c in summaries.iter().filter(|c| !c.valid) {
        warn!(
            "grid cell (λ1={}, λ2={}, λ3={}) converged in {}/{} folds; excluded",
            c.lambda1, c.lambda2, c.lambda3, c.converged_folds, grid.k_folds
        );
    }
    let best = select_best(&summaries).ok_or(Error::AllCellsFailed)?;
    Ok(CvReport {
        grid: grid.clone(),
        best_index: best.index,
        best_config: grid.config(best.index),
        best_mean_rmse: best.mean_rmse,
        cells: summaries,
        fold_assignments: folds,
    })
}

/// Cross-validated ridge over `lambda_values`, using the same fold
/// assignment and scoring as [`grid_search_cv`]. Returns the report of a
/// one-axis grid (λ2 = λ3 = 0).
pub fn ridge_cv(data: &LongitudinalDataset, lambda_values: &[f64], k_folds: usize, seed: u64) -> Result<CvReport> {
    let grid = CvGrid::new(lambda_values.to_vec(), vec![0.0], vec![0.0], k_folds, seed);
    grid.validate()?;
    if lambda_values.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidInput("ridge_cv needs strictly positive lambdas".into()));
    }
    let folds = kfold_split(data.n_samples(), k_folds, seed)?;
    let splits = fold_splits(data, &folds, k_folds);
    let cells = grid.cells();
    let summaries: Vec<CvCell> = cells
        .par_iter()
        .map(|&idx| {
            let cfg = grid.config(idx);
            let per_fold = splits
                .iter()
                .map(|(train, valid)| score_fold(fit_ridge(train, cfg.lambda1), valid))
                .collect();
            summarize(idx, &cfg, per_fold)
        })
        .collect();
    let best = select_best(&summaries).ok_or(Error::AllCellsFailed)?;
    Ok(CvReport {
        grid: grid.clone(),
        best_index: best.index,
        best_config: grid.config(best.index),
        best_mean_rmse: best.mean_rmse,
        cells: summaries,
        fold_assignments: folds,
    })
}

/// Per-time-point test metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMetrics {
    pub time_labels: Vec<f64>,
    pub rmse: Vec<f64>,
    /// `1 − SSE/SST` with SST taken around the evaluation-set mean. NaN
    /// when the responses are constant and the predictions are not exact.
    pub r2: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: Vec<f64>,
}

impl EvaluationMetrics {
    pub fn mean_r2(&self) -> f64 {
        self.r2.iter().sum::<f64>() / self.r2.len() as f64
    }

    pub fn mean_rmse(&self) -> f64 {
        self.rmse.iter().sum::<f64>() / self.rmse.len() as f64
    }

    /// `hour,mean,sd,rmse,r2`, one row per time point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("hour,mean,sd,rmse,r2\n");
        for t in 0..self.rmse.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.time_labels[t], self.mean[t], self.sd[t], self.rmse[t], self.r2[t]
            ));
        }
        out
    }
}

/// Metrics of `predictions` against observed `y`, column by column.
pub fn metrics_from_predictions(
    y: &crate::matrix::DenseMatrix,
    predictions: &crate::matrix::DenseMatrix,
    time_labels: &[f64],
) -> Result<EvaluationMetrics> {
    if y.shape() != predictions.shape() {
        return Err(Error::dims("evaluate", shape_str(y.shape()), shape_str(predictions.shape())));
    }
    let n = y.rows() as f64;
    let t = y.cols();
    let mut m = EvaluationMetrics {
        time_labels: time_labels.to_vec(),
        rmse: vec![0.0; t],
        r2: vec![0.0; t],
        mean: vec![0.0; t],
        sd: vec![0.0; t],
    };
    for c in 0..t {
        let obs = y.column(c);
        let pred = predictions.column(c);
        let mean = obs.iter().sum::<f64>() / n;
        let sse: f64 = obs.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
        let sst: f64 = obs.iter().map(|a| (a - mean).powi(2)).sum();
        m.mean[c] = mean;
        m.sd[c] = if y.rows() > 1 { (sst / (n - 1.0)).sqrt() } else { 0.0 };
        m.rmse[c] = (sse / n).sqrt();
        m.r2[c] = if sst > 0.0 {
            1.0 - sse / sst
        } else if sse == 0.0 {
            1.0
        } else {
            f64::NAN
        };
    }
    Ok(m)
}

/// Evaluates a fitted model on a held-out dataset.
pub fn evaluate(model: &FitResult, test: &LongitudinalDataset) -> Result<EvaluationMetrics> {
    if test.n_features() != model.n_features() || test.n_times() != model.n_times() {
        return Err(Error::dims(
            "evaluate",
            format!("{} features and {} time points", model.n_features(), model.n_times()),
            format!("{} features and {} time points", test.n_features(), test.n_times()),
        ));
    }
    let pred = predict(model, test.x())?;
    metrics_from_predictions(test.y(), &pred, test.time_labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;

    #[test]
    fn kfold_sizes() {
        let f = kfold_split(4, 2, 0).unwrap();
        assert_eq!(f.iter().filter(|&&x| x == 0).count(), 2);
        let f = kfold_split(5, 2, 0).unwrap();
        let mut sizes = [0; 2];
        f.iter().for_each(|&x| sizes[x] += 1);
        sizes.sort();
        assert_eq!(sizes, [2, 3]);
        assert!(kfold_split(3, 4, 0).is_err());
        assert!(kfold_split(3, 1, 0).is_err());
    }

    #[test]
    fn kfold_determinism() {
        let a = kfold_split(350, 5, 1).unwrap();
        let b = kfold_split(350, 5, 1).unwrap();
        let c = kfold_split(350, 5, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(1e-3, 1e2, 6);
        assert_eq!(v.len(), 6);
        assert!((v[0] - 1e-3).abs() < 1e-15 && (v[5] - 1e2).abs() < 1e-10);
        assert!((v[1] - 1e-2).abs() < 1e-14);
    }

    #[test]
    fn grid_validation() {
        let ok = CvGrid::new(vec![0.0, 1.0], vec![1.0], vec![1.0, 1.0], 3, 0);
        assert!(ok.validate().is_ok());
        assert!(CvGrid::new(vec![], vec![1.0], vec![1.0], 3, 0).validate().is_err());
        assert!(CvGrid::new(vec![2.0, 1.0], vec![1.0], vec![1.0], 3, 0).validate().is_err());
        assert!(CvGrid::new(vec![-1.0], vec![1.0], vec![1.0], 3, 0).validate().is_err());
        assert!(CvGrid::new(vec![1.0], vec![1.0], vec![1.0], 1, 0).validate().is_err());
    }

    fn cell(idx: usize, l: (f64, f64, f64), mean: f64, valid: bool) -> CvCell {
        CvCell {
            index: [idx, 0, 0],
            lambda1: l.0,
            lambda2: l.1,
            lambda3: l.2,
            mean_rmse: mean,
            se_rmse: 0.0,
            fold_time_rmse: vec![],
            converged_folds: 0,
            valid,
        }
    }

    #[test]
    fn tie_break_prefers_sparse_then_smooth() {
        let cells = vec![
            cell(0, (1.0, 1.0, 1.0), 0.5, true),
            cell(1, (1.0, 2.0, 1.0), 0.5, true),
            cell(2, (0.5, 1.0, 3.0), 0.5, true),
            cell(3, (9.0, 9.0, 9.0), 0.1, false),
            cell(4, (2.0, 1.0, 3.0), 0.5, true),
        ];
        assert_eq!(select_best(&cells).unwrap().index[0], 4);
        let dup = vec![cell(0, (1.0, 1.0, 1.0), 0.5, true), cell(1, (1.0, 1.0, 1.0), 0.5, true)];
        assert_eq!(select_best(&dup).unwrap().index[0], 0);
        assert!(select_best(&[cell(0, (1.0, 1.0, 1.0), 0.5, false)]).is_none());
    }

    #[test]
    fn metrics_exact_and_null() {
        let y = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 5.0], [2.0, 8.0]]).unwrap();
        let m = metrics_from_predictions(&y, &y, &[5.0, 10.0]).unwrap();
        assert_eq!(m.rmse, vec![0.0, 0.0]);
        assert_eq!(m.r2, vec![1.0, 1.0]);
        let null = DenseMatrix::from_rows(&[[2.0, 5.0], [2.0, 5.0], [2.0, 5.0]]).unwrap();
        let m = metrics_from_predictions(&y, &null, &[5.0, 10.0]).unwrap();
        assert!(m.r2.iter().all(|r| r.abs() < 1e-15));
        assert_eq!(m.mean, vec![2.0, 5.0]);
        assert!((m.sd[0] - 1.0).abs() < 1e-15 && (m.sd[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_shift_invariance() {
        let y = DenseMatrix::from_rows(&[[1.0], [3.0], [2.5], [0.2]]).unwrap();
        let p = DenseMatrix::from_rows(&[[1.2], [2.5], [2.0], [0.9]]).unwrap();
        let a = metrics_from_predictions(&y, &p, &[1.0]).unwrap();
        let shift = |m: &DenseMatrix| {
            DenseMatrix::new(4, 1, m.as_slice().iter().map(|v| v + 7.0).collect()).unwrap()
        };
        let b = metrics_from_predictions(&shift(&y), &shift(&p), &[1.0]).unwrap();
        assert!((a.r2[0] - b.r2[0]).abs() < 1e-12);
        assert!((a.rmse[0] - b.rmse[0]).abs() < 1e-12);
    }
}
