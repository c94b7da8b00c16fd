//! Model fitting: the temporal group LASSO through accelerated proximal
//! gradient descent, and the classical single-response baselines (OLS,
//! ridge, LASSO, elastic net, group LASSO).
//!
//! Every fit standardizes the predictors and centres the responses first, so
//! intercepts are never penalized. Coefficients are stored on the
//! standardized scale; [`predict`] applies the stored transform to new data.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::{standardize, LongitudinalDataset, StandardizationParams};
use crate::error::{Error, Result};
use crate::matrix::{
    gram, lstsq_min_norm, matmul, matmul_into, shape_str, solve_spd, spectral_norm_sq, t_matmul,
    DenseMatrix, DEFAULT_POWER_ITERS,
};
use crate::penalties::{
    build_difference_operator, objective, prox_group, prox_l1, prox_l21, right_multiply,
    PenaltyConfig, TemporalDifferenceOperator,
};

/// Relative singular-value cutoff of the OLS pseudoinverse.
pub const OLS_RCOND: f64 = 1e-10;

const MAX_BACKTRACKS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once `|f_k − f_{k−1}| / max(1, |f_k|)` drops below this.
    pub rel_tol: f64,
    pub backtracking_factor: f64,
    /// Defaults to the inverse of a power-iteration Lipschitz estimate.
    pub initial_step: Option<f64>,
    pub use_acceleration: bool,
    pub restart_on_increase: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rel_tol: 1e-7,
            backtracking_factor: 0.5,
            initial_step: None,
            use_acceleration: true,
            restart_on_increase: true,
            seed: 42,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidInput(format!("rel_tol must be > 0, got {}", self.rel_tol)));
        }
        if !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0) {
            return Err(Error::InvalidInput(format!(
                "backtracking_factor must lie in (0, 1), got {}",
                self.backtracking_factor
            )));
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!("initial_step must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tgl,
    Ols,
    Ridge,
    Lasso,
    ElasticNet,
    GroupLasso,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tgl => "tgl",
            Method::Ols => "ols",
            Method::Ridge => "ridge",
            Method::Lasso => "lasso",
            Method::ElasticNet => "elastic_net",
            Method::GroupLasso => "group_lasso",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "tgl" => Ok(Method::Tgl),
            "ols" | "mlr" => Ok(Method::Ols),
            "ridge" | "rr" => Ok(Method::Ridge),
            "lasso" => Ok(Method::Lasso),
            "elastic_net" | "enet" => Ok(Method::ElasticNet),
            "group_lasso" => Ok(Method::GroupLasso),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

/// A fitted linear model over `T` time points.
///
/// For the baselines the penalty weights are echoed in temporal group LASSO
/// terms: the squared-L2 weight goes to `lambda1` and the sparsity weight
/// (L1 or group) to `lambda3`.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub method: Method,
    /// d×T coefficients on the standardized scale.
    pub w: DenseMatrix,
    pub intercepts: Vec<f64>,
    pub standardization: StandardizationParams,
    pub objective_trajectory: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub penalty_config: PenaltyConfig,
    pub solver_config: SolverConfig,
    pub feature_names: Vec<String>,
    pub time_labels: Vec<f64>,
    /// All penalties were zero with more features than samples, so the
    /// minimum-norm least-squares solution was returned instead.
    pub min_norm_redirect: bool,
}

impl FitResult {
    pub fn n_features(&self) -> usize {
        self.w.rows()
    }

    pub fn n_times(&self) -> usize {
        self.w.cols()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_trajectory.last().copied()
    }

    /// Coefficients and intercepts on the raw predictor scale.
    pub fn raw_coefficients(&self) -> (DenseMatrix, Vec<f64>) {
        self.standardization.raw_coefficients(&self.w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(text)?.try_into()
    }
}

/// On-disk model layout.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    method: Method,
    w: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
    feature_means: Vec<f64>,
    feature_sds: Vec<f64>,
    response_means: Vec<f64>,
    #[serde(default)]
    constant_features: Vec<usize>,
    feature_names: Vec<String>,
    time_labels: Vec<f64>,
    penalty_config: PenaltyConfig,
    solver_config: SolverConfig,
    converged: bool,
    iterations_used: usize,
    #[serde(default)]
    min_norm_redirect: bool,
    #[serde(default)]
    objective_trajectory: Vec<f64>,
}

impl From<&FitResult> for ModelFile {
    fn from(m: &FitResult) -> Self {
        Self {
            method: m.method,
            w: m.w.to_rows(),
            intercepts: m.intercepts.clone(),
            feature_means: m.standardization.feature_means.clone(),
            feature_sds: m.standardization.feature_sds.clone(),
            response_means: m.standardization.response_means.clone(),
            constant_features: m.standardization.constant_features.clone(),
            feature_names: m.feature_names.clone(),
            time_labels: m.time_labels.clone(),
            penalty_config: m.penalty_config.clone(),
            solver_config: m.solver_config.clone(),
            converged: m.converged,
            iterations_used: m.iterations_used,
            min_norm_redirect: m.min_norm_redirect,
            objective_trajectory: m.objective_trajectory.clone(),
        }
    }
}

impl TryFrom<ModelFile> for FitResult {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let d = f.w.len();
        let t = f.time_labels.len();
        let w = if d == 0 {
            DenseMatrix::zeros(0, t)
        } else {
            DenseMatrix::from_rows(&f.w)?
        };
        if w.cols() != t
            || f.intercepts.len() != t
            || f.response_means.len() != t
            || f.feature_means.len() != d
            || f.feature_sds.len() != d
            || f.feature_names.len() != d
        {
            return Err(Error::InvalidInput(format!(
                "model file is inconsistent: w is {}, {} time labels, {} feature names",
                shape_str(w.shape()),
                t,
                f.feature_names.len()
            )));
        }
        Ok(Self {
            method: f.method,
            w,
            intercepts: f.intercepts,
            standardization: StandardizationParams {
                feature_means: f.feature_means,
                feature_sds: f.feature_sds,
                response_means: f.response_means,
                constant_features: f.constant_features,
            },
            objective_trajectory: f.objective_trajectory,
            iterations_used: f.iterations_used,
            converged: f.converged,
            penalty_config: f.penalty_config,
            solver_config: f.solver_config,
            feature_names: f.feature_names,
            time_labels: f.time_labels,
            min_norm_redirect: f.min_norm_redirect,
        })
    }
}

/// A partition of the predictor indices `0..d` into disjoint nonempty groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    groups: Vec<Vec<usize>>,
}

impl GroupSpec {
    pub fn new(groups: Vec<Vec<usize>>, d: usize) -> Result<Self> {
        let mut seen = vec![0usize; d];
        let mut out_of_range = Vec::new();
        let mut empty = 0;
        for g in &groups {
            if g.is_empty() {
                empty += 1;
            }
            for &i in g {
                match seen.get_mut(i) {
                    Some(c) => *c += 1,
                    None => out_of_range.push(i),
                }
            }
        }
        let missing: Vec<usize> = (0..d).filter(|&i| seen[i] == 0).collect();
        let duplicated: Vec<usize> = (0..d).filter(|&i| seen[i] > 1).collect();
        if !missing.is_empty() || !duplicated.is_empty() || !out_of_range.is_empty() || empty > 0 {
            return Err(Error::InvalidInput(format!(
                "invalid group partition of {d} predictors: missing {missing:?}, duplicated {duplicated:?}, out of range {out_of_range:?}, {empty} empty group(s)"
            )));
        }
        Ok(Self { groups })
    }

    /// One group per predictor.
    pub fn singletons(d: usize) -> Self {
        Self {
            groups: (0..d).map(|i| vec![i]).collect(),
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

// ---------------------------------------------------------------------------
// Proximal gradient engine
// ---------------------------------------------------------------------------

/// Non-smooth part of a composite objective.
enum Regularizer<'a> {
    /// `λ Σ_i ‖W_i,·‖₂`
    RowGroup(f64),
    /// `λ ‖W‖₁`
    Lasso(f64),
    /// `λ Σ_g ‖W_g‖₂` over predictor groups
    Group(&'a [Vec<usize>], f64),
}

impl Regularizer<'_> {
    fn value(&self, w: &DenseMatrix) -> f64 {
        match *self {
            Regularizer::RowGroup(0.0) => 0.0,
            Regularizer::RowGroup(l) => l * w.l21_norm(),
            Regularizer::Lasso(l) => l * w.as_slice().iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::Group(groups, l) => {
                let mut total = 0.0;
                for c in 0..w.cols() {
                    for g in groups {
                        total += g.iter().map(|&i| w[(i, c)].powi(2)).sum::<f64>().sqrt();
                    }
                }
                l * total
            }
        }
    }

    /// `value(new) − value(old)`, accurate relative to `new − old`.
    fn change(&self, new: &DenseMatrix, old: &DenseMatrix) -> f64 {
        match *self {
            Regularizer::RowGroup(0.0) => 0.0,
            Regularizer::RowGroup(l) => l * (0..new.rows()).map(|i| norm_change(new.row(i), old.row(i))).sum::<f64>(),
            Regularizer::Lasso(l) => {
                l * new.as_slice().iter().zip(old.as_slice()).map(|(a, b)| a.abs() - b.abs()).sum::<f64>()
            }
            Regularizer::Group(groups, l) => {
                let (mut a, mut b) = (Vec::new(), Vec::new());
                let mut total = 0.0;
                for c in 0..new.cols() {
                    for g in groups {
                        a.clear();
                        b.clear();
                        a.extend(g.iter().map(|&i| new[(i, c)]));
                        b.extend(g.iter().map(|&i| old[(i, c)]));
                        total += norm_change(&a, &b);
                    }
                }
                l * total
            }
        }
    }

    fn prox(&self, v: &DenseMatrix, step: f64) -> DenseMatrix {
        match *self {
            Regularizer::RowGroup(0.0) => v.clone(),
            Regularizer::RowGroup(l) => prox_l21(v, step * l),
            Regularizer::Lasso(l) => prox_l1(v, step * l),
            Regularizer::Group(groups, l) => prox_group(v, groups, step * l),
        }
    }
}

/// `‖a‖₂ − ‖b‖₂` computed as `⟨a − b, a + b⟩ / (‖a‖₂ + ‖b‖₂)`.
fn norm_change(a: &[f64], b: &[f64]) -> f64 {
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = sq(a) + sq(b);
    if denom == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x + y)).sum::<f64>() / denom
}

/// Least-squares data term. `aux(W)` is linear in `W`: the Gram form keeps
/// `XᵀX W` (d×T), the direct form keeps `X W` (n×T). The cheaper of the two
/// is chosen from the problem shape.
enum DataTerm {
    Gram {
        g: DenseMatrix,
        xty: DenseMatrix,
        yty: f64,
    },
    Direct {
        x: DenseMatrix,
        y: DenseMatrix,
    },
}

impl DataTerm {
    fn new(x: &DenseMatrix, y: &DenseMatrix) -> Self {
        let (n, d) = x.shape();
        // Gram costs d² per column and iteration, direct costs 2nd
        if d <= 2 * n {
            DataTerm::Gram {
                g: gram(x),
                xty: t_matmul(x, y).expect("shapes checked by caller"),
                yty: y.frobenius_sq(),
            }
        } else {
            DataTerm::Direct {
                x: x.clone(),
                y: y.clone(),
            }
        }
    }

    fn aux(&self, w: &DenseMatrix) -> DenseMatrix {
        match self {
            DataTerm::Gram { g, .. } => {
                let mut out = DenseMatrix::zeros(g.rows(), w.cols());
                matmul_into(g, w, &mut out);
                out
            }
            DataTerm::Direct { x, .. } => {
                let mut out = DenseMatrix::zeros(x.rows(), w.cols());
                matmul_into(x, w, &mut out);
                out
            }
        }
    }

    fn loss(&self, w: &DenseMatrix, aux: &DenseMatrix) -> f64 {
        match self {
            DataTerm::Gram { xty, yty, .. } => {
                let v = yty - 2.0 * w.dot(xty) + w.dot(aux);
                // rounding can push an exact fit slightly negative; NaN passes through
                if v < 0.0 {
                    0.0
                } else {
                    v
                }
            }
            DataTerm::Direct { y, .. } => aux
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        }
    }

    /// Quadratic part `‖X Δ‖²` of the loss change along `Δ`, given
    /// `daux = aux(Δ)`, and a bound on its rounding error when `daux` was
    /// formed as a difference of auxiliaries with norms summing to `aux_norms`.
    fn quad(&self, delta: &DenseMatrix, daux: &DenseMatrix, aux_norms: f64) -> (f64, f64) {
        match self {
            DataTerm::Gram { .. } => (delta.dot(daux), 1e-12 * delta.frobenius() * aux_norms),
            DataTerm::Direct { .. } => {
                let q = daux.frobenius_sq();
                (q, 1e-12 * q.sqrt() * aux_norms)
            }
        }
    }

    fn loss_gradient(&self, aux: &DenseMatrix) -> DenseMatrix {
        match self {
            DataTerm::Gram { xty, .. } => {
                let mut g = aux.clone();
                g.axpy(-1.0, xty);
                g.scaled(2.0)
            }
            DataTerm::Direct { x, y } => {
                let resid = aux.sub(y).expect("aux has y's shape");
                t_matmul(x, &resid).expect("aux has y's shape").scaled(2.0)
            }
        }
    }
}

struct SmoothPart {
    data: DataTerm,
    lambda1: f64,
    lambda2: f64,
    /// `RᵀR`, only kept when the temporal term is active.
    rtr: Option<DenseMatrix>,
}

impl SmoothPart {
    fn value(&self, w: &DenseMatrix, aux: &DenseMatrix) -> f64 {
        let mut v = self.data.loss(w, aux);
        if self.lambda1 != 0.0 {
            v += self.lambda1 * w.frobenius_sq();
        }
        if let Some(rtr) = &self.rtr {
            v += self.lambda2 * w.dot(&right_multiply(w, rtr));
        }
        v
    }

    /// `value(W + Δ) − value(W) − ⟨gradient(W), Δ⟩` with its rounding bound.
    fn quad(&self, delta: &DenseMatrix, daux: &DenseMatrix, aux_norms: f64) -> (f64, f64) {
        let (mut q, err) = self.data.quad(delta, daux, aux_norms);
        if self.lambda1 != 0.0 {
            q += self.lambda1 * delta.frobenius_sq();
        }
        if let Some(rtr) = &self.rtr {
            q += self.lambda2 * delta.dot(&right_multiply(delta, rtr));
        }
        (q, err)
    }

    fn gradient(&self, w: &DenseMatrix, aux: &DenseMatrix) -> DenseMatrix {
        let mut g = self.data.loss_gradient(aux);
        if self.lambda1 != 0.0 {
            g.axpy(2.0 * self.lambda1, w);
        }
        if let Some(rtr) = &self.rtr {
            g.axpy(2.0 * self.lambda2, &right_multiply(w, rtr));
        }
        g
    }
}

struct EngineOutput {
    w: DenseMatrix,
    trajectory: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Accelerated proximal gradient (FISTA) with backtracking and
/// function-value restart, started from `W = 0`.
fn proximal_gradient(
    x: &DenseMatrix,
    y: &DenseMatrix,
    lambda1: f64,
    lambda2: f64,
    r: &TemporalDifferenceOperator,
    reg: &Regularizer<'_>,
    solver: &SolverConfig,
) -> Result<EngineOutput> {
    let d = x.cols();
    let t = y.cols();
    let smooth = SmoothPart {
        data: DataTerm::new(x, y),
        lambda1,
        lambda2,
        rtr: (lambda2 != 0.0 && t > 1).then(|| r.gram()),
    };

    let mut step = match solver.initial_step {
        Some(s) => s,
        None => {
            let lx = spectral_norm_sq(x, DEFAULT_POWER_ITERS, solver.seed);
            let lr = if lambda2 != 0.0 && t > 1 {
                spectral_norm_sq(r.matrix(), DEFAULT_POWER_ITERS, solver.seed)
            } else {
                0.0
            };
            let lipschitz = 2.0 * (lx + lambda1 + lambda2 * lr);
            if lipschitz > 0.0 {
                1.0 / lipschitz
            } else {
                1.0
            }
        }
    };

    let mut x_cur = DenseMatrix::zeros(d, t);
    let mut aux_cur = smooth.data.aux(&x_cur);
    let mut f_cur = smooth.value(&x_cur, &aux_cur) + reg.value(&x_cur);
    let mut trajectory = vec![f_cur];

    let mut y_pt = x_cur.clone();
    let mut aux_y = aux_cur.clone();
    let mut momentum = 1.0_f64;
    // whether y_pt differs from x_cur
    let mut extrapolated = false;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..solver.max_iters {
        iterations += 1;
        let (z, aux_z, f_z) = loop {
            let grad = smooth.gradient(&y_pt, &aux_y);
            // objective changes are computed from the step itself
            let (x_offset, dx) = if extrapolated {
                let dx = x_cur.sub(&y_pt).expect("same shape");
                let daux = aux_cur.sub(&aux_y).expect("same shape");
                let aux_norms = aux_cur.frobenius() + aux_y.frobenius();
                (smooth.quad(&dx, &daux, aux_norms).0 + grad.dot(&dx), true)
            } else {
                (0.0, false)
            };
            let mut shrinks = 0;
            let (z, aux_z, dz) = loop {
                let mut v = y_pt.clone();
                v.axpy(-step, &grad);
                let z = reg.prox(&v, step);
                let aux_z = smooth.data.aux(&z);
                let diff = z.sub(&y_pt).expect("same shape");
                let daux = aux_z.sub(&aux_y).expect("same shape");
                let (q, err) = smooth.quad(&diff, &daux, aux_z.frobenius() + aux_y.frobenius());
                if !q.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite objective at step size {step:e}; try a smaller initial_step"
                    )));
                }
                if q <= diff.frobenius_sq() / (2.0 * step) + err {
                    break (z, aux_z, q + grad.dot(&diff));
                }
                if shrinks >= MAX_BACKTRACKS {
                    return Err(Error::Diverged(format!(
                        "line search failed after {MAX_BACKTRACKS} reductions (step {step:e}); try a smaller initial_step"
                    )));
                }
                step *= solver.backtracking_factor;
                shrinks += 1;
            };
            let change = dz - x_offset + reg.change(&z, &x_cur);
            if !change.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite objective at step size {step:e}; try a smaller initial_step"
                )));
            }
            if solver.restart_on_increase && change > 0.0 {
                if dx {
                    // drop the momentum and retry from the current iterate
                    y_pt = x_cur.clone();
                    aux_y = aux_cur.clone();
                    momentum = 1.0;
                    extrapolated = false;
                    continue;
                }
                // a plain proximal step cannot increase the objective beyond rounding
                break (x_cur.clone(), aux_cur.clone(), f_cur);
            }
            break (z, aux_z, f_cur + change);
        };
        if solver.use_acceleration {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            momentum = next;
            y_pt = z.clone();
            aux_y = aux_z.clone();
            if beta != 0.0 {
                let dz = z.sub(&x_cur).expect("same shape");
                let daux = aux_z.sub(&aux_cur).expect("same shape");
                y_pt.axpy(beta, &dz);
                aux_y.axpy(beta, &daux);
                extrapolated = true;
            } else {
                extrapolated = false;
            }
        } else {
            y_pt = z.clone();
            aux_y = aux_z.clone();
        }

        let f_prev = f_cur;
        x_cur = z;
        aux_cur = aux_z;
        f_cur = f_z;
        trajectory.push(f_cur);
        if (f_cur - f_prev).abs() / f_cur.abs().max(1.0) < solver.rel_tol {
            converged = true;
            break;
        }
    }

    Ok(EngineOutput {
        w: x_cur,
        trajectory,
        iterations,
        converged,
    })
}

// ---------------------------------------------------------------------------
// Public fits
// ---------------------------------------------------------------------------

fn require_samples(data: &LongitudinalDataset) -> Result<()> {
    if data.n_samples() < 2 {
        return Err(Error::InvalidInput(format!(
            "fitting needs at least 2 samples, got {}",
            data.n_samples()
        )));
    }
    Ok(())
}

fn require_single_column(data: &LongitudinalDataset, method: &str) -> Result<()> {
    if data.n_times() != 1 {
        return Err(Error::InvalidInput(format!(
            "{method} expects a single response column, got {}; use fit_tgl for multi-column responses",
            data.n_times()
        )));
    }
    Ok(())
}

struct Assembled<'a> {
    method: Method,
    data: &'a LongitudinalDataset,
    w: DenseMatrix,
    params: StandardizationParams,
    trajectory: Vec<f64>,
    iterations: usize,
    converged: bool,
    penalty: PenaltyConfig,
    solver: SolverConfig,
    min_norm_redirect: bool,
}

impl Assembled<'_> {
    fn finish(self) -> FitResult {
        FitResult {
            method: self.method,
            w: self.w,
            intercepts: self.params.response_means.clone(),
            standardization: self.params,
            objective_trajectory: self.trajectory,
            iterations_used: self.iterations,
            converged: self.converged,
            penalty_config: self.penalty,
            solver_config: self.solver,
            feature_names: self.data.feature_names().to_vec(),
            time_labels: self.data.time_labels().to_vec(),
            min_norm_redirect: self.min_norm_redirect,
        }
    }
}

/// Fits the temporal group LASSO.
pub fn fit_tgl(data: &LongitudinalDataset, cfg: &PenaltyConfig, solver: &SolverConfig) -> Result<FitResult> {
    cfg.validate()?;
    solver.validate()?;
    require_samples(data)?;
    let r = build_difference_operator(data.n_times(), cfg.temporal_weights.as_deref())?;

    if cfg.all_zero() && data.n_features() > data.n_samples() {
        warn!(
            "all penalties are zero with d = {} > n = {}; returning the minimum-norm least-squares fit",
            data.n_features(),
            data.n_samples()
        );
        let mut fit = fit_ols(data)?;
        fit.method = Method::Tgl;
        fit.penalty_config = cfg.clone();
        fit.solver_config = solver.clone();
        fit.min_norm_redirect = true;
        return Ok(fit);
    }

    let (std_data, params) = standardize(data)?;
    let out = proximal_gradient(
        std_data.x(),
        std_data.y(),
        cfg.lambda1,
        cfg.lambda2,
        &r,
        &Regularizer::RowGroup(cfg.lambda3),
        solver,
    )?;
    Ok(Assembled {
        method: Method::Tgl,
        data,
        w: out.w,
        params,
        trajectory: out.trajectory,
        iterations: out.iterations,
        converged: out.converged,
        penalty: cfg.clone(),
        solver: solver.clone(),
        min_norm_redirect: false,
    }
    .finish())
}

/// Per-column least squares through the SVD pseudoinverse; the
/// minimum-norm solution when the system is underdetermined.
pub fn fit_ols(data: &LongitudinalDataset) -> Result<FitResult> {
    require_samples(data)?;
    let (std_data, params) = standardize(data)?;
    let w = lstsq_min_norm(std_data.x(), std_data.y(), OLS_RCOND)?;
    let loss = std_data.y().sub(&matmul(std_data.x(), &w)?)?.frobenius_sq();
    Ok(Assembled {
        method: Method::Ols,
        data,
        w,
        params,
        trajectory: vec![loss],
        iterations: 0,
        converged: true,
        penalty: PenaltyConfig::new(0.0, 0.0, 0.0),
        solver: SolverConfig::default(),
        min_norm_redirect: data.n_features() > data.n_samples(),
    }
    .finish())
}

/// Ridge regression in closed form, `W = (XᵀX + λ1 I)⁻¹ XᵀY`.
pub fn fit_ridge(data: &LongitudinalDataset, lambda1: f64) -> Result<FitResult> {
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "ridge needs lambda1 > 0 (got {lambda1}); use fit_ols for the unpenalized fit"
        )));
    }
    require_samples(data)?;
    let (std_data, params) = standardize(data)?;
    let mut a = gram(std_data.x());
    for i in 0..a.rows() {
        a[(i, i)] += lambda1;
    }
    let w = solve_spd(&a, &t_matmul(std_data.x(), std_data.y())?)?;
    let value = std_data.y().sub(&matmul(std_data.x(), &w)?)?.frobenius_sq() + lambda1 * w.frobenius_sq();
    Ok(Assembled {
        method: Method::Ridge,
        data,
        w,
        params,
        trajectory: vec![value],
        iterations: 0,
        converged: true,
        penalty: PenaltyConfig::new(lambda1, 0.0, 0.0),
        solver: SolverConfig::default(),
        min_norm_redirect: false,
    }
    .finish())
}

fn fit_single_response(
    data: &LongitudinalDataset,
    method: Method,
    ridge: f64,
    reg: Regularizer<'_>,
    sparsity: f64,
    solver: &SolverConfig,
) -> Result<FitResult> {
    require_single_column(data, method.name())?;
    require_samples(data)?;
    solver.validate()?;
    let penalty = PenaltyConfig::new(ridge, 0.0, sparsity);
    penalty.validate()?;
    let (std_data, params) = standardize(data)?;
    let r = build_difference_operator(1, None)?;
    let out = proximal_gradient(std_data.x(), std_data.y(), ridge, 0.0, &r, &reg, solver)?;
    Ok(Assembled {
        method,
        data,
        w: out.w,
        params,
        trajectory: out.trajectory,
        iterations: out.iterations,
        converged: out.converged,
        penalty,
        solver: solver.clone(),
        min_norm_redirect: false,
    }
    .finish())
}

/// LASSO: `‖y − Xw‖² + λ‖w‖₁`.
pub fn fit_lasso(data: &LongitudinalDataset, lambda: f64, solver: &SolverConfig) -> Result<FitResult> {
    fit_single_response(data, Method::Lasso, 0.0, Regularizer::Lasso(lambda), lambda, solver)
}

/// Elastic net: `‖y − Xw‖² + λ1‖w‖₁ + λ2‖w‖²₂` (λ1 weighs the L1 term).
pub fn fit_elastic_net(
    data: &LongitudinalDataset,
    lambda1: f64,
    lambda2: f64,
    solver: &SolverConfig,
) -> Result<FitResult> {
    fit_single_response(
        data,
        Method::ElasticNet,
        lambda2,
        Regularizer::Lasso(lambda1),
        lambda1,
        solver,
    )
}

/// Group LASSO: `‖y − Xw‖² + λ Σ_g ‖w_g‖₂`.
pub fn fit_group_lasso(
    data: &LongitudinalDataset,
    groups: &GroupSpec,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<FitResult> {
    // revalidate against this dataset's width
    GroupSpec::new(groups.groups.clone(), data.n_features())?;
    fit_single_response(
        data,
        Method::GroupLasso,
        0.0,
        Regularizer::Group(groups.groups(), lambda),
        lambda,
        solver,
    )
}

/// Raw-scale predictions `standardize(x_new) · W + intercepts`.
pub fn predict(model: &FitResult, x_new: &DenseMatrix) -> Result<DenseMatrix> {
    if x_new.cols() != model.n_features() {
        return Err(Error::dims(
            "predict",
            format!("{} columns", model.n_features()),
            shape_str(x_new.shape()),
        ));
    }
    let xs = model.standardization.transform_x(x_new)?;
    let mut out = matmul(&xs, &model.w)?;
    for i in 0..out.rows() {
        for (v, b) in out.row_mut(i).iter_mut().zip(&model.intercepts) {
            *v += b;
        }
    }
    Ok(out)
}

/// Indices of coefficient rows with Euclidean norm above `eps`, ascending.
pub fn selected_features(model: &FitResult, eps: f64) -> Vec<usize> {
    model
        .w
        .row_norms()
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > eps)
        .map(|(i, _)| i)
        .collect()
}

/// Default selection threshold for [`selected_features`].
pub const SELECTION_EPS: f64 = 1e-8;

/// Objective of a fitted model re-evaluated on the standardized version of
/// `data` (which must be the training data for the value to be meaningful).
pub fn training_objective(model: &FitResult, data: &LongitudinalDataset) -> Result<f64> {
    let (std_data, _) = standardize(data)?;
    let r = build_difference_operator(data.n_times(), model.penalty_config.temporal_weights.as_deref())?;
    objective(&model.w, std_data.x(), std_data.y(), &r, &model.penalty_config)
}
