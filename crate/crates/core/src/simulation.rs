//! Synthetic longitudinal cohorts for benchmarking.
//!
//! Each patient carries i.i.d. standard Gaussian features. A subset of the
//! features drives a handful of latent pharmacologic parameters (absorption
//! rate, elimination rate, one amplitude per dose and a baseline) through
//! softplus maps of linear combinations. The parameters feed a
//! superposition of bolus dose responses
//!
//! ```text
//! effect(t) = Σ_d A_d · g(t − t_d) · 1[t > t_d]
//! g(τ) = (e^{−k_e τ} − e^{−k_a τ}) / (e^{−k_e τ*} − e^{−k_a τ*})
//! ```
//!
//! where `τ*` is the peak time, so each dose peaks at its amplitude. The
//! baseline is generated and recorded but enters the effect with weight 0.
//! Gaussian noise is added per observation.
//!
//! # Reproducibility
//!
//! All randomness comes from a single `ChaCha8Rng` stream seeded with
//! `seed`, drawn in a fixed order: informative subset, parameter assignment,
//! loading weights, features (row-major), noise (row-major), train/test
//! shuffle. Gaussian draws use `rand_distr::StandardNormal`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_patients: usize,
    pub n_features: usize,
    pub n_informative: usize,
    /// Observation times in hours.
    pub time_points: Vec<f64>,
    /// Bolus dose times in hours.
    pub dose_times: Vec<f64>,
    pub noise_sd: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_patients: 500,
            n_features: 300,
            n_informative: 170,
            time_points: (1..=10).map(|i| 5.0 * i as f64).collect(),
            dose_times: vec![0.0, 17.0, 34.0],
            noise_sd: 0.02,
            train_fraction: 0.70,
            seed: 42,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.n_patients < 2 {
            return bad(format!("n_patients must be >= 2, got {}", self.n_patients));
        }
        if self.n_features == 0 {
            return bad("n_features must be >= 1".into());
        }
        if self.n_informative > self.n_features {
            return bad(format!(
                "n_informative ({}) exceeds n_features ({})",
                self.n_informative, self.n_features
            ));
        }
        if self.time_points.is_empty() {
            return bad("time_points is empty".into());
        }
        if self
            .time_points
            .windows(2)
            .any(|w| !(w[0] < w[1]))
            || self.time_points.iter().any(|t| !t.is_finite())
        {
            return bad("time_points must be finite and strictly increasing".into());
        }
        if self.dose_times.is_empty() {
            return bad("dose_times is empty".into());
        }
        let t_max = self.time_points[self.time_points.len() - 1];
        if let Some(d) = self.dose_times.iter().find(|&&d| !(d >= 0.0 && d < t_max)) {
            return bad(format!("dose time {d} outside [0, {t_max})"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        let n_train = self.n_train();
        if n_train == self.n_patients {
            return bad(format!(
                "train_fraction {} leaves no test patients out of {}",
                self.train_fraction, self.n_patients
            ));
        }
        Ok(())
    }

    /// `⌈train_fraction · n_patients⌉`.
    pub fn n_train(&self) -> usize {
        // guard against 0.7 * 10 = 7.000000000000001
        let raw = self.train_fraction * self.n_patients as f64;
        let rounded = raw.round();
        if (raw - rounded).abs() < 1e-9 {
            rounded as usize
        } else {
            raw.ceil() as usize
        }
    }
}

/// How one latent parameter depends on the features:
/// `value = min(lower + scale · softplus(offset + Σ w_j x_j), upper)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterLoading {
    pub parameter: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: f64,
    pub offset: f64,
    /// `(feature index, weight)` pairs, sorted by index.
    pub loadings: Vec<(usize, f64)>,
}

impl ParameterLoading {
    pub fn value(&self, features: &[f64]) -> f64 {
        let z = self.offset + self.loadings.iter().map(|&(j, w)| w * features[j]).sum::<f64>();
        (self.lower + self.scale * softplus(z)).min(self.upper)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub informative_indices: Vec<usize>,
    pub parameter_loadings: Vec<ParameterLoading>,
}

impl GroundTruth {
    /// Latent parameters of one patient.
    pub fn patient_parameters(&self, features: &[f64]) -> PatientParameters {
        let v: Vec<f64> = self.parameter_loadings.iter().map(|p| p.value(features)).collect();
        let n_doses = v.len() - 3;
        PatientParameters {
            absorption_rate: v[0],
            elimination_rate: v[1],
            amplitudes: v[2..2 + n_doses].to_vec(),
            baseline: v[2 + n_doses],
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientParameters {
    /// k_a, per hour.
    pub absorption_rate: f64,
    /// k_e, per hour.
    pub elimination_rate: f64,
    /// Peak effect of each dose.
    pub amplitudes: Vec<f64>,
    pub baseline: f64,
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Single-dose response `τ` hours after the dose, scaled to peak at 1.
pub fn unit_dose_response(tau: f64, ka: f64, ke: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    if (ka - ke).abs() <= 1e-12 * ka.max(ke) {
        // limit k_a → k_e: k τ e^{1 − k τ}
        let k = 0.5 * (ka + ke);
        return k * tau * (1.0 - k * tau).exp();
    }
    let peak_time = (ka / ke).ln() / (ka - ke);
    let peak = (-ke * peak_time).exp() - (-ka * peak_time).exp();
    ((-ke * tau).exp() - (-ka * tau).exp()) / peak
}

/// Noiseless effect at each of `times`.
pub fn effect_curve(params: &PatientParameters, dose_times: &[f64], times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            let doses: f64 = dose_times
                .iter()
                .zip(&params.amplitudes)
                .filter(|(&td, _)| t > td)
                .map(|(&td, &a)| a * unit_dose_response(t - td, params.absorption_rate, params.elimination_rate))
                .sum();
            params.baseline * 0.0 + doses
        })
        .collect()
}

/// Generator constants for one latent parameter.
struct ParameterTemplate {
    name: &'static str,
    lower: f64,
    upper: f64,
    scale: f64,
    offset: f64,
    /// Standard deviation of the linear combination over features.
    spread: f64,
    /// Relative share of the informative features.
    share: f64,
}

/// Loading magnitudes are log-uniform on this range before normalization.
const MIN_LOADING: f64 = 1e-3;
const MAX_LOADING: f64 = 1.5;

fn templates(n_doses: usize) -> Vec<ParameterTemplate> {
    let mut t = vec![
        ParameterTemplate {
            name: "absorption_rate",
            lower: 0.5,
            upper: 2.0,
            scale: 0.3,
            offset: 1.0,
            spread: 0.8,
            share: 0.04,
        },
        ParameterTemplate {
            name: "elimination_rate",
            lower: 0.05,
            upper: 0.3,
            scale: 0.04,
            offset: 0.3,
            spread: 0.5,
            share: 0.05,
        },
    ];
    for d in 0..n_doses {
        t.push(ParameterTemplate {
            name: ["amplitude_1", "amplitude_2", "amplitude_3"].get(d).copied().unwrap_or("amplitude"),
            lower: 0.1,
            upper: 0.6,
            scale: 0.10,
            offset: 2.0,
            spread: 0.9,
            share: 0.90 / n_doses as f64,
        });
    }
    t.push(ParameterTemplate {
        name: "baseline",
        lower: 0.0,
        upper: 1.0,
        scale: 0.1,
        offset: 0.0,
        spread: 0.5,
        share: 0.01,
    });
    t
}

/// Splits `total` into integer counts proportional to `shares`
/// (largest remainder), giving every part at least one item when possible.
fn apportion(total: usize, shares: &[f64]) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(rest) {
        counts[i] += 1;
    }
    // borrow from the largest part so that no part is empty
    if total >= shares.len() {
        for i in 0..counts.len() {
            if counts[i] == 0 {
                let donor = (0..counts.len()).max_by_key(|&j| counts[j]).unwrap();
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
    }
    counts
}

/// A simulated cohort split into training and test patients.
#[derive(Clone, Debug)]
pub struct SimulatedCohort {
    pub train: LongitudinalDataset,
    pub test: LongitudinalDataset,
    pub truth: GroundTruth,
    /// Original patient indices (generation order) of the training rows.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// All patients in generation order, before the split.
    pub full: LongitudinalDataset,
}

pub fn simulate_cohort(cfg: &SimulationConfig) -> Result<SimulatedCohort> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, d) = (cfg.n_patients, cfg.n_features);
    let n_doses = cfg.dose_times.len();

    let mut all: Vec<usize> = (0..d).collect();
    all.shuffle(&mut rng);
    let mut informative: Vec<usize> = all[..cfg.n_informative].to_vec();

    let templates = templates(n_doses);
    let shares: Vec<f64> = templates.iter().map(|t| t.share).collect();
    let counts = apportion(cfg.n_informative, &shares);
    informative.shuffle(&mut rng);

    let mut loadings = Vec::with_capacity(templates.len());
    let mut cursor = 0;
    for (tpl, &count) in templates.iter().zip(&counts) {
        let mut members: Vec<usize> = informative[cursor..cursor + count].to_vec();
        cursor += count;
        members.sort_unstable();
        let raw: Vec<f64> = members
            .iter()
            .map(|_| {
                let magnitude = rng.random_range(MIN_LOADING.ln()..MAX_LOADING.ln()).exp();
                if rng.random_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect();
        let norm = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
        let pairs = members
            .into_iter()
            .zip(raw)
            .map(|(j, w)| (j, if norm > 0.0 { w * tpl.spread / norm } else { 0.0 }))
            .collect();
        loadings.push(ParameterLoading {
            parameter: tpl.name.to_string(),
            lower: tpl.lower,
            upper: tpl.upper,
            scale: tpl.scale,
            offset: tpl.offset,
            loadings: pairs,
        });
    }
    informative.sort_unstable();
    let truth = GroundTruth {
        informative_indices: informative,
        parameter_loadings: loadings,
    };

    let x_data: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = DenseMatrix::new(n, d, x_data)?;
    let t = cfg.time_points.len();
    let mut y = DenseMatrix::zeros(n, t);
    for i in 0..n {
        let params = truth.patient_parameters(x.row(i));
        let curve = effect_curve(&params, &cfg.dose_times, &cfg.time_points);
        y.row_mut(i).copy_from_slice(&curve);
    }
    if cfg.noise_sd > 0.0 {
        for v in y.as_mut_slice() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += cfg.noise_sd * e;
        }
    }

    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let full = LongitudinalDataset::new(x, y, names, cfg.time_points.clone())?
        .with_informative_truth(truth.informative_indices.clone())?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = cfg.n_train();
    let train_indices = order[..n_train].to_vec();
    let test_indices = order[n_train..].to_vec();
    Ok(SimulatedCohort {
        train: full.subset(&train_indices),
        test: full.subset(&test_indices),
        truth,
        train_indices,
        test_indices,
        full,
    })
}
