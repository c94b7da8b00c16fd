//! Longitudinal datasets, standardisation and the CSV file contract.
//!
//! Predictor files carry feature names in the header. Response files carry
//! one column per time point, headed `t<hours>` (for example `t5,t10`).

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{shape_str, DenseMatrix};

/// Predictors `x` (n×d) and responses `y` (n×T) for the same patients.
#[derive(Clone, Debug, PartialEq)]
pub struct LongitudinalDataset {
    x: DenseMatrix,
    y: DenseMatrix,
    feature_names: Vec<String>,
    time_labels: Vec<f64>,
    informative_truth: Option<Vec<usize>>,
}

impl LongitudinalDataset {
    pub fn new(
        x: DenseMatrix,
        y: DenseMatrix,
        feature_names: Vec<String>,
        time_labels: Vec<f64>,
    ) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::dims(
                "LongitudinalDataset",
                format!("y with {} rows", x.rows()),
                shape_str(y.shape()),
            ));
        }
        if feature_names.len() != x.cols() {
            return Err(Error::dims(
                "LongitudinalDataset",
                format!("{} feature names", x.cols()),
                format!("{}", feature_names.len()),
            ));
        }
        if time_labels.len() != y.cols() {
            return Err(Error::dims(
                "LongitudinalDataset",
                format!("{} time labels", y.cols()),
                format!("{}", time_labels.len()),
            ));
        }
        if let Some(w) = time_labels.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(format!(
                "time labels must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        if !x.all_finite() || !y.all_finite() {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            time_labels,
            informative_truth: None,
        })
    }

    /// Dataset with generated names `x0..x{d-1}` and time labels `1..=T`.
    pub fn from_matrices(x: DenseMatrix, y: DenseMatrix) -> Result<Self> {
        let names = (0..x.cols()).map(|i| format!("x{i}")).collect();
        let times = (1..=y.cols()).map(|t| t as f64).collect();
        Self::new(x, y, names, times)
    }

    pub fn with_informative_truth(mut self, mut truth: Vec<usize>) -> Result<Self> {
        truth.sort_unstable();
        truth.dedup();
        if let Some(&bad) = truth.iter().find(|&&i| i >= self.x.cols()) {
            return Err(Error::InvalidInput(format!(
                "informative feature index {bad} out of range for {} features",
                self.x.cols()
            )));
        }
        self.informative_truth = Some(truth);
        Ok(self)
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &DenseMatrix {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn time_labels(&self) -> &[f64] {
        &self.time_labels
    }

    pub fn informative_truth(&self) -> Option<&[usize]> {
        self.informative_truth.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn n_times(&self) -> usize {
        self.y.cols()
    }

    /// Patients selected by index, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: self.y.select_rows(indices),
            feature_names: self.feature_names.clone(),
            time_labels: self.time_labels.clone(),
            informative_truth: self.informative_truth.clone(),
        }
    }

    /// Same patients with a single response column.
    pub fn single_time(&self, t: usize) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.select_cols(&[t]),
            feature_names: self.feature_names.clone(),
            time_labels: vec![self.time_labels[t]],
            informative_truth: self.informative_truth.clone(),
        }
    }
}

/// Centring and scaling applied before fitting, kept for the inverse map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_means: Vec<f64>,
    /// Sample standard deviations; constant columns record 1.0.
    pub feature_sds: Vec<f64>,
    pub response_means: Vec<f64>,
    #[serde(default)]
    pub constant_features: Vec<usize>,
}

impl StandardizationParams {
    /// Identity transform for `d` features and `t` responses.
    pub fn identity(d: usize, t: usize) -> Self {
        Self {
            feature_means: vec![0.0; d],
            feature_sds: vec![1.0; d],
            response_means: vec![0.0; t],
            constant_features: Vec::new(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_means.len()
    }

    pub fn transform_x(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.n_features() {
            return Err(Error::dims(
                "transform_x",
                format!("{} columns", self.n_features()),
                shape_str(x.shape()),
            ));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out
                .row_mut(i)
                .iter_mut()
                .zip(&self.feature_means)
                .zip(&self.feature_sds)
            {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn inverse_x(&self, xs: &DenseMatrix) -> DenseMatrix {
        let mut out = xs.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out
                .row_mut(i)
                .iter_mut()
                .zip(&self.feature_means)
                .zip(&self.feature_sds)
            {
                *v = *v * s + m;
            }
        }
        out
    }

    pub fn inverse_y(&self, yc: &DenseMatrix) -> DenseMatrix {
        let mut out = yc.clone();
        for i in 0..out.rows() {
            for (v, m) in out.row_mut(i).iter_mut().zip(&self.response_means) {
                *v += m;
            }
        }
        out
    }

    /// Converts standardized-scale coefficients into raw-scale coefficients
    /// and intercepts so that `y ≈ x_raw · w_raw + intercepts`.
    pub fn raw_coefficients(&self, w: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
        let mut w_raw = w.clone();
        for i in 0..w.rows() {
            let sd = self.feature_sds[i];
            w_raw.row_mut(i).iter_mut().for_each(|v| *v /= sd);
        }
        let mut intercepts = self.response_means.clone();
        for (i, &m) in self.feature_means.iter().enumerate() {
            for (b, &c) in intercepts.iter_mut().zip(w_raw.row(i)) {
                *b -= m * c;
            }
        }
        (w_raw, intercepts)
    }
}

pub(crate) fn column_mean_sd(m: &DenseMatrix, j: usize) -> (f64, f64) {
    let n = m.rows();
    let mean = (0..n).map(|i| m[(i, j)]).sum::<f64>() / n as f64;
    let var = (0..n).map(|i| (m[(i, j)] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var.sqrt())
}

/// Centres and scales each predictor column to sample sd 1 and centres each
/// response column. Constant predictor columns are only centred.
pub fn standardize(data: &LongitudinalDataset) -> Result<(LongitudinalDataset, StandardizationParams)> {
    let n = data.n_samples();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "standardize needs at least 2 samples, got {n}"
        )));
    }
    let d = data.n_features();
    let mut params = StandardizationParams::identity(d, data.n_times());
    for j in 0..d {
        let (mean, sd) = column_mean_sd(&data.x, j);
        params.feature_means[j] = mean;
        if sd <= 1e-12 * mean.abs().max(1.0) {
            warn!(
                "feature {} ({}) is constant; centring without scaling",
                j, data.feature_names[j]
            );
            params.constant_features.push(j);
        } else {
            params.feature_sds[j] = sd;
        }
    }
    for t in 0..data.n_times() {
        params.response_means[t] = (0..n).map(|i| data.y[(i, t)]).sum::<f64>() / n as f64;
    }
    let xs = params.transform_x(&data.x)?;
    let mut ys = data.y.clone();
    for i in 0..n {
        for (v, m) in ys.row_mut(i).iter_mut().zip(&params.response_means) {
            *v -= m;
        }
    }
    let out = LongitudinalDataset {
        x: xs,
        y: ys,
        feature_names: data.feature_names.clone(),
        time_labels: data.time_labels.clone(),
        informative_truth: data.informative_truth.clone(),
    };
    Ok((out, params))
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Parses a `t<hours>` header cell.
pub fn parse_time_label(cell: &str) -> Option<f64> {
    let rest = cell.trim().strip_prefix('t')?;
    rest.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn format_time_label(hours: f64) -> String {
    format!("t{hours}")
}

fn parse_numeric_csv(text: &str, label: &str) -> Result<(Vec<String>, DenseMatrix)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: label.to_string(),
            row: 1,
            col: 0,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Parse {
            path: label.to_string(),
            row: 1,
            col: 0,
            msg: "missing header row".into(),
        });
    }
    let cols = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        // 1-based file line, header is line 1
        let line = r + 2;
        let record = record.map_err(|e| Error::Parse {
            path: label.to_string(),
            row: line,
            col: 0,
            msg: e.to_string(),
        })?;
        if record.len() != cols {
            return Err(Error::Parse {
                path: label.to_string(),
                row: line,
                col: record.len().min(cols) + 1,
                msg: format!("expected {cols} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: label.to_string(),
                    row: line,
                    col: c + 1,
                    msg: format!("non-numeric value {cell:?}"),
                })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok((header, DenseMatrix::from_external(rows, cols, data)?))
}

/// Parses a predictor CSV: header holds feature names.
pub fn parse_x_csv(text: &str, label: &str) -> Result<(Vec<String>, DenseMatrix)> {
    parse_numeric_csv(text, label)
}

/// Parses a response CSV: header holds `t<hours>` time labels.
pub fn parse_y_csv(text: &str, label: &str) -> Result<(Vec<f64>, DenseMatrix)> {
    let (header, m) = parse_numeric_csv(text, label)?;
    let times = header
        .iter()
        .enumerate()
        .map(|(c, h)| {
            parse_time_label(h).ok_or_else(|| Error::Parse {
                path: label.to_string(),
                row: 1,
                col: c + 1,
                msg: format!("time label {h:?} is not of the form t<hours>"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((times, m))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_x_csv(path: &Path) -> Result<(Vec<String>, DenseMatrix)> {
    parse_x_csv(&read_text(path)?, &path.display().to_string())
}

pub fn read_y_csv(path: &Path) -> Result<(Vec<f64>, DenseMatrix)> {
    parse_y_csv(&read_text(path)?, &path.display().to_string())
}

pub fn load_dataset(x_path: &Path, y_path: &Path) -> Result<LongitudinalDataset> {
    let (names, x) = read_x_csv(x_path)?;
    let (times, y) = read_y_csv(y_path)?;
    LongitudinalDataset::new(x, y, names, times)
}

fn matrix_to_csv(header: &[String], m: &DenseMatrix) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn x_to_csv(feature_names: &[String], x: &DenseMatrix) -> String {
    matrix_to_csv(feature_names, x)
}

pub fn y_to_csv(time_labels: &[f64], y: &DenseMatrix) -> String {
    let header: Vec<String> = time_labels.iter().map(|&t| format_time_label(t)).collect();
    matrix_to_csv(&header, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, t: usize, seed: u64) -> LongitudinalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n * d).map(|_| rng.random_range(-3.0..5.0)).collect();
        let y = (0..n * t).map(|_| rng.random_range(0.0..2.0)).collect();
        LongitudinalDataset::from_matrices(
            DenseMatrix::new(n, d, x).unwrap(),
            DenseMatrix::new(n, t, y).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_column() {
        let x = DenseMatrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let y = DenseMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let data = LongitudinalDataset::from_matrices(x, y).unwrap();
        let (s, p) = standardize(&data).unwrap();
        assert_eq!(p.feature_means, vec![2.0]);
        assert!((p.feature_sds[0] - 2f64.sqrt()).abs() < 1e-15);
        let h = 1.0 / 2f64.sqrt();
        assert!((s.x()[(0, 0)] + h).abs() < 1e-15 && (s.x()[(1, 0)] - h).abs() < 1e-15);
        let (m, sd) = column_mean_sd(s.x(), 0);
        assert!(m.abs() < 1e-15 && (sd - 1.0).abs() < 1e-15);
        assert_eq!(s.y().column(0), vec![-0.5, 0.5]);
    }

    #[test]
    fn random_columns_are_standardized() {
        let data = random_dataset(50, 5, 2, 3);
        let (s, _) = standardize(&data).unwrap();
        for j in 0..5 {
            // recompute from scratch
            let col = s.x().column(j);
            let mean = col.iter().sum::<f64>() / 50.0;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-12);
        }
        for t in 0..2 {
            assert!(s.y().column(t).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn idempotent_on_standardized_data() {
        let (once, _) = standardize(&random_dataset(30, 4, 3, 8)).unwrap();
        let (twice, _) = standardize(&once).unwrap();
        assert!(twice.x().sub(once.x()).unwrap().max_abs() < 1e-12);
        assert!(twice.y().sub(once.y()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn inverse_transform_recovers_data() {
        let data = random_dataset(20, 3, 2, 4);
        let (s, p) = standardize(&data).unwrap();
        let x_back = p.inverse_x(s.x());
        let y_back = p.inverse_y(s.y());
        assert!(x_back.sub(data.x()).unwrap().max_abs() <= 1e-10 * data.x().max_abs());
        assert!(y_back.sub(data.y()).unwrap().max_abs() <= 1e-10 * data.y().max_abs());
    }

    #[test]
    fn constant_column_is_centred_only() {
        let x = DenseMatrix::from_rows(&[[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]).unwrap();
        let y = DenseMatrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let data = LongitudinalDataset::from_matrices(x, y).unwrap();
        let (s, p) = standardize(&data).unwrap();
        assert_eq!(p.constant_features, vec![0]);
        assert_eq!(p.feature_sds[0], 1.0);
        assert_eq!(s.x().column(0), vec![0.0; 3]);
    }

    #[test]
    fn standardize_needs_two_rows() {
        let data = random_dataset(1, 2, 1, 0);
        assert!(standardize(&data).is_err());
    }

    #[test]
    fn dataset_invariants() {
        let x = DenseMatrix::zeros(3, 2);
        let y = DenseMatrix::zeros(3, 2);
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(LongitudinalDataset::new(x.clone(), y.clone(), names.clone(), vec![5.0, 5.0]).is_err());
        assert!(LongitudinalDataset::new(x.clone(), y.clone(), names.clone(), vec![5.0]).is_err());
        assert!(LongitudinalDataset::new(x.clone(), DenseMatrix::zeros(2, 2), names.clone(), vec![1.0, 2.0]).is_err());
        assert!(LongitudinalDataset::new(x, y, names, vec![5.0, 10.0]).is_ok());
    }

    #[test]
    fn csv_parse_and_errors() {
        let (times, y) = parse_y_csv("t5,t10\n0.5,0.25\n1,2\n", "y.csv").unwrap();
        assert_eq!(times, vec![5.0, 10.0]);
        assert_eq!(y.to_rows(), vec![vec![0.5, 0.25], vec![1.0, 2.0]]);

        match parse_x_csv("a,b\n1,2\n3,oops\n", "x.csv") {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_y_csv("t5,hour10\n1,2\n", "y.csv"),
            Err(Error::Parse { row: 1, col: 2, .. })
        ));
        assert!(parse_x_csv("a,b\n1,NaN\n", "x.csv").is_err());
    }

    #[test]
    fn csv_text_round_trip() {
        let data = random_dataset(4, 3, 2, 10);
        let text = x_to_csv(data.feature_names(), data.x());
        let (names, x) = parse_x_csv(&text, "mem").unwrap();
        assert_eq!(names, data.feature_names());
        assert_eq!(&x, data.x());
        let text = y_to_csv(&[5.0, 10.0], data.y());
        assert!(text.starts_with("t5,t10\n"));
        let (_, y) = parse_y_csv(&text, "mem").unwrap();
        assert_eq!(&y, data.y());
    }
}
