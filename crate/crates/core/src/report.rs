//! Box-plot summaries of observed and predicted responses per time point.

use crate::error::{Error, Result};
use crate::matrix::{shape_str, DenseMatrix};

/// Quantile `p ∈ [0, 1]` of ascending `sorted` by linear interpolation
/// between order statistics: with `h = (n − 1)·p`, the result is
/// `x[⌊h⌋] + (h − ⌊h⌋)·(x[⌊h⌋ + 1] − x[⌊h⌋])`.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Five-number summary with Tukey fences at `1.5·IQR`.
///
/// `min` and `max` are the whisker ends: the most extreme values that lie
/// inside the fences. Values outside are listed in `outliers`, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("box plot of an empty sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("box plot sample contains non-finite values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile_linear(&sorted, 0.25);
        let median = quantile_linear(&sorted, 0.5);
        let q3 = quantile_linear(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = sorted.iter().copied().filter(|&v| v >= lo_fence && v <= hi_fence).collect();
        let outliers = sorted.iter().copied().filter(|&v| v < lo_fence || v > hi_fence).collect();
        Ok(Self {
            // the quartiles always lie inside the fences, so `inside` is nonempty
            min: inside[0],
            q1,
            median,
            q3,
            max: inside[inside.len() - 1],
            outliers,
        })
    }
}

/// One row of the box-plot table.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxplotRow {
    pub hour: f64,
    /// `"E"` for the observed effect, `"P"` for the prediction.
    pub series: &'static str,
    pub stats: BoxStats,
}

/// Per-time-point summaries of observed (`E`) and predicted (`P`) values.
pub fn boxplot_rows(observed: &DenseMatrix, predicted: &DenseMatrix, hours: &[f64]) -> Result<Vec<BoxplotRow>> {
    if observed.shape() != predicted.shape() || observed.cols() != hours.len() {
        return Err(Error::dims(
            "boxplot_rows",
            format!("{} predictions and {} hours", shape_str(observed.shape()), observed.cols()),
            format!("{} predictions and {} hours", shape_str(predicted.shape()), hours.len()),
        ));
    }
    let mut rows = Vec::with_capacity(2 * hours.len());
    for (t, &hour) in hours.iter().enumerate() {
        for (series, m) in [("E", observed), ("P", predicted)] {
            rows.push(BoxplotRow {
                hour,
                series,
                stats: BoxStats::from_sample(&m.column(t))?,
            });
        }
    }
    Ok(rows)
}

/// CSV with header `hour,series,min,q1,median,q3,max,n_outliers,outliers`;
/// the outlier values are joined with `;`.
pub fn boxplot_csv(rows: &[BoxplotRow]) -> String {
    let mut out = String::from("hour,series,min,q1,median,q3,max,n_outliers,outliers\n");
    for r in rows {
        let s = &r.stats;
        let outliers: Vec<String> = s.outliers.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.hour,
            r.series,
            s.min,
            s.q1,
            s.median,
            s.q3,
            s.max,
            s.outliers.len(),
            outliers.join(";")
        ));
    }
    out
}
