use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::series::TimeSeriesMatrix;
use crate::stats::{chi2_sf, fit_logistic, mean, LogisticOptions};

pub const MIN_IRREGULARITY_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrregularityBlock {
    /// Largest per-variable gap CV over observed timestamps.
    pub gap_cv: f64,
    pub gap_cv_per_var: Vec<f64>,
    pub missing_fraction: f64,
    /// `None` when not applicable (no missingness or a single pattern).
    pub mcar_pvalue: Option<f64>,
    pub mcar_statistic: Option<f64>,
    pub mcar_df: Option<usize>,
    /// Patterns dropped because their pairwise covariance block was not positive definite.
    pub mcar_patterns_skipped: usize,
    /// `None` when there is no missingness or no period hint.
    pub seasonal_missing_pvalue: Option<f64>,
}

/// Population SD of successive gaps divided by the mean gap.
pub fn gap_coefficient_of_variation(timestamps: &[f64]) -> Result<f64> {
    if timestamps.len() < 3 {
        return Err(AuditError::TooFewPoints {
            needed: 3,
            have: timestamps.len(),
        });
    }
    let gaps: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    let m = mean(&gaps);
    if m <= 0.0 {
        return Err(AuditError::InvalidInput("timestamps must be increasing".into()));
    }
    let var = gaps.iter().map(|g| (g - m).powi(2)).sum::<f64>() / gaps.len() as f64;
    // exact zero for equal spacing despite rounding in the gaps
    let rel = var.sqrt() / m;
    Ok(if rel < 1e-12 { 0.0 } else { rel })
}

/// Little-style MCAR chi-square using pairwise-complete means and covariances.
///
/// Returns `(statistic, df, pvalue, skipped_patterns)`, or `None` when there
/// is only one missingness pattern.
pub fn little_mcar(series: &TimeSeriesMatrix) -> Option<(f64, usize, f64, usize)> {
    let (t_len, n) = (series.n_rows(), series.n_cols());
    let mut patterns: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for t in 0..t_len {
        let key: Vec<bool> = (0..n).map(|j| !series.is_missing(t, j)).collect();
        patterns.entry(key).or_default().push(t);
    }
    if patterns.len() < 2 {
        return None;
    }
    let mu: Vec<f64> = (0..n).map(|j| mean(&series.observed_column(j))).collect();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let (mut s, mut c) = (0.0, 0usize);
            for t in 0..t_len {
                if let (Some(x), Some(y)) = (series.get(t, a), series.get(t, b)) {
                    s += (x - mu[a]) * (y - mu[b]);
                    c += 1;
                }
            }
            let v = if c > 1 { s / (c - 1) as f64 } else { 0.0 };
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let mut stat = 0.0;
    let mut observed_total = 0usize;
    let mut skipped = 0usize;
    for (key, rows) in &patterns {
        let obs: Vec<usize> = (0..n).filter(|&j| key[j]).collect();
        if obs.is_empty() {
            continue;
        }
        let sub = DMatrix::from_fn(obs.len(), obs.len(), |a, b| cov[(obs[a], obs[b])]);
        let Some(chol) = sub.cholesky() else {
            skipped += 1;
            continue;
        };
        let diff = DVector::from_iterator(
            obs.len(),
            obs.iter().map(|&j| {
                rows.iter().map(|&t| series.get(t, j).unwrap_or(0.0)).sum::<f64>() / rows.len() as f64
                    - mu[j]
            }),
        );
        let solved = chol.solve(&diff);
        stat += rows.len() as f64 * diff.dot(&solved);
        observed_total += obs.len();
    }
    let df = observed_total.saturating_sub(n);
    if df == 0 {
        return None;
    }
    Some((stat, df, chi2_sf(stat, df as f64), skipped))
}

/// Likelihood-ratio test of missingness on one sin/cos harmonic of `period`.
pub fn seasonal_missingness_pvalue(series: &TimeSeriesMatrix, period: f64) -> Option<f64> {
    let (t_len, n) = (series.n_rows(), series.n_cols());
    let mut x = Vec::with_capacity(t_len);
    let mut y = Vec::with_capacity(t_len);
    let mut w = Vec::with_capacity(t_len);
    let mut total_missing = 0usize;
    for (t, &ts) in series.timestamps().iter().enumerate() {
        let missing = (0..n).filter(|&j| series.is_missing(t, j)).count();
        total_missing += missing;
        let phase = 2.0 * PI * ts / period;
        x.push(vec![1.0, phase.sin(), phase.cos()]);
        y.push(missing as f64 / n as f64);
        w.push(n as f64);
    }
    if total_missing == 0 || total_missing == t_len * n {
        return None;
    }
    let opts = LogisticOptions {
        weights: Some(&w),
        max_iter: 200,
        ..Default::default()
    };
    let full = fit_logistic(&x, &y, &opts);
    let x0: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0]]).collect();
    let null = fit_logistic(&x0, &y, &opts);
    let lr = (2.0 * (full.log_likelihood - null.log_likelihood)).max(0.0);
    Some(chi2_sf(lr, 2.0))
}

pub fn audit_irregularity(
    series: &TimeSeriesMatrix,
    period_hint: Option<f64>,
) -> Result<IrregularityBlock> {
    let t_len = series.n_rows();
    if t_len < MIN_IRREGULARITY_ROWS {
        return Err(AuditError::LowSample {
            what: "irregularity diagnostics",
            needed: MIN_IRREGULARITY_ROWS,
            have: t_len,
        });
    }
    let mut gap_cv_per_var = Vec::with_capacity(series.n_cols());
    for j in 0..series.n_cols() {
        let times = series.observed_times(j);
        gap_cv_per_var.push(if times.len() >= 3 {
            gap_coefficient_of_variation(&times)?
        } else {
            0.0
        });
    }
    let gap_cv = gap_cv_per_var.iter().copied().fold(0.0, f64::max);
    let missing_fraction = series.missing_fraction();
    let mcar = if series.missing_count() > 0 {
        little_mcar(series)
    } else {
        None
    };
    let seasonal_missing_pvalue = match period_hint {
        Some(p) if series.missing_count() > 0 => seasonal_missingness_pvalue(series, p),
        _ => None,
    };
    Ok(IrregularityBlock {
        gap_cv,
        gap_cv_per_var,
        missing_fraction,
        mcar_pvalue: mcar.map(|m| m.2),
        mcar_statistic: mcar.map(|m| m.0),
        mcar_df: mcar.map(|m| m.1),
        mcar_patterns_skipped: mcar.map_or(0, |m| m.3),
        seasonal_missing_pvalue,
    })
}
