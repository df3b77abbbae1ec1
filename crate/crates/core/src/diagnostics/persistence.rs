use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::series::TimeSeriesMatrix;
use crate::stats::{chi2_sf, is_constant, mean};

pub const MIN_PERSISTENCE_OBS: usize = 30;
/// Self-consistent window constant: stop at the first `M >= C * tau(M)`.
pub const WINDOW_CONSTANT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceBlock {
    pub tau_int: Vec<f64>,
    pub tau_int_max: f64,
    pub t_eff: f64,
    pub t_eff_ratio: f64,
    pub ljung_box_pvalues: Vec<Option<f64>>,
    pub ljung_box_lags: Vec<usize>,
    pub degenerate_columns: Vec<usize>,
}

/// Integrated autocorrelation time `0.5 + sum_{l=1..M} rho(l)` with an
/// automatic window, clamped below at 0.5.
pub fn integrated_autocorr_time(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < MIN_PERSISTENCE_OBS {
        return Err(AuditError::LowSample {
            what: "integrated autocorrelation time",
            needed: MIN_PERSISTENCE_OBS,
            have: n,
        });
    }
    if is_constant(x) {
        return Err(AuditError::ConstantSeries);
    }
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    let mut tau = 0.5;
    for lag in 1..n {
        let c: f64 = d[lag..].iter().zip(&d[..n - lag]).map(|(a, b)| a * b).sum();
        tau += c / c0;
        if lag as f64 >= WINDOW_CONSTANT * tau {
            break;
        }
    }
    Ok(tau.max(0.5))
}

/// Ljung-Box portmanteau p-value at `h` lags.
pub fn ljung_box(x: &[f64], h: usize) -> f64 {
    let n = x.len() as f64;
    let rho = crate::stats::autocorrelation(x, h);
    let q: f64 = (1..rho.len())
        .map(|k| rho[k] * rho[k] / (n - k as f64))
        .sum::<f64>()
        * n
        * (n + 2.0);
    chi2_sf(q, (rho.len() - 1).max(1) as f64)
}

pub fn audit_persistence(series: &TimeSeriesMatrix) -> Result<PersistenceBlock> {
    let n = series.n_cols();
    let mut tau_int = Vec::with_capacity(n);
    let mut ljung_box_pvalues = Vec::with_capacity(n);
    let mut ljung_box_lags = Vec::with_capacity(n);
    let mut degenerate_columns = Vec::new();
    for j in 0..n {
        let y = series.observed_column(j);
        if y.len() < MIN_PERSISTENCE_OBS {
            return Err(AuditError::LowSample {
                what: "persistence diagnostics",
                needed: MIN_PERSISTENCE_OBS,
                have: y.len(),
            });
        }
        let h = (y.len() / 5).min(10);
        ljung_box_lags.push(h);
        match integrated_autocorr_time(&y) {
            Ok(t) => {
                tau_int.push(t);
                ljung_box_pvalues.push(Some(ljung_box(&y, h)));
            }
            Err(AuditError::ConstantSeries) => {
                degenerate_columns.push(j);
                tau_int.push(0.5);
                ljung_box_pvalues.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let tau_int_max = tau_int.iter().copied().fold(0.5, f64::max);
    let t = series.n_rows() as f64;
    let t_eff = (t / (2.0 * tau_int_max)).min(t);
    Ok(PersistenceBlock {
        tau_int,
        tau_int_max,
        t_eff,
        t_eff_ratio: t_eff / t,
        ljung_box_pvalues,
        ljung_box_lags,
        degenerate_columns,
    })
}
