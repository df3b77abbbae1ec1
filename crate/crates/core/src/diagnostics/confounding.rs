use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::multiple::benjamini_yekutieli;
use crate::error::{AuditError, Result};
use crate::series::TimeSeriesMatrix;
use crate::stats::{design, f_sf, ols, variance};

pub const VIF_CAP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundingBlock {
    pub vif: Vec<f64>,
    /// True where the regression was singular or R^2 hit 1 and the VIF was capped.
    pub vif_capped: Vec<bool>,
    pub max_vif: f64,
    /// Per-equation Chow p-values at the midpoint of the VAR(1) sample.
    pub chow_pvalues: Vec<Option<f64>>,
    pub chow_pvalues_corrected: Vec<Option<f64>>,
    /// Maximum corrected p-value across equations.
    pub chow_pvalue: f64,
    /// Ratio of the largest to smallest rolling residual variance.
    pub resid_var_instability: f64,
    pub complete_rows: usize,
}

/// Variance inflation factors from regressing each column on the others.
pub fn variance_inflation(rows: &[Vec<f64>]) -> Vec<(f64, bool)> {
    let n = rows.first().map_or(0, Vec::len);
    (0..n)
        .map(|j| {
            let y: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let sst = variance(&y) * (y.len() as f64 - 1.0);
            if sst <= 0.0 {
                return (1.0, false);
            }
            let x: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    std::iter::once(1.0)
                        .chain(r.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, v)| *v))
                        .collect()
                })
                .collect();
            match ols(&design(&x), &DVector::from_vec(y)) {
                Ok(fit) => {
                    let r2 = 1.0 - fit.ssr / sst;
                    if r2 >= 1.0 - 1.0 / VIF_CAP {
                        (VIF_CAP, true)
                    } else {
                        ((1.0 / (1.0 - r2)).max(1.0), false)
                    }
                }
                Err(_) => (VIF_CAP, true),
            }
        })
        .collect()
}

fn with_intercept(lagged: &[Vec<f64>]) -> Vec<Vec<f64>> {
    lagged
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect()
}

/// Chow F-test p-value for one equation split at `split`.
fn chow_test(x: &[Vec<f64>], y: &[f64], split: usize) -> Option<f64> {
    let k = x.first()?.len();
    let n = y.len();
    if split <= k || n - split <= k {
        return None;
    }
    let ssr = |a: usize, b: usize| {
        ols(&design(&x[a..b]), &DVector::from_column_slice(&y[a..b]))
            .ok()
            .map(|f| f.ssr)
    };
    let full = ssr(0, n)?;
    let s1 = ssr(0, split)?;
    let s2 = ssr(split, n)?;
    let within = s1 + s2;
    let df2 = (n - 2 * k) as f64;
    if within <= 0.0 {
        return Some(if full > within { 0.0 } else { 1.0 });
    }
    let f = ((full - within).max(0.0) / k as f64) / (within / df2);
    Some(f_sf(f, k as f64, df2))
}

pub fn audit_confounding(series: &TimeSeriesMatrix) -> Result<ConfoundingBlock> {
    let n = series.n_cols();
    if n < 2 {
        return Err(AuditError::LowSample {
            what: "confounding diagnostics (variables)",
            needed: 2,
            have: n,
        });
    }
    let complete: Vec<Vec<f64>> = series
        .complete_rows()
        .into_iter()
        .map(|t| series.raw_row(t).to_vec())
        .collect();
    if complete.len() < 10 * n {
        return Err(AuditError::LowSample {
            what: "confounding diagnostics",
            needed: 10 * n,
            have: complete.len(),
        });
    }
    let vifs = variance_inflation(&complete);
    let vif: Vec<f64> = vifs.iter().map(|v| v.0).collect();
    let vif_capped: Vec<bool> = vifs.iter().map(|v| v.1).collect();
    let max_vif = vif.iter().copied().fold(1.0, f64::max);

    let (current, lagged) = series.complete_case_lags(1);
    let x = with_intercept(&lagged);
    let m = current.len();
    let split = m / 2;
    let chow_pvalues: Vec<Option<f64>> = (0..n)
        .map(|j| {
            let y: Vec<f64> = current.iter().map(|r| r[j]).collect();
            chow_test(&x, &y, split)
        })
        .collect();
    let present: Vec<f64> = chow_pvalues.iter().flatten().copied().collect();
    let adjusted = benjamini_yekutieli(&present)?;
    let mut it = adjusted.iter();
    let chow_pvalues_corrected: Vec<Option<f64>> = chow_pvalues
        .iter()
        .map(|p| p.and_then(|_| it.next().copied()))
        .collect();
    let chow_pvalue = adjusted.iter().copied().fold(f64::NAN, f64::max);
    let chow_pvalue = if chow_pvalue.is_nan() { 1.0 } else { chow_pvalue };

    // pooled standardized residual variance over rolling windows
    let xd = design(&x);
    let mut pooled = vec![0.0; m];
    let mut used = 0usize;
    for j in 0..n {
        let y = DVector::from_iterator(m, current.iter().map(|r| r[j]));
        let Ok(fit) = ols(&xd, &y) else { continue };
        let resid: Vec<f64> = (0..m).map(|r| y[r] - fit.predict_row(&x[r])).collect();
        let s2 = resid.iter().map(|e| e * e).sum::<f64>() / m as f64;
        if s2 <= 0.0 {
            continue;
        }
        for (acc, e) in pooled.iter_mut().zip(&resid) {
            *acc += e * e / s2;
        }
        used += 1;
    }
    let resid_var_instability = if used == 0 {
        1.0
    } else {
        let w = (m / 5).max(10).min(m);
        let mut window: f64 = pooled[..w].iter().sum();
        let (mut lo, mut hi) = (window, window);
        for t in w..m {
            window += pooled[t] - pooled[t - w];
            lo = lo.min(window);
            hi = hi.max(window);
        }
        if lo > 0.0 {
            hi / lo
        } else {
            f64::MAX
        }
    };
    Ok(ConfoundingBlock {
        vif,
        vif_capped,
        max_vif,
        chow_pvalues,
        chow_pvalues_corrected,
        chow_pvalue,
        resid_var_instability,
        complete_rows: complete.len(),
    })
}
