use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::forest::{ForestParams, RegressionForest};
use crate::error::{AuditError, Result};
use crate::series::TimeSeriesMatrix;
use crate::stats::{design, is_constant, ols};

pub const LAG_FEATURES: usize = 5;
pub const MIN_LAGGED_ROWS: usize = 100;
pub const NONLINEARITY_FLAG: f64 = 0.30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityBlock {
    pub delta_rmse_rel: Vec<f64>,
    pub rmse_linear: Vec<f64>,
    pub rmse_forest: Vec<f64>,
    pub flagged: bool,
    pub folds: usize,
}

/// Forward-chained comparison of a linear lagged autoregression against a
/// tree ensemble on identical lag features.
pub fn audit_nonlinearity(series: &TimeSeriesMatrix, folds: usize, seed: u64) -> Result<NonlinearityBlock> {
    let (t_len, n) = (series.n_rows(), series.n_cols());
    let folds = folds.max(1);
    let mut block = NonlinearityBlock {
        delta_rmse_rel: Vec::with_capacity(n),
        rmse_linear: Vec::with_capacity(n),
        rmse_forest: Vec::with_capacity(n),
        flagged: false,
        folds,
    };
    let complete: Vec<bool> = (0..t_len)
        .map(|t| (0..n).all(|j| !series.is_missing(t, j)))
        .collect();
    let lag_ok: Vec<bool> = (0..t_len)
        .map(|t| t >= LAG_FEATURES && (1..=LAG_FEATURES).all(|l| complete[t - l]))
        .collect();
    // a constant column also makes every other target's lag design singular
    if let Some(j) = (0..n).find(|&j| is_constant(&series.observed_column(j))) {
        return Err(AuditError::DegenerateTarget(j));
    }
    for target in 0..n {
        let rows: Vec<usize> = (0..t_len)
            .filter(|&t| lag_ok[t] && !series.is_missing(t, target))
            .collect();
        if rows.len() < MIN_LAGGED_ROWS {
            return Err(AuditError::LowSample {
                what: "nonlinearity diagnostic",
                needed: MIN_LAGGED_ROWS,
                have: rows.len(),
            });
        }
        let y: Vec<f64> = rows.iter().map(|&t| series.get(t, target).unwrap()).collect();
        if is_constant(&y) {
            return Err(AuditError::DegenerateTarget(target));
        }
        let x: Vec<Vec<f64>> = rows
            .iter()
            .map(|&t| {
                (1..=LAG_FEATURES)
                    .flat_map(|l| (0..n).map(move |j| (l, j)))
                    .map(|(l, j)| series.get(t - l, j).unwrap())
                    .collect()
            })
            .collect();
        let blocks = folds + 1;
        let bound = |b: usize| b * rows.len() / blocks;
        let (mut se_lin, mut se_nl, mut count) = (0.0, 0.0, 0usize);
        for f in 1..=folds {
            let (train_end, test_end) = (bound(f), bound(f + 1));
            let xt = &x[..train_end];
            let yt = &y[..train_end];
            let with_intercept: Vec<Vec<f64>> = xt
                .iter()
                .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
                .collect();
            let lin = ols(&design(&with_intercept), &DVector::from_column_slice(yt))?;
            let forest = RegressionForest::fit(
                xt,
                yt,
                ForestParams {
                    seed: crate::rng::child_seed(seed, (target * 31 + f) as u64),
                    ..Default::default()
                },
            );
            for i in train_end..test_end {
                let row: Vec<f64> = std::iter::once(1.0).chain(x[i].iter().copied()).collect();
                se_lin += (y[i] - lin.predict_row(&row)).powi(2);
                se_nl += (y[i] - forest.predict(&x[i])).powi(2);
                count += 1;
            }
        }
        let rmse_lin = (se_lin / count as f64).sqrt();
        let rmse_nl = (se_nl / count as f64).sqrt();
        let delta = if rmse_lin > 0.0 {
            (rmse_lin - rmse_nl) / rmse_lin
        } else {
            0.0
        };
        block.rmse_linear.push(rmse_lin);
        block.rmse_forest.push(rmse_nl);
        block.delta_rmse_rel.push(delta);
    }
    block.flagged = block.delta_rmse_rel.iter().any(|&d| d > NONLINEARITY_FLAG);
    Ok(block)
}
