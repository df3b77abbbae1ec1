use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::multiple::benjamini_yekutieli;
use super::tables::{interpolate, ADF_TAU_C, KPSS_LEVEL};
use crate::error::{AuditError, Result};
use crate::series::TimeSeriesMatrix;
use crate::stats::{is_constant, mean, ols};

pub const MIN_STATIONARITY_OBS: usize = 50;
pub const MAX_BREAKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityBlock {
    /// `None` for constant columns.
    pub adf_stat: Vec<Option<f64>>,
    pub adf_lags: Vec<Option<usize>>,
    pub adf_pvalues: Vec<Option<f64>>,
    pub adf_pvalues_corrected: Vec<Option<f64>>,
    pub kpss_stat: Vec<Option<f64>>,
    pub kpss_pvalues: Vec<Option<f64>>,
    pub kpss_pvalues_corrected: Vec<Option<f64>>,
    pub break_count: usize,
    /// Largest adjacent segment-mean jump in pooled within-segment SD units.
    pub break_magnitude: f64,
    pub break_locations: Vec<usize>,
    pub drift_slope_z: Vec<Option<f64>>,
    /// Columns where ADF fails to reject or KPSS rejects at the corrected level.
    pub flagged_columns: Vec<usize>,
    pub degenerate_columns: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdfResult {
    pub stat: f64,
    pub lags: usize,
    pub pvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpssResult {
    pub stat: f64,
    pub bandwidth: usize,
    pub pvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakResult {
    pub count: usize,
    pub locations: Vec<usize>,
    pub magnitude: f64,
}

fn adf_design(y: &[f64], dy: &[f64], lags: usize, start: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows = dy.len() - start;
    let k = 2 + lags;
    let x = DMatrix::from_fn(rows, k, |r, c| {
        let t = start + r;
        match c {
            0 => 1.0,
            1 => y[t],
            _ => dy[t - (c - 1)],
        }
    });
    let target = DVector::from_iterator(rows, dy[start..].iter().copied());
    (x, target)
}

/// Augmented Dickey-Fuller test with a constant; lag order by AIC on a common sample.
pub fn adf_test(y: &[f64]) -> Result<AdfResult> {
    let n = y.len();
    if n < MIN_STATIONARITY_OBS {
        return Err(AuditError::LowSample {
            what: "ADF test",
            needed: MIN_STATIONARITY_OBS,
            have: n,
        });
    }
    if is_constant(y) {
        return Err(AuditError::ConstantSeries);
    }
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let max_lag = ((12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize).min(dy.len() / 4);
    let mut best = (f64::INFINITY, 0usize);
    for p in 0..=max_lag {
        let (x, target) = adf_design(y, &dy, p, max_lag);
        let fit = match ols(&x, &target) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let m = fit.n as f64;
        let aic = m * (fit.ssr / m).ln() + 2.0 * fit.k as f64;
        if aic < best.0 {
            best = (aic, p);
        }
    }
    let lags = best.1;
    let (x, target) = adf_design(y, &dy, lags, lags);
    let fit = ols(&x, &target)?;
    let se = fit.std_error(1);
    let stat = if se > 0.0 { fit.coef[1] / se } else { f64::NEG_INFINITY };
    Ok(AdfResult {
        stat,
        lags,
        pvalue: interpolate(ADF_TAU_C, stat),
    })
}

/// KPSS level-stationarity test with a Bartlett long-run variance.
pub fn kpss_test(y: &[f64]) -> Result<KpssResult> {
    let n = y.len();
    if n < MIN_STATIONARITY_OBS {
        return Err(AuditError::LowSample {
            what: "KPSS test",
            needed: MIN_STATIONARITY_OBS,
            have: n,
        });
    }
    if is_constant(y) {
        return Err(AuditError::ConstantSeries);
    }
    let m = mean(y);
    let e: Vec<f64> = y.iter().map(|v| v - m).collect();
    let nf = n as f64;
    let mut partial = 0.0;
    let mut eta_num = 0.0;
    for v in &e {
        partial += v;
        eta_num += partial * partial;
    }
    eta_num /= nf * nf;
    let bandwidth = (4.0 * (nf / 100.0).powf(0.25)).floor() as usize;
    let gamma = |l: usize| e[l..].iter().zip(&e[..n - l]).map(|(a, b)| a * b).sum::<f64>() / nf;
    let mut lrv = gamma(0);
    for l in 1..=bandwidth.min(n - 1) {
        lrv += 2.0 * (1.0 - l as f64 / (bandwidth as f64 + 1.0)) * gamma(l);
    }
    let stat = eta_num / lrv;
    Ok(KpssResult {
        stat,
        bandwidth,
        pvalue: interpolate(KPSS_LEVEL, stat),
    })
}

/// OLS slope of value on time divided by its standard error.
pub fn drift_slope_z(times: &[f64], y: &[f64]) -> Result<f64> {
    let n = y.len();
    let t0 = mean(times);
    let x = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { times[r] - t0 });
    let fit = ols(&x, &DVector::from_column_slice(y))?;
    let se = fit.std_error(1);
    let z = if se > 0.0 {
        fit.coef[1] / se
    } else if fit.coef[1] == 0.0 {
        0.0
    } else {
        fit.coef[1].signum() * 1e6
    };
    Ok(z.clamp(-1e6, 1e6))
}

struct Prefix {
    count: Vec<f64>,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Prefix {
    fn new(col: &[Option<f64>]) -> Self {
        let n = col.len();
        let (mut count, mut sum, mut sumsq) = (vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]);
        for (t, v) in col.iter().enumerate() {
            let (c, s, q) = match v {
                Some(x) => (1.0, *x, x * x),
                None => (0.0, 0.0, 0.0),
            };
            count[t + 1] = count[t] + c;
            sum[t + 1] = sum[t] + s;
            sumsq[t + 1] = sumsq[t] + q;
        }
        Self { count, sum, sumsq }
    }

    fn segment(&self, a: usize, b: usize) -> (f64, f64, f64) {
        (
            self.count[b] - self.count[a],
            self.sum[b] - self.sum[a],
            self.sumsq[b] - self.sumsq[a],
        )
    }

    fn ssr(&self, a: usize, b: usize) -> f64 {
        let (c, s, q) = self.segment(a, b);
        if c > 0.0 {
            (q - s * s / c).max(0.0)
        } else {
            0.0
        }
    }
}

/// Multiple mean-shift detection by dynamic programming over segment SSR,
/// pooled across standardized columns; the break count is chosen by BIC.
///
/// `columns[j][t]` is `None` where the cell is missing.
pub fn detect_mean_breaks(columns: &[Vec<Option<f64>>], max_breaks: usize) -> BreakResult {
    let none = BreakResult {
        count: 0,
        locations: Vec::new(),
        magnitude: 0.0,
    };
    let Some(t_len) = columns.first().map(Vec::len) else {
        return none;
    };
    let standardized: Vec<Vec<Option<f64>>> = columns
        .iter()
        .map(|col| {
            let obs: Vec<f64> = col.iter().flatten().copied().collect();
            let m = mean(&obs);
            let sd = crate::stats::std_dev(&obs);
            col.iter()
                .map(|v| v.map(|x| if sd > 0.0 { (x - m) / sd } else { 0.0 }))
                .collect()
        })
        .collect();
    let prefixes: Vec<Prefix> = standardized.iter().map(|c| Prefix::new(c)).collect();
    let n_cols = prefixes.len();
    let n_obs: f64 = prefixes.iter().map(|p| p.count[t_len]).sum();
    if n_obs < 2.0 {
        return none;
    }
    let h = ((0.15 * t_len as f64).ceil() as usize).max(30);
    let cost = |a: usize, b: usize| prefixes.iter().map(|p| p.ssr(a, b)).sum::<f64>();

    let inf = f64::INFINITY;
    // best[m][b]: minimal SSR of rows 0..b split into m + 1 segments
    let mut best: Vec<Vec<f64>> = vec![vec![inf; t_len + 1]; max_breaks + 1];
    let mut arg: Vec<Vec<usize>> = vec![vec![0; t_len + 1]; max_breaks + 1];
    for b in h..=t_len {
        best[0][b] = cost(0, b);
    }
    for m in 1..=max_breaks {
        for b in ((m + 1) * h)..=t_len {
            let mut bv = inf;
            let mut ba = 0;
            for a in (m * h)..=(b - h) {
                let prev = best[m - 1][a];
                if prev == inf {
                    continue;
                }
                let v = prev + cost(a, b);
                if v < bv {
                    bv = v;
                    ba = a;
                }
            }
            best[m][b] = bv;
            arg[m][b] = ba;
        }
    }
    let mut chosen = 0;
    let mut best_bic = inf;
    for m in 0..=max_breaks {
        let ssr = best[m][t_len];
        if ssr == inf {
            continue;
        }
        let params = ((m + 1) * n_cols + m) as f64;
        let bic = n_obs * (ssr.max(1e-300) / n_obs).ln() + params * n_obs.ln();
        if bic < best_bic {
            best_bic = bic;
            chosen = m;
        }
    }
    if chosen == 0 {
        return none;
    }
    let mut locations = Vec::with_capacity(chosen);
    let mut b = t_len;
    for m in (1..=chosen).rev() {
        let a = arg[m][b];
        locations.push(a);
        b = a;
    }
    locations.reverse();

    let mut bounds = vec![0];
    bounds.extend(&locations);
    bounds.push(t_len);
    let mut magnitude: f64 = 0.0;
    for p in &prefixes {
        let within: f64 = bounds.windows(2).map(|w| p.ssr(w[0], w[1])).sum();
        let dof = p.count[t_len] - (chosen + 1) as f64;
        if dof <= 0.0 {
            continue;
        }
        let pooled_sd = (within / dof).sqrt();
        if pooled_sd <= 0.0 {
            continue;
        }
        let means: Vec<Option<f64>> = bounds
            .windows(2)
            .map(|w| {
                let (c, s, _) = p.segment(w[0], w[1]);
                (c > 0.0).then(|| s / c)
            })
            .collect();
        for w in means.windows(2) {
            if let (Some(a), Some(b)) = (w[0], w[1]) {
                magnitude = magnitude.max((b - a).abs() / pooled_sd);
            }
        }
    }
    BreakResult {
        count: chosen,
        locations,
        magnitude,
    }
}

pub fn audit_stationarity(series: &TimeSeriesMatrix, alpha: f64) -> Result<StationarityBlock> {
    let n = series.n_cols();
    for j in 0..n {
        let have = series.observed_count(j);
        if have < MIN_STATIONARITY_OBS {
            return Err(AuditError::LowSample {
                what: "stationarity diagnostics",
                needed: MIN_STATIONARITY_OBS,
                have,
            });
        }
    }
    let mut block = StationarityBlock {
        adf_stat: vec![None; n],
        adf_lags: vec![None; n],
        adf_pvalues: vec![None; n],
        adf_pvalues_corrected: vec![None; n],
        kpss_stat: vec![None; n],
        kpss_pvalues: vec![None; n],
        kpss_pvalues_corrected: vec![None; n],
        break_count: 0,
        break_magnitude: 0.0,
        break_locations: Vec::new(),
        drift_slope_z: vec![None; n],
        flagged_columns: Vec::new(),
        degenerate_columns: Vec::new(),
    };
    let mut live_columns = Vec::new();
    for j in 0..n {
        let y = series.observed_column(j);
        if is_constant(&y) {
            block.degenerate_columns.push(j);
            continue;
        }
        let adf = adf_test(&y)?;
        let kpss = kpss_test(&y)?;
        block.adf_stat[j] = Some(adf.stat);
        block.adf_lags[j] = Some(adf.lags);
        block.adf_pvalues[j] = Some(adf.pvalue);
        block.kpss_stat[j] = Some(kpss.stat);
        block.kpss_pvalues[j] = Some(kpss.pvalue);
        block.drift_slope_z[j] = Some(drift_slope_z(&series.observed_times(j), &y)?);
        live_columns.push(j);
    }
    let correct = |raw: &[Option<f64>]| -> Result<Vec<Option<f64>>> {
        let present: Vec<f64> = raw.iter().flatten().copied().collect();
        let adjusted = benjamini_yekutieli(&present)?;
        let mut it = adjusted.into_iter();
        Ok(raw.iter().map(|p| p.and_then(|_| it.next())).collect())
    };
    block.adf_pvalues_corrected = correct(&block.adf_pvalues)?;
    block.kpss_pvalues_corrected = correct(&block.kpss_pvalues)?;
    block.flagged_columns = live_columns
        .iter()
        .copied()
        .filter(|&j| {
            block.adf_pvalues_corrected[j].is_some_and(|p| p > alpha)
                || block.kpss_pvalues_corrected[j].is_some_and(|p| p < alpha)
        })
        .collect();

    let columns: Vec<Vec<Option<f64>>> = live_columns
        .iter()
        .map(|&j| (0..series.n_rows()).map(|t| series.get(t, j)).collect())
        .collect();
    let breaks = detect_mean_breaks(&columns, MAX_BREAKS);
    block.break_count = breaks.count;
    block.break_magnitude = breaks.magnitude;
    block.break_locations = breaks.locations;
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn random_walk_does_not_reject() {
        let mut y = noise(500, 3);
        for t in 1..y.len() {
            y[t] += y[t - 1];
        }
        assert!(adf_test(&y).unwrap().pvalue > 0.05);
        assert!(kpss_test(&y).unwrap().pvalue < 0.05);
    }

    #[test]
    fn univariate_step_is_located() {
        let mut y = noise(500, 11);
        for v in &mut y[250..] {
            *v += 3.0;
        }
        let r = detect_mean_breaks(&[y.into_iter().map(Some).collect()], MAX_BREAKS);
        assert_eq!(r.count, 1);
        assert!((r.locations[0] as i64 - 250).abs() <= 10);
        assert!(r.magnitude > 2.5 && r.magnitude < 3.5);
    }

    #[test]
    fn constant_input_rejected() {
        assert!(matches!(adf_test(&[1.0; 80]), Err(AuditError::ConstantSeries)));
    }
}
