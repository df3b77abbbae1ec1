//! Small numerical helpers shared by the diagnostics: moments, autocorrelation,
//! distribution tails and least squares.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{AuditError, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with `n - 1` denominator.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Population (`n` denominator) standard deviation.
pub fn population_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn is_constant(x: &[f64]) -> bool {
    match x.first() {
        None => true,
        Some(&first) => {
            let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            x.iter().all(|v| (v - first).abs() <= 1e-12 * scale)
        }
    }
}

/// Biased sample autocorrelations `rho(0..=max_lag)` (denominator `n * c0`).
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    let max_lag = max_lag.min(n.saturating_sub(1));
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for lag in 1..=max_lag {
        let c: f64 = d[lag..].iter().zip(&d[..n - lag]).map(|(a, b)| a * b).sum();
        out.push(if c0 > 0.0 { c / c0 } else { 0.0 });
    }
    out
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn chi2_sf(stat: f64, df: f64) -> f64 {
    if !stat.is_finite() {
        return if stat > 0.0 { 0.0 } else { 1.0 };
    }
    if stat <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).map(|d| d.sf(stat)).unwrap_or(f64::NAN)
}

pub fn f_sf(stat: f64, df1: f64, df2: f64) -> f64 {
    if !stat.is_finite() {
        return if stat > 0.0 { 0.0 } else { 1.0 };
    }
    if stat <= 0.0 {
        return 1.0;
    }
    FisherSnedecor::new(df1, df2)
        .map(|d| d.sf(stat))
        .unwrap_or(f64::NAN)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Ordinary least squares fit.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub ssr: f64,
    pub n: usize,
    pub k: usize,
    /// `(X'X)^{-1}`, used for standard errors.
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    pub fn sigma2(&self) -> f64 {
        self.ssr / (self.n - self.k) as f64
    }

    pub fn std_error(&self, j: usize) -> f64 {
        (self.sigma2() * self.xtx_inv[(j, j)]).sqrt()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coef).map(|(a, b)| a * b).sum()
    }
}

/// Least squares of `y` on the columns of `x` via the normal equations.
///
/// Columns are rescaled before the Cholesky factorization so that the
/// singularity check is scale-free.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(AuditError::LowSample {
            what: "least squares",
            needed: k + 1,
            have: n,
        });
    }
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let d = xtx[(j, j)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    if scale.iter().any(|&s| s == 0.0) {
        return Err(AuditError::SingularDesign("least squares"));
    }
    let scaled = DMatrix::from_fn(k, k, |i, j| xtx[(i, j)] * scale[i] * scale[j]);
    let chol = scaled
        .cholesky()
        .ok_or(AuditError::SingularDesign("least squares"))?;
    let diag_min = (0..k)
        .map(|i| chol.l_dirty()[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if diag_min < 1e-7 {
        return Err(AuditError::SingularDesign("least squares"));
    }
    let inv_scaled = chol.inverse();
    let xtx_inv = DMatrix::from_fn(k, k, |i, j| inv_scaled[(i, j)] * scale[i] * scale[j]);
    let beta = &xtx_inv * &xty;
    let resid = y - x * &beta;
    Ok(OlsFit {
        coef: beta.iter().copied().collect(),
        ssr: resid.norm_squared(),
        n,
        k,
        xtx_inv,
    })
}

/// Result of a (possibly penalized) logistic regression fit.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    /// Unpenalized (weighted) log-likelihood at `coef`.
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Options for [`fit_logistic`]. Empty prior vectors mean no penalty.
#[derive(Debug, Clone, Default)]
pub struct LogisticOptions<'a> {
    pub weights: Option<&'a [f64]>,
    pub prior_mean: &'a [f64],
    pub prior_precision: &'a [f64],
    pub init: &'a [f64],
    pub max_iter: usize,
    pub tol: f64,
}

fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Damped Newton fit of `P(y = 1) = sigmoid(x' beta)` minimizing the negative
/// log-likelihood plus `0.5 * sum prec_j (beta_j - mean_j)^2`.
///
/// `y` may hold fractional responses in `[0, 1]`. Convergence means the
/// gradient's max-norm fell below `tol`.
pub fn fit_logistic(x: &[Vec<f64>], y: &[f64], opts: &LogisticOptions) -> LogisticFit {
    let k = x.first().map_or(0, Vec::len);
    let weight = |i: usize| opts.weights.map_or(1.0, |w| w[i]);
    let prec = |j: usize| opts.prior_precision.get(j).copied().unwrap_or(0.0);
    let mu = |j: usize| opts.prior_mean.get(j).copied().unwrap_or(0.0);
    let max_iter = if opts.max_iter == 0 { 100 } else { opts.max_iter };
    let tol = if opts.tol > 0.0 { opts.tol } else { 1e-8 };

    let loglik = |beta: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .enumerate()
            .map(|(i, (row, &yi))| {
                let z: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
                weight(i) * (yi * log_sigmoid(z) + (1.0 - yi) * log_sigmoid(-z))
            })
            .sum()
    };
    let objective = |beta: &[f64]| -> f64 {
        let pen: f64 = (0..k).map(|j| 0.5 * prec(j) * (beta[j] - mu(j)).powi(2)).sum();
        -loglik(beta) + pen
    };

    let mut beta: Vec<f64> = if opts.init.len() == k {
        opts.init.to_vec()
    } else {
        vec![0.0; k]
    };
    let mut obj = objective(&beta);
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut grad = DVector::<f64>::zeros(k);
        let mut hess = DMatrix::<f64>::zeros(k, k);
        for (i, (row, &yi)) in x.iter().zip(y).enumerate() {
            let z: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(z);
            let w = weight(i);
            let r = w * (p - yi);
            let v = w * p * (1.0 - p);
            for a in 0..k {
                grad[a] += r * row[a];
                for b in 0..=a {
                    hess[(a, b)] += v * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            grad[a] += prec(a) * (beta[a] - mu(a));
            hess[(a, a)] += prec(a);
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        grad_norm = grad.amax();
        if grad_norm < tol {
            converged = true;
            break;
        }
        iterations += 1;
        let scale = hess.diagonal().amax().max(1.0);
        let mut ridge = 1e-12 * scale;
        let step = loop {
            let mut h = hess.clone();
            for a in 0..k {
                h[(a, a)] += ridge;
            }
            if let Some(ch) = h.cholesky() {
                break ch.solve(&grad);
            }
            ridge *= 100.0;
            if ridge > scale * 1e6 {
                break grad.clone() / scale;
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - t * s).collect();
            let c = objective(&cand);
            if c.is_finite() && c <= obj + 1e-12 * obj.abs().max(1.0) {
                beta = cand;
                obj = c;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    LogisticFit {
        log_likelihood: loglik(&beta),
        coef: beta,
        converged,
        iterations,
        grad_norm,
    }
}

/// Build a design matrix from row vectors.
pub fn design(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, k, |i, j| rows[i][j])
}
