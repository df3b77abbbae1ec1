use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{fit_isotonic, logistic_risk, Dimension, LogisticRiskModel, PerDimension, RiskModels};
use crate::diagnostics::Features;
use crate::error::{AuditError, Result};
use crate::stats::{fit_logistic, LogisticOptions};

pub const MIN_CALIBRATION_CORPUS: usize = 50;

/// One training example: features, per-dimension failure labels, family id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub features: Features,
    /// `true` marks a failure (the adverse outcome the risk predicts).
    pub labels: PerDimension<bool>,
    pub family: String,
}

/// Gaussian prior scales used as ridge penalties around zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub weight_sd: f64,
    pub intercept_sd: f64,
    pub family_offset_sd: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            weight_sd: 2.0,
            intercept_sd: 5.0,
            family_offset_sd: 1.0,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

/// Penalized maximum-likelihood fit of the four logistic models with family
/// intercept offsets, followed by isotonic maps on the corpus raw scores.
///
/// The fit itself is deterministic; `seed` is recorded in the output for provenance.
pub fn calibrate_models(corpus: &[CalibrationSample], priors: &Priors, seed: u64) -> Result<RiskModels> {
    if corpus.len() < MIN_CALIBRATION_CORPUS {
        return Err(AuditError::InsufficientLabels(format!(
            "corpus has {} samples, need {MIN_CALIBRATION_CORPUS}",
            corpus.len()
        )));
    }
    let families: Vec<&str> = corpus
        .iter()
        .map(|s| s.family.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = RiskModels {
        seed: Some(seed),
        ..RiskModels::default()
    };
    for d in Dimension::ALL {
        let positives = corpus.iter().filter(|s| *s.labels.get(d)).count();
        if positives == 0 || positives == corpus.len() {
            return Err(AuditError::InsufficientLabels(format!(
                "dimension {d} has a single label class"
            )));
        }
        let init_model = LogisticRiskModel::default_for(d);
        let slots: Vec<_> = init_model.weights.keys().copied().collect();
        let k = 1 + slots.len() + families.len();
        let x: Vec<Vec<f64>> = corpus
            .iter()
            .map(|s| {
                let mut row = Vec::with_capacity(k);
                row.push(1.0);
                row.extend(slots.iter().map(|&slot| s.features.get(slot)));
                row.extend(families.iter().map(|&f| if s.family == f { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        let y: Vec<f64> = corpus
            .iter()
            .map(|s| if *s.labels.get(d) { 1.0 } else { 0.0 })
            .collect();
        let mut precision = vec![1.0 / priors.intercept_sd.powi(2)];
        precision.extend(std::iter::repeat_n(1.0 / priors.weight_sd.powi(2), slots.len()));
        precision.extend(std::iter::repeat_n(1.0 / priors.family_offset_sd.powi(2), families.len()));
        let mut init = vec![init_model.intercept];
        init.extend(slots.iter().map(|s| init_model.weights[s]));
        init.extend(std::iter::repeat_n(0.0, families.len()));
        let fit = fit_logistic(
            &x,
            &y,
            &LogisticOptions {
                prior_precision: &precision,
                init: &init,
                max_iter: priors.max_iter,
                tol: priors.tol,
                ..Default::default()
            },
        );
        if !fit.converged {
            return Err(AuditError::NonConvergence {
                iterations: fit.iterations,
                grad_norm: fit.grad_norm,
            });
        }
        let model = LogisticRiskModel {
            intercept: fit.coef[0],
            weights: slots
                .iter()
                .zip(&fit.coef[1..=slots.len()])
                .map(|(&s, &w)| (s, w))
                .collect(),
        };
        let offsets: BTreeMap<String, f64> = families
            .iter()
            .zip(&fit.coef[1 + slots.len()..])
            .map(|(f, &o)| (f.to_string(), o))
            .collect();
        let raw: Vec<f64> = corpus.iter().map(|s| logistic_risk(&s.features, &model)).collect();
        let labels: Vec<bool> = corpus.iter().map(|s| *s.labels.get(d)).collect();
        *out.maps.get_mut(d) = fit_isotonic(&raw, &labels)?;
        *out.models.get_mut(d) = model;
        *out.family_offsets.get_mut(d) = offsets;
    }
    Ok(out)
}
