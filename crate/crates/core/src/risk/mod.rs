//! Stage II: logistic aggregation, isotonic calibration and bootstrap intervals.

mod calibrate;
mod isotonic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate_models, CalibrationSample, Priors};
pub use isotonic::{fit_isotonic, IsotonicMap};

use crate::config::AuditConfig;
use crate::diagnostics::{DiagnosticReport, FeatureSlot, Features};
use crate::error::{AuditError, Result};
use crate::rng::{child_seed, rng_from_seed};
use crate::stats::{mean, sigmoid, std_dev};

/// The four calibrated risk dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Nonstat,
    Irreg,
    Persist,
    Confound,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Nonstat,
        Dimension::Irreg,
        Dimension::Persist,
        Dimension::Confound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Nonstat => "nonstat",
            Dimension::Irreg => "irreg",
            Dimension::Persist => "persist",
            Dimension::Confound => "confound",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per risk dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerDimension<T> {
    pub nonstat: T,
    pub irreg: T,
    pub persist: T,
    pub confound: T,
}

impl<T> PerDimension<T> {
    pub fn from_fn(mut f: impl FnMut(Dimension) -> T) -> Self {
        Self {
            nonstat: f(Dimension::Nonstat),
            irreg: f(Dimension::Irreg),
            persist: f(Dimension::Persist),
            confound: f(Dimension::Confound),
        }
    }

    pub fn get(&self, d: Dimension) -> &T {
        match d {
            Dimension::Nonstat => &self.nonstat,
            Dimension::Irreg => &self.irreg,
            Dimension::Persist => &self.persist,
            Dimension::Confound => &self.confound,
        }
    }

    pub fn get_mut(&mut self, d: Dimension) -> &mut T {
        match d {
            Dimension::Nonstat => &mut self.nonstat,
            Dimension::Irreg => &mut self.irreg,
            Dimension::Persist => &mut self.persist,
            Dimension::Confound => &mut self.confound,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Dimension, &T)> {
        Dimension::ALL.into_iter().map(move |d| (d, self.get(d)))
    }

    pub fn map<U>(&self, mut f: impl FnMut(Dimension, &T) -> U) -> PerDimension<U> {
        PerDimension::from_fn(|d| f(d, self.get(d)))
    }
}

/// `R_k = sigmoid(intercept + sum_j w_j x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRiskModel {
    pub intercept: f64,
    pub weights: BTreeMap<FeatureSlot, f64>,
}

impl LogisticRiskModel {
    /// Expert-initialized defaults.
    pub fn default_for(d: Dimension) -> Self {
        use FeatureSlot::*;
        let (intercept, w): (f64, &[(FeatureSlot, f64)]) = match d {
            Dimension::Nonstat => (-2.0, &[(XBreakMag, 1.0), (XDrift, 2.0), (XAdf, 0.5), (XKpss, 0.5)]),
            Dimension::Irreg => (-1.5, &[(XGapCv, 2.5), (XMissing, 2.0), (XSeasonalMiss, 1.5)]),
            Dimension::Persist => (-1.5, &[(XTeffRatio, -3.0), (XTauInt, 2.0)]),
            Dimension::Confound => (-6.5, &[(XChow, 2.0), (XResidVar, 1.8), (XVif, 0.5)]),
        };
        Self {
            intercept,
            weights: w.iter().copied().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.intercept.is_finite() || self.weights.values().any(|w| !w.is_finite()) {
            return Err(AuditError::InvalidInput("non-finite risk model parameter".into()));
        }
        Ok(())
    }

    /// Per-feature contributions `w_j * x_j`, in weight-key order.
    pub fn contributions(&self, features: &Features) -> Vec<(FeatureSlot, f64)> {
        self.weights
            .iter()
            .map(|(&slot, &w)| (slot, w * features.get(slot)))
            .collect()
    }

    pub fn linear_predictor(&self, features: &Features) -> f64 {
        self.intercept
            + self
                .contributions(features)
                .iter()
                .map(|c| c.1)
                .sum::<f64>()
    }
}

/// Uncalibrated risk `sigmoid(intercept + w . x)`.
pub fn logistic_risk(features: &Features, model: &LogisticRiskModel) -> f64 {
    sigmoid(model.linear_predictor(features))
}

/// Bootstrap summary for one dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    /// Inflation-adjusted standard deviation.
    pub sd_adjusted: f64,
}

/// Parametric bootstrap with Gaussian feature noise `N(0, max(0.1|x|, 0.05))`,
/// features clamped to `[0, 1]`, calibration applied per draw, and the SD
/// inflated by `sqrt(T / T_eff)`.
pub fn bootstrap_interval(
    features: &Features,
    model: &LogisticRiskModel,
    map: &IsotonicMap,
    t: f64,
    t_eff: f64,
    b: usize,
    seed: u64,
) -> Result<BootstrapInterval> {
    if !(t_eff > 0.0 && t_eff <= t) {
        return Err(AuditError::InvalidTeff { t_eff, t });
    }
    if b < 2 {
        return Err(AuditError::InvalidInput("bootstrap needs at least 2 iterations".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut draws = Vec::with_capacity(b);
    for _ in 0..b {
        let mut perturbed = *features;
        for (slot, x) in features.iter() {
            let sd = (0.1 * x.abs()).max(0.05);
            let eps = Normal::new(0.0, sd).expect("positive sd").sample(&mut rng);
            perturbed.set(slot, (x + eps).clamp(0.0, 1.0));
        }
        draws.push(map.apply(logistic_risk(&perturbed, model)));
    }
    let m = mean(&draws);
    let sd_adjusted = std_dev(&draws) * (t / t_eff).sqrt();
    Ok(BootstrapInterval {
        mean: m,
        lo: (m - 1.96 * sd_adjusted).max(0.0),
        hi: (m + 1.96 * sd_adjusted).min(1.0),
        sd_adjusted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub feature: FeatureSlot,
    pub contribution: f64,
}

/// Calibrated risk of one dimension with its interval and contribution ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRisk {
    pub risk: f64,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub intercept: f64,
    /// Contributions sorted by absolute size.
    #[serde(default)]
    pub ledger: Vec<LedgerEntry>,
    /// Uncalibrated, unperturbed logistic risk.
    #[serde(default)]
    pub raw_risk: f64,
}

impl DimensionRisk {
    /// A bare point risk with a zero-width interval.
    pub fn point(risk: f64) -> Self {
        Self {
            risk,
            lo: risk,
            hi: risk,
            intercept: 0.0,
            ledger: Vec::new(),
            raw_risk: risk,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn linear_predictor(&self) -> f64 {
        self.intercept + self.ledger.iter().map(|e| e.contribution).sum::<f64>()
    }
}

/// Stage II output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub nonstat: DimensionRisk,
    pub irreg: DimensionRisk,
    pub persist: DimensionRisk,
    pub confound: DimensionRisk,
    pub t_eff_ratio: f64,
}

impl RiskProfile {
    /// Literal point risks `(nonstat, irreg, persist, confound)` with zero-width intervals.
    pub fn from_points(points: [f64; 4], t_eff_ratio: f64) -> Self {
        Self {
            nonstat: DimensionRisk::point(points[0]),
            irreg: DimensionRisk::point(points[1]),
            persist: DimensionRisk::point(points[2]),
            confound: DimensionRisk::point(points[3]),
            t_eff_ratio,
        }
    }

    pub fn get(&self, d: Dimension) -> &DimensionRisk {
        match d {
            Dimension::Nonstat => &self.nonstat,
            Dimension::Irreg => &self.irreg,
            Dimension::Persist => &self.persist,
            Dimension::Confound => &self.confound,
        }
    }

    pub fn risk(&self, d: Dimension) -> f64 {
        self.get(d).risk
    }

    pub fn points(&self) -> PerDimension<f64> {
        PerDimension::from_fn(|d| self.risk(d))
    }

    pub fn validate(&self) -> Result<()> {
        for d in Dimension::ALL {
            let r = self.get(d);
            let ok = [r.risk, r.lo, r.hi].iter().all(|v| (0.0..=1.0).contains(v))
                && r.lo <= r.risk
                && r.risk <= r.hi;
            if !ok {
                return Err(AuditError::InvalidInput(format!(
                    "{d} risk {} with interval [{}, {}] is inconsistent",
                    r.risk, r.lo, r.hi
                )));
            }
        }
        if !(self.t_eff_ratio > 0.0 && self.t_eff_ratio <= 1.0) {
            return Err(AuditError::InvalidInput(format!(
                "t_eff_ratio {} outside (0, 1]",
                self.t_eff_ratio
            )));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let p: RiskProfile =
            serde_json::from_str(text).map_err(|e| AuditError::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

/// Deployed Stage II parameters; serialized as the YAML calibration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModels {
    pub models: PerDimension<LogisticRiskModel>,
    pub maps: PerDimension<IsotonicMap>,
    /// Fitted per-family intercept offsets (reported, not used when scoring).
    #[serde(default)]
    pub family_offsets: PerDimension<BTreeMap<String, f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for RiskModels {
    fn default() -> Self {
        Self {
            models: PerDimension::from_fn(LogisticRiskModel::default_for),
            maps: PerDimension::from_fn(|_| IsotonicMap::identity()),
            family_offsets: PerDimension::default(),
            seed: None,
        }
    }
}

impl RiskModels {
    pub fn validate(&self) -> Result<()> {
        for d in Dimension::ALL {
            self.models.get(d).validate()?;
            self.maps.get(d).validate()?;
        }
        Ok(())
    }

    pub fn to_yaml_string(&self) -> Result<String> {
        Ok(serde_yaml::to_string(self)?)
    }

    pub fn from_yaml_str(text: &str) -> Result<Self> {
        let m: RiskModels = serde_yaml::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_yaml_str(&std::fs::read_to_string(path)?)
    }

    /// Calibrated, unperturbed risk for one dimension.
    pub fn calibrated_risk(&self, d: Dimension, features: &Features) -> f64 {
        self.maps
            .get(d)
            .apply(logistic_risk(features, self.models.get(d)))
    }
}

/// Score one dimension: ledger, bootstrap mean as the point risk, and interval.
pub fn score_dimension(
    d: Dimension,
    features: &Features,
    models: &RiskModels,
    t: f64,
    t_eff: f64,
    b: usize,
    seed: u64,
) -> Result<DimensionRisk> {
    let model = models.models.get(d);
    let mut ledger: Vec<LedgerEntry> = model
        .contributions(features)
        .into_iter()
        .map(|(feature, contribution)| LedgerEntry {
            feature,
            contribution,
        })
        .collect();
    ledger.sort_by(|a, b| b.contribution.abs().total_cmp(&a.contribution.abs()));
    let interval = bootstrap_interval(features, model, models.maps.get(d), t, t_eff, b, seed)?;
    Ok(DimensionRisk {
        risk: interval.mean,
        lo: interval.lo,
        hi: interval.hi,
        intercept: model.intercept,
        ledger,
        raw_risk: logistic_risk(features, model),
    })
}

/// Four calibrated risks with intervals from a diagnostic report.
pub fn compute_risk_profile(
    report: &DiagnosticReport,
    models: &RiskModels,
    config: &AuditConfig,
) -> Result<RiskProfile> {
    let t = report.n_rows as f64;
    let t_eff = report.persistence.t_eff;
    let b = config.bootstrap_iterations.max(2);
    let score = |d: Dimension| {
        score_dimension(
            d,
            &report.features,
            models,
            t,
            t_eff,
            b,
            child_seed(config.bootstrap_seed, d.index() as u64),
        )
    };
    Ok(RiskProfile {
        nonstat: score(Dimension::Nonstat)?,
        irreg: score(Dimension::Irreg)?,
        persist: score(Dimension::Persist)?,
        confound: score(Dimension::Confound)?,
        t_eff_ratio: report.persistence.t_eff_ratio,
    })
}
