use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decision::{default_catalog, MethodSpec};
use crate::error::{AuditError, Result};

/// Utilities of a correct recommendation, a failed one, and abstaining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utilities {
    pub u_plus: f64,
    pub u_minus: f64,
    pub u_abstain: f64,
}

impl Default for Utilities {
    fn default() -> Self {
        Self {
            u_plus: 1.0,
            u_minus: 4.0,
            u_abstain: 0.5,
        }
    }
}

/// Scales that map raw diagnostics onto `[0, 1]` feature slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureAnchors {
    /// Break magnitude (pooled SD units) that saturates `x_break_mag`.
    pub break_magnitude: f64,
    /// Absolute drift z-score that saturates `x_drift`.
    pub drift_z: f64,
    pub gap_cv: f64,
    pub missing_fraction: f64,
    pub tau_int: f64,
    /// Decades of residual-variance ratio that saturate `x_resid_var`.
    pub resid_var_decades: f64,
    /// Decades of VIF that saturate `x_vif`.
    pub vif_decades: f64,
}

impl Default for FeatureAnchors {
    fn default() -> Self {
        Self {
            break_magnitude: 3.0,
            drift_z: 6.0,
            gap_cv: 1.0,
            missing_fraction: 0.5,
            tau_int: 20.0,
            resid_var_decades: 1.0,
            vif_decades: 4.0,
        }
    }
}

/// Thresholds of the mandatory abstention conditions and the selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbstentionRules {
    pub min_teff_ratio: f64,
    pub max_interval_width: f64,
    pub catastrophic_nonstat: f64,
    pub compound_nonstat: f64,
    pub compound_confound: f64,
    pub catastrophic_composite: f64,
    pub min_confidence: f64,
    /// Persistence risk above which PCMCI+ is preferred when admissible.
    pub prefer_pcmci_persist: f64,
}

impl Default for AbstentionRules {
    fn default() -> Self {
        Self {
            min_teff_ratio: 0.30,
            max_interval_width: 0.5,
            catastrophic_nonstat: 0.85,
            compound_nonstat: 0.70,
            compound_confound: 0.85,
            catastrophic_composite: 0.90,
            min_confidence: 0.60,
            prefer_pcmci_persist: 0.70,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub utilities: Utilities,
    pub bootstrap_iterations: usize,
    pub bootstrap_seed: u64,
    /// Significance level for the diagnostics and discovery.
    pub alpha: f64,
    /// Maximum lag for VAR-Granger discovery.
    pub max_lag: usize,
    /// Seasonal period in timestamp units, used by the seasonal-missingness test.
    pub period_hint: Option<f64>,
    pub nonlinearity_folds: usize,
    pub nonlinearity_seed: u64,
    pub anchors: FeatureAnchors,
    pub abstention: AbstentionRules,
    pub catalog: Vec<MethodSpec>,
    /// Optional extra gate: recommend only when every point risk is below this.
    pub strict_max_risk: Option<f64>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            utilities: Utilities::default(),
            bootstrap_iterations: 100,
            bootstrap_seed: 42,
            alpha: 0.05,
            max_lag: 1,
            period_hint: None,
            nonlinearity_folds: 3,
            nonlinearity_seed: 7,
            anchors: FeatureAnchors::default(),
            abstention: AbstentionRules::default(),
            catalog: default_catalog(),
            strict_max_risk: None,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(AuditError::InvalidConfig(format!("{name} = {v} outside [0, 1]")))
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        let u = &self.utilities;
        if u.u_plus < 0.0 || u.u_minus < 0.0 || u.u_abstain < 0.0 {
            return Err(AuditError::InvalidConfig("utilities must be non-negative".into()));
        }
        if u.u_minus < u.u_abstain {
            return Err(AuditError::InvalidConfig(
                "u_minus must be at least u_abstain".into(),
            ));
        }
        if self.bootstrap_iterations < 1 {
            return Err(AuditError::InvalidConfig("bootstrap_iterations must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AuditError::InvalidConfig(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if self.max_lag < 1 {
            return Err(AuditError::InvalidConfig("max_lag must be >= 1".into()));
        }
        if let Some(p) = self.period_hint {
            if !(p.is_finite() && p > 0.0) {
                return Err(AuditError::InvalidConfig("period_hint must be positive".into()));
            }
        }
        let a = &self.anchors;
        for (name, v) in [
            ("break_magnitude", a.break_magnitude),
            ("drift_z", a.drift_z),
            ("gap_cv", a.gap_cv),
            ("missing_fraction", a.missing_fraction),
            ("tau_int", a.tau_int),
            ("resid_var_decades", a.resid_var_decades),
            ("vif_decades", a.vif_decades),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(AuditError::InvalidConfig(format!("anchor {name} must be positive")));
            }
        }
        let r = &self.abstention;
        for (name, v) in [
            ("min_teff_ratio", r.min_teff_ratio),
            ("max_interval_width", r.max_interval_width),
            ("catastrophic_nonstat", r.catastrophic_nonstat),
            ("compound_nonstat", r.compound_nonstat),
            ("compound_confound", r.compound_confound),
            ("catastrophic_composite", r.catastrophic_composite),
            ("min_confidence", r.min_confidence),
            ("prefer_pcmci_persist", r.prefer_pcmci_persist),
        ] {
            check_unit(name, v)?;
        }
        if let Some(s) = self.strict_max_risk {
            check_unit("strict_max_risk", s)?;
        }
        for m in &self.catalog {
            m.validate()?;
        }
        Ok(())
    }

    pub fn from_yaml_str(text: &str) -> Result<Self> {
        let cfg: AuditConfig = serde_yaml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_yaml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_yaml_string(&self) -> Result<String> {
        Ok(serde_yaml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = AuditConfig::default();
        cfg.validate().unwrap();
        let back = AuditConfig::from_yaml_str(&cfg.to_yaml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_yaml_fills_defaults() {
        let cfg = AuditConfig::from_yaml_str("alpha: 0.01\nperiod_hint: 12\n").unwrap();
        assert_eq!(cfg.alpha, 0.01);
        assert_eq!(cfg.period_hint, Some(12.0));
        assert_eq!(cfg.bootstrap_iterations, 100);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(AuditConfig::from_yaml_str("alpha: 1.5\n").is_err());
        assert!(AuditConfig::from_yaml_str("bootstrap_iterations: 0\n").is_err());
        assert!(AuditConfig::from_yaml_str(
            "utilities: {u_plus: 1, u_minus: 0.1, u_abstain: 0.5}\n"
        )
        .is_err());
        assert!(AuditConfig::from_yaml_str("no_such_field: 1\n").is_err());
    }
}
