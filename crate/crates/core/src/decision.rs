//! Stage III: method admissibility, selection and mandatory abstention.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::AuditConfig;
use crate::error::{AuditError, Result};
use crate::risk::{Dimension, RiskProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub threshold: f64,
    pub kind: ConstraintKind,
}

impl Constraint {
    pub fn hard(threshold: f64) -> Self {
        Self {
            threshold,
            kind: ConstraintKind::Hard,
        }
    }

    pub fn soft(threshold: f64) -> Self {
        Self {
            threshold,
            kind: ConstraintKind::Soft,
        }
    }
}

/// A catalog entry: per-dimension risk constraints for one discovery method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub composite_threshold: f64,
    pub constraints: BTreeMap<Dimension, Constraint>,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

pub const GRANGER: &str = "Granger";
pub const PCMCI_PLUS: &str = "PCMCI+";

impl MethodSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(AuditError::InvalidConfig(format!("method {}: {what}", self.name)));
        if self.name.is_empty() {
            return Err(AuditError::InvalidConfig("method name is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.composite_threshold) {
            return bad(format!("composite threshold {} outside [0, 1]", self.composite_threshold));
        }
        for (d, c) in &self.constraints {
            if !(0.0..=1.0).contains(&c.threshold) {
                return bad(format!("{d} threshold {} outside [0, 1]", c.threshold));
            }
        }
        Ok(())
    }

    pub fn hard_dimensions(&self) -> impl Iterator<Item = Dimension> + '_ {
        self.constraints
            .iter()
            .filter(|(_, c)| c.kind == ConstraintKind::Hard)
            .map(|(d, _)| *d)
    }

    fn with(name: &str, composite: f64, enabled: bool, cs: [(Dimension, Constraint); 4]) -> Self {
        Self {
            name: name.into(),
            composite_threshold: composite,
            constraints: cs.into_iter().collect(),
            enabled,
        }
    }
}

/// Granger and PCMCI+ enabled; LPCMCI and Transfer Entropy shipped disabled.
pub fn default_catalog() -> Vec<MethodSpec> {
    use Dimension::*;
    vec![
        MethodSpec::with(
            GRANGER,
            0.30,
            true,
            [
                (Nonstat, Constraint::hard(0.60)),
                (Irreg, Constraint::hard(0.50)),
                (Persist, Constraint::soft(0.75)),
                (Confound, Constraint::hard(0.60)),
            ],
        ),
        MethodSpec::with(
            PCMCI_PLUS,
            0.70,
            true,
            [
                (Nonstat, Constraint::hard(0.80)),
                (Irreg, Constraint::soft(0.60)),
                (Persist, Constraint::soft(0.85)),
                (Confound, Constraint::soft(0.80)),
            ],
        ),
        MethodSpec::with(
            "LPCMCI",
            0.80,
            false,
            [
                (Nonstat, Constraint::hard(0.80)),
                (Irreg, Constraint::soft(0.70)),
                (Persist, Constraint::soft(0.85)),
                (Confound, Constraint::soft(0.90)),
            ],
        ),
        MethodSpec::with(
            "Transfer Entropy",
            0.90,
            false,
            [
                (Nonstat, Constraint::soft(0.85)),
                (Irreg, Constraint::soft(0.80)),
                (Persist, Constraint::soft(0.90)),
                (Confound, Constraint::soft(0.95)),
            ],
        ),
    ]
}

/// Risk level below which recommending beats abstaining in expected utility.
pub fn abstention_threshold(u_plus: f64, u_minus: f64, u_abstain: f64) -> Result<f64> {
    let denom = u_plus + u_minus;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(AuditError::ZeroDenominator);
    }
    Ok(((u_plus + u_abstain) / denom).clamp(0.0, 1.0))
}

/// Maximum point risk over the method's hard dimensions (0 if it has none).
pub fn composite_risk(profile: &RiskProfile, method: &MethodSpec) -> f64 {
    method
        .hard_dimensions()
        .map(|d| profile.risk(d))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Warning {
    /// A soft constraint of the chosen method is exceeded.
    SoftConstraint {
        dimension: Dimension,
        risk: f64,
        threshold: f64,
    },
    /// Point risk at or above the utility-derived abstention threshold.
    ElevatedRisk {
        dimension: Dimension,
        risk: f64,
        threshold: f64,
    },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::SoftConstraint {
                dimension,
                risk,
                threshold,
            } => write!(f, "{dimension} risk {risk:.2} exceeds soft threshold {threshold:.2}"),
            Warning::ElevatedRisk {
                dimension,
                risk,
                threshold,
            } => write!(f, "{dimension} risk {risk:.2} at or above abstention threshold {threshold:.2}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub method: String,
    pub admissible: bool,
    pub composite: f64,
    pub confidence: f64,
    /// Hard dimensions whose threshold is exceeded.
    pub hard_violations: Vec<Dimension>,
    pub composite_exceeded: bool,
    pub warnings: Vec<Warning>,
}

/// Evaluate every enabled method against the point risks.
pub fn evaluate_methods(profile: &RiskProfile, catalog: &[MethodSpec]) -> Vec<Admissibility> {
    catalog
        .iter()
        .filter(|m| m.enabled)
        .map(|m| {
            let composite = composite_risk(profile, m);
            let mut hard_violations = Vec::new();
            let mut warnings = Vec::new();
            for (&d, c) in &m.constraints {
                let r = profile.risk(d);
                if r > c.threshold {
                    match c.kind {
                        ConstraintKind::Hard => hard_violations.push(d),
                        ConstraintKind::Soft => warnings.push(Warning::SoftConstraint {
                            dimension: d,
                            risk: r,
                            threshold: c.threshold,
                        }),
                    }
                }
            }
            let composite_exceeded = composite > m.composite_threshold;
            Admissibility {
                method: m.name.clone(),
                admissible: hard_violations.is_empty() && !composite_exceeded,
                composite,
                confidence: 1.0 - composite,
                hard_violations,
                composite_exceeded,
                warnings,
            }
        })
        .collect()
}

/// Names of admissible methods with their soft-constraint warnings.
pub fn admissible_methods(profile: &RiskProfile, catalog: &[MethodSpec]) -> Vec<(String, Vec<Warning>)> {
    evaluate_methods(profile, catalog)
        .into_iter()
        .filter(|a| a.admissible)
        .map(|a| (a.method, a.warnings))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    LowEffectiveSample,
    WideInterval,
    CatastrophicNonstationarity,
    CompoundNonstationarityConfounding,
    CatastrophicComposite,
    NoConfidentMethod,
    StrictRiskGate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reason {
    pub code: ReasonCode,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Recommend,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsUsed {
    pub theta_abstain: f64,
    pub min_teff_ratio: f64,
    pub max_interval_width: f64,
    pub catastrophic_nonstat: f64,
    pub compound_nonstat: f64,
    pub compound_confound: f64,
    pub catastrophic_composite: f64,
    pub min_confidence: f64,
    pub prefer_pcmci_persist: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict_max_risk: Option<f64>,
    pub methods: Vec<MethodSpec>,
}

/// Serialized as `recommendation_policy.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    #[serde(rename = "decision")]
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub confidence: f64,
    pub warnings: Vec<Warning>,
    pub reasons: Vec<Reason>,
    pub candidates: Vec<Admissibility>,
    pub thresholds_used: ThresholdsUsed,
}

impl Decision {
    pub fn is_recommend(&self) -> bool {
        self.outcome == Outcome::Recommend
    }

    pub fn has_reason(&self, code: ReasonCode) -> bool {
        self.reasons.iter().any(|r| r.code == code)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AuditError::Parse(e.to_string()))
    }
}

fn pick<'a>(admissible: &[&'a Admissibility], name: &str) -> Option<&'a Admissibility> {
    admissible.iter().copied().find(|a| a.method == name)
}

/// Apply the mandatory abstention conditions, then the selection rule.
///
/// All triggered abstention reasons are reported, not just the first.
pub fn decide(profile: &RiskProfile, catalog: &[MethodSpec], config: &AuditConfig) -> Result<Decision> {
    if !catalog.iter().any(|m| m.enabled) {
        return Err(AuditError::EmptyCatalog);
    }
    let rules = &config.abstention;
    let u = &config.utilities;
    let theta = abstention_threshold(u.u_plus, u.u_minus, u.u_abstain)?;
    let candidates = evaluate_methods(profile, catalog);
    let mut reasons = Vec::new();
    let mut reason = |code, detail: String| reasons.push(Reason { code, detail });

    if profile.t_eff_ratio < rules.min_teff_ratio {
        reason(
            ReasonCode::LowEffectiveSample,
            format!("T_eff/T = {:.3} < {:.2}", profile.t_eff_ratio, rules.min_teff_ratio),
        );
    }
    for d in Dimension::ALL {
        let w = profile.get(d).width();
        if w > rules.max_interval_width {
            reason(
                ReasonCode::WideInterval,
                format!("{d} interval width {w:.3} > {:.2}", rules.max_interval_width),
            );
        }
    }
    let r_ns = profile.risk(Dimension::Nonstat);
    let r_cf = profile.risk(Dimension::Confound);
    if r_ns > rules.catastrophic_nonstat {
        reason(
            ReasonCode::CatastrophicNonstationarity,
            format!("nonstat risk {r_ns:.2} > {:.2}", rules.catastrophic_nonstat),
        );
    }
    if r_ns > rules.compound_nonstat && r_cf > rules.compound_confound {
        reason(
            ReasonCode::CompoundNonstationarityConfounding,
            format!(
                "nonstat risk {r_ns:.2} > {:.2} and confound risk {r_cf:.2} > {:.2}",
                rules.compound_nonstat, rules.compound_confound
            ),
        );
    }
    if candidates.iter().all(|a| a.composite > rules.catastrophic_composite) {
        reason(
            ReasonCode::CatastrophicComposite,
            format!("hard-dimension composite > {:.2} for every method", rules.catastrophic_composite),
        );
    }
    let admissible: Vec<&Admissibility> = candidates.iter().filter(|a| a.admissible).collect();
    if !admissible.iter().any(|a| a.confidence > rules.min_confidence) {
        reason(
            ReasonCode::NoConfidentMethod,
            format!("no admissible method with confidence > {:.2}", rules.min_confidence),
        );
    }
    if let Some(gate) = config.strict_max_risk {
        let worst = Dimension::ALL.iter().map(|&d| profile.risk(d)).fold(0.0, f64::max);
        if worst >= gate {
            reason(ReasonCode::StrictRiskGate, format!("max risk {worst:.2} >= {gate:.2}"));
        }
    }

    let thresholds_used = ThresholdsUsed {
        theta_abstain: theta,
        min_teff_ratio: rules.min_teff_ratio,
        max_interval_width: rules.max_interval_width,
        catastrophic_nonstat: rules.catastrophic_nonstat,
        compound_nonstat: rules.compound_nonstat,
        compound_confound: rules.compound_confound,
        catastrophic_composite: rules.catastrophic_composite,
        min_confidence: rules.min_confidence,
        prefer_pcmci_persist: rules.prefer_pcmci_persist,
        strict_max_risk: config.strict_max_risk,
        methods: catalog.iter().filter(|m| m.enabled).cloned().collect(),
    };

    if !reasons.is_empty() {
        let confidence = admissible.iter().map(|a| a.confidence).fold(0.0, f64::max);
        return Ok(Decision {
            outcome: Outcome::Abstain,
            method: None,
            confidence,
            warnings: Vec::new(),
            reasons,
            candidates,
            thresholds_used,
        });
    }

    let confident: Vec<&Admissibility> = admissible
        .into_iter()
        .filter(|a| a.confidence > rules.min_confidence)
        .collect();
    let chosen = if profile.risk(Dimension::Persist) > rules.prefer_pcmci_persist {
        pick(&confident, PCMCI_PLUS)
    } else {
        None
    }
    .or_else(|| pick(&confident, GRANGER))
    .unwrap_or_else(|| {
        // catalog order breaks ties
        confident
            .iter()
            .copied()
            .reduce(|best, a| if a.composite < best.composite { a } else { best })
            .expect("a confident method exists when no reason triggered")
    });

    let mut warnings = chosen.warnings.clone();
    for d in Dimension::ALL {
        let r = profile.risk(d);
        if r >= theta {
            warnings.push(Warning::ElevatedRisk {
                dimension: d,
                risk: r,
                threshold: theta,
            });
        }
    }
    Ok(Decision {
        outcome: Outcome::Recommend,
        method: Some(chosen.method.clone()),
        confidence: chosen.confidence,
        warnings,
        reasons,
        candidates,
        thresholds_used,
    })
}

/// A literal risk profile with its expected outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionFixture {
    pub name: &'static str,
    /// Point risks in the order nonstat, irreg, persist, confound.
    pub risks: [f64; 4],
    pub expected: Outcome,
    /// Expected to recommend with at least one warning.
    pub elevated_warnings: bool,
}

/// The 18 benchmark-style profiles and 3 real-world profiles.
pub fn decision_fixtures() -> Vec<DecisionFixture> {
    use Outcome::{Abstain as A, Recommend as R};
    let rows: [(&str, [f64; 4], Outcome, bool); 21] = [
        ("A1", [0.14, 0.18, 0.01, 0.10], R, false),
        ("A1C", [0.07, 0.18, 0.01, 0.12], R, false),
        ("A2", [0.14, 0.18, 0.06, 1.00], R, false),
        ("A2C", [0.21, 0.38, 1.00, 1.00], R, true),
        ("B1", [0.07, 0.18, 0.14, 1.00], R, false),
        ("B1C", [0.07, 0.18, 0.16, 1.00], R, false),
        ("B2", [0.16, 0.38, 0.01, 0.06], R, true),
        ("B2C", [0.13, 0.38, 0.01, 0.08], R, false),
        ("C1", [1.00, 0.18, 1.00, 1.00], A, false),
        ("C1C", [1.00, 0.18, 1.00, 1.00], A, false),
        ("C2", [1.00, 0.38, 1.00, 1.00], A, false),
        ("C2C", [1.00, 0.38, 1.00, 1.00], A, false),
        ("D1", [0.14, 0.18, 0.02, 0.07], R, false),
        ("D1C", [0.09, 0.18, 0.02, 0.61], R, false),
        ("D2", [0.24, 0.38, 0.01, 0.29], R, true),
        ("D2C", [0.21, 0.38, 0.01, 0.28], R, true),
        ("D3", [1.00, 0.38, 1.00, 1.00], A, false),
        ("D3C", [1.00, 0.38, 1.00, 1.00], A, false),
        ("PM2.5", [0.12, 0.18, 0.01, 1.00], R, false),
        ("Traffic", [0.12, 0.18, 0.01, 1.00], R, false),
        ("Medical", [0.12, 0.18, 0.01, 1.00], R, false),
    ];
    rows.into_iter()
        .map(|(name, risks, expected, elevated_warnings)| DecisionFixture {
            name,
            risks,
            expected,
            elevated_warnings,
        })
        .collect()
}
