//! Stage I: assumption diagnostics and their normalized feature vector.

mod confounding;
mod forest;
mod irregularity;
mod multiple;
mod nonlinearity;
mod persistence;
mod stationarity;
mod tables;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use confounding::{audit_confounding, variance_inflation, ConfoundingBlock, VIF_CAP};
pub use forest::{ForestParams, RegressionForest};
pub use irregularity::{
    audit_irregularity, gap_coefficient_of_variation, little_mcar, seasonal_missingness_pvalue,
    IrregularityBlock,
};
pub use multiple::benjamini_yekutieli;
pub use nonlinearity::{audit_nonlinearity, NonlinearityBlock, NONLINEARITY_FLAG};
pub use persistence::{audit_persistence, integrated_autocorr_time, ljung_box, PersistenceBlock};
pub use stationarity::{
    adf_test, audit_stationarity, detect_mean_breaks, drift_slope_z, kpss_test, AdfResult,
    BreakResult, KpssResult, StationarityBlock,
};

use crate::config::{AuditConfig, FeatureAnchors};
use crate::error::{AuditError, Result};
use crate::series::TimeSeriesMatrix;

/// Named slots of the normalized feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSlot {
    XAdf,
    XKpss,
    XBreakMag,
    XDrift,
    XGapCv,
    XMissing,
    XSeasonalMiss,
    XTeffRatio,
    XTauInt,
    XChow,
    XResidVar,
    XVif,
}

impl FeatureSlot {
    pub const ALL: [FeatureSlot; 12] = [
        FeatureSlot::XAdf,
        FeatureSlot::XKpss,
        FeatureSlot::XBreakMag,
        FeatureSlot::XDrift,
        FeatureSlot::XGapCv,
        FeatureSlot::XMissing,
        FeatureSlot::XSeasonalMiss,
        FeatureSlot::XTeffRatio,
        FeatureSlot::XTauInt,
        FeatureSlot::XChow,
        FeatureSlot::XResidVar,
        FeatureSlot::XVif,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSlot::XAdf => "x_adf",
            FeatureSlot::XKpss => "x_kpss",
            FeatureSlot::XBreakMag => "x_break_mag",
            FeatureSlot::XDrift => "x_drift",
            FeatureSlot::XGapCv => "x_gap_cv",
            FeatureSlot::XMissing => "x_missing",
            FeatureSlot::XSeasonalMiss => "x_seasonal_miss",
            FeatureSlot::XTeffRatio => "x_teff_ratio",
            FeatureSlot::XTauInt => "x_tau_int",
            FeatureSlot::XChow => "x_chow",
            FeatureSlot::XResidVar => "x_resid_var",
            FeatureSlot::XVif => "x_vif",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Normalized feature vector; serializes as a `{slot: value}` map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "BTreeMap<FeatureSlot, f64>", try_from = "BTreeMap<FeatureSlot, f64>")]
pub struct Features([f64; 12]);

impl Default for Features {
    /// All violation slots at 0 and `x_teff_ratio` at 1 (no evidence of violation).
    fn default() -> Self {
        let mut v = [0.0; 12];
        v[FeatureSlot::XTeffRatio.index()] = 1.0;
        Features(v)
    }
}

impl Features {
    pub fn get(&self, slot: FeatureSlot) -> f64 {
        self.0[slot.index()]
    }

    pub fn set(&mut self, slot: FeatureSlot, value: f64) {
        self.0[slot.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureSlot, f64)> + '_ {
        FeatureSlot::ALL.into_iter().map(|s| (s, self.get(s)))
    }

    /// Every slot clamped to `[0, 1]`.
    pub fn clamped(&self) -> Self {
        Features(self.0.map(|v| v.clamp(0.0, 1.0)))
    }
}

impl From<Features> for BTreeMap<FeatureSlot, f64> {
    fn from(f: Features) -> Self {
        f.iter().collect()
    }
}

impl TryFrom<BTreeMap<FeatureSlot, f64>> for Features {
    type Error = AuditError;

    fn try_from(map: BTreeMap<FeatureSlot, f64>) -> Result<Self> {
        let mut f = Features::default();
        for slot in FeatureSlot::ALL {
            let v = *map
                .get(&slot)
                .ok_or_else(|| AuditError::MissingFeature(slot.name().into()))?;
            f.set(slot, v);
        }
        Ok(f)
    }
}

/// Stage I output: raw blocks, normalized features and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub n_rows: usize,
    pub n_cols: usize,
    pub names: Vec<String>,
    pub alpha: f64,
    pub stationarity: StationarityBlock,
    pub irregularity: IrregularityBlock,
    pub persistence: PersistenceBlock,
    /// `None` when the block was not applicable; see `flags`.
    pub nonlinearity: Option<NonlinearityBlock>,
    pub confounding: Option<ConfoundingBlock>,
    pub features: Features,
    pub flags: Vec<String>,
}

impl DiagnosticReport {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AuditError::Parse(e.to_string()))
    }
}

fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Map raw diagnostic blocks onto the `[0, 1]` feature slots.
///
/// Returns the features plus flags for slots that fell back to 0.
pub fn normalize_features(
    stationarity: &StationarityBlock,
    irregularity: &IrregularityBlock,
    persistence: &PersistenceBlock,
    confounding: Option<&ConfoundingBlock>,
    anchors: &FeatureAnchors,
) -> (Features, Vec<String>) {
    let mut flags = Vec::new();
    let mut f = Features::default();
    let max_opt = |v: &[Option<f64>]| v.iter().flatten().copied().reduce(f64::max);
    let min_opt = |v: &[Option<f64>]| v.iter().flatten().copied().reduce(f64::min);

    match max_opt(&stationarity.adf_pvalues_corrected) {
        Some(p) => f.set(FeatureSlot::XAdf, clamp01(p)),
        None => flags.push("x_adf: no testable column".into()),
    }
    match min_opt(&stationarity.kpss_pvalues_corrected) {
        Some(p) => f.set(FeatureSlot::XKpss, clamp01(1.0 - p)),
        None => flags.push("x_kpss: no testable column".into()),
    }
    f.set(
        FeatureSlot::XBreakMag,
        clamp01(stationarity.break_magnitude / anchors.break_magnitude),
    );
    let max_z = stationarity
        .drift_slope_z
        .iter()
        .flatten()
        .map(|z| z.abs())
        .reduce(f64::max)
        .unwrap_or(0.0);
    f.set(FeatureSlot::XDrift, clamp01(max_z / anchors.drift_z));

    f.set(FeatureSlot::XGapCv, clamp01(irregularity.gap_cv / anchors.gap_cv));
    f.set(
        FeatureSlot::XMissing,
        clamp01(irregularity.missing_fraction / anchors.missing_fraction),
    );
    f.set(
        FeatureSlot::XSeasonalMiss,
        clamp01(1.0 - irregularity.seasonal_missing_pvalue.unwrap_or(1.0)),
    );

    f.set(FeatureSlot::XTeffRatio, persistence.t_eff_ratio.clamp(f64::MIN_POSITIVE, 1.0));
    f.set(
        FeatureSlot::XTauInt,
        clamp01(persistence.tau_int_max / anchors.tau_int),
    );

    match confounding {
        Some(c) => {
            f.set(FeatureSlot::XChow, clamp01(1.0 - c.chow_pvalue));
            let decades = c.resid_var_instability.max(1.0).log10();
            f.set(
                FeatureSlot::XResidVar,
                clamp01(decades / anchors.resid_var_decades),
            );
            f.set(
                FeatureSlot::XVif,
                clamp01(c.max_vif.max(1.0).log10() / anchors.vif_decades),
            );
        }
        None => flags.push("x_chow, x_resid_var, x_vif: confounding block not applicable".into()),
    }
    (f, flags)
}

fn not_applicable<T>(what: &str, r: Result<T>, flags: &mut Vec<String>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(
            e @ (AuditError::LowSample { .. }
            | AuditError::SingularDesign(_)
            | AuditError::DegenerateTarget(_)),
        ) => {
            flags.push(format!("{what} not applicable: {e}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Run all five diagnostic families and normalize the results.
pub fn audit(series: &TimeSeriesMatrix, config: &AuditConfig) -> Result<DiagnosticReport> {
    let mut flags = Vec::new();
    let stationarity = audit_stationarity(series, config.alpha)?;
    let irregularity = audit_irregularity(series, config.period_hint)?;
    let persistence = audit_persistence(series)?;
    let nonlinearity = not_applicable(
        "nonlinearity",
        audit_nonlinearity(series, config.nonlinearity_folds, config.nonlinearity_seed),
        &mut flags,
    )?;
    let confounding = not_applicable("confounding", audit_confounding(series), &mut flags)?;
    for &j in &stationarity.degenerate_columns {
        flags.push(format!("column {j} is constant; excluded from diagnostics"));
    }
    if irregularity.mcar_pvalue.is_some() {
        flags.push("MCAR test uses pairwise-complete moments (no EM)".into());
    }
    if let Some(c) = &confounding {
        for (j, capped) in c.vif_capped.iter().enumerate() {
            if *capped {
                flags.push(format!("VIF of column {j} capped at {VIF_CAP:e} (singular design)"));
            }
        }
    }
    let (features, feature_flags) = normalize_features(
        &stationarity,
        &irregularity,
        &persistence,
        confounding.as_ref(),
        &config.anchors,
    );
    flags.extend(feature_flags);
    Ok(DiagnosticReport {
        n_rows: series.n_rows(),
        n_cols: series.n_cols(),
        names: series.names().to_vec(),
        alpha: config.alpha,
        stationarity,
        irregularity,
        persistence,
        nonlinearity,
        confounding,
        features,
        flags,
    })
}
