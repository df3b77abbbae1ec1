//! Calibration and selective-prediction metrics, and the atlas benchmark harness.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::atlas::{read_atlas, AtlasEntry, Family};
use crate::config::AuditConfig;
use crate::decision::{decide, decision_fixtures, Decision, DecisionFixture, Outcome, ReasonCode};
use crate::diagnostics::{audit, DiagnosticReport};
use crate::error::{AuditError, Result};
use crate::risk::{calibrate_models, compute_risk_profile, CalibrationSample, Dimension, Priors, RiskModels, RiskProfile};
use crate::rng::{child_seed, rng_from_seed};
use crate::stats::{fit_logistic, logit, LogisticOptions};

pub const N_BINS: usize = 10;
pub const MIN_CALIBRATION_SAMPLES: usize = 20;
const P_CLIP: f64 = 1e-6;

/// One reliability bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub mean_predicted: f64,
    pub empirical_frequency: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    /// `false` when the recalibration fit hit its iteration cap (e.g. separable data).
    pub slope_converged: bool,
    pub ece: f64,
    pub brier: f64,
    pub auroc: f64,
    pub bins: Vec<CalibrationBin>,
}

/// Up to [`N_BINS`] quantile bins over the sorted predictions. Tied
/// predictions always share a bin, so the last bins may be merged away.
pub fn quantile_bins(predicted: &[f64], labels: &[bool]) -> Vec<CalibrationBin> {
    let n = predicted.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predicted[a].total_cmp(&predicted[b]));
    let mut bins: Vec<(f64, f64, usize)> = Vec::new();
    let mut current_bin = usize::MAX;
    let mut r = 0;
    while r < n {
        let mut end = r + 1;
        while end < n && predicted[order[end]] == predicted[order[r]] {
            end += 1;
        }
        let target = r * N_BINS / n;
        if target != current_bin {
            bins.push((0.0, 0.0, 0));
            current_bin = target;
        }
        let b = bins.last_mut().expect("bin pushed");
        for &i in &order[r..end] {
            b.0 += predicted[i];
            b.1 += f64::from(u8::from(labels[i]));
            b.2 += 1;
        }
        r = end;
    }
    bins.into_iter()
        .map(|(p, y, c)| CalibrationBin {
            mean_predicted: p / c as f64,
            empirical_frequency: y / c as f64,
            count: c,
        })
        .collect()
}

/// Area under the ROC curve by the rank-sum statistic with mid-ranks for ties.
pub fn auroc(predicted: &[f64], labels: &[bool]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AuditError::SingleClass);
    }
    let n = predicted.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predicted[a].total_cmp(&predicted[b]));
    let mut rank_sum = 0.0;
    let mut r = 0;
    while r < n {
        let mut end = r + 1;
        while end < n && predicted[order[end]] == predicted[order[r]] {
            end += 1;
        }
        // ranks r+1..=end share their average
        let mid = (r + 1 + end) as f64 / 2.0;
        rank_sum += mid * order[r..end].iter().filter(|&&i| labels[i]).count() as f64;
        r = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Slope, calibration-in-the-large intercept, ECE, Brier and AUROC of one risk dimension.
pub fn calibration_metrics(predicted: &[f64], labels: &[bool]) -> Result<CalibrationSummary> {
    if predicted.len() != labels.len() {
        return Err(AuditError::InvalidInput(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let n = predicted.len();
    if n < MIN_CALIBRATION_SAMPLES {
        return Err(AuditError::TooFewPoints {
            needed: MIN_CALIBRATION_SAMPLES,
            have: n,
        });
    }
    if let Some(&p) = predicted.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(AuditError::InvalidP(p));
    }
    let auroc = auroc(predicted, labels)?;
    let y: Vec<f64> = labels.iter().map(|&b| f64::from(u8::from(b))).collect();
    let x: Vec<Vec<f64>> = predicted
        .iter()
        .map(|&p| vec![1.0, logit(p.clamp(P_CLIP, 1.0 - P_CLIP))])
        .collect();
    let fit = fit_logistic(
        &x,
        &y,
        &LogisticOptions {
            init: &[0.0, 1.0],
            max_iter: 100,
            tol: 1e-9,
            ..Default::default()
        },
    );
    let bins = quantile_bins(predicted, labels);
    let ece = bins
        .iter()
        .map(|b| b.count as f64 / n as f64 * (b.mean_predicted - b.empirical_frequency).abs())
        .sum();
    let brier = predicted.iter().zip(&y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / n as f64;
    Ok(CalibrationSummary {
        n,
        intercept: fit.coef[0],
        slope: fit.coef[1],
        slope_converged: fit.converged,
        ece,
        brier,
        auroc,
        bins,
    })
}

/// What [`selective_metrics`] needs from a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub recommend: bool,
    /// A recommendation that carries at least one warning.
    pub warned: bool,
}

impl From<&Decision> for Verdict {
    fn from(d: &Decision) -> Self {
        Verdict {
            recommend: d.is_recommend(),
            warned: d.is_recommend() && !d.warnings.is_empty(),
        }
    }
}

/// Selective-prediction summary. Ratios whose denominator is empty are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveSummary {
    pub n: usize,
    pub failures: usize,
    pub coverage: f64,
    /// P(failure | Recommend).
    pub selective_fpr: Option<f64>,
    /// F1 of Recommend as a prediction of success.
    pub selective_f1: Option<f64>,
    /// P(failure | Abstain).
    pub abstention_precision: Option<f64>,
    /// P(failure | Abstain or warned Recommend).
    pub precision_discourage: Option<f64>,
    /// P(Recommend | success).
    pub recall_safe: Option<f64>,
    /// P(Abstain | failure).
    pub good_abstention_rate: Option<f64>,
    /// Share of Recommend-on-success plus Abstain-on-failure.
    pub overall_accuracy: f64,
}

impl SelectiveSummary {
    pub fn abstention_rate(&self) -> f64 {
        1.0 - self.coverage
    }
}

fn frac(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Selective metrics of aligned decisions and failure labels.
pub fn selective_metrics<V: Into<Verdict> + Copy>(decisions: &[V], failures: &[bool]) -> Result<SelectiveSummary> {
    if decisions.len() != failures.len() {
        return Err(AuditError::InvalidInput(format!(
            "{} decisions vs {} labels",
            decisions.len(),
            failures.len()
        )));
    }
    if decisions.is_empty() {
        return Err(AuditError::InvalidInput("no decisions to score".into()));
    }
    let n = decisions.len();
    let (mut rec_ok, mut rec_fail, mut abs_ok, mut abs_fail) = (0, 0, 0, 0);
    let (mut disc, mut disc_fail) = (0, 0);
    for (v, &failed) in decisions.iter().zip(failures) {
        let v: Verdict = (*v).into();
        match (v.recommend, failed) {
            (true, false) => rec_ok += 1,
            (true, true) => rec_fail += 1,
            (false, false) => abs_ok += 1,
            (false, true) => abs_fail += 1,
        }
        if !v.recommend || v.warned {
            disc += 1;
            disc_fail += usize::from(failed);
        }
    }
    let recommended = rec_ok + rec_fail;
    let successes = rec_ok + abs_ok;
    let fails = rec_fail + abs_fail;
    let selective_fpr = frac(rec_fail, recommended);
    let recall_safe = frac(rec_ok, successes);
    let selective_f1 = match (selective_fpr, recall_safe) {
        (Some(fpr), Some(r)) if (1.0 - fpr) + r > 0.0 => Some(2.0 * (1.0 - fpr) * r / ((1.0 - fpr) + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(SelectiveSummary {
        n,
        failures: fails,
        coverage: recommended as f64 / n as f64,
        selective_fpr,
        selective_f1,
        abstention_precision: frac(abs_fail, abs_ok + abs_fail),
        precision_discourage: frac(disc_fail, disc),
        recall_safe,
        good_abstention_rate: frac(abs_fail, fails),
        overall_accuracy: (rec_ok + abs_fail) as f64 / n as f64,
    })
}

/// Indices of the holdout part of a family-stratified split.
///
/// Each family contributes `round(holdout_fraction * size)` entries, chosen
/// by a seeded shuffle.
pub fn stratified_holdout(families: &[String], holdout_fraction: f64, seed: u64) -> Vec<bool> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in families.iter().enumerate() {
        groups.entry(f.as_str()).or_default().push(i);
    }
    let mut holdout = vec![false; families.len()];
    for (k, (_, mut idx)) in groups.into_iter().enumerate() {
        let mut rng = rng_from_seed(child_seed(seed, k as u64));
        idx.shuffle(&mut rng);
        let m = (holdout_fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..m.min(idx.len())] {
            holdout[i] = true;
        }
    }
    holdout
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Clean,
    Moderate,
    Severe,
}

/// Families whose severe tercile forms the severe stratum.
pub fn strata_pool(f: Family) -> bool {
    matches!(f, Family::F2 | Family::F3 | Family::F4 | Family::F5 | Family::F9)
}

fn max_severity(e: &AtlasEntry) -> f64 {
    e.severity.iter().map(|(_, &s)| s).fold(0.0, f64::max)
}

/// Clean = F1; severe = top tercile of max severity among F2-F5 and F9
/// (cut computed over the whole atlas); moderate = everything else.
pub fn assign_strata(entries: &[AtlasEntry]) -> Vec<Stratum> {
    let mut pool: Vec<f64> = entries
        .iter()
        .filter(|e| strata_pool(e.spec.family))
        .map(max_severity)
        .collect();
    pool.sort_by(f64::total_cmp);
    let cut = if pool.is_empty() {
        f64::INFINITY
    } else {
        pool[(2 * pool.len()) / 3]
    };
    entries
        .iter()
        .map(|e| {
            if e.spec.family == Family::F1 {
                Stratum::Clean
            } else if strata_pool(e.spec.family) && max_severity(e) >= cut {
                Stratum::Severe
            } else {
                Stratum::Moderate
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureResult {
    pub name: String,
    pub risks: [f64; 4],
    pub expected: Outcome,
    pub outcome: Outcome,
    pub method: Option<String>,
    pub warnings: usize,
    pub reasons: Vec<ReasonCode>,
    pub pass: bool,
}

/// Decide one fixture profile (T_eff/T fixed at 1) and check outcome, the
/// warning requirement, and a catastrophic-nonstationarity reason on abstentions.
pub fn check_fixture(f: &DecisionFixture, config: &AuditConfig) -> Result<FixtureResult> {
    let d = decide(&RiskProfile::from_points(f.risks, 1.0), &config.catalog, config)?;
    let mut pass = d.outcome == f.expected;
    if f.elevated_warnings {
        pass &= !d.warnings.is_empty();
    }
    if f.expected == Outcome::Abstain {
        pass &= d.has_reason(ReasonCode::CatastrophicNonstationarity);
    }
    Ok(FixtureResult {
        name: f.name.to_string(),
        risks: f.risks,
        expected: f.expected,
        outcome: d.outcome,
        method: d.method.clone(),
        warnings: d.warnings.len(),
        reasons: d.reasons.iter().map(|r| r.code).collect(),
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureBlock {
    pub passed: usize,
    pub total: usize,
    pub rows: Vec<FixtureResult>,
}

pub fn evaluate_fixtures(config: &AuditConfig) -> Result<FixtureBlock> {
    let rows = decision_fixtures()
        .iter()
        .map(|f| check_fixture(f, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(FixtureBlock {
        passed: rows.iter().filter(|r| r.pass).count(),
        total: rows.len(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub split_seed: u64,
    pub holdout_fraction: f64,
    pub priors: Priors,
    /// Max-risk gate of the strict policy variant.
    pub strict_max_risk: f64,
    pub threads: Option<usize>,
    /// Score the holdout with these models instead of fitting on the calibration split.
    #[serde(default)]
    pub models: Option<RiskModels>,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            split_seed: 7,
            holdout_fraction: 0.2,
            priors: Priors::default(),
            strict_max_risk: 0.5,
            threads: None,
            models: None,
        }
    }
}

/// Per-dimension calibration on the holdout against the atlas severity labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub dimension: Dimension,
    pub summary: CalibrationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveBlock {
    pub default: SelectiveSummary,
    pub always_run: SelectiveSummary,
    pub strict: SelectiveSummary,
    pub strict_max_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: Stratum,
    pub n: usize,
    pub failure_rate: f64,
    pub abstention_rate: f64,
    pub selective_fpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRow {
    pub id: String,
    pub family: String,
    pub stratum: Stratum,
    pub failed: bool,
    pub labels: [bool; 4],
    pub risks: [f64; 4],
    pub widths: [f64; 4],
    pub t_eff_ratio: f64,
    pub decision: Outcome,
    pub strict_decision: Outcome,
    pub method: Option<String>,
    pub reasons: Vec<ReasonCode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedEntry {
    pub id: String,
    pub error: String,
}

/// Wall-clock timings in seconds. Not part of the deterministic content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Runtime {
    pub stage1_total: f64,
    pub stage1_max: f64,
    pub stage2_max: f64,
    pub stage3_max: f64,
    pub calibration_fit: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub split_seed: u64,
    pub n_entries: usize,
    pub n_calibration: usize,
    pub n_holdout: usize,
    pub excluded: Vec<ExcludedEntry>,
    pub calibration: Vec<CalibrationRow>,
    pub selective: SelectiveBlock,
    pub strata: Vec<StratumRow>,
    pub fixtures: FixtureBlock,
    pub holdout: Vec<HoldoutRow>,
    pub models: RiskModels,
    pub runtime: Runtime,
}

impl BenchmarkReport {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The report without wall-clock timings, for reproducibility checks.
    pub fn without_runtime(&self) -> Self {
        Self {
            runtime: Runtime::default(),
            ..self.clone()
        }
    }

    pub fn stratum(&self, s: Stratum) -> Option<&StratumRow> {
        self.strata.iter().find(|r| r.stratum == s)
    }

    /// Reliability-plot table: one row per dimension and bin.
    pub fn bins_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dimension", "bin", "mean_predicted", "empirical_frequency", "count"])
            .map_err(csv_err)?;
        for row in &self.calibration {
            for (k, b) in row.summary.bins.iter().enumerate() {
                w.write_record([
                    row.dimension.name().to_string(),
                    k.to_string(),
                    b.mean_predicted.to_string(),
                    b.empirical_frequency.to_string(),
                    b.count.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| AuditError::InvalidInput(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| AuditError::Parse(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> AuditError {
    AuditError::Parse(e.to_string())
}

/// Run `f` over `items` on up to `threads` scoped threads, keeping input order.
fn parallel_map<T: Sync, U: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<U>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Stage I over every entry: reports (or errors) with timings.
pub fn audit_entries(
    entries: &[AtlasEntry],
    config: &AuditConfig,
    threads: usize,
) -> Vec<(Result<DiagnosticReport>, f64)> {
    parallel_map(entries, threads, |e| {
        let t0 = Instant::now();
        let r = audit(&e.data, config);
        (r, t0.elapsed().as_secs_f64())
    })
}

fn points(p: &RiskProfile) -> [f64; 4] {
    Dimension::ALL.map(|d| p.risk(d))
}

/// Fit risk models on the calibration split of already-audited entries.
pub fn calibrate_from_reports(
    entries: &[&AtlasEntry],
    reports: &[&DiagnosticReport],
    priors: &Priors,
    seed: u64,
) -> Result<RiskModels> {
    let corpus: Vec<CalibrationSample> = entries
        .iter()
        .zip(reports)
        .map(|(e, r)| CalibrationSample {
            features: r.features,
            labels: e.labels.clone(),
            family: e.spec.family.to_string(),
        })
        .collect();
    calibrate_models(&corpus, priors, seed)
}

/// Audit an atlas and fit risk models on its calibration split, the same
/// split [`run_benchmark_entries`] holds out from.
pub fn calibrate_entries(
    entries: &[AtlasEntry],
    config: &AuditConfig,
    options: &BenchmarkOptions,
) -> Result<RiskModels> {
    config.validate()?;
    let threads = options
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let kept: Vec<(&AtlasEntry, DiagnosticReport)> = entries
        .iter()
        .zip(audit_entries(entries, config, threads))
        .filter_map(|(e, (r, _))| r.ok().map(|r| (e, r)))
        .collect();
    let families: Vec<String> = kept.iter().map(|(e, _)| e.spec.family.to_string()).collect();
    let is_holdout = stratified_holdout(&families, options.holdout_fraction, options.split_seed);
    let (cal_entries, cal_reports): (Vec<&AtlasEntry>, Vec<&DiagnosticReport>) = kept
        .iter()
        .zip(&is_holdout)
        .filter(|(_, &h)| !h)
        .map(|((e, r), _)| (*e, r))
        .unzip();
    calibrate_from_reports(&cal_entries, &cal_reports, &options.priors, options.split_seed)
}

/// Audit, calibrate and score the decisions of an in-memory atlas.
pub fn run_benchmark_entries(
    entries: &[AtlasEntry],
    config: &AuditConfig,
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    config.validate()?;
    let start = Instant::now();
    let threads = options
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let audited = audit_entries(entries, config, threads);
    let mut report = benchmark_from_audits(entries, audited, config, options)?;
    report.runtime.total = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Stages II-III and scoring given Stage I results aligned with `entries`.
pub fn benchmark_from_audits(
    entries: &[AtlasEntry],
    audited: Vec<(Result<DiagnosticReport>, f64)>,
    config: &AuditConfig,
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    config.validate()?;
    if audited.len() != entries.len() {
        return Err(AuditError::InvalidInput(format!(
            "{} audits for {} entries",
            audited.len(),
            entries.len()
        )));
    }
    let start = Instant::now();
    let mut runtime = Runtime::default();
    let mut excluded = Vec::new();
    let mut kept: Vec<(&AtlasEntry, DiagnosticReport)> = Vec::new();
    for (e, (r, secs)) in entries.iter().zip(audited) {
        runtime.stage1_total += secs;
        runtime.stage1_max = runtime.stage1_max.max(secs);
        match r {
            Ok(report) => kept.push((e, report)),
            Err(err) => excluded.push(ExcludedEntry {
                id: e.id.clone(),
                error: err.to_string(),
            }),
        }
    }
    let families: Vec<String> = kept.iter().map(|(e, _)| e.spec.family.to_string()).collect();
    let is_holdout = stratified_holdout(&families, options.holdout_fraction, options.split_seed);
    let (cal, hold): (Vec<_>, Vec<_>) = kept.iter().zip(&is_holdout).partition(|(_, &h)| !h);
    let cal_entries: Vec<&AtlasEntry> = cal.iter().map(|((e, _), _)| *e).collect();
    let cal_reports: Vec<&DiagnosticReport> = cal.iter().map(|((_, r), _)| r).collect();

    let t0 = Instant::now();
    let models = match &options.models {
        Some(m) => {
            m.validate()?;
            m.clone()
        }
        None => calibrate_from_reports(&cal_entries, &cal_reports, &options.priors, options.split_seed)?,
    };
    runtime.calibration_fit = t0.elapsed().as_secs_f64();

    let strict_config = AuditConfig {
        strict_max_risk: Some(options.strict_max_risk),
        ..config.clone()
    };
    let all_strata = assign_strata(entries);
    let stratum_of: BTreeMap<&str, Stratum> = entries
        .iter()
        .zip(&all_strata)
        .map(|(e, &s)| (e.id.as_str(), s))
        .collect();

    let mut rows = Vec::with_capacity(hold.len());
    let mut decisions = Vec::with_capacity(hold.len());
    let mut strict_decisions = Vec::with_capacity(hold.len());
    for ((e, report), _) in &hold {
        let t0 = Instant::now();
        let profile = compute_risk_profile(report, &models, config)?;
        runtime.stage2_max = runtime.stage2_max.max(t0.elapsed().as_secs_f64());
        let t0 = Instant::now();
        let d = decide(&profile, &config.catalog, config)?;
        runtime.stage3_max = runtime.stage3_max.max(t0.elapsed().as_secs_f64());
        let strict = decide(&profile, &strict_config.catalog, &strict_config)?;
        rows.push(HoldoutRow {
            id: e.id.clone(),
            family: e.spec.family.to_string(),
            stratum: stratum_of[e.id.as_str()],
            failed: e.discovery.failed,
            labels: Dimension::ALL.map(|d| *e.labels.get(d)),
            risks: points(&profile),
            widths: Dimension::ALL.map(|d| profile.get(d).width()),
            t_eff_ratio: profile.t_eff_ratio,
            decision: d.outcome,
            strict_decision: strict.outcome,
            method: d.method.clone(),
            reasons: d.reasons.iter().map(|r| r.code).collect(),
        });
        decisions.push(Verdict::from(&d));
        strict_decisions.push(Verdict::from(&strict));
    }

    let calibration = Dimension::ALL
        .iter()
        .map(|&d| {
            let k = d.index();
            let p: Vec<f64> = rows.iter().map(|r| r.risks[k]).collect();
            let y: Vec<bool> = rows.iter().map(|r| r.labels[k]).collect();
            calibration_metrics(&p, &y).map(|summary| CalibrationRow { dimension: d, summary })
        })
        .collect::<Result<Vec<_>>>()?;

    let failures: Vec<bool> = rows.iter().map(|r| r.failed).collect();
    let always: Vec<Verdict> = vec![
        Verdict {
            recommend: true,
            warned: false
        };
        rows.len()
    ];
    let selective = SelectiveBlock {
        default: selective_metrics(&decisions, &failures)?,
        always_run: selective_metrics(&always, &failures)?,
        strict: selective_metrics(&strict_decisions, &failures)?,
        strict_max_risk: options.strict_max_risk,
    };

    let strata = [Stratum::Clean, Stratum::Moderate, Stratum::Severe]
        .into_iter()
        .filter_map(|s| {
            let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].stratum == s).collect();
            if idx.is_empty() {
                return None;
            }
            let v: Vec<Verdict> = idx.iter().map(|&i| decisions[i]).collect();
            let f: Vec<bool> = idx.iter().map(|&i| failures[i]).collect();
            let m = selective_metrics(&v, &f).ok()?;
            Some(StratumRow {
                stratum: s,
                n: idx.len(),
                failure_rate: m.failures as f64 / m.n as f64,
                abstention_rate: m.abstention_rate(),
                selective_fpr: m.selective_fpr,
            })
        })
        .collect();

    let fixtures = evaluate_fixtures(config)?;
    runtime.total = runtime.stage1_total + start.elapsed().as_secs_f64();
    Ok(BenchmarkReport {
        split_seed: options.split_seed,
        n_entries: entries.len(),
        n_calibration: cal_entries.len(),
        n_holdout: rows.len(),
        excluded,
        calibration,
        selective,
        strata,
        fixtures,
        holdout: rows,
        models,
        runtime,
    })
}

/// [`run_benchmark_entries`] over an atlas directory written by `write_atlas`.
pub fn run_benchmark(atlas_dir: &Path, config: &AuditConfig, options: &BenchmarkOptions) -> Result<BenchmarkReport> {
    let entries = read_atlas(atlas_dir)?;
    run_benchmark_entries(&entries, config, options)
}

/// Configuration used for atlas runs: monthly seasonality hint for the
/// seasonal-missingness test, everything else at defaults.
pub fn benchmark_config() -> AuditConfig {
    AuditConfig {
        period_hint: Some(12.0),
        ..AuditConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(recommend: bool) -> Verdict {
        Verdict {
            recommend,
            warned: false,
        }
    }

    #[test]
    fn perfect_predictor() {
        let y: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let p: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
        let s = calibration_metrics(&p, &y).unwrap();
        assert!(s.ece < 1e-5);
        assert!(s.brier < 1e-5);
        assert_eq!(s.auroc, 1.0);
    }

    #[test]
    fn constant_half_on_balanced_labels() {
        let y: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let s = calibration_metrics(&[0.5; 40], &y).unwrap();
        assert_eq!(s.bins.len(), 1);
        assert!(s.ece.abs() < 1e-12);
        assert_eq!(s.auroc, 0.5);
        assert!((s.brier - 0.25).abs() < 1e-12);
    }

    #[test]
    fn two_point_brier_and_auroc() {
        assert_eq!(auroc(&[0.2, 0.8], &[false, true]).unwrap(), 1.0);
        let p: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.2 } else { 0.8 }).collect();
        let y: Vec<bool> = (0..20).map(|i| i % 2 == 1).collect();
        let s = calibration_metrics(&p, &y).unwrap();
        assert!((s.brier - 0.04).abs() < 1e-12);
        assert_eq!(s.auroc, 1.0);
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(calibration_metrics(&[0.3; 30], &[true; 30]), Err(AuditError::SingleClass)));
        let y: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert!(matches!(
            calibration_metrics(&[0.5; 10], &y),
            Err(AuditError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn recalibration_recovers_slope() {
        // labels drawn exactly at their predicted rate within each group
        let mut p = Vec::new();
        let mut y = Vec::new();
        for (q, pos) in [(0.1, 10), (0.3, 30), (0.5, 50), (0.7, 70), (0.9, 90)] {
            for i in 0..100 {
                p.push(q);
                y.push(i < pos);
            }
        }
        let s = calibration_metrics(&p, &y).unwrap();
        assert!((s.slope - 1.0).abs() < 1e-6, "slope {}", s.slope);
        assert!(s.intercept.abs() < 1e-6);
        assert!(s.ece < 1e-12);
        assert_eq!(s.bins.len(), 5);
    }

    #[test]
    fn ties_share_a_bin() {
        let p: Vec<f64> = (0..30).map(|i| if i < 20 { 0.1 } else { 0.1 + i as f64 / 100.0 }).collect();
        let y: Vec<bool> = (0..30).map(|i| i % 2 == 0).collect();
        let bins = quantile_bins(&p, &y);
        assert_eq!(bins[0].count, 20);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 30);
    }

    #[test]
    fn selective_examples() {
        let s = selective_metrics(&[rec(true), rec(true), rec(false), rec(false)], &[false, true, true, false]).unwrap();
        assert_eq!(s.coverage, 0.5);
        assert_eq!(s.selective_fpr, Some(0.5));
        assert_eq!(s.abstention_precision, Some(0.5));
        assert_eq!(s.overall_accuracy, 0.5);

        let s = selective_metrics(&[rec(true); 4], &[true, false, false, false]).unwrap();
        assert_eq!(s.coverage, 1.0);
        assert_eq!(s.selective_fpr, Some(0.25));
        assert_eq!(s.abstention_precision, None);

        let s = selective_metrics(&[rec(false); 3], &[true, false, false]).unwrap();
        assert_eq!(s.coverage, 0.0);
        assert_eq!(s.selective_fpr, None);
        assert_eq!(s.selective_f1, None);
        assert_eq!(s.good_abstention_rate, Some(1.0));
    }

    #[test]
    fn warned_recommendations_count_as_discouraged() {
        let v = [
            Verdict {
                recommend: true,
                warned: true,
            },
            rec(true),
            rec(false),
        ];
        let s = selective_metrics(&v, &[true, false, false]).unwrap();
        assert_eq!(s.precision_discourage, Some(0.5));
        assert_eq!(s.abstention_precision, Some(0.0));
    }

    #[test]
    fn split_is_stratified() {
        let fams: Vec<String> = (0..100).map(|i| format!("F{}", i % 4)).collect();
        let h = stratified_holdout(&fams, 0.2, 3);
        for f in 0..4 {
            let n = (0..100).filter(|&i| i % 4 == f && h[i]).count();
            assert_eq!(n, 5);
        }
        assert_eq!(h, stratified_holdout(&fams, 0.2, 3));
        assert_ne!(h, stratified_holdout(&fams, 0.2, 4));
    }

    #[test]
    fn default_fixtures_pass() {
        let b = evaluate_fixtures(&AuditConfig::default()).unwrap();
        assert_eq!((b.passed, b.total), (21, 21));
    }

    fn labelled() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        prop::collection::vec((0.0f64..=1.0, any::<bool>()), 20..80)
            .prop_filter("both classes", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
            .prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn auroc_is_rank_invariant((p, y) in labelled()) {
            let a = auroc(&p, &y).unwrap();
            let q: Vec<f64> = p.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            prop_assert!((a - auroc(&q, &y).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn metric_ranges((p, y) in labelled()) {
            let s = calibration_metrics(&p, &y).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.ece));
            prop_assert!((0.0..=1.0).contains(&s.brier));
            prop_assert_eq!(s.bins.iter().map(|b| b.count).sum::<usize>(), p.len());
        }

        #[test]
        fn constant_predictor_brier_bound((p, y) in labelled()) {
            let c = p[0];
            let s = calibration_metrics(&vec![c; y.len()], &y).unwrap();
            let my = y.iter().filter(|&&b| b).count() as f64 / y.len() as f64;
            prop_assert!(s.brier <= 0.25 + (c - my).abs() + 1e-12);
        }

        #[test]
        fn coverage_and_abstention_sum_to_one(v in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let verdicts: Vec<Verdict> = v.iter().map(|&(r, _)| rec(r)).collect();
            let fails: Vec<bool> = v.iter().map(|&(_, f)| f).collect();
            let s = selective_metrics(&verdicts, &fails).unwrap();
            prop_assert!((s.coverage + s.abstention_rate() - 1.0).abs() < 1e-12);
            for m in [s.selective_fpr, s.selective_f1, s.abstention_precision, s.precision_discourage, s.recall_safe, s.good_abstention_rate] {
                if let Some(m) = m {
                    prop_assert!((0.0..=1.0).contains(&m));
                }
            }
        }
    }
}
