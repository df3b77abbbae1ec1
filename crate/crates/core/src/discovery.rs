//! VAR-based Granger discovery and graph scoring against a known truth.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::benjamini_yekutieli;
use crate::error::{AuditError, Result};
use crate::graph::{Edge, SummaryGraph};
use crate::series::TimeSeriesMatrix;
use crate::stats::{f_sf, ols};

/// Test of "the lags of `source` help predict `target`".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub source: usize,
    pub target: usize,
    pub f_stat: f64,
    pub pvalue: f64,
    pub pvalue_corrected: f64,
    /// Lag of the largest absolute coefficient of `source` in the full model.
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub tau_max: usize,
    pub alpha: f64,
    pub rows_used: usize,
    pub tests: Vec<PairTest>,
    pub graph: SummaryGraph,
}

impl GrangerResult {
    /// Edges significant before multiplicity correction.
    pub fn raw_rejections(&self) -> usize {
        self.tests.iter().filter(|t| t.pvalue < self.alpha).count()
    }
}

/// Full VAR(`tau_max`) Granger analysis over complete-case rows.
pub fn var_granger(series: &TimeSeriesMatrix, tau_max: usize, alpha: f64) -> Result<GrangerResult> {
    if tau_max < 1 {
        return Err(AuditError::InvalidInput("tau_max must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AuditError::InvalidInput(format!("alpha = {alpha} outside (0, 1)")));
    }
    let n = series.n_cols();
    let (current, lagged) = series.complete_case_lags(tau_max);
    let m = current.len();
    let needed = 10 * n * tau_max;
    if m < needed {
        return Err(AuditError::LowSample {
            what: "VAR-Granger discovery",
            needed,
            have: m,
        });
    }
    let k = 1 + n * tau_max;
    // lagged[r] holds lag l of variable i at position (l-1)*n + i
    let full = DMatrix::from_fn(m, k, |r, c| if c == 0 { 1.0 } else { lagged[r][c - 1] });
    let df2 = (m - k) as f64;
    let mut tests = Vec::with_capacity(n * n);
    for target in 0..n {
        let y = DVector::from_iterator(m, current.iter().map(|r| r[target]));
        let fit_full = ols(&full, &y)?;
        for source in 0..n {
            let keep: Vec<usize> = (0..k)
                .filter(|&c| c == 0 || (c - 1) % n != source)
                .collect();
            let restricted = full.select_columns(&keep);
            let fit_r = ols(&restricted, &y)?;
            let q = tau_max as f64;
            let f_stat = if fit_full.ssr > 0.0 {
                ((fit_r.ssr - fit_full.ssr).max(0.0) / q) / (fit_full.ssr / df2)
            } else {
                f64::INFINITY
            };
            let pvalue = if f_stat.is_finite() { f_sf(f_stat, q, df2) } else { 0.0 };
            let lag = (1..=tau_max)
                .max_by(|&a, &b| {
                    let ca = fit_full.coef[1 + (a - 1) * n + source].abs();
                    let cb = fit_full.coef[1 + (b - 1) * n + source].abs();
                    ca.total_cmp(&cb).then(b.cmp(&a))
                })
                .unwrap_or(1);
            tests.push(PairTest {
                source,
                target,
                f_stat,
                pvalue,
                pvalue_corrected: f64::NAN,
                lag,
            });
        }
    }
    let raw: Vec<f64> = tests.iter().map(|t| t.pvalue).collect();
    let corrected = benjamini_yekutieli(&raw)?;
    let mut graph = SummaryGraph::empty(n, tau_max);
    for (t, p) in tests.iter_mut().zip(corrected) {
        t.pvalue_corrected = p;
        if p < alpha {
            graph.insert(Edge::new(t.source, t.target, t.lag))?;
        }
    }
    Ok(GrangerResult {
        tau_max,
        alpha,
        rows_used: m,
        tests,
        graph,
    })
}

/// Edges significant after BY correction across all ordered pairs.
pub fn var_granger_discover(series: &TimeSeriesMatrix, tau_max: usize, alpha: f64) -> Result<SummaryGraph> {
    var_granger(series, tau_max, alpha).map(|r| r.graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn, 0.0)
    }

    pub fn fnr(&self) -> f64 {
        ratio(self.fn_, self.tp + self.fn_, 0.0)
    }

    /// 1 when nothing was reported.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp, 1.0)
    }

    /// 1 when the truth is empty.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_, 1.0)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }

    fn of<T: Ord>(estimated: &BTreeSet<T>, truth: &BTreeSet<T>, universe: usize) -> Self {
        let tp = estimated.intersection(truth).count();
        let fp = estimated.len() - tp;
        let fn_ = truth.len() - tp;
        Confusion {
            tp,
            fp,
            fn_,
            tn: universe - tp - fp - fn_,
        }
    }
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphScore {
    pub fpr: f64,
    pub fnr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Share of reported edges that are spurious.
    pub fdr: f64,
    pub counts: Confusion,
    /// Same rates with lags collapsed to ordered variable pairs.
    pub adjacency: Confusion,
}

/// Exact-triple comparison over the candidate universe of the truth graph.
pub fn score_graph(estimated: &SummaryGraph, truth: &SummaryGraph) -> Result<GraphScore> {
    if estimated.n_vars() != truth.n_vars() || estimated.tau_max() != truth.tau_max() {
        return Err(AuditError::UniverseMismatch(format!(
            "estimated (N={}, tau_max={}) vs truth (N={}, tau_max={})",
            estimated.n_vars(),
            estimated.tau_max(),
            truth.n_vars(),
            truth.tau_max()
        )));
    }
    let est: BTreeSet<Edge> = estimated.edges().copied().collect();
    let tru: BTreeSet<Edge> = truth.edges().copied().collect();
    let counts = Confusion::of(&est, &tru, truth.universe_size());
    let n = truth.n_vars();
    let adjacency = Confusion::of(&estimated.adjacencies(), &truth.adjacencies(), n * n);
    Ok(GraphScore {
        fpr: counts.fpr(),
        fnr: counts.fnr(),
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        fdr: 1.0 - counts.precision(),
        counts,
        adjacency,
    })
}

pub const FAILURE_FPR: f64 = 0.50;
pub const FAILURE_FNR: f64 = 0.80;

/// `true` marks a failed discovery run.
pub fn failure_label(score: &GraphScore) -> bool {
    score.fpr > FAILURE_FPR || score.fnr > FAILURE_FNR
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize, usize)]) -> SummaryGraph {
        let e: Vec<Edge> = edges.iter().map(|&(s, t, l)| Edge::new(s, t, l)).collect();
        SummaryGraph::from_edges(n, 1, &e).unwrap()
    }

    #[test]
    fn score_examples() {
        let truth = graph(3, &[(0, 1, 1), (1, 2, 1), (2, 2, 1), (0, 0, 1)]);
        let s = score_graph(&truth, &truth).unwrap();
        assert_eq!((s.fpr, s.fnr, s.f1), (0.0, 0.0, 1.0));
        let s = score_graph(&SummaryGraph::empty(3, 1), &truth).unwrap();
        assert_eq!((s.fnr, s.fpr), (1.0, 0.0));

        // N=2, tau_max=1: universe is 2*2*2 - 2 = 6 triples
        let truth = graph(2, &[(0, 1, 1)]);
        let est = graph(2, &[(0, 1, 1), (1, 0, 1)]);
        let s = score_graph(&est, &truth).unwrap();
        assert_eq!((s.counts.tp, s.counts.fp, s.counts.fn_, s.counts.tn), (1, 1, 0, 4));
        assert!((s.fpr - 0.2).abs() < 1e-12);
        assert!((s.fdr - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mismatched_universe() {
        assert!(matches!(
            score_graph(&SummaryGraph::empty(2, 1), &SummaryGraph::empty(3, 1)),
            Err(AuditError::UniverseMismatch(_))
        ));
    }

    fn score_with(fpr: f64, fnr: f64) -> GraphScore {
        GraphScore {
            fpr,
            fnr,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            fdr: 0.0,
            counts: Confusion { tp: 0, fp: 0, fn_: 0, tn: 0 },
            adjacency: Confusion { tp: 0, fp: 0, fn_: 0, tn: 0 },
        }
    }

    #[test]
    fn failure_rule() {
        assert!(failure_label(&score_with(0.6, 0.1)));
        assert!(!failure_label(&score_with(0.2, 0.5)));
        assert!(!failure_label(&score_with(0.5, 0.8)));
    }

    #[test]
    fn too_few_rows() {
        let cols = vec![vec![0.0, 1.0, 0.5, 0.2, 0.9]; 2];
        let s = TimeSeriesMatrix::from_columns(&cols).unwrap();
        assert!(matches!(var_granger(&s, 1, 0.05), Err(AuditError::LowSample { .. })));
    }

    proptest! {
        #[test]
        fn identity_scores_zero(edges in prop::collection::btree_set((0usize..4, 0usize..4, 1usize..3), 0..10)) {
            let e: Vec<Edge> = edges.iter().map(|&(s, t, l)| Edge::new(s, t, l)).collect();
            let g = SummaryGraph::from_edges(4, 2, &e).unwrap();
            let s = score_graph(&g, &g).unwrap();
            prop_assert_eq!(s.fpr, 0.0);
            prop_assert_eq!(s.fnr, 0.0);
            let c = s.counts;
            prop_assert_eq!(c.tp + c.fp + c.fn_ + c.tn, g.universe_size());
        }
    }
}
