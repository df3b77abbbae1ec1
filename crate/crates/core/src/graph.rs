//! Lagged summary graphs: ground truth for the atlas and the output of discovery.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// A directed edge `source -> target` at `lag` time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub lag: usize,
}

impl Edge {
    pub fn new(source: usize, target: usize, lag: usize) -> Self {
        Self {
            source,
            target,
            lag,
        }
    }
}

/// Set of lagged edges over `n_vars` variables and lags `0..=tau_max`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphDoc", into = "GraphDoc")]
pub struct SummaryGraph {
    n_vars: usize,
    tau_max: usize,
    edges: BTreeSet<Edge>,
}

/// `truth_graph.json` layout.
#[derive(Serialize, Deserialize)]
struct GraphDoc {
    n_vars: usize,
    tau_max: usize,
    edges: Vec<[usize; 3]>,
}

impl TryFrom<GraphDoc> for SummaryGraph {
    type Error = AuditError;

    fn try_from(doc: GraphDoc) -> Result<Self> {
        let mut g = SummaryGraph::empty(doc.n_vars, doc.tau_max);
        for [s, t, l] in doc.edges {
            if !g.insert(Edge::new(s, t, l))? {
                return Err(AuditError::Parse(format!("duplicate edge ({s}, {t}, {l})")));
            }
        }
        Ok(g)
    }
}

impl From<SummaryGraph> for GraphDoc {
    fn from(g: SummaryGraph) -> Self {
        GraphDoc {
            n_vars: g.n_vars,
            tau_max: g.tau_max,
            edges: g.edges.iter().map(|e| [e.source, e.target, e.lag]).collect(),
        }
    }
}

impl SummaryGraph {
    pub fn empty(n_vars: usize, tau_max: usize) -> Self {
        Self {
            n_vars,
            tau_max,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n_vars: usize, tau_max: usize, edges: &[Edge]) -> Result<Self> {
        let mut g = Self::empty(n_vars, tau_max);
        for &e in edges {
            if !g.insert(e)? {
                return Err(AuditError::InvalidInput(format!("duplicate edge {e:?}")));
            }
        }
        Ok(g)
    }

    /// Insert an edge; returns `false` when it was already present.
    pub fn insert(&mut self, e: Edge) -> Result<bool> {
        if e.source >= self.n_vars || e.target >= self.n_vars {
            return Err(AuditError::InvalidInput(format!(
                "edge {e:?} outside {} variables",
                self.n_vars
            )));
        }
        if e.lag > self.tau_max {
            return Err(AuditError::InvalidInput(format!(
                "edge {e:?} exceeds tau_max {}",
                self.tau_max
            )));
        }
        if e.lag == 0 && e.source == e.target {
            return Err(AuditError::InvalidInput(format!("self edge at lag 0: {e:?}")));
        }
        Ok(self.edges.insert(e))
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn contains(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Number of admissible triples: all `(i, j, lag)` minus lag-0 self pairs.
    pub fn universe_size(&self) -> usize {
        self.n_vars * self.n_vars * (self.tau_max + 1) - self.n_vars
    }

    /// Lag-insensitive adjacency pairs `(source, target)`.
    pub fn adjacencies(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.source, e.target)).collect()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AuditError::Parse(e.to_string()))
    }
}
