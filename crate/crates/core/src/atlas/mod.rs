//! Synthetic benchmark: seeded VAR(1) datasets across ten violation families.

mod io;
mod spec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StudentT};
use serde::{Deserialize, Serialize};

pub use io::{read_atlas, read_manifest, write_atlas, Manifest, ManifestEntry, MANIFEST_FILE};
pub use spec::{
    sample_specs, BoundaryCase, BreakSpec, DgpSpec, Family, LatentSpec, MissingMechanism, MissingSpec,
    Noise, SeasonalSpec, Transform,
};

use crate::discovery::{failure_label, score_graph, var_granger, GraphScore};
use crate::error::{AuditError, Result};
use crate::graph::{Edge, SummaryGraph};
use crate::risk::PerDimension;
use crate::rng::{child_seed, rng_from_seed, AuditRng};
use crate::series::TimeSeriesMatrix;
use crate::stats::{population_std, sigmoid};

pub const BURN_IN: usize = 200;
pub const EDGE_DENSITY: f64 = 0.3;
pub const LATENT_AR: f64 = 0.8;
const MAX_DRAWS: u64 = 20;
/// Significance level of the discovery run that produces failure labels.
pub const LABEL_ALPHA: f64 = 0.05;

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn coefficient(rng: &mut AuditRng) -> f64 {
    let m = rng.random_range(0.2..0.8);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn rescale(mut a: DMatrix<f64>, rho: f64) -> Option<DMatrix<f64>> {
    let r = spectral_radius(&a);
    if r < 1e-8 {
        return None;
    }
    a *= rho / r;
    Some(a)
}

/// Sparse random VAR matrix rescaled to spectral radius `rho`.
///
/// The diagonal is always populated (positive); off-diagonal entries appear
/// with probability `density`.
pub fn stable_var_matrix(n: usize, rho: f64, density: f64, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || !(0.0..=0.99).contains(&rho) || !(density > 0.0 && density <= 1.0) {
        return Err(AuditError::InvalidInput(format!(
            "stable_var_matrix(n={n}, rho={rho}, density={density})"
        )));
    }
    if rho == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..MAX_DRAWS {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    a[(i, j)] = rng.random_range(0.2..0.8);
                } else if rng.random_bool(density) {
                    a[(i, j)] = coefficient(&mut rng);
                }
            }
        }
        if let Some(a) = rescale(a, rho) {
            return Ok(a);
        }
    }
    Err(AuditError::DegenerateDraw(MAX_DRAWS as usize))
}

/// New coefficients on the support of `a`, rescaled to spectral radius `rho`.
fn redraw_on_support(a: &DMatrix<f64>, rho: f64, rng: &mut AuditRng) -> Result<DMatrix<f64>> {
    for _ in 0..MAX_DRAWS {
        let mut b = DMatrix::zeros(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    b[(i, j)] = if i == j {
                        rng.random_range(0.2..0.8)
                    } else {
                        coefficient(rng)
                    };
                }
            }
        }
        if let Some(b) = rescale(b, rho) {
            return Ok(b);
        }
    }
    Err(AuditError::DegenerateDraw(MAX_DRAWS as usize))
}

/// Support of `a` as lag-1 edges `j -> i` for every `a[i][j] != 0`.
pub fn truth_graph(a: &DMatrix<f64>) -> SummaryGraph {
    let n = a.nrows();
    let mut g = SummaryGraph::empty(n, 1);
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                g.insert(Edge::new(j, i, 1)).expect("lag-1 edge within universe");
            }
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryOutcome {
    /// `true` marks a failed VAR-Granger run.
    pub failed: bool,
    pub score: Option<GraphScore>,
    pub raw_rejections: Option<usize>,
    /// Set when discovery could not run (counted as a failure).
    pub error: Option<String>,
}

/// One generated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasEntry {
    pub id: String,
    pub spec: DgpSpec,
    pub data: TimeSeriesMatrix,
    pub truth: SummaryGraph,
    /// Measured spectral radius of the (first-regime) coefficient matrix.
    pub spectral_radius: f64,
    /// Observed children of each latent driver.
    pub latent_children: Vec<Vec<usize>>,
    /// Parameter-derived severity per risk dimension.
    pub severity: PerDimension<f64>,
    /// Binary per-dimension labels drawn from the severities.
    pub labels: PerDimension<bool>,
    pub discovery: DiscoveryOutcome,
}

fn noise_draw(noise: Noise, rng: &mut AuditRng) -> f64 {
    match noise {
        Noise::Gaussian => Normal::new(0.0, 1.0).unwrap().sample(rng),
        Noise::StudentT { nu } => {
            // unit variance
            let t: f64 = StudentT::new(nu).unwrap().sample(rng);
            t * ((nu - 2.0) / nu).sqrt()
        }
        Noise::Laplace => {
            let e: f64 = Exp::new(std::f64::consts::SQRT_2).unwrap().sample(rng);
            if rng.random_bool(0.5) {
                e
            } else {
                -e
            }
        }
    }
}

fn apply_transform(t: Option<Transform>, v: f64) -> f64 {
    match t {
        None => v,
        Some(Transform::Tanh) => v.tanh(),
        Some(Transform::Sin) => v.sin(),
        Some(Transform::Relu) => v.max(0.0),
    }
}

struct Simulation {
    values: Vec<f64>,
    a: DMatrix<f64>,
    latent_children: Vec<Vec<usize>>,
}

fn simulate(spec: &DgpSpec, seed: u64) -> Result<Simulation> {
    let (n, t) = (spec.n, spec.t);
    let a = stable_var_matrix(n, spec.spectral_radius, EDGE_DENSITY, child_seed(seed, 0))?;
    let mut rng = rng_from_seed(child_seed(seed, 1));

    let mut regimes = vec![(0usize, a.clone())];
    if let Some(b) = &spec.breaks {
        for &at in &b.locations {
            regimes.push((at, redraw_on_support(&a, spec.spectral_radius, &mut rng)?));
        }
    }

    let mut latent_children = Vec::new();
    let mut loadings = DMatrix::<f64>::zeros(n, 0);
    if let Some(l) = &spec.latent {
        loadings = DMatrix::zeros(n, l.count);
        for k in 0..l.count {
            let size = rng.random_range(2..=(n / 2).max(2));
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut children: Vec<usize> = idx[..size].to_vec();
            children.sort_unstable();
            for &c in &children {
                loadings[(c, k)] = l.sigma_conf;
            }
            latent_children.push(children);
        }
    }
    let n_latent = loadings.ncols();
    let latent_sd = (1.0 - LATENT_AR * LATENT_AR).sqrt();

    let mut x = vec![0.0; n];
    let mut u = vec![0.0; n_latent];
    let mut values = Vec::with_capacity(n * t);
    let mut regime = 0;
    for step in 0..BURN_IN + t {
        let obs = step.checked_sub(BURN_IN);
        if let Some(s) = obs {
            while regime + 1 < regimes.len() && regimes[regime + 1].0 <= s {
                regime += 1;
            }
        }
        let am = &regimes[regime].1;
        for v in u.iter_mut() {
            *v = LATENT_AR * *v + latent_sd * Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
        }
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += am[(i, j)] * x[j];
            }
            let mut v = apply_transform(spec.transform, acc) + noise_draw(spec.noise, &mut rng);
            for (k, uk) in u.iter().enumerate() {
                v += loadings[(i, k)] * uk;
            }
            next[i] = v;
        }
        x = next;
        if obs.is_some() {
            values.extend_from_slice(&x);
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
            return Err(AuditError::UnstableSimulation(step));
        }
    }
    Ok(Simulation {
        values,
        a,
        latent_children,
    })
}

fn column_sds(values: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let col: Vec<f64> = values.iter().skip(j).step_by(n).copied().collect();
            population_std(&col).max(1e-12)
        })
        .collect()
}

/// Mean shifts of `magnitude` column SDs at each break, random sign per variable.
fn add_mean_shifts(values: &mut [f64], n: usize, b: &BreakSpec, rng: &mut AuditRng) {
    let sd = column_sds(values, n);
    let t = values.len() / n;
    let mut offset = vec![0.0; n];
    let mut next_break = 0;
    for s in 0..t {
        while next_break < b.locations.len() && b.locations[next_break] == s {
            for (j, o) in offset.iter_mut().enumerate() {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                *o += sign * b.magnitude * sd[j];
            }
            next_break += 1;
        }
        for j in 0..n {
            values[s * n + j] += offset[j];
        }
    }
}

fn add_seasonality(values: &mut [f64], n: usize, s: &SeasonalSpec, rng: &mut AuditRng) {
    let sd = column_sds(values, n);
    let t = values.len() / n;
    let w = 2.0 * std::f64::consts::PI / s.period;
    for j in 0..n {
        let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let amp = s.amplitude * sd[j];
        for step in 0..t {
            let arg = w * step as f64 + phase;
            values[step * n + j] += amp * (arg.sin() + 0.5 * (2.0 * arg).sin());
        }
    }
}

/// Choose exactly `k` of the weighted cells without replacement (exponential keys).
fn weighted_pick(weights: &[f64], k: usize, rng: &mut AuditRng) -> Vec<usize> {
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / w.max(1e-12), i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0));
    keys.into_iter().take(k).map(|(_, i)| i).collect()
}

fn missing_mask(values: &[f64], n: usize, m: &MissingSpec, rng: &mut AuditRng) -> Vec<bool> {
    let cells = values.len();
    let t = cells / n;
    let k = (m.fraction * cells as f64).round() as usize;
    let weights: Vec<f64> = match m.mechanism {
        MissingMechanism::Mcar => vec![1.0; cells],
        MissingMechanism::Mar => {
            // driven by the previous value of the next variable
            let sd = column_sds(values, n);
            (0..cells)
                .map(|c| {
                    let (s, j) = (c / n, c % n);
                    let nb = (j + 1) % n;
                    let prev = if s == 0 { 0.0 } else { values[(s - 1) * n + nb] / sd[nb] };
                    sigmoid(1.5 * prev)
                })
                .collect()
        }
        MissingMechanism::Seasonal => {
            let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
            (0..cells)
                .map(|c| {
                    let s = (c / n) as f64;
                    1.0 + 0.9 * (2.0 * std::f64::consts::PI * s / 12.0 + phase).sin()
                })
                .collect()
        }
    };
    let mut mask = vec![false; cells];
    for c in weighted_pick(&weights, k, rng) {
        mask[c] = true;
    }
    // keep at least two observations per column
    for j in 0..n {
        let observed = (0..t).filter(|&s| !mask[s * n + j]).count();
        if observed < 2 {
            for s in 0..2 {
                mask[s * n + j] = false;
            }
        }
    }
    mask
}

fn discovery_outcome(data: &TimeSeriesMatrix, truth: &SummaryGraph) -> Result<DiscoveryOutcome> {
    match var_granger(data, 1, LABEL_ALPHA) {
        Ok(r) => {
            let score = score_graph(&r.graph, truth)?;
            Ok(DiscoveryOutcome {
                failed: failure_label(&score),
                raw_rejections: Some(r.raw_rejections()),
                score: Some(score),
                error: None,
            })
        }
        Err(e @ (AuditError::LowSample { .. } | AuditError::SingularDesign(_))) => Ok(DiscoveryOutcome {
            failed: true,
            score: None,
            raw_rejections: None,
            error: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

/// Simulate one dataset, apply its violation mechanisms and label it.
pub fn generate_dataset(spec: &DgpSpec) -> Result<AtlasEntry> {
    spec.validate()?;
    let n = spec.n;
    let mut last_err = None;
    let mut sim = None;
    for attempt in 0..MAX_DRAWS {
        match simulate(spec, child_seed(spec.seed, attempt)) {
            Ok(s) => {
                sim = Some(s);
                break;
            }
            Err(e @ AuditError::UnstableSimulation(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    let Some(Simulation {
        mut values,
        a,
        latent_children,
    }) = sim
    else {
        return Err(last_err.unwrap_or(AuditError::UnstableSimulation(0)));
    };
    let mut rng = rng_from_seed(child_seed(spec.seed, 1000));
    if let Some(b) = &spec.breaks {
        add_mean_shifts(&mut values, n, b, &mut rng);
    }
    if let Some(s) = &spec.seasonal {
        add_seasonality(&mut values, n, s, &mut rng);
    }
    let mask = match &spec.missing {
        Some(m) => missing_mask(&values, n, m, &mut rng),
        None => vec![false; values.len()],
    };
    let timestamps = (0..spec.t).map(|s| s as f64).collect();
    let names = (0..n).map(|j| format!("x{j}")).collect();
    let data = TimeSeriesMatrix::from_parts(timestamps, values, mask, names)?;
    let truth = truth_graph(&a);
    let severity = spec.severity();
    let mut label_rng = rng_from_seed(child_seed(spec.seed, 2000));
    let labels = severity.map(|_, &s| label_rng.random_bool(label_probability(s)));
    let discovery = discovery_outcome(&data, &truth)?;
    Ok(AtlasEntry {
        id: spec.id(),
        spectral_radius: spectral_radius(&a),
        spec: spec.clone(),
        data,
        truth,
        latent_children,
        severity,
        labels,
        discovery,
    })
}

/// Probability that a dataset of severity `s` carries a positive label.
pub fn label_probability(s: f64) -> f64 {
    0.02 + 0.96 * s.clamp(0.0, 1.0)
}

/// Generate `per_family` entries for each of the ten families.
pub fn generate_atlas(master_seed: u64, per_family: usize) -> Result<Vec<AtlasEntry>> {
    if per_family < 1 {
        return Err(AuditError::InvalidInput("per_family must be >= 1".into()));
    }
    sample_specs(master_seed, per_family)
        .iter()
        .map(generate_dataset)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn var_matrix_examples() {
        let a = stable_var_matrix(1, 0.5, 0.3, 1).unwrap();
        assert!((a[(0, 0)] - 0.5).abs() < 1e-12);
        assert_eq!(stable_var_matrix(4, 0.0, 0.3, 1).unwrap(), DMatrix::zeros(4, 4));
        let a = stable_var_matrix(6, 0.95, 0.3, 7).unwrap();
        assert!((spectral_radius(&a) - 0.95).abs() < 1e-6);
    }

    #[test]
    fn truth_matches_support() {
        let a = stable_var_matrix(5, 0.6, 0.3, 3).unwrap();
        let g = truth_graph(&a);
        let nonzero = a.iter().filter(|v| **v != 0.0).count();
        assert_eq!(g.len(), nonzero);
        for e in g.edges() {
            assert_ne!(a[(e.target, e.source)], 0.0);
            assert_eq!(e.lag, 1);
        }
    }

    #[test]
    fn weighted_pick_exact_count() {
        let mut rng = rng_from_seed(4);
        let w = vec![1.0, 5.0, 0.1, 2.0, 3.0];
        let picked = weighted_pick(&w, 3, &mut rng);
        assert_eq!(picked.len(), 3);
        let mut p = picked.clone();
        p.sort_unstable();
        p.dedup();
        assert_eq!(p.len(), 3);
    }
}
