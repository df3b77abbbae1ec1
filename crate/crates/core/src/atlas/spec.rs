use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::risk::PerDimension;
use crate::rng::{child_seed, rng_from_seed, AuditRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
    F8,
    F9,
    F10,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::F1,
        Family::F2,
        Family::F3,
        Family::F4,
        Family::F5,
        Family::F6,
        Family::F7,
        Family::F8,
        Family::F9,
        Family::F10,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::F1 => "F1",
            Family::F2 => "F2",
            Family::F3 => "F3",
            Family::F4 => "F4",
            Family::F5 => "F5",
            Family::F6 => "F6",
            Family::F7 => "F7",
            Family::F8 => "F8",
            Family::F9 => "F9",
            Family::F10 => "F10",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Noise {
    Gaussian,
    StudentT { nu: f64 },
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Tanh,
    Sin,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingMechanism {
    Mcar,
    Mar,
    Seasonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakSpec {
    /// Row indices where a new regime starts, strictly increasing.
    pub locations: Vec<usize>,
    /// Mean shift per break in column standard deviations.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingSpec {
    pub mechanism: MissingMechanism,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub count: usize,
    pub sigma_conf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSpec {
    pub period: f64,
    /// Amplitude of the fundamental in column standard deviations.
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCase {
    ShortSeries,
    Sparse,
    HighDimensional,
    NearUnitRoot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub family: Family,
    /// Position within the family.
    pub index: usize,
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub spectral_radius: f64,
    pub noise: Noise,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breaks: Option<BreakSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing: Option<MissingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seasonal: Option<SeasonalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryCase>,
}

const CORE_N: [usize; 4] = [5, 6, 7, 8];
const CORE_T: [usize; 3] = [500, 750, 1000];

/// Integrated autocorrelation time of an AR(1) with coefficient `rho`.
fn ar1_tau(rho: f64) -> f64 {
    (1.0 + rho) / (2.0 * (1.0 - rho))
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(AuditError::InvalidInput(what()))
    }
}

impl DgpSpec {
    pub fn id(&self) -> String {
        format!("{}_{:03}", self.family, self.index)
    }

    fn base(family: Family, index: usize, n: usize, t: usize, seed: u64, rho: f64) -> Self {
        Self {
            family,
            index,
            n,
            t,
            seed,
            spectral_radius: rho,
            noise: Noise::Gaussian,
            breaks: None,
            missing: None,
            latent: None,
            seasonal: None,
            transform: None,
            boundary: None,
        }
    }

    /// Family-specific parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let id = self.id();
        check(self.n >= 1 && self.t >= 2, || format!("{id}: n={} t={}", self.n, self.t))?;
        check((0.0..=0.99).contains(&self.spectral_radius), || {
            format!("{id}: spectral radius {}", self.spectral_radius)
        })?;
        let core = self.family != Family::F10;
        if core {
            check(CORE_N.contains(&self.n) && CORE_T.contains(&self.t), || {
                format!("{id}: N={} T={} outside the core grid", self.n, self.t)
            })?;
        } else {
            check(
                [3, 4, 6, 10, 12].contains(&self.n) && [200, 300, 500, 1500, 2000].contains(&self.t),
                || format!("{id}: N={} T={} outside the boundary grid", self.n, self.t),
            )?;
            check(self.boundary.is_some(), || format!("{id}: boundary case missing"))?;
        }
        match self.family {
            Family::F1 => check(self.spectral_radius <= 0.7, || format!("{id}: F1 needs rho <= 0.7"))?,
            Family::F4 => check((0.92..=0.98).contains(&self.spectral_radius), || {
                format!("{id}: F4 needs rho in [0.92, 0.98]")
            })?,
            _ => {}
        }
        if let Some(m) = &self.missing {
            let range = if self.boundary == Some(BoundaryCase::Sparse) {
                0.29..=0.37
            } else {
                0.15..=0.35
            };
            check(range.contains(&m.fraction), || format!("{id}: missing fraction {}", m.fraction))?;
        }
        if let Some(l) = &self.latent {
            check(
                [1, 2].contains(&l.count) && [0.3, 0.6, 0.9].contains(&l.sigma_conf),
                || format!("{id}: latent L={} sigma={}", l.count, l.sigma_conf),
            )?;
        }
        if let Some(s) = &self.seasonal {
            check([12.0, 24.0, 52.0].contains(&s.period) && s.amplitude > 0.0, || {
                format!("{id}: seasonal period {}", s.period)
            })?;
        }
        if let Noise::StudentT { nu } = self.noise {
            check([3.0, 5.0, 10.0].contains(&nu), || format!("{id}: nu = {nu}"))?;
        }
        if let Some(b) = &self.breaks {
            check(
                !b.locations.is_empty()
                    && b.locations.len() <= 3
                    && b.locations.windows(2).all(|w| w[0] < w[1])
                    && b.locations.iter().all(|&l| l > 0 && l < self.t),
                || format!("{id}: break locations {:?}", b.locations),
            )?;
        }
        Ok(())
    }

    /// Severity in `[0, 1]` per risk dimension, derived from generator parameters only.
    ///
    /// Breaks count towards nonstationarity and, as coefficient instability,
    /// towards the confounding proxy. Missing fraction maps to irregularity and
    /// latent loading to confounding. Persistence is read off the implied
    /// integrated autocorrelation time of the observed series: the AR(1) value
    /// at the spectral radius, mixed with the slow components (mean shifts,
    /// seasonal cycle) in proportion to their variance share.
    pub fn severity(&self) -> PerDimension<f64> {
        let clamp = |v: f64| v.clamp(0.0, 1.0);
        let breaks = self
            .breaks
            .as_ref()
            .map_or(0.0, |b| clamp((b.magnitude - 0.25) / 1.25));
        let missing = self.missing.map_or(0.0, |m| clamp((m.fraction - 0.05) / 0.25));
        let latent = self.latent.map_or(0.0, |l| {
            clamp(l.sigma_conf / 0.9 * if l.count == 2 { 1.0 } else { 0.85 })
        });
        PerDimension {
            nonstat: breaks,
            irreg: missing,
            persist: clamp((self.implied_tau() - 3.0) / 12.0),
            confound: latent.max(0.8 * breaks),
        }
    }

    /// Parameter-implied integrated autocorrelation time of the observed series.
    pub fn implied_tau(&self) -> f64 {
        let mix = |tau: f64, var: f64, tau_component: f64| {
            let share = var / (1.0 + var);
            (1.0 - share) * tau + share * tau_component
        };
        let mut tau = ar1_tau(self.spectral_radius);
        if let Some(b) = &self.breaks {
            // k random-sign shifts of m SD: step variance about k m^2 / 4;
            // a step over segments of length L decorrelates over about L / 3
            let k = b.locations.len() as f64;
            let segment = self.t as f64 / (k + 1.0);
            tau = mix(tau, k * b.magnitude * b.magnitude / 4.0, segment / 3.0);
        }
        if let Some(s) = &self.seasonal {
            // harmonics a and a/2; the first autocorrelation lobe sums to about P / (2 pi)
            let var = 0.625 * s.amplitude * s.amplitude;
            tau = tau.max(mix(tau, var, s.period / std::f64::consts::TAU));
        }
        tau
    }
}

/// Stratified draw from `[lo, hi]`: slot `i` of `count` gets its own sub-interval.
fn stratified(rng: &mut AuditRng, i: usize, count: usize, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (i as f64 + rng.random::<f64>()) / count as f64
}

fn break_spec(rng: &mut AuditRng, t: usize, count: usize, magnitude: f64) -> BreakSpec {
    let (lo, hi) = ((0.2 * t as f64).ceil() as usize, (0.8 * t as f64).floor() as usize);
    let gap = t / 10;
    loop {
        let mut locs: Vec<usize> = (0..count).map(|_| rng.random_range(lo..=hi)).collect();
        locs.sort_unstable();
        if locs.windows(2).all(|w| w[1] - w[0] >= gap) {
            return BreakSpec {
                locations: locs,
                magnitude,
            };
        }
    }
}

fn core_sizes(rng: &mut AuditRng, count: usize) -> Vec<(usize, usize)> {
    let mut ns: Vec<usize> = (0..count).map(|i| CORE_N[i % 4]).collect();
    let mut ts: Vec<usize> = (0..count).map(|i| CORE_T[i % 3]).collect();
    ns.shuffle(rng);
    ts.shuffle(rng);
    ns.into_iter().zip(ts).collect()
}

fn low_rho(rng: &mut AuditRng) -> f64 {
    rng.random_range(0.3..=0.7)
}

/// Deterministic specs for `per_family` entries of every family.
pub fn sample_specs(master_seed: u64, per_family: usize) -> Vec<DgpSpec> {
    let mut out = Vec::with_capacity(10 * per_family);
    for family in Family::ALL {
        let fseed = child_seed(master_seed, family.index() as u64);
        let mut rng = rng_from_seed(fseed);
        let sizes = core_sizes(&mut rng, per_family);
        let mut severities: Vec<usize> = (0..per_family).collect();
        severities.shuffle(&mut rng);
        for i in 0..per_family {
            let seed = child_seed(fseed, 1 + i as u64);
            let (n, t) = sizes[i];
            let k = severities[i];
            let mut s = DgpSpec::base(family, i, n, t, seed, 0.5);
            match family {
                Family::F1 => s.spectral_radius = low_rho(&mut rng),
                Family::F2 => {
                    s.spectral_radius = low_rho(&mut rng);
                    let magnitude = stratified(&mut rng, k, per_family, 0.5, 3.0);
                    s.breaks = Some(break_spec(&mut rng, t, 1 + i % 3, magnitude));
                }
                Family::F3 => {
                    s.spectral_radius = low_rho(&mut rng);
                    let mechanism = [MissingMechanism::Mcar, MissingMechanism::Mar, MissingMechanism::Seasonal][i % 3];
                    s.missing = Some(MissingSpec {
                        mechanism,
                        fraction: stratified(&mut rng, k, per_family, 0.15, 0.35),
                    });
                }
                Family::F4 => s.spectral_radius = stratified(&mut rng, k, per_family, 0.92, 0.98),
                Family::F5 => {
                    s.spectral_radius = low_rho(&mut rng);
                    s.latent = Some(LatentSpec {
                        count: 1 + (i / 3) % 2,
                        sigma_conf: [0.3, 0.6, 0.9][i % 3],
                    });
                }
                Family::F6 => {
                    s.spectral_radius = low_rho(&mut rng);
                    s.seasonal = Some(SeasonalSpec {
                        period: [12.0, 24.0, 52.0][i % 3],
                        amplitude: stratified(&mut rng, k, per_family, 0.25, 2.0),
                    });
                }
                Family::F7 => {
                    s.spectral_radius = low_rho(&mut rng);
                    s.transform = Some([Transform::Tanh, Transform::Sin, Transform::Relu][i % 3]);
                }
                Family::F8 => {
                    s.spectral_radius = low_rho(&mut rng);
                    s.noise = [
                        Noise::StudentT { nu: 3.0 },
                        Noise::StudentT { nu: 5.0 },
                        Noise::StudentT { nu: 10.0 },
                        Noise::Laplace,
                    ][i % 4];
                }
                Family::F9 => mixed(&mut s, &mut rng, i),
                Family::F10 => boundary(&mut s, &mut rng, i, per_family),
            }
            out.push(s);
        }
    }
    out
}

/// Co-occurring violations at high severity, cycled over five combinations.
fn mixed(s: &mut DgpSpec, rng: &mut AuditRng, i: usize) {
    let t = s.t;
    let breaks = |rng: &mut AuditRng| {
        let count = 1 + rng.random_range(0..3);
        let magnitude = rng.random_range(1.5..3.0);
        Some(break_spec(rng, t, count, magnitude))
    };
    let missing = |rng: &mut AuditRng| {
        Some(MissingSpec {
            mechanism: [MissingMechanism::Mcar, MissingMechanism::Mar][rng.random_range(0..2)],
            fraction: rng.random_range(0.25..=0.35),
        })
    };
    s.spectral_radius = low_rho(rng);
    match i % 5 {
        0 => {
            s.breaks = breaks(rng);
            s.spectral_radius = rng.random_range(0.92..=0.98);
        }
        1 => {
            s.breaks = breaks(rng);
            s.missing = missing(rng);
        }
        2 => {
            s.spectral_radius = rng.random_range(0.92..=0.98);
            s.seasonal = Some(SeasonalSpec {
                period: [12.0, 24.0, 52.0][rng.random_range(0..3)],
                amplitude: rng.random_range(1.0..2.0),
            });
        }
        3 => {
            s.missing = missing(rng);
            s.latent = Some(LatentSpec {
                count: 2,
                sigma_conf: 0.9,
            });
        }
        _ => {
            s.breaks = breaks(rng);
            s.missing = missing(rng);
            s.spectral_radius = rng.random_range(0.92..=0.98);
            s.latent = Some(LatentSpec {
                count: 2,
                sigma_conf: 0.9,
            });
            s.seasonal = Some(SeasonalSpec {
                period: 12.0,
                amplitude: rng.random_range(1.0..2.0),
            });
        }
    }
}

/// Boundary cases in proportion 8 : 12 : 18 : 12 per 50 entries.
fn boundary(s: &mut DgpSpec, rng: &mut AuditRng, i: usize, per_family: usize) {
    let slot = (i * 50) / per_family;
    let (case, j) = match slot {
        0..=7 => (BoundaryCase::ShortSeries, slot),
        8..=19 => (BoundaryCase::Sparse, slot - 8),
        20..=37 => (BoundaryCase::HighDimensional, slot - 20),
        _ => (BoundaryCase::NearUnitRoot, slot - 38),
    };
    s.boundary = Some(case);
    s.spectral_radius = low_rho(rng);
    match case {
        BoundaryCase::ShortSeries => {
            s.n = 6;
            s.t = 200;
        }
        BoundaryCase::Sparse => {
            s.n = [3, 4, 10, 12][j % 4];
            s.t = [200, 300, 1500][j % 3];
            s.missing = Some(MissingSpec {
                mechanism: MissingMechanism::Mcar,
                fraction: rng.random_range(0.29..=0.37),
            });
        }
        BoundaryCase::HighDimensional => {
            s.n = 12;
            s.t = 500;
        }
        BoundaryCase::NearUnitRoot => {
            s.n = [3, 4, 10, 12][j % 4];
            s.t = [200, 300, 1500, 2000][(j / 4 + j) % 4];
            s.spectral_radius = rng.random_range(0.89..=0.91);
        }
    }
}
