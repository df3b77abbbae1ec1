use causal_audit::config::FeatureAnchors;
use causal_audit::diagnostics::{
    audit_confounding, audit_irregularity, audit_nonlinearity, audit_persistence, audit_stationarity,
    normalize_features, FeatureSlot,
};
use causal_audit::risk::{bootstrap_interval, Dimension, IsotonicMap, LogisticRiskModel};
use causal_audit::rng::rng_from_seed;
use causal_audit::{audit, AuditConfig, AuditError, Features, TimeSeriesMatrix};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn gaussian(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| z.sample(&mut rng)).collect()
}

fn iid(n: usize, t: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n).map(|j| gaussian(seed * 100 + j as u64, t)).collect()
}

fn matrix(cols: &[Vec<f64>]) -> TimeSeriesMatrix {
    TimeSeriesMatrix::from_columns(cols).unwrap()
}

/// Columns with the given cells (row, col) masked.
fn with_holes(cols: &[Vec<f64>], holes: &[(usize, usize)]) -> TimeSeriesMatrix {
    let t = cols[0].len();
    let mut rows: Vec<Vec<Option<f64>>> = (0..t).map(|i| cols.iter().map(|c| Some(c[i])).collect()).collect();
    for &(i, j) in holes {
        rows[i][j] = None;
    }
    let names = (0..cols.len()).map(|j| format!("x{j}")).collect();
    TimeSeriesMatrix::from_rows((0..t).map(|i| i as f64).collect(), rows, names).unwrap()
}

/// Diagonal-plus-coupling VAR(1), coefficient matrix scaled by `scale(t)`.
fn var1(n: usize, t: usize, seed: u64, scale: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    let e = iid(n, t + 100, seed);
    let mut x = vec![vec![0.0; t + 100]; n];
    for s in 1..t + 100 {
        let k = scale(s.saturating_sub(100));
        for j in 0..n {
            let coupling = if j > 0 { 0.2 * x[j - 1][s - 1] } else { 0.0 };
            x[j][s] = k * (0.4 * x[j][s - 1] + coupling) + e[j][s];
        }
    }
    x.into_iter().map(|c| c[100..].to_vec()).collect()
}

#[test]
fn iid_noise_is_stationary() {
    let mut good = 0;
    for seed in 0..50 {
        let b = audit_stationarity(&matrix(&iid(1, 500, seed)), 0.05).unwrap();
        let adf = b.adf_pvalues[0].unwrap();
        let kpss = b.kpss_pvalues[0].unwrap();
        if adf < 0.05 && kpss > 0.05 && b.break_count == 0 {
            good += 1;
        }
    }
    assert!(good >= 45, "{good}/50");
}

#[test]
fn linear_trend_is_flagged() {
    let e = gaussian(3, 500);
    let y: Vec<f64> = e.iter().enumerate().map(|(t, v)| 0.01 * t as f64 + v).collect();
    let b = audit_stationarity(&matrix(&[y]), 0.05).unwrap();
    assert!(b.kpss_pvalues[0].unwrap() < 0.05);
    assert!(b.drift_slope_z[0].unwrap().abs() > 3.0);
}

#[test]
fn mean_step_is_located_and_sized() {
    let t = 500;
    let cols: Vec<Vec<f64>> = iid(2, t, 4)
        .into_iter()
        .map(|c| c.into_iter().enumerate().map(|(i, v)| v + if i >= t / 2 { 3.0 } else { 0.0 }).collect())
        .collect();
    let b = audit_stationarity(&matrix(&cols), 0.05).unwrap();
    assert!(b.break_count >= 1);
    let nearest = b.break_locations.iter().map(|&l| (l as i64 - (t / 2) as i64).abs()).min().unwrap();
    assert!(nearest <= 10, "{:?}", b.break_locations);
    assert!((2.5..=3.5).contains(&b.break_magnitude), "{}", b.break_magnitude);
}

#[test]
fn complete_series_has_no_irregularity() {
    let b = audit_irregularity(&matrix(&iid(3, 200, 5)), Some(12.0)).unwrap();
    assert_eq!(b.gap_cv, 0.0);
    assert_eq!(b.missing_fraction, 0.0);
    assert!(b.mcar_pvalue.is_none() && b.seasonal_missing_pvalue.is_none());
}

#[test]
fn uniform_holes_look_mcar() {
    let (n, t) = (3, 500);
    let mut passes = 0;
    for seed in 0..50 {
        let mut cells: Vec<(usize, usize)> = (0..t).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        cells.shuffle(&mut rng_from_seed(1000 + seed));
        cells.truncate(n * t / 5);
        let b = audit_irregularity(&with_holes(&iid(n, t, seed), &cells), None).unwrap();
        assert!((b.missing_fraction - 0.2).abs() < 1e-12);
        if b.mcar_pvalue.is_some_and(|p| p > 0.05) {
            passes += 1;
        }
    }
    assert!(passes >= 40, "{passes}/50");
}

#[test]
fn phase_locked_holes_are_seasonal() {
    let (n, t) = (3, 480);
    let mut rng = rng_from_seed(6);
    let holes: Vec<(usize, usize)> = (0..t)
        .filter(|i| i % 12 < 3)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|_| rng.random::<f64>() < 0.5)
        .collect();
    let b = audit_irregularity(&with_holes(&iid(n, t, 6), &holes), Some(12.0)).unwrap();
    assert!(b.seasonal_missing_pvalue.unwrap() < 0.05);
}

#[test]
fn iid_noise_has_short_memory() {
    let b = audit_persistence(&matrix(&iid(3, 1000, 7))).unwrap();
    for tau in &b.tau_int {
        assert!((0.4..=0.7).contains(tau), "{tau}");
    }
    assert!(b.t_eff_ratio >= 0.8);
}

#[test]
fn strong_ar_has_long_memory() {
    let e = gaussian(8, 10_500);
    let mut x = vec![0.0; e.len()];
    for i in 1..e.len() {
        x[i] = 0.9 * x[i - 1] + e[i];
    }
    let b = audit_persistence(&matrix(&[x[500..].to_vec()])).unwrap();
    assert!((b.tau_int[0] / 9.5 - 1.0).abs() <= 0.2, "{}", b.tau_int[0]);
}

#[test]
fn inflation_factor_at_twenty_effective_samples() {
    let model = LogisticRiskModel::default_for(Dimension::Nonstat);
    let f = Features::default();
    let map = IsotonicMap::identity();
    let full = bootstrap_interval(&f, &model, &map, 365.0, 365.0, 200, 3).unwrap();
    let short = bootstrap_interval(&f, &model, &map, 365.0, 20.0, 200, 3).unwrap();
    let factor = short.sd_adjusted / full.sd_adjusted;
    assert!((factor - (365.0f64 / 20.0).sqrt()).abs() < 1e-9);
    assert!((factor - 4.27).abs() < 0.01);
}

#[test]
fn linear_var_is_not_flagged() {
    let mut ok = 0;
    for seed in 0..30 {
        let b = audit_nonlinearity(&matrix(&var1(3, 500, seed, |_| 1.0)), 3, seed).unwrap();
        let worst = b.delta_rmse_rel.iter().copied().fold(f64::MIN, f64::max);
        if worst <= 0.10 && !b.flagged {
            ok += 1;
        }
    }
    assert!(ok >= 27, "{ok}/30");
}

#[test]
fn sine_response_is_flagged() {
    let mut rng = rng_from_seed(9);
    let t = 600;
    let x: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let e = gaussian(10, t);
    let y: Vec<f64> = (0..t)
        .map(|i| if i == 0 { 0.0 } else { (3.0 * x[i - 1]).sin() + 0.1 * e[i] })
        .collect();
    let b = audit_nonlinearity(&matrix(&[x, y]), 3, 1).unwrap();
    assert!(b.delta_rmse_rel[1] > 0.30, "{:?}", b.delta_rmse_rel);
    assert!(b.flagged);
}

#[test]
fn constant_target_is_degenerate() {
    let cols = vec![gaussian(11, 300), vec![2.0; 300]];
    let r = audit_nonlinearity(&matrix(&cols), 3, 1);
    assert!(matches!(r, Err(AuditError::DegenerateTarget(1))), "{r:?}");
}

#[test]
fn independent_columns_have_unit_vif() {
    let b = audit_confounding(&matrix(&iid(4, 1000, 12))).unwrap();
    for v in &b.vif {
        assert!((1.0..=1.5).contains(v), "{v}");
    }
}

#[test]
fn doubled_coefficients_break_chow() {
    let t = 1000;
    let cols = var1(3, t, 13, |s| if s >= t / 2 { 2.0 } else { 1.0 });
    let b = audit_confounding(&matrix(&cols)).unwrap();
    assert!(b.chow_pvalue < 0.05, "{}", b.chow_pvalue);
}

#[test]
fn feature_anchor_endpoints() {
    let series = matrix(&iid(3, 300, 14));
    let mut r = audit(&series, &AuditConfig::default()).unwrap();
    let anchors = FeatureAnchors::default();
    let features = |r: &causal_audit::DiagnosticReport| {
        normalize_features(&r.stationarity, &r.irregularity, &r.persistence, r.confounding.as_ref(), &anchors).0
    };
    r.stationarity.adf_pvalues_corrected = vec![Some(1.0); 3];
    r.stationarity.break_magnitude = 1.5;
    let c = r.confounding.as_mut().unwrap();
    c.max_vif = 1.0;
    c.vif = vec![1.0; 3];
    let f = features(&r);
    assert_eq!(f.get(FeatureSlot::XAdf), 1.0);
    assert!((f.get(FeatureSlot::XBreakMag) - 0.5).abs() < 1e-12);
    assert_eq!(f.get(FeatureSlot::XVif), 0.0);
    let c = r.confounding.as_mut().unwrap();
    c.max_vif = 1e4;
    c.vif = vec![1e4; 3];
    assert!((features(&r).get(FeatureSlot::XVif) - 1.0).abs() < 1e-12);
}
