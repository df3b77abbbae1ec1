use causal_audit::atlas::generate_atlas;
use causal_audit::eval::{audit_entries, benchmark_config, benchmark_from_audits, BenchmarkOptions};
use causal_audit::{DiagnosticReport, Result};

#[test]
fn small_benchmark_is_complete_and_deterministic() {
    let entries = generate_atlas(31, 8).unwrap();
    let config = benchmark_config();
    let options = BenchmarkOptions {
        holdout_fraction: 0.3,
        ..BenchmarkOptions::default()
    };
    let audited = audit_entries(&entries, &config, 1);
    let cached: Vec<Option<DiagnosticReport>> = audited.iter().map(|(r, _)| r.as_ref().ok().cloned()).collect();
    let replay = |c: &[Option<DiagnosticReport>]| -> Vec<(Result<DiagnosticReport>, f64)> {
        c.iter()
            .map(|r| (r.clone().ok_or_else(|| causal_audit::AuditError::InvalidInput("audit failed".into())), 0.0))
            .collect()
    };
    let a = benchmark_from_audits(&entries, audited, &config, &options).unwrap();
    let b = benchmark_from_audits(&entries, replay(&cached), &config, &options).unwrap();
    assert_eq!(a.without_runtime().to_json_string().unwrap(), b.without_runtime().to_json_string().unwrap());

    assert_eq!(a.calibration.len(), 4);
    assert_eq!(a.fixtures.passed, 21);
    assert_eq!(a.n_calibration + a.n_holdout + a.excluded.len(), entries.len());
    for row in &a.calibration {
        assert_eq!(row.summary.bins.iter().map(|b| b.count).sum::<usize>(), a.n_holdout);
    }
    let s = &a.selective;
    assert_eq!(s.always_run.coverage, 1.0);
    assert!(s.strict.coverage <= s.default.coverage);
    assert!(a.bins_csv().unwrap().lines().count() > 4);

    // refitting is skipped when models are supplied
    let fixed = BenchmarkOptions {
        models: Some(a.models.clone()),
        ..options.clone()
    };
    let c = benchmark_from_audits(&entries, replay(&cached), &config, &fixed).unwrap();
    assert_eq!(c.models, a.models);
    assert_eq!(c.holdout, a.holdout);
}
