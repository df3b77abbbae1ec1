use causal_audit::atlas::{
    generate_atlas, generate_dataset, read_atlas, read_manifest, sample_specs, spectral_radius, stable_var_matrix,
    write_atlas, Family, MissingSpec,
};

#[test]
fn forced_spectral_radius() {
    let a = stable_var_matrix(6, 0.95, 0.3, 7).unwrap();
    assert!((spectral_radius(&a) - 0.95).abs() <= 1e-6);
    assert_eq!(stable_var_matrix(1, 0.5, 0.3, 1).unwrap()[(0, 0)], 0.5);
    assert!(stable_var_matrix(4, 0.0, 0.3, 1).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn missing_fraction_is_realized() {
    let mut spec = sample_specs(3, 5).into_iter().find(|s| s.family == Family::F3).unwrap();
    let m = spec.missing.unwrap();
    spec.missing = Some(MissingSpec { fraction: 0.25, ..m });
    let e = generate_dataset(&spec).unwrap();
    assert!((e.data.missing_fraction() - 0.25).abs() <= 0.02, "{}", e.data.missing_fraction());
}

#[test]
fn generation_is_deterministic() {
    for spec in sample_specs(8, 1) {
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a.data.to_json_string().unwrap(), b.data.to_json_string().unwrap());
        assert_eq!(a.truth, b.truth);
        assert_eq!(a, b);
    }
}

#[test]
fn family_parameter_ranges() {
    let specs = sample_specs(2024, 50);
    assert_eq!(specs.len(), 500);
    for s in specs.iter().filter(|s| s.family == Family::F1) {
        assert!(s.spectral_radius <= 0.7);
    }
    for s in specs.iter().filter(|s| s.family == Family::F5) {
        let l = s.latent.unwrap();
        assert!([1, 2].contains(&l.count));
        assert!([0.3, 0.6, 0.9].iter().any(|v| (v - l.sigma_conf).abs() < 1e-12), "{}", l.sigma_conf);
    }
}

#[test]
fn atlas_round_trips_through_disk() {
    let entries = generate_atlas(17, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_atlas(dir.path(), &entries, Some(17)).unwrap();
    let manifest = read_manifest(dir.path()).unwrap();
    assert_eq!(manifest.total, 10);
    assert_eq!(manifest.master_seed, Some(17));
    assert!(manifest.per_family.values().all(|&c| c == 1));
    assert_eq!(read_atlas(dir.path()).unwrap(), entries);
}
