use causal_audit::discovery::{var_granger, var_granger_discover};
use causal_audit::graph::Edge;
use causal_audit::rng::rng_from_seed;
use causal_audit::TimeSeriesMatrix;
use rand_distr::{Distribution, Normal};

fn noise(seed: u64, n: usize, t: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| (0..t).map(|_| z.sample(&mut rng)).collect()).collect()
}

/// x_t = A x_{t-1} + e_t after a burn-in of 100.
fn simulate(a: &[Vec<f64>], t: usize, seed: u64) -> TimeSeriesMatrix {
    let n = a.len();
    let e = noise(seed, n, t + 100);
    let mut x = vec![vec![0.0; t + 100]; n];
    for s in 1..t + 100 {
        for i in 0..n {
            x[i][s] = (0..n).map(|j| a[i][j] * x[j][s - 1]).sum::<f64>() + e[i][s];
        }
    }
    let cols: Vec<Vec<f64>> = x.into_iter().map(|c| c[100..].to_vec()).collect();
    TimeSeriesMatrix::from_columns(&cols).unwrap()
}

#[test]
fn strong_coupling_is_recovered() {
    let a = vec![vec![0.3, 0.0], vec![0.6, 0.3]];
    let hits = (0..50)
        .filter(|&seed| {
            let g = var_granger_discover(&simulate(&a, 1000, seed), 1, 0.05).unwrap();
            let edges: Vec<&Edge> = g.edges().collect();
            edges.iter().any(|e| e.source == 0 && e.target == 1 && e.lag == 1)
                && !edges.iter().any(|e| e.source == 1 && e.target == 0)
        })
        .count();
    assert!(hits >= 48, "{hits}/50");
}

#[test]
fn white_noise_yields_few_edges() {
    let total: usize = (0..100)
        .map(|seed| {
            let cols = noise(500 + seed, 3, 500);
            let g = var_granger_discover(&TimeSeriesMatrix::from_columns(&cols).unwrap(), 1, 0.05).unwrap();
            g.edges().count()
        })
        .sum();
    assert!(total as f64 / 100.0 <= 0.5, "{total}");
}

#[test]
fn diagonal_ar_has_no_cross_edges() {
    let a = vec![vec![0.6, 0.0, 0.0], vec![0.0, 0.5, 0.0], vec![0.0, 0.0, 0.4]];
    let clean = (0..50)
        .filter(|&seed| {
            let g = var_granger_discover(&simulate(&a, 500, 700 + seed), 1, 0.05).unwrap();
            let clean = g.edges().all(|e| e.source == e.target);
            clean
        })
        .count();
    assert!(clean >= 45, "{clean}/50");
}

#[test]
fn affine_rescaling_keeps_edges() {
    let a = vec![vec![0.4, 0.0, 0.2], vec![0.5, 0.3, 0.0], vec![0.0, 0.4, 0.2]];
    let base = simulate(&a, 400, 9);
    let cols: Vec<Vec<f64>> = (0..3).map(|j| base.observed_column(j)).collect();
    let scaled: Vec<Vec<f64>> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| c.iter().map(|v| (j as f64 * 7.0 + 0.01) * v - 3.0 * j as f64).collect())
        .collect();
    let g1 = var_granger(&base, 2, 0.05).unwrap();
    let g2 = var_granger(&TimeSeriesMatrix::from_columns(&scaled).unwrap(), 2, 0.05).unwrap();
    assert_eq!(g1.graph, g2.graph);
    for (x, y) in g1.tests.iter().zip(&g2.tests) {
        assert!((x.pvalue - y.pvalue).abs() < 1e-8);
    }
}
