//! Small regression-tree ensemble used as the nonlinear reference model.
//!
//! Features are quantile-binned once per fit; splits are chosen by SSE
//! reduction over bin boundaries on a random feature subset.

use rand::seq::index::sample;

use crate::rng::{child_seed, rng_from_seed, AuditRng};

const MAX_BINS: usize = 32;

#[derive(Debug, Clone, Copy)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub subsample: f64,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 6,
            subsample: 0.8,
            min_leaf: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionForest {
    trees: Vec<Tree>,
}

struct Binned {
    /// `bins[f][i]`: bin index of row `i` for feature `f`.
    bins: Vec<Vec<u8>>,
    /// Upper edge (inclusive) of each bin per feature.
    edges: Vec<Vec<f64>>,
}

fn bin_features(x: &[Vec<f64>]) -> Binned {
    let p = x.first().map_or(0, Vec::len);
    let n = x.len();
    let mut bins = Vec::with_capacity(p);
    let mut edges = Vec::with_capacity(p);
    for f in 0..p {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let e: Vec<f64> = if vals.len() <= MAX_BINS {
            vals
        } else {
            let mut e: Vec<f64> = (1..=MAX_BINS)
                .map(|q| vals[(q * vals.len() / MAX_BINS).min(vals.len()) - 1])
                .collect();
            e.dedup();
            e
        };
        let col: Vec<u8> = (0..n)
            .map(|i| e.partition_point(|&edge| edge < x[i][f]).min(e.len() - 1) as u8)
            .collect();
        bins.push(col);
        edges.push(e);
    }
    Binned { bins, edges }
}

struct Builder<'a> {
    data: &'a Binned,
    y: &'a [f64],
    params: ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let m = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(m));
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut AuditRng) -> usize {
        let n = rows.len();
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return self.leaf(&rows);
        }
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let base = total * total / n as f64;
        let p = self.data.bins.len();
        let mut best: Option<(f64, usize, usize)> = None;
        let mut count = [0usize; MAX_BINS];
        let mut sum = [0.0f64; MAX_BINS];
        for f in sample(rng, p, self.mtry.min(p)).iter() {
            let n_bins = self.data.edges[f].len();
            if n_bins < 2 {
                continue;
            }
            count[..n_bins].fill(0);
            sum[..n_bins].fill(0.0);
            let col = &self.data.bins[f];
            for &i in &rows {
                let b = col[i] as usize;
                count[b] += 1;
                sum[b] += self.y[i];
            }
            let (mut nl, mut sl) = (0usize, 0.0);
            for b in 0..n_bins - 1 {
                nl += count[b];
                sl += sum[b];
                let nr = n - nl;
                if nl < self.params.min_leaf || nr < self.params.min_leaf {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - base;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((gain, feature, bin)) = best else {
            return self.leaf(&rows);
        };
        if gain <= 1e-12 {
            return self.leaf(&rows);
        }
        let col = &self.data.bins[feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| col[i] as usize <= bin);
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf(0.0));
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[idx] = Node::Split {
            feature,
            threshold: self.data.edges[feature][bin],
            left,
            right,
        };
        idx
    }
}

impl RegressionForest {
    /// Fit on row-major `x` (all rows the same width) and targets `y`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: ForestParams) -> Self {
        let data = bin_features(x);
        let p = data.bins.len();
        let mtry = (p / 3).max(1);
        let n = x.len();
        let take = ((params.subsample * n as f64).round() as usize).clamp(1, n);
        let mut trees = Vec::with_capacity(params.n_trees);
        for t in 0..params.n_trees {
            let mut rng = rng_from_seed(child_seed(params.seed, t as u64));
            let rows = sample(&mut rng, n, take).into_vec();
            let mut b = Builder {
                data: &data,
                y,
                params,
                mtry,
                nodes: Vec::new(),
            };
            b.grow(rows, 0, &mut rng);
            trees.push(Tree { nodes: b.nodes });
        }
        Self { trees }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_a_step_function() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 200.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
        let f = RegressionForest::fit(&x, &y, ForestParams::default());
        assert!(f.predict(&[0.9]) > 0.9);
        assert!(f.predict(&[0.1]) < 0.1);
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64).sin(), (i as f64).cos()]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1]).collect();
        let a = RegressionForest::fit(&x, &y, ForestParams::default());
        let b = RegressionForest::fit(&x, &y, ForestParams::default());
        assert_eq!(a.predict(&[0.3, 0.2]), b.predict(&[0.3, 0.2]));
    }
}
