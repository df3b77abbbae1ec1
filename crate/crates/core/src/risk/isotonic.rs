use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Monotone map from raw scores to calibrated probabilities.
///
/// Evaluation interpolates linearly between breakpoints and clamps outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    /// Set when the fit saw a single label class and collapsed to a constant.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl IsotonicMap {
    /// The identity on `[0, 1]`.
    pub fn identity() -> Self {
        Self {
            breakpoints: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
            degenerate: false,
        }
    }

    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let map = Self {
            breakpoints,
            values,
            degenerate: false,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.breakpoints.is_empty() || self.breakpoints.len() != self.values.len() {
            return Err(AuditError::InvalidInput(
                "isotonic map needs matching, nonempty breakpoints and values".into(),
            ));
        }
        if !self.breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(AuditError::InvalidInput(
                "isotonic breakpoints must be strictly increasing".into(),
            ));
        }
        if !self.values.windows(2).all(|w| w[0] <= w[1])
            || self.values.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(AuditError::InvalidInput(
                "isotonic values must be nondecreasing in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, raw: f64) -> f64 {
        let bp = &self.breakpoints;
        let n = bp.len();
        if raw <= bp[0] {
            return self.values[0];
        }
        if raw >= bp[n - 1] {
            return self.values[n - 1];
        }
        let i = bp.partition_point(|&b| b <= raw);
        let (a, b) = (bp[i - 1], bp[i]);
        let (fa, fb) = (self.values[i - 1], self.values[i]);
        fa + (fb - fa) * (raw - a) / (b - a)
    }
}

/// Pool-adjacent-violators fit of labels on raw scores; tied scores are
/// pooled before fitting.
pub fn fit_isotonic(scores: &[f64], labels: &[bool]) -> Result<IsotonicMap> {
    if scores.len() != labels.len() || scores.len() < 2 {
        return Err(AuditError::InvalidInput(
            "isotonic fit needs at least two scores with matching labels".into(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AuditError::InvalidInput("non-finite raw score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // blocks: (first unique-score index, weight, mean)
    let mut xs: Vec<f64> = Vec::new();
    let mut blocks: Vec<(usize, f64, f64)> = Vec::new();
    for &i in &order {
        let y = if labels[i] { 1.0 } else { 0.0 };
        if xs.last() == Some(&scores[i]) {
            let last = blocks.last_mut().unwrap();
            last.2 = (last.2 * last.1 + y) / (last.1 + 1.0);
            last.1 += 1.0;
        } else {
            xs.push(scores[i]);
            blocks.push((xs.len() - 1, 1.0, y));
        }
    }
    let mut stack: Vec<(usize, f64, f64)> = Vec::with_capacity(blocks.len());
    for b in blocks {
        let mut cur = b;
        while let Some(&top) = stack.last() {
            if top.2 <= cur.2 {
                break;
            }
            stack.pop();
            let w = top.1 + cur.1;
            cur = (top.0, w, (top.2 * top.1 + cur.2 * cur.1) / w);
        }
        stack.push(cur);
    }
    let mut values = vec![0.0; xs.len()];
    for (k, &(start, _, mean)) in stack.iter().enumerate() {
        let end = stack.get(k + 1).map_or(xs.len(), |n| n.0);
        values[start..end].fill(mean.clamp(0.0, 1.0));
    }
    let degenerate = labels.iter().all(|&l| l == labels[0]);
    Ok(IsotonicMap {
        breakpoints: xs,
        values,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fitted(scores: &[f64], labels: &[bool]) -> Vec<f64> {
        let m = fit_isotonic(scores, labels).unwrap();
        scores.iter().map(|&s| m.apply(s)).collect()
    }

    #[test]
    fn hand_pava_cases() {
        assert_eq!(fitted(&[0.1, 0.2, 0.3], &[false, false, true]), vec![0.0, 0.0, 1.0]);
        assert_eq!(fitted(&[0.1, 0.2, 0.3], &[true, false, true]), vec![0.5, 0.5, 1.0]);
        assert_eq!(
            fitted(&[0.1, 0.2, 0.3, 0.4], &[true, true, false, false]),
            vec![0.5; 4]
        );
    }

    #[test]
    fn ties_are_pooled_first() {
        let m = fit_isotonic(&[0.5, 0.5, 0.7], &[true, false, true]).unwrap();
        assert_eq!(m.breakpoints, vec![0.5, 0.7]);
        assert_eq!(m.values, vec![0.5, 1.0]);
    }

    #[test]
    fn evaluation_rules() {
        let m = IsotonicMap::new(vec![0.2, 0.4], vec![0.2, 0.4]).unwrap();
        assert_eq!(m.apply(0.0), 0.2);
        assert_eq!(m.apply(0.4), 0.4);
        assert!((m.apply(0.3) - 0.3).abs() < 1e-15);
        assert_eq!(m.apply(9.0), 0.4);
        let flat = fit_isotonic(&[0.1, 0.9], &[true, true]).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.apply(0.0), 1.0);
    }

    proptest! {
        #[test]
        fn fit_is_monotone_and_reproduces_training(
            data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..60),
            shift in -3.0f64..3.0,
            scale in 0.1f64..10.0,
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            let m = fit_isotonic(&scores, &labels).unwrap();
            m.validate().unwrap();
            for (k, &x) in m.breakpoints.iter().enumerate() {
                prop_assert_eq!(m.apply(x), m.values[k]);
            }
            // strictly increasing reparameterization of scores leaves calibrated values unchanged
            let g = |s: f64| scale * s + shift;
            let moved: Vec<f64> = scores.iter().map(|&s| g(s)).collect();
            let m2 = fit_isotonic(&moved, &labels).unwrap();
            for &s in &scores {
                prop_assert!((m.apply(s) - m2.apply(g(s))).abs() < 1e-12);
            }
        }
    }
}
