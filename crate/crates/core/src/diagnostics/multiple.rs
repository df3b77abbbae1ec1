use crate::error::{AuditError, Result};

/// Benjamini-Yekutieli step-up adjustment under arbitrary dependence.
///
/// Returned values are in input order, clamped to `[0, 1]`.
pub fn benjamini_yekutieli(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(AuditError::InvalidP(bad));
    }
    let m = pvalues.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let harmonic: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let candidate = pvalues[idx] * m as f64 * harmonic / (rank + 1) as f64;
        running = running.min(candidate);
        adjusted[idx] = running.clamp(0.0, 1.0);
    }
    Ok(adjusted)
}
