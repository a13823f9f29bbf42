//! λ-weighted distances between successive Picard iterates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contraction threshold with a calibrated `C₁`.
pub const RATIO_LIMIT: f64 = 0.6;
/// Threshold when `C₁` falls back to its default of 1.
pub const RATIO_LIMIT_UNCALIBRATED: f64 = 0.8;

/// `λ₁ = 8 L² + C₁ + 1`.
pub fn lambda_one(lipschitz: f64, c1: f64) -> f64 {
    8.0 * lipschitz * lipschitz + c1 + 1.0
}

/// Per-iteration record of how far iterate `n` moved from iterate `n - 1`.
///
/// `node_distances[n - 1][k]` is the squared distance at time `times[k]`
/// (mean over paths or space integral) of both the value and the
/// martingale/gradient component. Iterate 0 is identically zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateLog {
    pub times: Vec<f64>,
    pub dt: f64,
    pub node_distances: Vec<Vec<f64>>,
    pub sup_differences: Vec<f64>,
    /// True when the driver has no solution dependence and one linear
    /// solve is exact.
    pub single_pass: bool,
}

impl IterateLog {
    pub fn new(times: Vec<f64>, dt: f64) -> Self {
        Self {
            times,
            dt,
            ..Self::default()
        }
    }

    pub fn iterations(&self) -> usize {
        self.node_distances.len()
    }

    pub fn push(&mut self, distances: Vec<f64>, sup: f64) {
        self.node_distances.push(distances);
        self.sup_differences.push(sup);
    }

    /// `Δt Σ_k e^{λ t_k} d_k` for iteration `n` (1-based).
    pub fn weighted_distance(&self, n: usize, lambda: f64) -> f64 {
        self.dt
            * self.node_distances[n - 1]
                .iter()
                .zip(&self.times)
                .map(|(d, t)| (lambda * t).exp() * d)
                .sum::<f64>()
    }

    pub fn weighted_distances(&self, lambda: f64) -> Vec<f64> {
        (1..=self.iterations())
            .map(|n| self.weighted_distance(n, lambda))
            .collect()
    }
}

/// Ratios of successive squared λ₁-weighted iterate distances; the proof's
/// contraction factor is ½ for these.
pub fn picard_contraction_ratio(log: &IterateLog, lambda1: f64) -> Result<Vec<f64>> {
    if log.single_pass {
        return Ok(Vec::new());
    }
    if log.iterations() < 2 {
        return Err(Error::InsufficientData(format!(
            "contraction ratios need at least 3 iterates, log has {}",
            log.iterations() + 1
        )));
    }
    Ok(ratios(&log.weighted_distances(lambda1)))
}

pub(crate) fn ratios(d: &[f64]) -> Vec<f64> {
    d.windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_log_has_constant_ratio() {
        let mut log = IterateLog::new(vec![0.0, 0.5], 0.5);
        for n in 0..4 {
            let d = 0.25f64.powi(n);
            log.push(vec![d, d], d.sqrt());
        }
        let r = picard_contraction_ratio(&log, 3.0).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|v| (v - 0.25).abs() < 1e-14));
    }

    #[test]
    fn too_short_or_single_pass() {
        let mut log = IterateLog::new(vec![0.0], 1.0);
        log.push(vec![1.0], 1.0);
        assert!(matches!(
            picard_contraction_ratio(&log, 1.0),
            Err(Error::InsufficientData(_))
        ));
        log.single_pass = true;
        assert!(picard_contraction_ratio(&log, 1.0).unwrap().is_empty());
    }

    #[test]
    fn lambda_one_formula() {
        assert_eq!(lambda_one(1.0, 2.0), 11.0);
    }
}
