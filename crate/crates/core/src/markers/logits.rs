//! Softmax confidence, entropy and energy of classifier logits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitMarkers {
    pub confidence: f64,
    pub entropy: f64,
    pub energy: f64,
}

/// Per-sample scores for one logit row; `temperature` only enters the energy.
pub fn sample_scores(logits: &[f64], temperature: f64) -> LogitMarkers {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut confidence = 0.0f64;
    let mut entropy = 0.0;
    for &e in &exps {
        let p = e / z;
        confidence = confidence.max(p);
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    let scaled_max = max / temperature;
    let z_t: f64 = logits
        .iter()
        .map(|&l| (l / temperature - scaled_max).exp())
        .sum();
    let energy = -temperature * (scaled_max + z_t.ln());
    LogitMarkers {
        confidence,
        entropy,
        energy,
    }
}

/// Mean max-softmax probability, mean entropy (nats) and mean energy
/// `−T log Σ exp(l / T)` over samples.
pub fn logit_markers(logits: &DMatrix<f64>, temperature: f64) -> Result<LogitMarkers> {
    let (m, k) = logits.shape();
    if m == 0 || k == 0 {
        return Err(Error::InvalidArgument("empty logit matrix".into()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let mut sum = LogitMarkers {
        confidence: 0.0,
        entropy: 0.0,
        energy: 0.0,
    };
    for row in logits.row_iter() {
        let row: Vec<f64> = row.iter().copied().collect();
        let s = sample_scores(&row, temperature);
        sum.confidence += s.confidence;
        sum.entropy += s.entropy;
        sum.energy += s.energy;
    }
    let m = m as f64;
    Ok(LogitMarkers {
        confidence: sum.confidence / m,
        entropy: sum.entropy / m,
        energy: sum.energy / m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let s = logit_markers(&DMatrix::zeros(3, 10), 1.0).unwrap();
        assert!((s.confidence - 0.1).abs() < 1e-12);
        assert!((s.entropy - 10f64.ln()).abs() < 1e-12);
        assert!((s.energy + 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logit() {
        let mut l = vec![0.0; 5];
        l[2] = 1000.0;
        let s = sample_scores(&l, 1.0);
        assert!((s.confidence - 1.0).abs() < 1e-12);
        assert!(s.entropy.abs() < 1e-12);
        assert!((s.energy + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn shift_identities() {
        let l = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = l.iter().map(|v| v + 7.5).collect();
        let a = sample_scores(&l, 1.0);
        let b = sample_scores(&shifted, 1.0);
        assert!((a.confidence - b.confidence).abs() < 1e-12);
        assert!((a.entropy - b.entropy).abs() < 1e-12);
        assert!((b.energy - (a.energy - 7.5)).abs() < 1e-12);
    }

    #[test]
    fn temperature_scales_energy() {
        let l = [1.0, 2.0];
        let e = sample_scores(&l, 2.0).energy;
        let expect = -2.0 * ((0.5f64).exp() + 1f64.exp()).ln();
        assert!((e - expect).abs() < 1e-12);
    }
}
