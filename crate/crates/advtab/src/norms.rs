//! Distance measures between original and adversarial vectors.
//!
//! Besides plain L2/L∞ this provides the weighted imperceptibility norm
//!
//! ```text
//! n = || p ⊙ (α·h + β·[(1−h)(1−v) + h·v]) ||_γ
//! ```
//!
//! where `h` flags features a human investigator checks, `v` is normalized
//! feature importance, and the product is componentwise. Perturbing a checked
//! and important feature costs the most; an unchecked, important feature is
//! free. Weights can be zero, so this is a seminorm: perturbations confined
//! to zero-weight features have zero cost by design of the measure.

use serde::{Deserialize, Serialize};

/// Order of the outer norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormOrder {
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    LInf,
}

/// Parameters of the weighted norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormWeights {
    /// Checked flags, one per encoded column.
    pub checked: Vec<bool>,
    /// Feature importance in [0,1], one per encoded column.
    pub importance: Vec<f64>,
    /// Weight on the checked term, in [0,1].
    pub alpha: f64,
    /// Weight on the importance term, in [0,1].
    pub beta: f64,
    pub order: NormOrder,
}

impl NormWeights {
    pub fn new(
        checked: Vec<bool>,
        importance: Vec<f64>,
        alpha: f64,
        beta: f64,
        order: NormOrder,
    ) -> Self {
        assert_eq!(checked.len(), importance.len(), "weight length mismatch");
        debug_assert!((0.0..=1.0).contains(&alpha) && (0.0..=1.0).contains(&beta));
        debug_assert!(importance.iter().all(|&v| (0.0..=1.0).contains(&v)));
        NormWeights {
            checked,
            importance,
            alpha,
            beta,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.checked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checked.is_empty()
    }
}

/// Per-component weight: `α·h + β·[(1−h)(1−v) + h·v]`.
pub fn weight_vector(w: &NormWeights) -> Vec<f64> {
    w.checked
        .iter()
        .zip(&w.importance)
        .map(|(&checked, &v)| {
            let h = if checked { 1.0 } else { 0.0 };
            w.alpha * h + w.beta * ((1.0 - h) * (1.0 - v) + h * v)
        })
        .collect()
}

/// γ-norm of the componentwise product of the perturbation and the weights.
pub fn custom_norm(p: &[f64], w: &NormWeights) -> f64 {
    assert_eq!(p.len(), w.len(), "norm dimension mismatch");
    let weights = weight_vector(w);
    let weighted = p.iter().zip(&weights).map(|(&pi, &wi)| pi * wi);
    match w.order {
        NormOrder::L2 => weighted.map(|x| x * x).sum::<f64>().sqrt(),
        NormOrder::LInf => weighted.map(f64::abs).fold(0.0, f64::max),
    }
}

/// Euclidean norm.
pub fn l2(p: &[f64]) -> f64 {
    p.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

/// Maximum-magnitude norm.
pub fn linf(p: &[f64]) -> f64 {
    p.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(checked: Vec<bool>, importance: Vec<f64>) -> NormWeights {
        NormWeights::new(checked, importance, 0.5, 0.5, NormOrder::L2)
    }

    #[test]
    fn four_quadrant_weights() {
        let w = weights(
            vec![true, false, false, true],
            vec![1.0, 1.0, 0.0, 0.0],
        );
        let wv = weight_vector(&w);
        assert_eq!(wv[0], 1.0); // checked & important: maximal penalty
        assert_eq!(wv[1], 0.0); // unchecked & important: free to perturb
        assert_eq!(wv[2], 0.5); // unchecked & unimportant: beta
        assert_eq!(wv[3], 0.5); // checked & unimportant: alpha
    }

    #[test]
    fn custom_norm_hand_values() {
        let w = weights(vec![true, false], vec![1.0, 1.0]);
        assert_eq!(custom_norm(&[1.0, 1.0], &w), 1.0);
        assert_eq!(custom_norm(&[0.0, 0.0], &w), 0.0);
    }

    #[test]
    fn reduces_to_plain_norm_when_unweighted() {
        let w = NormWeights::new(vec![false; 2], vec![0.0; 2], 0.0, 1.0, NormOrder::L2);
        let p = [3.0, 4.0];
        assert!((custom_norm(&p, &w) - l2(&p)).abs() < 1e-12);
        let w = NormWeights::new(vec![false; 2], vec![0.0; 2], 0.0, 1.0, NormOrder::LInf);
        assert!((custom_norm(&p, &w) - linf(&p)).abs() < 1e-12);
    }

    #[test]
    fn plain_norms() {
        assert_eq!(l2(&[3.0, 4.0]), 5.0);
        assert_eq!(linf(&[3.0, -4.0]), 4.0);
        assert_eq!(l2(&[0.0, 0.0]), 0.0);
        assert_eq!(linf(&[]), 0.0);
    }

    #[test]
    fn zero_cost_exactly_on_zero_weight_support() {
        let w = weights(vec![false, true], vec![1.0, 0.0]);
        // Weight vector is [0, 0.5]: mass on the first coordinate is free.
        assert_eq!(custom_norm(&[7.0, 0.0], &w), 0.0);
        assert!(custom_norm(&[7.0, 0.1], &w) > 0.0);
    }

    #[test]
    fn homogeneity_and_triangle_spot_checks() {
        let w = weights(vec![true, false, true], vec![0.2, 0.9, 0.5]);
        let p = [1.0, -2.0, 0.5];
        let q = [0.3, 0.4, -1.5];
        let c = -3.7;
        let scaled: Vec<f64> = p.iter().map(|x| c * x).collect();
        assert!((custom_norm(&scaled, &w) - c.abs() * custom_norm(&p, &w)).abs() < 1e-12);
        let sum: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + b).collect();
        assert!(custom_norm(&sum, &w) <= custom_norm(&p, &w) + custom_norm(&q, &w) + 1e-12);
    }
}
