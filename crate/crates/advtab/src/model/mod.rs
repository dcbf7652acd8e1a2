//! Native gradient-boosted decision trees and the thresholded decision
//! oracle the attacks query.
//!
//! The ensemble is a list of regression trees over raw (log-odds) scores:
//! `s(x) = base_score + learning_rate · Σ tree_k(x)`, `p1 = logistic(s)`.
//! Splits are axis-aligned `x[feature] < threshold` with the left branch
//! taken on true.

mod io;
mod train;

pub use io::{load_model, save_model};
pub use train::{train, TrainParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EncodedVector;

/// One tree node; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Loss reduction recorded at training time; feeds importance.
        gain: f64,
    },
    Leaf {
        value: f64,
    },
}

/// A single regression tree with axis-aligned splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Walks the tree: `x[feature] < threshold` goes left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] < *threshold { *left } else { *right };
                }
                Node::Leaf { value } => return *value,
            }
        }
    }
}

/// Gradient-boosted tree ensemble for binary classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    /// Prior in log-odds.
    pub base_score: f64,
    pub n_features: usize,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("vector has {got} components, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("training data is empty")]
    EmptyData,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("bad training parameter: {0}")]
    BadParams(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub(crate) fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl GbdtModel {
    /// Raw log-odds score.
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base_score + self.learning_rate * sum
    }

    /// Class probabilities `(p0, p1)` with `p0 + p1 = 1`.
    pub fn predict_proba(&self, x: &EncodedVector) -> Result<(f64, f64), ModelError> {
        if x.len() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                got: x.len(),
                expected: self.n_features,
            });
        }
        let p1 = logistic(self.raw_score(x.as_slice()));
        Ok((1.0 - p1, p1))
    }

    /// Per-feature total split gain, max-normalized into [0,1].
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut gains = vec![0.0; self.n_features];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    gains[*feature] += gain.max(0.0);
                }
            }
        }
        let max = gains.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            for g in &mut gains {
                *g /= max;
            }
        }
        gains
    }
}

/// Scoring model plus decision threshold: the attack oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedClassifier {
    pub model: GbdtModel,
    pub tau: f64,
}

impl ThresholdedClassifier {
    pub fn new(model: GbdtModel, tau: f64) -> Self {
        ThresholdedClassifier { model, tau }
    }

    /// 1 (fraud) iff `p1 > tau`, strictly.
    pub fn classify(&self, x: &EncodedVector) -> Result<u8, ModelError> {
        let (_, p1) = self.model.predict_proba(x)?;
        Ok(if p1 > self.tau { 1 } else { 0 })
    }
}

/// F-beta score; beta > 1 weights recall over precision.
pub fn fbeta(precision: f64, recall: f64, beta: f64) -> f64 {
    debug_assert!(beta > 0.0);
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        return 0.0;
    }
    (1.0 + b2) * precision * recall / denom
}

/// Confusion counts of `p1 > tau` against labels.
fn confusion(scores: &[(f64, u8)], tau: f64) -> (usize, usize, usize) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fnc = 0;
    for &(p1, y) in scores {
        let pred = (p1 > tau) as u8;
        match (pred, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fnc += 1,
            _ => {}
        }
    }
    (tp, fp, fnc)
}

fn fbeta_at(scores: &[(f64, u8)], tau: f64, beta: f64) -> f64 {
    let (tp, fp, fnc) = confusion(scores, tau);
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fnc > 0 {
        tp as f64 / (tp + fnc) as f64
    } else {
        0.0
    };
    fbeta(precision, recall, beta)
}

/// Picks the threshold maximizing F-beta on the validation data.
///
/// Candidates are the midpoints of consecutive distinct predicted scores plus
/// {0, 1}; ties break toward the larger threshold.
pub fn tune_threshold(
    model: &GbdtModel,
    validation: &[(EncodedVector, u8)],
    beta: f64,
) -> Result<f64, ModelError> {
    if validation.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let has = |class: u8| validation.iter().any(|(_, y)| *y == class);
    if !has(0) || !has(1) {
        return Err(ModelError::SingleClass);
    }
    let scores: Vec<(f64, u8)> = validation
        .iter()
        .map(|(x, y)| Ok((model.predict_proba(x)?.1, *y)))
        .collect::<Result<_, ModelError>>()?;

    let mut distinct: Vec<f64> = scores.iter().map(|&(p, _)| p).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut candidates = vec![0.0, 1.0];
    candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut best_tau = candidates[0];
    let mut best_score = f64::NEG_INFINITY;
    for &tau in &candidates {
        let s = fbeta_at(&scores, tau, beta);
        if s >= best_score {
            best_score = s;
            best_tau = tau;
        }
    }
    Ok(best_tau)
}

/// Recall of `p1 > tau` over the given labeled data.
pub fn recall_at(
    model: &GbdtModel,
    data: &[(EncodedVector, u8)],
    tau: f64,
) -> Result<f64, ModelError> {
    let scores: Vec<(f64, u8)> = data
        .iter()
        .map(|(x, y)| Ok((model.predict_proba(x)?.1, *y)))
        .collect::<Result<_, ModelError>>()?;
    let (tp, _, fnc) = confusion(&scores, tau);
    Ok(if tp + fnc > 0 {
        tp as f64 / (tp + fnc) as f64
    } else {
        0.0
    })
}

/// Accuracy of `p1 > tau` over the given labeled data.
pub fn accuracy_at(
    model: &GbdtModel,
    data: &[(EncodedVector, u8)],
    tau: f64,
) -> Result<f64, ModelError> {
    let mut hits = 0usize;
    for (x, y) in data {
        let (_, p1) = model.predict_proba(x)?;
        if ((p1 > tau) as u8) == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs(xs: &[&[f64]]) -> Vec<EncodedVector> {
        xs.iter().map(|x| EncodedVector(x.to_vec())).collect()
    }

    /// Single depth-1 stump: x0 < 1.0 → -1.0 else +1.0.
    fn stump() -> GbdtModel {
        GbdtModel {
            trees: vec![Tree {
                nodes: vec![
                    Node::Split {
                        feature: 0,
                        threshold: 1.0,
                        left: 1,
                        right: 2,
                        gain: 1.0,
                    },
                    Node::Leaf { value: -1.0 },
                    Node::Leaf { value: 1.0 },
                ],
            }],
            learning_rate: 1.0,
            base_score: 0.0,
            n_features: 2,
        }
    }

    #[test]
    fn empty_ensemble_is_the_prior() {
        let m = GbdtModel {
            trees: vec![],
            learning_rate: 0.1,
            base_score: 0.0,
            n_features: 3,
        };
        let (p0, p1) = m.predict_proba(&EncodedVector(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!((p0, p1), (0.5, 0.5));
    }

    #[test]
    fn stump_probabilities_match_manual_traversal() {
        let m = stump();
        let (_, p1) = m.predict_proba(&EncodedVector(vec![0.0, 9.0])).unwrap();
        assert!((p1 - 0.2689).abs() < 1e-4, "got {p1}");
        let (p0, p1) = m.predict_proba(&EncodedVector(vec![2.0, 9.0])).unwrap();
        assert!((p1 - 0.7311).abs() < 1e-4, "got {p1}");
        assert!((p0 + p1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = stump();
        assert!(matches!(
            m.predict_proba(&EncodedVector(vec![1.0])),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    /// Zero-tree model whose p1 equals the given constant.
    fn constant_model(p1: f64) -> GbdtModel {
        GbdtModel {
            trees: vec![],
            learning_rate: 1.0,
            base_score: (p1 / (1.0 - p1)).ln(),
            n_features: 1,
        }
    }

    #[test]
    fn classification_is_strict_at_tau() {
        let x = EncodedVector(vec![0.0]);
        let clf = ThresholdedClassifier::new(constant_model(0.275), 0.192);
        assert_eq!(clf.classify(&x).unwrap(), 1);
        let clf = ThresholdedClassifier::new(constant_model(0.127), 0.192);
        assert_eq!(clf.classify(&x).unwrap(), 0);
        // p1 == tau exactly: strict inequality says accepted.
        let clf = ThresholdedClassifier::new(constant_model(0.5), 0.5);
        assert_eq!(clf.classify(&x).unwrap(), 0);
    }

    #[test]
    fn classify_is_monotone_in_tau() {
        let m = stump();
        let x = EncodedVector(vec![2.0, 0.0]);
        let mut prev = 1u8;
        for i in 0..=20 {
            let tau = i as f64 / 20.0;
            let c = ThresholdedClassifier::new(m.clone(), tau).classify(&x).unwrap();
            assert!(c <= prev, "raising tau flipped 0 -> 1 at {tau}");
            prev = c;
        }
    }

    #[test]
    fn fbeta_values() {
        assert!((fbeta(0.426, 0.952, 2.0) - 0.7634).abs() < 1e-4);
        assert_eq!(fbeta(1.0, 1.0, 2.0), 1.0);
        assert_eq!(fbeta(0.0, 0.0, 2.0), 0.0);
    }

    #[test]
    fn separable_scores_tune_to_midpoint() {
        let m = stump();
        // Scores logistic(-1) ~ 0.269 and logistic(1) ~ 0.731 with matching
        // labels: any threshold between them is perfect; midpoint returned.
        let data: Vec<(EncodedVector, u8)> = vecs(&[&[0.0, 0.0], &[2.0, 0.0]])
            .into_iter()
            .zip([0u8, 1u8])
            .collect();
        let tau = tune_threshold(&m, &data, 2.0).unwrap();
        assert!((tau - 0.5).abs() < 1e-12, "got {tau}");
    }

    #[test]
    fn tuned_threshold_maximizes_fbeta_over_candidates() {
        let m = stump();
        let data: Vec<(EncodedVector, u8)> = vecs(&[
            &[0.0, 0.0],
            &[0.5, 0.0],
            &[2.0, 0.0],
            &[0.9, 0.0],
            &[3.0, 0.0],
        ])
        .into_iter()
        .zip([0u8, 1u8, 1u8, 0u8, 1u8])
        .collect();
        let tau = tune_threshold(&m, &data, 2.0).unwrap();
        // Exhaustive scan over a fine grid cannot beat the tuned value.
        let scores: Vec<(f64, u8)> = data
            .iter()
            .map(|(x, y)| (m.predict_proba(x).unwrap().1, *y))
            .collect();
        let tuned = fbeta_at(&scores, tau, 2.0);
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            assert!(fbeta_at(&scores, t, 2.0) <= tuned + 1e-12);
        }
        // All negatives score below every positive here, so recall is 1.
        let r = recall_at(&m, &data, tau).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn single_class_validation_rejected() {
        let m = stump();
        let data: Vec<(EncodedVector, u8)> =
            vecs(&[&[0.0, 0.0]]).into_iter().zip([0u8]).collect();
        assert!(matches!(
            tune_threshold(&m, &data, 2.0),
            Err(ModelError::SingleClass)
        ));
    }

    #[test]
    fn importance_normalizes_by_max_gain() {
        let m = GbdtModel {
            trees: vec![Tree {
                nodes: vec![
                    Node::Split {
                        feature: 0,
                        threshold: 0.5,
                        left: 1,
                        right: 2,
                        gain: 10.0,
                    },
                    Node::Leaf { value: 0.0 },
                    Node::Split {
                        feature: 1,
                        threshold: 0.5,
                        left: 3,
                        right: 4,
                        gain: 5.0,
                    },
                    Node::Leaf { value: 0.0 },
                    Node::Leaf { value: 0.0 },
                ],
            }],
            learning_rate: 0.1,
            base_score: 0.0,
            n_features: 3,
        };
        assert_eq!(m.feature_importance(), vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn importance_of_single_feature_model_is_a_basis_vector() {
        let mut m = stump();
        m.n_features = 4;
        let mut v = m.feature_importance();
        assert_eq!(v.remove(0), 1.0);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn importance_of_empty_ensemble_is_zero() {
        let m = GbdtModel {
            trees: vec![],
            learning_rate: 0.1,
            base_score: 0.0,
            n_features: 3,
        };
        assert_eq!(m.feature_importance(), vec![0.0; 3]);
    }
}
