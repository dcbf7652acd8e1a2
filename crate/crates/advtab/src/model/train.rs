//! Exact greedy GBDT training with second-order logistic loss.
//!
//! Each round fits one regression tree to the current gradients/hessians,
//! choosing at every node the split maximizing
//!
//! ```text
//! gain = 1/2 · [ GL²/(HL+λ) + GR²/(HR+λ) − G²/(H+λ) ]
//! ```
//!
//! with λ = 1 L2 leaf regularization. Candidate thresholds are midpoints of
//! consecutive distinct feature values; ties break to the lowest feature
//! index, then the lowest threshold, so training is fully deterministic.

use crate::ingest::EncodedVector;

use super::{logistic, GbdtModel, ModelError, Node, Tree};

const LAMBDA: f64 = 1.0;
const MIN_GAIN: f64 = 1e-12;

/// Boosting hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            seed: 42,
        }
    }
}

impl TrainParams {
    fn validate(&self) -> Result<(), ModelError> {
        if self.learning_rate <= 0.0 {
            return Err(ModelError::BadParams("learning_rate must be positive".into()));
        }
        if self.min_child_weight < 0.0 {
            return Err(ModelError::BadParams("min_child_weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Trains an ensemble; deterministic for fixed data and params.
pub fn train(data: &[(EncodedVector, u8)], params: &TrainParams) -> Result<GbdtModel, ModelError> {
    params.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let n = data.len();
    let m = data[0].0.len();
    for (x, _) in data {
        if x.len() != m {
            return Err(ModelError::DimensionMismatch {
                got: x.len(),
                expected: m,
            });
        }
    }
    let positives = data.iter().filter(|(_, y)| *y == 1).count();
    if positives == 0 || positives == n {
        return Err(ModelError::SingleClass);
    }

    let prior = positives as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();

    // Presort sample indices per feature once; node splits reuse the order.
    let sorted: Vec<Vec<usize>> = (0..m)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                data[a].0[f]
                    .partial_cmp(&data[b].0[f])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut margins = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..params.rounds {
        for i in 0..n {
            let p = logistic(margins[i]);
            grad[i] = p - data[i].1 as f64;
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let mut builder = TreeBuilder {
            data,
            sorted: &sorted,
            grad: &grad,
            hess: &hess,
            params,
            nodes: Vec::new(),
        };
        let mut in_node = vec![true; n];
        builder.grow(&mut in_node, 0);
        let tree = Tree {
            nodes: builder.nodes,
        };
        for i in 0..n {
            margins[i] += params.learning_rate * tree.predict(data[i].0.as_slice());
        }
        trees.push(tree);
    }

    Ok(GbdtModel {
        trees,
        learning_rate: params.learning_rate,
        base_score,
        n_features: m,
    })
}

struct TreeBuilder<'a> {
    data: &'a [(EncodedVector, u8)],
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a TrainParams,
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    /// Grows the subtree for the samples flagged in `in_node`; returns the
    /// node index.
    fn grow(&mut self, in_node: &mut [bool], depth: usize) -> usize {
        let g_sum: f64 = (0..in_node.len()).filter(|&i| in_node[i]).map(|i| self.grad[i]).sum();
        let h_sum: f64 = (0..in_node.len()).filter(|&i| in_node[i]).map(|i| self.hess[i]).sum();

        let leaf = |nodes: &mut Vec<Node>| {
            let idx = nodes.len();
            nodes.push(Node::Leaf {
                value: -g_sum / (h_sum + LAMBDA),
            });
            idx
        };

        if depth >= self.params.max_depth {
            return leaf(&mut self.nodes);
        }
        let Some(choice) = self.best_split(in_node, g_sum, h_sum) else {
            return leaf(&mut self.nodes);
        };

        let idx = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left: 0,
            right: 0,
            gain: choice.gain,
        });

        let member: Vec<usize> = (0..in_node.len()).filter(|&i| in_node[i]).collect();
        let go_left: Vec<bool> = member
            .iter()
            .map(|&i| self.data[i].0[choice.feature] < choice.threshold)
            .collect();

        for (&i, &l) in member.iter().zip(&go_left) {
            in_node[i] = l;
        }
        let left = self.grow(in_node, depth + 1);
        for (&i, &l) in member.iter().zip(&go_left) {
            in_node[i] = !l;
        }
        let right = self.grow(in_node, depth + 1);
        for &i in &member {
            in_node[i] = true;
        }

        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[idx]
        {
            *l = left;
            *r = right;
        }
        idx
    }

    fn best_split(&self, in_node: &[bool], g_sum: f64, h_sum: f64) -> Option<SplitChoice> {
        let parent_term = g_sum * g_sum / (h_sum + LAMBDA);
        let mcw = self.params.min_child_weight;
        let mut best: Option<SplitChoice> = None;

        for f in 0..self.sorted.len() {
            let mut gl = 0.0;
            let mut hl = 0.0;
            let mut prev_value: Option<f64> = None;
            for &i in &self.sorted[f] {
                if !in_node[i] {
                    continue;
                }
                let v = self.data[i].0[f];
                if let Some(pv) = prev_value {
                    if v > pv && hl >= mcw && (h_sum - hl) >= mcw {
                        let gr = g_sum - gl;
                        let hr = h_sum - hl;
                        let gain = 0.5
                            * (gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - parent_term);
                        if gain > MIN_GAIN
                            && best.as_ref().map_or(true, |b| gain > b.gain)
                        {
                            best = Some(SplitChoice {
                                feature: f,
                                threshold: 0.5 * (pv + v),
                                gain,
                            });
                        }
                    }
                }
                gl += self.grad[i];
                hl += self.hess[i];
                prev_value = Some(v);
            }
        }
        best
    }
}
