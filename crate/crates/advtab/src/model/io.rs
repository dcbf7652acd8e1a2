//! Text serialization of trained ensembles.
//!
//! Format, one line per item:
//!
//! ```text
//! base_score: <f64>
//! learning_rate: <f64>
//! n_features: <usize>
//! tree
//! <node_id> split <feature> <threshold> <left> <right> <gain>
//! <node_id> leaf <value>
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so save/load is exact.

use std::fs;
use std::path::Path;

use super::{GbdtModel, ModelError, Node, Tree};

pub fn save_model(model: &GbdtModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, to_text(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GbdtModel, ModelError> {
    from_text(&fs::read_to_string(path)?)
}

pub fn to_text(model: &GbdtModel) -> String {
    let mut out = String::new();
    out.push_str(&format!("base_score: {}\n", model.base_score));
    out.push_str(&format!("learning_rate: {}\n", model.learning_rate));
    out.push_str(&format!("n_features: {}\n", model.n_features));
    for tree in &model.trees {
        out.push_str("tree\n");
        for (i, node) in tree.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    gain,
                } => out.push_str(&format!(
                    "{i} split {feature} {threshold} {left} {right} {gain}\n"
                )),
                Node::Leaf { value } => out.push_str(&format!("{i} leaf {value}\n")),
            }
        }
    }
    out
}

pub fn from_text(text: &str) -> Result<GbdtModel, ModelError> {
    let err = |line: usize, msg: &str| ModelError::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut base_score = None;
    let mut learning_rate = None;
    let mut n_features = None;
    let mut trees: Vec<Tree> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "tree" {
            trees.push(Tree { nodes: Vec::new() });
            continue;
        }
        if let Some((key, value)) = line.split_once(':') {
            let value = value.trim();
            match key.trim() {
                "base_score" => {
                    base_score = Some(value.parse().map_err(|_| err(lineno, "bad base_score"))?)
                }
                "learning_rate" => {
                    learning_rate =
                        Some(value.parse().map_err(|_| err(lineno, "bad learning_rate"))?)
                }
                "n_features" => {
                    n_features = Some(value.parse().map_err(|_| err(lineno, "bad n_features"))?)
                }
                other => return Err(err(lineno, &format!("unknown header `{other}`"))),
            }
            continue;
        }
        let tree = trees
            .last_mut()
            .ok_or_else(|| err(lineno, "node line before any `tree` marker"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let node_id: usize = tokens[0].parse().map_err(|_| err(lineno, "bad node id"))?;
        if node_id != tree.nodes.len() {
            return Err(err(lineno, "node ids must be dense and in order"));
        }
        match tokens.get(1) {
            Some(&"split") if tokens.len() == 7 => {
                tree.nodes.push(Node::Split {
                    feature: tokens[2].parse().map_err(|_| err(lineno, "bad feature"))?,
                    threshold: tokens[3].parse().map_err(|_| err(lineno, "bad threshold"))?,
                    left: tokens[4].parse().map_err(|_| err(lineno, "bad left"))?,
                    right: tokens[5].parse().map_err(|_| err(lineno, "bad right"))?,
                    gain: tokens[6].parse().map_err(|_| err(lineno, "bad gain"))?,
                });
            }
            Some(&"leaf") if tokens.len() == 3 => {
                tree.nodes.push(Node::Leaf {
                    value: tokens[2].parse().map_err(|_| err(lineno, "bad leaf value"))?,
                });
            }
            _ => return Err(err(lineno, "expected `<id> split ...` or `<id> leaf ...`")),
        }
    }

    Ok(GbdtModel {
        trees,
        learning_rate: learning_rate.ok_or_else(|| err(0, "missing learning_rate"))?,
        base_score: base_score.ok_or_else(|| err(0, "missing base_score"))?,
        n_features: n_features.ok_or_else(|| err(0, "missing n_features"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EncodedVector;
    use crate::model::{train, TrainParams};

    #[test]
    fn save_load_round_trip_is_exact() {
        let data: Vec<(EncodedVector, u8)> = (0..30)
            .map(|i| {
                let x = i as f64 * 0.37 - 5.0;
                (EncodedVector(vec![x, (i % 3) as f64]), (x > 0.0) as u8)
            })
            .collect();
        let model = train(
            &data,
            &TrainParams {
                rounds: 7,
                max_depth: 2,
                ..TrainParams::default()
            },
        )
        .unwrap();
        let restored = from_text(&to_text(&model)).unwrap();
        assert_eq!(model, restored);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            from_text("base_score: nope\n"),
            Err(ModelError::Parse { .. })
        ));
        assert!(matches!(
            from_text("0 leaf 1.0\n"),
            Err(ModelError::Parse { .. })
        ));
    }
}
