//! Decision-based attack with boundary-normal estimation.
//!
//! Each iteration binary-searches along the segment between the current
//! adversarial and the target down to the decision boundary, estimates the
//! boundary-normal direction from the oracle's answers on random probes
//! around the boundary point, then takes a geometrically shrinking step
//! along that direction. All probe and step candidates are sanitized before
//! the oracle sees them. The closest oracle-approved candidate seen anywhere
//! is kept as the result.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::ingest::EncodedVector;

use super::{
    active_coordinates, gauss, init_adversarial, report_p1, restore_features, similar_enough,
    AttackConfig, AttackContext, AttackError, AttackResult, BudgetExhausted, Oracle, Sanitizer,
};

struct JumpState<'a> {
    ctx: &'a AttackContext<'a>,
    cfg: &'a AttackConfig,
    oracle: Oracle<'a>,
    sanitizer: Sanitizer<'a>,
    target_scaled: Vec<f64>,
    /// Best oracle-approved candidate so far.
    best: EncodedVector,
    best_scaled: Vec<f64>,
    best_dist: f64,
    confirmed: bool,
    iterations: u64,
}

impl JumpState<'_> {
    fn distance_of(&self, scaled: &[f64]) -> f64 {
        let p: Vec<f64> = scaled
            .iter()
            .zip(&self.target_scaled)
            .map(|(a, b)| a - b)
            .collect();
        self.cfg.norm.eval(&p)
    }

    /// Sanitize, query, and fold oracle-approved candidates into the best.
    fn probe(
        &mut self,
        scaled: &[f64],
    ) -> Result<(EncodedVector, Vec<f64>, f64, u8), BudgetExhausted> {
        let raw = self.ctx.scaler.unscale(scaled);
        let candidate = self.sanitizer.apply(&raw);
        let decision = self.oracle.decide(&candidate)?;
        let scaled_back = self.ctx.scaler.scale(candidate.as_slice());
        let d = self.distance_of(&scaled_back);
        if decision == 0 {
            self.confirmed = true;
            if d < self.best_dist {
                self.best = candidate.clone();
                self.best_scaled = scaled_back.clone();
                self.best_dist = d;
            }
        }
        Ok((candidate, scaled_back, d, decision))
    }

    /// Binary search along [from → target] for the last acceptable point.
    /// Returns that point in scaled space.
    fn bisect(&mut self, from: &[f64]) -> Result<Vec<f64>, BudgetExhausted> {
        let seg: Vec<f64> = self
            .target_scaled
            .iter()
            .zip(from)
            .map(|(t, f)| t - f)
            .collect();
        let seg_len = self.cfg.norm.eval(&seg);
        if seg_len <= self.cfg.walk.bs_tol {
            return Ok(from.to_vec());
        }
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        let mut best_point = from.to_vec();
        while (hi - lo) * seg_len > self.cfg.walk.bs_tol {
            let mid = 0.5 * (lo + hi);
            let cand: Vec<f64> = from.iter().zip(&seg).map(|(f, s)| f + mid * s).collect();
            let (_, scaled_back, _, decision) = self.probe(&cand)?;
            if decision == 0 {
                lo = mid;
                best_point = scaled_back;
            } else {
                hi = mid;
            }
        }
        Ok(best_point)
    }
}

fn jump(state: &mut JumpState, rng: &mut ChaCha12Rng, active: &[usize]) -> Result<(), BudgetExhausted> {
    let cfg = state.cfg;
    let m = state.target_scaled.len();
    let prop_scale = cfg.norm.proposal_scale(m);
    let mut current = state.best_scaled.clone();
    let mut stall = 0u32;
    let mut last_best = state.best_dist;

    for iter in 1..=cfg.max_iters {
        state.iterations = iter;
        if iter == 1 {
            let (_, scaled_back, _, decision) = state.probe(&current.clone())?;
            if decision == 0 {
                current = scaled_back;
            }
        }
        if state.confirmed && similar_enough(state.best_dist, cfg.rho) {
            break;
        }
        if state.best_dist < 1e-12 {
            break;
        }

        // Walk to the boundary along the segment toward the target.
        let boundary = state.bisect(&current)?;
        let dist = state.distance_of(&boundary);

        // Estimate the boundary normal from decision probes.
        let batch = ((cfg.walk.est_batch as f64) * (iter as f64).sqrt()).round() as usize;
        let batch = batch.clamp(cfg.walk.est_batch, 2000);
        let radius = (cfg.walk.bs_tol * dist).max(1e-4);
        let mut grad = vec![0.0; m];
        let mut phis: Vec<(f64, Vec<f64>)> = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut u = vec![0.0; m];
            for &i in active {
                u[i] = gauss(rng) * prop_scale[i];
            }
            let norm2: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm2 < 1e-12 {
                continue;
            }
            for v in &mut u {
                *v /= norm2;
            }
            let cand: Vec<f64> = boundary.iter().zip(&u).map(|(b, ui)| b + radius * ui).collect();
            let (_, _, _, decision) = state.probe(&cand)?;
            let phi = if decision == 0 { 1.0 } else { -1.0 };
            phis.push((phi, u));
        }
        if phis.is_empty() {
            break;
        }
        let mean_phi: f64 = phis.iter().map(|(p, _)| p).sum::<f64>() / phis.len() as f64;
        for (phi, u) in &phis {
            for i in 0..m {
                grad[i] += (phi - mean_phi) * u[i];
            }
        }
        let grad_norm: f64 = grad.iter().map(|x| x * x).sum::<f64>().sqrt();

        current = if grad_norm > 1e-12 {
            for g in &mut grad {
                *g /= grad_norm;
            }
            // Geometric step search along the estimated normal.
            let mut step = dist / (iter as f64).sqrt();
            let mut accepted = None;
            while step > 1e-7 {
                let cand: Vec<f64> =
                    boundary.iter().zip(&grad).map(|(b, g)| b + step * g).collect();
                let (_, scaled_back, _, decision) = state.probe(&cand)?;
                if decision == 0 {
                    accepted = Some(scaled_back);
                    break;
                }
                step *= 0.5;
            }
            accepted.unwrap_or(boundary)
        } else {
            boundary
        };

        if last_best - state.best_dist < 1e-6 {
            stall += 1;
            if stall >= 3 {
                break;
            }
        } else {
            stall = 0;
        }
        last_best = state.best_dist;
    }
    Ok(())
}

/// Attacks a detected fraud with HopSkipJump.
pub fn hopskipjump_attack<'a>(
    ctx: &'a AttackContext<'a>,
    target: &'a EncodedVector,
    cfg: &'a AttackConfig,
) -> Result<AttackResult, AttackError> {
    let mut oracle = Oracle::new(ctx.clf, cfg);
    let initial = oracle
        .decide(target)
        .expect("query budget admits the precondition check");
    if initial != 1 {
        return Err(AttackError::NotDetectedAsFraud);
    }
    let init = init_adversarial(ctx, target, cfg, &mut oracle)?;
    let target_scaled = ctx.scaler.scale(target.as_slice());
    let init_scaled = ctx.scaler.scale(init.as_slice());

    let mut state = JumpState {
        ctx,
        cfg,
        oracle,
        sanitizer: Sanitizer::new(ctx.schema, target, cfg),
        best_dist: {
            let p: Vec<f64> = init_scaled
                .iter()
                .zip(&target_scaled)
                .map(|(a, b)| a - b)
                .collect();
            cfg.norm.eval(&p)
        },
        target_scaled,
        best: init,
        best_scaled: init_scaled,
        confirmed: false,
        iterations: 0,
    };

    if cfg.max_iters > 0 {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let active = active_coordinates(ctx.schema, cfg);
        if !active.is_empty() {
            let _ = jump(&mut state, &mut rng, &active);
        }
    }
    if state.confirmed {
        let (restored, d) = restore_features(ctx, target, cfg, &mut state.oracle, state.best);
        state.best = restored;
        state.best_dist = d;
    }

    Ok(AttackResult {
        final_p1: report_p1(ctx.clf, &state.best),
        success: state.confirmed,
        queries_used: state.oracle.queries_used(),
        iterations: state.iterations,
        distance: state.best_dist,
        adversarial: state.best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackKind;
    use crate::model::{GbdtModel, Node, ThresholdedClassifier, Tree};
    use crate::schema::{FeatureSpec, FeatureType, Schema};

    fn stump_clf(tau: f64) -> ThresholdedClassifier {
        ThresholdedClassifier::new(
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
                        Node::Leaf { value: -2.0 },
                        Node::Leaf { value: 2.0 },
                    ],
                }],
                learning_rate: 1.0,
                base_score: 0.0,
                n_features: 2,
            },
            tau,
        )
    }

    fn float_schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("f0", FeatureType::Float, true, false),
                FeatureSpec::numeric("f1", FeatureType::Float, true, false),
            ],
            "y",
        )
        .unwrap()
    }

    fn pool() -> Vec<EncodedVector> {
        vec![
            EncodedVector(vec![0.0, 0.0]),
            EncodedVector(vec![4.0, 1.0]),
            EncodedVector(vec![0.5, 0.3]),
        ]
    }

    #[test]
    fn converges_to_the_stump_boundary() {
        let clf = stump_clf(0.5);
        let schema = float_schema();
        let p = pool();
        let ctx = AttackContext::new(&clf, &schema, &p);
        let mut cfg = AttackConfig::new(AttackKind::HopSkipJump, 0.5);
        cfg.use_realistic = false;
        cfg.use_editability = false;
        cfg.seed = 23;
        let target = EncodedVector(vec![2.0, 0.0]);
        let result = hopskipjump_attack(&ctx, &target, &cfg).unwrap();
        assert!(result.success);
        assert_eq!(clf.classify(&result.adversarial).unwrap(), 0);
        let moved = (result.adversarial[0] - 2.0).abs();
        assert!(moved >= 1.0 && moved <= 1.05, "perturbation {moved}");
        assert!(result.queries_used <= cfg.max_queries);
    }

    #[test]
    fn immediate_success_when_init_is_within_rho() {
        let clf = stump_clf(0.5);
        let schema = float_schema();
        let p = vec![EncodedVector(vec![0.99, 0.0]), EncodedVector(vec![4.0, 1.0])];
        let ctx = AttackContext::new(&clf, &schema, &p);
        let mut cfg = AttackConfig::new(AttackKind::HopSkipJump, 0.5);
        cfg.use_realistic = false;
        cfg.use_editability = false;
        cfg.rho = -0.5;
        let target = EncodedVector(vec![1.05, 0.0]);
        let result = hopskipjump_attack(&ctx, &target, &cfg).unwrap();
        assert!(result.success);
        assert!(result.iterations <= 2);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let clf = stump_clf(0.5);
        let schema = float_schema();
        let p = pool();
        let ctx = AttackContext::new(&clf, &schema, &p);
        let mut cfg = AttackConfig::new(AttackKind::HopSkipJump, 0.5);
        cfg.use_realistic = false;
        cfg.use_editability = false;
        cfg.seed = 31;
        let target = EncodedVector(vec![2.0, 0.0]);
        let a = hopskipjump_attack(&ctx, &target, &cfg).unwrap();
        let b = hopskipjump_attack(&ctx, &target, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
