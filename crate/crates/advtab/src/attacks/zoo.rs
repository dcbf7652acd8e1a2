//! Zeroth-order stochastic coordinate descent.
//!
//! Minimizes `distance(t̃, t_f)² + r · f(t̃)` over candidates, where `f` is the
//! threshold-aware hinge `max(p1 − τ, −ν)` (or the stock log-odds loss when
//! the threshold toggle is off, which is exactly the formulation that goes
//! blind on imbalanced models). Partial derivatives are estimated per
//! coordinate by symmetric finite differences; selected coordinates update
//! with per-coordinate Adam.
//!
//! The victim ensemble is piecewise constant, so probes are wide: a numeric
//! probe spans half the observed feature range and a discrete probe at ±2 in
//! scaled space is guaranteed to flip a boolean, or to win a one-hot group's
//! argmax, once the candidate goes through projection. Every evaluation —
//! probes included — is a sanitized candidate scored by the oracle, and the
//! closest one the oracle accepts is tracked as the running best adversarial.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::ingest::EncodedVector;

use super::{
    active_coordinates, report_p1, restore_features, similar_enough, AttackConfig, AttackContext,
    AttackError, AttackResult, BudgetExhausted, Oracle, Sanitizer,
};

/// Threshold-aware loss: `max(p1 − τ, −ν)`. At ν = 0 it is at its minimum
/// exactly when `p1 ≤ τ`, i.e. only for true adversarial examples.
pub fn zoo_loss(p1: f64, tau: f64, nu: f64) -> f64 {
    (p1 - tau).max(-nu)
}

/// Stock log-odds loss: `max(log p1 − log p0, −ν)` with `p0 = 1 − p1`.
/// At ν = 0 it bottoms out as soon as `p1 ≤ 0.5`, regardless of τ.
pub fn zoo_loss_original(p1: f64, nu: f64) -> f64 {
    let p1c = p1.max(f64::EPSILON);
    let p0c = (1.0 - p1).max(f64::EPSILON);
    (p1c.ln() - p0c.ln()).max(-nu)
}

struct BestCandidate {
    vector: EncodedVector,
    distance: f64,
}

struct ZooState<'a> {
    ctx: &'a AttackContext<'a>,
    cfg: &'a AttackConfig,
    oracle: Oracle<'a>,
    sanitizer: Sanitizer<'a>,
    target_scaled: Vec<f64>,
    best: Option<BestCandidate>,
    iterations: u64,
}

impl ZooState<'_> {
    /// Scores one scaled candidate and returns the objective value.
    fn evaluate(&mut self, x: &[f64]) -> Result<f64, BudgetExhausted> {
        let raw = self.ctx.scaler.unscale(x);
        let candidate = self.sanitizer.apply(&raw);
        let p1 = self.oracle.score(&candidate)?;
        let scaled = self.ctx.scaler.scale(candidate.as_slice());
        let p: Vec<f64> = scaled
            .iter()
            .zip(&self.target_scaled)
            .map(|(a, b)| a - b)
            .collect();
        let d = self.cfg.norm.eval(&p);
        let loss = if self.cfg.use_threshold {
            zoo_loss(p1, self.cfg.tau, self.cfg.nu)
        } else {
            zoo_loss_original(p1, self.cfg.nu)
        };
        if self.oracle.decision_from_score(p1) == 0
            && self.best.as_ref().map_or(true, |b| d < b.distance)
        {
            self.best = Some(BestCandidate {
                vector: candidate,
                distance: d,
            });
        }
        Ok(d * d + self.cfg.r * loss)
    }
}

/// Per-coordinate Adam, with an update count per coordinate so bias
/// correction matches how often each coordinate was actually touched.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: Vec<i32>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: vec![0; n],
        }
    }

    fn step(&mut self, i: usize, grad: f64, x: &mut [f64], cfg: &AttackConfig) {
        let (b1, b2) = (cfg.zoo.adam_beta1, cfg.zoo.adam_beta2);
        self.t[i] += 1;
        self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad;
        self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad * grad;
        let m_hat = self.m[i] / (1.0 - b1.powi(self.t[i]));
        let v_hat = self.v[i] / (1.0 - b2.powi(self.t[i]));
        x[i] -= cfg.zoo.adam_step * m_hat / (v_hat.sqrt() + 1e-8);
    }
}

/// Runs the descent; returns early (Ok) on convergence, Err on budget.
fn descend(
    state: &mut ZooState,
    x: &mut Vec<f64>,
    active: &[usize],
    probe: &[f64],
    rng: &mut ChaCha12Rng,
) -> Result<(), BudgetExhausted> {
    let cfg = state.cfg;
    let mut adam = Adam::new(x.len());
    let mut best_obj = state.evaluate(x)?;
    let mut history: Vec<f64> = Vec::new();
    let mut motion: Vec<f64> = Vec::new();
    let batch_size = cfg.zoo.batch_size.min(active.len());

    for iter in 1..=cfg.max_iters {
        state.iterations = iter;
        let picks = rand::seq::index::sample(rng, active.len(), batch_size);
        let mut grads = Vec::with_capacity(batch_size);
        for k in picks.iter() {
            let i = active[k];
            let delta = probe[i];
            let mut xp = x.clone();
            xp[i] += delta;
            let f_plus = state.evaluate(&xp)?;
            xp[i] = x[i] - delta;
            let f_minus = state.evaluate(&xp)?;
            grads.push((i, (f_plus - f_minus) / (2.0 * delta)));
        }
        let mut moved = 0.0f64;
        for (i, g) in grads {
            let before = x[i];
            adam.step(i, g, x, cfg);
            moved = moved.max((x[i] - before).abs());
        }
        let obj = state.evaluate(x)?;
        best_obj = best_obj.min(obj);
        history.push(best_obj);
        motion.push(moved);

        // The objective legitimately worsens while the descent pays distance
        // to approach the boundary, so a plateau alone is not convergence:
        // the state must also have stopped traveling. Without any success
        // yet, a much longer window guards against dead gradient signal.
        let w = if state.best.is_some() {
            cfg.zoo.convergence_window as usize
        } else {
            10 * cfg.zoo.convergence_window as usize
        };
        if history.len() > w {
            let flat = history[history.len() - 1 - w] - best_obj < cfg.zoo.convergence_eps;
            let still = motion[motion.len() - w..]
                .iter()
                .all(|&d| d < cfg.zoo.convergence_motion);
            if flat && still {
                break;
            }
        }
        if let Some(b) = &state.best {
            if similar_enough(b.distance, cfg.rho) {
                break;
            }
        }
    }
    Ok(())
}

/// Attacks a detected fraud with threshold-aware ZOO.
pub fn zoo_attack<'a>(
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

    let target_scaled = ctx.scaler.scale(target.as_slice());
    let mut state = ZooState {
        ctx,
        cfg,
        oracle,
        sanitizer: Sanitizer::new(ctx.schema, target, cfg),
        target_scaled: target_scaled.clone(),
        best: None,
        iterations: 0,
    };

    let active = active_coordinates(ctx.schema, cfg);
    let probe: Vec<f64> = ctx
        .schema
        .features()
        .iter()
        .map(|f| {
            if f.ftype.is_discrete() {
                cfg.zoo.probe_discrete
            } else {
                cfg.zoo.probe_numeric
            }
        })
        .collect();
    let mut x = target_scaled;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    if !active.is_empty() {
        // Budget exhaustion simply ends the descent.
        let _ = descend(&mut state, &mut x, &active, &probe, &mut rng);
    }

    let iterations = state.iterations;
    Ok(match state.best {
        Some(b) => {
            let (restored, distance) =
                restore_features(ctx, target, cfg, &mut state.oracle, b.vector);
            AttackResult {
                final_p1: report_p1(ctx.clf, &restored),
                adversarial: restored,
                success: true,
                queries_used: state.oracle.queries_used(),
                iterations,
                distance,
            }
        }
        None => {
            let candidate = state.sanitizer.apply(&ctx.scaler.unscale(&x));
            let scaled = ctx.scaler.scale(candidate.as_slice());
            let p: Vec<f64> = scaled
                .iter()
                .zip(&state.target_scaled)
                .map(|(a, b)| a - b)
                .collect();
            let distance = cfg.norm.eval(&p);
            AttackResult {
                final_p1: report_p1(ctx.clf, &candidate),
                adversarial: candidate,
                success: false,
                queries_used: state.oracle.queries_used(),
                iterations,
                distance,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackKind;
    use crate::model::{GbdtModel, Node, ThresholdedClassifier, Tree};
    use crate::schema::{FeatureSpec, FeatureType, Schema};

    #[test]
    fn threshold_aware_loss_values() {
        assert!((zoo_loss(0.275, 0.192, 0.0) - 0.083).abs() < 1e-12);
        assert_eq!(zoo_loss(0.127, 0.192, 0.0), 0.0);
        assert_eq!(zoo_loss(0.192, 0.192, 0.0), 0.0);
    }

    #[test]
    fn stock_loss_goes_blind_above_tau() {
        assert_eq!(zoo_loss_original(0.5, 0.0), 0.0);
        // Minimized although 0.3 > tau = 0.192: the failure the threshold-
        // aware loss exists to fix.
        assert_eq!(zoo_loss_original(0.3, 0.0), 0.0);
        assert!((zoo_loss_original(0.9, 0.0) - (0.9f64 / 0.1).ln()).abs() < 1e-12);
        // Extreme scores stay finite through the epsilon floor.
        assert!(zoo_loss_original(1.0, 0.0).is_finite());
        assert!(zoo_loss_original(0.0, 0.0).is_finite());
    }

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
    fn target_already_accepted_is_a_precondition_error() {
        let clf = stump_clf(0.5);
        let schema = float_schema();
        let p = pool();
        let ctx = AttackContext::new(&clf, &schema, &p);
        let cfg = AttackConfig::new(AttackKind::Zoo, 0.5);
        let accepted = EncodedVector(vec![0.0, 0.0]);
        assert!(matches!(
            zoo_attack(&ctx, &accepted, &cfg),
            Err(AttackError::NotDetectedAsFraud)
        ));
    }

    #[test]
    fn finds_near_minimal_perturbation_on_the_stump() {
        let clf = stump_clf(0.5);
        let schema = float_schema();
        let p = pool();
        let ctx = AttackContext::new(&clf, &schema, &p);
        let mut cfg = AttackConfig::new(AttackKind::Zoo, 0.5);
        cfg.use_realistic = false;
        cfg.use_editability = false;
        cfg.seed = 11;
        let target = EncodedVector(vec![2.0, 0.0]);
        let result = zoo_attack(&ctx, &target, &cfg).unwrap();
        assert!(result.success);
        assert_eq!(clf.classify(&result.adversarial).unwrap(), 0);
        // Minimal raw perturbation is 1.0 (feature 0 down to just below 1.0).
        let moved = (result.adversarial[0] - 2.0).abs();
        assert!(moved >= 1.0 && moved <= 1.05, "perturbation {moved}");
        assert!((result.adversarial[1]).abs() < 0.3);
        assert!(result.queries_used <= cfg.max_queries);
    }

    #[test]
    fn identical_seed_gives_identical_result() {
        let clf = stump_clf(0.5);
        let schema = float_schema();
        let p = pool();
        let ctx = AttackContext::new(&clf, &schema, &p);
        let mut cfg = AttackConfig::new(AttackKind::Zoo, 0.5);
        cfg.seed = 99;
        cfg.use_realistic = false;
        cfg.use_editability = false;
        let target = EncodedVector(vec![2.0, 0.0]);
        let a = zoo_attack(&ctx, &target, &cfg).unwrap();
        let b = zoo_attack(&ctx, &target, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exhausted_budget_returns_best_effort() {
        let clf = stump_clf(0.5);
        let schema = float_schema();
        let p = pool();
        let ctx = AttackContext::new(&clf, &schema, &p);
        let mut cfg = AttackConfig::new(AttackKind::Zoo, 0.5);
        cfg.max_queries = 3;
        cfg.use_realistic = false;
        cfg.use_editability = false;
        let target = EncodedVector(vec![2.0, 0.0]);
        let result = zoo_attack(&ctx, &target, &cfg).unwrap();
        assert!(result.queries_used <= 3);
    }
}
