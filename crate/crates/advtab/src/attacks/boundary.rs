//! Decision-based random walk along the decision boundary.
//!
//! Starts from the nearest acceptable pool sample and alternates two moves:
//! an orthogonal perturbation on the sphere of current distance around the
//! target, and a contraction toward the target. A move is kept only if the
//! oracle still answers non-fraud on the sanitized candidate. Step scales
//! adapt multiplicatively from trailing acceptance rates. Under the custom
//! norm, proposals are drawn with per-coordinate scale inversely
//! proportional to the norm weight, so perturbation mass drifts onto cheap
//! (unchecked, model-important) features and expensive coordinates contract
//! back to their original values.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::ingest::EncodedVector;

use super::{
    active_coordinates, gauss, init_adversarial, report_p1, restore_features, similar_enough,
    AttackConfig, AttackContext, AttackError, AttackResult, BudgetExhausted, Oracle, Sanitizer,
};

struct WalkState<'a> {
    ctx: &'a AttackContext<'a>,
    cfg: &'a AttackConfig,
    oracle: Oracle<'a>,
    sanitizer: Sanitizer<'a>,
    target_scaled: Vec<f64>,
    /// Last oracle-approved adversarial (raw and scaled) and its distance.
    adv: EncodedVector,
    adv_scaled: Vec<f64>,
    dist: f64,
    confirmed: bool,
    iterations: u64,
}

impl WalkState<'_> {
    fn distance_of(&self, scaled: &[f64]) -> f64 {
        let p: Vec<f64> = scaled
            .iter()
            .zip(&self.target_scaled)
            .map(|(a, b)| a - b)
            .collect();
        self.cfg.norm.eval(&p)
    }

    /// Sanitizes a scaled candidate and asks the oracle; returns the
    /// candidate in both spaces plus its decision and distance.
    fn try_candidate(
        &mut self,
        scaled: &[f64],
    ) -> Result<(EncodedVector, Vec<f64>, f64, u8), BudgetExhausted> {
        let raw = self.ctx.scaler.unscale(scaled);
        let candidate = self.sanitizer.apply(&raw);
        let decision = self.oracle.decide(&candidate)?;
        let scaled_back = self.ctx.scaler.scale(candidate.as_slice());
        let d = self.distance_of(&scaled_back);
        Ok((candidate, scaled_back, d, decision))
    }
}

fn walk(state: &mut WalkState, rng: &mut ChaCha12Rng, active: &[usize]) -> Result<(), BudgetExhausted> {
    let cfg = state.cfg;
    let m = state.target_scaled.len();
    let prop_scale = cfg.norm.proposal_scale(m);
    let mut orth_delta = cfg.walk.orth_delta;
    let mut contract_eps = cfg.walk.contract_eps;
    let mut orth_window: Vec<bool> = Vec::new();
    let mut contract_window: Vec<bool> = Vec::new();

    for iter in 1..=cfg.max_iters {
        state.iterations = iter;
        if iter == 1 {
            // Loop-condition check of the generic algorithm: the starting
            // point must itself pass the oracle.
            let decision = state.oracle.decide(&state.adv.clone())?;
            state.confirmed = decision == 0;
        }
        if state.confirmed && similar_enough(state.dist, cfg.rho) {
            break;
        }
        if state.dist < 1e-12 || contract_eps < cfg.walk.eps_floor {
            break;
        }

        // Orthogonal move on the sphere of current distance.
        let mut eta = vec![0.0; m];
        for &i in active {
            eta[i] = gauss(rng) * prop_scale[i];
        }
        let u: Vec<f64> = state
            .adv_scaled
            .iter()
            .zip(&state.target_scaled)
            .map(|(a, b)| a - b)
            .collect();
        let uu: f64 = u.iter().map(|x| x * x).sum();
        if uu > 0.0 {
            let eu: f64 = eta.iter().zip(&u).map(|(e, x)| e * x).sum();
            for i in 0..m {
                eta[i] -= eu / uu * u[i];
            }
        }
        let eta_norm = cfg.norm.eval(&eta);
        if eta_norm > 1e-12 {
            let scale = orth_delta * state.dist / eta_norm;
            let mut cand: Vec<f64> = (0..m).map(|i| state.adv_scaled[i] + scale * eta[i]).collect();
            // Re-project onto the sphere: same configured-norm distance.
            let p: Vec<f64> = cand
                .iter()
                .zip(&state.target_scaled)
                .map(|(a, b)| a - b)
                .collect();
            let pn = cfg.norm.eval(&p);
            if pn > 1e-12 {
                let back = state.dist / pn;
                for i in 0..m {
                    cand[i] = state.target_scaled[i] + back * p[i];
                }
            }
            let (raw, scaled, d, decision) = state.try_candidate(&cand)?;
            let ok = decision == 0;
            if ok {
                state.adv = raw;
                state.adv_scaled = scaled;
                state.dist = d;
                state.confirmed = true;
            }
            orth_window.push(ok);
        }

        // Contraction toward the target.
        let cand: Vec<f64> = (0..m)
            .map(|i| state.adv_scaled[i] + contract_eps * (state.target_scaled[i] - state.adv_scaled[i]))
            .collect();
        let (raw, scaled, d, decision) = state.try_candidate(&cand)?;
        let ok = decision == 0 && d < state.dist;
        if ok {
            state.adv = raw;
            state.adv_scaled = scaled;
            state.dist = d;
            state.confirmed = true;
        }
        contract_window.push(ok);

        if orth_window.len() >= cfg.walk.adapt_window {
            let rate = orth_window.iter().filter(|&&b| b).count() as f64 / orth_window.len() as f64;
            orth_delta *= if rate > 0.5 { cfg.walk.adapt_up } else { cfg.walk.adapt_down };
            orth_delta = orth_delta.clamp(1e-9, 10.0);
            orth_window.clear();
        }
        if contract_window.len() >= cfg.walk.adapt_window {
            let rate =
                contract_window.iter().filter(|&&b| b).count() as f64 / contract_window.len() as f64;
            contract_eps *= if rate > 0.5 { cfg.walk.adapt_up } else { cfg.walk.adapt_down };
            contract_eps = contract_eps.min(0.999);
            contract_window.clear();
        }
    }
    Ok(())
}

/// Attacks a detected fraud with the boundary walk.
pub fn boundary_attack<'a>(
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
    let adv_scaled = ctx.scaler.scale(init.as_slice());

    let mut state = WalkState {
        ctx,
        cfg,
        oracle,
        sanitizer: Sanitizer::new(ctx.schema, target, cfg),
        dist: {
            let p: Vec<f64> = adv_scaled
                .iter()
                .zip(&target_scaled)
                .map(|(a, b)| a - b)
                .collect();
            cfg.norm.eval(&p)
        },
        target_scaled,
        adv: init,
        adv_scaled,
        confirmed: false,
        iterations: 0,
    };

    if cfg.max_iters > 0 {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let active = active_coordinates(ctx.schema, cfg);
        if !active.is_empty() {
            let _ = walk(&mut state, &mut rng, &active);
        }
    }
    if state.confirmed {
        let (restored, d) = restore_features(ctx, target, cfg, &mut state.oracle, state.adv);
        state.adv = restored;
        state.dist = d;
    }

    Ok(AttackResult {
        final_p1: report_p1(ctx.clf, &state.adv),
        success: state.confirmed,
        queries_used: state.oracle.queries_used(),
        iterations: state.iterations,
        distance: state.dist,
        adversarial: state.adv,
    })
}
