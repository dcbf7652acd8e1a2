//! The three threshold-aware black-box attacks and their shared machinery.
//!
//! All attacks operate in min-max-scaled space (per-feature [0,1] ranges
//! taken from the training pool) so step sizes are comparable across raw
//! scales, and every candidate a model query sees has first been through
//! [`Sanitizer::apply`] — editability restoration then realistic projection,
//! as toggled by the configuration. Oracle queries are budgeted; exhausting
//! the budget ends the attack with the best candidate found so far.

mod boundary;
mod hopskipjump;
mod zoo;

pub use boundary::boundary_attack;
pub use hopskipjump::hopskipjump_attack;
pub use zoo::{zoo_attack, zoo_loss, zoo_loss_original};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints;
use crate::ingest::EncodedVector;
use crate::model::{ModelError, ThresholdedClassifier};
use crate::norms::{self, NormWeights};
use crate::schema::Schema;

/// Which attack to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Zoo,
    Boundary,
    HopSkipJump,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Zoo, AttackKind::Boundary, AttackKind::HopSkipJump];

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Zoo => "zoo",
            AttackKind::Boundary => "boundary",
            AttackKind::HopSkipJump => "hopskipjump",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zoo" => Ok(AttackKind::Zoo),
            "boundary" => Ok(AttackKind::Boundary),
            "hopskipjump" => Ok(AttackKind::HopSkipJump),
            other => Err(format!("unknown attack kind `{other}`")),
        }
    }
}

/// Distance measure used for similarity, initialization, and refinement.
#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec {
    L2,
    LInf,
    Custom(NormWeights),
}

impl NormSpec {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            NormSpec::L2 => norms::l2(p),
            NormSpec::LInf => norms::linf(p),
            NormSpec::Custom(w) => norms::custom_norm(p, w),
        }
    }

    /// Per-component proposal scale: cheap directions (low weight) get large
    /// moves. Uniform for the plain norms.
    fn proposal_scale(&self, m: usize) -> Vec<f64> {
        match self {
            NormSpec::Custom(w) => norms::weight_vector(w)
                .iter()
                .map(|&wi| (1.0 / (wi + 0.05)).min(20.0).powi(2))
                .collect(),
            _ => vec![1.0; m],
        }
    }

    /// Mean component weight of one raw feature; 1 under the plain norms.
    fn feature_weight(&self, columns: &[usize]) -> f64 {
        match self {
            NormSpec::Custom(w) => {
                let wv = norms::weight_vector(w);
                columns.iter().map(|&c| wv[c]).sum::<f64>() / columns.len() as f64
            }
            _ => 1.0,
        }
    }
}

/// ZOO-specific knobs. Finite-difference probes are wide because the victim
/// model is piecewise constant: a probe must be able to cross split
/// thresholds (and flip booleans / one-hot members through projection) to
/// produce any signal at all.
#[derive(Debug, Clone, PartialEq)]
pub struct ZooParams {
    pub batch_size: usize,
    pub adam_step: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Probe half-width in scaled space for numeric coordinates.
    pub probe_numeric: f64,
    /// Probe half-width for boolean / one-hot coordinates.
    pub probe_discrete: f64,
    pub convergence_eps: f64,
    pub convergence_window: u64,
    /// Largest per-iteration coordinate move still counted as standstill.
    pub convergence_motion: f64,
}

impl Default for ZooParams {
    fn default() -> Self {
        ZooParams {
            batch_size: 16,
            adam_step: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            probe_numeric: 0.5,
            probe_discrete: 2.0,
            convergence_eps: 1e-6,
            convergence_window: 20,
            convergence_motion: 1e-3,
        }
    }
}

/// Boundary / HopSkipJump knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkParams {
    /// Initial orthogonal-step scale relative to current distance.
    pub orth_delta: f64,
    /// Initial contraction fraction toward the original.
    pub contract_eps: f64,
    /// Success-rate window for multiplicative adaptation.
    pub adapt_window: usize,
    pub adapt_up: f64,
    pub adapt_down: f64,
    /// Boundary stops once the contraction fraction shrinks below this.
    pub eps_floor: f64,
    /// Binary-search tolerance in scaled distance (HopSkipJump).
    pub bs_tol: f64,
    /// Initial direction-estimation batch (HopSkipJump); grows as sqrt(t).
    pub est_batch: usize,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            orth_delta: 0.1,
            contract_eps: 0.1,
            adapt_window: 20,
            adapt_up: 1.1,
            adapt_down: 0.9,
            eps_floor: 1e-7,
            bs_tol: 1e-3,
            est_batch: 100,
        }
    }
}

/// Per-attack configuration; one value per run, never mutated by the attack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Decision threshold of the true classifier.
    pub tau: f64,
    /// Transferability margin in the ZOO losses.
    pub nu: f64,
    /// Regularization weight on the ZOO loss term.
    pub r: f64,
    /// Similarity threshold; finite values allow early stopping once an
    /// adversarial is at least this similar (similarity = −distance).
    pub rho: f64,
    pub max_iters: u64,
    pub max_queries: u64,
    pub norm: NormSpec,
    /// Off reproduces the stock behavior: the attack decides at 0.5.
    pub use_threshold: bool,
    pub use_realistic: bool,
    pub use_editability: bool,
    pub seed: u64,
    pub zoo: ZooParams,
    pub walk: WalkParams,
}

impl AttackConfig {
    pub fn new(kind: AttackKind, tau: f64) -> Self {
        AttackConfig {
            kind,
            tau,
            nu: 0.0,
            r: 100.0,
            rho: f64::NEG_INFINITY,
            max_iters: 1_000,
            max_queries: 100_000,
            norm: NormSpec::L2,
            use_threshold: true,
            use_realistic: true,
            use_editability: true,
            seed: 0,
            zoo: ZooParams::default(),
            walk: WalkParams::default(),
        }
    }

    /// Threshold the attack's own oracle applies.
    pub fn effective_tau(&self) -> f64 {
        if self.use_threshold {
            self.tau
        } else {
            0.5
        }
    }
}

/// Attack outcome; `adversarial` is always populated (best effort on failure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub adversarial: EncodedVector,
    /// True iff the attack's own oracle accepted the returned vector.
    pub success: bool,
    pub queries_used: u64,
    pub iterations: u64,
    pub final_p1: f64,
    /// Distance to the original under the configured norm, in scaled space.
    pub distance: f64,
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("target is not classified as fraud under the attack's decision rule")]
    NotDetectedAsFraud,
    #[error("no pool sample is classified as non-fraud after sanitization")]
    NoInitialSample,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Signals that the query budget ran out; attacks finalize on it.
#[derive(Debug, Clone, Copy)]
pub struct BudgetExhausted;

/// Per-feature min-max scaling derived from the training pool.
#[derive(Debug, Clone)]
pub struct FeatureScaler {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl FeatureScaler {
    pub fn from_pool(pool: &[EncodedVector], m: usize) -> Self {
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for x in pool {
            for (i, &v) in x.as_slice().iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        for i in 0..m {
            if !lo[i].is_finite() || !hi[i].is_finite() {
                lo[i] = 0.0;
                hi[i] = 1.0;
            }
        }
        FeatureScaler { lo, hi }
    }

    fn range(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let r = self.range(i);
                if r > 0.0 {
                    (v - self.lo[i]) / r
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn unscale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let r = self.range(i);
                if r > 0.0 {
                    self.lo[i] + v * r
                } else {
                    self.lo[i]
                }
            })
            .collect()
    }
}

/// Shared, read-only inputs of one attack run.
pub struct AttackContext<'a> {
    pub clf: &'a ThresholdedClassifier,
    pub schema: &'a Schema,
    /// Candidate starting points (training samples); also fixes the scaling.
    pub pool: &'a [EncodedVector],
    pub scaler: FeatureScaler,
}

impl<'a> AttackContext<'a> {
    pub fn new(clf: &'a ThresholdedClassifier, schema: &'a Schema, pool: &'a [EncodedVector]) -> Self {
        let scaler = FeatureScaler::from_pool(pool, schema.m());
        AttackContext {
            clf,
            schema,
            pool,
            scaler,
        }
    }
}

/// Budgeted decision oracle. Every model evaluation — score or decision —
/// counts one query.
pub struct Oracle<'a> {
    clf: &'a ThresholdedClassifier,
    effective_tau: f64,
    queries: u64,
    max_queries: u64,
}

impl<'a> Oracle<'a> {
    pub fn new(clf: &'a ThresholdedClassifier, cfg: &AttackConfig) -> Self {
        Oracle {
            clf,
            effective_tau: cfg.effective_tau(),
            queries: 0,
            max_queries: cfg.max_queries,
        }
    }

    pub fn queries_used(&self) -> u64 {
        self.queries
    }

    /// Fraud probability of `x`; errors once the budget is spent.
    pub fn score(&mut self, x: &EncodedVector) -> Result<f64, BudgetExhausted> {
        if self.queries >= self.max_queries {
            return Err(BudgetExhausted);
        }
        self.queries += 1;
        let (_, p1) = self
            .clf
            .model
            .predict_proba(x)
            .expect("attack candidates match the model dimension");
        Ok(p1)
    }

    /// Thresholded decision under the attack's rule (0.5 when the threshold
    /// toggle is off, the true tau otherwise).
    pub fn decide(&mut self, x: &EncodedVector) -> Result<u8, BudgetExhausted> {
        let p1 = self.score(x)?;
        Ok(self.decision_from_score(p1))
    }

    pub fn decision_from_score(&self, p1: f64) -> u8 {
        u8::from(p1 > self.effective_tau)
    }
}

/// Stand-alone form of the oracle decision, for callers that do not need
/// budget tracking.
pub fn decision_oracle(
    clf: &ThresholdedClassifier,
    x: &EncodedVector,
    cfg: &AttackConfig,
) -> Result<u8, ModelError> {
    let (_, p1) = clf.model.predict_proba(x)?;
    Ok(u8::from(p1 > cfg.effective_tau()))
}

/// Applies the configured constraint toggles to a raw candidate.
pub struct Sanitizer<'a> {
    schema: &'a Schema,
    original: &'a EncodedVector,
    editable: Vec<bool>,
    use_realistic: bool,
    use_editability: bool,
}

impl<'a> Sanitizer<'a> {
    pub fn new(schema: &'a Schema, original: &'a EncodedVector, cfg: &AttackConfig) -> Self {
        Sanitizer {
            schema,
            original,
            editable: schema.editability_vector(),
            use_realistic: cfg.use_realistic,
            use_editability: cfg.use_editability,
        }
    }

    /// Editability restoration first, then realistic projection; identity
    /// when both toggles are off.
    pub fn apply(&self, candidate: &[f64]) -> EncodedVector {
        let restored: Vec<f64> = if self.use_editability {
            constraints::enforce_editability(candidate, self.original, &self.editable)
        } else {
            candidate.to_vec()
        };
        if self.use_realistic {
            constraints::project_realistic(&restored, self.schema).corrected
        } else {
            EncodedVector(restored)
        }
    }
}

/// Indices an attack may perturb: editable columns when the editability
/// toggle is on, every column otherwise.
pub fn active_coordinates(schema: &Schema, cfg: &AttackConfig) -> Vec<usize> {
    if cfg.use_editability {
        schema
            .editability_vector()
            .iter()
            .enumerate()
            .filter_map(|(i, &e)| e.then_some(i))
            .collect()
    } else {
        (0..schema.m()).collect()
    }
}

/// Starting point for the decision-based attacks: the sanitized pool sample
/// the oracle calls non-fraud that lies closest to the target under the
/// configured norm. Ties break to the earliest pool index.
pub fn init_adversarial(
    ctx: &AttackContext,
    target: &EncodedVector,
    cfg: &AttackConfig,
    oracle: &mut Oracle,
) -> Result<EncodedVector, AttackError> {
    let sanitizer = Sanitizer::new(ctx.schema, target, cfg);
    let target_scaled = ctx.scaler.scale(target.as_slice());
    let mut best: Option<(f64, EncodedVector)> = None;
    for sample in ctx.pool {
        let candidate = sanitizer.apply(sample.as_slice());
        let Ok(decision) = oracle.decide(&candidate) else {
            break; // budget exhausted during initialization
        };
        if decision != 0 {
            continue;
        }
        let scaled = ctx.scaler.scale(candidate.as_slice());
        let p: Vec<f64> = scaled
            .iter()
            .zip(&target_scaled)
            .map(|(a, b)| a - b)
            .collect();
        let d = cfg.norm.eval(&p);
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, candidate));
        }
    }
    best.map(|(_, x)| x).ok_or(AttackError::NoInitialSample)
}

/// Greedy per-feature restoration of a confirmed adversarial.
///
/// Repeatedly returns one whole raw feature to its original values, keeping
/// a restoration only while the oracle still answers non-fraud. Features are
/// tried from the most expensive under the configured norm to the cheapest:
/// under the custom norm the checked/important fields are pulled back first
/// while free (zero-weight) perturbations are left alone; under the plain
/// norms the order falls back to distance improvement. One-hot groups are
/// restored wholesale, so the result stays realistic whenever the inputs
/// are.
pub(crate) fn restore_features(
    ctx: &AttackContext,
    target: &EncodedVector,
    cfg: &AttackConfig,
    oracle: &mut Oracle,
    candidate: EncodedVector,
) -> (EncodedVector, f64) {
    let target_scaled = ctx.scaler.scale(target.as_slice());
    let distance_of = |x: &EncodedVector| {
        let scaled = ctx.scaler.scale(x.as_slice());
        let p: Vec<f64> = scaled
            .iter()
            .zip(&target_scaled)
            .map(|(a, b)| a - b)
            .collect();
        cfg.norm.eval(&p)
    };
    let mut current = candidate;
    let mut dist = distance_of(&current);
    let n_raw = ctx.schema.raw_features().len();
    let mut blocked = vec![false; n_raw];

    loop {
        let mut best: Option<(f64, f64, usize, EncodedVector, f64)> = None;
        for (ri, rf) in ctx.schema.raw_features().iter().enumerate() {
            if blocked[ri] {
                continue;
            }
            let differs = rf
                .columns
                .iter()
                .any(|&c| (current[c] - target[c]).abs() > crate::ingest::VALUE_EPS);
            if !differs {
                continue;
            }
            let mut trial = current.clone();
            for &c in &rf.columns {
                trial.0[c] = target[c];
            }
            let d = distance_of(&trial);
            let improvement = dist - d;
            if improvement <= 1e-12 {
                continue;
            }
            let weight = cfg.norm.feature_weight(&rf.columns);
            let better = match &best {
                None => true,
                Some((bw, bi, ..)) => {
                    weight > *bw + 1e-12
                        || ((weight - *bw).abs() <= 1e-12 && improvement > *bi)
                }
            };
            if better {
                best = Some((weight, improvement, ri, trial, d));
            }
        }
        let Some((_, _, ri, trial, d)) = best else {
            break;
        };
        match oracle.decide(&trial) {
            Ok(0) => {
                current = trial;
                dist = d;
            }
            Ok(_) => blocked[ri] = true,
            Err(BudgetExhausted) => break,
        }
    }
    (current, dist)
}

/// Dispatches on the configured attack kind; the uniform entry point.
pub fn generic_attack(
    ctx: &AttackContext,
    target: &EncodedVector,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    match cfg.kind {
        AttackKind::Zoo => zoo_attack(ctx, target, cfg),
        AttackKind::Boundary => boundary_attack(ctx, target, cfg),
        AttackKind::HopSkipJump => hopskipjump_attack(ctx, target, cfg),
    }
}

/// Similarity in the generic loop is negative scaled distance; runs with a
/// finite `rho` may stop as soon as an adversarial is at least this similar.
pub(crate) fn similar_enough(distance: f64, rho: f64) -> bool {
    rho.is_finite() && -distance >= rho
}

/// Standard normal sample via Box-Muller.
pub(crate) fn gauss(rng: &mut rand_chacha::ChaCha12Rng) -> f64 {
    use rand::Rng;
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uncounted model evaluation for result reporting.
pub(crate) fn report_p1(clf: &ThresholdedClassifier, x: &EncodedVector) -> f64 {
    clf.model
        .predict_proba(x)
        .expect("result vectors match the model dimension")
        .1
}
