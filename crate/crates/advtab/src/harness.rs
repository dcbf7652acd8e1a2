//! Experiment orchestration: the five toggle configurations, per-attack
//! metrics, and report files.
//!
//! Success is always measured against the true thresholded classifier, even
//! when a configuration hands the attack a 0.5-threshold oracle — that
//! mismatch is precisely what configuration 1 demonstrates. Attacks on
//! distinct targets run in a work pool; aggregation is a deterministic
//! reduction over target order, so a fixed master seed reproduces reports
//! byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{
    generic_attack, AttackConfig, AttackContext, AttackKind, NormSpec,
};
use crate::constraints::count_unrealistic;
use crate::ingest::{decode_feature, DatasetSplit, EncodedVector, VALUE_EPS};
use crate::model::{ModelError, ThresholdedClassifier};
use crate::norms::{NormOrder, NormWeights};
use crate::schema::Schema;

/// The four attack-side switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toggles {
    pub threshold: bool,
    pub realistic: bool,
    pub custom_norm: bool,
    pub editability: bool,
}

/// Toggle pattern of each experiment configuration: 1 is everything off and
/// each following id switches one more feature on, ending fully constrained.
pub fn toggles_for(id: u8) -> Option<Toggles> {
    let t = |threshold, realistic, custom_norm, editability| Toggles {
        threshold,
        realistic,
        custom_norm,
        editability,
    };
    Some(match id {
        1 => t(false, false, false, false),
        2 => t(true, false, false, false),
        3 => t(true, true, false, false),
        4 => t(true, true, true, false),
        5 => t(true, true, true, true),
        _ => return None,
    })
}

/// Base norm used when the custom norm is off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseNorm {
    #[default]
    L2,
    LInf,
}

/// Shared numeric knobs of a sweep; the experiment id adds the toggles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub experiments: Vec<u8>,
    pub attacks: Vec<AttackKind>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: NormOrder,
    pub base_norm: BaseNorm,
    pub r: f64,
    pub nu: f64,
    /// Similarity early-stop; absent runs attacks to convergence.
    pub rho: Option<f64>,
    pub max_iters: u64,
    pub max_queries: u64,
    /// Cap on attacked targets, for quick desk runs.
    pub max_targets: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            experiments: vec![1, 2, 3, 4, 5],
            attacks: AttackKind::ALL.to_vec(),
            alpha: 0.5,
            beta: 0.5,
            gamma: NormOrder::L2,
            base_norm: BaseNorm::L2,
            r: 100.0,
            nu: 0.0,
            rho: None,
            max_iters: 1_000,
            max_queries: 100_000,
            max_targets: None,
        }
    }
}

/// Aggregate metrics of one (attack, experiment) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub attack: String,
    pub experiment: u8,
    pub targets: u64,
    pub successes: u64,
    /// Percentage of targets where the true classifier accepts the result.
    pub success_rate: f64,
    /// Percentage of countable slots violating their domain, over successful
    /// adversarials; absent when there are none.
    pub unrealistic_rate: Option<f64>,
    /// Changed checked raw features, summed over successful adversarials.
    pub checked_fields_perturbed: u64,
    /// Changed non-editable raw features, summed likewise.
    pub noneditable_fields_perturbed: u64,
}

/// All metric rows of a sweep, ordered (experiment, attack).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn row(&self, attack: AttackKind, experiment: u8) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.attack == attack.name() && r.experiment == experiment)
    }
}

/// One raw feature before/after, decoded for human reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub feature: String,
    pub original: String,
    pub adversarial: String,
    pub changed: bool,
}

/// Per-sample change report with the model's risk scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDiff {
    pub sample_index: usize,
    pub attack: String,
    pub experiment: u8,
    pub original_p1: f64,
    pub adversarial_p1: f64,
    pub fields: Vec<FieldDiff>,
}

impl PerturbationDiff {
    pub fn changed_features(&self) -> usize {
        self.fields.iter().filter(|f| f.changed).count()
    }

    pub fn file_stem(&self) -> String {
        format!(
            "e{}_{}_t{:03}",
            self.experiment, self.attack, self.sample_index
        )
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown experiment id {0} (expected 1..=5)")]
    BadExperimentId(u8),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report parse error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Indices of the true positives: labeled fraud and flagged by the true
/// classifier. Only these are attacked.
pub fn select_targets(
    clf: &ThresholdedClassifier,
    test: &[(EncodedVector, u8)],
) -> Result<Vec<usize>, ModelError> {
    let mut out = Vec::new();
    for (i, (x, y)) in test.iter().enumerate() {
        if *y == 1 && clf.classify(x)? == 1 {
            out.push(i);
        }
    }
    Ok(out)
}

/// Builds the raw-feature diff between an original and an adversarial.
///
/// `changed` compares at the encoded level (any owned column differing by
/// more than the value tolerance), which coincides with decoded comparison on
/// valid vectors and stays total on unrealistic ones.
pub fn build_diff(
    schema: &Schema,
    original: &EncodedVector,
    adversarial: &EncodedVector,
) -> Vec<FieldDiff> {
    schema
        .raw_features()
        .iter()
        .map(|rf| {
            let changed = rf
                .columns
                .iter()
                .any(|&c| (original[c] - adversarial[c]).abs() > VALUE_EPS);
            let render = |x: &EncodedVector| {
                decode_feature(x.as_slice(), rf).unwrap_or_else(|_| {
                    let vals: Vec<String> = rf
                        .columns
                        .iter()
                        .map(|&c| format!("{:.3}", x[c]))
                        .collect();
                    format!("invalid({})", vals.join(","))
                })
            };
            FieldDiff {
                feature: rf.name.clone(),
                original: render(original),
                adversarial: render(adversarial),
                changed,
            }
        })
        .collect()
}

/// Number of changed raw features whose flag is set; `flags` is indexed by
/// raw-feature position.
pub fn count_perturbed(fields: &[FieldDiff], flags: &[bool]) -> usize {
    fields
        .iter()
        .zip(flags)
        .filter(|(f, &flag)| f.changed && flag)
        .count()
}

/// SplitMix64 step.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fans the master seed out to one independent stream per
/// (experiment, attack, target).
pub fn seed_for(master: u64, experiment: u8, kind: AttackKind, target: usize) -> u64 {
    let kind_idx = AttackKind::ALL.iter().position(|k| *k == kind).unwrap() as u64;
    let mut s = mix(master);
    s = mix(s ^ (experiment as u64));
    s = mix(s ^ (kind_idx.wrapping_shl(8)));
    mix(s ^ (target as u64).wrapping_shl(16))
}

fn attack_config(
    kind: AttackKind,
    toggles: Toggles,
    sweep: &SweepConfig,
    tau: f64,
    weights: &NormWeights,
    seed: u64,
) -> AttackConfig {
    let mut cfg = AttackConfig::new(kind, tau);
    cfg.nu = sweep.nu;
    cfg.r = sweep.r;
    cfg.rho = sweep.rho.unwrap_or(f64::NEG_INFINITY);
    cfg.max_iters = sweep.max_iters;
    cfg.max_queries = sweep.max_queries;
    cfg.use_threshold = toggles.threshold;
    cfg.use_realistic = toggles.realistic;
    cfg.use_editability = toggles.editability;
    cfg.norm = if toggles.custom_norm {
        NormSpec::Custom(weights.clone())
    } else {
        match sweep.base_norm {
            BaseNorm::L2 => NormSpec::L2,
            BaseNorm::LInf => NormSpec::LInf,
        }
    };
    cfg.seed = seed;
    cfg
}

/// Rows and diffs produced by one experiment configuration.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub rows: Vec<MetricsRow>,
    pub diffs: Vec<PerturbationDiff>,
}

/// Runs every configured attack on every detected-fraud test sample under
/// one experiment configuration.
pub fn run_experiment(
    id: u8,
    sweep: &SweepConfig,
    clf: &ThresholdedClassifier,
    schema: &Schema,
    split: &DatasetSplit,
    master_seed: u64,
) -> Result<ExperimentOutcome, HarnessError> {
    let toggles = toggles_for(id).ok_or(HarnessError::BadExperimentId(id))?;
    let mut targets = select_targets(clf, &split.test)?;
    if let Some(cap) = sweep.max_targets {
        targets.truncate(cap);
    }
    let pool = split.train_vectors();
    let ctx = AttackContext::new(clf, schema, &pool);
    let weights = NormWeights::new(
        schema.checked_vector(),
        clf.model.feature_importance(),
        sweep.alpha,
        sweep.beta,
        sweep.gamma,
    );
    let checked_flags: Vec<bool> = schema.raw_features().iter().map(|r| r.checked).collect();
    let noneditable_flags: Vec<bool> = schema.raw_features().iter().map(|r| !r.editable).collect();
    let slots = schema.countable_slots();

    let mut outcome = ExperimentOutcome::default();
    for &kind in &sweep.attacks {
        // One independent attack per target; order-preserving collect keeps
        // the reduction deterministic.
        let results: Vec<_> = targets
            .par_iter()
            .map(|&t_idx| {
                let target = &split.test[t_idx].0;
                let cfg = attack_config(
                    kind,
                    toggles,
                    sweep,
                    clf.tau,
                    &weights,
                    seed_for(master_seed, id, kind, t_idx),
                );
                (t_idx, generic_attack(&ctx, target, &cfg))
            })
            .collect();

        let mut successes = 0u64;
        let mut unrealistic_sum = 0u64;
        let mut checked_sum = 0u64;
        let mut noneditable_sum = 0u64;
        for (t_idx, result) in &results {
            let Ok(result) = result else {
                continue; // not detected / no init: a failed attack
            };
            // Success is decided by the true classifier, not the attack's
            // internal rule.
            if clf.classify(&result.adversarial)? != 0 {
                continue;
            }
            successes += 1;
            unrealistic_sum += count_unrealistic(result.adversarial.as_slice(), schema) as u64;
            let original = &split.test[*t_idx].0;
            let fields = build_diff(schema, original, &result.adversarial);
            checked_sum += count_perturbed(&fields, &checked_flags) as u64;
            noneditable_sum += count_perturbed(&fields, &noneditable_flags) as u64;
            outcome.diffs.push(PerturbationDiff {
                sample_index: *t_idx,
                attack: kind.name().to_string(),
                experiment: id,
                original_p1: clf.model.predict_proba(original)?.1,
                adversarial_p1: result.final_p1,
                fields,
            });
        }

        let n = targets.len() as u64;
        outcome.rows.push(MetricsRow {
            attack: kind.name().to_string(),
            experiment: id,
            targets: n,
            successes,
            success_rate: if n > 0 {
                100.0 * successes as f64 / n as f64
            } else {
                0.0
            },
            unrealistic_rate: (successes > 0).then(|| {
                100.0 * unrealistic_sum as f64 / (successes as f64 * slots as f64)
            }),
            checked_fields_perturbed: checked_sum,
            noneditable_fields_perturbed: noneditable_sum,
        });
    }
    Ok(outcome)
}

/// Runs every experiment id in the sweep configuration.
pub fn run_sweep(
    sweep: &SweepConfig,
    clf: &ThresholdedClassifier,
    schema: &Schema,
    split: &DatasetSplit,
    master_seed: u64,
) -> Result<(MetricsReport, Vec<PerturbationDiff>), HarnessError> {
    let mut report = MetricsReport::default();
    let mut diffs = Vec::new();
    for &id in &sweep.experiments {
        let outcome = run_experiment(id, sweep, clf, schema, split, master_seed)?;
        report.rows.extend(outcome.rows);
        diffs.extend(outcome.diffs);
    }
    Ok((report, diffs))
}

/// Serializes a report exactly as `parse_metrics` reads it back.
pub fn metrics_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_metrics(text: &str) -> Result<MetricsReport, HarnessError> {
    Ok(serde_json::from_str(text)?)
}

/// Renders one table per attack kind, configurations as columns. Cells the
/// source layout leaves undefined for early configurations render as dashes;
/// the JSON report always carries the computed values.
pub fn render_tables(report: &MetricsReport) -> String {
    let mut attacks: Vec<&str> = Vec::new();
    for row in &report.rows {
        if !attacks.contains(&row.attack.as_str()) {
            attacks.push(&row.attack);
        }
    }
    let mut experiments: Vec<u8> = report.rows.iter().map(|r| r.experiment).collect();
    experiments.sort_unstable();
    experiments.dedup();

    let mut out = String::new();
    for attack in attacks {
        let rows: Vec<&MetricsRow> = experiments
            .iter()
            .filter_map(|&e| report.rows.iter().find(|r| r.attack == attack && r.experiment == e))
            .collect();
        out.push_str(&format!("{:<26}", attack));
        for row in &rows {
            out.push_str(&format!("{:>10}", row.experiment));
        }
        out.push('\n');
        let line = |label: &str, cells: Vec<String>| {
            let mut s = format!("{:<26}", label);
            for c in cells {
                s.push_str(&format!("{:>10}", c));
            }
            s.push('\n');
            s
        };
        out.push_str(&line(
            "Success Rate (%)",
            rows.iter().map(|r| format!("{:.1}", r.success_rate)).collect(),
        ));
        out.push_str(&line(
            "% of Unrealistic Values",
            rows.iter()
                .map(|r| match r.unrealistic_rate {
                    Some(v) => format!("{v:.1}"),
                    None => "-".to_string(),
                })
                .collect(),
        ));
        out.push_str(&line(
            "# Checked Fields",
            rows.iter()
                .map(|r| {
                    if r.experiment >= 3 {
                        format!("{}", r.checked_fields_perturbed)
                    } else {
                        "-".to_string()
                    }
                })
                .collect(),
        ));
        out.push_str(&line(
            "# Non-Editable Fields",
            rows.iter()
                .map(|r| {
                    if r.experiment >= 4 {
                        format!("{}", r.noneditable_fields_perturbed)
                    } else {
                        "-".to_string()
                    }
                })
                .collect(),
        ));
        out.push('\n');
    }
    out
}

/// Renders one diff in the two-column original/adversarial style.
pub fn render_diff(diff: &PerturbationDiff) -> String {
    let mut out = format!(
        "sample {} — {} (configuration {})\n",
        diff.sample_index, diff.attack, diff.experiment
    );
    let width = diff
        .fields
        .iter()
        .map(|f| f.feature.len())
        .max()
        .unwrap_or(0)
        .max("Model's Risk Score".len());
    for f in &diff.fields {
        if f.changed {
            out.push_str(&format!(
                "{:<width$}  {} -> {}\n",
                f.feature, f.original, f.adversarial
            ));
        }
    }
    out.push_str(&format!(
        "{:<width$}  {:.3} -> {:.3}\n",
        "Model's Risk Score", diff.original_p1, diff.adversarial_p1
    ));
    out
}

/// Writes `metrics.json`, `tables.txt`, and `diffs/<id>.json` under `out`.
pub fn emit_report(
    report: &MetricsReport,
    diffs: &[PerturbationDiff],
    out: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let out = out.as_ref();
    fs::create_dir_all(out.join("diffs"))?;
    let mut f = fs::File::create(out.join("metrics.json"))?;
    f.write_all(metrics_json(report).as_bytes())?;
    let mut f = fs::File::create(out.join("tables.txt"))?;
    f.write_all(render_tables(report).as_bytes())?;
    for diff in diffs {
        let mut s = serde_json::to_string_pretty(diff)?;
        s.push('\n');
        fs::write(out.join("diffs").join(format!("{}.json", diff.file_stem())), s)?;
    }
    Ok(())
}
