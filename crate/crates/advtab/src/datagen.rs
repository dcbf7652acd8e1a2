//! Deterministic generator for a credit-application dataset.
//!
//! The canonical German Credit file cannot be redistributed here, so the
//! repository ships a generator producing a dataset with the same shape: the
//! same 20 raw features (7 numeric, 13 categorical with the original level
//! codes, 61 columns once one-hot encoded), a 70/30 accepted/rejected label
//! split, and correlated feature/label structure strong enough to train a
//! fair classifier on. Records are sampled from a seeded latent-quality
//! model: each applicant draws a quality factor, features are sampled
//! conditioned on it, and the 30% highest-risk applicants are labeled
//! rejected. The real file still works through the space-separated ingest
//! path.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::ingest::RawRecord;
use crate::schema::{FeatureSpec, FeatureType, Schema};

/// Fraction of records labeled rejected (fraud).
const POSITIVE_RATE: f64 = 0.3;

/// One categorical level: code, marginal log-weight, correlation with the
/// latent quality factor, and additive risk effect.
struct Level {
    code: &'static str,
    base: f64,
    tilt: f64,
    effect: f64,
}

struct CatFeature {
    name: &'static str,
    editable: bool,
    checked: bool,
    levels: &'static [Level],
}

const fn lv(code: &'static str, base: f64, tilt: f64, effect: f64) -> Level {
    Level {
        code,
        base,
        tilt,
        effect,
    }
}

/// The 13 categorical features in the canonical column order.
const CHECKING: CatFeature = CatFeature {
    name: "Status of existing checking account",
    editable: true,
    checked: true,
    levels: &[
        lv("A11", 0.0, 0.9, 1.10),
        lv("A12", 0.0, 0.4, 0.50),
        lv("A13", -1.5, -0.3, -0.30),
        lv("A14", 0.3, -0.9, -1.10),
    ],
};
const HISTORY: CatFeature = CatFeature {
    name: "Credit history",
    editable: false,
    checked: true,
    levels: &[
        lv("A30", -1.8, 0.5, 0.60),
        lv("A31", -1.6, 0.4, 0.40),
        lv("A32", 0.6, 0.0, 0.00),
        lv("A33", -1.2, -0.2, -0.20),
        lv("A34", -0.2, -0.5, -0.60),
    ],
};
const PURPOSE: CatFeature = CatFeature {
    name: "Purpose",
    editable: true,
    checked: true,
    levels: &[
        lv("A40", 0.3, 0.2, 0.25),
        lv("A41", -0.4, -0.2, -0.20),
        lv("A410", -1.8, 0.1, 0.20),
        lv("A42", 0.1, 0.0, 0.00),
        lv("A43", 0.4, -0.1, -0.10),
        lv("A44", -2.3, 0.0, 0.00),
        lv("A45", -1.9, 0.1, 0.10),
        lv("A46", -1.6, 0.2, 0.20),
        lv("A48", -2.8, -0.1, -0.10),
        lv("A49", -0.9, 0.0, 0.00),
    ],
};
const SAVINGS: CatFeature = CatFeature {
    name: "Savings account/bonds",
    editable: true,
    checked: false,
    levels: &[
        lv("A61", 0.8, 0.5, 0.60),
        lv("A62", -0.5, 0.2, 0.20),
        lv("A63", -1.0, -0.1, -0.10),
        lv("A64", -1.3, -0.3, -0.30),
        lv("A65", -0.3, -0.5, -0.60),
    ],
};
const EMPLOYMENT: CatFeature = CatFeature {
    name: "Present employment since",
    editable: true,
    checked: false,
    levels: &[
        lv("A71", -1.2, 0.4, 0.55),
        lv("A72", -0.3, 0.2, 0.20),
        lv("A73", 0.4, 0.0, 0.00),
        lv("A74", -0.3, -0.2, -0.15),
        lv("A75", -0.1, -0.3, -0.50),
    ],
};
const PERSONAL: CatFeature = CatFeature {
    name: "Personal status and sex",
    editable: false,
    checked: true,
    levels: &[
        lv("A91", -1.7, 0.2, 0.20),
        lv("A92", 0.0, 0.1, 0.10),
        lv("A93", 0.6, -0.1, -0.10),
        lv("A94", -1.0, 0.0, 0.00),
    ],
};
const DEBTORS: CatFeature = CatFeature {
    name: "Other debtors / guarantors",
    editable: false,
    checked: false,
    levels: &[
        lv("A101", 2.2, 0.0, 0.00),
        lv("A102", -0.8, 0.2, 0.15),
        lv("A103", -0.5, -0.2, -0.25),
    ],
};
const PROPERTY: CatFeature = CatFeature {
    name: "Property",
    editable: true,
    checked: false,
    levels: &[
        lv("A121", 0.1, -0.4, -0.35),
        lv("A122", 0.0, 0.0, 0.00),
        lv("A123", 0.2, 0.1, 0.05),
        lv("A124", -0.4, 0.5, 0.40),
    ],
};
const PLANS: CatFeature = CatFeature {
    name: "Other installment plans",
    editable: true,
    checked: false,
    levels: &[
        lv("A141", -1.4, 0.3, 0.35),
        lv("A142", -2.2, 0.1, 0.10),
        lv("A143", 0.8, -0.2, -0.20),
    ],
};
const HOUSING: CatFeature = CatFeature {
    name: "Housing",
    editable: true,
    checked: true,
    levels: &[
        lv("A151", -0.9, 0.2, 0.10),
        lv("A152", 0.9, -0.2, -0.15),
        lv("A153", -1.5, 0.3, 0.15),
    ],
};
const JOB: CatFeature = CatFeature {
    name: "Job",
    editable: true,
    checked: false,
    levels: &[
        lv("A171", -2.0, 0.1, -0.05),
        lv("A172", -0.3, 0.0, 0.00),
        lv("A173", 0.9, 0.0, 0.00),
        lv("A174", -0.6, 0.1, 0.10),
    ],
};
const TELEPHONE: CatFeature = CatFeature {
    name: "Telephone",
    editable: true,
    checked: true,
    levels: &[
        lv("A191", 0.2, 0.1, 0.03),
        lv("A192", -0.2, -0.1, -0.03),
    ],
};
const FOREIGN: CatFeature = CatFeature {
    name: "foreign worker",
    editable: true,
    checked: true,
    levels: &[lv("A201", 1.6, 0.1, 0.05), lv("A202", -1.6, -0.1, -0.05)],
};

/// Builds the shipped 20-feature schema (61 encoded columns).
pub fn german_schema() -> Schema {
    let mut features: Vec<FeatureSpec> = Vec::new();
    let cat = |features: &mut Vec<FeatureSpec>, def: &CatFeature| {
        let mut codes: Vec<&str> = def.levels.iter().map(|l| l.code).collect();
        codes.sort();
        for code in codes {
            features.push(FeatureSpec::one_hot(def.name, code, def.editable, def.checked));
        }
    };
    let num = |features: &mut Vec<FeatureSpec>, name: &str, editable: bool, checked: bool| {
        features.push(FeatureSpec::numeric(
            name,
            FeatureType::PositiveInteger,
            editable,
            checked,
        ));
    };

    cat(&mut features, &CHECKING);
    num(&mut features, "Duration in month", true, true);
    cat(&mut features, &HISTORY);
    cat(&mut features, &PURPOSE);
    num(&mut features, "Credit amount", true, true);
    cat(&mut features, &SAVINGS);
    cat(&mut features, &EMPLOYMENT);
    num(
        &mut features,
        "Installment rate in percentage of disposable income",
        true,
        false,
    );
    cat(&mut features, &PERSONAL);
    cat(&mut features, &DEBTORS);
    num(&mut features, "Present residence since", true, false);
    cat(&mut features, &PROPERTY);
    num(&mut features, "Age in years", false, true);
    cat(&mut features, &PLANS);
    cat(&mut features, &HOUSING);
    num(
        &mut features,
        "Number of existing credits at this bank",
        true,
        false,
    );
    cat(&mut features, &JOB);
    num(
        &mut features,
        "Number of people being liable to provide maintenance for",
        true,
        false,
    );
    cat(&mut features, &TELEPHONE);
    cat(&mut features, &FOREIGN);

    Schema::new(features, "class").expect("built-in schema is valid")
}

/// Standard normal via Box-Muller.
fn gauss(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn sample_level(def: &CatFeature, q: f64, rng: &mut ChaCha12Rng) -> (&'static str, f64) {
    let weights: Vec<f64> = def.levels.iter().map(|l| (l.base + l.tilt * q).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut pick = rng.gen_range(0.0..total);
    for (level, w) in def.levels.iter().zip(&weights) {
        if pick < *w {
            return (level.code, level.effect);
        }
        pick -= w;
    }
    let last = def.levels.last().unwrap();
    (last.code, last.effect)
}

/// Generates `n` records; exactly the `round(0.3·n)` riskiest are labeled 1.
pub fn generate(n: usize, seed: u64) -> Vec<RawRecord> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows: Vec<(BTreeMap<String, String>, f64)> = Vec::with_capacity(n);

    for _ in 0..n {
        // Latent applicant quality; positive = risky.
        let q = gauss(&mut rng);
        let mut values = BTreeMap::new();
        let mut risk = 0.0;

        let put_cat = |def: &CatFeature, values: &mut BTreeMap<String, String>,
                       risk: &mut f64, rng: &mut ChaCha12Rng| {
            let (code, effect) = sample_level(def, q, rng);
            values.insert(def.name.to_string(), code.to_string());
            *risk += effect;
        };

        put_cat(&CHECKING, &mut values, &mut risk, &mut rng);
        put_cat(&HISTORY, &mut values, &mut risk, &mut rng);
        put_cat(&PURPOSE, &mut values, &mut risk, &mut rng);
        put_cat(&SAVINGS, &mut values, &mut risk, &mut rng);
        put_cat(&EMPLOYMENT, &mut values, &mut risk, &mut rng);
        put_cat(&PERSONAL, &mut values, &mut risk, &mut rng);
        put_cat(&DEBTORS, &mut values, &mut risk, &mut rng);
        put_cat(&PROPERTY, &mut values, &mut risk, &mut rng);
        put_cat(&PLANS, &mut values, &mut risk, &mut rng);
        put_cat(&HOUSING, &mut values, &mut risk, &mut rng);
        put_cat(&JOB, &mut values, &mut risk, &mut rng);
        put_cat(&TELEPHONE, &mut values, &mut risk, &mut rng);
        put_cat(&FOREIGN, &mut values, &mut risk, &mut rng);

        let duration = (13.0 + 9.0 * q + 7.0 * gauss(&mut rng) + 8.0 * rng.gen_range(0.0..1.0))
            .round()
            .clamp(4.0, 72.0);
        values.insert("Duration in month".to_string(), format!("{duration}"));
        risk += (duration - 21.0) / 48.0 * 0.9;

        let amount = (6.8 + 0.5 * q + 0.012 * duration + 0.6 * gauss(&mut rng))
            .exp()
            .round()
            .clamp(250.0, 20000.0);
        values.insert("Credit amount".to_string(), format!("{amount}"));
        risk += ((amount.max(1.0)).ln() - 7.9) * 0.45;

        let rate = (2.5 + 0.4 * q + 1.2 * gauss(&mut rng)).round().clamp(1.0, 4.0);
        values.insert(
            "Installment rate in percentage of disposable income".to_string(),
            format!("{rate}"),
        );
        risk += (rate - 2.5) * 0.10;

        let residence = rng.gen_range(1..=4);
        values.insert("Present residence since".to_string(), format!("{residence}"));
        risk += (residence as f64 - 2.5) * 0.02;

        let age = (35.0 + 11.0 * gauss(&mut rng) - 3.0 * q).round().clamp(19.0, 75.0);
        values.insert("Age in years".to_string(), format!("{age}"));
        risk += -(age - 35.0) / 40.0 * 0.40;

        let credits = 1 + rng.gen_range(0..4) / 3 + rng.gen_range(0..4) / 3;
        values.insert(
            "Number of existing credits at this bank".to_string(),
            format!("{credits}"),
        );
        risk += (credits as f64 - 1.0) * 0.05;

        let liable = if rng.gen_range(0.0..1.0) < 0.85 { 1 } else { 2 };
        values.insert(
            "Number of people being liable to provide maintenance for".to_string(),
            format!("{liable}"),
        );
        risk += (liable as f64 - 1.0) * 0.05;

        risk += 1.6 * gauss(&mut rng);
        rows.push((values, risk));
    }

    // Label the riskiest round(0.3·n) applicants rejected.
    let n_pos = (POSITIVE_RATE * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rows[b].1.partial_cmp(&rows[a].1).unwrap().then(a.cmp(&b)));
    let mut labels = vec![0u8; n];
    for &i in order.iter().take(n_pos) {
        labels[i] = 1;
    }

    rows.into_iter()
        .zip(labels)
        .map(|((values, _), label)| RawRecord { values, label })
        .collect()
}

/// Writes records as CSV with a header row, label column last.
pub fn write_csv(
    records: &[RawRecord],
    schema: &Schema,
    path: impl AsRef<std::path::Path>,
) -> Result<(), crate::ingest::IngestError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = schema
        .raw_features()
        .iter()
        .map(|rf| rf.name.clone())
        .collect();
    header.push(schema.label_column().to_string());
    writer.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = schema
            .raw_features()
            .iter()
            .map(|rf| r.values[&rf.name].clone())
            .collect();
        row.push(format!("{}", r.label));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
