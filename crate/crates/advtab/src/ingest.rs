//! CSV ingestion, one-hot encoding, and deterministic stratified splits.
//!
//! Encoding is pure: numeric features pass through, categorical features
//! expand to one-hot blocks in the schema's column order. `decode` inverts
//! `encode` exactly on canonical records, which is what the diff reports use
//! to show changes at raw-feature granularity.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{FeatureType, RawFeature, RawKind, Schema};

/// Numeric tolerance for treating encoded components as equal / integral.
pub const VALUE_EPS: f64 = 1e-9;

/// A transaction as a fixed-length real vector, laid out per the schema.
///
/// The one-hot / integrality invariants hold on `encode` output and on
/// sanitized attack output; raw attack candidates may violate them (that is
/// exactly what `count_unrealistic` measures).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedVector(pub Vec<f64>);

impl EncodedVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for EncodedVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One raw dataset row: feature tokens keyed by raw feature name, plus label.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub values: BTreeMap<String, String>,
    /// 1 = fraud / rejected, 0 = accepted.
    pub label: u8,
}

/// Train/validation/test partition of encoded, labeled samples.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<(EncodedVector, u8)>,
    pub validation: Vec<(EncodedVector, u8)>,
    pub test: Vec<(EncodedVector, u8)>,
}

impl DatasetSplit {
    pub fn train_vectors(&self) -> Vec<EncodedVector> {
        self.train.iter().map(|(x, _)| x.clone()).collect()
    }
}

/// Fractions for the three-way split; must be positive and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    /// 70/30 train/test with the train part further split 80/20.
    pub const DEFAULT: SplitRatios = SplitRatios {
        train: 0.56,
        validation: 0.14,
        test: 0.30,
    };

    fn validate(&self) -> Result<(), IngestError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|&p| p <= 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(IngestError::BadRatios(*self));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("record is missing feature `{0}`")]
    MissingFeature(String),
    #[error("unknown level `{level}` for categorical feature `{feature}`")]
    UnknownLevel { feature: String, level: String },
    #[error("cannot parse `{token}` as {expected} for feature `{feature}`")]
    BadNumeric {
        feature: String,
        token: String,
        expected: &'static str,
    },
    #[error("bad label token `{0}` (expected 0/1, or 1/2 in space-separated mode)")]
    BadLabel(String),
    #[error("missing label column `{0}` in header")]
    MissingLabel(String),
    #[error("row {row} has {got} columns, expected {expected}")]
    BadArity { row: usize, got: usize, expected: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios(SplitRatios),
    #[error("one-hot group `{0}` has no active member")]
    NoActiveMember(String),
    #[error("vector has {got} components, schema expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

/// One-hot encodes a raw record into the schema's canonical layout.
pub fn encode(record: &RawRecord, schema: &Schema) -> Result<EncodedVector, IngestError> {
    let mut x = vec![0.0; schema.m()];
    for rf in schema.raw_features() {
        let token = record
            .values
            .get(&rf.name)
            .ok_or_else(|| IngestError::MissingFeature(rf.name.clone()))?;
        match &rf.kind {
            RawKind::Scalar(t) => {
                x[rf.columns[0]] = parse_scalar(token, t, &rf.name)?;
            }
            RawKind::Categorical { levels } => {
                let pos = levels.iter().position(|l| l == token).ok_or_else(|| {
                    IngestError::UnknownLevel {
                        feature: rf.name.clone(),
                        level: token.clone(),
                    }
                })?;
                x[rf.columns[pos]] = 1.0;
            }
        }
    }
    Ok(EncodedVector(x))
}

/// Decodes one raw feature from an encoded vector.
///
/// Scalars render leniently (integers rounded); a categorical decodes only if
/// its group is a valid one-hot, otherwise `NoActiveMember` is returned.
pub fn decode_feature(x: &[f64], rf: &RawFeature) -> Result<String, IngestError> {
    match &rf.kind {
        RawKind::Scalar(t) => {
            let v = x[rf.columns[0]];
            Ok(match t {
                FeatureType::Boolean => format!("{}", if v > 0.5 { 1 } else { 0 }),
                FeatureType::Integer | FeatureType::PositiveInteger => {
                    format!("{}", v.round() as i64)
                }
                FeatureType::Float | FeatureType::PositiveFloat => format!("{v}"),
                FeatureType::OneHotMember { .. } => {
                    unreachable!("scalar raw features never hold one-hot columns")
                }
            })
        }
        RawKind::Categorical { levels } => {
            let mut active = None;
            for (pos, &c) in rf.columns.iter().enumerate() {
                let v = x[c];
                if (v - 1.0).abs() <= VALUE_EPS {
                    if active.is_some() {
                        return Err(IngestError::NoActiveMember(rf.name.clone()));
                    }
                    active = Some(pos);
                } else if v.abs() > VALUE_EPS {
                    return Err(IngestError::NoActiveMember(rf.name.clone()));
                }
            }
            let pos = active.ok_or_else(|| IngestError::NoActiveMember(rf.name.clone()))?;
            Ok(levels[pos].clone())
        }
    }
}

/// Inverts `encode`: recovers the raw tokens of a valid encoded vector.
pub fn decode(x: &EncodedVector, schema: &Schema) -> Result<BTreeMap<String, String>, IngestError> {
    if x.len() != schema.m() {
        return Err(IngestError::DimensionMismatch {
            got: x.len(),
            expected: schema.m(),
        });
    }
    let mut out = BTreeMap::new();
    for rf in schema.raw_features() {
        out.insert(rf.name.clone(), decode_feature(x.as_slice(), rf)?);
    }
    Ok(out)
}

fn parse_scalar(token: &str, t: &FeatureType, feature: &str) -> Result<f64, IngestError> {
    let bad = |expected: &'static str| IngestError::BadNumeric {
        feature: feature.to_string(),
        token: token.to_string(),
        expected,
    };
    match t {
        FeatureType::Boolean => match token {
            "0" | "false" => Ok(0.0),
            "1" | "true" => Ok(1.0),
            _ => Err(bad("boolean")),
        },
        FeatureType::Integer => token.parse::<i64>().map(|v| v as f64).map_err(|_| bad("integer")),
        FeatureType::PositiveInteger => {
            let v = token.parse::<i64>().map_err(|_| bad("non-negative integer"))?;
            if v < 0 {
                return Err(bad("non-negative integer"));
            }
            Ok(v as f64)
        }
        FeatureType::Float => {
            let v = token.parse::<f64>().map_err(|_| bad("float"))?;
            if !v.is_finite() {
                return Err(bad("float"));
            }
            Ok(v)
        }
        FeatureType::PositiveFloat => {
            let v = token.parse::<f64>().map_err(|_| bad("non-negative float"))?;
            if !v.is_finite() || v < 0.0 {
                return Err(bad("non-negative float"));
            }
            Ok(v)
        }
        FeatureType::OneHotMember { .. } => unreachable!("scalar parse on one-hot member"),
    }
}

/// Reads labeled records from a CSV file with a header row, columns matched
/// by name against the schema's raw features plus its label column.
pub fn read_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<RawRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == schema.label_column())
        .ok_or_else(|| IngestError::MissingLabel(schema.label_column().to_string()))?;
    let mut col_for: BTreeMap<&str, usize> = BTreeMap::new();
    for rf in schema.raw_features() {
        let idx = headers
            .iter()
            .position(|h| h == &rf.name)
            .ok_or_else(|| IngestError::MissingFeature(rf.name.clone()))?;
        col_for.insert(&rf.name, idx);
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != headers.len() {
            return Err(IngestError::BadArity {
                row: i + 2,
                got: row.len(),
                expected: headers.len(),
            });
        }
        let label = match row.get(label_idx).unwrap_or("") {
            "0" => 0,
            "1" => 1,
            other => return Err(IngestError::BadLabel(other.to_string())),
        };
        let mut values = BTreeMap::new();
        for rf in schema.raw_features() {
            let token = row.get(col_for[rf.name.as_str()]).unwrap_or("");
            if token.is_empty() {
                return Err(IngestError::MissingFeature(rf.name.clone()));
            }
            values.insert(rf.name.clone(), token.to_string());
        }
        records.push(RawRecord { values, label });
    }
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(records)
}

/// Reads the canonical space-separated layout: no header, columns in schema
/// raw-feature order, label last with 1 = accepted → 0 and 2 = rejected → 1.
pub fn read_space_separated(
    path: impl AsRef<Path>,
    schema: &Schema,
) -> Result<Vec<RawRecord>, IngestError> {
    let text = std::fs::read_to_string(path)?;
    let raw_features = schema.raw_features();
    let expected = raw_features.len() + 1;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != expected {
            return Err(IngestError::BadArity {
                row: i + 1,
                got: tokens.len(),
                expected,
            });
        }
        let label = match tokens[expected - 1] {
            "1" => 0,
            "2" => 1,
            other => return Err(IngestError::BadLabel(other.to_string())),
        };
        let mut values = BTreeMap::new();
        for (rf, token) in raw_features.iter().zip(&tokens) {
            values.insert(rf.name.clone(), token.to_string());
        }
        records.push(RawRecord { values, label });
    }
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(records)
}

/// Deterministic stratified split: records are partitioned per label class so
/// the class ratio carries into every part, then encoded.
pub fn split(
    records: &[RawRecord],
    schema: &Schema,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit, IngestError> {
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    ratios.validate()?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].label == class)
            .collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let counts = allocate(idx.len(), ratios);
        let mut cursor = 0usize;
        for (part, take) in [
            (&mut out.train, counts[0]),
            (&mut out.validation, counts[1]),
            (&mut out.test, counts[2]),
        ] {
            for &i in &idx[cursor..cursor + take] {
                part.push((encode(&records[i], schema)?, class));
            }
            cursor += take;
        }
    }
    Ok(out)
}

/// Largest-remainder allocation of `n` items across the three parts.
fn allocate(n: usize, ratios: SplitRatios) -> [usize; 3] {
    let targets = [
        n as f64 * ratios.train,
        n as f64 * ratios.validation,
        n as f64 * ratios.test,
    ];
    let mut counts = [targets[0] as usize, targets[1] as usize, targets[2] as usize];
    let mut rem: Vec<(f64, usize)> = targets
        .iter()
        .enumerate()
        .map(|(k, t)| (t - t.floor(), k))
        .collect();
    // Tie-break toward earlier parts (train, then validation).
    rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut left = n - counts.iter().sum::<usize>();
    for (_, k) in rem {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Writes the encoded matrix as CSV in schema column order (plus label).
pub fn dump_encoded(
    records: &[RawRecord],
    schema: &Schema,
    path: impl AsRef<Path>,
) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = schema.features().iter().map(|f| f.name.clone()).collect();
    header.push(schema.label_column().to_string());
    writer.write_record(&header)?;
    for r in records {
        let x = encode(r, schema)?;
        let mut row: Vec<String> = x.0.iter().map(|v| format!("{v}")).collect();
        row.push(format!("{}", r.label));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSpec;

    fn toy_schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("duration", FeatureType::PositiveInteger, true, false),
                FeatureSpec::one_hot("status", "A11", true, true),
                FeatureSpec::one_hot("status", "A12", true, true),
                FeatureSpec::one_hot("status", "A13", true, true),
                FeatureSpec::one_hot("status", "A14", true, true),
                FeatureSpec::numeric("rate", FeatureType::Float, true, false),
            ],
            "class",
        )
        .unwrap()
    }

    fn record(duration: &str, status: &str, rate: &str, label: u8) -> RawRecord {
        let mut values = BTreeMap::new();
        values.insert("duration".to_string(), duration.to_string());
        values.insert("status".to_string(), status.to_string());
        values.insert("rate".to_string(), rate.to_string());
        RawRecord { values, label }
    }

    #[test]
    fn one_hot_level_sets_single_column() {
        let s = toy_schema();
        let x = encode(&record("24", "A12", "1.5", 0), &s).unwrap();
        assert_eq!(x.as_slice(), &[24.0, 0.0, 1.0, 0.0, 0.0, 1.5]);
    }

    #[test]
    fn integer_passes_through_exactly() {
        let s = toy_schema();
        let x = encode(&record("24", "A11", "0", 0), &s).unwrap();
        assert_eq!(x[0], 24.0);
    }

    #[test]
    fn unknown_level_and_missing_feature_rejected() {
        let s = toy_schema();
        assert!(matches!(
            encode(&record("24", "A99", "0", 0), &s),
            Err(IngestError::UnknownLevel { .. })
        ));
        let mut r = record("24", "A11", "0", 0);
        r.values.remove("rate");
        assert!(matches!(
            encode(&r, &s),
            Err(IngestError::MissingFeature(_))
        ));
        assert!(matches!(
            encode(&record("-3", "A11", "0", 0), &s),
            Err(IngestError::BadNumeric { .. })
        ));
    }

    #[test]
    fn decode_inverts_encode() {
        let s = toy_schema();
        let r = record("24", "A14", "3.25", 1);
        let x = encode(&r, &s).unwrap();
        let decoded = decode(&x, &s).unwrap();
        assert_eq!(decoded, r.values);
    }

    #[test]
    fn decode_last_level_names_it() {
        let s = toy_schema();
        let x = EncodedVector(vec![12.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let decoded = decode(&x, &s).unwrap();
        assert_eq!(decoded["status"], "A14");
    }

    #[test]
    fn all_zero_group_fails_to_decode() {
        let s = toy_schema();
        let x = EncodedVector(vec![12.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            decode(&x, &s),
            Err(IngestError::NoActiveMember(g)) if g == "status"
        ));
    }

    #[test]
    fn split_sizes_exact_for_round_counts() {
        let s = toy_schema();
        let mut records = Vec::new();
        for i in 0..1000 {
            let label = if i < 300 { 1 } else { 0 };
            records.push(record("10", "A11", "0.5", label));
        }
        let parts = split(&records, &s, SplitRatios::DEFAULT, 7).unwrap();
        assert_eq!(parts.train.len(), 560);
        assert_eq!(parts.validation.len(), 140);
        assert_eq!(parts.test.len(), 300);
        // Stratified: the 30% positive rate carries into each part.
        let pos = |v: &[(EncodedVector, u8)]| v.iter().filter(|(_, y)| *y == 1).count();
        assert_eq!(pos(&parts.train), 168);
        assert_eq!(pos(&parts.validation), 42);
        assert_eq!(pos(&parts.test), 90);
    }

    #[test]
    fn split_is_deterministic() {
        let s = toy_schema();
        let records: Vec<RawRecord> = (0..10)
            .map(|i| record(&format!("{i}"), "A11", "0.5", (i % 2) as u8))
            .collect();
        let ratios = SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        };
        let a = split(&records, &s, ratios, 99).unwrap();
        let b = split(&records, &s, ratios, 99).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn degenerate_ratios_rejected() {
        let s = toy_schema();
        let records = vec![record("1", "A11", "0", 0)];
        let bad = SplitRatios {
            train: 0.5,
            validation: 0.5,
            test: 0.5,
        };
        assert!(matches!(
            split(&records, &s, bad, 1),
            Err(IngestError::BadRatios(_))
        ));
        assert!(matches!(
            split(&[], &s, SplitRatios::DEFAULT, 1),
            Err(IngestError::EmptyInput)
        ));
    }

    #[test]
    fn split_partitions_the_input() {
        let s = toy_schema();
        let records: Vec<RawRecord> = (0..37)
            .map(|i| record(&format!("{i}"), "A12", "0.5", (i % 3 == 0) as u8))
            .collect();
        let parts = split(&records, &s, SplitRatios::DEFAULT, 3).unwrap();
        let total = parts.train.len() + parts.validation.len() + parts.test.len();
        assert_eq!(total, records.len());
        // Union as a multiset of encoded vectors equals the encoded input.
        let mut got: Vec<Vec<u64>> = parts
            .train
            .iter()
            .chain(&parts.validation)
            .chain(&parts.test)
            .map(|(x, _)| x.0.iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut want: Vec<Vec<u64>> = records
            .iter()
            .map(|r| {
                encode(r, &s)
                    .unwrap()
                    .0
                    .iter()
                    .map(|v| v.to_bits())
                    .collect()
            })
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }
}
