//! Realistic-value projection and editability enforcement.
//!
//! Every attack routes candidate vectors through [`sanitize`] before the
//! model sees them: non-editable components are restored to the original
//! transaction first, then each component is corrected to its feature type's
//! domain. Editability first, so a restored one-hot group arrives intact and
//! the argmax re-normalization cannot disturb it.

use crate::ingest::{EncodedVector, VALUE_EPS};
use crate::schema::{FeatureType, RawKind, Schema};

/// Outcome of a realistic projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    pub corrected: EncodedVector,
    /// Number of components the projection changed.
    pub n_corrections: usize,
}

/// Corrects every component to its type's domain.
///
/// Booleans snap to {0,1} at 0.5; integers round; positive types clamp below
/// at 0; floats pass through; each one-hot group becomes 1 at its maximum
/// member (ties to the lowest column index) and 0 elsewhere. Idempotent.
pub fn project_realistic(x: &[f64], schema: &Schema) -> ProjectionReport {
    assert_eq!(x.len(), schema.m(), "projection dimension mismatch");
    let mut out = x.to_vec();
    for rf in schema.raw_features() {
        match &rf.kind {
            RawKind::Scalar(t) => {
                let i = rf.columns[0];
                out[i] = correct_scalar(out[i], t);
            }
            RawKind::Categorical { .. } => {
                let mut best = rf.columns[0];
                for &c in &rf.columns[1..] {
                    if out[c] > out[best] {
                        best = c;
                    }
                }
                for &c in &rf.columns {
                    out[c] = if c == best { 1.0 } else { 0.0 };
                }
            }
        }
    }
    let n_corrections = x
        .iter()
        .zip(&out)
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    ProjectionReport {
        corrected: EncodedVector(out),
        n_corrections,
    }
}

fn correct_scalar(v: f64, t: &FeatureType) -> f64 {
    match t {
        FeatureType::Boolean => {
            if v <= 0.5 {
                0.0
            } else {
                1.0
            }
        }
        FeatureType::Integer => v.round(),
        FeatureType::PositiveInteger => {
            if v >= 0.0 {
                v.round()
            } else {
                0.0
            }
        }
        FeatureType::PositiveFloat => {
            if v < 0.0 {
                0.0
            } else {
                v
            }
        }
        FeatureType::Float => v,
        FeatureType::OneHotMember { .. } => unreachable!("groups are corrected together"),
    }
}

/// Restores components the attacker cannot touch: output is `candidate` where
/// `editable` is set and `original` elsewhere.
pub fn enforce_editability(candidate: &[f64], original: &EncodedVector, editable: &[bool]) -> Vec<f64> {
    assert_eq!(candidate.len(), original.len(), "editability dimension mismatch");
    assert_eq!(candidate.len(), editable.len(), "editability dimension mismatch");
    candidate
        .iter()
        .zip(original.as_slice())
        .zip(editable)
        .map(|((&c, &o), &e)| if e { c } else { o })
        .collect()
}

/// Editability restoration followed by realistic projection.
pub fn sanitize(candidate: &[f64], original: &EncodedVector, schema: &Schema) -> EncodedVector {
    let restored = enforce_editability(candidate, original, &schema.editability_vector());
    project_realistic(&restored, schema).corrected
}

/// Counts domain violations; a broken one-hot group counts once.
pub fn count_unrealistic(x: &[f64], schema: &Schema) -> usize {
    assert_eq!(x.len(), schema.m(), "count dimension mismatch");
    let mut count = 0;
    for rf in schema.raw_features() {
        match &rf.kind {
            RawKind::Scalar(t) => {
                if scalar_violates(x[rf.columns[0]], t) {
                    count += 1;
                }
            }
            RawKind::Categorical { .. } => {
                let mut ones = 0usize;
                let mut bad = false;
                for &c in &rf.columns {
                    let v = x[c];
                    if (v - 1.0).abs() <= VALUE_EPS {
                        ones += 1;
                    } else if v.abs() > VALUE_EPS {
                        bad = true;
                    }
                }
                if bad || ones != 1 {
                    count += 1;
                }
            }
        }
    }
    count
}

fn scalar_violates(v: f64, t: &FeatureType) -> bool {
    match t {
        FeatureType::Boolean => v.abs() > VALUE_EPS && (v - 1.0).abs() > VALUE_EPS,
        FeatureType::Integer => (v - v.round()).abs() > VALUE_EPS,
        FeatureType::PositiveInteger => v < 0.0 || (v - v.round()).abs() > VALUE_EPS,
        FeatureType::PositiveFloat => v < 0.0,
        FeatureType::Float => !v.is_finite(),
        FeatureType::OneHotMember { .. } => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSpec;

    /// bool, posint, int, posfloat, and a 3-level group: one of every kind.
    fn toy_schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("flag", FeatureType::Boolean, true, false),
                FeatureSpec::numeric("count", FeatureType::PositiveInteger, true, false),
                FeatureSpec::numeric("delta", FeatureType::Integer, true, false),
                FeatureSpec::numeric("amount", FeatureType::PositiveFloat, true, false),
                FeatureSpec::one_hot("kind", "a", true, false),
                FeatureSpec::one_hot("kind", "b", true, false),
                FeatureSpec::one_hot("kind", "c", true, false),
            ],
            "y",
        )
        .unwrap()
    }

    fn schema_with_frozen_group() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("n", FeatureType::Integer, true, false),
                FeatureSpec::one_hot("kind", "a", false, false),
                FeatureSpec::one_hot("kind", "b", false, false),
                FeatureSpec::one_hot("kind", "c", false, false),
            ],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn scalar_corrections_follow_type_table() {
        let s = toy_schema();
        let r = project_realistic(&[0.3, -2.4, 3.6, -1.0, 0.2, 0.7, 0.4], &s);
        assert_eq!(r.corrected.as_slice(), &[0.0, 0.0, 4.0, 0.0, 0.0, 1.0, 0.0]);
        let r = project_realistic(&[0.51, 2.0, -3.0, 1.5, 1.0, 0.0, 0.0], &s);
        assert_eq!(r.corrected[0], 1.0);
        assert_eq!(r.corrected[2], -3.0);
    }

    #[test]
    fn valid_vector_is_a_fixed_point() {
        let s = toy_schema();
        let x = [1.0, 2.0, -5.0, 3.25, 0.0, 0.0, 1.0];
        let r = project_realistic(&x, &s);
        assert_eq!(r.n_corrections, 0);
        assert_eq!(r.corrected.as_slice(), &x);
        // Idempotence on arbitrary input.
        let once = project_realistic(&[0.4, -1.2, 2.7, -0.1, 0.9, 0.9, 0.2], &s).corrected;
        let twice = project_realistic(once.as_slice(), &s).corrected;
        assert_eq!(once, twice);
    }

    #[test]
    fn editability_mask_restores_frozen_components() {
        let original = EncodedVector(vec![1.0, 2.0, 3.0]);
        let out = enforce_editability(&[5.0, 6.0, 7.0], &original, &[true, false, true]);
        assert_eq!(out, vec![5.0, 2.0, 7.0]);
        let all = enforce_editability(&[5.0, 6.0, 7.0], &original, &[true, true, true]);
        assert_eq!(all, vec![5.0, 6.0, 7.0]);
        let none = enforce_editability(&[5.0, 6.0, 7.0], &original, &[false, false, false]);
        assert_eq!(none, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sanitize_restores_noneditable_group_wholesale() {
        let s = schema_with_frozen_group();
        // Original sits on level c; the candidate pushes level a.
        let original = EncodedVector(vec![4.0, 0.0, 0.0, 1.0]);
        let out = sanitize(&[4.3, 0.9, 0.1, 0.0], &original, &s);
        assert_eq!(out.as_slice(), &[4.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn sanitize_is_idempotent() {
        let s = toy_schema();
        let original = EncodedVector(vec![1.0, 3.0, 2.0, 0.5, 0.0, 1.0, 0.0]);
        let cand = [0.2, -4.0, 2.6, -0.5, 0.3, 0.2, 0.9];
        let once = sanitize(&cand, &original, &s);
        let twice = sanitize(once.as_slice(), &original, &s);
        assert_eq!(once, twice);
        assert_eq!(count_unrealistic(once.as_slice(), &s), 0);
    }

    #[test]
    fn violation_counting_by_kind() {
        let s = toy_schema();
        assert_eq!(count_unrealistic(&[1.0, 2.0, -1.0, 0.0, 0.0, 1.0, 0.0], &s), 0);
        // Boolean at 0.3 and a negative posfloat: two violations.
        assert_eq!(count_unrealistic(&[0.3, 2.0, -1.0, -1.0, 0.0, 1.0, 0.0], &s), 2);
        // A half-hot group counts once however many members are off.
        assert_eq!(count_unrealistic(&[0.0, 2.0, 0.0, 0.0, 0.5, 0.5, 0.0], &s), 1);
    }

    #[test]
    fn violation_kinds_enumerated_on_toy_schema() {
        let s = toy_schema();
        let valid = [1.0, 2.0, -1.0, 0.25, 0.0, 0.0, 1.0];
        let cases: Vec<(usize, f64)> = vec![
            (0, 0.4),  // boolean off-lattice
            (1, -3.0), // posint negative
            (2, 2.5),  // int fractional
            (3, -0.2), // posfloat negative
        ];
        for (idx, bad) in cases {
            let mut x = valid;
            x[idx] = bad;
            assert_eq!(count_unrealistic(&x, &s), 1, "component {idx}");
        }
        // Group violations: none hot, two hot, off-lattice member.
        for group in [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.3, 1.0]] {
            let mut x = valid;
            x[4..7].copy_from_slice(&group);
            assert_eq!(count_unrealistic(&x, &s), 1, "group {group:?}");
        }
    }
}
