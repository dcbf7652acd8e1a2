//! Dataset schema: per-column feature types, one-hot group membership, and the
//! editability / checked flags shared by every other module.
//!
//! The order of [`Schema::features`] is the canonical layout of every encoded
//! vector; nothing reorders columns at runtime. Flags are declared on raw
//! (pre-encoding) features in the schema file and inherited by all of their
//! encoded columns, so a one-hot group is always editable or checked as a
//! whole.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Domain of a single encoded column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureType {
    Boolean,
    Integer,
    PositiveInteger,
    Float,
    PositiveFloat,
    /// Member column of a one-hot encoded categorical feature.
    OneHotMember { group: String },
}

impl FeatureType {
    /// True for columns whose legal values form a finite set ({0,1}).
    pub fn is_discrete(&self) -> bool {
        matches!(self, FeatureType::Boolean | FeatureType::OneHotMember { .. })
    }
}

/// One encoded column: domain plus attacker-facing flags.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub ftype: FeatureType,
    pub editable: bool,
    pub checked: bool,
    /// Name of the raw (pre-encoding) feature this column came from.
    pub source_feature: String,
}

impl FeatureSpec {
    pub fn numeric(name: &str, ftype: FeatureType, editable: bool, checked: bool) -> Self {
        FeatureSpec {
            name: name.to_string(),
            ftype,
            editable,
            checked,
            source_feature: name.to_string(),
        }
    }

    /// Column for one level of a categorical feature. The encoded column is
    /// named `source=level`; that convention is what `decode` relies on.
    pub fn one_hot(source: &str, level: &str, editable: bool, checked: bool) -> Self {
        FeatureSpec {
            name: format!("{source}={level}"),
            ftype: FeatureType::OneHotMember {
                group: source.to_string(),
            },
            editable,
            checked,
            source_feature: source.to_string(),
        }
    }
}

/// How a raw feature maps onto encoded columns.
#[derive(Debug, Clone, PartialEq)]
pub enum RawKind {
    /// Single numeric/boolean column.
    Scalar(FeatureType),
    /// Contiguous block of one-hot columns, one per level (alphabetical).
    Categorical { levels: Vec<String> },
}

/// A raw (pre-encoding) feature and the encoded columns it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeature {
    pub name: String,
    /// Indices into the encoded layout, in order.
    pub columns: Vec<usize>,
    pub editable: bool,
    pub checked: bool,
    pub kind: RawKind,
}

impl RawFeature {
    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, RawKind::Categorical { .. })
    }
}

/// Validated dataset schema. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    features: Vec<FeatureSpec>,
    label_column: String,
    raw: Vec<RawFeature>,
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("i/o error reading schema: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate feature name: {0}")]
    DuplicateFeature(String),
    #[error("schema declares no features")]
    EmptyFeatureList,
    #[error("one-hot group {0} has inconsistent editable/checked flags")]
    InconsistentGroup(String),
    #[error("one-hot group {0} has fewer than 2 member columns")]
    DegenerateGroup(String),
    #[error("one-hot group {0} is not contiguous in the encoded layout")]
    FragmentedGroup(String),
    #[error("one-hot column {0} does not follow the `source=level` naming convention")]
    BadMemberName(String),
}

impl Schema {
    /// Validates the encoded-column list and builds the raw-feature index.
    pub fn new(features: Vec<FeatureSpec>, label_column: &str) -> Result<Schema, SchemaError> {
        if features.is_empty() {
            return Err(SchemaError::EmptyFeatureList);
        }
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.clone()) {
                return Err(SchemaError::DuplicateFeature(f.name.clone()));
            }
        }
        let raw = build_raw_index(&features)?;
        Ok(Schema {
            features,
            label_column: label_column.to_string(),
            raw,
        })
    }

    /// Encoded dimensionality m.
    pub fn m(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    /// Raw features in declaration order.
    pub fn raw_features(&self) -> &[RawFeature] {
        &self.raw
    }

    pub fn raw_feature(&self, name: &str) -> Option<&RawFeature> {
        self.raw.iter().find(|r| r.name == name)
    }

    /// Component i is true iff encoded column i is editable.
    pub fn editability_vector(&self) -> Vec<bool> {
        self.features.iter().map(|f| f.editable).collect()
    }

    /// Component i is true iff encoded column i is checked.
    pub fn checked_vector(&self) -> Vec<bool> {
        self.features.iter().map(|f| f.checked).collect()
    }

    /// Number of slots the unrealistic-value count ranges over: one per
    /// scalar column plus one per one-hot group.
    pub fn countable_slots(&self) -> usize {
        self.raw.len()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Schema, SchemaError> {
        let text = fs::read_to_string(path)?;
        Schema::parse(&text)
    }

    /// Parses the line-oriented schema format (see crate docs / README).
    pub fn parse(text: &str) -> Result<Schema, SchemaError> {
        let mut label_column: Option<String> = None;
        let mut features: Vec<FeatureSpec> = Vec::new();
        let mut current: Option<PendingFeature> = None;
        let mut current_line = 0usize;

        for (idx, raw_line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[feature]" {
                if let Some(p) = current.take() {
                    p.finish(current_line, &mut features)?;
                }
                current = Some(PendingFeature::default());
                current_line = lineno;
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| SchemaError::Parse {
                line: lineno,
                msg: format!("expected `key: value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            match (&mut current, key) {
                (None, "label") => label_column = Some(value.to_string()),
                (None, other) => {
                    return Err(SchemaError::Parse {
                        line: lineno,
                        msg: format!("`{other}` outside a [feature] section"),
                    })
                }
                (Some(p), "name") => p.name = Some(value.to_string()),
                (Some(p), "type") => p.ftype = Some(value.to_string()),
                (Some(p), "levels") => {
                    p.levels = Some(value.split_whitespace().map(str::to_string).collect())
                }
                (Some(p), "editable") => p.editable = Some(parse_bool(value, lineno)?),
                (Some(p), "checked") => p.checked = Some(parse_bool(value, lineno)?),
                (Some(_), other) => {
                    return Err(SchemaError::Parse {
                        line: lineno,
                        msg: format!("unknown feature field `{other}`"),
                    })
                }
            }
        }
        if let Some(p) = current.take() {
            p.finish(current_line, &mut features)?;
        }
        let label = label_column.ok_or(SchemaError::Parse {
            line: 0,
            msg: "missing top-level `label:` line".to_string(),
        })?;
        Schema::new(features, &label)
    }

    /// Serializes to the same format `parse` reads. `load(write(s)) == s`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("label: {}\n", self.label_column));
        for rf in &self.raw {
            out.push('\n');
            out.push_str("[feature]\n");
            out.push_str(&format!("name: {}\n", rf.name));
            match &rf.kind {
                RawKind::Scalar(t) => {
                    out.push_str(&format!("type: {}\n", type_token(t)));
                }
                RawKind::Categorical { levels } => {
                    out.push_str("type: cat\n");
                    out.push_str(&format!("levels: {}\n", levels.join(" ")));
                }
            }
            out.push_str(&format!("editable: {}\n", rf.editable));
            out.push_str(&format!("checked: {}\n", rf.checked));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SchemaError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Loads and validates a schema file.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema, SchemaError> {
    Schema::load(path)
}

#[derive(Default)]
struct PendingFeature {
    name: Option<String>,
    ftype: Option<String>,
    levels: Option<Vec<String>>,
    editable: Option<bool>,
    checked: Option<bool>,
}

impl PendingFeature {
    fn finish(self, line: usize, out: &mut Vec<FeatureSpec>) -> Result<(), SchemaError> {
        let err = |msg: String| SchemaError::Parse { line, msg };
        let name = self.name.ok_or_else(|| err("feature missing `name`".into()))?;
        let ftype = self.ftype.ok_or_else(|| err(format!("feature {name} missing `type`")))?;
        let editable = self
            .editable
            .ok_or_else(|| err(format!("feature {name} missing `editable`")))?;
        let checked = self
            .checked
            .ok_or_else(|| err(format!("feature {name} missing `checked`")))?;
        match ftype.as_str() {
            "cat" => {
                let mut levels = self
                    .levels
                    .ok_or_else(|| err(format!("categorical feature {name} missing `levels`")))?;
                if levels.len() < 2 {
                    return Err(SchemaError::DegenerateGroup(name));
                }
                // Expansion order is alphabetical by level code regardless of
                // the order levels were written in.
                levels.sort();
                for level in &levels {
                    out.push(FeatureSpec::one_hot(&name, level, editable, checked));
                }
            }
            token => {
                if self.levels.is_some() {
                    return Err(err(format!("non-categorical feature {name} lists levels")));
                }
                let t = scalar_type(token)
                    .ok_or_else(|| err(format!("unknown feature type `{token}`")))?;
                out.push(FeatureSpec::numeric(&name, t, editable, checked));
            }
        }
        Ok(())
    }
}

fn parse_bool(token: &str, line: usize) -> Result<bool, SchemaError> {
    match token {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(SchemaError::Parse {
            line,
            msg: format!("expected true/false, got `{other}`"),
        }),
    }
}

fn scalar_type(token: &str) -> Option<FeatureType> {
    Some(match token {
        "bool" => FeatureType::Boolean,
        "int" => FeatureType::Integer,
        "posint" => FeatureType::PositiveInteger,
        "float" => FeatureType::Float,
        "posfloat" => FeatureType::PositiveFloat,
        _ => return None,
    })
}

fn type_token(t: &FeatureType) -> &'static str {
    match t {
        FeatureType::Boolean => "bool",
        FeatureType::Integer => "int",
        FeatureType::PositiveInteger => "posint",
        FeatureType::Float => "float",
        FeatureType::PositiveFloat => "posfloat",
        FeatureType::OneHotMember { .. } => unreachable!("one-hot members are written as cat"),
    }
}

fn build_raw_index(features: &[FeatureSpec]) -> Result<Vec<RawFeature>, SchemaError> {
    // Group columns by source feature, preserving first-appearance order and
    // requiring one-hot groups to be contiguous.
    let mut order: Vec<String> = Vec::new();
    let mut columns: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, f) in features.iter().enumerate() {
        if !columns.contains_key(&f.source_feature) {
            order.push(f.source_feature.clone());
        }
        columns.entry(f.source_feature.clone()).or_default().push(i);
    }

    let mut raw = Vec::with_capacity(order.len());
    for source in order {
        let cols = columns.remove(&source).unwrap();
        let first = &features[cols[0]];
        let contiguous = cols.windows(2).all(|w| w[1] == w[0] + 1);
        if !contiguous {
            return Err(SchemaError::FragmentedGroup(source));
        }
        for &c in &cols {
            let f = &features[c];
            if f.editable != first.editable || f.checked != first.checked {
                return Err(SchemaError::InconsistentGroup(source));
            }
        }
        let kind = match &first.ftype {
            FeatureType::OneHotMember { group } => {
                if cols.len() < 2 {
                    return Err(SchemaError::DegenerateGroup(source));
                }
                let mut levels = Vec::with_capacity(cols.len());
                for &c in &cols {
                    let f = &features[c];
                    match &f.ftype {
                        FeatureType::OneHotMember { group: g } if g == group => {}
                        _ => return Err(SchemaError::InconsistentGroup(source)),
                    }
                    let level = f
                        .name
                        .strip_prefix(&format!("{source}="))
                        .filter(|l| !l.is_empty())
                        .ok_or_else(|| SchemaError::BadMemberName(f.name.clone()))?;
                    levels.push(level.to_string());
                }
                RawKind::Categorical { levels }
            }
            scalar => {
                if cols.len() != 1 {
                    return Err(SchemaError::InconsistentGroup(source));
                }
                RawKind::Scalar(scalar.clone())
            }
        };
        raw.push(RawFeature {
            name: source,
            columns: cols,
            editable: first.editable,
            checked: first.checked,
            kind,
        });
    }
    Ok(raw)
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Schema({} raw features, {} encoded columns)",
            self.raw.len(),
            self.features.len()
        )
    }
}
