//! Input and output spaces: feature schemas, points, grid enumeration and
//! distance measures.
//!
//! Points are stored as dense `f64` vectors aligned with the schema's feature
//! order. Categorical features hold the index of their level. The external
//! (JSON) form of a point is a [`PointMap`] keyed by feature name.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of points produced by [`enumerate_grid`].
pub const DEFAULT_GRID_CAP: u64 = 10_000_000;

/// Environment variable overriding [`DEFAULT_GRID_CAP`].
pub const GRID_CAP_ENV: &str = "CFX_GRID_CAP";

const STEP_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("duplicate feature name {0}")]
    DuplicateFeature(String),
    #[error("feature {name}: {reason}")]
    InvalidFeature { name: String, reason: String },
    #[error("grid cap exceeded: {size} points > cap {cap}")]
    GridCapExceeded { size: u128, cap: u64 },
    #[error("feature {0} is unbounded; cannot enumerate")]
    Unbounded(String),
    #[error("schema mismatch: expected {expected} values, got {actual}")]
    SchemaMismatch { expected: usize, actual: usize },
    #[error("invalid distance measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid output space: {0}")]
    InvalidOutputSpace(String),
    #[error("output representation mismatch: {0}")]
    RepresentationMismatch(String),
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error("invalid point: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidPoint(Vec<Violation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Integer,
    Categorical,
}

/// One column of the interpretable input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default = "default_true")]
    pub mutable: bool,
    /// Normalization divisor. Resolved by [`Schema::new`] when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Unit suffix used when rendering explanations, e.g. `€`.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub unit: String,
}

fn default_true() -> bool {
    true
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>, lo: f64, hi: f64, step: f64) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            lo: Some(lo),
            hi: Some(hi),
            step: Some(step),
            levels: Vec::new(),
            mutable: true,
            scale: None,
            unit: String::new(),
        }
    }

    pub fn integer(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self {
            kind: FeatureKind::Integer,
            ..Self::numeric(name, lo, hi, 1.0)
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            lo: None,
            hi: None,
            step: None,
            levels: levels.into_iter().map(Into::into).collect(),
            mutable: true,
            scale: None,
            unit: String::new(),
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = Some(scale);
        self
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn immutable(mut self) -> Self {
        self.mutable = false;
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    fn validate(&self) -> Result<(), SpaceError> {
        let bad = |reason: String| SpaceError::InvalidFeature {
            name: self.name.clone(),
            reason,
        };
        if self.name.is_empty() {
            return Err(bad("empty name".into()));
        }
        match self.kind {
            FeatureKind::Categorical => {
                if self.levels.is_empty() {
                    return Err(bad("categorical feature needs at least one level".into()));
                }
                for (i, level) in self.levels.iter().enumerate() {
                    if self.levels[..i].contains(level) {
                        return Err(bad(format!("duplicate level {level}")));
                    }
                }
            }
            FeatureKind::Numeric | FeatureKind::Integer => {
                if let (Some(lo), Some(hi)) = (self.lo, self.hi) {
                    if lo.is_nan() || hi.is_nan() {
                        return Err(bad("bounds must not be NaN".into()));
                    }
                    if lo > hi {
                        return Err(bad(format!("lo ({lo}) > hi ({hi})")));
                    }
                }
                if let Some(step) = self.step {
                    if !(step > 0.0 && step.is_finite()) {
                        return Err(bad(format!("step must be > 0, got {step}")));
                    }
                }
            }
        }
        if let Some(scale) = self.scale {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(bad(format!("scale must be > 0, got {scale}")));
            }
        }
        Ok(())
    }

    /// Grid values of this feature in ascending order. Categorical features
    /// yield their level indices.
    pub fn grid_values(&self) -> Result<Vec<f64>, SpaceError> {
        if self.is_categorical() {
            return Ok((0..self.levels.len()).map(|i| i as f64).collect());
        }
        let (lo, hi) = match (self.lo, self.hi) {
            (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() => (lo, hi),
            _ => return Err(SpaceError::Unbounded(self.name.clone())),
        };
        let step = self
            .effective_step()
            .ok_or_else(|| SpaceError::Unbounded(self.name.clone()))?;
        let count = ((hi - lo) / step + STEP_SLACK).floor() as u64 + 1;
        Ok((0..count).map(|i| lo + i as f64 * step).collect())
    }

    fn grid_len(&self) -> Result<u128, SpaceError> {
        if self.is_categorical() {
            return Ok(self.levels.len() as u128);
        }
        let (lo, hi) = match (self.lo, self.hi) {
            (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() => (lo, hi),
            _ => return Err(SpaceError::Unbounded(self.name.clone())),
        };
        let step = self
            .effective_step()
            .ok_or_else(|| SpaceError::Unbounded(self.name.clone()))?;
        Ok(((hi - lo) / step + STEP_SLACK).floor() as u128 + 1)
    }

    /// Step used for enumeration and snapping; integer features default to 1.
    pub fn effective_step(&self) -> Option<f64> {
        match self.kind {
            FeatureKind::Categorical => Some(1.0),
            FeatureKind::Integer => Some(self.step.unwrap_or(1.0)),
            FeatureKind::Numeric => self.step,
        }
    }

    /// Snap a continuous value to the nearest admissible value of this feature.
    pub fn project(&self, value: f64) -> f64 {
        if self.is_categorical() {
            let max = (self.levels.len() - 1) as f64;
            return value.round().clamp(0.0, max);
        }
        let lo = self.lo.unwrap_or(f64::NEG_INFINITY);
        let hi = self.hi.unwrap_or(f64::INFINITY);
        let mut v = value.clamp(lo, hi);
        if let (Some(step), true) = (self.effective_step(), lo.is_finite()) {
            let k = ((v - lo) / step).round();
            v = lo + k * step;
            if v > hi {
                v -= step;
            }
        } else if self.kind == FeatureKind::Integer {
            v = v.round();
        }
        v
    }

    /// Clamp to bounds, rounding integer features. No step snapping.
    pub fn clamp(&self, value: f64) -> f64 {
        match self.kind {
            FeatureKind::Categorical => self.project(value),
            FeatureKind::Integer => {
                let lo = self.lo.map_or(f64::NEG_INFINITY, f64::ceil);
                let hi = self.hi.map_or(f64::INFINITY, f64::floor);
                value.round().clamp(lo, hi)
            }
            FeatureKind::Numeric => value.clamp(self.lo.unwrap_or(f64::NEG_INFINITY), self.hi.unwrap_or(f64::INFINITY)),
        }
    }
}

/// Ordered feature list with resolved normalization scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    features: Vec<FeatureSpec>,
    scales: Vec<f64>,
}

impl Schema {
    /// Builds a schema, resolving missing scales from `data` (rows aligned with
    /// `features`): MAD of the column, then `hi - lo`, then 1.
    pub fn new(features: Vec<FeatureSpec>, data: Option<&[Point]>) -> Result<Self, SpaceError> {
        for (i, f) in features.iter().enumerate() {
            f.validate()?;
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(SpaceError::DuplicateFeature(f.name.clone()));
            }
        }
        let scales = features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.scale.unwrap_or_else(|| {
                    let column: Option<Vec<f64>> = data.map(|rows| rows.iter().map(|p| p[i]).collect());
                    default_scale(f, column.as_deref())
                })
            })
            .collect();
        Ok(Self { features, scales })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &FeatureSpec {
        &self.features[i]
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn scale(&self, i: usize) -> f64 {
        self.scales[i]
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Returns the feature list with every scale made explicit.
    pub fn resolved_features(&self) -> Vec<FeatureSpec> {
        self.features
            .iter()
            .zip(&self.scales)
            .map(|(f, &s)| f.clone().with_scale(s))
            .collect()
    }

    /// Violations of a dense point against this schema.
    pub fn check(&self, p: &Point) -> Vec<Violation> {
        if p.len() != self.len() {
            return vec![Violation::Arity {
                expected: self.len(),
                actual: p.len(),
            }];
        }
        self.features
            .iter()
            .zip(p.values())
            .filter_map(|(f, &v)| check_value(f, v))
            .collect()
    }

    /// Converts an external point into a dense one, failing with every violation.
    pub fn encode(&self, map: &PointMap) -> Result<Point, SpaceError> {
        let violations = validate_point(self, map);
        if !violations.is_empty() {
            return Err(SpaceError::InvalidPoint(violations));
        }
        let values = self
            .features
            .iter()
            .map(|f| match (&map[&f.name], f.kind) {
                (FeatureValue::Level(l), FeatureKind::Categorical) => {
                    f.levels.iter().position(|x| x == l).unwrap() as f64
                }
                (FeatureValue::Number(v), _) => *v,
                _ => unreachable!("validated above"),
            })
            .collect();
        Ok(Point::new(values))
    }

    pub fn decode(&self, p: &Point) -> PointMap {
        self.features
            .iter()
            .zip(p.values())
            .map(|(f, &v)| {
                let value = if f.is_categorical() {
                    FeatureValue::Level(f.levels[v as usize].clone())
                } else {
                    FeatureValue::Number(v)
                };
                (f.name.clone(), value)
            })
            .collect()
    }

    /// Human-readable rendering of a single feature value.
    pub fn display_value(&self, i: usize, v: f64) -> String {
        let f = &self.features[i];
        if f.is_categorical() {
            f.levels.get(v as usize).cloned().unwrap_or_else(|| format!("#{v}"))
        } else {
            format!("{v}")
        }
    }
}

/// MAD of `column`, falling back to the feature range and finally to 1.
pub fn default_scale(f: &FeatureSpec, column: Option<&[f64]>) -> f64 {
    if f.is_categorical() {
        return 1.0;
    }
    if let Some(col) = column.filter(|c| !c.is_empty()) {
        let mad = median_absolute_deviation(col);
        if mad > 0.0 && mad.is_finite() {
            return mad;
        }
    }
    match (f.lo, f.hi) {
        (Some(lo), Some(hi)) if (hi - lo) > 0.0 && (hi - lo).is_finite() => hi - lo,
        _ => 1.0,
    }
}

pub fn median_absolute_deviation(values: &[f64]) -> f64 {
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&dev)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Dense point aligned with a [`Schema`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Lexicographic total order over values (declaration order).
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Level(String),
}

/// External form of a point: feature name to value.
pub type PointMap = BTreeMap<String, FeatureValue>;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Missing { feature: String },
    Unknown { feature: String },
    BelowLo { feature: String, value: f64, lo: f64 },
    AboveHi { feature: String, value: f64, hi: f64 },
    NotInteger { feature: String, value: f64 },
    UnknownLevel { feature: String, level: String },
    WrongType { feature: String },
    NotFinite { feature: String },
    Arity { expected: usize, actual: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing { feature } => write!(f, "missing feature {feature}"),
            Violation::Unknown { feature } => write!(f, "unknown feature {feature}"),
            Violation::BelowLo { feature, value, lo } => write!(f, "{feature} below lo ({value} < {lo})"),
            Violation::AboveHi { feature, value, hi } => write!(f, "{feature} above hi ({value} > {hi})"),
            Violation::NotInteger { feature, value } => write!(f, "{feature} is not an integer ({value})"),
            Violation::UnknownLevel { feature, level } => write!(f, "{feature} has unknown level {level}"),
            Violation::WrongType { feature } => write!(f, "{feature} has the wrong value type"),
            Violation::NotFinite { feature } => write!(f, "{feature} is not finite"),
            Violation::Arity { expected, actual } => write!(f, "expected {expected} values, got {actual}"),
        }
    }
}

fn check_value(f: &FeatureSpec, v: f64) -> Option<Violation> {
    let feature = f.name.clone();
    if !v.is_finite() {
        return Some(Violation::NotFinite { feature });
    }
    if f.is_categorical() {
        if v.fract() != 0.0 || v < 0.0 || v as usize >= f.levels.len() {
            return Some(Violation::UnknownLevel {
                feature,
                level: format!("#{v}"),
            });
        }
        return None;
    }
    if let Some(lo) = f.lo.filter(|&lo| v < lo) {
        return Some(Violation::BelowLo { feature, value: v, lo });
    }
    if let Some(hi) = f.hi.filter(|&hi| v > hi) {
        return Some(Violation::AboveHi { feature, value: v, hi });
    }
    if f.kind == FeatureKind::Integer && v.fract() != 0.0 {
        return Some(Violation::NotInteger { feature, value: v });
    }
    None
}

/// Every bound, type and missing-feature violation of an external point.
pub fn validate_point(schema: &Schema, p: &PointMap) -> Vec<Violation> {
    let mut out = Vec::new();
    for f in schema.features() {
        match (p.get(&f.name), f.kind) {
            (None, _) => out.push(Violation::Missing {
                feature: f.name.clone(),
            }),
            (Some(FeatureValue::Level(level)), FeatureKind::Categorical) => {
                if !f.levels.contains(level) {
                    out.push(Violation::UnknownLevel {
                        feature: f.name.clone(),
                        level: level.clone(),
                    });
                }
            }
            (Some(FeatureValue::Number(v)), FeatureKind::Numeric | FeatureKind::Integer) => {
                out.extend(check_value(f, *v));
            }
            (Some(_), _) => out.push(Violation::WrongType {
                feature: f.name.clone(),
            }),
        }
    }
    for name in p.keys() {
        if schema.index_of(name).is_none() {
            out.push(Violation::Unknown { feature: name.clone() });
        }
    }
    out
}

/// Cartesian product of all feature grids, first feature varying slowest.
pub fn enumerate_grid(schema: &Schema, cap: u64) -> Result<Vec<Point>, SpaceError> {
    let mut size: u128 = 1;
    for f in schema.features() {
        size = size.saturating_mul(f.grid_len()?);
    }
    if size > cap as u128 {
        return Err(SpaceError::GridCapExceeded { size, cap });
    }
    let axes: Vec<Vec<f64>> = schema
        .features()
        .iter()
        .map(FeatureSpec::grid_values)
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(size as usize);
    let mut idx = vec![0usize; axes.len()];
    if axes.iter().any(Vec::is_empty) {
        return Ok(out);
    }
    loop {
        out.push(Point::new(idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect()));
        let mut d = axes.len();
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Grid cap from `CFX_GRID_CAP`, defaulting to [`DEFAULT_GRID_CAP`].
pub fn grid_cap_from_env() -> u64 {
    std::env::var(GRID_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_GRID_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceKind {
    L0,
    L1,
    L2,
    Linf,
    #[serde(rename = "weightedL1")]
    WeightedL1,
}

/// Parametric distance between two points of the same schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMeasure {
    pub kind: DistanceKind,
    /// Per-feature weights aligned with the schema (weightedL1 only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub respect_mutability: bool,
    #[serde(default)]
    pub normalize: bool,
}

impl DistanceMeasure {
    pub fn new(kind: DistanceKind) -> Self {
        Self {
            kind,
            weights: None,
            respect_mutability: false,
            normalize: false,
        }
    }

    pub fn normalized_l1() -> Self {
        Self::new(DistanceKind::L1).normalized()
    }

    pub fn weighted(weights: Vec<f64>) -> Self {
        Self {
            weights: Some(weights),
            ..Self::new(DistanceKind::WeightedL1)
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize = true;
        self
    }

    pub fn masked(mut self) -> Self {
        self.respect_mutability = true;
        self
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), SpaceError> {
        if let Some(w) = &self.weights {
            if w.len() != schema.len() {
                return Err(SpaceError::InvalidMeasure(format!(
                    "weights cover {} features, schema has {}",
                    w.len(),
                    schema.len()
                )));
            }
            if let Some((i, x)) = w.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
                return Err(SpaceError::InvalidMeasure(format!(
                    "weight for {} must be finite and >= 0, got {x}",
                    schema.feature(i).name
                )));
            }
        } else if self.kind == DistanceKind::WeightedL1 {
            return Err(SpaceError::InvalidMeasure("weightedL1 requires weights".into()));
        }
        Ok(())
    }

    /// Magnitude of the change in feature `i`, before weighting.
    fn component(&self, schema: &Schema, i: usize, a: f64, b: f64) -> f64 {
        let raw = if schema.feature(i).is_categorical() {
            if a == b {
                0.0
            } else {
                1.0
            }
        } else {
            (a - b).abs()
        };
        if self.normalize {
            raw / schema.scale(i)
        } else {
            raw
        }
    }
}

/// Distance between `x` and `x2`, or `+inf` when an immutable feature differs
/// under a masking measure.
pub fn distance(schema: &Schema, m: &DistanceMeasure, x: &Point, x2: &Point) -> Result<f64, SpaceError> {
    for p in [x, x2] {
        if p.len() != schema.len() {
            return Err(SpaceError::SchemaMismatch {
                expected: schema.len(),
                actual: p.len(),
            });
        }
    }
    Ok(distance_unchecked(schema, m, x, x2))
}

/// [`distance`] without arity checks; callers guarantee matching lengths.
pub fn distance_unchecked(schema: &Schema, m: &DistanceMeasure, x: &Point, x2: &Point) -> f64 {
    let n = schema.len();
    if m.respect_mutability && (0..n).any(|i| !schema.feature(i).mutable && x[i] != x2[i]) {
        return f64::INFINITY;
    }
    let comps = (0..n).map(|i| m.component(schema, i, x[i], x2[i]));
    match m.kind {
        DistanceKind::L0 => (0..n).filter(|&i| x[i] != x2[i]).count() as f64,
        DistanceKind::L1 => comps.sum(),
        DistanceKind::L2 => comps.map(|c| c * c).sum::<f64>().sqrt(),
        DistanceKind::Linf => comps.fold(0.0, f64::max),
        DistanceKind::WeightedL1 => {
            let w = m.weights.as_deref();
            comps
                .enumerate()
                .map(|(i, c)| {
                    let wi = w.map_or(1.0, |w| w[i]);
                    // 0 * inf is NaN; an unweighted change contributes nothing.
                    if wi == 0.0 {
                        0.0
                    } else {
                        wi * c
                    }
                })
                .sum()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    #[default]
    Label,
    ProbabilityVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpace {
    pub labels: Vec<String>,
    #[serde(default)]
    pub representation: Representation,
}

impl OutputSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, SpaceError> {
        let out = Self {
            labels: labels.into_iter().map(Into::into).collect(),
            representation: Representation::Label,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn with_representation(mut self, r: Representation) -> Self {
        self.representation = r;
        self
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        if self.labels.len() < 2 {
            return Err(SpaceError::InvalidOutputSpace("need at least 2 labels".into()));
        }
        for (i, l) in self.labels.iter().enumerate() {
            if self.labels[..i].contains(l) {
                return Err(SpaceError::InvalidOutputSpace(format!("duplicate label {l}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }
}

/// A value in the output space.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Label(usize),
    Probabilities(Vec<f64>),
}

impl Output {
    fn check(&self, o: &OutputSpace) -> Result<(), SpaceError> {
        match self {
            Output::Label(i) if *i < o.len() => Ok(()),
            Output::Label(i) => Err(SpaceError::InvalidOutputSpace(format!("label index {i} out of range"))),
            Output::Probabilities(p) => {
                if p.len() != o.len() {
                    return Err(SpaceError::InvalidOutputSpace(format!(
                        "probability vector has {} entries, expected {}",
                        p.len(),
                        o.len()
                    )));
                }
                let sum: f64 = p.iter().sum();
                if p.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(SpaceError::InvalidOutputSpace("not a probability vector".into()));
                }
                Ok(())
            }
        }
    }

    /// Lowest-index argmax for probability vectors.
    pub fn class(&self) -> usize {
        match self {
            Output::Label(i) => *i,
            Output::Probabilities(p) => argmax(p),
        }
    }
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Distance between a desired output `y` and an observed output `y2`.
///
/// Label representation: 0/1 indicator. Probability representation:
/// `1 - y2[c]` clamped to `[0, 1]`, where `c` is the class of `y`.
pub fn output_distance(o: &OutputSpace, y: &Output, y2: &Output) -> Result<f64, SpaceError> {
    y.check(o)?;
    y2.check(o)?;
    match (o.representation, y2) {
        (Representation::Label, Output::Label(b)) => Ok(if y.class() == *b { 0.0 } else { 1.0 }),
        (Representation::ProbabilityVector, Output::Probabilities(p)) => Ok((1.0 - p[y.class()]).clamp(0.0, 1.0)),
        (Representation::Label, Output::Probabilities(_)) => Err(SpaceError::RepresentationMismatch(
            "label space given a probability vector".into(),
        )),
        (Representation::ProbabilityVector, Output::Label(_)) => Err(SpaceError::RepresentationMismatch(
            "probability space given a bare label".into(),
        )),
    }
}
