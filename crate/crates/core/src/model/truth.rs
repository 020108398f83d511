use serde::{Deserialize, Serialize, Serializer};

use crate::space::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl CompareOp {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Eq => lhs == rhs,
            CompareOp::Ge => lhs >= rhs,
            CompareOp::Gt => lhs > rhs,
        }
    }
}

/// `x[feature] op value`; categorical values are level indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub feature: usize,
    pub op: CompareOp,
    pub value: f64,
}

/// A conjunction of conditions labelled by humans.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub conditions: Vec<Condition>,
    pub label: usize,
}

impl Region {
    pub fn contains(&self, x: &Point) -> bool {
        self.conditions.iter().all(|c| c.op.holds(x[c.feature], c.value))
    }
}

/// Partial labelling oracle: the first matching region wins, then the
/// default; without a default the ground truth is undefined outside all
/// regions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    regions: Vec<Region>,
    default: Option<usize>,
}

impl GroundTruth {
    pub fn new(regions: Vec<Region>, default: Option<usize>) -> Self {
        Self { regions, default }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn default_label(&self) -> Option<usize> {
        self.default
    }

    pub fn label(&self, x: &Point) -> Option<usize> {
        self.regions
            .iter()
            .find(|r| r.contains(x))
            .map(|r| r.label)
            .or(self.default)
    }
}

/// Three-valued misclassification flag. Serialized as `true`, `false` or
/// `"unknown"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TriState {
    False,
    True,
    Unknown,
}

impl TriState {
    pub fn is_true(self) -> bool {
        self == TriState::True
    }
}

impl From<bool> for TriState {
    fn from(b: bool) -> Self {
        if b {
            TriState::True
        } else {
            TriState::False
        }
    }
}

impl Serialize for TriState {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TriState::True => s.serialize_bool(true),
            TriState::False => s.serialize_bool(false),
            TriState::Unknown => s.serialize_str("unknown"),
        }
    }
}
