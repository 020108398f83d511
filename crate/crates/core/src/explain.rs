//! Rendering candidates as explanations, choosing among them, and the report
//! document shared by all commands.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{CausalError, CausalGraph, CeClass};
use crate::model::TriState;
use crate::solve::{Candidate, Reason};
use crate::space::{distance_unchecked, DistanceMeasure, FeatureValue, OutputSpace, Point, PointMap, Schema};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("nothing changed, so there is nothing to explain")]
    EmptyDelta,
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error(transparent)]
    Causal(#[from] CausalError),
}

/// One changed feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Change {
    pub feature: String,
    pub from: FeatureValue,
    pub to: FeatureValue,
    /// Signed numeric difference; absent for categorical features.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub change: Option<f64>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub unit: String,
}

/// Per-feature changes from `x` to `x_cf`, in schema order, zero entries omitted.
pub fn changes(schema: &Schema, x: &Point, x_cf: &Point) -> Vec<Change> {
    schema
        .features()
        .iter()
        .enumerate()
        .filter(|(i, _)| x[*i] != x_cf[*i])
        .map(|(i, f)| {
            let value = |v: f64| {
                if f.is_categorical() {
                    FeatureValue::Level(schema.display_value(i, v))
                } else {
                    FeatureValue::Number(v)
                }
            };
            Change {
                feature: f.name.clone(),
                from: value(x[i]),
                to: value(x_cf[i]),
                change: (!f.is_categorical()).then(|| x_cf[i] - x[i]),
                unit: f.unit.clone(),
            }
        })
        .collect()
}

/// Number of changed features.
pub fn sparsity(delta: &[Change]) -> usize {
    delta.iter().filter(|c| c.change != Some(0.0) && c.from != c.to).count()
}

/// Rounds away float noise such as `0.30000000000000004`.
fn format_magnitude(v: f64) -> String {
    let r = (v.abs() * 1e9).round() / 1e9;
    format!("{r}")
}

fn level(v: &FeatureValue) -> String {
    match v {
        FeatureValue::Level(s) => s.clone(),
        FeatureValue::Number(n) => format!("{n}"),
    }
}

/// Renders the counterfactual conditional. Clauses are ordered by the size of
/// the change relative to the feature scale, largest first.
pub fn verbalize(delta: &[Change], schema: &Schema, outcome: &str, subject: &str) -> Result<String, ExplainError> {
    let mut clauses = Vec::with_capacity(delta.len());
    for c in delta.iter().filter(|c| c.change != Some(0.0) && c.from != c.to) {
        let i = schema
            .index_of(&c.feature)
            .ok_or_else(|| ExplainError::UnknownFeature(c.feature.clone()))?;
        let (weight, text) = match c.change {
            Some(d) => (
                d.abs() / schema.scale(i),
                format!(
                    "{subject}'s {} was {}{} {}",
                    c.feature,
                    format_magnitude(d),
                    c.unit,
                    if d > 0.0 { "higher" } else { "lower" }
                ),
            ),
            None => (
                1.0 / schema.scale(i),
                format!(
                    "{subject}'s {} was {} instead of {}",
                    c.feature,
                    level(&c.to),
                    level(&c.from)
                ),
            ),
        };
        clauses.push((weight, i, text));
    }
    if clauses.is_empty() {
        return Err(ExplainError::EmptyDelta);
    }
    clauses.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let body: Vec<String> = clauses.into_iter().map(|c| c.2).collect();
    Ok(format!(
        "If {}, the outcome would have been {outcome}.",
        body.join(" and ")
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub subject: String,
    pub original: PointMap,
    pub counterfactual: PointMap,
    pub delta: Vec<Change>,
    pub text: String,
    pub outcome: String,
    /// Present when a causal graph is configured.
    pub ce_class: Option<CeClass>,
    pub imperceptible: Option<bool>,
    pub adversarial: TriState,
    pub input_distance: f64,
    pub objective: f64,
    pub sparsity: usize,
    #[serde(skip)]
    pub point: Point,
}

/// What is needed to turn a candidate into an explanation.
#[derive(Debug, Clone, Copy)]
pub struct Explainer<'a> {
    pub schema: &'a Schema,
    pub output: &'a OutputSpace,
    pub graph: Option<&'a CausalGraph>,
    pub subject: &'a str,
}

impl Explainer<'_> {
    pub fn explain(&self, x: &Point, c: &Candidate) -> Result<Explanation, ExplainError> {
        let delta = changes(self.schema, x, &c.point);
        let outcome = self.output.label(c.predicted).to_string();
        let text = verbalize(&delta, self.schema, &outcome, self.subject)?;
        let (ce_class, imperceptible) = match self.graph {
            Some(g) => {
                let target = g.output()?;
                let class = g.classify_counterfactual(self.schema, x, &c.point, target)?;
                let imp = class.relevant_changed.is_empty();
                (Some(class), Some(imp))
            }
            None => (None, None),
        };
        Ok(Explanation {
            subject: self.subject.to_string(),
            original: self.schema.decode(x),
            counterfactual: self.schema.decode(&c.point),
            sparsity: sparsity(&delta),
            delta,
            text,
            outcome,
            ce_class,
            imperceptible,
            adversarial: c.adversarial,
            input_distance: c.input_distance,
            objective: c.objective,
            point: c.point.clone(),
        })
    }

    pub fn explain_all(&self, x: &Point, cands: &[Candidate]) -> Result<Vec<Explanation>, ExplainError> {
        cands.iter().map(|c| self.explain(x, c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Closest,
    Diverse,
}

fn closest_cmp(a: &Explanation, b: &Explanation) -> Ordering {
    a.objective
        .total_cmp(&b.objective)
        .then(a.sparsity.cmp(&b.sparsity))
        .then_with(|| a.point.lex_cmp(&b.point))
}

/// Picks at most `k` explanations. `Closest` ranks by objective, then sparsity,
/// then point order. `Diverse` starts from the closest and greedily adds the
/// explanation farthest from everything already chosen.
pub fn select_candidates(
    mut list: Vec<Explanation>,
    k: usize,
    policy: Policy,
    schema: &Schema,
    measure: &DistanceMeasure,
) -> Vec<Explanation> {
    list.sort_by(closest_cmp);
    if policy == Policy::Closest || list.len() <= k {
        list.truncate(k);
        return list;
    }
    let mut chosen = vec![list.remove(0)];
    while chosen.len() < k && !list.is_empty() {
        let spread = |e: &Explanation| {
            chosen
                .iter()
                .map(|c| distance_unchecked(schema, measure, &c.point, &e.point))
                .fold(f64::INFINITY, f64::min)
        };
        let mut best = 0;
        let mut best_spread = spread(&list[0]);
        for (i, e) in list.iter().enumerate().skip(1) {
            let s = spread(e);
            if s > best_spread {
                best = i;
                best_spread = s;
            }
        }
        chosen.push(list.remove(best));
    }
    chosen
}

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub evaluations: u64,
    /// `None` when timing is disabled for reproducible output.
    pub wall_ms: Option<u64>,
}

/// Top-level document printed by every command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report<T> {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub config_digest: Option<String>,
    pub results: Vec<T>,
    pub stats: Stats,
    pub violations: Vec<serde_json::Value>,
    pub reason: Option<Reason>,
}

impl<T: Serialize> Report<T> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are serializable");
        s.push('\n');
        s
    }
}

pub fn build_report<T>(
    command: &str,
    seed: u64,
    config_digest: Option<String>,
    results: Vec<T>,
    stats: Stats,
    reason: Option<Reason>,
) -> Report<T> {
    Report {
        version: REPORT_VERSION,
        command: command.to_string(),
        seed,
        config_digest,
        results,
        stats,
        violations: Vec::new(),
        reason,
    }
}
