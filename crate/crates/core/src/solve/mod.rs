//! Candidate generation for counterfactuals and adversarial examples.
//!
//! All solvers minimize `d(x, x') + lambda * d_out(f(x'), y') [+ gamma * penalty]`
//! over grid points of the schema. The brute-force solver is exact; the
//! gradient and genetic solvers are heuristics that are checked against it.

mod brute;
mod fgsm;
mod genetic;
mod gradient;

pub use brute::solve_bruteforce;
pub use fgsm::generate_fgsm;
pub use genetic::solve_genetic;
pub use gradient::solve_gradient;

use std::cell::Cell;
use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::plausibility_penalty;
use crate::model::{is_misclassified, Dataset, GroundTruth, Model, ModelError, TriState};
use crate::space::{
    distance_unchecked, output_distance, DistanceMeasure, Output, OutputSpace, Point, Representation, Schema,
    SpaceError,
};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("target class {0} equals the current prediction")]
    TargetIsCurrent(usize),
    #[error("target class {0} is out of range")]
    UnknownTarget(usize),
    #[error("model is not differentiable and finite differences are disabled")]
    NotDifferentiable,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Counterfactual,
    Adversarial,
}

/// Trade-off weight: a constant, or an increasing schedule that stops once
/// the target is reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Fixed(f64),
    Anneal,
}

pub const LAMBDA_START: f64 = 0.1;
pub const LAMBDA_FACTOR: f64 = 2.0;
pub const LAMBDA_MAX: f64 = 1_048_576.0;

impl Lambda {
    pub fn schedule(self) -> Vec<f64> {
        match self {
            Lambda::Fixed(l) => vec![l],
            Lambda::Anneal => std::iter::successors(Some(LAMBDA_START), |l| Some(l * LAMBDA_FACTOR))
                .take_while(|l| *l <= LAMBDA_MAX)
                .collect(),
        }
    }
}

impl Serialize for Lambda {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Lambda::Fixed(l) => s.serialize_f64(*l),
            Lambda::Anneal => s.serialize_str("anneal"),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(l) if l >= 0.0 && l.is_finite() => Ok(Lambda::Fixed(l)),
            Raw::Num(l) => Err(serde::de::Error::custom(format!("lambda must be >= 0, got {l}"))),
            Raw::Word(w) if w == "anneal" => Ok(Lambda::Anneal),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a number or \"anneal\", got {w}"
            ))),
        }
    }
}

/// Iteration and population limits shared by the heuristic solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    /// Gradient steps per lambda stage.
    pub max_iters: usize,
    pub restarts: usize,
    pub learning_rate: f64,
    /// Allow central differences for non-differentiable models.
    pub finite_differences: bool,
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_iters: 200,
            restarts: 4,
            learning_rate: 0.05,
            finite_differences: true,
            population: 64,
            generations: 200,
            mutation_rate: 0.2,
            crossover_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveRequest {
    pub x: Point,
    pub target: Option<usize>,
    pub measure: DistanceMeasure,
    pub lambda: Lambda,
    pub mode: Mode,
    /// Open-ball radius constraint.
    pub epsilon: Option<f64>,
    pub k: usize,
    pub seed: u64,
    pub budget: Budget,
    /// Weight of the distance-to-training-data penalty.
    pub plausibility_weight: f64,
}

impl SolveRequest {
    pub fn new(x: Point, measure: DistanceMeasure) -> Self {
        Self {
            x,
            target: None,
            measure,
            lambda: Lambda::Anneal,
            mode: Mode::Counterfactual,
            epsilon: None,
            k: 1,
            seed: 0,
            budget: Budget::default(),
            plausibility_weight: 0.0,
        }
    }

    pub fn target(mut self, t: usize) -> Self {
        self.target = Some(t);
        self
    }

    pub fn lambda(mut self, l: Lambda) -> Self {
        self.lambda = l;
        self
    }

    pub fn mode(mut self, m: Mode) -> Self {
        self.mode = m;
        self
    }

    pub fn epsilon(mut self, e: f64) -> Self {
        self.epsilon = Some(e);
        self
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Everything a solver needs to know about the classifier.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub schema: &'a Schema,
    pub model: &'a Model,
    pub ground_truth: &'a GroundTruth,
    pub output: &'a OutputSpace,
    pub training: Option<&'a Dataset>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub point: Point,
    /// `point - x`, per feature.
    pub delta: Vec<f64>,
    pub input_distance: f64,
    pub output_distance: f64,
    pub penalty: f64,
    pub lambda: f64,
    pub objective: f64,
    pub predicted: usize,
    pub adversarial: TriState,
}

impl Candidate {
    /// Ranking order: objective, then input distance, then point order.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then(self.input_distance.total_cmp(&other.input_distance))
            .then_with(|| self.point.lex_cmp(&other.point))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    /// No candidate satisfies the request's constraints.
    NoFeasibleCandidate,
    /// The objective has zero gradient at the start point.
    Stationary,
    /// The lambda schedule ended without reaching the target.
    TargetNotReached,
    /// The search never produced a new point.
    Stagnant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub candidates: Vec<Candidate>,
    /// Set when the list is empty or the search degenerated.
    pub reason: Option<Reason>,
    pub evaluations: u64,
}

/// Objective of `x2` relative to `x`.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    schema: &Schema,
    x: &Point,
    x2: &Point,
    target: &Output,
    observed: &Output,
    measure: &DistanceMeasure,
    output: &OutputSpace,
    lambda: f64,
) -> Result<f64, SpaceError> {
    let d = crate::space::distance(schema, measure, x, x2)?;
    let o = output_distance(output, target, observed)?;
    Ok(combine(d, lambda, o))
}

fn combine(d: f64, lambda: f64, out: f64) -> f64 {
    // lambda = 0 must not turn an infinite or NaN-free term into NaN.
    if lambda == 0.0 {
        d
    } else {
        d + lambda * out
    }
}

/// Shared per-request evaluation state.
pub(crate) struct Evaluator<'a> {
    pub problem: Problem<'a>,
    pub req: &'a SolveRequest,
    pub current: usize,
    evaluations: Cell<u64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: Problem<'a>, req: &'a SolveRequest) -> Result<Self, SolveError> {
        if req.k == 0 {
            return Err(SolveError::InvalidRequest("k must be >= 1".into()));
        }
        if let Some(e) = req.epsilon {
            if !(e > 0.0) {
                return Err(SolveError::InvalidRequest(format!("epsilon must be > 0, got {e}")));
            }
        }
        req.measure.validate(problem.schema)?;
        let violations = problem.schema.check(&req.x);
        if !violations.is_empty() {
            return Err(SpaceError::InvalidPoint(violations).into());
        }
        let current = problem.model.predict(&req.x);
        if let Some(t) = req.target {
            if t >= problem.model.n_classes() {
                return Err(SolveError::UnknownTarget(t));
            }
            if t == current {
                return Err(SolveError::TargetIsCurrent(t));
            }
        }
        Ok(Self {
            problem,
            req,
            current,
            evaluations: Cell::new(0),
        })
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.get()
    }

    /// Class used for gradients: the target, or the likeliest other class.
    pub fn gradient_target(&self, at: &Point) -> usize {
        self.req.target.unwrap_or_else(|| {
            let p = self.problem.model.predict_proba(at);
            let mut best = usize::from(self.current == 0);
            for (i, v) in p.iter().enumerate() {
                if i != self.current && *v > p[best] {
                    best = i;
                }
            }
            best
        })
    }

    fn out_distance(&self, predicted: usize, proba: Option<&[f64]>) -> f64 {
        match (self.problem.output.representation, proba) {
            (Representation::ProbabilityVector, Some(p)) => match self.req.target {
                Some(t) => (1.0 - p[t]).clamp(0.0, 1.0),
                None => p[self.current].clamp(0.0, 1.0),
            },
            _ => match self.req.target {
                Some(t) => f64::from(u8::from(predicted != t)),
                None => f64::from(u8::from(predicted == self.current)),
            },
        }
    }

    pub fn evaluate(&self, point: Point, lambda: f64) -> Candidate {
        self.evaluations.set(self.evaluations.get() + 1);
        let p = self.problem;
        let predicted = p.model.predict(&point);
        let proba =
            (p.output.representation == Representation::ProbabilityVector).then(|| p.model.predict_proba(&point));
        let output_distance = self.out_distance(predicted, proba.as_deref());
        let input_distance = distance_unchecked(p.schema, &self.req.measure, &self.req.x, &point);
        let penalty = match p.training {
            Some(data) if self.req.plausibility_weight > 0.0 && !data.is_empty() => {
                plausibility_penalty(p.schema, &point, data, &self.req.measure).unwrap_or(0.0)
            }
            _ => 0.0,
        };
        let mut objective = combine(input_distance, lambda, output_distance);
        if self.req.plausibility_weight > 0.0 {
            objective += self.req.plausibility_weight * penalty;
        }
        let adversarial = if predicted == self.current {
            TriState::False
        } else {
            is_misclassified(p.model, p.ground_truth, &point)
        };
        let delta = point
            .values()
            .iter()
            .zip(self.req.x.values())
            .map(|(a, b)| a - b)
            .collect();
        Candidate {
            point,
            delta,
            input_distance,
            output_distance,
            penalty,
            lambda,
            objective,
            predicted,
            adversarial,
        }
    }

    /// Whether the candidate reaches the requested class (or any other class).
    pub fn reaches_target(&self, c: &Candidate) -> bool {
        match self.req.target {
            Some(t) => c.predicted == t,
            None => c.predicted != self.current,
        }
    }

    /// Hard constraints: not the original point, finite objective, inside the
    /// open epsilon-ball and, for attacks, a misclassified alternative.
    pub fn feasible(&self, c: &Candidate) -> bool {
        if c.point == self.req.x || !c.objective.is_finite() {
            return false;
        }
        if let Some(e) = self.req.epsilon {
            if !(c.input_distance < e) {
                return false;
            }
        }
        match self.req.mode {
            Mode::Counterfactual => true,
            Mode::Adversarial => c.adversarial.is_true() && self.reaches_target(c),
        }
    }
}

/// Sorts, removes duplicate points and truncates to `k`.
pub(crate) fn rank(mut cands: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    cands.sort_by(Candidate::rank_cmp);
    cands.dedup_by(|a, b| a.point == b.point);
    if cands.len() > 1 {
        // Equal points may be non-adjacent when evaluated under different lambdas.
        let mut seen: Vec<Point> = Vec::with_capacity(cands.len());
        cands.retain(|c| {
            if seen.contains(&c.point) {
                false
            } else {
                seen.push(c.point.clone());
                true
            }
        });
    }
    cands.truncate(k);
    cands
}

/// Snaps every feature to its grid and bounds.
pub(crate) fn project(schema: &Schema, z: &[f64]) -> Point {
    Point::new(schema.features().iter().zip(z).map(|(f, v)| f.project(*v)).collect())
}
