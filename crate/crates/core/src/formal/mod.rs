//! Alternative, counterfactual and adversarial sets on enumerable input
//! spaces, with exhaustive checks of their inclusion relations.
//!
//! Every set is computed by scanning the full grid, so the results are exact
//! for the finite space. Sets are returned in grid (lexicographic) order.

mod random;

pub use random::{random_family, random_instance, Instance};

use serde::Serialize;
use thiserror::Error;

use crate::model::{GroundTruth, Model, TriState};
use crate::space::{distance_unchecked, enumerate_grid, grid_cap_from_env, DistanceMeasure, Point, Schema, SpaceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormalError {
    #[error("target class {0} equals the current prediction")]
    TargetIsCurrent(usize),
    #[error("target class {0} is out of range")]
    UnknownTarget(usize),
    #[error("epsilon must be > 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("AE and CE queries differ ({0}); inclusion is only defined for identical environments")]
    MismatchedQueries(&'static str),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Which alternatives, counterfactuals or adversarials to collect around `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetQuery {
    pub x: Point,
    /// Present for targeted sets.
    pub target: Option<usize>,
    /// Radius of the open ball; absent means the whole space.
    pub epsilon: Option<f64>,
    pub measure: DistanceMeasure,
    /// Keep only the alternatives at minimal distance.
    pub minimal: bool,
}

impl SetQuery {
    pub fn new(x: Point, measure: DistanceMeasure) -> Self {
        Self {
            x,
            target: None,
            epsilon: None,
            measure,
            minimal: false,
        }
    }

    pub fn targeted(mut self, target: usize) -> Self {
        self.target = Some(target);
        self
    }

    pub fn within(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn minimal(mut self) -> Self {
        self.minimal = true;
        self
    }
}

/// Predicate deciding whether a point at distance `d` lies in the ball of
/// radius `radius`.
pub type BallFilter = fn(d: f64, radius: f64) -> bool;

/// The open ball used by every definition: `d < radius`.
pub fn open_ball(d: f64, radius: f64) -> bool {
    d < radius
}

/// A model on its enumerated input grid.
#[derive(Debug, Clone)]
pub struct Universe<'a> {
    model: &'a Model,
    schema: &'a Schema,
    grid: Vec<Point>,
    predictions: Vec<usize>,
    ball: BallFilter,
}

impl<'a> Universe<'a> {
    pub fn new(model: &'a Model, schema: &'a Schema, cap: u64) -> Result<Self, FormalError> {
        let grid = enumerate_grid(schema, cap)?;
        let predictions = grid.iter().map(|p| model.predict(p)).collect();
        Ok(Self {
            model,
            schema,
            grid,
            predictions,
            ball: open_ball,
        })
    }

    /// Replaces the ball-membership predicate. Only test doubles need this.
    pub fn with_ball_filter(mut self, ball: BallFilter) -> Self {
        self.ball = ball;
        self
    }

    pub fn grid(&self) -> &[Point] {
        &self.grid
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    fn check(&self, q: &SetQuery) -> Result<usize, FormalError> {
        let y = self.model.predict(&q.x);
        if let Some(t) = q.target {
            if t >= self.model.n_classes() {
                return Err(FormalError::UnknownTarget(t));
            }
            if t == y {
                return Err(FormalError::TargetIsCurrent(t));
            }
        }
        if let Some(e) = q.epsilon {
            if !(e > 0.0) {
                return Err(FormalError::InvalidEpsilon(e));
            }
        }
        Ok(y)
    }

    /// Indices of grid points in the (targeted, epsilon) alternative set,
    /// paired with their distance to `q.x`.
    fn alternatives(&self, q: &SetQuery) -> Result<Vec<(usize, f64)>, FormalError> {
        let y = self.check(q)?;
        Ok(self
            .grid
            .iter()
            .zip(&self.predictions)
            .enumerate()
            .filter(|(_, (_, &pred))| match q.target {
                Some(t) => pred == t,
                None => pred != y,
            })
            .map(|(i, (p, _))| (i, distance_unchecked(self.schema, &q.measure, &q.x, p)))
            .filter(|&(_, d)| q.epsilon.is_none_or(|e| (self.ball)(d, e)))
            .collect())
    }

    pub fn alternative_set(&self, q: &SetQuery) -> Result<Vec<Point>, FormalError> {
        Ok(self
            .alternatives(q)?
            .into_iter()
            .map(|(i, _)| self.grid[i].clone())
            .collect())
    }

    /// Counterfactual set. With `minimal`, the full argmin of the distance over
    /// the alternative set (ties included); points at infinite distance are
    /// never counterfactuals.
    pub fn ce_set(&self, q: &SetQuery) -> Result<Vec<Point>, FormalError> {
        let alts = self.alternatives(q)?;
        if !q.minimal {
            return Ok(alts.into_iter().map(|(i, _)| self.grid[i].clone()).collect());
        }
        let best = alts.iter().map(|&(_, d)| d).fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Ok(Vec::new());
        }
        Ok(alts
            .into_iter()
            .filter(|&(_, d)| d == best)
            .map(|(i, _)| self.grid[i].clone())
            .collect())
    }

    /// Counterfactuals that are strictly misclassified; unknown ground truth
    /// excludes a point.
    pub fn ae_set(&self, gt: &GroundTruth, q: &SetQuery) -> Result<Vec<Point>, FormalError> {
        Ok(self
            .ce_set(q)?
            .into_iter()
            .filter(|p| crate::model::is_misclassified(self.model, gt, p) == TriState::True)
            .collect())
    }

    /// Checks the six alternative-set inclusions for every query and every
    /// target other than the current prediction, plus open-ball strictness of
    /// every epsilon set that was built.
    pub fn verify_theorem1(&self, family: &[TheoremQuery]) -> Result<VerificationReport, FormalError> {
        let mut report = VerificationReport::default();
        for tq in family {
            let base = SetQuery::new(tq.x.clone(), tq.measure.clone());
            let y = self.check(&base)?;
            let a = self.alternative_set(&base)?;
            let a_eps = self.alternative_set(&base.clone().within(tq.epsilon))?;
            let a_delta = self.alternative_set(&base.clone().within(tq.delta))?;
            report.checks += 1;
            self.check_ball(&mut report, tq, None, &a_eps, tq.epsilon);
            self.check_ball(&mut report, tq, None, &a_delta, tq.delta);
            report.include(Relation::T1i, tq, None, &a_eps, &a);
            report.include(Relation::T1v, tq, None, &a_eps, &a_delta);
            for t in (0..self.model.n_classes()).filter(|&t| t != y) {
                let tq_base = base.clone().targeted(t);
                let ta = self.alternative_set(&tq_base)?;
                let ta_eps = self.alternative_set(&tq_base.clone().within(tq.epsilon))?;
                let ta_delta = self.alternative_set(&tq_base.clone().within(tq.delta))?;
                report.checks += 1;
                self.check_ball(&mut report, tq, Some(t), &ta_eps, tq.epsilon);
                report.include(Relation::T1ii, tq, Some(t), &ta_eps, &ta);
                report.include(Relation::T1iii, tq, Some(t), &ta_eps, &a_eps);
                report.include(Relation::T1iv, tq, Some(t), &ta, &a);
                report.include(Relation::T1vi, tq, Some(t), &ta_eps, &ta_delta);
            }
        }
        Ok(report)
    }

    fn check_ball(
        &self,
        report: &mut VerificationReport,
        tq: &TheoremQuery,
        target: Option<usize>,
        set: &[Point],
        radius: f64,
    ) {
        for z in set {
            if !open_ball(distance_unchecked(self.schema, &tq.measure, &tq.x, z), radius) {
                report.violations.push(Violation {
                    relation: Relation::OpenBall,
                    x: tq.x.clone(),
                    target,
                    witness: z.clone(),
                });
            }
        }
    }

    /// Checks `AE ⊆ CE` for two queries, refusing queries whose environments
    /// differ: the inclusion only holds for identical queries.
    pub fn check_ae_in_ce(
        &self,
        gt: &GroundTruth,
        ae_query: &SetQuery,
        ce_query: &SetQuery,
    ) -> Result<Vec<Point>, FormalError> {
        if ae_query.epsilon != ce_query.epsilon {
            return Err(FormalError::MismatchedQueries("epsilon"));
        }
        if ae_query.target != ce_query.target {
            return Err(FormalError::MismatchedQueries("target"));
        }
        if ae_query.minimal != ce_query.minimal {
            return Err(FormalError::MismatchedQueries("minimality"));
        }
        if ae_query.measure != ce_query.measure || ae_query.x != ce_query.x {
            return Err(FormalError::MismatchedQueries("point or measure"));
        }
        let ae = self.ae_set(gt, ae_query)?;
        let ce = self.ce_set(ce_query)?;
        Ok(ae.into_iter().filter(|z| !ce.contains(z)).collect())
    }

    /// Checks the four AE ⊆ CE inclusions (epsilon and minimal, targeted and
    /// non-targeted) for every query and target.
    pub fn verify_theorem2(
        &self,
        gt: &GroundTruth,
        family: &[TheoremQuery],
    ) -> Result<VerificationReport, FormalError> {
        let mut report = VerificationReport::default();
        for tq in family {
            let base = SetQuery::new(tq.x.clone(), tq.measure.clone());
            let y = self.check(&base)?;
            let mut targets: Vec<Option<usize>> = vec![None];
            targets.extend((0..self.model.n_classes()).filter(|&t| t != y).map(Some));
            for target in targets {
                let q = SetQuery { target, ..base.clone() };
                let cases = [
                    (
                        if target.is_some() {
                            Relation::T2ii
                        } else {
                            Relation::T2i
                        },
                        q.clone().within(tq.epsilon),
                    ),
                    (
                        if target.is_some() {
                            Relation::T2iv
                        } else {
                            Relation::T2iii
                        },
                        q.clone().minimal(),
                    ),
                ];
                for (relation, query) in cases {
                    report.checks += 1;
                    for witness in self.check_ae_in_ce(gt, &query, &query)? {
                        report.violations.push(Violation {
                            relation,
                            x: tq.x.clone(),
                            target,
                            witness,
                        });
                    }
                }
            }
        }
        Ok(report)
    }
}

/// One point of a verification family with a radius pair `epsilon < delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremQuery {
    pub x: Point,
    pub epsilon: f64,
    pub delta: f64,
    pub measure: DistanceMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    /// A(x, eps) ⊆ A(x)
    #[serde(rename = "T1.i")]
    T1i,
    /// TA(x, y', eps) ⊆ TA(x, y')
    #[serde(rename = "T1.ii")]
    T1ii,
    /// TA(x, y', eps) ⊆ A(x, eps)
    #[serde(rename = "T1.iii")]
    T1iii,
    /// TA(x, y') ⊆ A(x)
    #[serde(rename = "T1.iv")]
    T1iv,
    /// A(x, eps) ⊆ A(x, delta) for eps < delta
    #[serde(rename = "T1.v")]
    T1v,
    /// TA(x, y', eps) ⊆ TA(x, y', delta) for eps < delta
    #[serde(rename = "T1.vi")]
    T1vi,
    /// Every member of an eps-set lies strictly inside the ball.
    #[serde(rename = "open-ball")]
    OpenBall,
    /// AE(x, eps) ⊆ CE(x, eps)
    #[serde(rename = "T2.i")]
    T2i,
    /// TAE(x, y', eps) ⊆ TCE(x, y', eps)
    #[serde(rename = "T2.ii")]
    T2ii,
    /// AE(x) ⊆ CE(x)
    #[serde(rename = "T2.iii")]
    T2iii,
    /// TAE(x, y') ⊆ TCE(x, y')
    #[serde(rename = "T2.iv")]
    T2iv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub relation: Relation,
    pub x: Point,
    pub target: Option<usize>,
    pub witness: Point,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    /// Number of (query, target) cases examined.
    pub checks: usize,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.checks += other.checks;
        self.violations.extend(other.violations);
    }

    fn include(&mut self, relation: Relation, tq: &TheoremQuery, target: Option<usize>, sub: &[Point], sup: &[Point]) {
        for z in sub.iter().filter(|z| !sup.contains(z)) {
            self.violations.push(Violation {
                relation,
                x: tq.x.clone(),
                target,
                witness: z.clone(),
            });
        }
    }
}

pub fn alternative_set(f: &Model, schema: &Schema, q: &SetQuery) -> Result<Vec<Point>, FormalError> {
    Universe::new(f, schema, grid_cap_from_env())?.alternative_set(q)
}

pub fn ce_set(f: &Model, schema: &Schema, q: &SetQuery) -> Result<Vec<Point>, FormalError> {
    Universe::new(f, schema, grid_cap_from_env())?.ce_set(q)
}

pub fn ae_set(f: &Model, gt: &GroundTruth, schema: &Schema, q: &SetQuery) -> Result<Vec<Point>, FormalError> {
    Universe::new(f, schema, grid_cap_from_env())?.ae_set(gt, q)
}

pub fn verify_theorem1(f: &Model, schema: &Schema, family: &[TheoremQuery]) -> Result<VerificationReport, FormalError> {
    Universe::new(f, schema, grid_cap_from_env())?.verify_theorem1(family)
}

pub fn verify_theorem2(
    f: &Model,
    gt: &GroundTruth,
    schema: &Schema,
    family: &[TheoremQuery],
) -> Result<VerificationReport, FormalError> {
    Universe::new(f, schema, grid_cap_from_env())?.verify_theorem2(gt, family)
}

#[cfg(test)]
mod tests;
