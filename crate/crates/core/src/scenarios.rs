//! End-to-end loan fixtures: a perfect salary model, a model biased towards
//! dog owners, a trained model where both features matter, and a
//! counterfactual that is not an adversarial example.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{loan_graph, CausalGraph, CeKind};
use crate::explain::{ExplainError, Explainer, Explanation};
use crate::formal::{FormalError, SetQuery, Universe};
use crate::model::{
    fit_model, CompareOp, Condition, Dataset, GroundTruth, Hyperparams, Model, ModelError, ModelKind, Params, Region,
    Stump, TriState,
};
use crate::solve::{solve_bruteforce, Lambda, Mode, Problem, SolveError, SolveOutcome, SolveRequest};
use crate::space::{grid_cap_from_env, DistanceMeasure, FeatureSpec, OutputSpace, Point, Schema, SpaceError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?} (expected perfect, biased, mixed or ce-not-ae)")]
    Unknown(String),
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Formal(#[from] FormalError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    Perfect,
    Biased,
    Mixed,
    CeNotAe,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [Self::Perfect, Self::Biased, Self::Mixed, Self::CeNotAe];

    fn default_salary(self) -> f64 {
        match self {
            Self::Perfect | Self::CeNotAe => 48000.0,
            Self::Biased => 20000.0,
            Self::Mixed => 36000.0,
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Perfect => "perfect",
            Self::Biased => "biased",
            Self::Mixed => "mixed",
            Self::CeNotAe => "ce-not-ae",
        })
    }
}

impl FromStr for ScenarioName {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.to_string() == s)
            .ok_or_else(|| ScenarioError::Unknown(s.to_string()))
    }
}

/// Free parameters: salary threshold `t`, applicant salary `s`, dog count `d`
/// and the salary grid step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub t: f64,
    pub s: Option<f64>,
    pub d: f64,
    pub resolution: f64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            t: 50000.0,
            s: None,
            d: 1.0,
            resolution: 1000.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioName,
    pub t: f64,
    pub s: f64,
    pub d: f64,
    pub resolution: f64,
    pub checks: Vec<Check>,
    pub explanations: Vec<Explanation>,
    #[serde(skip)]
    pub evaluations: u64,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn expect(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }
}

const REJECT: usize = 0;
const ACCEPT: usize = 1;
const SUBJECT: &str = "P";
const DOGS_MAX: f64 = 10.0;

/// Shared schema, ground truth and graph of all loan scenarios.
pub struct LoanWorld {
    pub schema: Schema,
    pub output: OutputSpace,
    pub ground_truth: GroundTruth,
    pub graph: CausalGraph,
    pub t: f64,
    pub s: f64,
    pub d: f64,
}

impl LoanWorld {
    pub fn new(name: ScenarioName, p: &ScenarioParams) -> Result<Self, ScenarioError> {
        let s = p.s.unwrap_or(name.default_salary());
        let bad = |msg: String| Err(ScenarioError::InvalidParams(msg));
        if !(p.resolution > 0.0 && p.resolution.is_finite()) {
            return bad(format!("resolution must be > 0, got {}", p.resolution));
        }
        if !(p.t > 0.0 && p.t.is_finite()) {
            return bad(format!("t must be > 0, got {}", p.t));
        }
        if !(0.0..p.t).contains(&s) {
            return bad(format!("s must satisfy 0 <= s < t, got s={s}, t={}", p.t));
        }
        for (what, v) in [("t", p.t), ("s", s)] {
            let k = v / p.resolution;
            if (k - k.round()).abs() > 1e-9 {
                return bad(format!("{what}={v} is not on the salary grid of step {}", p.resolution));
            }
        }
        if p.d < 0.0 || p.d.fract() != 0.0 || p.d + 2.0 > DOGS_MAX {
            return bad(format!("d must be an integer in 0..={}, got {}", DOGS_MAX - 2.0, p.d));
        }
        let schema = Schema::new(
            vec![
                FeatureSpec::numeric("salary", 0.0, 2.0 * p.t, p.resolution)
                    .with_scale(1000.0)
                    .with_unit("€"),
                FeatureSpec::integer("dogs", 0.0, DOGS_MAX).with_scale(1.0),
            ],
            None,
        )?;
        let ground_truth = GroundTruth::new(
            vec![Region {
                conditions: vec![Condition {
                    feature: 0,
                    op: CompareOp::Ge,
                    value: p.t,
                }],
                label: ACCEPT,
            }],
            Some(REJECT),
        );
        Ok(Self {
            schema,
            output: OutputSpace::new(["reject", "accept"])?,
            ground_truth,
            graph: loan_graph(),
            t: p.t,
            s,
            d: p.d,
        })
    }

    pub fn x(&self) -> Point {
        Point::new(vec![self.s, self.d])
    }

    pub fn problem<'a>(&'a self, model: &'a Model) -> Problem<'a> {
        Problem {
            schema: &self.schema,
            model,
            ground_truth: &self.ground_truth,
            output: &self.output,
            training: None,
        }
    }

    fn explainer(&self) -> Explainer<'_> {
        Explainer {
            schema: &self.schema,
            output: &self.output,
            graph: Some(&self.graph),
            subject: SUBJECT,
        }
    }

    fn report(&self, name: ScenarioName, resolution: f64) -> ScenarioReport {
        ScenarioReport {
            scenario: name,
            t: self.t,
            s: self.s,
            d: self.d,
            resolution,
            checks: Vec::new(),
            explanations: Vec::new(),
            evaluations: 0,
        }
    }

    /// Best-first counterfactuals for `x` towards acceptance.
    fn counterfactuals(
        &self,
        model: &Model,
        measure: DistanceMeasure,
        k: usize,
    ) -> Result<SolveOutcome, ScenarioError> {
        let req = SolveRequest::new(self.x(), measure)
            .target(ACCEPT)
            .lambda(Lambda::Anneal)
            .k(k);
        Ok(solve_bruteforce(self.problem(model), &req)?)
    }

    fn attack(&self, model: &Model) -> Result<SolveOutcome, ScenarioError> {
        let req = SolveRequest::new(self.x(), DistanceMeasure::normalized_l1())
            .target(ACCEPT)
            .mode(Mode::Adversarial)
            .k(usize::MAX);
        Ok(solve_bruteforce(self.problem(model), &req)?)
    }
}

fn stump(feature: usize, threshold: f64) -> Model {
    Model::new(
        Params::Stump(Stump {
            feature,
            threshold,
            below: REJECT,
            above: ACCEPT,
        }),
        2,
        2,
    )
    .expect("stump parameters are valid")
}

/// The accurate model: accept iff salary >= t.
pub fn perfect_model(world: &LoanWorld) -> Model {
    stump(0, world.t)
}

/// Training data from two clubs: dog club members own two or more dogs and
/// repaid their loans, animal protection club members own at most one and
/// did not. Salaries overlap.
pub fn club_data(t: f64) -> Dataset {
    let mut rows = Vec::new();
    for i in 0..12 {
        let salary = (t / 6.0 * i as f64).round();
        rows.push((Point::new(vec![salary, 2.0 + (i % 3) as f64]), ACCEPT));
        rows.push((Point::new(vec![salary + t / 12.0, (i % 2) as f64]), REJECT));
    }
    Dataset::new(rows)
}

/// Depth-1 tree trained on [`club_data`].
pub fn biased_model(world: &LoanWorld) -> Result<Model, ScenarioError> {
    let hp = Hyperparams {
        max_depth: 1,
        ..Hyperparams::default()
    };
    Ok(fit_model(ModelKind::DecisionTree, &club_data(world.t), 2, &hp)?)
}

/// Knuth's method; fine for the small rates used here.
fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let limit = (-rate).exp();
    let mut k = 0.0;
    let mut prod: f64 = rng.gen();
    while prod > limit {
        k += 1.0;
        prod *= rng.gen::<f64>();
    }
    k
}

pub const MIXED_SAMPLES: usize = 400;

/// Salary uniform on the grid; dogs Poisson with a rate growing in salary,
/// truncated to the feature range; label = salary >= t.
pub fn mixed_data(world: &LoanWorld, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let salaries = world.schema.feature(0).grid_values().expect("salary is bounded");
    let rows = (0..MIXED_SAMPLES)
        .map(|_| {
            let salary = salaries[rng.gen_range(0..salaries.len())];
            let rate = 0.5 + 3.0 * salary / (2.0 * world.t);
            let dogs = poisson(&mut rng, rate).min(DOGS_MAX);
            let label = if salary >= world.t { ACCEPT } else { REJECT };
            (Point::new(vec![salary, dogs]), label)
        })
        .collect();
    Dataset::new(rows)
}

pub fn mixed_model(world: &LoanWorld, seed: u64) -> Result<Model, ScenarioError> {
    // Strong shrinkage spreads weight onto the correlated dogs feature.
    let hp = Hyperparams {
        l2: 1.0,
        seed,
        ..Hyperparams::default()
    };
    Ok(fit_model(ModelKind::Logistic, &mixed_data(world, seed), 2, &hp)?)
}

/// Logit change per normalized unit of each feature.
fn sensitivities(world: &LoanWorld, model: &Model) -> Vec<f64> {
    match model.params() {
        Params::Logistic(l) => (0..world.schema.len())
            .map(|i| (l.weights[i] / l.scale[i] * world.schema.scale(i)).abs())
            .collect(),
        _ => vec![1.0; world.schema.len()],
    }
}

/// The three cost profiles of the mixed scenario, as weightedL1 weights.
/// Weights are set against the model's sensitivities so that one normalized
/// unit of logit costs the same for every feature, then one feature is made
/// much cheaper, or dogs slightly cheaper (balanced).
pub fn mixed_measures(world: &LoanWorld, model: &Model) -> [(&'static str, DistanceMeasure); 3] {
    let a = sensitivities(world, model);
    let w = |salary: f64, dogs: f64| DistanceMeasure::weighted(vec![a[0] * salary, a[1] * dogs]).normalized();
    [
        ("salary-cheap", w(0.1, 1.0)),
        ("dogs-cheap", w(1.0, 0.1)),
        ("balanced", w(1.1, 1.0)),
    ]
}

fn changed(world: &LoanWorld, e: &Explanation) -> Vec<String> {
    let x = world.x();
    world
        .schema
        .features()
        .iter()
        .enumerate()
        .filter(|(i, _)| x[*i] != e.point[*i])
        .map(|(_, f)| f.name.clone())
        .collect()
}

fn fmt_point(p: &Point) -> String {
    let v: Vec<String> = p.values().iter().map(|v| format!("{v}")).collect();
    format!("({})", v.join(", "))
}

fn run_perfect(world: &LoanWorld, report: &mut ScenarioReport) -> Result<(), ScenarioError> {
    let model = perfect_model(world);
    let out = world.counterfactuals(&model, DistanceMeasure::normalized_l1(), 2)?;
    report.evaluations += out.evaluations;
    let expected = Point::new(vec![world.t, world.d]);
    let Some(best) = out.candidates.first() else {
        report.expect("best-counterfactual", false, "no counterfactual found");
        return Ok(());
    };
    report.expect(
        "best-counterfactual",
        best.point == expected,
        format!("got {}, expected {}", fmt_point(&best.point), fmt_point(&expected)),
    );
    let unique = out.candidates.get(1).is_none_or(|c| c.objective > best.objective);
    report.expect("unique-best", unique, format!("best objective {}", best.objective));
    let e = world.explainer().explain(&world.x(), best)?;
    let class = e.ce_class.as_ref().map(|c| c.value);
    report.expect(
        "classified-feasible",
        class == Some(CeKind::Feasible),
        format!("{class:?}"),
    );
    report.expect(
        "not-adversarial",
        e.adversarial == TriState::False,
        format!("{:?}", e.adversarial),
    );
    report.explanations.push(e);

    let u = Universe::new(&model, &world.schema, grid_cap_from_env())?;
    let q = SetQuery::new(world.x(), DistanceMeasure::normalized_l1()).targeted(ACCEPT);
    let empty =
        u.ae_set(&world.ground_truth, &q)?.is_empty() && u.ae_set(&world.ground_truth, &q.minimal())?.is_empty();
    report.expect("ae-set-empty", empty, "no misclassified alternative exists");
    let attack = world.attack(&model)?;
    report.evaluations += attack.evaluations;
    report.expect(
        "attack-empty",
        attack.candidates.is_empty(),
        format!("{} adversarial candidates", attack.candidates.len()),
    );
    Ok(())
}

fn run_biased(world: &LoanWorld, report: &mut ScenarioReport) -> Result<(), ScenarioError> {
    let model = biased_model(world)?;
    let fixed = stump(1, 2.0);
    let grid = Universe::new(&model, &world.schema, grid_cap_from_env())?;
    let agree = grid.grid().iter().all(|p| model.predict(p) == fixed.predict(p));
    report.expect(
        "trained-tree-is-dogs-threshold-2",
        agree,
        format!("{:?}", model.params()),
    );

    let x = Point::new(vec![world.s, 1.0]);
    let req = SolveRequest::new(x.clone(), DistanceMeasure::normalized_l1())
        .target(ACCEPT)
        .lambda(Lambda::Anneal)
        .k(1);
    let out = solve_bruteforce(world.problem(&model), &req)?;
    report.evaluations += out.evaluations;
    let expected = Point::new(vec![world.s, 2.0]);
    let Some(best) = out.candidates.first() else {
        report.expect("best-counterfactual", false, "no counterfactual found");
        return Ok(());
    };
    report.expect(
        "best-counterfactual",
        best.point == expected,
        format!("got {}, expected {}", fmt_point(&best.point), fmt_point(&expected)),
    );
    let e = world.explainer().explain(&x, best)?;
    let class = e.ce_class.as_ref().map(|c| c.value);
    report.expect(
        "classified-contesting",
        class == Some(CeKind::Contesting),
        format!("{class:?}"),
    );
    report.expect(
        "adversarial",
        e.adversarial == TriState::True,
        format!("{:?}", e.adversarial),
    );
    report.expect(
        "imperceptible",
        e.imperceptible == Some(true),
        format!("{:?}", e.imperceptible),
    );
    report.explanations.push(e);

    let q = SetQuery::new(x, DistanceMeasure::normalized_l1())
        .targeted(ACCEPT)
        .minimal();
    let ae = grid.ae_set(&world.ground_truth, &q)?;
    report.expect("minimal-ae", ae == vec![expected], format!("{} points", ae.len()));
    Ok(())
}

fn run_mixed(world: &LoanWorld, seed: u64, report: &mut ScenarioReport) -> Result<(), ScenarioError> {
    let model = mixed_model(world, seed)?;
    let data = mixed_data(world, seed);
    let acc = data.accuracy(&model);
    report.expect("model-accuracy", acc >= 0.8, format!("training accuracy {acc}"));
    report.expect(
        "x-rejected",
        model.predict(&world.x()) == REJECT,
        format!("x = {}", fmt_point(&world.x())),
    );
    let expectations = [
        (vec!["salary"], CeKind::Feasible),
        (vec!["dogs"], CeKind::Contesting),
        (vec!["salary", "dogs"], CeKind::Mixed),
    ];
    for ((label, measure), (features, kind)) in mixed_measures(world, &model).into_iter().zip(expectations) {
        let out = world.counterfactuals(&model, measure, 1)?;
        report.evaluations += out.evaluations;
        let Some(best) = out.candidates.first() else {
            report.expect(&format!("{label}-changes"), false, "no counterfactual found");
            continue;
        };
        let e = world.explainer().explain(&world.x(), best)?;
        let got = changed(world, &e);
        report.expect(
            &format!("{label}-changes"),
            got == features,
            format!("changed {got:?} at {}", fmt_point(&e.point)),
        );
        let class = e.ce_class.as_ref().map(|c| c.value);
        report.expect(&format!("{label}-class"), class == Some(kind), format!("{class:?}"));
        if kind == CeKind::Mixed {
            report.expect(
                "mixed-not-imperceptible",
                e.imperceptible == Some(false),
                format!("{:?}", e.imperceptible),
            );
        }
        report.explanations.push(e);
    }
    Ok(())
}

fn run_ce_not_ae(world: &LoanWorld, report: &mut ScenarioReport) -> Result<(), ScenarioError> {
    let model = perfect_model(world);
    let u = Universe::new(&model, &world.schema, grid_cap_from_env())?;
    let q = SetQuery::new(world.x(), DistanceMeasure::normalized_l1())
        .targeted(ACCEPT)
        .minimal();
    let ce = u.ce_set(&q)?;
    let target = Point::new(vec![world.t, world.d]);
    report.expect("minimal-ce", ce.contains(&target), format!("{} points", ce.len()));
    let ae = u.ae_set(&world.ground_truth, &q)?;
    report.expect("absent-from-ae", !ae.contains(&target), format!("{} points", ae.len()));
    let wider = [
        SetQuery::new(world.x(), DistanceMeasure::normalized_l1()),
        SetQuery::new(world.x(), DistanceMeasure::normalized_l1()).minimal(),
        SetQuery::new(world.x(), DistanceMeasure::normalized_l1())
            .targeted(ACCEPT)
            .within(5.0),
        SetQuery::new(
            world.x(),
            DistanceMeasure::new(crate::space::DistanceKind::L2).normalized(),
        )
        .targeted(ACCEPT),
    ];
    let mut absent = true;
    for w in &wider {
        absent &= !u.ae_set(&world.ground_truth, w)?.contains(&target);
    }
    report.expect("absent-from-every-ae-set", absent, format!("{} queries", wider.len()));
    let out = world.counterfactuals(&model, DistanceMeasure::normalized_l1(), 1)?;
    report.evaluations += out.evaluations;
    if let Some(best) = out.candidates.first() {
        report.explanations.push(world.explainer().explain(&world.x(), best)?);
    }
    Ok(())
}

/// Builds the scenario, runs its solvers and records one check per claim.
/// Failed checks are reported, not returned as errors.
pub fn run_scenario(name: ScenarioName, params: &ScenarioParams) -> Result<ScenarioReport, ScenarioError> {
    let world = LoanWorld::new(name, params)?;
    let mut report = world.report(name, params.resolution);
    match name {
        ScenarioName::Perfect => run_perfect(&world, &mut report)?,
        ScenarioName::Biased => run_biased(&world, &mut report)?,
        ScenarioName::Mixed => run_mixed(&world, params.seed, &mut report)?,
        ScenarioName::CeNotAe => run_ce_not_ae(&world, &mut report)?,
    }
    Ok(report)
}
