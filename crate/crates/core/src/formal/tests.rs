use super::*;
use crate::model::{CompareOp, Condition, Params, Region, Stump, TreeNode};
use crate::space::{FeatureSpec, Schema};

fn p(v: &[f64]) -> Point {
    Point::new(v.to_vec())
}

/// salary in {47000, ..., 51000} x dogs in {0, 1}.
fn small_schema() -> Schema {
    Schema::new(
        vec![
            FeatureSpec::numeric("salary", 47000.0, 51000.0, 1000.0).with_scale(1000.0),
            FeatureSpec::integer("dogs", 0.0, 1.0).with_scale(1.0),
        ],
        None,
    )
    .unwrap()
}

fn stump(feature: usize, threshold: f64) -> Model {
    Model::new(
        Params::Stump(Stump {
            feature,
            threshold,
            below: 0,
            above: 1,
        }),
        2,
        2,
    )
    .unwrap()
}

fn salary_truth(t: f64) -> GroundTruth {
    GroundTruth::new(
        vec![Region {
            conditions: vec![Condition {
                feature: 0,
                op: CompareOp::Ge,
                value: t,
            }],
            label: 1,
        }],
        Some(0),
    )
}

fn l1() -> DistanceMeasure {
    DistanceMeasure::normalized_l1()
}

#[test]
fn alternatives_of_perfect_stump() {
    let s = small_schema();
    let f = stump(0, 50000.0);
    let got = alternative_set(&f, &s, &SetQuery::new(p(&[48000.0, 1.0]), l1())).unwrap();
    // Oracle: nested loops over the raw axes.
    let mut expected = Vec::new();
    for salary in [47000.0, 48000.0, 49000.0, 50000.0, 51000.0] {
        for dogs in [0.0, 1.0] {
            if salary >= 50000.0 {
                expected.push(p(&[salary, dogs]));
            }
        }
    }
    assert_eq!(got, expected);
}

#[test]
fn small_epsilon_gives_empty_set() {
    let s = small_schema();
    let f = stump(0, 50000.0);
    let q = SetQuery::new(p(&[48000.0, 1.0]), l1()).within(1.5);
    assert!(alternative_set(&f, &s, &q).unwrap().is_empty());
    // The nearest alternative sits at distance exactly 2.
    assert!(alternative_set(&f, &s, &q.clone().within(2.0)).unwrap().is_empty());
    assert_eq!(
        alternative_set(&f, &s, &q.within(2.0 + 1e-9)).unwrap(),
        vec![p(&[50000.0, 1.0])]
    );
}

#[test]
fn targeting_the_current_class_is_an_error() {
    let s = small_schema();
    let f = stump(0, 50000.0);
    let q = SetQuery::new(p(&[48000.0, 1.0]), l1()).targeted(0);
    assert!(matches!(
        alternative_set(&f, &s, &q),
        Err(FormalError::TargetIsCurrent(0))
    ));
    let bad_eps = SetQuery::new(p(&[48000.0, 1.0]), l1()).within(0.0);
    assert!(matches!(
        alternative_set(&f, &s, &bad_eps),
        Err(FormalError::InvalidEpsilon(_))
    ));
}

#[test]
fn minimal_counterfactual_of_perfect_stump() {
    let s = small_schema();
    let f = stump(0, 50000.0);
    let q = SetQuery::new(p(&[48000.0, 1.0]), l1()).targeted(1).minimal();
    assert_eq!(ce_set(&f, &s, &q).unwrap(), vec![p(&[50000.0, 1.0])]);
    let non_minimal = SetQuery { minimal: false, ..q };
    assert_eq!(ce_set(&f, &s, &non_minimal).unwrap().len(), 4);
}

#[test]
fn equidistant_counterfactuals_are_all_returned() {
    let s = small_schema();
    // Accepted below 47500 or from 48500 on: both neighbours of 48000 flip.
    let tree = TreeNode::Split {
        feature: 0,
        threshold: 47500.0,
        left: Box::new(TreeNode::Leaf { label: 1 }),
        right: Box::new(TreeNode::Split {
            feature: 0,
            threshold: 48500.0,
            left: Box::new(TreeNode::Leaf { label: 0 }),
            right: Box::new(TreeNode::Leaf { label: 1 }),
        }),
    };
    let f = Model::new(Params::Tree(tree), 2, 2).unwrap();
    let q = SetQuery::new(p(&[48000.0, 1.0]), l1()).minimal();
    assert_eq!(
        ce_set(&f, &s, &q).unwrap(),
        vec![p(&[47000.0, 1.0]), p(&[49000.0, 1.0])]
    );
}

#[test]
fn constant_model_has_no_counterfactuals() {
    let s = small_schema();
    let f = Model::new(Params::Stump(Stump::constant(0)), 2, 2).unwrap();
    let q = SetQuery::new(p(&[48000.0, 1.0]), l1()).minimal();
    assert!(ce_set(&f, &s, &q).unwrap().is_empty());
    let fam = [TheoremQuery {
        x: p(&[48000.0, 1.0]),
        epsilon: 1.0,
        delta: 3.0,
        measure: l1(),
    }];
    assert!(verify_theorem1(&f, &s, &fam).unwrap().is_clean());
}

#[test]
fn minimal_set_shares_one_distance() {
    for seed in 0..100 {
        let inst = random_instance(seed);
        let u = Universe::new(&inst.model, &inst.schema, u64::MAX).unwrap();
        for tq in &inst.family {
            let q = SetQuery::new(tq.x.clone(), tq.measure.clone()).minimal();
            let ce = u.ce_set(&q).unwrap();
            let all = u
                .alternative_set(&SetQuery {
                    minimal: false,
                    ..q.clone()
                })
                .unwrap();
            let d = |z: &Point| distance_unchecked(&inst.schema, &tq.measure, &tq.x, z);
            if let Some(first) = ce.first() {
                let best = d(first);
                assert!(ce.iter().all(|z| d(z) == best));
                assert!(all.iter().all(|z| d(z) >= best));
            } else {
                assert!(all.iter().all(|z| d(z).is_infinite()));
            }
        }
    }
}

#[test]
fn adversarial_sets_on_loan_fixtures() {
    let s = Schema::new(
        vec![
            FeatureSpec::numeric("salary", 0.0, 100000.0, 1000.0).with_scale(1000.0),
            FeatureSpec::integer("dogs", 0.0, 5.0).with_scale(1.0),
        ],
        None,
    )
    .unwrap();
    let gt = salary_truth(50000.0);

    let biased = stump(1, 2.0);
    let q = SetQuery::new(p(&[20000.0, 1.0]), l1()).targeted(1).minimal();
    assert_eq!(ce_set(&biased, &s, &q).unwrap(), vec![p(&[20000.0, 2.0])]);
    assert_eq!(ae_set(&biased, &gt, &s, &q).unwrap(), vec![p(&[20000.0, 2.0])]);

    let perfect = stump(0, 50000.0);
    let u = Universe::new(&perfect, &s, u64::MAX).unwrap();
    for x in u.grid().iter().step_by(37) {
        let y = perfect.predict(x);
        for q in [
            SetQuery::new(x.clone(), l1()),
            SetQuery::new(x.clone(), l1()).minimal(),
            SetQuery::new(x.clone(), l1()).targeted(1 - y).within(30.0),
        ] {
            assert!(u.ae_set(&gt, &q).unwrap().is_empty());
        }
    }
    // The minimal CE of the perfect model is correctly classified, so not an AE.
    let q = SetQuery::new(p(&[48000.0, 1.0]), l1()).targeted(1).minimal();
    assert_eq!(u.ce_set(&q).unwrap(), vec![p(&[50000.0, 1.0])]);
    assert!(u.ae_set(&gt, &q).unwrap().is_empty());
}

#[test]
fn unknown_ground_truth_is_never_adversarial() {
    let s = small_schema();
    let f = stump(0, 50000.0);
    let undefined = GroundTruth::new(Vec::new(), None);
    let q = SetQuery::new(p(&[48000.0, 1.0]), l1());
    assert!(!ce_set(&f, &s, &q).unwrap().is_empty());
    assert!(ae_set(&f, &undefined, &s, &q).unwrap().is_empty());
    let always_wrong = GroundTruth::new(Vec::new(), Some(0));
    assert_eq!(ae_set(&f, &always_wrong, &s, &q).unwrap().len(), 4);
}

fn fixture_family() -> Vec<TheoremQuery> {
    small_schema_grid()
        .into_iter()
        .map(|x| TheoremQuery {
            x,
            epsilon: 2.0,
            delta: 3.0,
            measure: l1(),
        })
        .collect()
}

fn small_schema_grid() -> Vec<Point> {
    enumerate_grid(&small_schema(), 100).unwrap()
}

#[test]
fn theorem1_holds_on_fixtures() {
    let s = small_schema();
    for f in [stump(0, 50000.0), stump(1, 1.0)] {
        let r = verify_theorem1(&f, &s, &fixture_family()).unwrap();
        assert!(r.is_clean(), "{:?}", r.violations);
        assert!(r.checks > 0);
    }
}

fn closed_ball(d: f64, r: f64) -> bool {
    d <= r
}

fn annulus(d: f64, r: f64) -> bool {
    d < r && d >= r / 2.0
}

#[test]
fn broken_ball_filters_are_caught() {
    let s = small_schema();
    let f = stump(0, 50000.0);
    // (50000, 1) is at distance exactly 2 from (48000, 1).
    let fam = [TheoremQuery {
        x: p(&[48000.0, 1.0]),
        epsilon: 2.0,
        delta: 5.0,
        measure: l1(),
    }];
    let honest = Universe::new(&f, &s, 100).unwrap();
    assert!(honest.verify_theorem1(&fam).unwrap().is_clean());

    let closed = Universe::new(&f, &s, 100).unwrap().with_ball_filter(closed_ball);
    let r = closed.verify_theorem1(&fam).unwrap();
    assert!(r
        .violations
        .iter()
        .any(|v| v.relation == Relation::OpenBall && v.witness == p(&[50000.0, 1.0])));

    // A non-monotone filter breaks epsilon-monotonicity.
    let fam = [TheoremQuery {
        x: p(&[48000.0, 0.0]),
        epsilon: 3.5,
        delta: 8.0,
        measure: l1(),
    }];
    let broken = Universe::new(&f, &s, 100).unwrap().with_ball_filter(annulus);
    let r = broken.verify_theorem1(&fam).unwrap();
    assert!(r.violations.iter().any(|v| v.relation == Relation::T1v));
    assert!(r.violations.iter().any(|v| v.relation == Relation::T1vi));
}

#[test]
fn theorem2_holds_on_biased_fixture() {
    let s = small_schema();
    let f = stump(1, 1.0);
    let r = verify_theorem2(&f, &salary_truth(50000.0), &s, &fixture_family()).unwrap();
    assert!(r.is_clean());
    assert!(r.checks > 0);
}

#[test]
fn randomized_instances_satisfy_both_theorems() {
    for seed in 0..200 {
        let inst = random_instance(seed);
        let u = Universe::new(&inst.model, &inst.schema, u64::MAX).unwrap();
        let r1 = u.verify_theorem1(&inst.family).unwrap();
        let r2 = u.verify_theorem2(&inst.ground_truth, &inst.family).unwrap();
        assert!(r1.is_clean(), "seed {seed}: {:?}", r1.violations);
        assert!(r2.is_clean(), "seed {seed}: {:?}", r2.violations);
    }
}

#[test]
fn mismatched_environments_are_refused() {
    let s = small_schema();
    let f = stump(0, 50000.0);
    let gt = GroundTruth::new(Vec::new(), Some(0));
    let u = Universe::new(&f, &s, 100).unwrap();
    let x = p(&[48000.0, 1.0]);
    let ae_q = SetQuery::new(x.clone(), l1()).within(3.5);
    let ce_q = SetQuery::new(x, l1()).within(2.5);
    // With the larger AE radius the inclusion really fails...
    let ae = u.ae_set(&gt, &ae_q).unwrap();
    let ce = u.ce_set(&ce_q).unwrap();
    assert!(ae.iter().any(|z| !ce.contains(z)));
    // ...so the checker refuses to compare them.
    assert_eq!(
        u.check_ae_in_ce(&gt, &ae_q, &ce_q),
        Err(FormalError::MismatchedQueries("epsilon"))
    );
    assert!(u.check_ae_in_ce(&gt, &ae_q, &ae_q).unwrap().is_empty());
}
