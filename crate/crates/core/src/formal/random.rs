//! Seeded generator of small enumerable instances for exhaustive checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TheoremQuery;
use crate::model::{CompareOp, Condition, GroundTruth, Logistic, Model, Params, Region, Stump, TreeNode};
use crate::space::{distance_unchecked, enumerate_grid, DistanceKind, DistanceMeasure, FeatureSpec, Point, Schema};

/// A random model, ground truth and query family on a grid of at most
/// 8 values per feature.
#[derive(Debug, Clone)]
pub struct Instance {
    pub schema: Schema,
    pub model: Model,
    pub ground_truth: GroundTruth,
    pub family: Vec<TheoremQuery>,
}

const QUERIES_PER_INSTANCE: usize = 4;

fn random_feature(rng: &mut ChaCha8Rng, i: usize) -> FeatureSpec {
    let name = format!("f{i}");
    let mut f = match rng.gen_range(0..3) {
        0 => {
            let step = *[0.5, 1.0, 2.0].choose(rng).unwrap();
            let lo = rng.gen_range(-5..=5) as f64;
            let count = rng.gen_range(2..=8);
            FeatureSpec::numeric(name, lo, lo + step * (count - 1) as f64, step)
        }
        1 => {
            let lo = rng.gen_range(0..=3) as f64;
            FeatureSpec::integer(name, lo, lo + rng.gen_range(1..=7) as f64)
        }
        _ => {
            let n = rng.gen_range(2..=4);
            FeatureSpec::categorical(name, (0..n).map(|k| format!("c{k}")))
        }
    };
    if rng.gen_bool(0.5) {
        f = f.with_scale(*[0.5, 1.0, 2.0, 3.0].choose(rng).unwrap());
    }
    if rng.gen_bool(0.2) {
        f = f.immutable();
    }
    f
}

fn random_tree(rng: &mut ChaCha8Rng, axes: &[Vec<f64>], n_classes: usize, depth: usize) -> TreeNode {
    if depth == 0 || rng.gen_bool(0.25) {
        return TreeNode::Leaf {
            label: rng.gen_range(0..n_classes),
        };
    }
    let feature = rng.gen_range(0..axes.len());
    let threshold = *axes[feature].choose(rng).unwrap() + if rng.gen_bool(0.5) { 0.25 } else { 0.0 };
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(random_tree(rng, axes, n_classes, depth - 1)),
        right: Box::new(random_tree(rng, axes, n_classes, depth - 1)),
    }
}

fn random_model(rng: &mut ChaCha8Rng, axes: &[Vec<f64>]) -> Model {
    let d = axes.len();
    match rng.gen_range(0..3) {
        0 => {
            let n_classes = rng.gen_range(2..=3);
            let below = rng.gen_range(0..n_classes);
            let above = (below + rng.gen_range(1..n_classes)) % n_classes;
            let feature = rng.gen_range(0..d);
            let threshold = *axes[feature].choose(rng).unwrap();
            Model::new(
                Params::Stump(Stump {
                    feature,
                    threshold,
                    below,
                    above,
                }),
                d,
                n_classes,
            )
            .unwrap()
        }
        1 => {
            let n_classes = rng.gen_range(2..=3);
            Model::new(Params::Tree(random_tree(rng, axes, n_classes, 2)), d, n_classes).unwrap()
        }
        _ => {
            let center: Vec<f64> = axes.iter().map(|a| a.iter().sum::<f64>() / a.len() as f64).collect();
            let scale: Vec<f64> = axes.iter().map(|a| (a[a.len() - 1] - a[0]).max(1.0)).collect();
            let l = Logistic {
                weights: (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                bias: rng.gen_range(-1.0..1.0),
                center,
                scale,
            };
            Model::new(Params::Logistic(l), d, 2).unwrap()
        }
    }
}

fn random_truth(rng: &mut ChaCha8Rng, axes: &[Vec<f64>], n_classes: usize) -> GroundTruth {
    let ops = [
        CompareOp::Lt,
        CompareOp::Le,
        CompareOp::Eq,
        CompareOp::Ge,
        CompareOp::Gt,
    ];
    let regions = (0..rng.gen_range(0..=3))
        .map(|_| Region {
            conditions: (0..rng.gen_range(1..=2))
                .map(|_| {
                    let feature = rng.gen_range(0..axes.len());
                    Condition {
                        feature,
                        op: *ops.choose(rng).unwrap(),
                        value: *axes[feature].choose(rng).unwrap(),
                    }
                })
                .collect(),
            label: rng.gen_range(0..n_classes),
        })
        .collect();
    let default = rng.gen_bool(0.5).then(|| rng.gen_range(0..n_classes));
    GroundTruth::new(regions, default)
}

fn random_measure(rng: &mut ChaCha8Rng, d: usize) -> DistanceMeasure {
    let kind = *[
        DistanceKind::L0,
        DistanceKind::L1,
        DistanceKind::L2,
        DistanceKind::Linf,
        DistanceKind::WeightedL1,
    ]
    .choose(rng)
    .unwrap();
    DistanceMeasure {
        kind,
        weights: (kind == DistanceKind::WeightedL1).then(|| (0..d).map(|_| rng.gen_range(0.0..3.0)).collect()),
        respect_mutability: rng.gen_bool(0.5),
        normalize: rng.gen_bool(0.5),
    }
}

/// Picks radii from realized distances so the ball boundary is exercised.
fn random_radii(rng: &mut ChaCha8Rng, schema: &Schema, m: &DistanceMeasure, x: &Point, grid: &[Point]) -> (f64, f64) {
    let mut ds: Vec<f64> = grid
        .iter()
        .map(|p| distance_unchecked(schema, m, x, p))
        .filter(|d| d.is_finite() && *d > 0.0)
        .collect();
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    let pick = |rng: &mut ChaCha8Rng, lo: f64| -> f64 {
        let above: Vec<f64> = ds.iter().copied().filter(|d| *d > lo).collect();
        if !above.is_empty() && rng.gen_bool(0.7) {
            *above.choose(rng).unwrap()
        } else {
            lo + rng.gen_range(0.05..2.0)
        }
    };
    let eps = pick(rng, 0.0);
    let delta = pick(rng, eps);
    (eps, delta)
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..=3);
    let features: Vec<FeatureSpec> = (0..d).map(|i| random_feature(&mut rng, i)).collect();
    let schema = Schema::new(features, None).expect("generated schema is valid");
    let axes: Vec<Vec<f64>> = schema.features().iter().map(|f| f.grid_values().unwrap()).collect();
    let model = random_model(&mut rng, &axes);
    let ground_truth = random_truth(&mut rng, &axes, model.n_classes());
    let grid = enumerate_grid(&schema, u64::MAX).unwrap();
    let family = (0..QUERIES_PER_INSTANCE)
        .map(|_| {
            let x = grid.choose(&mut rng).unwrap().clone();
            let measure = random_measure(&mut rng, d);
            let (epsilon, delta) = random_radii(&mut rng, &schema, &measure, &x, &grid);
            TheoremQuery {
                x,
                epsilon,
                delta,
                measure,
            }
        })
        .collect();
    Instance {
        schema,
        model,
        ground_truth,
        family,
    }
}

/// `n` queries on `schema` under a fixed measure: random grid points with
/// radii drawn from realized distances.
pub fn random_family(
    seed: u64,
    schema: &Schema,
    measure: &DistanceMeasure,
    grid: &[Point],
    n: usize,
) -> Vec<TheoremQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if grid.is_empty() {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let x = grid.choose(&mut rng).unwrap().clone();
            let (epsilon, delta) = random_radii(&mut rng, schema, measure, &x, grid);
            TheoremQuery {
                x,
                epsilon,
                delta,
                measure: measure.clone(),
            }
        })
        .collect()
}
