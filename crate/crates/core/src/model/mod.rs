//! Classifiers `f: I -> O`, their gradients, training, and the partial
//! human ground-truth oracle.

mod data;
mod linear;
mod tree;
mod truth;

pub use data::Dataset;
pub use linear::{Logistic, Softmax};
pub use tree::{Stump, TreeNode};
pub use truth::{CompareOp, Condition, GroundTruth, Region, TriState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{argmax, Point, Schema, SpaceError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model is not differentiable; use finite differences")]
    NotDifferentiable,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("label {0} is not in the output space")]
    UnknownLabel(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ThresholdStump,
    DecisionTree,
    Logistic,
    LinearSoftmax,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Stump(Stump),
    Tree(TreeNode),
    Logistic(Logistic),
    Softmax(Softmax),
}

/// A trained classifier over a fixed schema and label set.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    params: Params,
    n_classes: usize,
    n_features: usize,
}

/// Probabilities below this floor are clamped before taking logs, so one-hot
/// models yield a finite (piecewise constant) loss.
const PROB_FLOOR: f64 = 1e-12;

impl Model {
    pub fn new(params: Params, n_features: usize, n_classes: usize) -> Result<Self, ModelError> {
        if n_classes < 2 {
            return Err(ModelError::Invalid("need at least two classes".into()));
        }
        let check_feature = |i: usize| {
            if i < n_features {
                Ok(())
            } else {
                Err(ModelError::Invalid(format!("feature index {i} out of range")))
            }
        };
        let check_label = |l: usize| {
            if l < n_classes {
                Ok(())
            } else {
                Err(ModelError::Invalid(format!("label index {l} out of range")))
            }
        };
        match &params {
            Params::Stump(s) => {
                check_feature(s.feature)?;
                check_label(s.below)?;
                check_label(s.above)?;
            }
            Params::Tree(t) => t.visit(&mut |node| match node {
                TreeNode::Leaf { label } => check_label(*label),
                TreeNode::Split { feature, .. } => check_feature(*feature),
            })?,
            Params::Logistic(l) => {
                if n_classes != 2 {
                    return Err(ModelError::Invalid("logistic model needs exactly two classes".into()));
                }
                l.check(n_features)?;
            }
            Params::Softmax(s) => s.check(n_features, n_classes)?,
        }
        Ok(Self {
            params,
            n_classes,
            n_features,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            Params::Stump(_) => ModelKind::ThresholdStump,
            Params::Tree(_) => ModelKind::DecisionTree,
            Params::Logistic(_) => ModelKind::Logistic,
            Params::Softmax(_) => ModelKind::LinearSoftmax,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn differentiable(&self) -> bool {
        matches!(self.params, Params::Logistic(_) | Params::Softmax(_))
    }

    /// Predicted label; lowest index wins ties.
    pub fn predict(&self, x: &Point) -> usize {
        match &self.params {
            Params::Stump(s) => s.predict(x),
            Params::Tree(t) => t.predict(x),
            Params::Logistic(_) | Params::Softmax(_) => argmax(&self.predict_proba(x)),
        }
    }

    pub fn predict_proba(&self, x: &Point) -> Vec<f64> {
        match &self.params {
            Params::Stump(_) | Params::Tree(_) => {
                let mut p = vec![0.0; self.n_classes];
                p[self.predict(x)] = 1.0;
                p
            }
            Params::Logistic(l) => {
                let p1 = l.proba_positive(x);
                vec![1.0 - p1, p1]
            }
            Params::Softmax(s) => s.proba(x),
        }
    }

    /// Negative log-likelihood of `target` at `x`.
    pub fn loss(&self, x: &Point, target: usize) -> f64 {
        match &self.params {
            Params::Logistic(l) => l.nll(x, target),
            Params::Softmax(s) => s.nll(x, target),
            _ => -self.predict_proba(x)[target].max(PROB_FLOOR).ln(),
        }
    }

    /// Gradient of [`Model::loss`] with respect to `x`. Categorical components
    /// are always zero.
    pub fn gradient(
        &self,
        schema: &Schema,
        x: &Point,
        target: usize,
        mode: GradientMode,
    ) -> Result<Vec<f64>, ModelError> {
        let mut g = match mode {
            GradientMode::Analytic => match &self.params {
                Params::Logistic(l) => l.nll_gradient(x, target),
                Params::Softmax(s) => s.nll_gradient(x, target),
                _ => return Err(ModelError::NotDifferentiable),
            },
            GradientMode::FiniteDifference { relative_step } => {
                let mut g = vec![0.0; x.len()];
                let mut probe = x.clone();
                for (i, gi) in g.iter_mut().enumerate() {
                    if schema.feature(i).is_categorical() {
                        continue;
                    }
                    let h = relative_step * schema.scale(i);
                    let orig = x[i];
                    probe.values_mut()[i] = orig + h;
                    let up = self.loss(&probe, target);
                    probe.values_mut()[i] = orig - h;
                    let down = self.loss(&probe, target);
                    probe.values_mut()[i] = orig;
                    *gi = (up - down) / (2.0 * h);
                }
                g
            }
        };
        for (i, gi) in g.iter_mut().enumerate() {
            if schema.feature(i).is_categorical() {
                *gi = 0.0;
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    Analytic,
    /// Central differences with step `relative_step * scale` per feature.
    FiniteDifference {
        relative_step: f64,
    },
}

impl GradientMode {
    pub const DEFAULT_FD: GradientMode = GradientMode::FiniteDifference { relative_step: 1e-5 };

    /// Analytic when available, finite differences otherwise.
    pub fn for_model(f: &Model) -> Self {
        if f.differentiable() {
            GradientMode::Analytic
        } else {
            Self::DEFAULT_FD
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub max_depth: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            epochs: 500,
            learning_rate: 0.5,
            l2: 0.0,
            seed: 0,
        }
    }
}

/// Trains a model of `kind` on `data`. A single-class dataset yields a model
/// that always predicts that class.
pub fn fit_model(kind: ModelKind, data: &Dataset, n_classes: usize, hp: &Hyperparams) -> Result<Model, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let n_features = data.n_features();
    let params = match kind {
        ModelKind::ThresholdStump => Params::Stump(tree::fit_stump(data, n_classes)),
        ModelKind::DecisionTree => Params::Tree(tree::fit_tree(data, n_classes, hp.max_depth)),
        ModelKind::Logistic => {
            if n_classes != 2 {
                return Err(ModelError::Invalid("logistic model needs exactly two classes".into()));
            }
            Params::Logistic(linear::fit_logistic(data, hp))
        }
        ModelKind::LinearSoftmax => Params::Softmax(linear::fit_softmax(data, n_classes, hp)),
    };
    Model::new(params, n_features, n_classes)
}

/// Label assigned by the ground truth, if any.
pub fn ground_truth_label(gt: &GroundTruth, x: &Point) -> Option<usize> {
    gt.label(x)
}

/// Whether `f` disagrees with the ground truth at `x`; unknown where the
/// ground truth is undefined.
pub fn is_misclassified(f: &Model, gt: &GroundTruth, x: &Point) -> TriState {
    match gt.label(x) {
        None => TriState::Unknown,
        Some(y) => TriState::from(f.predict(x) != y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::FeatureSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn loan_schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("salary", 0.0, 1e6, 1000.0).with_scale(1000.0),
                FeatureSpec::integer("dogs", 0.0, 10.0).with_scale(1.0),
            ],
            None,
        )
        .unwrap()
    }

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec())
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

    fn logistic(w: Vec<f64>, b: f64) -> Model {
        Model::new(Params::Logistic(Logistic::new(w, b)), 2, 2).unwrap()
    }

    #[test]
    fn stump_predictions() {
        assert_eq!(stump(0, 50000.0).predict(&p(&[48000.0, 1.0])), 0);
        assert_eq!(stump(0, 50000.0).predict(&p(&[50000.0, 1.0])), 1);
        assert_eq!(stump(1, 2.0).predict(&p(&[20000.0, 1.0])), 0);
        assert_eq!(stump(1, 2.0).predict(&p(&[20000.0, 2.0])), 1);
        assert_eq!(stump(0, 50000.0).predict_proba(&p(&[60000.0, 0.0])), vec![0.0, 1.0]);
    }

    #[test]
    fn zero_logistic_is_symmetric() {
        let f = logistic(vec![0.0, 0.0], 0.0);
        assert_eq!(f.predict_proba(&p(&[123.0, 4.0])), vec![0.5, 0.5]);
        assert_eq!(f.predict(&p(&[123.0, 4.0])), 0);
        let g = f
            .gradient(&loan_schema(), &p(&[1.0, 1.0]), 1, GradientMode::Analytic)
            .unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let f = logistic(vec![1.0, 0.0], 0.0);
        let x = p(&[0.0, 3.0]);
        assert_eq!(f.predict_proba(&x)[1], 0.5);
        let g = f.gradient(&loan_schema(), &x, 1, GradientMode::Analytic).unwrap();
        assert_eq!(g, vec![-0.5, 0.0]);
    }

    #[test]
    fn analytic_gradient_rejected_for_trees() {
        let f = stump(0, 50000.0);
        assert!(matches!(
            f.gradient(&loan_schema(), &p(&[1.0, 1.0]), 1, GradientMode::Analytic),
            Err(ModelError::NotDifferentiable)
        ));
        let g = f
            .gradient(&loan_schema(), &p(&[10000.0, 1.0]), 1, GradientMode::DEFAULT_FD)
            .unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn predict_matches_argmax_proba() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let soft = Model::new(
            Params::Softmax(Softmax::new(
                (0..3)
                    .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                vec![0.0, 0.1, -0.1],
            )),
            2,
            3,
        )
        .unwrap();
        let lg = logistic(vec![0.3, -0.7], 0.2);
        for _ in 0..200 {
            let x = p(&[rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]);
            for f in [&soft, &lg] {
                assert_eq!(f.predict(&x), argmax(&f.predict_proba(&x)));
                let s: f64 = f.predict_proba(&x).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ground_truth_tristate() {
        let gt = GroundTruth::new(
            vec![Region {
                conditions: vec![Condition {
                    feature: 0,
                    op: CompareOp::Ge,
                    value: 50000.0,
                }],
                label: 1,
            }],
            Some(0),
        );
        let perfect = stump(0, 50000.0);
        assert_eq!(ground_truth_label(&gt, &p(&[50000.0, 3.0])), Some(1));
        assert_eq!(is_misclassified(&perfect, &gt, &p(&[50000.0, 3.0])), TriState::False);
        let biased = stump(1, 2.0);
        assert_eq!(is_misclassified(&biased, &gt, &p(&[20000.0, 2.0])), TriState::True);
        let partial = GroundTruth::new(gt.regions().to_vec(), None);
        assert_eq!(
            is_misclassified(&biased, &partial, &p(&[20000.0, 2.0])),
            TriState::Unknown
        );
    }

    #[test]
    fn single_class_dataset_gives_constant_model() {
        let data = Dataset::new(vec![(p(&[1.0, 1.0]), 1), (p(&[2.0, 0.0]), 1)]);
        for kind in [
            ModelKind::ThresholdStump,
            ModelKind::DecisionTree,
            ModelKind::Logistic,
            ModelKind::LinearSoftmax,
        ] {
            let f = fit_model(kind, &data, 2, &Hyperparams::default()).unwrap();
            assert_eq!(f.kind(), kind);
            for x in [[0.0, 0.0], [1e6, 10.0], [-3.0, 2.0]] {
                assert_eq!(f.predict(&p(&x)), 1, "{kind:?}");
            }
        }
        assert!(matches!(
            fit_model(ModelKind::Logistic, &Dataset::new(vec![]), 2, &Hyperparams::default()),
            Err(ModelError::EmptyDataset)
        ));
    }

    #[test]
    fn logistic_separates_two_points() {
        let data = Dataset::new(vec![(p(&[0.0, 0.0]), 0), (p(&[1.0, 1.0]), 1)]);
        let f = fit_model(ModelKind::Logistic, &data, 2, &Hyperparams::default()).unwrap();
        assert_eq!(data.accuracy(&f), 1.0);
        let s = fit_model(ModelKind::LinearSoftmax, &data, 2, &Hyperparams::default()).unwrap();
        assert_eq!(data.accuracy(&s), 1.0);
    }

    #[test]
    fn fit_is_deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = (0..40)
            .map(|_| {
                let x = p(&[rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)]);
                let y = usize::from(x[0] + 0.5 * x[1] > 7.0);
                (x, y)
            })
            .collect();
        let data = Dataset::new(rows);
        let hp = Hyperparams {
            seed: 9,
            ..Hyperparams::default()
        };
        for kind in [ModelKind::Logistic, ModelKind::LinearSoftmax, ModelKind::DecisionTree] {
            assert_eq!(
                fit_model(kind, &data, 2, &hp).unwrap(),
                fit_model(kind, &data, 2, &hp).unwrap()
            );
        }
    }
}
