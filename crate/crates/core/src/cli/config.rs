//! JSON run configuration. Features, labels and levels are referenced by name
//! on disk and resolved to indices at load time.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::causal::{CausalGraph, GraphSpec};
use crate::explain::Policy;
use crate::model::{
    fit_model, CompareOp, Condition, Dataset, GroundTruth, Hyperparams, Logistic, Model, ModelKind, Params, Region,
    Softmax, Stump, TreeNode,
};
use crate::solve::{Budget, Lambda};
use crate::space::{
    validate_point, DistanceKind, DistanceMeasure, FeatureSpec, FeatureValue, OutputSpace, Point, PointMap, Schema,
    SpaceError,
};

/// One problem found while loading, located by a JSON path such as
/// `features[1].lo`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}: {}", .errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid { file: PathBuf, errors: Vec<LoadError> },
}

fn err(path: impl Into<String>, message: impl fmt::Display) -> LoadError {
    LoadError {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Parses JSON text, reporting the path of the first offending value.
pub fn from_json<T: DeserializeOwned>(text: &str, prefix: &str) -> Result<T, LoadError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner == ".") {
            (true, _) => inner,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{inner}"),
        };
        err(path, e.into_inner())
    })
}

fn from_value<T: DeserializeOwned>(v: &serde_json::Value, prefix: &str) -> Result<T, LoadError> {
    from_json(&v.to_string(), prefix)
}

fn default_subject() -> String {
    "P".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    features: Vec<FeatureSpec>,
    output_space: OutputSpace,
    model: RawModel,
    #[serde(default)]
    ground_truth: Option<RawTruth>,
    #[serde(default)]
    causal_graph: Option<GraphRef>,
    #[serde(default)]
    measure: Option<RawMeasure>,
    #[serde(default)]
    solver: SolverDefaults,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_subject")]
    subject: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: ModelKind,
    #[serde(default)]
    params: Option<serde_json::Value>,
    #[serde(default)]
    fit_from: Option<PathBuf>,
    #[serde(default)]
    hyperparams: Hyperparams,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStump {
    feature: String,
    threshold: f64,
    below: String,
    above: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawTree {
    Leaf {
        label: String,
    },
    Split {
        feature: String,
        threshold: f64,
        left: Box<RawTree>,
        right: Box<RawTree>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLogistic {
    weights: BTreeMap<String, f64>,
    #[serde(default)]
    bias: f64,
    #[serde(default)]
    center: BTreeMap<String, f64>,
    #[serde(default)]
    scale: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSoftmax {
    weights: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    biases: BTreeMap<String, f64>,
    #[serde(default)]
    center: BTreeMap<String, f64>,
    #[serde(default)]
    scale: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCondition {
    feature: String,
    op: CompareOp,
    value: FeatureValue,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    conditions: Vec<RawCondition>,
    label: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruth {
    #[serde(default)]
    regions: Vec<RawRegion>,
    #[serde(default)]
    default: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GraphRef {
    File(PathBuf),
    Inline(GraphSpec),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    kind: DistanceKind,
    #[serde(default)]
    weights: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    respect_mutability: bool,
    #[serde(default)]
    normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Brute,
    Grad,
    Ga,
}

fn default_lambda() -> Lambda {
    Lambda::Anneal
}

fn default_k() -> usize {
    1
}

fn default_fgsm_step() -> f64 {
    0.1
}

/// Solver settings applied unless overridden on the command line.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverDefaults {
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default = "default_lambda")]
    pub lambda: Lambda,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub plausibility_weight: f64,
    #[serde(default)]
    pub budget: Budget,
    /// Step of the single-step gradient sign attack, in units of scale.
    #[serde(default = "default_fgsm_step")]
    pub fgsm_step: f64,
}

impl Default for SolverDefaults {
    fn default() -> Self {
        Self {
            solver: SolverKind::default(),
            lambda: default_lambda(),
            k: default_k(),
            epsilon: None,
            policy: Policy::default(),
            plausibility_weight: 0.0,
            budget: Budget::default(),
            fgsm_step: default_fgsm_step(),
        }
    }
}

/// A fully validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub schema: Schema,
    pub output: OutputSpace,
    pub model: Model,
    pub ground_truth: GroundTruth,
    pub graph: Option<CausalGraph>,
    pub measure: DistanceMeasure,
    pub solver: SolverDefaults,
    pub seed: u64,
    pub subject: String,
    /// Rows the model was fitted on, when it was fitted at load time.
    pub training: Option<Dataset>,
    /// Hex SHA-256 of the config file bytes.
    pub digest: String,
}

fn feature_index(schema: &Schema, name: &str, path: &str) -> Result<usize, LoadError> {
    schema
        .index_of(name)
        .ok_or_else(|| err(path, format!("unknown feature {name:?}")))
}

fn label_index(output: &OutputSpace, name: &str, path: &str) -> Result<usize, LoadError> {
    output
        .index_of(name)
        .ok_or_else(|| err(path, format!("unknown label {name:?}")))
}

fn per_feature(schema: &Schema, map: &BTreeMap<String, f64>, fill: f64, path: &str) -> Result<Vec<f64>, LoadError> {
    let mut v = vec![fill; schema.len()];
    for (name, x) in map {
        v[feature_index(schema, name, &format!("{path}.{name}"))?] = *x;
    }
    Ok(v)
}

fn convert_tree(t: &RawTree, schema: &Schema, output: &OutputSpace, path: &str) -> Result<TreeNode, LoadError> {
    Ok(match t {
        RawTree::Leaf { label } => TreeNode::Leaf {
            label: label_index(output, label, &format!("{path}.label"))?,
        },
        RawTree::Split {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::Split {
            feature: feature_index(schema, feature, &format!("{path}.feature"))?,
            threshold: *threshold,
            left: Box::new(convert_tree(left, schema, output, &format!("{path}.left"))?),
            right: Box::new(convert_tree(right, schema, output, &format!("{path}.right"))?),
        },
    })
}

fn model_from_params(
    kind: ModelKind,
    params: &serde_json::Value,
    schema: &Schema,
    output: &OutputSpace,
) -> Result<Model, LoadError> {
    const P: &str = "model.params";
    let params = match kind {
        ModelKind::ThresholdStump => {
            let r: RawStump = from_value(params, P)?;
            Params::Stump(Stump {
                feature: feature_index(schema, &r.feature, &format!("{P}.feature"))?,
                threshold: r.threshold,
                below: label_index(output, &r.below, &format!("{P}.below"))?,
                above: label_index(output, &r.above, &format!("{P}.above"))?,
            })
        }
        ModelKind::DecisionTree => {
            let r: RawTree = from_value(params, P)?;
            Params::Tree(convert_tree(&r, schema, output, P)?)
        }
        ModelKind::Logistic => {
            let r: RawLogistic = from_value(params, P)?;
            Params::Logistic(Logistic {
                weights: per_feature(schema, &r.weights, 0.0, &format!("{P}.weights"))?,
                bias: r.bias,
                center: per_feature(schema, &r.center, 0.0, &format!("{P}.center"))?,
                scale: per_feature(schema, &r.scale, 1.0, &format!("{P}.scale"))?,
            })
        }
        ModelKind::LinearSoftmax => {
            let r: RawSoftmax = from_value(params, P)?;
            let mut weights = vec![vec![0.0; schema.len()]; output.len()];
            for (label, row) in &r.weights {
                let k = label_index(output, label, &format!("{P}.weights.{label}"))?;
                weights[k] = per_feature(schema, row, 0.0, &format!("{P}.weights.{label}"))?;
            }
            let mut biases = vec![0.0; output.len()];
            for (label, b) in &r.biases {
                biases[label_index(output, label, &format!("{P}.biases.{label}"))?] = *b;
            }
            Params::Softmax(Softmax {
                weights,
                biases,
                center: per_feature(schema, &r.center, 0.0, &format!("{P}.center"))?,
                scale: per_feature(schema, &r.scale, 1.0, &format!("{P}.scale"))?,
            })
        }
    };
    Model::new(params, schema.len(), output.len()).map_err(|e| err(P, e))
}

fn convert_truth(raw: &RawTruth, schema: &Schema, output: &OutputSpace) -> Result<GroundTruth, LoadError> {
    let mut regions = Vec::with_capacity(raw.regions.len());
    for (r, region) in raw.regions.iter().enumerate() {
        let base = format!("ground_truth.regions[{r}]");
        let mut conditions = Vec::with_capacity(region.conditions.len());
        for (c, cond) in region.conditions.iter().enumerate() {
            let path = format!("{base}.conditions[{c}]");
            let feature = feature_index(schema, &cond.feature, &format!("{path}.feature"))?;
            let spec = schema.feature(feature);
            let value = match (&cond.value, spec.is_categorical()) {
                (FeatureValue::Number(v), false) => *v,
                (FeatureValue::Level(l), true) => spec
                    .levels
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| err(format!("{path}.value"), format!("unknown level {l:?}")))?
                    as f64,
                (FeatureValue::Number(_), true) => {
                    return Err(err(format!("{path}.value"), "categorical conditions take a level name"))
                }
                (FeatureValue::Level(_), false) => {
                    return Err(err(format!("{path}.value"), "numeric conditions take a number"))
                }
            };
            conditions.push(Condition {
                feature,
                op: cond.op,
                value,
            });
        }
        regions.push(Region {
            conditions,
            label: label_index(output, &region.label, &format!("{base}.label"))?,
        });
    }
    let default = raw
        .default
        .as_deref()
        .map(|l| label_index(output, l, "ground_truth.default"))
        .transpose()?;
    Ok(GroundTruth::new(regions, default))
}

fn convert_measure(raw: &RawMeasure, schema: &Schema) -> Result<DistanceMeasure, LoadError> {
    let weights = match &raw.weights {
        None => None,
        Some(map) => {
            if let Some(missing) = schema.features().iter().find(|f| !map.contains_key(&f.name)) {
                return Err(err(
                    "measure.weights",
                    format!("no weight for feature {:?}", missing.name),
                ));
            }
            Some(per_feature(schema, map, 0.0, "measure.weights")?)
        }
    };
    let m = DistanceMeasure {
        kind: raw.kind,
        weights,
        respect_mutability: raw.respect_mutability,
        normalize: raw.normalize,
    };
    m.validate(schema).map_err(|e| err("measure", e))?;
    Ok(m)
}

fn schema_error_path(raw: &[FeatureSpec], e: &SpaceError) -> String {
    let name = match e {
        SpaceError::InvalidFeature { name, .. } | SpaceError::DuplicateFeature(name) => Some(name),
        _ => None,
    };
    name.and_then(|n| raw.iter().rposition(|f| &f.name == n))
        .map_or_else(|| "features".to_string(), |i| format!("features[{i}]"))
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn invalid(file: &Path, errors: Vec<LoadError>) -> ConfigError {
    ConfigError::Invalid {
        file: file.to_path_buf(),
        errors,
    }
}

/// Loads and validates a config. Relative paths inside it (datasets, graph
/// files) are resolved against the config's directory.
pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let bytes = fs::read(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|e| invalid(path, vec![err("", e)]))?;
    let raw: RawConfig = from_json(&text, "").map_err(|e| invalid(path, vec![e]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut errors = Vec::new();

    if let Err(e) = raw.output_space.validate() {
        errors.push(err("output_space", e));
    }
    let schema = match Schema::new(raw.features.clone(), None) {
        Ok(s) => Some(s),
        Err(e) => {
            errors.push(err(schema_error_path(&raw.features, &e), e));
            None
        }
    };
    let Some(schema) = schema.filter(|_| errors.is_empty()) else {
        return Err(invalid(path, errors));
    };
    let output = raw.output_space;

    let mut training = None;
    let model = match (&raw.model.params, &raw.model.fit_from) {
        (Some(p), None) => model_from_params(raw.model.kind, p, &schema, &output)
            .map_err(|e| errors.push(e))
            .ok(),
        (None, Some(csv_path)) => {
            let full = base.join(csv_path);
            let fitted = fs::File::open(&full)
                .map_err(|e| err("model.fit_from", format!("{}: {e}", full.display())))
                .and_then(|f| Dataset::from_csv(f, &schema, &output).map_err(|e| err("model.fit_from", e)))
                .and_then(|data| {
                    let m = fit_model(raw.model.kind, &data, output.len(), &raw.model.hyperparams)
                        .map_err(|e| err("model", e))?;
                    Ok((m, data))
                });
            match fitted {
                Ok((m, data)) => {
                    training = Some(data);
                    Some(m)
                }
                Err(e) => {
                    errors.push(e);
                    None
                }
            }
        }
        _ => {
            errors.push(err("model", "exactly one of params and fit_from is required"));
            None
        }
    };
    if let Some(m) = &model {
        if m.n_classes() != output.len() {
            errors.push(err(
                "model",
                format!("model has {} classes, output space has {}", m.n_classes(), output.len()),
            ));
        }
    }

    let ground_truth = match &raw.ground_truth {
        Some(t) => convert_truth(t, &schema, &output).map_err(|e| errors.push(e)).ok(),
        None => Some(GroundTruth::default()),
    };

    let graph = match &raw.causal_graph {
        None => None,
        Some(g) => {
            let spec = match g {
                GraphRef::Inline(spec) => Ok(spec.clone()),
                GraphRef::File(p) => {
                    let full = base.join(p);
                    fs::read_to_string(&full)
                        .map_err(|e| err("causal_graph", format!("{}: {e}", full.display())))
                        .and_then(|t| from_json::<GraphSpec>(&t, "causal_graph"))
                }
            };
            match spec.and_then(|s| CausalGraph::new(s).map_err(|e| err("causal_graph", e))) {
                Ok(g) => match g.check_schema(&schema).and_then(|_| g.output().map(|_| ())) {
                    Ok(()) => Some(g),
                    Err(e) => {
                        errors.push(err("causal_graph", e));
                        None
                    }
                },
                Err(e) => {
                    errors.push(e);
                    None
                }
            }
        }
    };

    let measure = match &raw.measure {
        Some(m) => convert_measure(m, &schema).map_err(|e| errors.push(e)).ok(),
        None => Some(DistanceMeasure::normalized_l1()),
    };

    let s = &raw.solver;
    if s.k == 0 {
        errors.push(err("solver.k", "must be >= 1"));
    }
    if let Some(e) = s.epsilon.filter(|e| e.is_nan() || *e <= 0.0) {
        errors.push(err("solver.epsilon", format!("must be > 0, got {e}")));
    }
    if s.plausibility_weight.is_nan() || s.plausibility_weight < 0.0 {
        errors.push(err("solver.plausibility_weight", "must be >= 0"));
    }

    match (model, ground_truth, measure) {
        (Some(model), Some(ground_truth), Some(measure)) if errors.is_empty() => Ok(Config {
            schema,
            output,
            model,
            ground_truth,
            graph,
            measure,
            solver: raw.solver,
            seed: raw.seed,
            subject: raw.subject,
            training,
            digest,
        }),
        _ => Err(invalid(path, errors)),
    }
}

/// Reads a point file (`{"feature": value, ...}`) and encodes it.
pub fn read_point(path: &Path, schema: &Schema) -> Result<Point, ConfigError> {
    let text = read(path)?;
    let map: PointMap = from_json(&text, "").map_err(|e| invalid(path, vec![e]))?;
    let violations = validate_point(schema, &map);
    if !violations.is_empty() {
        return Err(invalid(path, violations.iter().map(|v| err("", v)).collect()));
    }
    schema.encode(&map).map_err(|e| invalid(path, vec![err("", e)]))
}

/// Reads any JSON document with path-annotated errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = read(path)?;
    from_json(&text, "").map_err(|e| invalid(path, vec![e]))
}
