//! Causal graph over features, the target and declared latent variables.
//!
//! A feature is causally relevant for a target when it is an ancestor of the
//! target, or when some latent node is an ancestor of both. Counterfactuals
//! are classified by which kind of feature they change.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Dataset;
use crate::space::{distance_unchecked, DistanceMeasure, Point, Schema};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CausalError {
    #[error("graph not acyclic")]
    Cyclic,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("feature {0} is not an input node of the graph")]
    MissingFeature(String),
    #[error("{0} is not an output node")]
    NotOutput(String),
    #[error("{0} is not an input node")]
    NotInput(String),
    #[error("graph has no output node")]
    NoOutput,
    #[error("counterfactual equals the original point")]
    NoChange,
    #[error("empty dataset")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Input,
    Output,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

/// On-disk form: `{"nodes": [{name, kind}], "edges": [[from, to], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

/// Validated DAG with a precomputed ancestor relation.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    nodes: Vec<Node>,
    index: BTreeMap<String, usize>,
    edges: Vec<(usize, usize)>,
    // ancestors[b][a] == true iff a directed path a -> ... -> b exists.
    ancestors: Vec<Vec<bool>>,
}

impl CausalGraph {
    pub fn new(spec: GraphSpec) -> Result<Self, CausalError> {
        let mut index = BTreeMap::new();
        for (i, n) in spec.nodes.iter().enumerate() {
            if index.insert(n.name.clone(), i).is_some() {
                return Err(CausalError::DuplicateNode(n.name.clone()));
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| CausalError::UnknownNode(name.to_string()))
        };
        let edges = spec
            .edges
            .iter()
            .map(|(a, b)| Ok((lookup(a)?, lookup(b)?)))
            .collect::<Result<Vec<_>, CausalError>>()?;
        let n = spec.nodes.len();
        let mut children = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for &(a, b) in &edges {
            children[a].push(b);
            indegree[b] += 1;
        }
        // Kahn's algorithm; the topological order also drives closure.
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        while let Some(v) = ready.pop() {
            order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() != n {
            return Err(CausalError::Cyclic);
        }
        let mut ancestors = vec![vec![false; n]; n];
        for &v in &order {
            for &c in &children[v] {
                let inherited = ancestors[v].clone();
                for (d, s) in ancestors[c].iter_mut().zip(inherited) {
                    *d |= s;
                }
                ancestors[c][v] = true;
            }
        }
        Ok(Self {
            nodes: spec.nodes,
            index,
            edges,
            ancestors,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, anyhow::Error> {
        let spec: GraphSpec = serde_json::from_str(text)?;
        Ok(Self::new(spec)?)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.nodes[a].name.as_str(), self.nodes[b].name.as_str()))
    }

    fn id(&self, name: &str) -> Result<usize, CausalError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| CausalError::UnknownNode(name.into()))
    }

    /// The single output node, if exactly one exists.
    pub fn output(&self) -> Result<&str, CausalError> {
        let mut outs = self.nodes.iter().filter(|n| n.kind == NodeKind::Output);
        match (outs.next(), outs.next()) {
            (Some(o), None) => Ok(&o.name),
            _ => Err(CausalError::NoOutput),
        }
    }

    /// Every schema feature must appear as an input node.
    pub fn check_schema(&self, schema: &Schema) -> Result<(), CausalError> {
        for f in schema.features() {
            match self.index.get(&f.name) {
                Some(&i) if self.nodes[i].kind == NodeKind::Input => {}
                _ => return Err(CausalError::MissingFeature(f.name.clone())),
            }
        }
        Ok(())
    }

    /// True iff a directed path of length >= 1 leads from `a` to `b`.
    pub fn is_ancestor(&self, a: &str, b: &str) -> Result<bool, CausalError> {
        let (a, b) = (self.id(a)?, self.id(b)?);
        Ok(self.ancestors[b][a])
    }

    pub fn causally_relevant(&self, feature: &str, target: &str) -> Result<bool, CausalError> {
        let (f, t) = (self.id(feature)?, self.id(target)?);
        if self.nodes[f].kind != NodeKind::Input {
            return Err(CausalError::NotInput(feature.into()));
        }
        if self.nodes[t].kind != NodeKind::Output {
            return Err(CausalError::NotOutput(target.into()));
        }
        if self.ancestors[t][f] {
            return Ok(true);
        }
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .any(|(l, n)| n.kind == NodeKind::Latent && self.ancestors[f][l] && self.ancestors[t][l]))
    }

    /// Partitions the features changed between `x` and `x_cf` by causal
    /// relevance for `target`.
    pub fn classify_counterfactual(
        &self,
        schema: &Schema,
        x: &Point,
        x_cf: &Point,
        target: &str,
    ) -> Result<CeClass, CausalError> {
        let mut relevant = Vec::new();
        let mut irrelevant = Vec::new();
        for (i, f) in schema.features().iter().enumerate() {
            if x[i] == x_cf[i] {
                continue;
            }
            if self.causally_relevant(&f.name, target)? {
                relevant.push(f.name.clone());
            } else {
                irrelevant.push(f.name.clone());
            }
        }
        CeClass::from_parts(relevant, irrelevant)
    }

    /// True iff every changed feature is causally irrelevant.
    pub fn imperceptible(&self, schema: &Schema, x: &Point, x_cf: &Point, target: &str) -> Result<bool, CausalError> {
        let c = self.classify_counterfactual(schema, x, x_cf, target)?;
        Ok(c.relevant_changed.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CeKind {
    Feasible,
    Contesting,
    Mixed,
}

impl std::fmt::Display for CeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CeKind::Feasible => "feasible",
            CeKind::Contesting => "contesting",
            CeKind::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CeClass {
    pub value: CeKind,
    pub relevant_changed: Vec<String>,
    pub irrelevant_changed: Vec<String>,
}

impl CeClass {
    fn from_parts(relevant_changed: Vec<String>, irrelevant_changed: Vec<String>) -> Result<Self, CausalError> {
        let value = match (relevant_changed.is_empty(), irrelevant_changed.is_empty()) {
            (true, true) => return Err(CausalError::NoChange),
            (false, true) => CeKind::Feasible,
            (true, false) => CeKind::Contesting,
            (false, false) => CeKind::Mixed,
        };
        Ok(Self {
            value,
            relevant_changed,
            irrelevant_changed,
        })
    }
}

/// Distance from `x_cf` to the nearest training row.
pub fn plausibility_penalty(
    schema: &Schema,
    x_cf: &Point,
    data: &Dataset,
    measure: &DistanceMeasure,
) -> Result<f64, CausalError> {
    if data.is_empty() {
        return Err(CausalError::EmptyDataset);
    }
    Ok(data
        .rows()
        .iter()
        .map(|(p, _)| distance_unchecked(schema, measure, x_cf, p))
        .fold(f64::INFINITY, f64::min))
}

/// The salary/dogs/loan graph: salary causes both dogs and loan.
pub fn loan_graph() -> CausalGraph {
    let node = |name: &str, kind| Node {
        name: name.into(),
        kind,
    };
    CausalGraph::new(GraphSpec {
        nodes: vec![
            node("salary", NodeKind::Input),
            node("dogs", NodeKind::Input),
            node("loan", NodeKind::Output),
        ],
        edges: vec![("salary".into(), "dogs".into()), ("salary".into(), "loan".into())],
    })
    .expect("static graph is acyclic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::FeatureSpec;

    fn schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("salary", 0.0, 100000.0, 1000.0),
                FeatureSpec::integer("dogs", 0.0, 10.0),
            ],
            None,
        )
        .unwrap()
    }

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec())
    }

    #[test]
    fn ancestry() {
        let g = loan_graph();
        assert!(g.is_ancestor("salary", "loan").unwrap());
        assert!(!g.is_ancestor("loan", "salary").unwrap());
        assert!(!g.is_ancestor("salary", "salary").unwrap());
        assert!(!g.is_ancestor("dogs", "loan").unwrap());
        assert!(matches!(
            g.is_ancestor("cats", "loan"),
            Err(CausalError::UnknownNode(_))
        ));
    }

    #[test]
    fn relevance() {
        let g = loan_graph();
        assert!(g.causally_relevant("salary", "loan").unwrap());
        assert!(!g.causally_relevant("dogs", "loan").unwrap());

        let latent = CausalGraph::from_json(
            r#"{"nodes":[{"name":"f","kind":"input"},{"name":"l","kind":"latent"},{"name":"t","kind":"output"}],
                "edges":[["l","f"],["l","t"]]}"#,
        )
        .unwrap();
        assert!(latent.causally_relevant("f", "t").unwrap());
        // A common cause that is itself an input feature does not count.
        let observed = CausalGraph::from_json(
            r#"{"nodes":[{"name":"f","kind":"input"},{"name":"l","kind":"input"},{"name":"t","kind":"output"}],
                "edges":[["l","f"],["l","t"]]}"#,
        )
        .unwrap();
        assert!(!observed.causally_relevant("f", "t").unwrap());
    }

    #[test]
    fn cycles_rejected() {
        let err = CausalGraph::from_json(
            r#"{"nodes":[{"name":"a","kind":"input"},{"name":"b","kind":"input"},{"name":"c","kind":"output"}],
                "edges":[["a","b"],["b","a"],["a","c"]]}"#,
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "graph not acyclic");
    }

    #[test]
    fn long_chains_are_transitive() {
        let n = 30;
        let nodes = (0..n)
            .map(|i| Node {
                name: format!("v{i}"),
                kind: if i == n - 1 { NodeKind::Output } else { NodeKind::Input },
            })
            .collect();
        // Edges listed in reverse to exercise the topological closure.
        let edges = (0..n - 1)
            .rev()
            .map(|i| (format!("v{i}"), format!("v{}", i + 1)))
            .collect();
        let g = CausalGraph::new(GraphSpec { nodes, edges }).unwrap();
        assert!(g.is_ancestor("v0", "v29").unwrap());
        assert!(!g.is_ancestor("v29", "v0").unwrap());
        assert_eq!(g.output().unwrap(), "v29");
    }

    #[test]
    fn classify_loan_scenarios() {
        let g = loan_graph();
        let s = schema();
        let (t, sal, d) = (50000.0, 48000.0, 1.0);
        let feasible = g
            .classify_counterfactual(&s, &p(&[sal, d]), &p(&[t, d]), "loan")
            .unwrap();
        assert_eq!(feasible.value, CeKind::Feasible);
        assert!(!g.imperceptible(&s, &p(&[sal, d]), &p(&[t, d]), "loan").unwrap());

        let contesting = g
            .classify_counterfactual(&s, &p(&[sal, 1.0]), &p(&[sal, 2.0]), "loan")
            .unwrap();
        assert_eq!(contesting.value, CeKind::Contesting);
        assert_eq!(contesting.irrelevant_changed, vec!["dogs".to_string()]);
        assert!(g.imperceptible(&s, &p(&[sal, 1.0]), &p(&[sal, 2.0]), "loan").unwrap());

        let mixed = g
            .classify_counterfactual(&s, &p(&[sal, 0.0]), &p(&[sal + (t - sal) / 2.0, 1.0]), "loan")
            .unwrap();
        assert_eq!(mixed.value, CeKind::Mixed);
        assert!(!g
            .imperceptible(&s, &p(&[sal, 0.0]), &p(&[sal + 1000.0, 1.0]), "loan")
            .unwrap());

        assert!(matches!(
            g.classify_counterfactual(&s, &p(&[sal, d]), &p(&[sal, d]), "loan"),
            Err(CausalError::NoChange)
        ));
    }

    #[test]
    fn classes_partition_the_grid() {
        let g = loan_graph();
        let s = schema();
        let x = p(&[40000.0, 2.0]);
        for cf in crate::space::enumerate_grid(&s, 1_000_000).unwrap() {
            if cf == x {
                continue;
            }
            let c = g.classify_counterfactual(&s, &x, &cf, "loan").unwrap();
            let expected = match (cf[0] != x[0], cf[1] != x[1]) {
                (true, false) => CeKind::Feasible,
                (false, true) => CeKind::Contesting,
                _ => CeKind::Mixed,
            };
            assert_eq!(c.value, expected);
            if g.imperceptible(&s, &x, &cf, "loan").unwrap() {
                assert_eq!(c.value, CeKind::Contesting);
            }
        }
    }

    #[test]
    fn plausibility() {
        let s = Schema::new(
            vec![
                FeatureSpec::numeric("a", 0.0, 5.0, 1.0).with_scale(1.0),
                FeatureSpec::numeric("b", 0.0, 5.0, 1.0).with_scale(1.0).immutable(),
            ],
            None,
        )
        .unwrap();
        let l1 = DistanceMeasure::normalized_l1();
        let data = Dataset::new(vec![(p(&[0.0, 0.0]), 0)]);
        assert_eq!(plausibility_penalty(&s, &p(&[0.0, 0.0]), &data, &l1).unwrap(), 0.0);
        assert_eq!(plausibility_penalty(&s, &p(&[1.0, 1.0]), &data, &l1).unwrap(), 2.0);
        let masked = l1.clone().masked();
        assert!(plausibility_penalty(&s, &p(&[1.0, 1.0]), &data, &masked)
            .unwrap()
            .is_infinite());
        assert!(plausibility_penalty(&s, &p(&[1.0, 1.0]), &Dataset::default(), &l1).is_err());
    }
}
