use super::{Dataset, ModelError};
use crate::space::Point;

/// `x[feature] >= threshold` predicts `above`, otherwise `below`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub below: usize,
    pub above: usize,
}

impl Stump {
    pub fn constant(label: usize) -> Self {
        Self {
            feature: 0,
            threshold: f64::NEG_INFINITY,
            below: label,
            above: label,
        }
    }

    pub fn predict(&self, x: &Point) -> usize {
        if x[self.feature] >= self.threshold {
            self.above
        } else {
            self.below
        }
    }
}

/// Binary decision tree; `x[feature] < threshold` goes left.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        label: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &Point) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { label } => return *label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub(super) fn visit(&self, f: &mut impl FnMut(&TreeNode) -> Result<(), ModelError>) -> Result<(), ModelError> {
        f(self)?;
        if let TreeNode::Split { left, right, .. } = self {
            left.visit(f)?;
            right.visit(f)?;
        }
        Ok(())
    }
}

fn counts(data: &Dataset, idx: &[usize], n_classes: usize) -> Vec<usize> {
    let mut c = vec![0; n_classes];
    for &i in idx {
        c[data.label(i)] += 1;
    }
    c
}

fn majority(c: &[usize]) -> usize {
    let mut best = 0;
    for (i, &n) in c.iter().enumerate() {
        if n > c[best] {
            best = i;
        }
    }
    best
}

fn gini(c: &[usize]) -> f64 {
    let n: usize = c.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - c.iter().map(|&k| (k as f64 / n).powi(2)).sum::<f64>()
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Best gini split over midpoints; ties go to the lowest feature index, then
/// the lowest threshold.
fn best_split(data: &Dataset, idx: &[usize], n_classes: usize) -> Option<SplitChoice> {
    let n = idx.len() as f64;
    let mut best: Option<SplitChoice> = None;
    for feature in 0..data.n_features() {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| data.point(a)[feature].total_cmp(&data.point(b)[feature]));
        let mut left = vec![0usize; n_classes];
        let mut right = counts(data, idx, n_classes);
        for w in 0..order.len().saturating_sub(1) {
            let y = data.label(order[w]);
            left[y] += 1;
            right[y] -= 1;
            let a = data.point(order[w])[feature];
            let b = data.point(order[w + 1])[feature];
            if a == b {
                continue;
            }
            let nl = (w + 1) as f64;
            let impurity = (nl * gini(&left) + (n - nl) * gini(&right)) / n;
            if best.as_ref().is_none_or(|s| impurity < s.impurity - 1e-12) {
                best = Some(SplitChoice {
                    feature,
                    threshold: 0.5 * (a + b),
                    impurity,
                });
            }
        }
    }
    best
}

fn grow(data: &Dataset, idx: &[usize], n_classes: usize, depth_left: usize) -> TreeNode {
    let c = counts(data, idx, n_classes);
    let leaf = TreeNode::Leaf { label: majority(&c) };
    let parent = gini(&c);
    if depth_left == 0 || parent == 0.0 {
        return leaf;
    }
    match best_split(data, idx, n_classes) {
        Some(s) if s.impurity < parent - 1e-12 => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| data.point(i)[s.feature] < s.threshold);
            TreeNode::Split {
                feature: s.feature,
                threshold: s.threshold,
                left: Box::new(grow(data, &l, n_classes, depth_left - 1)),
                right: Box::new(grow(data, &r, n_classes, depth_left - 1)),
            }
        }
        _ => leaf,
    }
}

pub(super) fn fit_tree(data: &Dataset, n_classes: usize, max_depth: usize) -> TreeNode {
    let idx: Vec<usize> = (0..data.len()).collect();
    grow(data, &idx, n_classes, max_depth)
}

pub(super) fn fit_stump(data: &Dataset, n_classes: usize) -> Stump {
    match fit_tree(data, n_classes, 1) {
        TreeNode::Leaf { label } => Stump::constant(label),
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let label = |n: &TreeNode| match n {
                TreeNode::Leaf { label } => *label,
                TreeNode::Split { .. } => unreachable!("depth-1 tree"),
            };
            Stump {
                feature,
                threshold,
                below: label(&left),
                above: label(&right),
            }
        }
    }
}
