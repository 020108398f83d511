use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Hyperparams, ModelError};
use crate::space::Point;

/// Binary logistic regression on standardized inputs:
/// `p(labels[1] | x) = sigmoid(bias + sum_i w_i (x_i - center_i) / scale_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Multinomial logistic regression, one weight row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Softmax {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

fn check_standardization(center: &[f64], scale: &[f64], n: usize) -> Result<(), ModelError> {
    if center.len() != n || scale.len() != n {
        return Err(ModelError::Invalid(format!("standardization must cover {n} features")));
    }
    if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(ModelError::Invalid("standardization scales must be positive".into()));
    }
    Ok(())
}

fn standardize(x: &Point, center: &[f64], scale: &[f64]) -> Vec<f64> {
    x.values()
        .iter()
        .zip(center.iter().zip(scale))
        .map(|(v, (c, s))| (v - c) / s)
        .collect()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Logistic {
    /// Weights on raw (unstandardized) inputs.
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        let n = weights.len();
        Self {
            weights,
            bias,
            center: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub(super) fn check(&self, n: usize) -> Result<(), ModelError> {
        if self.weights.len() != n {
            return Err(ModelError::Invalid(format!(
                "logistic has {} weights for {n} features",
                self.weights.len()
            )));
        }
        check_standardization(&self.center, &self.scale, n)
    }

    fn logit(&self, x: &Point) -> f64 {
        let z = standardize(x, &self.center, &self.scale);
        self.bias + self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn proba_positive(&self, x: &Point) -> f64 {
        sigmoid(self.logit(x))
    }

    pub(super) fn nll(&self, x: &Point, target: usize) -> f64 {
        let z = self.logit(x);
        if target == 1 {
            softplus(-z)
        } else {
            softplus(z)
        }
    }

    pub(super) fn nll_gradient(&self, x: &Point, target: usize) -> Vec<f64> {
        let p1 = self.proba_positive(x);
        let dz = if target == 1 { p1 - 1.0 } else { p1 };
        self.weights.iter().zip(&self.scale).map(|(w, s)| dz * w / s).collect()
    }
}

impl Softmax {
    pub fn new(weights: Vec<Vec<f64>>, biases: Vec<f64>) -> Self {
        let n = weights.first().map_or(0, Vec::len);
        Self {
            weights,
            biases,
            center: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub(super) fn check(&self, n: usize, k: usize) -> Result<(), ModelError> {
        if self.weights.len() != k || self.biases.len() != k {
            return Err(ModelError::Invalid(format!("softmax needs {k} weight rows and biases")));
        }
        if self.weights.iter().any(|r| r.len() != n) {
            return Err(ModelError::Invalid(format!(
                "softmax weight rows must have {n} entries"
            )));
        }
        check_standardization(&self.center, &self.scale, n)
    }

    fn logits(&self, x: &Point) -> Vec<f64> {
        let z = standardize(x, &self.center, &self.scale);
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| b + row.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn proba(&self, x: &Point) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub(super) fn nll(&self, x: &Point, target: usize) -> f64 {
        let z = self.logits(x);
        log_sum_exp(&z) - z[target]
    }

    pub(super) fn nll_gradient(&self, x: &Point, target: usize) -> Vec<f64> {
        let p = self.proba(x);
        (0..self.scale.len())
            .map(|i| {
                let dz: f64 = p
                    .iter()
                    .enumerate()
                    .map(|(k, pk)| (pk - f64::from(u8::from(k == target))) * self.weights[k][i])
                    .sum();
                dz / self.scale[i]
            })
            .collect()
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Per-feature mean and standard deviation (zero deviation maps to 1).
fn moments(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let n = data.len() as f64;
    let d = data.n_features();
    let mut mean = vec![0.0; d];
    for (x, _) in data.rows() {
        for (m, v) in mean.iter_mut().zip(x.values()) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for (x, _) in data.rows() {
        for ((s, v), m) in var.iter_mut().zip(x.values()).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let std = var
        .into_iter()
        .map(|v| if v.sqrt() > 0.0 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, std)
}

const CONSTANT_LOGIT: f64 = 10.0;

fn single_class(data: &Dataset) -> Option<usize> {
    let first = data.label(0);
    data.rows().iter().all(|(_, y)| *y == first).then_some(first)
}

pub(super) fn fit_logistic(data: &Dataset, hp: &Hyperparams) -> Logistic {
    let d = data.n_features();
    let (center, scale) = moments(data);
    if let Some(c) = single_class(data) {
        let bias = if c == 1 { CONSTANT_LOGIT } else { -CONSTANT_LOGIT };
        return Logistic {
            weights: vec![0.0; d],
            bias,
            center,
            scale,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut m = Logistic {
        weights: (0..d).map(|_| rng.gen_range(-0.01..0.01)).collect(),
        bias: 0.0,
        center,
        scale,
    };
    let xs: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .map(|(x, _)| standardize(x, &m.center, &m.scale))
        .collect();
    let n = data.len() as f64;
    for _ in 0..hp.epochs {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (z, (_, y)) in xs.iter().zip(data.rows()) {
            let logit = m.bias + m.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>();
            let err = sigmoid(logit) - *y as f64;
            gb += err / n;
            for (g, v) in gw.iter_mut().zip(z) {
                *g += err * v / n;
            }
        }
        for (w, g) in m.weights.iter_mut().zip(&gw) {
            *w -= hp.learning_rate * (g + hp.l2 * *w);
        }
        m.bias -= hp.learning_rate * gb;
    }
    m
}

pub(super) fn fit_softmax(data: &Dataset, k: usize, hp: &Hyperparams) -> Softmax {
    let d = data.n_features();
    let (center, scale) = moments(data);
    if let Some(c) = single_class(data) {
        let mut biases = vec![0.0; k];
        biases[c] = CONSTANT_LOGIT;
        return Softmax {
            weights: vec![vec![0.0; d]; k],
            biases,
            center,
            scale,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut m = Softmax {
        weights: (0..k)
            .map(|_| (0..d).map(|_| rng.gen_range(-0.01..0.01)).collect())
            .collect(),
        biases: vec![0.0; k],
        center,
        scale,
    };
    let xs: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .map(|(x, _)| standardize(x, &m.center, &m.scale))
        .collect();
    let n = data.len() as f64;
    for _ in 0..hp.epochs {
        let mut gw = vec![vec![0.0; d]; k];
        let mut gb = vec![0.0; k];
        for (z, (_, y)) in xs.iter().zip(data.rows()) {
            let logits: Vec<f64> = m
                .weights
                .iter()
                .zip(&m.biases)
                .map(|(row, b)| b + row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>())
                .collect();
            let p = softmax(&logits);
            for c in 0..k {
                let err = p[c] - f64::from(u8::from(c == *y));
                gb[c] += err / n;
                for (g, v) in gw[c].iter_mut().zip(z) {
                    *g += err * v / n;
                }
            }
        }
        for c in 0..k {
            for (w, g) in m.weights[c].iter_mut().zip(&gw[c]) {
                *w -= hp.learning_rate * (g + hp.l2 * *w);
            }
            m.biases[c] -= hp.learning_rate * gb[c];
        }
    }
    m
}
