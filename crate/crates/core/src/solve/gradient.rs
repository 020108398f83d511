use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{project, rank, Candidate, Evaluator, Lambda, Problem, Reason, SolveError, SolveOutcome, SolveRequest};
use crate::model::GradientMode;
use crate::space::{DistanceKind, DistanceMeasure, Point, Schema};

/// Below this every gradient component counts as zero.
const FLAT: f64 = 1e-15;

pub(crate) fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Subgradient of the input distance at `z`, zero where it is not defined.
fn distance_gradient(schema: &Schema, m: &DistanceMeasure, x: &Point, z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut g = vec![0.0; n];
    let scale = |i: usize| if m.normalize { schema.scale(i) } else { 1.0 };
    let weight = |i: usize| m.weights.as_ref().map_or(1.0, |w| w[i]);
    let diff = |i: usize| (z[i] - x[i]) / scale(i);
    let numeric = |i: usize| !schema.feature(i).is_categorical();
    match m.kind {
        DistanceKind::L0 => {}
        DistanceKind::L1 | DistanceKind::WeightedL1 => {
            for i in (0..n).filter(|&i| numeric(i)) {
                let w = if m.kind == DistanceKind::WeightedL1 {
                    weight(i)
                } else {
                    1.0
                };
                g[i] = w * sgn(diff(i)) / scale(i);
            }
        }
        DistanceKind::L2 => {
            let norm = (0..n)
                .filter(|&i| numeric(i))
                .map(|i| diff(i).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for i in (0..n).filter(|&i| numeric(i)) {
                    g[i] = diff(i) / (norm * scale(i));
                }
            }
        }
        DistanceKind::Linf => {
            let top = (0..n)
                .filter(|&i| numeric(i))
                .max_by(|&a, &b| diff(a).abs().total_cmp(&diff(b).abs()).then(b.cmp(&a)));
            if let Some(i) = top.filter(|&i| diff(i) != 0.0) {
                g[i] = sgn(diff(i)) / scale(i);
            }
        }
    }
    g
}

fn clamp_bounds(schema: &Schema, z: &mut [f64]) {
    for (f, v) in schema.features().iter().zip(z.iter_mut()) {
        *v = v.clamp(f.lo.unwrap_or(f64::NEG_INFINITY), f.hi.unwrap_or(f64::INFINITY));
    }
}

/// Gradient descent on the objective, with the continuous iterate snapped to
/// the grid after each step. Restart 0 starts at `x`; later restarts start
/// from a seeded perturbation of it.
pub fn solve_gradient(problem: Problem<'_>, req: &SolveRequest) -> Result<SolveOutcome, SolveError> {
    let ev = Evaluator::new(problem, req)?;
    let mode = if problem.model.differentiable() {
        GradientMode::Analytic
    } else if req.budget.finite_differences {
        GradientMode::DEFAULT_FD
    } else {
        return Err(SolveError::NotDifferentiable);
    };
    let schema = problem.schema;
    let x = &req.x;
    let frozen: Vec<bool> = schema
        .features()
        .iter()
        .map(|f| f.is_categorical() || (req.measure.respect_mutability && !f.mutable))
        .collect();
    let grad_class = ev.gradient_target(x);
    let schedule = req.lambda.schedule();
    let anneal = matches!(req.lambda, Lambda::Anneal);
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);

    let initial_loss_grad = problem.model.gradient(schema, x, grad_class, mode)?;
    let stationary = initial_loss_grad
        .iter()
        .zip(&frozen)
        .all(|(g, fz)| *fz || g.abs() < FLAT);

    let mut found: Vec<Candidate> = Vec::new();
    for restart in 0..req.budget.restarts.max(1) {
        let mut z: Vec<f64> = x.values().to_vec();
        if restart > 0 {
            for (i, v) in z.iter_mut().enumerate() {
                if !frozen[i] {
                    *v += rng.gen_range(-1.0..1.0) * schema.scale(i);
                }
            }
            clamp_bounds(schema, &mut z);
        }
        for &lambda in &schedule {
            let mut reached = false;
            for _ in 0..req.budget.max_iters {
                let here = Point::new(z.clone());
                let gl = problem.model.gradient(schema, &here, grad_class, mode)?;
                let gd = distance_gradient(schema, &req.measure, x, &z);
                let mut moved = false;
                for i in 0..z.len() {
                    if frozen[i] {
                        continue;
                    }
                    let s = schema.scale(i);
                    let step = req.budget.learning_rate * s * s * (gd[i] + lambda * gl[i]);
                    if step != 0.0 {
                        z[i] -= step;
                        moved = true;
                    }
                }
                clamp_bounds(schema, &mut z);
                let c = ev.evaluate(project(schema, &z), lambda);
                if ev.feasible(&c) && (!anneal || ev.reaches_target(&c)) {
                    reached |= ev.reaches_target(&c);
                    found.push(c);
                }
                if !moved {
                    break;
                }
            }
            if anneal && reached {
                break;
            }
        }
    }

    let candidates = rank(found, req.k);
    let reason = if !candidates.is_empty() {
        None
    } else if stationary {
        Some(Reason::Stationary)
    } else if anneal {
        Some(Reason::TargetNotReached)
    } else {
        Some(Reason::NoFeasibleCandidate)
    };
    Ok(SolveOutcome {
        candidates,
        reason,
        evaluations: ev.evaluations(),
    })
}
