use super::gradient::sgn;
use super::{Candidate, Evaluator, Lambda, Problem, SolveError, SolveRequest};
use crate::model::GradientMode;
use crate::space::{DistanceMeasure, Point};

/// One signed step that increases the loss of the currently predicted class:
/// `x + step * scale * sign(grad L(x, f(x)))`, clamped to the feature bounds.
/// Categorical features, and immutable ones under a masking measure, stay put.
pub fn generate_fgsm(
    problem: Problem<'_>,
    x: &Point,
    measure: &DistanceMeasure,
    epsilon_step: f64,
) -> Result<Candidate, SolveError> {
    if !problem.model.differentiable() {
        return Err(SolveError::NotDifferentiable);
    }
    if !(epsilon_step >= 0.0 && epsilon_step.is_finite()) {
        return Err(SolveError::InvalidRequest(format!(
            "step must be >= 0, got {epsilon_step}"
        )));
    }
    let mut req = SolveRequest::new(x.clone(), measure.clone()).lambda(Lambda::Fixed(0.0));
    req.k = 1;
    let ev = Evaluator::new(problem, &req)?;
    let schema = problem.schema;
    let g = problem.model.gradient(schema, x, ev.current, GradientMode::Analytic)?;
    let moved = schema
        .features()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.is_categorical() || (measure.respect_mutability && !f.mutable) {
                x[i]
            } else {
                f.clamp(x[i] + epsilon_step * schema.scale(i) * sgn(g[i]))
            }
        })
        .collect();
    Ok(ev.evaluate(Point::new(moved), 0.0))
}
