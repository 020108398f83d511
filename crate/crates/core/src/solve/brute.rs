use super::{rank, Evaluator, Problem, Reason, SolveError, SolveOutcome, SolveRequest};
use crate::space::{enumerate_grid, grid_cap_from_env};

/// Exact search over the whole grid. Under an annealed lambda the first
/// schedule value whose best feasible candidate reaches the target is used.
pub fn solve_bruteforce(problem: Problem<'_>, req: &SolveRequest) -> Result<SolveOutcome, SolveError> {
    let ev = Evaluator::new(problem, req)?;
    let grid = enumerate_grid(problem.schema, grid_cap_from_env())?;
    let schedule = req.lambda.schedule();
    // Distances do not depend on lambda, so evaluate once and re-weight.
    let base: Vec<_> = grid.into_iter().map(|p| ev.evaluate(p, 0.0)).collect();

    for lambda in schedule.iter().copied() {
        let staged: Vec<_> = base
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.lambda = lambda;
                c.objective = c.input_distance + lambda * c.output_distance + req.plausibility_weight * c.penalty;
                c
            })
            .filter(|c| ev.feasible(c))
            .collect();
        if staged.is_empty() {
            return Ok(SolveOutcome {
                candidates: Vec::new(),
                reason: Some(Reason::NoFeasibleCandidate),
                evaluations: ev.evaluations(),
            });
        }
        let mut ranked = rank(staged, usize::MAX);
        if schedule.len() == 1 || ev.reaches_target(&ranked[0]) {
            ranked.truncate(req.k);
            return Ok(SolveOutcome {
                candidates: ranked,
                reason: None,
                evaluations: ev.evaluations(),
            });
        }
    }
    Ok(SolveOutcome {
        candidates: Vec::new(),
        reason: Some(Reason::TargetNotReached),
        evaluations: ev.evaluations(),
    })
}
