use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{rank, Candidate, Evaluator, Lambda, Problem, Reason, SolveError, SolveOutcome, SolveRequest};
use crate::space::{Point, SpaceError};

type Genome = Vec<usize>;

struct Individual {
    genome: Genome,
    cand: Candidate,
    fitness: f64,
}

struct Search<'e, 'a> {
    ev: &'e Evaluator<'a>,
    axes: Vec<Vec<f64>>,
    frozen: Vec<bool>,
    categorical: Vec<bool>,
    anneal: bool,
}

impl Search<'_, '_> {
    fn point(&self, g: &Genome) -> Point {
        Point::new(g.iter().zip(&self.axes).map(|(&i, a)| a[i]).collect())
    }

    fn individual(&self, genome: Genome, lambda: f64) -> Individual {
        let cand = self.ev.evaluate(self.point(&genome), lambda);
        let fitness = if self.ev.feasible(&cand) {
            cand.objective
        } else {
            f64::INFINITY
        };
        Individual { genome, cand, fitness }
    }

    fn rescore(&self, ind: &mut Individual, lambda: f64) {
        let genome = std::mem::take(&mut ind.genome);
        *ind = self.individual(genome, lambda);
    }

    fn mutate(&self, rng: &mut ChaCha8Rng, g: &mut Genome, rate: f64) {
        for (i, gene) in g.iter_mut().enumerate() {
            let n = self.axes[i].len();
            if self.frozen[i] || n < 2 || !rng.gen_bool(rate.clamp(0.0, 1.0)) {
                continue;
            }
            if self.categorical[i] || rng.gen_bool(0.5) {
                *gene = rng.gen_range(0..n);
            } else {
                let step = rng.gen_range(1..=2usize);
                *gene = if rng.gen_bool(0.5) {
                    gene.saturating_sub(step)
                } else {
                    (*gene + step).min(n - 1)
                };
            }
        }
    }

    fn tournament<'p>(&self, rng: &mut ChaCha8Rng, pop: &'p [Individual]) -> &'p Individual {
        let a = rng.gen_range(0..pop.len());
        let b = rng.gen_range(0..pop.len());
        // The population is sorted, so the lower index is the fitter one.
        &pop[a.min(b)]
    }

    fn done(&self, pop: &[Individual]) -> bool {
        self.anneal
            && pop
                .first()
                .is_some_and(|b| b.fitness.is_finite() && self.ev.reaches_target(&b.cand))
    }
}

fn sort_population(pop: &mut Vec<Individual>, size: usize) {
    pop.sort_by(|a, b| {
        a.fitness
            .total_cmp(&b.fitness)
            .then(a.cand.input_distance.total_cmp(&b.cand.input_distance))
            .then_with(|| a.cand.point.lex_cmp(&b.cand.point))
    });
    let mut seen = HashSet::new();
    pop.retain(|ind| seen.insert(ind.genome.clone()));
    pop.truncate(size);
}

/// Index of the grid value closest to `v`.
fn nearest(axis: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, a) in axis.iter().enumerate() {
        if (a - v).abs() < (axis[best] - v).abs() {
            best = i;
        }
    }
    best
}

/// Seeded (mu + lambda) evolution over grid indices. Only objective values
/// are used, so any model works.
pub fn solve_genetic(problem: Problem<'_>, req: &SolveRequest) -> Result<SolveOutcome, SolveError> {
    let ev = Evaluator::new(problem, req)?;
    let schema = problem.schema;
    let axes = schema
        .features()
        .iter()
        .map(|f| f.grid_values())
        .collect::<Result<Vec<_>, SpaceError>>()?;
    let search = Search {
        ev: &ev,
        frozen: schema
            .features()
            .iter()
            .map(|f| req.measure.respect_mutability && !f.mutable)
            .collect(),
        categorical: schema.features().iter().map(|f| f.is_categorical()).collect(),
        anneal: matches!(req.lambda, Lambda::Anneal),
        axes,
    };
    let b = &req.budget;
    let size = b.population.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let schedule = req.lambda.schedule();

    let origin: Genome = search
        .axes
        .iter()
        .zip(req.x.values())
        .map(|(a, &v)| nearest(a, v))
        .collect();
    let mut seen: HashSet<Genome> = HashSet::new();
    seen.insert(origin.clone());
    let mut pop: Vec<Individual> = (0..size)
        .map(|i| {
            let mut g = origin.clone();
            if i > 0 {
                search.mutate(&mut rng, &mut g, b.mutation_rate);
            }
            seen.insert(g.clone());
            search.individual(g, schedule[0])
        })
        .collect();
    sort_population(&mut pop, size);

    let mut novel = pop.iter().any(|ind| ind.genome != origin);
    for (stage, &lambda) in schedule.iter().enumerate() {
        if stage > 0 {
            for ind in pop.iter_mut() {
                search.rescore(ind, lambda);
            }
            sort_population(&mut pop, size);
        }
        for _ in 0..b.generations {
            if search.done(&pop) {
                break;
            }
            let mut offspring = Vec::with_capacity(size);
            for _ in 0..size {
                let p1 = search.tournament(&mut rng, &pop);
                let p2 = search.tournament(&mut rng, &pop);
                let mut child: Genome = p1
                    .genome
                    .iter()
                    .zip(&p2.genome)
                    .map(|(&a, &bb)| {
                        if rng.gen_bool(b.crossover_rate.clamp(0.0, 1.0)) {
                            bb
                        } else {
                            a
                        }
                    })
                    .collect();
                search.mutate(&mut rng, &mut child, b.mutation_rate);
                novel |= seen.insert(child.clone());
                offspring.push(search.individual(child, lambda));
            }
            pop.extend(offspring);
            sort_population(&mut pop, size);
        }
        if search.done(&pop) {
            break;
        }
    }

    let survivors: Vec<Candidate> = pop
        .into_iter()
        .filter(|ind| ind.fitness.is_finite() && (!search.anneal || ev.reaches_target(&ind.cand)))
        .map(|ind| ind.cand)
        .collect();
    let candidates = rank(survivors, req.k);
    let reason = if !novel {
        Some(Reason::Stagnant)
    } else if !candidates.is_empty() {
        None
    } else if search.anneal {
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
