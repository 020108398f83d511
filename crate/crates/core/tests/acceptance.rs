//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Built with `harness = false`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use cfx_core::causal::CeKind;
use cfx_core::cli::{self, parse_config};
use cfx_core::explain::{changes, verbalize};
use cfx_core::formal::{ae_set, alternative_set, ce_set, random_instance, SetQuery};
use cfx_core::model::{GradientMode, Logistic, Model, Params, Softmax, TriState};
use cfx_core::scenarios::{perfect_model, run_scenario, LoanWorld, ScenarioName, ScenarioParams};
use cfx_core::solve::{
    solve_bruteforce, solve_genetic, solve_gradient, Lambda, Mode, Problem, SolveOutcome, SolveRequest,
};
use cfx_core::space::{
    distance, enumerate_grid, grid_cap_from_env, DistanceMeasure, FeatureSpec, OutputSpace, Point, Schema,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// Runs the CLI in-process and returns (exit code, stdout).
fn cfx(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("cfx").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (code, out)
}

fn json(bytes: &[u8]) -> Result<Value, String> {
    serde_json::from_slice(bytes).map_err(|e| format!("report is not JSON: {e}"))
}

fn loan_world(name: ScenarioName, s: f64) -> LoanWorld {
    let params = ScenarioParams {
        s: Some(s),
        ..ScenarioParams::default()
    };
    LoanWorld::new(name, &params).expect("valid params")
}

fn theorem_suite() -> Outcome {
    let started = Instant::now();
    let (code, out) = cfx(&["verify", "--trials", "200", "--seed", "0", "--no-timing"]);
    let elapsed = started.elapsed();
    let r = json(&out)?;
    let violations = r["violations"].as_array().map_or(usize::MAX, Vec::len);
    ensure!(code == 0, "verify exited {code} with {violations} violations");
    ensure!(violations == 0, "{violations} violations");
    let trials = r["results"].as_array().ok_or("no results")?;
    ensure!(trials.len() == 200, "{} trials", trials.len());

    // The instances behind the report must have the advertised shape.
    let mut kinds = std::collections::BTreeSet::new();
    let mut checks = 0;
    for t in trials {
        let seed = t["seed"].as_u64().ok_or("trial without seed")?;
        let inst = random_instance(seed);
        ensure!(
            (2..=3).contains(&inst.schema.len()),
            "seed {seed}: {} features",
            inst.schema.len()
        );
        for f in inst.schema.features() {
            let n = f.grid_values().map_err(|e| e.to_string())?.len();
            ensure!(n <= 8, "seed {seed}: {} has {n} grid values", f.name);
        }
        for q in &inst.family {
            ensure!(
                q.epsilon < q.delta,
                "seed {seed}: epsilon {} >= delta {}",
                q.epsilon,
                q.delta
            );
        }
        kinds.insert(format!("{:?}", inst.model.kind()));
        checks += t["checks"].as_u64().unwrap_or(0);
    }
    ensure!(kinds.len() == 3, "model kinds drawn: {kinds:?}");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "200 instances, {checks} checks, 0 violations, {} ms",
        elapsed.as_millis()
    ))
}

fn ae_subset_of_ce() -> Outcome {
    let mut attacks = 0;
    let mut members = 0;
    for name in ["perfect.json", "biased.json", "logistic.json"] {
        let cfg = parse_config(Path::new(&fixture(name))).map_err(|e| e.to_string())?;
        let grid = enumerate_grid(&cfg.schema, grid_cap_from_env()).map_err(|e| e.to_string())?;
        let problem = Problem {
            schema: &cfg.schema,
            model: &cfg.model,
            ground_truth: &cfg.ground_truth,
            output: &cfg.output,
            training: cfg.training.as_ref(),
        };
        for salary in (0..=100_000).step_by(10_000) {
            for dogs in [0.0, 1.0, 3.0] {
                let x = Point::new(vec![salary as f64, dogs]);
                let current = cfg.model.predict(&x);
                for target in [None, Some(0), Some(1)].into_iter().filter(|t| *t != Some(current)) {
                    for epsilon in [None, Some(3.0), Some(12.0)] {
                        let mut req = SolveRequest::new(x.clone(), cfg.measure.clone()).k(5);
                        req.target = target;
                        req.epsilon = epsilon;
                        let attack = solve_bruteforce(problem, &req.clone().mode(Mode::Adversarial))
                            .map_err(|e| e.to_string())?;
                        if attack.candidates.is_empty() {
                            continue;
                        }
                        attacks += 1;
                        let explain =
                            solve_bruteforce(problem, &req.clone().k(grid.len())).map_err(|e| e.to_string())?;
                        let mut q = SetQuery::new(x.clone(), cfg.measure.clone());
                        q.target = target;
                        q.epsilon = epsilon;
                        let ce = ce_set(&cfg.model, &cfg.schema, &q).map_err(|e| e.to_string())?;
                        for c in &attack.candidates {
                            members += 1;
                            ensure!(
                                explain.candidates.iter().any(|e| e.point == c.point),
                                "{name}: attack point {:?} missing from explain at x={x:?}",
                                c.point
                            );
                            ensure!(
                                ce.contains(&c.point),
                                "{name}: attack point {:?} not a counterfactual of x={x:?}",
                                c.point
                            );
                        }
                    }
                }
            }
        }
    }
    ensure!(attacks > 0, "no attack produced candidates");
    Ok(format!(
        "{attacks} attacks, {members} candidates, all in the explain set"
    ))
}

fn scenario_perfect() -> Outcome {
    let params = ScenarioParams {
        s: Some(48000.0),
        ..ScenarioParams::default()
    };
    let r = run_scenario(ScenarioName::Perfect, &params).map_err(|e| e.to_string())?;
    let e = r.explanations.first().ok_or("no explanation")?;
    ensure!(e.point == Point::new(vec![50000.0, 1.0]), "best CF {:?}", e.point);
    ensure!(r.check("unique-best").is_some_and(|c| c.passed), "best CF not unique");
    let class = e.ce_class.as_ref().map(|c| c.value);
    ensure!(class == Some(CeKind::Feasible), "class {class:?}");
    ensure!(e.adversarial == TriState::False, "adversarial {:?}", e.adversarial);

    let (code, _) = cfx(&[
        "attack",
        "--config",
        &fixture("perfect.json"),
        "--input",
        &fixture("applicant_48000.json"),
    ]);
    ensure!(code == 2, "attack exited {code}");
    Ok("CF (50000, 1), feasible, not adversarial, attack exit 2".into())
}

fn scenario_biased() -> Outcome {
    let params = ScenarioParams {
        s: Some(20000.0),
        ..ScenarioParams::default()
    };
    let r = run_scenario(ScenarioName::Biased, &params).map_err(|e| e.to_string())?;
    let e = r.explanations.first().ok_or("no explanation")?;
    ensure!(e.point == Point::new(vec![20000.0, 2.0]), "best CF {:?}", e.point);
    let class = e.ce_class.as_ref().map(|c| c.value);
    ensure!(class == Some(CeKind::Contesting), "class {class:?}");
    ensure!(e.adversarial == TriState::True, "adversarial {:?}", e.adversarial);
    ensure!(e.imperceptible == Some(true), "imperceptible {:?}", e.imperceptible);
    Ok("CF (20000, 2), contesting, adversarial, imperceptible".into())
}

fn scenario_mixed() -> Outcome {
    let r = run_scenario(ScenarioName::Mixed, &ScenarioParams::default()).map_err(|e| e.to_string())?;
    ensure!(r.explanations.len() == 3, "{} explanations", r.explanations.len());
    let expected = [
        (vec!["salary"], CeKind::Feasible),
        (vec!["dogs"], CeKind::Contesting),
        (vec!["salary", "dogs"], CeKind::Mixed),
    ];
    let mut seen = Vec::new();
    for (e, (features, kind)) in r.explanations.iter().zip(expected) {
        let mut changed: Vec<&str> = e.delta.iter().map(|c| c.feature.as_str()).collect();
        let mut want = features.clone();
        changed.sort_unstable();
        want.sort_unstable();
        ensure!(changed == want, "changed {changed:?}, expected {want:?}");
        let class = e.ce_class.as_ref().map(|c| c.value);
        ensure!(class == Some(kind), "{features:?}: class {class:?}");
        seen.push(kind.to_string());
    }
    ensure!(r.explanations[2].imperceptible == Some(false), "mixed CF imperceptible");
    Ok(seen.join("/"))
}

fn ce_not_ae() -> Outcome {
    let world = loan_world(ScenarioName::Perfect, 48000.0);
    let model = perfect_model(&world);
    let q = SetQuery::new(world.x(), DistanceMeasure::normalized_l1()).minimal();
    let ce = ce_set(&model, &world.schema, &q).map_err(|e| e.to_string())?;
    let ae = ae_set(&model, &world.ground_truth, &world.schema, &q).map_err(|e| e.to_string())?;
    let target = Point::new(vec![50000.0, 1.0]);
    ensure!(ce == vec![target.clone()], "minimal CE set {ce:?}");
    ensure!(!ae.contains(&target), "minimal CE is an AE");

    let r = run_scenario(ScenarioName::CeNotAe, &ScenarioParams::default()).map_err(|e| e.to_string())?;
    ensure!(r.passed(), "scenario checks failed: {:?}", r.checks);
    Ok(format!("(50000, 1) in CE, AE set has {} points", ae.len()))
}

/// Random instances carry no output space; generic labels of the right
/// count are enough for solving.
fn labels(model: &Model) -> OutputSpace {
    OutputSpace::new((0..model.n_classes()).map(|k| format!("y{k}"))).expect("at least two classes")
}

fn best(o: &SolveOutcome) -> Option<f64> {
    o.candidates.first().map(|c| c.objective)
}

fn genetic_matches_oracle() -> Outcome {
    let started = Instant::now();
    let mut equal = 0;
    for i in 0..50u64 {
        let inst = random_instance(10_000 + i);
        let output = labels(&inst.model);
        let problem = Problem {
            schema: &inst.schema,
            model: &inst.model,
            ground_truth: &inst.ground_truth,
            output: &output,
            training: None,
        };
        let q = &inst.family[0];
        let req = SolveRequest::new(q.x.clone(), q.measure.clone())
            .lambda(Lambda::Fixed(1.0))
            .seed(i);
        let oracle = solve_bruteforce(problem, &req).map_err(|e| e.to_string())?;
        let ga = solve_genetic(problem, &req).map_err(|e| e.to_string())?;
        match (best(&oracle), best(&ga)) {
            (Some(o), Some(g)) => {
                ensure!(g >= o - 1e-9, "instance {i}: GA {g} below optimum {o}");
                if (g - o).abs() <= 1e-9 {
                    equal += 1;
                }
            }
            (None, Some(g)) => return Err(format!("instance {i}: GA found {g}, oracle found nothing")),
            (None, None) => equal += 1,
            (Some(_), None) => {}
        }
    }
    let elapsed = started.elapsed();
    ensure!(equal >= 45, "GA reached the optimum in {equal}/50");
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!("{equal}/50 optimal, never below, {} ms", elapsed.as_millis()))
}

/// Negative log-likelihood from predicted probabilities only.
fn nll(model: &Model, x: &Point, target: usize) -> f64 {
    -model.predict_proba(x)[target].ln()
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 3;
    let schema = Schema::new(
        (0..n)
            .map(|i| FeatureSpec::numeric(format!("f{i}"), -10.0, 10.0, 0.5).with_scale(1.0 + i as f64))
            .collect(),
        None,
    )
    .map_err(|e| e.to_string())?;
    let weight = |rng: &mut ChaCha8Rng| rng.gen_range(0.2..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let center: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let scale: Vec<f64> = (0..n).map(|i| 4.0 + i as f64).collect();
    let logistic = Model::new(
        Params::Logistic(Logistic {
            weights: (0..n).map(|_| weight(&mut rng)).collect(),
            bias: 0.3,
            center: center.clone(),
            scale: scale.clone(),
        }),
        n,
        2,
    )
    .map_err(|e| e.to_string())?;
    let softmax = Model::new(
        Params::Softmax(Softmax {
            weights: (0..3).map(|_| (0..n).map(|_| weight(&mut rng)).collect()).collect(),
            biases: vec![0.1, -0.2, 0.05],
            center,
            scale,
        }),
        n,
        3,
    )
    .map_err(|e| e.to_string())?;

    let mut worst: f64 = 0.0;
    for (label, model) in [("logistic", &logistic), ("softmax", &softmax)] {
        ensure!(model.differentiable(), "{label} is not differentiable");
        for _ in 0..100 {
            let x = Point::new((0..n).map(|_| rng.gen_range(-10.0..10.0)).collect());
            for target in 0..model.n_classes() {
                let g = model
                    .gradient(&schema, &x, target, GradientMode::Analytic)
                    .map_err(|e| e.to_string())?;
                for i in 0..n {
                    let h = 1e-5 * schema.scale(i);
                    let mut up = x.clone();
                    up.values_mut()[i] += h;
                    let mut down = x.clone();
                    down.values_mut()[i] -= h;
                    let fd = (nll(model, &up, target) - nll(model, &down, target)) / (2.0 * h);
                    let denom = g[i].abs().max(fd.abs());
                    if denom == 0.0 {
                        continue;
                    }
                    let rel = (g[i] - fd).abs() / denom;
                    ensure!(
                        rel < 1e-5,
                        "{label} at {x:?}, target {target}, feature {i}: {} vs {fd}",
                        g[i]
                    );
                    worst = worst.max(rel);
                }
            }
        }
    }
    Ok(format!("max relative error {worst:.2e}"))
}

fn strict_epsilon_ball() -> Outcome {
    let world = loan_world(ScenarioName::Perfect, 48000.0);
    let model = perfect_model(&world);
    let measure = DistanceMeasure::normalized_l1();
    let x = world.x();
    let edge = Point::new(vec![50000.0, 1.0]);
    let d = distance(&world.schema, &measure, &x, &edge).map_err(|e| e.to_string())?;
    ensure!(d == 2.0, "crafted candidate at distance {d}");

    let q = SetQuery::new(x.clone(), measure.clone()).within(d);
    let sets = [
        ("alternatives", alternative_set(&model, &world.schema, &q)),
        ("ce", ce_set(&model, &world.schema, &q)),
        ("ce-targeted", ce_set(&model, &world.schema, &q.clone().targeted(1))),
        ("ae", ae_set(&model, &world.ground_truth, &world.schema, &q)),
    ];
    for (name, set) in sets {
        let set = set.map_err(|e| e.to_string())?;
        ensure!(!set.contains(&edge), "{name} set contains the boundary point");
    }
    let wider = ce_set(
        &model,
        &world.schema,
        &SetQuery::new(x.clone(), measure.clone()).within(d + 1e-9),
    )
    .map_err(|e| e.to_string())?;
    ensure!(wider.contains(&edge), "boundary point missing just outside the radius");

    let problem = world.problem(&model);
    let req = SolveRequest::new(x, measure).epsilon(d).k(1000);
    for (name, out) in [
        ("brute", solve_bruteforce(problem, &req)),
        ("grad", solve_gradient(problem, &req)),
        ("ga", solve_genetic(problem, &req)),
    ] {
        let out = out.map_err(|e| e.to_string())?;
        ensure!(
            !out.candidates.iter().any(|c| c.point == edge),
            "{name} returned the boundary point"
        );
        ensure!(
            out.candidates.iter().all(|c| c.input_distance < d),
            "{name} left the open ball"
        );
    }
    Ok("distance-2 point excluded from 4 sets and 3 solvers at epsilon 2".into())
}

fn determinism() -> Outcome {
    let perfect = fixture("perfect.json");
    let biased = fixture("biased.json");
    let logistic = fixture("logistic.json");
    let x48 = fixture("applicant_48000.json");
    let x20 = fixture("applicant_20000.json");
    let cf = fixture("cf_extra_dog.json");
    let commands: Vec<Vec<&str>> = vec![
        vec!["explain", "--config", &perfect, "--input", &x48],
        vec![
            "explain", "--config", &biased, "--input", &x20, "--solver", "ga", "--k", "3", "--seed", "9",
        ],
        vec![
            "explain", "--config", &logistic, "--input", &x48, "--solver", "grad", "--seed", "4",
        ],
        vec![
            "explain", "--config", &biased, "--input", &x20, "--k", "4", "--policy", "diverse",
        ],
        vec!["attack", "--config", &biased, "--input", &x20, "--method", "ga"],
        vec![
            "attack",
            "--config",
            &logistic,
            "--input",
            &x48,
            "--method",
            "fgsm",
            "--epsilon",
            "2",
        ],
        vec!["verify", "--trials", "20", "--seed", "11"],
        vec!["verify", "--config", &perfect, "--trials", "5", "--seed", "2"],
        vec!["scenario", "mixed"],
        vec![
            "classify",
            "--config",
            &perfect,
            "--input",
            &x20,
            "--counterfactual",
            &cf,
        ],
    ];
    for mut args in commands {
        args.push("--no-timing");
        let (c1, a) = cfx(&args);
        let (c2, b) = cfx(&args);
        ensure!(!a.is_empty(), "{args:?} printed nothing");
        ensure!(c1 == c2 && a == b, "{args:?} differs between runs");
        json(&a)?;
    }
    Ok("10 commands byte-identical".into())
}

fn verbalization() -> Outcome {
    let schema = Schema::new(
        vec![
            FeatureSpec::numeric("salary", 0.0, 200000.0, 1.0).with_scale(1000.0),
            FeatureSpec::integer("open_loans", 0.0, 10.0).with_scale(1.0),
        ],
        None,
    )
    .map_err(|e| e.to_string())?;
    let x = Point::new(vec![40000.0, 2.0]);
    let x_cf = Point::new(vec![42000.0, 1.0]);
    let text = verbalize(&changes(&schema, &x, &x_cf), &schema, "accepted", "P").map_err(|e| e.to_string())?;
    ensure!(text.contains("2000"), "{text}");
    ensure!(text.contains("salary was 2000 higher"), "{text}");
    ensure!(text.contains("open_loans was 1 lower"), "{text}");
    ensure!(text.contains("the outcome would have been accepted"), "{text}");
    Ok(text)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("theorem suite", theorem_suite),
        ("AE subset of CE", ae_subset_of_ce),
        ("perfect-model scenario", scenario_perfect),
        ("biased-model scenario", scenario_biased),
        ("mixed scenario", scenario_mixed),
        ("CE that is not an AE", ce_not_ae),
        ("GA matches the exhaustive optimum", genetic_matches_oracle),
        ("analytic gradients", gradient_correctness),
        ("strict epsilon ball", strict_epsilon_ball),
        ("determinism", determinism),
        ("verbalization", verbalization),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
