//! Command-line front end. Every command prints one JSON report.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 no feasible candidate,
//! 3 verification or scenario check failure.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::causal::CeKind;
use crate::explain::{build_report, select_candidates, Explainer, Policy, Report, Stats};
use crate::formal::{random_family, random_instance, Universe};
use crate::scenarios::{run_scenario, ScenarioName, ScenarioParams};
use crate::solve::{
    generate_fgsm, solve_bruteforce, solve_genetic, solve_gradient, Mode, Problem, Reason, SolveOutcome, SolveRequest,
};
use crate::space::{enumerate_grid, grid_cap_from_env, Point};
use config::{read_json, Config, SolverKind};

pub use config::{parse_config, read_point, ConfigError, LoadError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_FAILED_CHECK: i32 = 3;

/// Queries per trial when verifying a configured model.
const VERIFY_QUERIES: usize = 4;
/// Candidate pool per requested explanation under the diverse policy.
const DIVERSE_POOL: usize = 5;

#[derive(Debug, Parser)]
#[command(
    name = "cfx",
    version,
    about = "Counterfactual explanations and adversarial examples on tabular models"
)]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit wall-clock timing so reports are byte-reproducible.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate counterfactual explanations.
    Explain(ExplainArgs),
    /// Search for adversarial examples.
    Attack(AttackArgs),
    /// Check the set inclusion theorems on random queries.
    Verify(VerifyArgs),
    /// Run a built-in loan scenario.
    Scenario(ScenarioArgs),
    /// Classify a given counterfactual as feasible, contesting or mixed.
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Point file: JSON object of feature name to value.
    #[arg(long)]
    input: PathBuf,
    /// Desired label; any other label when omitted.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Closest,
    Diverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Brute,
    Grad,
    Ga,
    Fgsm,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "brute")]
    method: Method,
    /// Open-ball radius; for fgsm, the step size in units of feature scale.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Verify this model; random instances are generated when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    name: ScenarioName,
    /// JSON file overriding t, s, d, resolution and seed.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    counterfactual: PathBuf,
}

struct Run {
    json: String,
    code: i32,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Reports go to `out` unless `--out` is given.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = dispatch(&cli).and_then(|r| {
        match &cli.out {
            Some(path) => std::fs::write(path, &r.json).with_context(|| format!("cannot write {}", path.display()))?,
            None => out.write_all(r.json.as_bytes())?,
        }
        Ok(r.code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<Run> {
    let started = Instant::now();
    let timing = move |evaluations| Stats {
        evaluations,
        wall_ms: (!cli.no_timing).then(|| started.elapsed().as_millis() as u64),
    };
    match &cli.command {
        Command::Explain(a) => explain(a, timing),
        Command::Attack(a) => attack(a, timing),
        Command::Verify(a) => verify(a, timing),
        Command::Scenario(a) => scenario(a, timing),
        Command::Classify(a) => classify(a),
    }
}

fn finish<T: Serialize>(report: Report<T>, empty: bool) -> Run {
    let code = if empty { EXIT_INFEASIBLE } else { EXIT_OK };
    Run {
        json: report.to_json(),
        code,
    }
}

fn problem(cfg: &Config) -> Problem<'_> {
    Problem {
        schema: &cfg.schema,
        model: &cfg.model,
        ground_truth: &cfg.ground_truth,
        output: &cfg.output,
        training: cfg.training.as_ref(),
    }
}

fn explainer(cfg: &Config) -> Explainer<'_> {
    Explainer {
        schema: &cfg.schema,
        output: &cfg.output,
        graph: cfg.graph.as_ref(),
        subject: &cfg.subject,
    }
}

fn load(c: &Common) -> anyhow::Result<(Config, Point, SolveRequest)> {
    let cfg = parse_config(&c.config)?;
    let x = read_point(&c.input, &cfg.schema)?;
    let s = &cfg.solver;
    let mut req = SolveRequest::new(x.clone(), cfg.measure.clone())
        .lambda(s.lambda)
        .k(s.k)
        .seed(c.seed.unwrap_or(cfg.seed));
    req.epsilon = s.epsilon;
    req.budget = s.budget.clone();
    req.plausibility_weight = s.plausibility_weight;
    if let Some(label) = &c.target {
        let t = cfg
            .output
            .index_of(label)
            .ok_or_else(|| anyhow!("unknown target label {label:?}"))?;
        req = req.target(t);
    }
    Ok((cfg, x, req))
}

fn solve(kind: SolverKind, p: Problem<'_>, req: &SolveRequest) -> anyhow::Result<SolveOutcome> {
    Ok(match kind {
        SolverKind::Brute => solve_bruteforce(p, req)?,
        SolverKind::Grad => solve_gradient(p, req)?,
        SolverKind::Ga => solve_genetic(p, req)?,
    })
}

fn explain(a: &ExplainArgs, timing: impl Fn(u64) -> Stats) -> anyhow::Result<Run> {
    let (cfg, x, mut req) = load(&a.common)?;
    let k = a.k.unwrap_or(cfg.solver.k);
    if k == 0 {
        bail!("--k must be >= 1");
    }
    let policy = match a.policy {
        Some(PolicyArg::Closest) => Policy::Closest,
        Some(PolicyArg::Diverse) => Policy::Diverse,
        None => cfg.solver.policy,
    };
    req.k = if policy == Policy::Diverse {
        k.saturating_mul(DIVERSE_POOL)
    } else {
        k
    };
    let outcome = solve(a.solver.unwrap_or(cfg.solver.solver), problem(&cfg), &req)?;
    let all = explainer(&cfg).explain_all(&x, &outcome.candidates)?;
    let results = select_candidates(all, k, policy, &cfg.schema, &cfg.measure);
    let empty = results.is_empty();
    let report = build_report(
        "explain",
        req.seed,
        Some(cfg.digest.clone()),
        results,
        timing(outcome.evaluations),
        outcome.reason,
    );
    Ok(finish(report, empty))
}

fn attack(a: &AttackArgs, timing: impl Fn(u64) -> Stats) -> anyhow::Result<Run> {
    let (cfg, x, mut req) = load(&a.common)?;
    req = req.mode(Mode::Adversarial).k(a.k.unwrap_or(cfg.solver.k));
    let p = problem(&cfg);
    let (results, evaluations, reason) = if a.method == Method::Fgsm {
        let step = a.epsilon.unwrap_or(cfg.solver.fgsm_step);
        let c = generate_fgsm(p, &x, &cfg.measure, step)?;
        let current = cfg.model.predict(&x);
        let hit = c.adversarial.is_true() && c.predicted != current && req.target.is_none_or(|t| t == c.predicted);
        if hit {
            (vec![explainer(&cfg).explain(&x, &c)?], 1, None)
        } else {
            (Vec::new(), 1, Some(Reason::NoFeasibleCandidate))
        }
    } else {
        if let Some(e) = a.epsilon {
            req = req.epsilon(e);
        }
        let kind = match a.method {
            Method::Brute => SolverKind::Brute,
            Method::Grad => SolverKind::Grad,
            _ => SolverKind::Ga,
        };
        let outcome = solve(kind, p, &req)?;
        let results = explainer(&cfg).explain_all(&x, &outcome.candidates)?;
        (results, outcome.evaluations, outcome.reason)
    };
    let empty = results.is_empty();
    let report = build_report(
        "attack",
        req.seed,
        Some(cfg.digest.clone()),
        results,
        timing(evaluations),
        reason,
    );
    Ok(finish(report, empty))
}

#[derive(Debug, Serialize)]
struct TrialSummary {
    trial: usize,
    seed: u64,
    queries: usize,
    checks: usize,
    violations: usize,
}

fn verify(a: &VerifyArgs, timing: impl Fn(u64) -> Stats) -> anyhow::Result<Run> {
    let cfg = a.config.as_deref().map(parse_config).transpose()?;
    let seed = a.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = match &cfg {
        Some(c) => enumerate_grid(&c.schema, grid_cap_from_env())?,
        None => Vec::new(),
    };
    let mut results = Vec::with_capacity(a.trials);
    let mut violations = Vec::new();
    let mut checks_total = 0u64;
    for trial in 0..a.trials {
        let trial_seed: u64 = rng.gen();
        let (report, queries) = match &cfg {
            Some(c) => {
                let family = random_family(trial_seed, &c.schema, &c.measure, &grid, VERIFY_QUERIES);
                let u = Universe::new(&c.model, &c.schema, grid_cap_from_env())?;
                let mut r = u.verify_theorem1(&family)?;
                r.merge(u.verify_theorem2(&c.ground_truth, &family)?);
                (r, family.len())
            }
            None => {
                let inst = random_instance(trial_seed);
                let u = Universe::new(&inst.model, &inst.schema, grid_cap_from_env())?;
                let mut r = u.verify_theorem1(&inst.family)?;
                r.merge(u.verify_theorem2(&inst.ground_truth, &inst.family)?);
                (r, inst.family.len())
            }
        };
        checks_total += report.checks as u64;
        results.push(TrialSummary {
            trial,
            seed: trial_seed,
            queries,
            checks: report.checks,
            violations: report.violations.len(),
        });
        for v in report.violations {
            violations.push(serde_json::to_value(v)?);
        }
    }
    let clean = violations.is_empty();
    let mut report = build_report(
        "verify",
        seed,
        cfg.map(|c| c.digest),
        results,
        timing(checks_total),
        None,
    );
    report.violations = violations;
    Ok(Run {
        json: report.to_json(),
        code: if clean { EXIT_OK } else { EXIT_FAILED_CHECK },
    })
}

fn scenario(a: &ScenarioArgs, timing: impl Fn(u64) -> Stats) -> anyhow::Result<Run> {
    let params: ScenarioParams = match &a.params {
        Some(p) => read_json(p)?,
        None => ScenarioParams::default(),
    };
    let report = run_scenario(a.name, &params)?;
    let passed = report.passed();
    let evaluations = report.evaluations;
    let out = build_report(
        &format!("scenario {}", a.name),
        params.seed,
        None,
        vec![report],
        timing(evaluations),
        None,
    );
    Ok(Run {
        json: out.to_json(),
        code: if passed { EXIT_OK } else { EXIT_FAILED_CHECK },
    })
}

#[derive(Debug, Serialize)]
struct Classification {
    original: crate::space::PointMap,
    counterfactual: crate::space::PointMap,
    class: CeKind,
    relevant_changed: Vec<String>,
    irrelevant_changed: Vec<String>,
    imperceptible: bool,
}

fn classify(a: &ClassifyArgs) -> anyhow::Result<Run> {
    let cfg = parse_config(&a.config)?;
    let graph = cfg
        .graph
        .as_ref()
        .ok_or_else(|| anyhow!("{}: classify needs a causal_graph", a.config.display()))?;
    let x = read_point(&a.input, &cfg.schema)?;
    let x_cf = read_point(&a.counterfactual, &cfg.schema)?;
    let target = graph.output()?;
    let c = graph.classify_counterfactual(&cfg.schema, &x, &x_cf, target)?;
    let result = Classification {
        original: cfg.schema.decode(&x),
        counterfactual: cfg.schema.decode(&x_cf),
        class: c.value,
        imperceptible: c.relevant_changed.is_empty(),
        relevant_changed: c.relevant_changed,
        irrelevant_changed: c.irrelevant_changed,
    };
    let report = build_report(
        "classify",
        cfg.seed,
        Some(cfg.digest.clone()),
        vec![result],
        Stats {
            evaluations: 0,
            wall_ms: None,
        },
        None,
    );
    Ok(finish(report, false))
}
