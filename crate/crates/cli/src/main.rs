use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ltlbarrier::automaton::{to_dot, FsaDocument};
use ltlbarrier::certificate::{
    barrier_value, candidate_lambda, monitor, synthesize_lambda, verify_all, BarrierSpec, CertificateError,
    LITERATURE_LAMBDA,
};
use ltlbarrier::formula::Alphabet;
use ltlbarrier::hybrid::{
    simulate, trajectory_csv, validate_trajectory, BudgetKind, ClosedLoopSystem, HybridTrajectory, Verdict,
};
use ltlbarrier::reproduce::{self, ReproduceConfig, ReproduceError};
use ltlbarrier::scenario::{compile, Scenario, ScenarioConfig, ScenarioError};

#[derive(Parser)]
#[command(name = "ltlbarrier", version, about = "Co-safe LTL specifications for LTI plants: compile, simulate, certify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GainModeArg {
    Care,
    Paper,
}

impl GainModeArg {
    fn name(self) -> &'static str {
        match self {
            GainModeArg::Care => "care",
            GainModeArg::Paper => "paper",
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the synthesized barrier weight.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    gain_mode: Option<GainModeArg>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a formula to its automaton, distance table and DOT graph.
    Compile {
        /// Formula text.
        #[arg(long, conflicts_with_all = ["formula_file", "config"])]
        formula: Option<String>,
        /// File holding the formula text.
        #[arg(long, conflicts_with = "config")]
        formula_file: Option<PathBuf>,
        /// Comma-separated observation names.
        #[arg(long, value_delimiter = ',')]
        alphabet: Vec<String>,
        /// Scenario JSON file to take the formula and alphabet from.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a scenario and export the trajectory.
    Simulate(RunArgs),
    /// Synthesize the barrier weight and check every certificate condition.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Quasi-random samples per region for the sampled checks.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run the four-agent formation example end to end.
    Reproduce {
        /// Optional JSON overrides of the built-in configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "reproduce_out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum)]
        gain_mode: Option<GainModeArg>,
        #[arg(long)]
        dt: Option<f64>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure {
            code: if e.is_infeasible() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

impl From<ReproduceError> for Failure {
    fn from(e: ReproduceError) -> Self {
        match e {
            ReproduceError::Scenario(s) => s.into(),
            other => Failure {
                code: 1,
                message: other.to_string(),
            },
        }
    }
}

fn internal(message: impl ToString) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| internal(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| internal(format!("{}: {e}", p.display())))
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_compile(
    formula: Option<String>,
    formula_file: Option<PathBuf>,
    alphabet: Vec<String>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let fsa = if let Some(path) = config {
        Scenario::load(&path)?.fsa
    } else {
        let text = match (formula, formula_file) {
            (Some(f), _) => f,
            (None, Some(p)) => fs::read_to_string(&p).map_err(|e| internal(format!("{}: {e}", p.display())))?,
            (None, None) => return Err(internal("give --formula, --formula-file or --config")),
        };
        if alphabet.is_empty() {
            return Err(internal("--alphabet is required with a formula"));
        }
        compile(text.trim(), &alphabet)?
    };
    let sys_sets = ltlbarrier::automaton::bfs_distances(&fsa).map_err(ScenarioError::from)?;
    let policy = ltlbarrier::automaton::PolicySets::new(&fsa, &sys_sets).map_err(ScenarioError::from)?;
    let alphabet: &Alphabet = fsa.alphabet();
    println!("{} states, initial s{}", fsa.num_states(), fsa.initial().0);
    println!("state  d  accepting  progress  formula");
    for s in fsa.states() {
        let progress: Vec<&str> = policy.progress(s).iter().map(|&o| alphabet.name(o)).collect();
        println!(
            "s{:<4} {:>2}  {:<9}  {{{}}}  {}",
            s.0,
            sys_sets.get(s),
            fsa.is_accepting(s),
            progress.join(","),
            fsa.formula(s).display(alphabet)
        );
    }
    if let Some(dir) = out {
        write_file(&dir, "automaton.json", &pretty(&FsaDocument::from_fsa(&fsa, &sys_sets)))?;
        write_file(&dir, "automaton.dot", &to_dot(&fsa, &sys_sets, &policy))?;
    }
    Ok(())
}

/// Loads a scenario and applies command-line overrides.
fn load(args: &RunArgs) -> Result<(Scenario, ClosedLoopSystem), Failure> {
    let text = fs::read_to_string(&args.config).map_err(|e| internal(format!("{}: {e}", args.config.display())))?;
    let mut config = ScenarioConfig::from_json(&text).map_err(|e| match e {
        ScenarioError::Json { message, .. } => internal(format!("{}: invalid JSON: {message}", args.config.display())),
        other => other.into(),
    })?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(dt) = args.dt {
        config.dt = dt;
    }
    if let Some(l) = args.lambda {
        config.lambda = Some(l);
    }
    let base = args.config.parent().unwrap_or_else(|| Path::new("."));
    let scenario = config.resolve(base)?;
    let mode = args
        .gain_mode
        .map(|m| scenario.gain_mode_named(m.name()))
        .transpose()?;
    let sys = scenario.system(mode)?;
    Ok((scenario, sys))
}

fn barrier_spec(sc: &Scenario, sys: &ClosedLoopSystem) -> Result<BarrierSpec, ScenarioError> {
    Ok(match sc.config.lambda {
        Some(l) => BarrierSpec::from_lambda(sys, l)?,
        None => synthesize_lambda(sys, sc.config.theta())?,
    })
}

fn verdict_json(tr: &HybridTrajectory, sys: &ClosedLoopSystem) -> serde_json::Value {
    let word: Vec<&str> = tr.word().iter().map(|&o| sys.alphabet().name(o)).collect();
    let states: Vec<usize> = tr.state_sequence().iter().map(|s| s.0).collect();
    match tr.verdict {
        Verdict::Accepted { t, j } => json!({
            "verdict": "accepted", "T": t, "J": j, "word": word, "states": states,
        }),
        Verdict::Inconclusive(kind) => json!({
            "verdict": "inconclusive",
            "budget_exhausted": match kind { BudgetKind::Time => "time", BudgetKind::Jumps => "jumps" },
            "T": tr.segments.last().map_or(0.0, |s| s.end_time()),
            "J": tr.jumps.len(),
            "word": word,
            "states": states,
        }),
    }
}

fn cmd_simulate(args: RunArgs) -> Result<(), Failure> {
    let (sc, sys) = load(&args)?;
    let tr = simulate(&sys, &sc.config.x0(), &sc.config.policy, sc.config.seed, &sc.config.sim_config())
        .map_err(ScenarioError::from)?;
    validate_trajectory(&tr).map_err(ScenarioError::from)?;
    let verdict = verdict_json(&tr, &sys);
    println!("{}", serde_json::to_string(&verdict).expect("serializable"));
    if let Some(dir) = &args.out {
        let spec = match barrier_spec(&sc, &sys) {
            Ok(spec) => Some(spec),
            Err(e) => {
                eprintln!("warning: barrier column left empty: {e}");
                None
            }
        };
        let csv = trajectory_csv(&tr, sys.alphabet(), |x| {
            spec.as_ref().map_or(f64::NAN, |s| barrier_value(&sys, s, x))
        });
        write_file(dir, "trajectory.csv", &csv)?;
        write_file(dir, "verdict.json", &pretty(&verdict))?;
    }
    Ok(())
}

fn cmd_verify(args: RunArgs, samples: Option<usize>) -> Result<(), Failure> {
    let (sc, sys) = load(&args)?;
    let spec = match barrier_spec(&sc, &sys) {
        Ok(spec) => spec,
        Err(ScenarioError::Certificate(e @ CertificateError::NotInterior { .. })) => {
            // still report which condition breaks
            eprintln!("warning: {e}");
            BarrierSpec::from_lambda(&sys, candidate_lambda(&sys, sc.config.theta())).map_err(ScenarioError::from)?
        }
        Err(e) => return Err(e.into()),
    };
    let report = verify_all(&sys, &spec, samples.unwrap_or(sc.config.samples()));
    println!("{}", report.to_json());
    eprintln!(
        "certificate {}: lambda = {:.6e}, eps = {:.6e} (eps_flow = {:.6e}, eps_jump = {:.6e})",
        if report.pass { "PASS" } else { "FAIL" },
        spec.lambda,
        spec.eps,
        spec.eps_flow,
        spec.eps_jump
    );
    for c in &report.conditions {
        eprintln!("  {:<22} {}", format!("{:?}", c.condition), if c.pass { "pass" } else { "FAIL" });
    }
    if let Some(dir) = &args.out {
        write_file(dir, "report.json", &pretty(&report))?;
        let tr = simulate(&sys, &sc.config.x0(), &sc.config.policy, sc.config.seed, &sc.config.sim_config())
            .map_err(ScenarioError::from)?;
        match monitor(&tr, &sys, &spec) {
            Ok(series) => write_file(dir, "barrier.csv", &series.to_csv())?,
            Err(e) => eprintln!("warning: barrier monitor: {e}"),
        }
    }
    Ok(())
}

fn cmd_reproduce(
    config: Option<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
    lambda: Option<f64>,
    gain_mode: Option<GainModeArg>,
    dt: Option<f64>,
) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| internal(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<ReproduceConfig>(&text)
                .map_err(|e| internal(format!("{}: invalid JSON: {e}", p.display())))?
        }
        None => ReproduceConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(l) = lambda {
        cfg.lambda = Some(l);
    }
    if let Some(d) = dt {
        cfg.dt = d;
    }
    if let Some(m) = gain_mode {
        cfg.gain_mode = m.name().into();
    }
    let outcome = reproduce::run_to_dir(&cfg, &out)?;
    let s = &outcome.summary;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "Laplacian eigenvalues {:?} (max error {:.1e}); controllable: {}",
        s.laplacian_eigenvalues, s.laplacian_eigenvalue_error, s.controllable
    );
    println!("automaton: {} states, distances {:?}", s.automaton_states, s.distances);
    println!(
        "lambda = {:.6e} (reference value for other centers: {LITERATURE_LAMBDA}); eps = {:.6e}; certificate {}",
        s.lambda,
        s.eps,
        if s.certificate_pass { "PASS" } else { "FAIL" }
    );
    for p in &s.paths {
        println!(
            "{} [{}]: accepted={} T={:.4} J={} states={:?} barrier decreasing: flow={} jumps={}",
            p.name,
            p.script.join(" "),
            p.accepted,
            p.t,
            p.j,
            p.states,
            p.flow_decreasing,
            p.jumps_decreasing
        );
    }
    println!(
        "random runs: {}/{} accepted, max T {:.3}, max J {}, barrier decreasing on all: {}",
        s.random_accepted, s.random_runs, s.random_max_t, s.random_max_j, s.random_barrier_ok
    );
    println!("artifacts written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile {
            formula,
            formula_file,
            alphabet,
            config,
            out,
        } => cmd_compile(formula, formula_file, alphabet, config, out),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Verify { run, samples } => cmd_verify(run, samples),
        Command::Reproduce {
            config,
            out,
            seed,
            lambda,
            gain_mode,
            dt,
        } => cmd_reproduce(config, out, seed, lambda, gain_mode, dt),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
