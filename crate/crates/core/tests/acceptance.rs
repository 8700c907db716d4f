//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero when any
//! criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use ltlbarrier::automaton::{build_fsa, language_equiv_bounded, simplify, EquivVerdict};
use ltlbarrier::certificate::{
    monitor, synthesize_lambda, verify_all, verify_jump_condition, BarrierSpec, DEFAULT_SAMPLES, DEFAULT_THETA,
    LITERATURE_LAMBDA,
};
use ltlbarrier::formula::{parse_formula, Alphabet};
use ltlbarrier::hybrid::{simulate, ClosedLoopSystem, HybridTrajectory, JumpPolicy, SimConfig, Verdict};
use ltlbarrier::linalg::spectral_abscissa;
use ltlbarrier::reproduce::{self, ReproduceConfig, PATH_SCRIPTS, REFERENCE_FORMULA};
use ltlbarrier::scenario::{compile, ScenarioConfig};
use nalgebra::DVector;

const LANGUAGE_MAX_LEN: usize = 6;
const LANGUAGE_WORDS: usize = 1092;
const LANGUAGE_TIME_LIMIT_S: f64 = 1.0;
const MICRO_T_TOL: f64 = 1e-3;
const EVENT_TOL: f64 = 1e-9;
const JUMP_DROP_TOL: f64 = 1e-9;
const LAPLACIAN_TOL: f64 = 1e-10;
const IDENTITY_REL_TOL: f64 = 1e-9;
const HURWITZ_MARGIN: f64 = 1e-8;
const FD_REL_TOL: f64 = 1e-4;

const MICRO: &str = r#"{
  "alphabet": ["a", "b"],
  "formula": "a & X b",
  "plant": {
    "A": [[0.0]], "B": [[1.0]],
    "regions": [
      {"obs": "a", "blocks": [{"indices": [0], "center": [1.0], "radius": 0.1}]},
      {"obs": "b", "blocks": [{"indices": [0], "center": [-1.0], "radius": 0.1}]}
    ]
  },
  "x0": [0.0]
}"#;

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn micro() -> (ClosedLoopSystem, HybridTrajectory) {
    let sc = ScenarioConfig::from_json(MICRO).unwrap().resolve(Path::new(".")).unwrap();
    let sys = sc.system(None).unwrap();
    let tr = simulate(&sys, &sc.config.x0(), &JumpPolicy::First, 0, &sc.config.sim_config()).unwrap();
    (sys, tr)
}

fn four_agent() -> ClosedLoopSystem {
    let names: Vec<String> = ["o1", "o2", "o3"].iter().map(|s| s.to_string()).collect();
    let fsa = compile(REFERENCE_FORMULA, &names).unwrap();
    let setup = ReproduceConfig::default().plant_document().to_setup(fsa.alphabet()).unwrap();
    ClosedLoopSystem::synthesize(fsa, &setup).unwrap()
}

fn language_equivalence() -> Line {
    let start = Instant::now();
    let a = Alphabet::new(["o1", "o2", "o3"]).unwrap();
    let f = parse_formula(REFERENCE_FORMULA, &a).unwrap();
    let fsa = build_fsa(&f, &a).unwrap();
    let verdict = language_equiv_bounded(&fsa, &f, LANGUAGE_MAX_LEN);
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match verdict {
        EquivVerdict::Equivalent { words_checked } => (
            words_checked == LANGUAGE_WORDS && secs < LANGUAGE_TIME_LIMIT_S,
            format!("{words_checked} words of length 1..={LANGUAGE_MAX_LEN}, 0 mismatches, {:.1} ms", secs * 1e3),
        ),
        EquivVerdict::Counterexample { word, .. } => (false, format!("mismatch on {}", a.format_word(&word))),
    };
    Line {
        id: 1,
        name: "language equivalence",
        pass,
        detail,
    }
}

fn distances() -> Line {
    let a = Alphabet::new(["o1", "o2", "o3"]).unwrap();
    let fsa = build_fsa(&parse_formula(REFERENCE_FORMULA, &a).unwrap(), &a).unwrap();
    let sys = four_agent();
    let expected = [
        (REFERENCE_FORMULA, 3),
        ("((!o1 U o2) & F o1) | (o1 & X o3)", 2),
        ("(!o1 U o2) & F o1", 2),
        ("F o1", 1),
        ("o3", 1),
        ("true", 0),
    ];
    let mut pass = fsa.num_states() == expected.len();
    let mut parts = Vec::new();
    for (text, d) in expected {
        let s = fsa.state_of(&simplify(&parse_formula(text, &a).unwrap()));
        let got = s.map(|s| sys.distance(s));
        pass &= got == Some(d);
        parts.push(format!("{text}:{}", got.map_or("missing".into(), |g| g.to_string())));
    }
    let psi1 = fsa
        .state_of(&simplify(&parse_formula(expected[1].0, &a).unwrap()))
        .unwrap();
    let progress: Vec<&str> = sys.policy_sets.progress(psi1).iter().map(|&o| a.name(o)).collect();
    pass &= progress == ["o1", "o2"];
    Line {
        id: 2,
        name: "distances and progress set",
        pass,
        detail: format!("d = {{{}}}; progress set of psi1 = {{{}}}", parts.join(", "), progress.join(",")),
    }
}

fn micro_dynamics() -> Line {
    let (sys, tr) = micro();
    let exact = 2.0 * 10f64.ln() + 2.0 * 19f64.ln();
    let residual = tr
        .jumps
        .iter()
        .map(|j| sys.region(j.pre.o).margin(&j.pre.xi))
        .fold(0.0f64, |m, r| if r > 0.0 { f64::INFINITY } else { m.max(-r) });
    let (pass, detail) = match tr.verdict {
        Verdict::Accepted { t, j } => (
            j == 2 && (t - exact).abs() <= MICRO_T_TOL && residual <= EVENT_TOL,
            format!(
                "J = {j}, T = {t:.6} (closed form {exact:.6}, error {:.1e}), max event residual {residual:.1e}",
                (t - exact).abs()
            ),
        ),
        Verdict::Inconclusive(k) => (false, format!("not accepted ({k:?})")),
    };
    Line {
        id: 3,
        name: "micro-scenario dynamics",
        pass,
        detail,
    }
}

fn certificate_soundness(outcome: &reproduce::Outcome) -> Line {
    let (sys, tr) = micro();
    let spec = synthesize_lambda(&sys, DEFAULT_THETA).unwrap();
    let micro_report = verify_all(&sys, &spec, DEFAULT_SAMPLES);
    let series = monitor(&tr, &sys, &spec).unwrap();
    let micro_run_ok = series.flow_decreasing && series.jumps_decreasing && series.reached_target;
    let s = &outcome.summary;
    let runs_ok = s.paths.iter().all(|p| p.flow_decreasing && p.jumps_decreasing) && s.random_barrier_ok;
    let forced = BarrierSpec::from_lambda(&sys, 1.0).unwrap();
    let jump = verify_jump_condition(&sys, &forced, DEFAULT_SAMPLES);
    let witness = &jump.witness["sampled"]["violation"];
    let forced_fails = !jump.pass && witness["change"].as_f64().is_some_and(|c| c > 0.0);
    Line {
        id: 4,
        name: "certificate soundness",
        pass: micro_report.pass && outcome.report.pass && micro_run_ok && runs_ok && forced_fails,
        detail: format!(
            "micro: 5/5 = {}, lambda {:.5}; four-agent: 5/5 = {}, lambda {:.3e}; barrier decrease (flow, jumps >= eps_jump - {JUMP_DROP_TOL:.0e}) on micro + {} paths + {} random runs = {}; lambda = 1 jump check fails with witness xi = {} (change {:.3})",
            micro_report.pass,
            spec.lambda,
            outcome.report.pass,
            s.lambda,
            s.paths.len(),
            s.random_runs,
            micro_run_ok && runs_ok,
            witness["xi"],
            witness["change"].as_f64().unwrap_or(f64::NAN)
        ),
    }
}

fn reproduction(outcome: &reproduce::Outcome) -> Line {
    let s = &outcome.summary;
    let eig_ok = s.laplacian_eigenvalue_error <= LAPLACIAN_TOL;
    let paths_ok = s.paths.len() == PATH_SCRIPTS.len()
        && s.paths.iter().all(|p| p.accepted && p.j == 3 && p.states.len() == 4);
    let random_ok = s.random_runs == 100 && s.random_accepted == s.random_runs;
    let paths: Vec<String> = s
        .paths
        .iter()
        .map(|p| {
            let states: Vec<String> = p.states.iter().map(|k| format!("s{k}")).collect();
            format!("{} -> {}", p.word.join(" "), states.join(","))
        })
        .collect();
    Line {
        id: 5,
        name: "four-agent reproduction",
        pass: eig_ok && s.controllable && paths_ok && random_ok && s.lambda > 0.0,
        detail: format!(
            "(a) Laplacian eigenvalue error {:.1e}; (b) controllable {}; (c) {}; (d) {}/{} random runs reach the target (max T {:.2}, max J {}); (e) lambda {:.4e} > 0 (published value {LITERATURE_LAMBDA} for other centers, not asserted)",
            s.laplacian_eigenvalue_error,
            s.controllable,
            paths.join("; "),
            s.random_accepted,
            s.random_runs,
            s.random_max_t,
            s.random_max_j,
            s.lambda
        ),
    }
}

/// Central differences of `U_o` on uniform steps against `−eᵀQe`.
fn worst_fd_error(sys: &ClosedLoopSystem, tr: &HybridTrajectory, dt: f64) -> f64 {
    let mut worst = 0.0f64;
    for seg in &tr.segments {
        let g = sys.gain(seg.o);
        for k in 1..seg.times.len().saturating_sub(1) {
            let (h0, h1) = (seg.times[k] - seg.times[k - 1], seg.times[k + 1] - seg.times[k]);
            if (h0 - dt).abs() > 1e-12 || (h1 - dt).abs() > 1e-12 {
                continue;
            }
            let fd = (g.lyapunov_value(&seg.states[k + 1]) - g.lyapunov_value(&seg.states[k - 1])) / (h0 + h1);
            let e = &seg.states[k] - &g.center;
            let exact = -e.dot(&(&g.q * &e));
            worst = worst.max((fd - exact).abs() / exact.abs());
        }
    }
    worst
}

fn gain_identity() -> Line {
    let (micro_sys, micro_tr) = micro();
    let agents = four_agent();
    let mut max_rel = 0.0f64;
    let mut max_re = f64::NEG_INFINITY;
    for sys in [&micro_sys, &agents] {
        for g in sys.gains.entries() {
            max_rel = max_rel.max(g.identity_residual() / g.q.norm());
            max_re = max_re.max(spectral_abscissa(&g.closed_loop));
        }
    }
    let cfg = ReproduceConfig::default();
    let sim = SimConfig {
        dt: cfg.dt,
        t_max: cfg.t_max,
        j_max: cfg.j_max,
    };
    let policy = JumpPolicy::Scripted(PATH_SCRIPTS[0].iter().map(|s| s.to_string()).collect());
    let path = simulate(&agents, &DVector::from_vec(cfg.x0.clone()), &policy, cfg.seed, &sim).unwrap();
    let fd = worst_fd_error(&micro_sys, &micro_tr, SimConfig::default().dt).max(worst_fd_error(&agents, &path, cfg.dt));
    Line {
        id: 6,
        name: "gain identity",
        pass: max_rel <= IDENTITY_REL_TOL && max_re < -HURWITZ_MARGIN && fd <= FD_REL_TOL,
        detail: format!(
            "max residual/||Q|| {max_rel:.1e} (<= {IDENTITY_REL_TOL:.0e}); max closed-loop real part {max_re:.4} (< -{HURWITZ_MARGIN:.0e}); finite-difference dU/dt relative error {fd:.1e} (<= {FD_REL_TOL:.0e})"
        ),
    }
}

fn determinism(first: &reproduce::Outcome) -> Line {
    let second = reproduce::run(&ReproduceConfig::default()).unwrap();
    let csv = |o: &reproduce::Outcome| -> Vec<(String, String)> {
        o.artifacts.iter().filter(|(n, _)| n.ends_with(".csv")).cloned().collect()
    };
    let (a, b) = (csv(first), csv(&second));
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let all_equal = first.artifacts == second.artifacts;
    Line {
        id: 7,
        name: "determinism",
        pass: a.len() == b.len() && !a.is_empty() && differing.is_empty(),
        detail: format!(
            "{} CSV outputs compared, {} differ; all {} artifacts identical: {all_equal}",
            a.len(),
            differing.len(),
            first.artifacts.len()
        ),
    }
}

fn main() -> ExitCode {
    let outcome = reproduce::run(&ReproduceConfig::default()).expect("four-agent pipeline runs");
    let lines = vec![
        language_equivalence(),
        distances(),
        micro_dynamics(),
        certificate_soundness(&outcome),
        reproduction(&outcome),
        gain_identity(),
        determinism(&outcome),
    ];
    for l in &lines {
        println!(
            "criterion {} [{}] {}: {}",
            l.id,
            l.name,
            if l.pass { "PASS" } else { "FAIL" },
            l.detail
        );
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {}/{} criteria pass", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
