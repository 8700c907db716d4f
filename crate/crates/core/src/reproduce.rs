//! Four-agent planar formation example: a star-graph consensus plant
//! `ξ̇ = −(L ⊗ I₂)ξ + u` steered through three formations according to
//! `o2 & X(((!o1 U o2) & F o1) | (o1 & X o3))`.
//!
//! Region centers are illustrative defaults (well separated formations);
//! everything else is fixed by the example. The pipeline emits the
//! automaton, two scripted accepted runs, barrier series, plots, the
//! certificate report and a batch of randomized runs. Outputs depend only
//! on the configuration, so two runs with the same seed are byte-identical.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::automaton::{to_dot, FsaDocument};
use crate::certificate::{
    barrier_value, monitor, synthesize_lambda, verify_all, BarrierReport, BarrierSeries, BarrierSpec,
    CertificateError, LITERATURE_LAMBDA,
};
use crate::formula::Obs;
use crate::hybrid::{
    simulate, trajectory_csv, ClosedLoopSystem, HybridError, HybridTrajectory, JumpPolicy, SimConfig,
    Verdict,
};
use crate::linalg;
use crate::plant::{check_controllability, matrix_to_rows, Block, GainMode, PlantDocument, RegionDocument};
use crate::scenario::{compile, ScenarioError};
use crate::svg::{Circle, Line, Marker, Plot, PALETTE};

pub const REFERENCE_FORMULA: &str = "o2 & X(((!o1 U o2) & F o1) | (o1 & X o3))";
pub const AGENTS: usize = 4;
pub const OBSERVATIONS: [&str; 3] = ["o1", "o2", "o3"];
/// Scripts for the two accepted paths: `o2 o2 o1` and `o2 o1 o3`.
pub const PATH_SCRIPTS: [[&str; 3]; 2] = [["o2", "o2", "o1"], ["o2", "o1", "o3"]];
pub const LAPLACIAN_EIGENVALUES: [f64; 4] = [0.0, 1.0, 1.0, 4.0];

/// Star graph on four agents with agent 2 as the hub.
pub fn laplacian() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, -1.0, 0.0, 0.0, //
            -1.0, 3.0, -1.0, -1.0, //
            0.0, -1.0, 1.0, 0.0, //
            0.0, -1.0, 0.0, 1.0,
        ],
    )
}

#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceConfig {
    /// Formation centers for `o1`, `o2`, `o3`.
    pub formation_centers: Vec<[f64; 2]>,
    /// Position of each agent relative to the formation center.
    pub agent_offsets: Vec<[f64; 2]>,
    pub radius: f64,
    /// Initial condition of the two scripted runs.
    pub x0: Vec<f64>,
    /// `care` or `paper`.
    pub gain_mode: String,
    pub seed: u64,
    pub dt: f64,
    #[serde(rename = "T_max")]
    pub t_max: f64,
    #[serde(rename = "J_max")]
    pub j_max: usize,
    pub random_runs: usize,
    /// Random initial conditions are uniform in `[-random_box, random_box]^8`.
    pub random_box: f64,
    pub theta: f64,
    pub lambda: Option<f64>,
    pub samples: usize,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            formation_centers: vec![[4.0, 0.0], [-2.0, 3.5], [-2.0, -3.5]],
            agent_offsets: vec![[-0.6, 0.0], [0.0, 0.0], [0.6, 0.4], [0.6, -0.4]],
            radius: 0.1,
            x0: vec![-1.0, -1.0, 0.0, -1.5, 1.0, 0.0, 0.5, 1.0],
            gain_mode: "care".into(),
            seed: 7,
            dt: crate::hybrid::DEFAULT_DT,
            t_max: 200.0,
            j_max: 20,
            random_runs: 100,
            random_box: 3.0,
            theta: crate::certificate::DEFAULT_THETA,
            lambda: None,
            samples: crate::certificate::DEFAULT_SAMPLES,
        }
    }
}

impl ReproduceConfig {
    fn validate(&self) -> Result<(), ReproduceError> {
        let err = |m: String| Err(ReproduceError::Config(m));
        if self.formation_centers.len() != OBSERVATIONS.len() {
            return err(format!(
                "formation_centers needs {} entries, got {}",
                OBSERVATIONS.len(),
                self.formation_centers.len()
            ));
        }
        if self.agent_offsets.len() != AGENTS {
            return err(format!(
                "agent_offsets needs {AGENTS} entries, got {}",
                self.agent_offsets.len()
            ));
        }
        if self.x0.len() != 2 * AGENTS {
            return err(format!("x0 needs {} entries, got {}", 2 * AGENTS, self.x0.len()));
        }
        if !(self.radius > 0.0) || !(self.random_box > 0.0) {
            return err("radius and random_box must be positive".into());
        }
        if !matches!(self.gain_mode.as_str(), "care" | "paper" | "paper_riccati") {
            return err(format!("unknown gain_mode `{}`", self.gain_mode));
        }
        Ok(())
    }

    /// Plant file equivalent of this configuration.
    pub fn plant_document(&self) -> PlantDocument {
        let a = -linalg::kron_identity(&laplacian(), 2);
        let regions = OBSERVATIONS
            .iter()
            .zip(&self.formation_centers)
            .map(|(name, c)| RegionDocument {
                obs: name.to_string(),
                blocks: self
                    .agent_offsets
                    .iter()
                    .enumerate()
                    .map(|(i, off)| Block {
                        indices: vec![2 * i, 2 * i + 1],
                        center: vec![c[0] + off[0], c[1] + off[1]],
                        radius: self.radius,
                    })
                    .collect(),
                setpoint: None,
            })
            .collect();
        PlantDocument {
            a: matrix_to_rows(&a),
            b: matrix_to_rows(&DMatrix::identity(2 * AGENTS, 2 * AGENTS)),
            regions,
            gain_mode: self.gain_mode.clone(),
            q: None,
            shared_gain: false,
        }
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.dt,
            t_max: self.t_max,
            j_max: self.j_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOutcome {
    pub name: String,
    pub script: Vec<String>,
    pub accepted: bool,
    pub t: f64,
    pub j: usize,
    pub states: Vec<usize>,
    pub word: Vec<String>,
    pub barrier_start: f64,
    pub flow_decreasing: bool,
    pub jumps_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomRun {
    pub index: usize,
    pub x0: Vec<f64>,
    pub accepted: bool,
    pub t: f64,
    pub j: usize,
    pub word: Vec<String>,
    pub flow_decreasing: bool,
    pub jumps_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub laplacian_eigenvalues: Vec<f64>,
    pub laplacian_eigenvalue_error: f64,
    pub controllable: bool,
    pub gain_mode_requested: String,
    pub gain_mode_used: String,
    pub warnings: Vec<String>,
    pub max_identity_residual: f64,
    pub max_closed_loop_real_part: f64,
    pub automaton_states: usize,
    pub distances: Vec<usize>,
    pub lambda: f64,
    pub eps_flow: f64,
    pub eps_jump: f64,
    pub eps: f64,
    /// Informational; computed for different (unpublished) region centers.
    pub literature_lambda: f64,
    pub certificate_pass: bool,
    pub paths: Vec<PathOutcome>,
    pub random_runs: usize,
    pub random_accepted: usize,
    pub random_max_t: f64,
    pub random_max_j: usize,
    pub random_barrier_ok: bool,
}

/// File name and contents, in emission order.
pub type Artifact = (String, String);

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub report: BarrierReport,
    pub random: Vec<RandomRun>,
    pub artifacts: Vec<Artifact>,
}

/// Synthesizes gains in the requested mode, falling back to CARE with
/// `Q = I` (and a warning) when the shifted Riccati variant has no
/// positive definite solution.
fn build_system(cfg: &ReproduceConfig, warnings: &mut Vec<String>) -> Result<(ClosedLoopSystem, String), ReproduceError> {
    let names: Vec<String> = OBSERVATIONS.iter().map(|s| s.to_string()).collect();
    let fsa = compile(REFERENCE_FORMULA, &names)?;
    let doc = cfg.plant_document();
    let setup = doc.to_setup(fsa.alphabet()).map_err(ScenarioError::from)?;
    match ClosedLoopSystem::synthesize(fsa.clone(), &setup) {
        Ok(sys) => Ok((sys, mode_name(&setup.mode).into())),
        Err(e) if matches!(setup.mode, GainMode::ShiftedRiccati) => {
            warnings.push(format!(
                "`paper` gain mode (shifted Riccati) has no usable solution for this plant ({e}); using CARE with Q = I"
            ));
            let mut care = setup.clone();
            care.mode = GainMode::Care {
                q: DMatrix::identity(setup.plant.n(), setup.plant.n()),
            };
            Ok((ClosedLoopSystem::synthesize(fsa, &care)?, "care".into()))
        }
        Err(e) => Err(e.into()),
    }
}

fn mode_name(m: &GainMode) -> &'static str {
    match m {
        GainMode::Care { .. } => "care",
        GainMode::ShiftedRiccati => "paper",
    }
}

fn names(sys: &ClosedLoopSystem, word: &[Obs]) -> Vec<String> {
    word.iter().map(|&o| sys.alphabet().name(o).to_string()).collect()
}

fn verdict_time(tr: &HybridTrajectory) -> (bool, f64, usize) {
    match tr.verdict {
        Verdict::Accepted { t, j } => (true, t, j),
        Verdict::Inconclusive(_) => {
            let last = tr.segments.last().expect("trajectories have a segment");
            (false, last.end_time(), last.j)
        }
    }
}

fn xy_plot(cfg: &ReproduceConfig, tr: &HybridTrajectory, title: &str) -> String {
    let mut plot = Plot {
        title: title.into(),
        x_label: "x".into(),
        y_label: "y".into(),
        equal_aspect: true,
        ..Plot::default()
    };
    for (k, c) in cfg.formation_centers.iter().enumerate() {
        for (i, off) in cfg.agent_offsets.iter().enumerate() {
            plot.circles.push(Circle {
                x: c[0] + off[0],
                y: c[1] + off[1],
                r: cfg.radius,
                label: if i == 0 { OBSERVATIONS[k].into() } else { String::new() },
            });
        }
    }
    for i in 0..AGENTS {
        let points: Vec<(f64, f64)> = tr
            .segments
            .iter()
            .flat_map(|s| s.states.iter().map(move |x| (x[2 * i], x[2 * i + 1])))
            .collect();
        let color = PALETTE[i % PALETTE.len()].to_string();
        if let Some(&(x, y)) = points.first() {
            plot.markers.push(Marker {
                x,
                y,
                color: color.clone(),
            });
        }
        plot.lines.push(Line {
            label: format!("agent {}", i + 1),
            color,
            points,
            dashed: false,
        });
    }
    plot.render()
}

fn barrier_plot(series: &[(String, BarrierSeries)]) -> String {
    let mut plot = Plot {
        title: "Barrier function along the accepted runs".into(),
        x_label: "t".into(),
        y_label: "B".into(),
        ..Plot::default()
    };
    for (k, (label, s)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()].to_string();
        plot.lines.push(Line {
            label: label.clone(),
            color: color.clone(),
            points: s.points.iter().map(|p| (p.t, p.b)).collect(),
            dashed: k % 2 == 1,
        });
        for p in s.points.iter().filter(|p| p.event.starts_with("jump")) {
            plot.markers.push(Marker {
                x: p.t,
                y: p.b,
                color: color.clone(),
            });
        }
    }
    plot.render()
}

fn json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Runs the full pipeline and returns the artifacts without touching the
/// file system.
pub fn run(cfg: &ReproduceConfig) -> Result<Outcome, ReproduceError> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let mut artifacts: Vec<Artifact> = Vec::new();

    let eigs = linalg::sym_eigenvalues(&laplacian());
    let eig_err = eigs
        .iter()
        .zip(LAPLACIAN_EIGENVALUES)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let (sys, mode_used) = build_system(cfg, &mut warnings)?;
    let controllable = check_controllability(&sys.plant);
    let max_residual = sys
        .gains
        .entries()
        .iter()
        .map(|g| g.identity_residual())
        .fold(0.0, f64::max);
    let max_re = sys
        .gains
        .entries()
        .iter()
        .map(|g| linalg::spectral_abscissa(&g.closed_loop))
        .fold(f64::NEG_INFINITY, f64::max);

    let spec = match cfg.lambda {
        Some(l) => BarrierSpec::from_lambda(&sys, l)?,
        None => synthesize_lambda(&sys, cfg.theta)?,
    };
    let report = verify_all(&sys, &spec, cfg.samples);

    artifacts.push(("automaton.dot".into(), to_dot(&sys.fsa, &sys.distances, &sys.policy_sets)));
    artifacts.push((
        "automaton.json".into(),
        json_pretty(&FsaDocument::from_fsa(&sys.fsa, &sys.distances)),
    ));
    artifacts.push(("plant.json".into(), json_pretty(&cfg.plant_document())));

    let sim = cfg.sim_config();
    let x0 = DVector::from_vec(cfg.x0.clone());
    let mut paths = Vec::new();
    let mut barrier_series = Vec::new();
    for (k, script) in PATH_SCRIPTS.iter().enumerate() {
        let name = format!("path{}", k + 1);
        let policy = JumpPolicy::Scripted(script.iter().map(|s| s.to_string()).collect());
        let tr = simulate(&sys, &x0, &policy, cfg.seed, &sim)?;
        let series = monitor(&tr, &sys, &spec)?;
        let (accepted, t, j) = verdict_time(&tr);
        paths.push(PathOutcome {
            name: name.clone(),
            script: script.iter().map(|s| s.to_string()).collect(),
            accepted,
            t,
            j,
            states: tr.state_sequence().iter().map(|s| s.0).collect(),
            word: names(&sys, &tr.word()),
            barrier_start: series.points.first().map_or(f64::NAN, |p| p.b),
            flow_decreasing: series.flow_decreasing,
            jumps_decreasing: series.jumps_decreasing,
        });
        artifacts.push((
            format!("{name}_trajectory.csv"),
            trajectory_csv(&tr, sys.alphabet(), |x| barrier_value(&sys, &spec, x)),
        ));
        artifacts.push((format!("{name}_barrier.csv"), series.to_csv()));
        artifacts.push((
            format!("{name}_xy.svg"),
            xy_plot(cfg, &tr, &format!("Agent positions, {name} ({})", script.join(" "))),
        ));
        barrier_series.push((format!("{name} ({})", script.join(" ")), series));
    }
    artifacts.push(("barrier.svg".into(), barrier_plot(&barrier_series)));

    let random = random_runs(cfg, &sys, &spec)?;
    let mut csv = String::from("index,accepted,T,J,word");
    for i in 1..=2 * AGENTS {
        csv.push_str(&format!(",x0_{i}"));
    }
    csv.push('\n');
    for r in &random {
        csv.push_str(&format!("{},{},{},{},{}", r.index, r.accepted, r.t, r.j, r.word.join(" ")));
        for v in &r.x0 {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    artifacts.push(("random_runs.csv".into(), csv));

    let summary = Summary {
        laplacian_eigenvalues: eigs,
        laplacian_eigenvalue_error: eig_err,
        controllable,
        gain_mode_requested: cfg.gain_mode.clone(),
        gain_mode_used: mode_used,
        warnings,
        max_identity_residual: max_residual,
        max_closed_loop_real_part: max_re,
        automaton_states: sys.fsa.num_states(),
        distances: sys.distances.as_slice().to_vec(),
        lambda: spec.lambda,
        eps_flow: spec.eps_flow,
        eps_jump: spec.eps_jump,
        eps: spec.eps,
        literature_lambda: LITERATURE_LAMBDA,
        certificate_pass: report.pass,
        paths,
        random_runs: random.len(),
        random_accepted: random.iter().filter(|r| r.accepted).count(),
        random_max_t: random.iter().map(|r| r.t).fold(0.0, f64::max),
        random_max_j: random.iter().map(|r| r.j).max().unwrap_or(0),
        random_barrier_ok: random.iter().all(|r| r.flow_decreasing && r.jumps_decreasing),
    };
    artifacts.push(("report.json".into(), json_pretty(&report)));
    artifacts.push((
        "summary.json".into(),
        json_pretty(&json!({ "config": cfg, "summary": summary })),
    ));
    Ok(Outcome {
        summary,
        report,
        random,
        artifacts,
    })
}

/// Uniform initial conditions in the configured box, each run with the
/// seeded random policy; seeds derive from the configuration seed only.
fn random_runs(
    cfg: &ReproduceConfig,
    sys: &ClosedLoopSystem,
    spec: &BarrierSpec,
) -> Result<Vec<RandomRun>, ReproduceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inputs: Vec<(Vec<f64>, u64)> = (0..cfg.random_runs)
        .map(|_| {
            let x0 = (0..2 * AGENTS)
                .map(|_| rng.random_range(-cfg.random_box..=cfg.random_box))
                .collect();
            (x0, rng.random())
        })
        .collect();
    let sim = cfg.sim_config();
    inputs
        .into_par_iter()
        .enumerate()
        .map(|(index, (x0, seed))| {
            let tr = simulate(
                sys,
                &DVector::from_vec(x0.clone()),
                &JumpPolicy::SeededRandom,
                seed,
                &sim,
            )?;
            let series = monitor(&tr, sys, spec)?;
            let (accepted, t, j) = verdict_time(&tr);
            Ok(RandomRun {
                index,
                x0,
                accepted,
                t,
                j,
                word: names(sys, &tr.word()),
                flow_decreasing: series.flow_decreasing,
                jumps_decreasing: series.jumps_decreasing,
            })
        })
        .collect()
}

/// Runs the pipeline and writes every artifact into `out`.
pub fn run_to_dir(cfg: &ReproduceConfig, out: &Path) -> Result<Outcome, ReproduceError> {
    let outcome = run(cfg)?;
    let io = |e: std::io::Error, p: &Path| ReproduceError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(out).map_err(|e| io(e, out))?;
    for (name, contents) in &outcome.artifacts {
        let p = out.join(name);
        fs::write(&p, contents).map_err(|e| io(e, &p))?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_spectrum() {
        let eigs = linalg::sym_eigenvalues(&laplacian());
        for (a, b) in eigs.iter().zip(LAPLACIAN_EIGENVALUES) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn plant_document_shape() {
        let doc = ReproduceConfig::default().plant_document();
        assert_eq!(doc.a.len(), 8);
        assert_eq!(doc.regions.len(), 3);
        assert!(doc.regions.iter().all(|r| r.blocks.len() == AGENTS));
        // A = −L ⊗ I₂: agent 2 (hub) couples to all others
        assert_eq!(doc.a[2][2], -3.0);
        assert_eq!(doc.a[2][0], 1.0);
        assert_eq!(doc.a[2][1], 0.0);
    }

    #[test]
    fn config_validation() {
        let cfg = ReproduceConfig {
            formation_centers: vec![[0.0, 0.0]],
            ..ReproduceConfig::default()
        };
        assert!(matches!(run(&cfg), Err(ReproduceError::Config(_))));
        let cfg: ReproduceConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.radius, 0.1);
        assert!(serde_json::from_str::<ReproduceConfig>(r#"{"sed": 3}"#).is_err());
    }

    #[test]
    fn shifted_riccati_mode_falls_back_to_care() {
        let cfg = ReproduceConfig {
            gain_mode: "paper".into(),
            ..ReproduceConfig::default()
        };
        let mut warnings = Vec::new();
        let (sys, used) = build_system(&cfg, &mut warnings).unwrap();
        assert_eq!(used, "care");
        assert_eq!(warnings.len(), 1);
        assert_eq!(sys.gains.len(), 3);
    }
}
