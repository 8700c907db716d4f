//! JSON scenario files tying a specification, a plant and a run together.
//!
//! ```json
//! {
//!   "alphabet": ["a", "b"],
//!   "formula": "a & X b",
//!   "plant": { "A": [[0]], "B": [[1]], "regions": [...] },
//!   "x0": [0.0],
//!   "policy": "first",
//!   "seed": 0, "dt": 0.001, "T_max": 100, "J_max": 100
//! }
//! ```
//!
//! `formula` may be replaced by `formula_file` or `automaton_file`, and
//! `plant` by `plant_file`; relative paths resolve against the scenario
//! file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{build_fsa, AutomatonError, Fsa, FsaDocument};
use crate::certificate::{CertificateError, DEFAULT_SAMPLES, DEFAULT_THETA};
use crate::formula::{parse_formula, Alphabet, FormulaError};
use crate::hybrid::{ClosedLoopSystem, HybridError, JumpPolicy, SimConfig, DEFAULT_DT};
use crate::plant::{GainMode, PlantDocument, PlantError, PlantSetup};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: invalid JSON: {message}")]
    Json { path: PathBuf, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Hybrid(#[from] HybridError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

impl ScenarioError {
    /// The specification cannot be satisfied by any word.
    pub fn is_infeasible(&self) -> bool {
        let automaton = match self {
            ScenarioError::Automaton(e) => e,
            ScenarioError::Hybrid(HybridError::Automaton(e)) => e,
            _ => return false,
        };
        matches!(
            automaton,
            AutomatonError::Infeasible | AutomatonError::NoPathToAccepting(_)
        )
    }
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_t_max() -> f64 {
    SimConfig::default().t_max
}

fn default_j_max() -> usize {
    SimConfig::default().j_max
}

fn default_policy() -> JumpPolicy {
    JumpPolicy::First
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub automaton_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant_file: Option<PathBuf>,
    pub x0: Vec<f64>,
    #[serde(default = "default_policy")]
    pub policy: JumpPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(rename = "T_max", default = "default_t_max")]
    pub t_max: f64,
    #[serde(rename = "J_max", default = "default_j_max")]
    pub j_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

/// A scenario with its files read and its specification compiled.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub fsa: Fsa,
    pub setup: PlantSetup,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Compiles `formula` over the given observation names.
pub fn compile(formula: &str, names: &[String]) -> Result<Fsa, ScenarioError> {
    let alphabet = Alphabet::new(names.iter().map(String::as_str))?;
    let f = parse_formula(formula, &alphabet)?;
    Ok(build_fsa(&f, &alphabet)?)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        parse_json(Path::new("<scenario>"), text)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.dt,
            t_max: self.t_max,
            j_max: self.j_max,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta.unwrap_or(DEFAULT_THETA)
    }

    pub fn samples(&self) -> usize {
        self.samples.unwrap_or(DEFAULT_SAMPLES)
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_vec(self.x0.clone())
    }

    /// Reads referenced files relative to `base` and compiles the
    /// specification.
    pub fn resolve(self, base: &Path) -> Result<Scenario, ScenarioError> {
        let sources = [
            self.formula.is_some(),
            self.formula_file.is_some(),
            self.automaton_file.is_some(),
        ];
        if sources.iter().filter(|&&b| b).count() != 1 {
            return Err(ScenarioError::Invalid(
                "give exactly one of `formula`, `formula_file` or `automaton_file`".into(),
            ));
        }
        let fsa = if let Some(file) = &self.automaton_file {
            let path = base.join(file);
            let doc: FsaDocument = parse_json(&path, &read(&path)?)?;
            if let Some(names) = &self.alphabet {
                if names != &doc.alphabet {
                    return Err(ScenarioError::Invalid(format!(
                        "alphabet {:?} differs from the automaton's {:?}",
                        names, doc.alphabet
                    )));
                }
            }
            doc.to_fsa()?.0
        } else {
            let names = self.alphabet.as_ref().ok_or_else(|| {
                ScenarioError::Invalid("`alphabet` is required with a formula".into())
            })?;
            let text = match (&self.formula, &self.formula_file) {
                (Some(f), _) => f.clone(),
                (None, Some(file)) => read(&base.join(file))?,
                (None, None) => unreachable!("checked above"),
            };
            compile(text.trim(), names)?
        };
        let plant_doc = match (&self.plant, &self.plant_file) {
            (Some(p), None) => p.clone(),
            (None, Some(file)) => {
                let path = base.join(file);
                parse_json(&path, &read(&path)?)?
            }
            _ => {
                return Err(ScenarioError::Invalid(
                    "give exactly one of `plant` or `plant_file`".into(),
                ))
            }
        };
        let setup = plant_doc.to_setup(fsa.alphabet())?;
        if self.x0.len() != setup.plant.n() {
            return Err(ScenarioError::Invalid(format!(
                "x0 has length {}, plant state has dimension {}",
                self.x0.len(),
                setup.plant.n()
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ScenarioError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0) {
            return Err(ScenarioError::Invalid(format!(
                "T_max must be nonnegative, got {}",
                self.t_max
            )));
        }
        Ok(Scenario {
            config: self,
            fsa,
            setup,
        })
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig = parse_json(path, &read(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve(base)
    }

    /// Gain mode named `care` or `paper`; `care` keeps the scenario's `Q`
    /// when it has one.
    pub fn gain_mode_named(&self, name: &str) -> Result<GainMode, ScenarioError> {
        match (name, &self.setup.mode) {
            ("care", GainMode::Care { q }) => Ok(GainMode::Care { q: q.clone() }),
            ("care", GainMode::ShiftedRiccati) => Ok(GainMode::Care {
                q: DMatrix::identity(self.setup.plant.n(), self.setup.plant.n()),
            }),
            ("paper" | "paper_riccati", _) => Ok(GainMode::ShiftedRiccati),
            (other, _) => Err(ScenarioError::Invalid(format!(
                "unknown gain mode `{other}` (expected `care` or `paper`)"
            ))),
        }
    }

    /// Synthesizes gains, with an optional gain-mode override.
    pub fn system(&self, mode: Option<GainMode>) -> Result<ClosedLoopSystem, ScenarioError> {
        let mut setup = self.setup.clone();
        if let Some(m) = mode {
            setup.mode = m;
        }
        Ok(ClosedLoopSystem::synthesize(self.fsa.clone(), &setup)?)
    }
}
