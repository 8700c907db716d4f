//! Barrier certificate `B(s, o, ξ) = d(s, S_f) + λ U_o(ξ)`.
//!
//! `λ` and the decrease margin `ε` are computed in closed form from norm
//! and eigenvalue bounds. Verification combines analytic certificates
//! (finite enumeration of the discrete part plus eigenvalue checks) with
//! deterministic quasi-random sampling of `ξ`, which can only refute.
//!
//! Jump and flow conditions are checked on the slice reached by the
//! closed loop, `o ∈ Ō_s`: the initial target is drawn from `Ō_{s₀}` and
//! every jump selects from `Ō_{s⁺}`, so that slice is forward invariant.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::automaton::StateId;
use crate::formula::Obs;
use crate::hybrid::{ClosedLoopSystem, HybridError, HybridState, HybridTrajectory};
use crate::linalg;
use crate::plant::Region;

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_SAMPLES: usize = 512;
/// Reference value reported for the four-agent example in the literature.
/// Its region centers are not known, so it is informational only.
pub const LITERATURE_LAMBDA: f64 = 0.0172;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("theta must lie in (0, 1), got {0}")]
    InvalidTheta(f64),
    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("setpoint of `{obs}` is not interior to its region (interior radius {rho:.3e})")]
    NotInterior { obs: String, rho: f64 },
    #[error("trajectory does not belong to this system: {0}")]
    MismatchedScenario(String),
    #[error("sample at t={t}, j={j} lies in the interior of the target region during flow")]
    DomainViolation { t: f64, j: usize },
    #[error(transparent)]
    Hybrid(#[from] HybridError),
}

/// `λ` together with the flow and jump decrease margins it guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierSpec {
    pub lambda: f64,
    pub eps_flow: f64,
    pub eps_jump: f64,
    pub eps: f64,
}

/// Jump `(s, o) → s⁺` followed by the choice of `o′`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JumpTransition {
    pub s: StateId,
    pub o: Obs,
    pub target: StateId,
    pub next_obs: Obs,
}

pub fn barrier_value(sys: &ClosedLoopSystem, spec: &BarrierSpec, x: &HybridState) -> f64 {
    sys.distance(x.s) as f64 + spec.lambda * sys.gain(x.o).lyapunov_value(&x.xi)
}

/// `⟨∇_ξ B, f⟩ = 2λ (ξ − c_o)ᵀ P_o (A − BK_o)(ξ − c_o)`.
pub fn flow_derivative(sys: &ClosedLoopSystem, lambda: f64, o: Obs, xi: &DVector<f64>) -> f64 {
    let g = sys.gain(o);
    let e = xi - &g.center;
    2.0 * lambda * e.dot(&(&g.p * g.field(xi)))
}

/// Every `(s, o)` with `s ∉ S_f`, `o ∈ Ō_s`.
pub fn flow_slices(sys: &ClosedLoopSystem) -> Vec<(StateId, Obs)> {
    sys.fsa
        .states()
        .filter(|&s| !sys.fsa.is_accepting(s))
        .flat_map(|s| sys.policy_sets.progress(s).iter().map(move |&o| (s, o)))
        .collect()
}

/// Jumps out of `D ∖ R` on the closed-loop slice, including those landing
/// in `S_f`.
pub fn jump_transitions(sys: &ClosedLoopSystem) -> Vec<JumpTransition> {
    let mut out = Vec::new();
    for (s, o) in flow_slices(sys) {
        let Some(target) = sys.fsa.step(s, o) else {
            continue;
        };
        if target.0 >= sys.fsa.num_states() {
            continue;
        }
        for &next_obs in sys.jump_choices(target) {
            out.push(JumpTransition {
                s,
                o,
                target,
                next_obs,
            });
        }
    }
    out
}

/// Upper bound on `sup_{ξ ∈ D_o} U_{o′}(ξ) − U_o(ξ)`: zero when the
/// Lyapunov functions coincide, otherwise
/// `λ_max(P_{o′}) (‖c_{o′} − c_o‖ + R_o)²` with `R_o` the outer radius of
/// `D_o` around `c_o`.
pub fn lyapunov_jump_bound(sys: &ClosedLoopSystem, o: Obs, next_obs: Obs) -> f64 {
    let (g, h) = (sys.gain(o), sys.gain(next_obs));
    if g.p == h.p && g.center == h.center {
        return 0.0;
    }
    let spread = (&h.center - &g.center).norm() + sys.region(o).outer_radius();
    linalg::sym_max_eigenvalue(&h.p) * spread * spread
}

fn max_jump_bound(sys: &ClosedLoopSystem) -> f64 {
    jump_transitions(sys)
        .iter()
        .map(|t| lyapunov_jump_bound(sys, t.o, t.next_obs))
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of `Q_o = −(P_o(A−BK_o) + (A−BK_o)ᵀP_o)`,
/// recomputed from `P_o` and the closed loop.
pub fn decrease_eigenvalue(sys: &ClosedLoopSystem, o: Obs) -> f64 {
    let g = sys.gain(o);
    let q = -(&g.p * &g.closed_loop + g.closed_loop.transpose() * &g.p);
    linalg::sym_min_eigenvalue(&q)
}

fn flow_observations(sys: &ClosedLoopSystem) -> Vec<Obs> {
    let mut obs: Vec<Obs> = flow_slices(sys).into_iter().map(|(_, o)| o).collect();
    obs.sort();
    obs.dedup();
    obs
}

fn flow_margin(sys: &ClosedLoopSystem, lambda: f64) -> f64 {
    flow_observations(sys)
        .into_iter()
        .map(|o| {
            let rho = sys.region(o).interior_radius().max(0.0);
            lambda * decrease_eigenvalue(sys, o).max(0.0) * rho * rho
        })
        .fold(f64::INFINITY, f64::min)
}

impl BarrierSpec {
    /// Margins implied by a given `λ`. `eps_jump` can come out
    /// non-positive for large `λ`; verification then fails.
    pub fn from_lambda(sys: &ClosedLoopSystem, lambda: f64) -> Result<Self, CertificateError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(CertificateError::InvalidLambda(lambda));
        }
        let eps_flow = flow_margin(sys, lambda);
        // no flow slice at all: the flow condition is vacuous
        let eps_flow = if eps_flow.is_finite() { eps_flow } else { 1.0 };
        let eps_jump = 1.0 - lambda * max_jump_bound(sys);
        Ok(Self {
            lambda,
            eps_flow,
            eps_jump,
            eps: eps_flow.min(eps_jump),
        })
    }
}

/// `λ = θ / ΔU_max` (or `θ` when `ΔU_max = 0`), so every pre-acceptance
/// jump lowers `B` by at least `1 − θ`.
pub fn synthesize_lambda(sys: &ClosedLoopSystem, theta: f64) -> Result<BarrierSpec, CertificateError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(CertificateError::InvalidTheta(theta));
    }
    for o in flow_observations(sys) {
        let rho = sys.region(o).interior_radius();
        if rho <= 0.0 {
            return Err(CertificateError::NotInterior {
                obs: sys.alphabet().name(o).to_string(),
                rho,
            });
        }
    }
    BarrierSpec::from_lambda(sys, candidate_lambda(sys, theta))
}

/// `θ / ΔU_max` without the preconditions of [`synthesize_lambda`], so a
/// report can still be produced for a defective setup.
pub fn candidate_lambda(sys: &ClosedLoopSystem, theta: f64) -> f64 {
    let du_max = max_jump_bound(sys);
    if du_max > 0.0 {
        theta / du_max
    } else {
        theta
    }
}

/// Van der Corput radical inverse of `i` in `base`.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut out) = (inv, 0.0);
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

fn primes(count: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(count);
    let mut c = 2;
    while out.len() < count {
        if out.iter().all(|p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// Halton points in `[-1, 1]^dim`, skipping index 0.
pub fn halton(dim: usize, count: usize) -> Vec<DVector<f64>> {
    let bases = primes(dim);
    (1..=count as u64)
        .map(|i| DVector::from_iterator(dim, bases.iter().map(|&b| 2.0 * radical_inverse(i, b) - 1.0)))
        .collect()
}

/// Deterministic points of `D_o`: the setpoint plus Halton points mapped
/// into each block ball (cube points outside the unit ball are pushed onto
/// its sphere, which also covers the boundary).
pub fn sample_region(region: &Region, count: usize) -> Vec<DVector<f64>> {
    let n = region.dim();
    let mut out = vec![region.setpoint().clone()];
    for u in halton(n, count) {
        let mut xi = DVector::zeros(n);
        for b in region.blocks() {
            let mut local: Vec<f64> = b.indices.iter().map(|&i| u[i]).collect();
            let norm = local.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                local.iter_mut().for_each(|v| *v /= norm);
            }
            for ((&i, &c), v) in b.indices.iter().zip(&b.center).zip(local) {
                xi[i] = c + b.radius * v;
            }
        }
        out.push(xi);
    }
    out
}

/// Deterministic points of `cl(ℝⁿ ∖ D_o)` around the setpoint: Halton
/// points in a box of half-width `3 R_o`; points inside `D_o` are moved
/// radially onto the boundary of their most-loaded block.
pub fn sample_flow_set(region: &Region, count: usize) -> Vec<DVector<f64>> {
    let n = region.dim();
    let width = 3.0 * region.outer_radius();
    let c = region.setpoint();
    halton(n, count)
        .into_iter()
        .map(|u| {
            let mut xi = c + u * width;
            if region.margin(&xi) < 0.0 {
                let (b, _) = region
                    .blocks()
                    .iter()
                    .map(|b| {
                        let d = b
                            .indices
                            .iter()
                            .zip(&b.center)
                            .map(|(&i, &cc)| (xi[i] - cc).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        (b, d / b.radius)
                    })
                    .max_by(|x, y| x.1.total_cmp(&y.1))
                    .expect("regions have blocks");
                let offsets: Vec<f64> = b.indices.iter().zip(&b.center).map(|(&i, &cc)| xi[i] - cc).collect();
                let norm = offsets.iter().map(|v| v * v).sum::<f64>().sqrt();
                for (k, (&i, &cc)) in b.indices.iter().zip(&b.center).enumerate() {
                    let dir = if norm > 0.0 {
                        offsets[k] / norm
                    } else if k == 0 {
                        1.0
                    } else {
                        0.0
                    };
                    xi[i] = cc + b.radius * dir;
                }
            }
            xi
        })
        .collect()
}

/// Largest sampled `U_{o′}(ξ) − U_o(ξ)` over `ξ ∈ D_o`.
pub fn sampled_jump_sup(sys: &ClosedLoopSystem, o: Obs, next_obs: Obs, samples: usize) -> f64 {
    let (g, h) = (sys.gain(o), sys.gain(next_obs));
    sample_region(sys.region(o), samples)
        .iter()
        .map(|xi| h.lyapunov_value(xi) - g.lyapunov_value(xi))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    JumpContainment,
    BoundedBelow,
    FlowDecrease,
    JumpDecrease,
    RadialUnboundedness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Sampled,
    AnalyticAndSampled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub condition: Condition,
    pub method: Method,
    pub pass: bool,
    pub witness: Value,
}

fn obs_name(sys: &ClosedLoopSystem, o: Obs) -> &str {
    sys.alphabet().name(o)
}

fn xi_json(xi: &DVector<f64>) -> Value {
    json!(xi.iter().copied().collect::<Vec<_>>())
}

/// Decrease along flows on `cl(C ∖ R)`: analytically
/// `⟨∇B, f⟩ = −λ(ξ−c_o)ᵀQ_o(ξ−c_o) ≤ −λ λ_min(Q_o) ρ_o²`, and by sampling
/// the flow set with the gradient form evaluated directly.
pub fn verify_flow_condition(sys: &ClosedLoopSystem, spec: &BarrierSpec, samples: usize) -> ConditionEntry {
    let mut analytic_pass = spec.eps_flow > 0.0;
    let mut worst: Option<Value> = None;
    let mut worst_bound = f64::INFINITY;
    let mut sampled_pass = true;
    let mut sampled_witness = Value::Null;
    let mut max_sampled = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for o in flow_observations(sys) {
        let region = sys.region(o);
        let rho = region.interior_radius();
        let q_min = decrease_eigenvalue(sys, o);
        let bound = spec.lambda * q_min.max(0.0) * rho.max(0.0).powi(2);
        if rho <= 0.0 || q_min <= 0.0 || bound < spec.eps_flow * (1.0 - 1e-12) {
            analytic_pass = false;
        }
        if bound < worst_bound {
            worst_bound = bound;
            worst = Some(json!({
                "obs": obs_name(sys, o),
                "rho": rho,
                "q_min": q_min,
                "decrease_bound": bound,
            }));
        }
        let g = sys.gain(o);
        for xi in sample_flow_set(region, samples) {
            checked += 1;
            let v = flow_derivative(sys, spec.lambda, o, &xi);
            let e = &xi - &g.center;
            let tol = 1e-9 * (1.0 + spec.lambda * e.norm_squared() * g.q.norm());
            max_sampled = max_sampled.max(v);
            if sampled_pass && v > -spec.eps_flow.max(0.0) + tol {
                sampled_pass = false;
                sampled_witness = json!({
                    "obs": obs_name(sys, o),
                    "xi": xi_json(&xi),
                    "derivative": v,
                });
            }
        }
    }
    ConditionEntry {
        condition: Condition::FlowDecrease,
        method: Method::AnalyticAndSampled,
        pass: analytic_pass && sampled_pass,
        witness: json!({
            "eps_flow": spec.eps_flow,
            "analytic": { "pass": analytic_pass, "worst": worst },
            "sampled": {
                "pass": sampled_pass,
                "points": checked,
                "max_derivative": max_sampled,
                "violation": sampled_witness,
            },
        }),
    }
}

/// Decrease across jumps from `D ∖ R`: analytically
/// `Δd + λ ΔU_bound ≤ −ε_jump` per transition, and by evaluating
/// `B(g) − B(x)` on sampled points of `D_o`.
pub fn verify_jump_condition(sys: &ClosedLoopSystem, spec: &BarrierSpec, samples: usize) -> ConditionEntry {
    let required = spec.eps_jump;
    let mut analytic_pass = required > 0.0;
    let mut worst = Value::Null;
    let mut worst_value = f64::NEG_INFINITY;
    let mut sampled_pass = true;
    let mut sampled_witness = Value::Null;
    let mut max_drop = f64::NEG_INFINITY;
    let mut checked = 0usize;
    let describe = |t: &JumpTransition| {
        json!({
            "s": t.s.0,
            "o": obs_name(sys, t.o),
            "target": t.target.0,
            "next_obs": obs_name(sys, t.next_obs),
        })
    };
    for t in jump_transitions(sys) {
        let dd = sys.distance(t.target) as f64 - sys.distance(t.s) as f64;
        let bound = dd + spec.lambda * lyapunov_jump_bound(sys, t.o, t.next_obs);
        if bound > -required + 1e-12 {
            analytic_pass = false;
        }
        if bound > worst_value {
            worst_value = bound;
            worst = json!({ "transition": describe(&t), "bound": bound });
        }
        for xi in sample_region(sys.region(t.o), samples) {
            checked += 1;
            let pre = HybridState {
                s: t.s,
                o: t.o,
                xi: xi.clone(),
            };
            let post = HybridState {
                s: t.target,
                o: t.next_obs,
                xi,
            };
            let change = barrier_value(sys, spec, &post) - barrier_value(sys, spec, &pre);
            max_drop = max_drop.max(change);
            let limit = if required > 0.0 { -required + 1e-9 } else { 0.0 };
            if sampled_pass && change > limit {
                sampled_pass = false;
                sampled_witness = json!({
                    "transition": describe(&t),
                    "xi": xi_json(&post.xi),
                    "change": change,
                });
            }
        }
    }
    ConditionEntry {
        condition: Condition::JumpDecrease,
        method: Method::AnalyticAndSampled,
        pass: analytic_pass && sampled_pass,
        witness: json!({
            "eps_jump": spec.eps_jump,
            "analytic": { "pass": analytic_pass, "worst": worst },
            "sampled": {
                "pass": sampled_pass,
                "points": checked,
                "max_change": max_drop,
                "violation": sampled_witness,
            },
        }),
    }
}

/// Jump containment, lower boundedness and radial unboundedness.
pub fn verify_structural(sys: &ClosedLoopSystem, spec: &BarrierSpec) -> [ConditionEntry; 3] {
    // every jump from D ∖ R must land on a retained state with a nonempty
    // choice set contained in its enabled set; ξ⁺ = ξ is unconstrained
    let mut containment = Vec::new();
    let n = sys.fsa.num_states();
    for s in sys.fsa.states().filter(|&s| !sys.fsa.is_accepting(s)) {
        for &o in sys.policy_sets.enabled(s) {
            let problem = match sys.fsa.step(s, o) {
                None => Some("transition undefined".to_string()),
                Some(t) if t.0 >= n => Some(format!("target s{} is not a retained state", t.0)),
                Some(t) => {
                    let choices = sys.jump_choices(t);
                    let enabled = sys.policy_sets.enabled(t);
                    if choices.is_empty() {
                        Some(format!("empty choice set at s{}", t.0))
                    } else if choices.iter().any(|c| !enabled.contains(c)) {
                        Some(format!("choice outside O_s at s{}", t.0))
                    } else {
                        None
                    }
                }
            };
            if let Some(p) = problem {
                containment.push(json!({ "s": s.0, "o": obs_name(sys, o), "problem": p }));
            }
        }
    }
    let jump_containment = ConditionEntry {
        condition: Condition::JumpContainment,
        method: Method::Analytic,
        pass: containment.is_empty(),
        witness: json!({ "violations": containment }),
    };

    let mut min_eig = f64::INFINITY;
    let mut min_obs = Obs(0);
    let mut min_vec = DVector::zeros(0);
    for (i, g) in sys.gains.entries().iter().enumerate() {
        let (l, v) = linalg::sym_min_eigenpair(&g.p);
        if l < min_eig {
            min_eig = l;
            min_obs = Obs(i);
            min_vec = v;
        }
    }
    let lambda_ok = spec.lambda > 0.0;
    let bounded_below = ConditionEntry {
        condition: Condition::BoundedBelow,
        method: Method::Analytic,
        pass: lambda_ok && min_eig >= -1e-12,
        witness: json!({
            "lambda": spec.lambda,
            "min_eigenvalue_P": min_eig,
            "obs": obs_name(sys, min_obs),
            "lower_bound": 0.0,
        }),
    };
    let radial_ok = lambda_ok && min_eig > 1e-12;
    let radial = ConditionEntry {
        condition: Condition::RadialUnboundedness,
        method: Method::Analytic,
        pass: radial_ok,
        witness: if radial_ok {
            json!({ "min_eigenvalue_P": min_eig, "growth": spec.lambda * min_eig })
        } else {
            json!({
                "min_eigenvalue_P": min_eig,
                "obs": obs_name(sys, min_obs),
                "eigenvector": xi_json(&min_vec),
            })
        },
    };
    [jump_containment, bounded_below, radial]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierReport {
    pub lambda: f64,
    pub eps_flow: f64,
    pub eps_jump: f64,
    pub eps: f64,
    pub pass: bool,
    pub conditions: Vec<ConditionEntry>,
}

impl BarrierReport {
    pub fn entry(&self, c: Condition) -> &ConditionEntry {
        self.conditions
            .iter()
            .find(|e| e.condition == c)
            .expect("report covers every condition")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn verify_all(sys: &ClosedLoopSystem, spec: &BarrierSpec, samples: usize) -> BarrierReport {
    let [containment, below, radial] = verify_structural(sys, spec);
    let conditions = vec![
        containment,
        below,
        verify_flow_condition(sys, spec, samples),
        verify_jump_condition(sys, spec, samples),
        radial,
    ];
    BarrierReport {
        lambda: spec.lambda,
        eps_flow: spec.eps_flow,
        eps_jump: spec.eps_jump,
        eps: spec.eps,
        pass: conditions.iter().all(|c| c.pass),
        conditions,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorPoint {
    pub t: f64,
    pub j: usize,
    pub b: f64,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierSeries {
    pub points: Vec<MonitorPoint>,
    /// Every flow step lowers `B` at rate at least `ε_flow − 1e-6`.
    pub flow_decreasing: bool,
    /// Every pre-acceptance jump lowers `B` by at least `ε_jump − 1e-9`.
    pub jumps_decreasing: bool,
    pub reached_target: bool,
}

impl BarrierSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,j,B,event\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.t, p.j, p.b, p.event);
        }
        out
    }
}

/// Evaluates `B` along a trajectory, truncated at the first entry into
/// `R`.
pub fn monitor(
    tr: &HybridTrajectory,
    sys: &ClosedLoopSystem,
    spec: &BarrierSpec,
) -> Result<BarrierSeries, CertificateError> {
    let n = sys.plant.n();
    for seg in &tr.segments {
        if seg.s.0 >= sys.fsa.num_states() || seg.o.0 >= sys.alphabet().len() {
            return Err(CertificateError::MismatchedScenario(format!(
                "segment {} refers to s{} / observation {}",
                seg.j, seg.s.0, seg.o.0
            )));
        }
        if seg.states.iter().any(|x| x.len() != n) {
            return Err(CertificateError::MismatchedScenario(format!(
                "segment {} has states of the wrong dimension",
                seg.j
            )));
        }
    }
    let mut series = BarrierSeries {
        points: Vec::new(),
        flow_decreasing: true,
        jumps_decreasing: true,
        reached_target: false,
    };
    for (i, seg) in tr.segments.iter().enumerate() {
        let region = sys.region(seg.o);
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..seg.times.len() {
            let x = seg.hybrid_state(k);
            let (t, b) = (seg.times[k], barrier_value(sys, spec, &x));
            if sys.fsa.is_accepting(x.s) {
                if i == 0 {
                    series.points.push(MonitorPoint {
                        t,
                        j: seg.j,
                        b,
                        event: "accept".into(),
                    });
                }
                series.reached_target = true;
                return Ok(series);
            }
            // flow samples other than the landing point must sit in C
            let is_landing = k + 1 == seg.times.len();
            if !is_landing && region.margin(&x.xi) < -1e-9 {
                return Err(CertificateError::DomainViolation { t, j: seg.j });
            }
            if let Some((t0, b0)) = prev {
                let dt = t - t0;
                let allowance = 4.0 * f64::EPSILON * b0.abs().max(1.0);
                if b - b0 > (-spec.eps_flow + 1e-6) * dt + allowance {
                    series.flow_decreasing = false;
                }
            }
            prev = Some((t, b));
            if k > 0 || i == 0 {
                series.points.push(MonitorPoint {
                    t,
                    j: seg.j,
                    b,
                    event: "flow".into(),
                });
            }
        }
        if let Some(jr) = tr.jumps.get(i) {
            let before = barrier_value(sys, spec, &jr.pre);
            let after = barrier_value(sys, spec, &jr.post);
            if after - before > -spec.eps_jump + 1e-9 {
                series.jumps_decreasing = false;
            }
            series.points.push(MonitorPoint {
                t: jr.t,
                j: jr.j + 1,
                b: after,
                event: format!("jump:{}", obs_name(sys, jr.generated)),
            });
            if sys.fsa.is_accepting(jr.post.s) {
                series.reached_target = true;
                return Ok(series);
            }
        }
    }
    Ok(series)
}
