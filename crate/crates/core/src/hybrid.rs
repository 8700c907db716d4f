//! Closed-loop hybrid execution.
//!
//! The total state is `(s, o, ξ)`. While `ξ` is outside the interior of
//! `D_o` the plant flows under `ξ̇ = (A − BK_o)(ξ − c_o)` with `s` and `o`
//! frozen. As soon as the flow reaches `D_o` the solution jumps:
//! `s⁺ = δ(s, o)`, `o⁺` is chosen from the progress set of `s⁺`, `ξ⁺ = ξ`.
//! Integration is fixed-step RK4; region entry is localized by bisection
//! on the step length.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{bfs_distances, AutomatonError, DistanceTable, Fsa, PolicySets, StateId};
use crate::formula::{Alphabet, Obs};
use crate::plant::{synthesize_all, GainEntry, Gains, PlantError, PlantSetup, PlantSpec, Region};

pub const DEFAULT_DT: f64 = 1e-3;
/// Bisection stops once `|margin| ≤ EVENT_TOL` on the inside of `D_o`.
pub const EVENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HybridError {
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("inconsistent system: {0}")]
    Setup(String),
    #[error("state became nonfinite at t={t}, j={j}")]
    Nonfinite { t: f64, j: usize },
    #[error("jump requested outside the jump set (margin {margin:.3e})")]
    NotInJumpSet { margin: f64 },
    #[error("observation {o} is not enabled in state s{s}")]
    ObservationNotEnabled { s: usize, o: usize },
    #[error("state s{0} has an empty progress set")]
    EmptyProgressSet(usize),
    #[error("policy chose `{chosen}` outside the allowed set {allowed:?}")]
    PolicyRejected { chosen: String, allowed: Vec<String> },
    #[error("scripted policy ran out of observations")]
    ScriptExhausted,
    #[error("malformed trajectory: {0}")]
    Malformed(String),
}

/// The automaton, plant, regions and gains composed into one system.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    pub fsa: Fsa,
    pub distances: DistanceTable,
    pub policy_sets: PolicySets,
    pub plant: PlantSpec,
    /// Indexed by observation.
    pub regions: Vec<Region>,
    pub gains: Gains,
}

impl ClosedLoopSystem {
    pub fn new(
        fsa: Fsa,
        plant: PlantSpec,
        regions: Vec<Region>,
        gains: Gains,
    ) -> Result<Self, HybridError> {
        let k = fsa.alphabet().len();
        if regions.len() != k || gains.len() != k {
            return Err(HybridError::Setup(format!(
                "{k} observations but {} regions and {} gains",
                regions.len(),
                gains.len()
            )));
        }
        for (i, r) in regions.iter().enumerate() {
            if r.obs() != Obs(i) {
                return Err(HybridError::Setup(format!(
                    "region {i} belongs to observation {}",
                    r.obs().0
                )));
            }
            if r.dim() != plant.n() {
                return Err(HybridError::Setup(format!(
                    "region {i} has dimension {}, plant has {}",
                    r.dim(),
                    plant.n()
                )));
            }
        }
        let distances = bfs_distances(&fsa)?;
        let policy_sets = PolicySets::new(&fsa, &distances)?;
        Ok(Self {
            fsa,
            distances,
            policy_sets,
            plant,
            regions,
            gains,
        })
    }

    /// Synthesizes the gains described by `setup` and composes.
    pub fn synthesize(fsa: Fsa, setup: &PlantSetup) -> Result<Self, HybridError> {
        let gains = synthesize_all(&setup.plant, &setup.regions, &setup.mode, setup.shared_gain)?;
        Self::new(fsa, setup.plant.clone(), setup.regions.clone(), gains)
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.fsa.alphabet()
    }

    pub fn region(&self, o: Obs) -> &Region {
        &self.regions[o.0]
    }

    pub fn gain(&self, o: Obs) -> &GainEntry {
        self.gains.get(o)
    }

    pub fn distance(&self, s: StateId) -> usize {
        self.distances.get(s)
    }

    pub fn is_enabled(&self, s: StateId, o: Obs) -> bool {
        s.0 < self.fsa.num_states() && self.fsa.step(s, o).is_some()
    }

    /// Observations `o⁺` the jump map may select after landing in `s`.
    pub fn jump_choices(&self, s: StateId) -> &[Obs] {
        if self.fsa.is_accepting(s) {
            self.policy_sets.enabled(s)
        } else {
            self.policy_sets.progress(s)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub s: StateId,
    pub o: Obs,
    pub xi: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HybridTime {
    pub t: f64,
    pub j: usize,
}

/// Rule for choosing the next target observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpPolicy {
    /// Lowest observation index in the allowed set.
    First,
    /// Uniform over the allowed set, driven by the run seed.
    SeededRandom,
    /// Observations by name, consumed one per choice (including the
    /// initial one).
    Scripted(Vec<String>),
}

struct PolicyRunner<'a> {
    policy: &'a JumpPolicy,
    rng: ChaCha8Rng,
    cursor: usize,
}

impl<'a> PolicyRunner<'a> {
    fn new(policy: &'a JumpPolicy, seed: u64) -> Self {
        Self {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursor: 0,
        }
    }

    fn choose(&mut self, alphabet: &Alphabet, allowed: &[Obs]) -> Result<Obs, HybridError> {
        match self.policy {
            JumpPolicy::First => Ok(allowed[0]),
            JumpPolicy::SeededRandom => Ok(allowed[self.rng.random_range(0..allowed.len())]),
            JumpPolicy::Scripted(script) => {
                let name = script.get(self.cursor).ok_or(HybridError::ScriptExhausted)?;
                self.cursor += 1;
                match alphabet.lookup(name) {
                    Some(o) if allowed.contains(&o) => Ok(o),
                    _ => Err(HybridError::PolicyRejected {
                        chosen: name.clone(),
                        allowed: allowed.iter().map(|&o| alphabet.name(o).to_string()).collect(),
                    }),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentEnd {
    /// Reached `D_o`; a jump follows.
    ReachedRegion,
    /// Continuous-time budget ran out first.
    TimeBudget,
    /// Terminal point of an accepted solution.
    Accepted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSegment {
    pub j: usize,
    pub s: StateId,
    pub o: Obs,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub end: SegmentEnd,
}

impl FlowSegment {
    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("segments hold at least one sample")
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("segments hold at least one sample")
    }

    pub fn is_zero_length(&self) -> bool {
        self.times.len() == 1
    }

    pub fn hybrid_state(&self, k: usize) -> HybridState {
        HybridState {
            s: self.s,
            o: self.o,
            xi: self.states[k].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub t: f64,
    /// Jump counter before the jump.
    pub j: usize,
    pub pre: HybridState,
    pub post: HybridState,
    pub generated: Obs,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Accepted { t: f64, j: usize },
    Inconclusive(BudgetKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetKind {
    Time,
    Jumps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    pub segments: Vec<FlowSegment>,
    pub jumps: Vec<JumpRecord>,
    pub verdict: Verdict,
}

impl HybridTrajectory {
    /// Observations generated by the jumps, in order.
    pub fn word(&self) -> Vec<Obs> {
        self.jumps.iter().map(|j| j.generated).collect()
    }

    /// Automaton states visited, starting with the initial one.
    pub fn state_sequence(&self) -> Vec<StateId> {
        self.segments.iter().map(|s| s.s).collect()
    }

    pub fn dim(&self) -> usize {
        self.segments.first().map_or(0, |s| s.states[0].len())
    }
}

/// Integration and budget settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub j_max: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            t_max: 100.0,
            j_max: 100,
        }
    }
}

fn rk4(g: &GainEntry, xi: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = g.field(xi);
    let k2 = g.field(&(xi + &k1 * (h / 2.0)));
    let k3 = g.field(&(xi + &k2 * (h / 2.0)));
    let k4 = g.field(&(xi + &k3 * h));
    xi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Flows from `x0` at hybrid time `(t0, j)` until `D_o` is reached or
/// `t_end` passes. A start inside `D_o` yields a zero-length segment.
pub fn flow_segment(
    sys: &ClosedLoopSystem,
    x0: &HybridState,
    t0: f64,
    j: usize,
    dt: f64,
    t_end: f64,
) -> Result<FlowSegment, HybridError> {
    let region = sys.region(x0.o);
    let gain = sys.gain(x0.o);
    let mut seg = FlowSegment {
        j,
        s: x0.s,
        o: x0.o,
        times: vec![t0],
        states: vec![x0.xi.clone()],
        end: SegmentEnd::ReachedRegion,
    };
    if region.margin(&x0.xi) <= 0.0 {
        return Ok(seg);
    }
    let mut xi = x0.xi.clone();
    let mut t = t0;
    let mut steps: u64 = 0;
    loop {
        if t >= t_end {
            seg.end = SegmentEnd::TimeBudget;
            return Ok(seg);
        }
        let h = dt.min(t_end - t);
        let next = rk4(gain, &xi, h);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(HybridError::Nonfinite { t: t + h, j });
        }
        if region.margin(&next) <= 0.0 {
            let (tau, hit) = localize(gain, region, &xi, h, next);
            seg.times.push(t + tau);
            seg.states.push(hit);
            return Ok(seg);
        }
        steps += 1;
        t = if h < dt { t_end } else { t0 + steps as f64 * dt };
        xi = next;
        seg.times.push(t);
        seg.states.push(xi.clone());
    }
}

/// Bisection on the sub-step length; the returned point is inside the
/// region with `|margin| ≤ EVENT_TOL` unless the bracket collapses first.
fn localize(
    gain: &GainEntry,
    region: &Region,
    xi: &DVector<f64>,
    h: f64,
    at_h: DVector<f64>,
) -> (f64, DVector<f64>) {
    let (mut lo, mut hi) = (0.0, h);
    let mut x_hi = at_h;
    for _ in 0..200 {
        if region.margin(&x_hi).abs() <= EVENT_TOL || hi - lo <= f64::EPSILON * h {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let x_mid = rk4(gain, xi, mid);
        if region.margin(&x_mid) <= 0.0 {
            hi = mid;
            x_hi = x_mid;
        } else {
            lo = mid;
        }
    }
    (hi, x_hi)
}

/// Applies the jump map. Returns the post-jump state and whether it is
/// accepting.
fn jump_with(
    sys: &ClosedLoopSystem,
    x: &HybridState,
    runner: &mut PolicyRunner<'_>,
) -> Result<(HybridState, bool), HybridError> {
    let margin = sys.region(x.o).margin(&x.xi);
    if margin > 0.0 {
        return Err(HybridError::NotInJumpSet { margin });
    }
    let s_next = sys
        .fsa
        .step(x.s, x.o)
        .ok_or(HybridError::ObservationNotEnabled { s: x.s.0, o: x.o.0 })?;
    let accepted = sys.fsa.is_accepting(s_next);
    let choices = sys.jump_choices(s_next);
    if choices.is_empty() {
        return Err(HybridError::EmptyProgressSet(s_next.0));
    }
    let o_next = if accepted {
        choices[0]
    } else {
        runner.choose(sys.alphabet(), choices)?
    };
    Ok((
        HybridState {
            s: s_next,
            o: o_next,
            xi: x.xi.clone(),
        },
        accepted,
    ))
}

/// One jump from `x ∈ D`. Returns the post-jump state, the generated
/// observation and whether the new automaton state is accepting.
pub fn jump(
    sys: &ClosedLoopSystem,
    x: &HybridState,
    policy: &JumpPolicy,
    seed: u64,
) -> Result<(HybridState, Obs, bool), HybridError> {
    let mut runner = PolicyRunner::new(policy, seed);
    let (post, accepted) = jump_with(sys, x, &mut runner)?;
    Ok((post, x.o, accepted))
}

/// Alternates flows and jumps from `s(0,0) = s₀`, `o(0,0)` chosen by the
/// policy from the progress set of `s₀`, until acceptance or a budget runs
/// out. Deterministic for fixed inputs.
pub fn simulate(
    sys: &ClosedLoopSystem,
    xi0: &DVector<f64>,
    policy: &JumpPolicy,
    seed: u64,
    cfg: &SimConfig,
) -> Result<HybridTrajectory, HybridError> {
    if xi0.len() != sys.plant.n() {
        return Err(HybridError::Setup(format!(
            "initial condition has length {}, plant has {}",
            xi0.len(),
            sys.plant.n()
        )));
    }
    if xi0.iter().any(|v| !v.is_finite()) {
        return Err(HybridError::Nonfinite { t: 0.0, j: 0 });
    }
    if !(cfg.dt > 0.0 && cfg.t_max >= 0.0) {
        return Err(HybridError::Setup("dt must be positive and T_max nonnegative".into()));
    }
    let mut runner = PolicyRunner::new(policy, seed);
    let s0 = sys.fsa.initial();
    let o0 = if sys.fsa.is_accepting(s0) {
        sys.jump_choices(s0)[0]
    } else {
        runner.choose(sys.alphabet(), sys.jump_choices(s0))?
    };
    let mut x = HybridState {
        s: s0,
        o: o0,
        xi: xi0.clone(),
    };
    let mut tr = HybridTrajectory {
        segments: Vec::new(),
        jumps: Vec::new(),
        verdict: Verdict::Inconclusive(BudgetKind::Time),
    };
    if sys.fsa.is_accepting(s0) {
        tr.segments.push(terminal_segment(&x, 0.0, 0));
        tr.verdict = Verdict::Accepted { t: 0.0, j: 0 };
        return Ok(tr);
    }
    let (mut t, mut j) = (0.0, 0);
    loop {
        let seg = flow_segment(sys, &x, t, j, cfg.dt, cfg.t_max)?;
        let end = seg.end;
        t = seg.end_time();
        x.xi = seg.last_state().clone();
        tr.segments.push(seg);
        if end == SegmentEnd::TimeBudget {
            tr.verdict = Verdict::Inconclusive(BudgetKind::Time);
            return Ok(tr);
        }
        if j >= cfg.j_max {
            tr.verdict = Verdict::Inconclusive(BudgetKind::Jumps);
            return Ok(tr);
        }
        let (post, accepted) = jump_with(sys, &x, &mut runner)?;
        tr.jumps.push(JumpRecord {
            t,
            j,
            pre: x.clone(),
            post: post.clone(),
            generated: x.o,
            accepted,
        });
        j += 1;
        x = post;
        if accepted {
            tr.segments.push(terminal_segment(&x, t, j));
            tr.verdict = Verdict::Accepted { t, j };
            return Ok(tr);
        }
    }
}

fn terminal_segment(x: &HybridState, t: f64, j: usize) -> FlowSegment {
    FlowSegment {
        j,
        s: x.s,
        o: x.o,
        times: vec![t],
        states: vec![x.xi.clone()],
        end: SegmentEnd::Accepted,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventualityVerdict {
    Reached { t: f64, j: usize },
    NotReached,
    /// A sample before reaching the target had `o ∉ O_s`.
    LeftDomain { t: f64, j: usize },
}

/// Structural checks: segment/jump alternation, hybrid time ordering and
/// continuity of `ξ` and the logical state across every jump.
pub fn validate_trajectory(tr: &HybridTrajectory) -> Result<(), HybridError> {
    let bad = |m: String| Err(HybridError::Malformed(m));
    if tr.segments.is_empty() {
        return bad("no flow segments".into());
    }
    if tr.segments.len() != tr.jumps.len() + 1 {
        return bad(format!(
            "{} segments but {} jumps",
            tr.segments.len(),
            tr.jumps.len()
        ));
    }
    let mut last_t = f64::NEG_INFINITY;
    for (i, seg) in tr.segments.iter().enumerate() {
        if seg.j != i {
            return bad(format!("segment {i} carries j={}", seg.j));
        }
        if seg.times.is_empty() || seg.times.len() != seg.states.len() {
            return bad(format!("segment {i} has inconsistent samples"));
        }
        for &t in &seg.times {
            if !(t >= last_t) || t < 0.0 {
                return bad(format!("time not nondecreasing in segment {i}"));
            }
            last_t = t;
        }
    }
    for (i, jr) in tr.jumps.iter().enumerate() {
        let (before, after) = (&tr.segments[i], &tr.segments[i + 1]);
        if jr.j != i || jr.t != before.end_time() || jr.t != after.start_time() {
            return bad(format!("jump {i} is not at the segment boundary"));
        }
        if jr.pre.s != before.s || jr.pre.o != before.o || &jr.pre.xi != before.last_state() {
            return bad(format!("jump {i} pre-state differs from the flow end"));
        }
        if jr.post.s != after.s || jr.post.o != after.o || jr.post.xi != after.states[0] {
            return bad(format!("jump {i} post-state differs from the next flow start"));
        }
        if jr.post.xi != jr.pre.xi {
            return bad(format!("ξ changes across jump {i}"));
        }
    }
    Ok(())
}

/// First hybrid time with `s ∈ S_f`, after checking that every earlier
/// sample lies in `C ∪ D`.
pub fn check_eventuality(
    tr: &HybridTrajectory,
    fsa: &Fsa,
) -> Result<EventualityVerdict, HybridError> {
    validate_trajectory(tr)?;
    for seg in &tr.segments {
        if seg.s.0 >= fsa.num_states() {
            return Err(HybridError::Malformed(format!("unknown state s{}", seg.s.0)));
        }
        if fsa.is_accepting(seg.s) {
            return Ok(EventualityVerdict::Reached {
                t: seg.start_time(),
                j: seg.j,
            });
        }
        if fsa.step(seg.s, seg.o).is_none() {
            return Ok(EventualityVerdict::LeftDomain {
                t: seg.start_time(),
                j: seg.j,
            });
        }
    }
    Ok(EventualityVerdict::NotReached)
}

/// Trajectory CSV with header `t,j,s,o,xi_1..xi_n,B`: every flow sample,
/// plus a pre-jump and a post-jump row for each jump. `barrier` fills the
/// last column.
pub fn trajectory_csv(
    tr: &HybridTrajectory,
    alphabet: &Alphabet,
    barrier: impl Fn(&HybridState) -> f64,
) -> String {
    let n = tr.dim();
    let mut out = String::from("t,j,s,o");
    for i in 1..=n {
        let _ = write!(out, ",xi_{i}");
    }
    out.push_str(",B\n");
    let mut row = |t: f64, j: usize, x: &HybridState| {
        let _ = write!(out, "{t},{j},s{},{}", x.s.0, alphabet.name(x.o));
        for v in x.xi.iter() {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", barrier(x));
    };
    for (i, seg) in tr.segments.iter().enumerate() {
        for k in 0..seg.times.len() {
            row(seg.times[k], seg.j, &seg.hybrid_state(k));
        }
        if let Some(jr) = tr.jumps.get(i) {
            row(jr.t, jr.j, &jr.pre);
            row(jr.t, jr.j + 1, &jr.post);
        }
    }
    out
}
