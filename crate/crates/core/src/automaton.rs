//! Deterministic finite automata from co-safe formulas.
//!
//! States are canonical formulas; the transition on observation `o` is the
//! symbol derivative of the state formula by `o`. A `False` derivative means
//! the transition is undefined. `True` is the only accepting formula and
//! loops on every observation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{check_co_safe, eval_word, parse_nnf, Alphabet, Formula, FormulaError, Obs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub usize);

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomatonError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("formula is not syntactically co-safe")]
    NotCoSafe,
    #[error("derivative closure exceeded the state budget of {cap}")]
    StateBudgetExceeded { cap: usize },
    #[error("infeasible specification: no accepting state reachable from the initial state")]
    Infeasible,
    #[error("state s{0} cannot reach an accepting state")]
    NoPathToAccepting(usize),
    #[error("state s{0} has an empty progress set")]
    EmptyProgressSet(usize),
    #[error("invalid automaton document: {0}")]
    InvalidDocument(String),
}

type Clause = BTreeSet<Formula>;

/// Canonical form: a disjunction of conjunctions of literals (atoms,
/// negated atoms and temporal nodes with canonical children), with
/// contradictory clauses dropped and subsumed clauses absorbed, printed
/// as sorted right-nested chains. Derivatives only copy literals, so the
/// canonical derivatives of a formula are finitely many.
pub fn simplify(f: &Formula) -> Formula {
    from_dnf(dnf(f))
}

fn dnf(f: &Formula) -> BTreeSet<Clause> {
    use Formula::*;
    match f {
        True => BTreeSet::from([Clause::new()]),
        False => BTreeSet::new(),
        And(l, r) => {
            let (a, b) = (dnf(l), dnf(r));
            let mut out = BTreeSet::new();
            for x in &a {
                for y in &b {
                    if let Some(c) = consistent(x.union(y).cloned().collect()) {
                        out.insert(c);
                    }
                }
            }
            absorb(out)
        }
        Or(l, r) => {
            let mut a = dnf(l);
            a.extend(dnf(r));
            absorb(a)
        }
        _ => match literal(f) {
            Some(g) => BTreeSet::from([Clause::from([g])]),
            None => BTreeSet::new(),
        },
    }
}

/// Drops clauses that demand two different letters (or a letter and its
/// negation) at the same position; an atom makes other negated atoms
/// redundant.
fn consistent(mut c: Clause) -> Option<Clause> {
    let atoms: Vec<Obs> = c
        .iter()
        .filter_map(|f| match f {
            Formula::Atom(o) => Some(*o),
            _ => None,
        })
        .collect();
    match atoms.as_slice() {
        [] => Some(c),
        [o] => {
            if c.contains(&Formula::NegAtom(*o)) {
                return None;
            }
            c.retain(|f| !matches!(f, Formula::NegAtom(_)));
            Some(c)
        }
        _ => None,
    }
}

fn absorb(set: BTreeSet<Clause>) -> BTreeSet<Clause> {
    let all: Vec<&Clause> = set.iter().collect();
    set.iter()
        .filter(|c| !all.iter().any(|d| d.len() < c.len() && d.is_subset(c)))
        .cloned()
        .collect()
}

/// Canonical literal, or `None` when it is equivalent to `false`.
fn literal(f: &Formula) -> Option<Formula> {
    use Formula::*;
    match f {
        Atom(_) | NegAtom(_) => Some(f.clone()),
        Next(g) => match simplify(g) {
            False => None,
            g => Some(Formula::next(g)),
        },
        Eventually(g) => match simplify(g) {
            False => None,
            g => Some(Formula::eventually(g)),
        },
        Until(l, r) => match (simplify(l), simplify(r)) {
            (_, False) => None,
            (True, r) => Some(Formula::eventually(r)),
            (l, r) => Some(Formula::until(l, r)),
        },
        WeakNext(g) => Some(WeakNext(Box::new(simplify(g)))),
        Always(g) => Some(Always(Box::new(simplify(g)))),
        Release(l, r) => Some(Release(Box::new(simplify(l)), Box::new(simplify(r)))),
        True | False | And(..) | Or(..) => unreachable!("not a literal"),
    }
}

fn from_dnf(set: BTreeSet<Clause>) -> Formula {
    let clauses: Vec<Formula> = set
        .into_iter()
        .map(|c| rebuild(c.into_iter().collect(), true))
        .collect();
    rebuild(clauses, false)
}

fn rebuild(mut items: Vec<Formula>, conj: bool) -> Formula {
    items.sort();
    items.dedup();
    let mut it = items.into_iter().rev();
    let Some(mut acc) = it.next() else {
        return if conj { Formula::True } else { Formula::False };
    };
    for item in it {
        acc = if conj {
            Formula::and(item, acc)
        } else {
            Formula::or(item, acc)
        };
    }
    acc
}

/// Symbol derivative: the residual obligation after reading `o`.
pub fn derivative(f: &Formula, o: Obs) -> Formula {
    simplify(&raw_derivative(f, o))
}

fn raw_derivative(f: &Formula, o: Obs) -> Formula {
    use Formula::*;
    match f {
        True => True,
        False => False,
        Atom(p) => {
            if *p == o {
                True
            } else {
                False
            }
        }
        NegAtom(p) => {
            if *p == o {
                False
            } else {
                True
            }
        }
        And(l, r) => Formula::and(raw_derivative(l, o), raw_derivative(r, o)),
        Or(l, r) => Formula::or(raw_derivative(l, o), raw_derivative(r, o)),
        Next(g) | WeakNext(g) => (**g).clone(),
        Eventually(g) => Formula::or(raw_derivative(g, o), f.clone()),
        Until(l, r) => Formula::or(
            raw_derivative(r, o),
            Formula::and(raw_derivative(l, o), f.clone()),
        ),
        Always(g) => Formula::and(raw_derivative(g, o), f.clone()),
        Release(l, r) => Formula::and(
            raw_derivative(r, o),
            Formula::or(raw_derivative(l, o), f.clone()),
        ),
    }
}

/// Deterministic FSA with a partial transition function.
#[derive(Debug, Clone, PartialEq)]
pub struct Fsa {
    pub(crate) alphabet: Alphabet,
    pub(crate) states: Vec<Formula>,
    pub(crate) initial: StateId,
    /// `delta[s][o]`
    pub(crate) delta: Vec<Vec<Option<StateId>>>,
    pub(crate) accepting: Vec<bool>,
}

impl Fsa {
    /// Assembles an automaton without any consistency checks.
    pub fn from_parts(
        alphabet: Alphabet,
        states: Vec<Formula>,
        initial: StateId,
        delta: Vec<Vec<Option<StateId>>>,
        accepting: Vec<bool>,
    ) -> Self {
        Self {
            alphabet,
            states,
            initial,
            delta,
            accepting,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn formula(&self, s: StateId) -> &Formula {
        &self.states[s.0]
    }

    pub fn is_accepting(&self, s: StateId) -> bool {
        self.accepting.get(s.0).copied().unwrap_or(false)
    }

    pub fn accepting_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.states().filter(|&s| self.is_accepting(s))
    }

    pub fn step(&self, s: StateId, o: Obs) -> Option<StateId> {
        self.delta.get(s.0).and_then(|row| row.get(o.0)).copied().flatten()
    }

    pub fn edges(&self) -> impl Iterator<Item = (StateId, Obs, StateId)> + '_ {
        self.states().flat_map(move |s| {
            self.alphabet
                .iter()
                .filter_map(move |o| self.step(s, o).map(|t| (s, o, t)))
        })
    }

    pub fn state_of(&self, f: &Formula) -> Option<StateId> {
        self.states.iter().position(|g| g == f).map(StateId)
    }

    /// The run over `word`, or `None` if it hits an undefined transition.
    pub fn run(&self, word: &[Obs]) -> Option<Vec<StateId>> {
        let mut states = vec![self.initial];
        let mut s = self.initial;
        for &o in word {
            s = self.step(s, o)?;
            states.push(s);
        }
        Some(states)
    }

    pub fn accepts(&self, word: &[Obs]) -> bool {
        self.run(word)
            .is_some_and(|r| self.is_accepting(*r.last().expect("runs are nonempty")))
    }

    /// Drops states unreachable from the initial state or unable to reach
    /// an accepting state. Survivors keep their relative order.
    pub fn prune(&self) -> Result<Fsa, AutomatonError> {
        let n = self.num_states();
        let mut forward = vec![false; n];
        let mut queue = VecDeque::from([self.initial]);
        forward[self.initial.0] = true;
        while let Some(s) = queue.pop_front() {
            for o in self.alphabet.iter() {
                if let Some(t) = self.step(s, o) {
                    if t.0 < n && !forward[t.0] {
                        forward[t.0] = true;
                        queue.push_back(t);
                    }
                }
            }
        }
        let preds = self.predecessors();
        let mut backward = vec![false; n];
        for s in self.accepting_states() {
            backward[s.0] = true;
            queue.push_back(s);
        }
        while let Some(s) = queue.pop_front() {
            for &p in &preds[s.0] {
                if !backward[p.0] {
                    backward[p.0] = true;
                    queue.push_back(p);
                }
            }
        }
        if !(forward[self.initial.0] && backward[self.initial.0]) {
            return Err(AutomatonError::Infeasible);
        }
        let mut remap = vec![None; n];
        let mut kept = Vec::new();
        for s in 0..n {
            if forward[s] && backward[s] {
                remap[s] = Some(StateId(kept.len()));
                kept.push(s);
            }
        }
        let delta = kept
            .iter()
            .map(|&s| {
                self.delta[s]
                    .iter()
                    .map(|t| t.and_then(|t| remap.get(t.0).copied().flatten()))
                    .collect()
            })
            .collect();
        Ok(Fsa {
            alphabet: self.alphabet.clone(),
            states: kept.iter().map(|&s| self.states[s].clone()).collect(),
            initial: remap[self.initial.0].expect("initial state kept"),
            delta,
            accepting: kept.iter().map(|&s| self.accepting[s]).collect(),
        })
    }

    fn predecessors(&self) -> Vec<Vec<StateId>> {
        let mut preds = vec![Vec::new(); self.num_states()];
        for (s, _, t) in self.edges() {
            if t.0 < preds.len() {
                preds[t.0].push(s);
            }
        }
        preds
    }
}

/// Derivative closure of `f` without pruning. Transitions to `False` are
/// left undefined; the initial state is kept even when it is `False`.
pub fn explore(f: &Formula, alphabet: &Alphabet, max_states: usize) -> Result<Fsa, AutomatonError> {
    if !check_co_safe(f).is_ok() {
        return Err(AutomatonError::NotCoSafe);
    }
    let init = simplify(f);
    let mut index: HashMap<Formula, StateId> = HashMap::new();
    let mut states = vec![init.clone()];
    index.insert(init, StateId(0));
    let mut delta: Vec<Vec<Option<StateId>>> = Vec::new();
    let mut next = 0;
    while next < states.len() {
        let current = states[next].clone();
        let mut row = Vec::with_capacity(alphabet.len());
        for o in alphabet.iter() {
            let d = derivative(&current, o);
            if d == Formula::False {
                row.push(None);
                continue;
            }
            let id = match index.get(&d) {
                Some(&id) => id,
                None => {
                    if states.len() >= max_states {
                        return Err(AutomatonError::StateBudgetExceeded { cap: max_states });
                    }
                    let id = StateId(states.len());
                    index.insert(d.clone(), id);
                    states.push(d);
                    id
                }
            };
            row.push(Some(id));
        }
        delta.push(row);
        next += 1;
    }
    let accepting = states.iter().map(|s| *s == Formula::True).collect();
    Ok(Fsa {
        alphabet: alphabet.clone(),
        states,
        initial: StateId(0),
        delta,
        accepting,
    })
}

/// Compiles a co-safe formula into a pruned deterministic automaton.
pub fn build_fsa(f: &Formula, alphabet: &Alphabet) -> Result<Fsa, AutomatonError> {
    build_fsa_with_cap(f, alphabet, DEFAULT_STATE_CAP)
}

pub fn build_fsa_with_cap(
    f: &Formula,
    alphabet: &Alphabet,
    max_states: usize,
) -> Result<Fsa, AutomatonError> {
    explore(f, alphabet, max_states)?.prune()
}

/// Edge distances to the accepting set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    dist: Vec<usize>,
    /// Distances to each individual accepting state (`None` when unreachable).
    per_accepting: Vec<(StateId, Vec<Option<usize>>)>,
}

impl DistanceTable {
    pub fn get(&self, s: StateId) -> usize {
        self.dist[s.0]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.dist
    }

    pub fn per_accepting(&self) -> &[(StateId, Vec<Option<usize>>)] {
        &self.per_accepting
    }
}

fn backward_bfs(fsa: &Fsa, preds: &[Vec<StateId>], sources: &[StateId]) -> Vec<Option<usize>> {
    let mut dist = vec![None; fsa.num_states()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s.0] = Some(0);
        queue.push_back(s);
    }
    while let Some(s) = queue.pop_front() {
        let ds = dist[s.0].expect("queued states have a distance");
        for &p in &preds[s.0] {
            if dist[p.0].is_none() {
                dist[p.0] = Some(ds + 1);
                queue.push_back(p);
            }
        }
    }
    dist
}

/// Shortest edge count from every state to the accepting set.
///
/// `d` comes from one multi-source BFS over reversed edges; the
/// per-accepting-state tables are kept alongside for inspection.
pub fn bfs_distances(fsa: &Fsa) -> Result<DistanceTable, AutomatonError> {
    let preds = fsa.predecessors();
    let accepting: Vec<StateId> = fsa.accepting_states().collect();
    let dist = backward_bfs(fsa, &preds, &accepting)
        .into_iter()
        .enumerate()
        .map(|(s, d)| d.ok_or(AutomatonError::NoPathToAccepting(s)))
        .collect::<Result<Vec<_>, _>>()?;
    let per_accepting = accepting
        .iter()
        .map(|&sf| (sf, backward_bfs(fsa, &preds, &[sf])))
        .collect();
    Ok(DistanceTable {
        dist,
        per_accepting,
    })
}

/// Observations with a defined transition out of `s`.
pub fn enabled_obs(fsa: &Fsa, s: StateId) -> Vec<Obs> {
    fsa.alphabet
        .iter()
        .filter(|&o| fsa.step(s, o).is_some())
        .collect()
}

/// Enabled observations whose transition strictly lowers the distance.
/// Accepting states return all enabled observations.
pub fn progress_obs(fsa: &Fsa, d: &DistanceTable, s: StateId) -> Vec<Obs> {
    let enabled = enabled_obs(fsa, s);
    if fsa.is_accepting(s) {
        return enabled;
    }
    enabled
        .into_iter()
        .filter(|&o| {
            fsa.step(s, o)
                .is_some_and(|t| t.0 < fsa.num_states() && d.get(t) < d.get(s))
        })
        .collect()
}

/// Enabled and progress sets for every state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySets {
    enabled: Vec<Vec<Obs>>,
    progress: Vec<Vec<Obs>>,
}

impl PolicySets {
    pub fn new(fsa: &Fsa, d: &DistanceTable) -> Result<Self, AutomatonError> {
        let enabled: Vec<_> = fsa.states().map(|s| enabled_obs(fsa, s)).collect();
        let progress: Vec<_> = fsa.states().map(|s| progress_obs(fsa, d, s)).collect();
        for s in fsa.states() {
            if !fsa.is_accepting(s) && progress[s.0].is_empty() {
                return Err(AutomatonError::EmptyProgressSet(s.0));
            }
        }
        Ok(Self { enabled, progress })
    }

    pub fn enabled(&self, s: StateId) -> &[Obs] {
        &self.enabled[s.0]
    }

    pub fn progress(&self, s: StateId) -> &[Obs] {
        &self.progress[s.0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EquivVerdict {
    Equivalent { words_checked: usize },
    Counterexample {
        word: Vec<Obs>,
        automaton_accepts: bool,
        formula_holds: bool,
    },
}

/// Compares automaton acceptance with [`eval_word`] on every word of
/// length `1..=max_len`, shortest first and lexicographic within a length.
pub fn language_equiv_bounded(fsa: &Fsa, f: &Formula, max_len: usize) -> EquivVerdict {
    let k = fsa.alphabet.len();
    let mut checked = 0;
    for len in 1..=max_len {
        let mut digits = vec![0usize; len];
        loop {
            let word: Vec<Obs> = digits.iter().map(|&i| Obs(i)).collect();
            let a = fsa.accepts(&word);
            let b = eval_word(f, &word);
            checked += 1;
            if a != b {
                return EquivVerdict::Counterexample {
                    word,
                    automaton_accepts: a,
                    formula_holds: b,
                };
            }
            // odometer increment, last position fastest
            let mut pos = len;
            let wrapped = loop {
                if pos == 0 {
                    break true;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < k {
                    break false;
                }
                digits[pos] = 0;
            };
            if wrapped {
                break;
            }
        }
    }
    EquivVerdict::Equivalent {
        words_checked: checked,
    }
}

fn obs_set(alphabet: &Alphabet, set: &[Obs]) -> String {
    set.iter()
        .map(|&o| alphabet.name(o))
        .collect::<Vec<_>>()
        .join(",")
}

/// Graphviz rendering: each node shows its distance and progress set,
/// accepting states are double circles, parallel edges are merged into
/// one `o_i|o_j` label.
pub fn to_dot(fsa: &Fsa, d: &DistanceTable, policy: &PolicySets) -> String {
    let mut out = String::from("digraph fsa {\n  rankdir=LR;\n  __start [shape=point];\n");
    for s in fsa.states() {
        let shape = if fsa.is_accepting(s) {
            "doublecircle"
        } else {
            "circle"
        };
        let _ = writeln!(
            out,
            "  s{i} [shape={shape}, label=\"s{i} d={d} Ō={{{set}}}\"];",
            i = s.0,
            d = d.get(s),
            set = obs_set(&fsa.alphabet, policy.progress(s)),
        );
    }
    let _ = writeln!(out, "  __start -> s{};", fsa.initial.0);
    let mut grouped: BTreeMap<(StateId, StateId), Vec<Obs>> = BTreeMap::new();
    for (s, o, t) in fsa.edges() {
        grouped.entry((s, t)).or_default().push(o);
    }
    for ((s, t), obs) in grouped {
        let label = obs
            .iter()
            .map(|&o| fsa.alphabet.name(o))
            .collect::<Vec<_>>()
            .join("|");
        let _ = writeln!(out, "  s{} -> s{} [label=\"{}\"];", s.0, t.0, label);
    }
    out.push_str("}\n");
    out
}

/// Serialized automaton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsaDocument {
    pub alphabet: Vec<String>,
    pub initial: usize,
    pub states: Vec<StateEntry>,
    /// `(source, observation, target)` triples.
    pub delta: Vec<(usize, String, usize)>,
    pub accepting: Vec<usize>,
    pub distances: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub id: usize,
    pub formula: String,
}

impl FsaDocument {
    pub fn from_fsa(fsa: &Fsa, d: &DistanceTable) -> Self {
        Self {
            alphabet: fsa.alphabet.names().to_vec(),
            initial: fsa.initial.0,
            states: fsa
                .states()
                .map(|s| StateEntry {
                    id: s.0,
                    formula: fsa.formula(s).display(&fsa.alphabet).to_string(),
                })
                .collect(),
            delta: fsa
                .edges()
                .map(|(s, o, t)| (s.0, fsa.alphabet.name(o).to_string(), t.0))
                .collect(),
            accepting: fsa.accepting_states().map(|s| s.0).collect(),
            distances: d.as_slice().to_vec(),
        }
    }

    /// Rebuilds and validates: deterministic transitions, accepting states
    /// exactly the `true` states, pruned, and stored distances matching a
    /// fresh BFS.
    pub fn to_fsa(&self) -> Result<(Fsa, DistanceTable), AutomatonError> {
        let bad = |m: String| AutomatonError::InvalidDocument(m);
        let alphabet = Alphabet::new(self.alphabet.iter().cloned())?;
        let n = self.states.len();
        let mut states = Vec::with_capacity(n);
        for (i, e) in self.states.iter().enumerate() {
            if e.id != i {
                return Err(bad(format!("state ids must be 0..{n} in order")));
            }
            states.push(simplify(&parse_nnf(&e.formula, &alphabet)?));
        }
        if self.initial >= n {
            return Err(bad("initial state out of range".into()));
        }
        let mut delta = vec![vec![None; alphabet.len()]; n];
        for (s, o, t) in &self.delta {
            let obs = alphabet
                .lookup(o)
                .ok_or_else(|| bad(format!("unknown observation `{o}` in delta")))?;
            if *s >= n || *t >= n {
                return Err(bad(format!("transition ({s},{o},{t}) out of range")));
            }
            if delta[*s][obs.0].replace(StateId(*t)).is_some() {
                return Err(bad(format!("nondeterministic transition from s{s} on {o}")));
            }
        }
        let mut accepting = vec![false; n];
        for &s in &self.accepting {
            if s >= n {
                return Err(bad(format!("accepting state {s} out of range")));
            }
            accepting[s] = true;
        }
        for (i, f) in states.iter().enumerate() {
            if accepting[i] != (*f == Formula::True) {
                return Err(bad(format!("s{i}: accepting flag disagrees with its formula")));
            }
        }
        let fsa = Fsa {
            alphabet,
            states,
            initial: StateId(self.initial),
            delta,
            accepting,
        };
        if fsa.prune()?.num_states() != n {
            return Err(bad("automaton is not pruned".into()));
        }
        let d = bfs_distances(&fsa)?;
        if d.as_slice() != self.distances.as_slice() {
            return Err(bad("stored distances disagree with BFS".into()));
        }
        Ok((fsa, d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    pub(crate) const EQ1: &str = "o2 & X(((!o1 U o2) & F o1) | (o1 & X o3))";

    fn abc() -> Alphabet {
        Alphabet::new(["o1", "o2", "o3"]).unwrap()
    }

    #[test]
    fn nested_until_closure_stays_small() {
        // plain ACI normalization does not converge on these
        for text in ["F !o3 U F o2", "(!o3 U o3) U (true U !o1)", "((X o3 | (!o2 U !o3)) U (o3 U !o1)) U F o2"] {
            let f = parse_formula(text, &abc()).unwrap();
            let fsa = build_fsa_with_cap(&f, &abc(), 64).unwrap();
            assert!(matches!(
                language_equiv_bounded(&fsa, &f, 5),
                EquivVerdict::Equivalent { .. }
            ));
        }
    }

    #[test]
    fn simplify_drops_contradictions_and_absorbs() {
        let a = abc();
        let s = |t: &str| simplify(&parse_formula(t, &a).unwrap()).display(&a).to_string();
        assert_eq!(s("o1 & o2"), "false");
        assert_eq!(s("o1 & !o2"), "o1");
        assert_eq!(s("F o1 | (F o1 & X o2)"), "F o1");
        assert_eq!(s("true U o3"), "F o3");
    }

    fn f(text: &str) -> Formula {
        parse_formula(text, &abc()).unwrap()
    }

    #[test]
    fn derivative_rule_instances() {
        let a = abc();
        let fo1 = f("F o1");
        assert_eq!(derivative(&fo1, a.lookup("o1").unwrap()), Formula::True);
        assert_eq!(derivative(&fo1, a.lookup("o2").unwrap()), fo1);
        let eq1 = f(EQ1);
        let d = derivative(&eq1, a.lookup("o2").unwrap());
        assert_eq!(d, simplify(&f("((!o1 U o2) & F o1) | (o1 & X o3)")));
        assert_eq!(derivative(&eq1, a.lookup("o1").unwrap()), Formula::False);
    }

    #[test]
    fn simplify_examples() {
        let o1 = Formula::Atom(Obs(0));
        let fo1 = Formula::eventually(o1.clone());
        assert_eq!(simplify(&Formula::and(Formula::True, fo1.clone())), fo1);
        assert_eq!(simplify(&Formula::or(fo1.clone(), fo1.clone())), fo1);
        assert_eq!(
            simplify(&Formula::or(
                o1.clone(),
                Formula::and(Formula::False, Formula::next(Formula::Atom(Obs(1))))
            )),
            o1
        );
        // commutativity and associativity collapse to one representative
        let x = f("(o1 & F o2) & X o3");
        let y = f("X o3 & (F o2 & o1)");
        assert_eq!(simplify(&x), simplify(&y));
    }

    #[test]
    fn single_atom_automaton() {
        let a = Alphabet::new(["o1", "o2"]).unwrap();
        let fsa = build_fsa(&parse_formula("o1", &a).unwrap(), &a).unwrap();
        assert_eq!(fsa.num_states(), 2);
        let t = fsa.step(fsa.initial(), Obs(0)).unwrap();
        assert!(fsa.is_accepting(t));
        assert_eq!(fsa.step(fsa.initial(), Obs(1)), None);
        assert_eq!(enabled_obs(&fsa, t), vec![Obs(0), Obs(1)]);
    }

    #[test]
    fn reference_automaton_states() {
        let a = abc();
        let fsa = build_fsa(&f(EQ1), &a).unwrap();
        assert_eq!(fsa.num_states(), 6);
        let expected = [
            EQ1,
            "((!o1 U o2) & F o1) | (o1 & X o3)",
            "(!o1 U o2) & F o1",
            "F o1",
            "o3",
            "true",
        ];
        for text in expected {
            assert!(fsa.state_of(&simplify(&f(text))).is_some(), "missing {text}");
        }
        let accepting: Vec<_> = fsa.accepting_states().collect();
        assert_eq!(accepting.len(), 1);
        assert_eq!(fsa.formula(accepting[0]), &Formula::True);
    }

    #[test]
    fn prune_keeps_reference_automaton() {
        let raw = explore(&f(EQ1), &abc(), DEFAULT_STATE_CAP).unwrap();
        assert_eq!(raw.prune().unwrap(), raw);
    }

    #[test]
    fn prune_drops_dead_state() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        // s0 -a-> s1 (accepting), s0 -b-> s2 (dead end)
        let fsa = Fsa::from_parts(
            a.clone(),
            vec![Formula::Atom(Obs(0)), Formula::True, Formula::Atom(Obs(1))],
            StateId(0),
            vec![
                vec![Some(StateId(1)), Some(StateId(2))],
                vec![Some(StateId(1)), Some(StateId(1))],
                vec![None, None],
            ],
            vec![false, true, false],
        );
        let pruned = fsa.prune().unwrap();
        assert_eq!(pruned.num_states(), 2);
        assert_eq!(pruned.step(StateId(0), Obs(0)), Some(StateId(1)));
        assert_eq!(pruned.step(StateId(0), Obs(1)), None);
    }

    #[test]
    fn prune_infeasible() {
        let a = Alphabet::new(["a"]).unwrap();
        let fsa = Fsa::from_parts(
            a,
            vec![Formula::Atom(Obs(0))],
            StateId(0),
            vec![vec![None]],
            vec![false],
        );
        assert_eq!(fsa.prune(), Err(AutomatonError::Infeasible));
        let contradiction = f("o1 & o2");
        assert_eq!(
            build_fsa(&contradiction, &abc()),
            Err(AutomatonError::Infeasible)
        );
    }

    #[test]
    fn chain_distances() {
        let a = Alphabet::new(["a"]).unwrap();
        let fsa = build_fsa(&parse_formula("X a", &a).unwrap(), &a).unwrap();
        let d = bfs_distances(&fsa).unwrap();
        assert_eq!(d.as_slice(), &[2, 1, 0]);
    }

    #[test]
    fn reference_distances_and_policy() {
        let a = abc();
        let fsa = build_fsa(&f(EQ1), &a).unwrap();
        let d = bfs_distances(&fsa).unwrap();
        let id = |t: &str| fsa.state_of(&simplify(&f(t))).unwrap();
        let psi = id(EQ1);
        let psi1 = id("((!o1 U o2) & F o1) | (o1 & X o3)");
        let chi = id("(!o1 U o2) & F o1");
        let fo1 = id("F o1");
        let o3 = id("o3");
        let tt = id("true");
        let got: Vec<usize> = [psi, psi1, chi, fo1, o3, tt].iter().map(|&s| d.get(s)).collect();
        assert_eq!(got, vec![3, 2, 2, 1, 1, 0]);

        let (o1, o2, o3o) = (Obs(0), Obs(1), Obs(2));
        assert_eq!(enabled_obs(&fsa, psi), vec![o2]);
        assert_eq!(enabled_obs(&fsa, psi1), vec![o1, o2, o3o]);
        assert_eq!(enabled_obs(&fsa, tt), vec![o1, o2, o3o]);
        assert_eq!(progress_obs(&fsa, &d, psi1), vec![o1, o2]);
        assert_eq!(progress_obs(&fsa, &d, psi), vec![o2]);
        assert_eq!(progress_obs(&fsa, &d, tt), vec![o1, o2, o3o]);
        assert!(PolicySets::new(&fsa, &d).is_ok());

        // multi-source BFS equals the minimum over per-accepting tables
        for s in fsa.states() {
            let min = d
                .per_accepting()
                .iter()
                .filter_map(|(_, t)| t[s.0])
                .min()
                .unwrap();
            assert_eq!(min, d.get(s));
        }
    }

    #[test]
    fn bounded_equivalence() {
        let a = abc();
        let eq1 = f(EQ1);
        let fsa = build_fsa(&eq1, &a).unwrap();
        assert_eq!(
            language_equiv_bounded(&fsa, &eq1, 6),
            EquivVerdict::Equivalent { words_checked: 1092 }
        );
        let atom = f("o1");
        let fsa_atom = build_fsa(&atom, &a).unwrap();
        assert!(matches!(
            language_equiv_bounded(&fsa_atom, &atom, 3),
            EquivVerdict::Equivalent { .. }
        ));
        assert_eq!(
            language_equiv_bounded(&fsa, &atom, 1),
            EquivVerdict::Counterexample {
                word: vec![Obs(0)],
                automaton_accepts: false,
                formula_holds: true
            }
        );
    }

    #[test]
    fn state_budget() {
        let a = abc();
        assert_eq!(
            build_fsa_with_cap(&f(EQ1), &a, 3),
            Err(AutomatonError::StateBudgetExceeded { cap: 3 })
        );
    }

    #[test]
    fn rejects_non_co_safe_input() {
        let a = abc();
        let g = crate::formula::parse_nnf("G o1", &a).unwrap();
        assert_eq!(build_fsa(&g, &a), Err(AutomatonError::NotCoSafe));
    }

    #[test]
    fn dot_and_json() {
        let a = abc();
        let fsa = build_fsa(&f(EQ1), &a).unwrap();
        let d = bfs_distances(&fsa).unwrap();
        let p = PolicySets::new(&fsa, &d).unwrap();
        let dot = to_dot(&fsa, &d, &p);
        assert!(dot.contains("s0 [shape=circle, label=\"s0 d=3 Ō={o2}\"]"));
        assert_eq!(dot.matches("doublecircle").count(), 1);
        assert!(dot.contains("label=\"o1|o2|o3\""));

        let doc = FsaDocument::from_fsa(&fsa, &d);
        let text = serde_json::to_string(&doc).unwrap();
        let back: FsaDocument = serde_json::from_str(&text).unwrap();
        let (fsa2, d2) = back.to_fsa().unwrap();
        assert_eq!(fsa2, fsa);
        assert_eq!(d2, d);

        let mut broken = doc.clone();
        broken.distances[0] = 7;
        assert!(broken.to_fsa().is_err());
        let mut broken = doc;
        broken.delta.push((0, "o2".into(), 0));
        assert!(broken.to_fsa().is_err());
    }

    #[test]
    fn deterministic_numbering() {
        let a = abc();
        let x = build_fsa(&f(EQ1), &a).unwrap();
        let y = build_fsa(&f(EQ1), &a).unwrap();
        assert_eq!(x, y);
    }
}
