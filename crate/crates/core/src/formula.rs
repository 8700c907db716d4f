//! Co-safe LTL formulas over a finite observation alphabet.
//!
//! Formulas are kept in negation normal form: `!` only ever sits directly
//! on an atom. The parser pushes negations inward with the usual dualities,
//! which can introduce `WeakNext`, `Release` and `Always`. Those nodes are
//! representable so that [`check_co_safe`] can point at them, but they are
//! rejected by [`parse_formula`] and by the automaton builder.
//!
//! Words are finite and carry exactly one observation per position, so
//! distinct atoms are mutually exclusive.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of an observation inside its [`Alphabet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Obs(pub usize);

const KEYWORDS: [&str; 7] = ["X", "F", "G", "U", "R", "true", "false"];

/// Ordered set of observation names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Alphabet {
    pub fn new<I, S>(names: I) -> Result<Self, FormulaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(FormulaError::EmptyAlphabet);
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if !is_identifier(name) || KEYWORDS.contains(&name.as_str()) {
                return Err(FormulaError::InvalidObservationName(name.clone()));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(FormulaError::DuplicateObservation(name.clone()));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, o: Obs) -> &str {
        &self.names[o.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lookup(&self, name: &str) -> Option<Obs> {
        self.index.get(name).copied().map(Obs)
    }

    /// All observations in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = Obs> + '_ {
        (0..self.names.len()).map(Obs)
    }

    /// Parses a whitespace separated word such as `"o2 o1 o3"`.
    pub fn parse_word(&self, text: &str) -> Result<Vec<Obs>, FormulaError> {
        text.split(|c: char| c.is_whitespace() || c == ',' || c == '.')
            .filter(|t| !t.is_empty())
            .map(|t| {
                self.lookup(t).ok_or_else(|| FormulaError::UnknownAtom {
                    name: t.to_string(),
                    pos: 0,
                })
            })
            .collect()
    }

    pub fn format_word(&self, word: &[Obs]) -> String {
        word.iter().map(|&o| self.name(o)).collect::<Vec<_>>().join("·")
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Formula in negation normal form.
///
/// The derived ordering is the canonical order used when the automaton
/// builder sorts the operands of flattened conjunctions and disjunctions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    False,
    True,
    Atom(Obs),
    NegAtom(Obs),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    /// Dual of `Next`; outside the co-safe fragment.
    WeakNext(Box<Formula>),
    /// Dual of `Until`; outside the co-safe fragment.
    Release(Box<Formula>, Box<Formula>),
    /// Dual of `Eventually`; outside the co-safe fragment.
    Always(Box<Formula>),
}

impl Formula {
    pub fn atom(o: Obs) -> Self {
        Formula::Atom(o)
    }

    pub fn neg_atom(o: Obs) -> Self {
        Formula::NegAtom(o)
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn until(l: Formula, r: Formula) -> Self {
        Formula::Until(Box::new(l), Box::new(r))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    /// Negation pushed through to the atoms.
    pub fn negate(&self) -> Formula {
        use Formula::*;
        match self {
            False => True,
            True => False,
            Atom(o) => NegAtom(*o),
            NegAtom(o) => Atom(*o),
            And(l, r) => Formula::or(l.negate(), r.negate()),
            Or(l, r) => Formula::and(l.negate(), r.negate()),
            Next(f) => WeakNext(Box::new(f.negate())),
            WeakNext(f) => Formula::next(f.negate()),
            Until(l, r) => Release(Box::new(l.negate()), Box::new(r.negate())),
            Release(l, r) => Formula::until(l.negate(), r.negate()),
            Eventually(f) => Always(Box::new(f.negate())),
            Always(f) => Formula::eventually(f.negate()),
        }
    }

    pub fn is_co_safe_node(&self) -> bool {
        !matches!(
            self,
            Formula::WeakNext(_) | Formula::Release(..) | Formula::Always(_)
        )
    }

    pub fn children(&self) -> Vec<&Formula> {
        use Formula::*;
        match self {
            False | True | Atom(_) | NegAtom(_) => vec![],
            Next(f) | Eventually(f) | WeakNext(f) | Always(f) => vec![f],
            And(l, r) | Or(l, r) | Until(l, r) | Release(l, r) => vec![l, r],
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Every observation mentioned by an atom, in tree order.
    pub fn atoms(&self) -> Vec<Obs> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<Obs>) {
        match self {
            Formula::Atom(o) | Formula::NegAtom(o) => out.push(*o),
            _ => self.children().iter().for_each(|c| c.collect_atoms(out)),
        }
    }

    pub fn display<'a>(&'a self, alphabet: &'a Alphabet) -> FormulaDisplay<'a> {
        FormulaDisplay {
            formula: self,
            alphabet,
        }
    }
}

/// Printer emitting the same concrete syntax accepted by [`parse_formula`].
pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    alphabet: &'a Alphabet,
}

impl FormulaDisplay<'_> {
    fn operand(&self, f: &Formula, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let binary = matches!(
            f,
            Formula::And(..) | Formula::Or(..) | Formula::Until(..) | Formula::Release(..)
        );
        let inner = FormulaDisplay {
            formula: f,
            alphabet: self.alphabet,
        };
        if binary {
            write!(out, "({inner})")
        } else {
            write!(out, "{inner}")
        }
    }
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Formula::*;
        let name = |o: &Obs| self.alphabet.name(*o);
        match self.formula {
            True => write!(out, "true"),
            False => write!(out, "false"),
            Atom(o) => write!(out, "{}", name(o)),
            NegAtom(o) => write!(out, "!{}", name(o)),
            And(l, r) | Or(l, r) | Until(l, r) | Release(l, r) => {
                let op = match self.formula {
                    And(..) => "&",
                    Or(..) => "|",
                    Until(..) => "U",
                    _ => "R",
                };
                self.operand(l, out)?;
                write!(out, " {op} ")?;
                self.operand(r, out)
            }
            Next(f) | Eventually(f) | Always(f) => {
                let op = match self.formula {
                    Next(_) => "X",
                    Eventually(_) => "F",
                    _ => "G",
                };
                write!(out, "{op} ")?;
                self.operand(f, out)
            }
            // Weak next has no dedicated token; `!X !f` parses back to it.
            WeakNext(f) => {
                write!(out, "!X ")?;
                let neg = f.negate();
                let inner = FormulaDisplay {
                    formula: &neg,
                    alphabet: self.alphabet,
                };
                write!(out, "({inner})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown atom `{name}` at byte {pos}")]
    UnknownAtom { name: String, pos: usize },
    #[error("formula is not syntactically co-safe; offending subformulas: {}", .violations.join(", "))]
    NotCoSafe { violations: Vec<String> },
    #[error("alphabet must contain at least one observation")]
    EmptyAlphabet,
    #[error("duplicate observation `{0}`")]
    DuplicateObservation(String),
    #[error("invalid observation name `{0}`")]
    InvalidObservationName(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Not,
    And,
    Or,
    Next,
    Eventually,
    Always,
    Until,
    Release,
    True,
    False,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, FormulaError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '!' => Some(Tok::Not),
            '&' => Some(Tok::And),
            '|' => Some(Tok::Or),
            _ => None,
        };
        if let Some(t) = single {
            toks.push((t, i));
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            let tok = match word {
                "X" => Tok::Next,
                "F" => Tok::Eventually,
                "G" => Tok::Always,
                "U" => Tok::Until,
                "R" => Tok::Release,
                "true" => Tok::True,
                "false" => Tok::False,
                _ => Tok::Ident(word.to_string()),
            };
            toks.push((tok, start));
            continue;
        }
        return Err(FormulaError::Syntax {
            pos: i,
            message: format!("unexpected character `{c}`"),
        });
    }
    toks.push((Tok::End, text.len()));
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    alphabet: &'a Alphabet,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if t != Tok::End {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn or(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.until()?;
        while *self.peek() == Tok::And {
            self.bump();
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.unary()?;
        match self.peek() {
            Tok::Until => {
                self.bump();
                Ok(Formula::until(lhs, self.until()?))
            }
            Tok::Release => {
                self.bump();
                Ok(Formula::Release(Box::new(lhs), Box::new(self.until()?)))
            }
            _ => Ok(lhs),
        }
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(self.unary()?.negate())
            }
            Tok::Next => {
                self.bump();
                Ok(Formula::next(self.unary()?))
            }
            Tok::Eventually => {
                self.bump();
                Ok(Formula::eventually(self.unary()?))
            }
            Tok::Always => {
                self.bump();
                Ok(Formula::Always(Box::new(self.unary()?)))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, FormulaError> {
        let pos = self.pos();
        match self.bump() {
            Tok::LParen => {
                let inner = self.or()?;
                if *self.peek() != Tok::RParen {
                    return self.error("expected `)`");
                }
                self.bump();
                Ok(inner)
            }
            Tok::True => Ok(Formula::True),
            Tok::False => Ok(Formula::False),
            Tok::Ident(name) => match self.alphabet.lookup(&name) {
                Some(o) => Ok(Formula::Atom(o)),
                None => Err(FormulaError::UnknownAtom { name, pos }),
            },
            Tok::End => Err(FormulaError::Syntax {
                pos,
                message: "unexpected end of input".into(),
            }),
            other => Err(FormulaError::Syntax {
                pos,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }
}

/// Parses `text` into a negation normal form formula.
///
/// Precedence from loosest to tightest: `|`, `&`, `U`/`R` (right
/// associative), then the prefix operators `!`, `X`, `F`, `G`. Formulas
/// outside the co-safe fragment are rejected with the offending
/// subformulas listed.
pub fn parse_formula(text: &str, alphabet: &Alphabet) -> Result<Formula, FormulaError> {
    let f = parse_nnf(text, alphabet)?;
    match check_co_safe(&f) {
        CoSafeVerdict::Ok => Ok(f),
        CoSafeVerdict::Violations(v) => Err(FormulaError::NotCoSafe {
            violations: v
                .iter()
                .map(|g| g.display(alphabet).to_string())
                .collect(),
        }),
    }
}

/// Parses into negation normal form without the co-safety check.
pub fn parse_nnf(text: &str, alphabet: &Alphabet) -> Result<Formula, FormulaError> {
    if text.trim().is_empty() {
        return Err(FormulaError::Syntax {
            pos: 0,
            message: "empty formula".into(),
        });
    }
    let mut p = Parser {
        toks: tokenize(text)?,
        at: 0,
        alphabet,
    };
    let f = p.or()?;
    if *p.peek() != Tok::End {
        return p.error("trailing input");
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoSafeVerdict {
    Ok,
    /// Every node outside the fragment, outermost first.
    Violations(Vec<Formula>),
}

impl CoSafeVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, CoSafeVerdict::Ok)
    }
}

pub fn check_co_safe(f: &Formula) -> CoSafeVerdict {
    fn walk(f: &Formula, out: &mut Vec<Formula>) {
        if !f.is_co_safe_node() {
            out.push(f.clone());
        }
        for c in f.children() {
            walk(c, out);
        }
    }
    let mut out = Vec::new();
    walk(f, &mut out);
    if out.is_empty() {
        CoSafeVerdict::Ok
    } else {
        CoSafeVerdict::Violations(out)
    }
}

/// Finite-word satisfaction, evaluated by direct recursion over positions.
///
/// Positions run over `0..=w.len()`; the end position carries no letter,
/// so only `True` (and weak operators) hold there. Atoms, `Next`, `Until`
/// and `Eventually` all need a letter at the current position.
pub fn eval_word(f: &Formula, w: &[Obs]) -> bool {
    holds(f, w, 0)
}

fn holds(f: &Formula, w: &[Obs], k: usize) -> bool {
    use Formula::*;
    let n = w.len();
    match f {
        True => true,
        False => false,
        Atom(o) => k < n && w[k] == *o,
        NegAtom(o) => k < n && w[k] != *o,
        And(l, r) => holds(l, w, k) && holds(r, w, k),
        Or(l, r) => holds(l, w, k) || holds(r, w, k),
        Next(g) => k < n && holds(g, w, k + 1),
        WeakNext(g) => k >= n || holds(g, w, k + 1),
        Eventually(g) => (k..n).any(|j| holds(g, w, j)),
        Always(g) => (k..n).all(|j| holds(g, w, j)),
        Until(l, r) => (k..n).any(|j| holds(r, w, j) && (k..j).all(|i| holds(l, w, i))),
        Release(l, r) => (k..n).all(|j| holds(r, w, j) || (k..j).any(|i| holds(l, w, i))),
    }
}
