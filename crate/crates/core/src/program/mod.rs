//! Abstract syntax, parsing and validation of safe normal logic programs.
//!
//! A program is a list of rules `head :- l1, ..., ln.` where every body
//! literal is either an atom or a negated atom (`not p(X)`). Rules with an
//! empty body are facts and must be ground. Both `:-` and `<-` are accepted
//! as the rule arrow; `%` starts a comment that runs to the end of the line.

mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use parse::{parse_facts, parse_program};

/// Errors raised while parsing or validating programs and fact files.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(
        "predicate `{predicate}` used with arity {found} at line {line}, but it was declared with arity {expected}"
    )]
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
        line: usize,
    },
    #[error("{}", display_violations(.0))]
    Unsafe(Vec<SafetyViolation>),
    #[error("line {line}: fact `{atom}` is not ground")]
    NonGround { line: usize, atom: String },
    #[error("line {line}: expected a ground fact, found a rule")]
    NotAFact { line: usize },
}

fn display_violations(violations: &[SafetyViolation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

/// A rule that failed the safety check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyViolation {
    pub line: usize,
    pub rule: String,
    pub variables: Vec<String>,
}

impl fmt::Display for SafetyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: unsafe rule `{}`: variable(s) {} do not occur in a positive subgoal",
            self.line,
            self.rule,
            self.variables.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(name) => f.write_str(name),
            Term::Const(symbol) => write_constant(f, symbol),
        }
    }
}

/// True if `symbol` can be written without quotes.
pub(crate) fn is_bare_constant(symbol: &str) -> bool {
    let mut chars = symbol.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c.is_ascii_digit() => {}
        _ => return false,
    }
    symbol != "not" && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn write_constant(f: &mut impl fmt::Write, symbol: &str) -> fmt::Result {
    if is_bare_constant(symbol) {
        return f.write_str(symbol);
    }
    f.write_char('"')?;
    for c in symbol.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            _ => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    /// Variable names in first-occurrence order, without duplicates.
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        let mut seen = Vec::new();
        self.args.iter().filter_map(move |t| match t {
            Term::Var(v) if !seen.contains(&v) => {
                seen.push(v);
                Some(v.as_str())
            }
            _ => None,
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if self.args.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

impl Literal {
    pub fn positive(atom: Atom) -> Self {
        Literal { atom, negated: false }
    }

    pub fn negative(atom: Atom) -> Self {
        Literal { atom, negated: true }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        write!(f, "{}", self.atom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
}

/// Outcome of [`check_safety`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Safety {
    Ok,
    /// Variables (first-occurrence order) that are not bound by any positive subgoal.
    Violation(Vec<String>),
}

impl Rule {
    pub fn new(head: Atom, body: Vec<Literal>) -> Self {
        Rule { head, body }
    }

    pub fn fact(head: Atom) -> Self {
        Rule { head, body: vec![] }
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    pub fn is_definite(&self) -> bool {
        self.body.iter().all(|l| !l.negated)
    }

    pub fn positive(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter(|l| !l.negated).map(|l| &l.atom)
    }

    pub fn negative(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter(|l| l.negated).map(|l| &l.atom)
    }

    pub fn check_safety(&self) -> Safety {
        check_safety(self)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        for (i, lit) in self.body.iter().enumerate() {
            f.write_str(if i == 0 { " :- " } else { ", " })?;
            write!(f, "{lit}")?;
        }
        f.write_str(".")
    }
}

/// Every variable of the head and of the negative subgoals must also occur in
/// some positive subgoal. Facts are safe exactly when they are ground.
pub fn check_safety(rule: &Rule) -> Safety {
    let bound: BTreeSet<&str> = rule.positive().flat_map(Atom::variables).collect();
    let mut unbound: Vec<String> = Vec::new();
    for var in rule.head.variables().chain(rule.negative().flat_map(Atom::variables)) {
        if !bound.contains(var) && !unbound.iter().any(|u| u == var) {
            unbound.push(var.to_string());
        }
    }
    if unbound.is_empty() {
        Safety::Ok
    } else {
        Safety::Violation(unbound)
    }
}

/// A ground atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fact {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Fact {
    pub fn new<S: Into<String>>(predicate: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        Fact {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    /// Converts a ground atom; `None` if it contains a variable.
    pub fn from_atom(atom: &Atom) -> Option<Fact> {
        let args = atom
            .args
            .iter()
            .map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(_) => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Fact {
            predicate: atom.predicate.clone(),
            args,
        })
    }

    pub fn to_atom(&self) -> Atom {
        Atom::new(
            self.predicate.clone(),
            self.args.iter().cloned().map(Term::Const).collect(),
        )
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if self.args.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write_constant(f, a)?;
        }
        f.write_str(")")
    }
}

/// A validated normal logic program: every rule is safe and every predicate
/// is used with a single arity.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    rules: Vec<Rule>,
    signatures: BTreeMap<String, usize>,
}

impl Program {
    /// Validates arities and safety. All unsafe rules are reported together.
    pub fn new(rules: Vec<Rule>) -> Result<Program, ProgramError> {
        Self::validate(rules.into_iter().enumerate().map(|(i, r)| (i + 1, r)))
    }

    /// Like [`Program::new`] but with the source line of every rule, used for diagnostics.
    pub(crate) fn validate(rules: impl IntoIterator<Item = (usize, Rule)>) -> Result<Program, ProgramError> {
        let mut signatures = BTreeMap::new();
        let mut violations = Vec::new();
        let mut kept = Vec::new();
        for (line, rule) in rules {
            for atom in std::iter::once(&rule.head).chain(rule.body.iter().map(|l| &l.atom)) {
                record_arity(&mut signatures, &atom.predicate, atom.arity(), line)?;
            }
            if let Safety::Violation(variables) = check_safety(&rule) {
                violations.push(SafetyViolation {
                    line,
                    rule: rule.to_string(),
                    variables,
                });
            }
            kept.push(rule);
        }
        if !violations.is_empty() {
            return Err(ProgramError::Unsafe(violations));
        }
        Ok(Program {
            rules: kept,
            signatures,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Predicate name to arity, for every predicate mentioned by the program.
    pub fn signatures(&self) -> &BTreeMap<String, usize> {
        &self.signatures
    }

    pub fn arity(&self, predicate: &str) -> Option<usize> {
        self.signatures.get(predicate).copied()
    }

    /// Ground facts written directly in the program text.
    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.rules
            .iter()
            .filter(|r| r.is_fact())
            .filter_map(|r| Fact::from_atom(&r.head))
    }

    /// Rules with a non-empty body.
    pub fn proper_rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| !r.is_fact())
    }

    /// Predicates defined by at least one proper rule.
    pub fn idb_predicates(&self) -> BTreeSet<&str> {
        self.proper_rules().map(|r| r.head.predicate.as_str()).collect()
    }

    /// Predicates that only appear in bodies, plus predicates given as facts.
    pub fn edb_predicates(&self) -> BTreeSet<&str> {
        let idb = self.idb_predicates();
        let mut edb: BTreeSet<&str> = self
            .signatures
            .keys()
            .map(String::as_str)
            .filter(|p| !idb.contains(p))
            .collect();
        edb.extend(
            self.rules
                .iter()
                .filter(|r| r.is_fact())
                .map(|r| r.head.predicate.as_str()),
        );
        edb
    }

    pub fn is_definite(&self) -> bool {
        self.rules.iter().all(Rule::is_definite)
    }

    /// The subprogram made of the rules without negative subgoals. The
    /// signature map is kept so predicates of dropped rules stay known.
    pub fn definite_subprogram(&self) -> Program {
        Program {
            rules: self.rules.iter().filter(|r| r.is_definite()).cloned().collect(),
            signatures: self.signatures.clone(),
        }
    }

    /// Checks a fact against the program's signatures, registering unknown predicates.
    pub fn declare(&mut self, fact: &Fact) -> Result<(), ProgramError> {
        record_arity(&mut self.signatures, &fact.predicate, fact.arity(), 0)
    }
}

pub(crate) fn record_arity(
    signatures: &mut BTreeMap<String, usize>,
    predicate: &str,
    arity: usize,
    line: usize,
) -> Result<(), ProgramError> {
    match signatures.get(predicate) {
        Some(&expected) if expected != arity => Err(ProgramError::ArityMismatch {
            predicate: predicate.to_string(),
            expected,
            found: arity,
            line,
        }),
        Some(_) => Ok(()),
        None => {
            signatures.insert(predicate.to_string(), arity);
            Ok(())
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(text: &str) -> Rule {
        parse::parse_rules(text).unwrap().remove(0).1
    }

    #[test]
    fn win_rule_is_safe() {
        assert_eq!(check_safety(&rule("win(X) <- move(X,Y), not win(Y).")), Safety::Ok);
    }

    #[test]
    fn unsafe_negative_variables_are_reported_in_order() {
        let r = rule("q(X,Y) <- c(X,U), not d(W,U), not e(U,Y).");
        assert_eq!(
            check_safety(&r),
            Safety::Violation(vec!["Y".to_string(), "W".to_string()])
        );
    }

    #[test]
    fn propositional_fact_is_safe() {
        assert_eq!(check_safety(&rule("p.")), Safety::Ok);
        assert_eq!(check_safety(&rule("p :- not q.")), Safety::Ok);
    }

    #[test]
    fn non_ground_fact_is_unsafe() {
        assert_eq!(check_safety(&rule("p(X).")), Safety::Violation(vec!["X".to_string()]));
    }

    #[test]
    fn definite_subprogram_of_win_is_empty() {
        let p = parse_program("win(X) <- move(X,Y), not win(Y).").unwrap();
        let d = p.definite_subprogram();
        assert!(d.rules().is_empty());
        assert_eq!(p.rules().len(), 1);
    }

    #[test]
    fn definite_subprogram_of_tc_neg_keeps_tc_rules() {
        let p = parse_program(
            "tc(X,Y) <- par(X,Y).\n\
             tc(X,Y) <- par(X,Z), tc(Z,Y).\n\
             par(X,Y) <- b(X,Y), not q(X,Y).\n\
             par(X,Y) <- b(X,Y), b(Y,Z), not q(Y,Z).\n\
             q(X,Y) <- b(Z,X), b(X,Y), not q(Z,X).",
        )
        .unwrap();
        let d = p.definite_subprogram();
        assert_eq!(d.rules().len(), 2);
        assert!(d.rules().iter().all(|r| r.head.predicate == "tc"));
        assert_eq!(d.definite_subprogram(), d);
    }

    #[test]
    fn horn_program_is_its_own_definite_subprogram() {
        let p = parse_program("e(1,2).\npath(X,Y) :- e(X,Y).\npath(X,Y) :- e(X,Z), path(Z,Y).").unwrap();
        assert_eq!(p.definite_subprogram(), p);
    }

    #[test]
    fn edb_and_idb_may_overlap() {
        let p = parse_program("p(1).\np(X) :- q(X).").unwrap();
        assert!(p.edb_predicates().contains("p"));
        assert!(p.edb_predicates().contains("q"));
        assert!(p.idb_predicates().contains("p"));
    }

    #[test]
    fn quoted_constants_round_trip_through_display() {
        let f = Fact::new("name", ["Alice Smith", "x\"y", "ok"]);
        assert_eq!(f.to_string(), "name(\"Alice Smith\",\"x\\\"y\",ok)");
        let parsed = parse_facts(&format!("{f}.")).unwrap();
        assert_eq!(parsed.into_iter().next().unwrap(), f);
    }
}
