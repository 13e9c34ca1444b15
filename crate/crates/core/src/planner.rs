//! Compilation of rules into join / anti-join plans.
//!
//! A rule `h :- p1, ..., pm, not n1, ..., not nk` is evaluated as a
//! left-deep chain of binary joins over `p1..pm` producing the positive goal,
//! followed by one anti-join per negative subgoal and a projection onto the
//! head. The positive goal keeps the head variables plus the variables shared
//! with negative subgoals; because rules are safe, every anti-join key is
//! fully bound by the positive goal.

use std::fmt::{self, Write as _};

use crate::program::{Atom, Program, Rule, Safety, Term};
use crate::store::{Catalog, PredId, Sym, Tuple};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("rule `{rule}` is unsafe (unbound: {})", .variables.join(", "))]
    Unsafe { rule: String, variables: Vec<String> },
    #[error("rule `{rule}`: unknown predicate `{predicate}`")]
    UnknownPredicate { rule: String, predicate: String },
    #[error("rule `{rule}`: constant `{constant}` is not interned")]
    UnknownConstant { rule: String, constant: String },
}

/// Selection and projection applied to the stored tuples of one subgoal.
///
/// Constants become equality tests against a symbol, repeated variables
/// become column-equality tests, and the output is one column per distinct
/// variable in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    pub predicate: PredId,
    pub atom: Atom,
    pub constants: Vec<(usize, Sym)>,
    pub equalities: Vec<(usize, usize)>,
    /// Source column of each output variable.
    pub columns: Vec<usize>,
    pub variables: Vec<String>,
}

impl Access {
    fn compile(atom: &Atom, rule: &Rule, catalog: &Catalog) -> Result<Access, PlanError> {
        let predicate = catalog
            .predicate(&atom.predicate)
            .ok_or_else(|| PlanError::UnknownPredicate {
                rule: rule.to_string(),
                predicate: atom.predicate.clone(),
            })?;
        let mut access = Access {
            predicate,
            atom: atom.clone(),
            constants: Vec::new(),
            equalities: Vec::new(),
            columns: Vec::new(),
            variables: Vec::new(),
        };
        for (col, term) in atom.args.iter().enumerate() {
            match term {
                Term::Const(c) => {
                    let sym = lookup_constant(catalog, c, rule)?;
                    access.constants.push((col, sym));
                }
                Term::Var(v) => match access.variables.iter().position(|x| x == v) {
                    Some(i) => access.equalities.push((access.columns[i], col)),
                    None => {
                        access.variables.push(v.clone());
                        access.columns.push(col);
                    }
                },
            }
        }
        Ok(access)
    }

    /// True when the access passes stored tuples through unchanged.
    pub fn is_identity(&self) -> bool {
        self.constants.is_empty() && self.equalities.is_empty() && self.columns.iter().enumerate().all(|(i, &c)| i == c)
    }

    pub fn matches(&self, tuple: &[Sym]) -> bool {
        self.constants.iter().all(|&(c, s)| tuple[c] == s) && self.equalities.iter().all(|&(a, b)| tuple[a] == tuple[b])
    }

    /// Applies selection and projection; `None` if the tuple is filtered out.
    pub fn apply(&self, tuple: &[Sym]) -> Option<Tuple> {
        self.matches(tuple)
            .then(|| self.columns.iter().map(|&c| tuple[c]).collect())
    }
}

fn lookup_constant(catalog: &Catalog, c: &str, rule: &Rule) -> Result<Sym, PlanError> {
    catalog.symbols().get(c).ok_or_else(|| PlanError::UnknownConstant {
        rule: rule.to_string(),
        constant: c.to_string(),
    })
}

/// One binary join of the running intermediate result with a subgoal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinStep {
    pub left_schema: Vec<String>,
    pub right: Access,
    pub join_variables: Vec<String>,
    pub left_key: Vec<usize>,
    /// Key positions in the right subgoal's access output.
    pub right_key: Vec<usize>,
    pub output_schema: Vec<String>,
    pub output: Vec<Column>,
}

/// Where an output column of a join comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Left(usize),
    Right(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntiJoinStep {
    pub negative: Access,
    pub key_variables: Vec<String>,
    /// Positions of the key variables in the positive-goal schema.
    pub key: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeadArg {
    Column(usize),
    Const(Sym),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RulePlan {
    pub rule: Rule,
    /// Access to the first positive subgoal; `None` for rules without
    /// positive subgoals, whose positive goal is the single empty tuple.
    pub first: Option<Access>,
    pub joins: Vec<JoinStep>,
    pub positive_goal: Vec<String>,
    /// Projection of the first subgoal's access output onto the positive goal,
    /// used when there are no joins.
    pub first_projection: Vec<usize>,
    pub anti_joins: Vec<AntiJoinStep>,
    pub head: PredId,
    pub head_projection: Vec<HeadArg>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanOptions {
    /// Drop join columns that no later step needs.
    pub minimize_columns: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { minimize_columns: true }
    }
}

/// Orders `needed` by first occurrence in the body, so that a join keeps
/// the left columns in place and appends the new right ones.
fn canonical_order(rule: &Rule, needed: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for v in rule.body.iter().flat_map(|l| l.atom.variables()) {
        if needed.contains(&v) && !out.iter().any(|o| o == v) {
            out.push(v.to_string());
        }
    }
    out
}

fn position(schema: &[String], var: &str) -> usize {
    schema
        .iter()
        .position(|v| v == var)
        .expect("variable present in schema")
}

pub fn compile_rule(rule: &Rule, catalog: &Catalog) -> Result<RulePlan, PlanError> {
    compile_rule_with(rule, catalog, PlanOptions::default())
}

pub fn compile_rule_with(rule: &Rule, catalog: &Catalog, options: PlanOptions) -> Result<RulePlan, PlanError> {
    if let Safety::Violation(variables) = rule.check_safety() {
        return Err(PlanError::Unsafe {
            rule: rule.to_string(),
            variables,
        });
    }
    let positives: Vec<Access> = rule
        .positive()
        .map(|a| Access::compile(a, rule, catalog))
        .collect::<Result<_, _>>()?;
    let negatives: Vec<Access> = rule
        .negative()
        .map(|a| Access::compile(a, rule, catalog))
        .collect::<Result<_, _>>()?;
    let head = catalog
        .predicate(&rule.head.predicate)
        .ok_or_else(|| PlanError::UnknownPredicate {
            rule: rule.to_string(),
            predicate: rule.head.predicate.clone(),
        })?;

    let head_vars: Vec<&str> = rule.head.variables().collect();
    let neg_vars: Vec<&str> = rule.negative().flat_map(Atom::variables).collect();
    let mut goal_vars: Vec<&str> = head_vars.clone();
    goal_vars.extend(neg_vars.iter().copied());
    let all_vars: Vec<&str> = rule.positive().flat_map(Atom::variables).collect();
    let positive_goal = if options.minimize_columns {
        canonical_order(rule, &goal_vars)
    } else {
        canonical_order(rule, &all_vars)
    };

    let mut warnings = Vec::new();
    let mut joins = Vec::new();
    let mut first_projection = Vec::new();
    let first = positives.first().cloned();
    if let Some(first) = &first {
        let mut left_schema = first.variables.clone();
        for (i, right) in positives.iter().enumerate().skip(1) {
            let join_variables: Vec<String> = left_schema
                .iter()
                .filter(|v| right.variables.contains(v))
                .cloned()
                .collect();
            if join_variables.is_empty() {
                let msg = format!(
                    "rule `{rule}`: subgoal {} shares no variable with earlier subgoals; joining on the empty key (Cartesian product)",
                    right.atom
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
            let is_last = i + 1 == positives.len();
            let output_schema = if is_last {
                positive_goal.clone()
            } else {
                let mut needed: Vec<&str> = goal_vars.clone();
                needed.extend(
                    positives[i + 1..]
                        .iter()
                        .flat_map(|a| a.variables.iter().map(String::as_str)),
                );
                let available: Vec<&str> = left_schema
                    .iter()
                    .chain(right.variables.iter())
                    .map(String::as_str)
                    .filter(|v| !options.minimize_columns || needed.contains(v))
                    .collect();
                canonical_order(rule, &available)
            };
            let output = output_schema
                .iter()
                .map(|v| match left_schema.iter().position(|l| l == v) {
                    Some(p) => Column::Left(p),
                    None => Column::Right(position(&right.variables, v)),
                })
                .collect();
            joins.push(JoinStep {
                left_key: join_variables.iter().map(|v| position(&left_schema, v)).collect(),
                right_key: join_variables.iter().map(|v| position(&right.variables, v)).collect(),
                left_schema: left_schema.clone(),
                right: right.clone(),
                join_variables,
                output_schema: output_schema.clone(),
                output,
            });
            left_schema = output_schema;
        }
        if joins.is_empty() {
            first_projection = positive_goal.iter().map(|v| position(&first.variables, v)).collect();
        }
    }

    let anti_joins = negatives
        .into_iter()
        .map(|negative| {
            let key_variables = negative.variables.clone();
            let key = key_variables.iter().map(|v| position(&positive_goal, v)).collect();
            AntiJoinStep {
                negative,
                key_variables,
                key,
            }
        })
        .collect();

    let head_projection = rule
        .head
        .args
        .iter()
        .map(|t| match t {
            Term::Var(v) => Ok(HeadArg::Column(position(&positive_goal, v))),
            Term::Const(c) => lookup_constant(catalog, c, rule).map(HeadArg::Const),
        })
        .collect::<Result<_, _>>()?;

    Ok(RulePlan {
        rule: rule.clone(),
        first,
        joins,
        positive_goal,
        first_projection,
        anti_joins,
        head,
        head_projection,
        warnings,
    })
}

/// One plan per proper rule; facts are loaded directly as base tuples.
pub fn compile_program(program: &Program, catalog: &Catalog) -> Result<Vec<RulePlan>, PlanError> {
    program.proper_rules().map(|r| compile_rule(r, catalog)).collect()
}

impl RulePlan {
    pub fn positive_subgoals(&self) -> usize {
        usize::from(self.first.is_some()) + self.joins.len()
    }

    /// Number of MapReduce jobs one evaluation of this plan runs.
    pub fn job_count(&self) -> usize {
        let positive = match self.first {
            None => 0,
            Some(_) if self.joins.is_empty() => 1,
            Some(_) => 2 * self.joins.len(),
        };
        positive + self.anti_joins.len() + 1
    }

    /// Human-readable plan, one line per step.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        let vars = |v: &[String]| v.join(",");
        let _ = writeln!(out, "rule {}", self.rule);
        match &self.first {
            None => {
                let _ = writeln!(out, "  seed ()");
            }
            Some(first) => {
                let _ = writeln!(out, "  scan {} -> ({})", first.atom, vars(&first.variables));
            }
        }
        for j in &self.joins {
            let _ = writeln!(
                out,
                "  join {} on ({}) -> ({})",
                j.right.atom,
                vars(&j.join_variables),
                vars(&j.output_schema)
            );
            let _ = writeln!(out, "  dedup ({})", vars(&j.output_schema));
        }
        let _ = writeln!(out, "  positive goal ({})", vars(&self.positive_goal));
        for a in &self.anti_joins {
            let _ = writeln!(
                out,
                "  anti-join not {} on ({})",
                a.negative.atom,
                vars(&a.key_variables)
            );
        }
        let _ = writeln!(out, "  project {} + dedup", self.rule.head);
        for w in &self.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
        out
    }
}

impl fmt::Display for RulePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.explain())
    }
}
