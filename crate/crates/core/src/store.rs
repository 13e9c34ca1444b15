//! Dictionary-encoded fact storage with set semantics.
//!
//! Constants are interned to dense [`Sym`] ids and predicates to [`PredId`]s
//! by a [`Catalog`]. A [`Database`] maps each predicate to a [`Relation`],
//! a duplicate-free set of fixed-width [`Tuple`]s that also supports indexed
//! access so that the MapReduce engine can cut it into input splits.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexSet;
use rustc_hash::{FxBuildHasher, FxHashMap};
use smallvec::SmallVec;

use crate::program::{Fact, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sym(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredId(pub u32);

impl fmt::Display for PredId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// An encoded ground argument list.
pub type Tuple = SmallVec<[Sym; 4]>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("predicate {predicate} has arity {expected}, got a tuple of length {found}")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
}

/// Bidirectional constant-symbol table. Ids are dense and never reassigned.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    names: Vec<String>,
    ids: FxHashMap<String, Sym>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, symbol: &str) -> Sym {
        if let Some(&id) = self.ids.get(symbol) {
            return id;
        }
        let id = Sym(u32::try_from(self.names.len()).expect("symbol table overflow"));
        self.names.push(symbol.to_string());
        self.ids.insert(symbol.to_string(), id);
        id
    }

    pub fn get(&self, symbol: &str) -> Option<Sym> {
        self.ids.get(symbol).copied()
    }

    pub fn resolve(&self, id: Sym) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Predicate signatures plus the constant dictionary for one solver run.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    symbols: SymbolTable,
    predicates: Vec<(String, usize)>,
    pred_ids: FxHashMap<String, PredId>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers every predicate and every constant that occurs in `program`.
    pub fn from_program(program: &Program) -> Result<Catalog, StoreError> {
        let mut catalog = Catalog::new();
        for (name, &arity) in program.signatures() {
            catalog.declare(name, arity)?;
        }
        for rule in program.rules() {
            for atom in std::iter::once(&rule.head).chain(rule.body.iter().map(|l| &l.atom)) {
                for term in &atom.args {
                    if let crate::program::Term::Const(c) = term {
                        catalog.symbols.intern(c);
                    }
                }
            }
        }
        Ok(catalog)
    }

    pub fn declare(&mut self, name: &str, arity: usize) -> Result<PredId, StoreError> {
        if let Some(&id) = self.pred_ids.get(name) {
            let expected = self.arity(id);
            if expected != arity {
                return Err(StoreError::ArityMismatch {
                    predicate: name.to_string(),
                    expected,
                    found: arity,
                });
            }
            return Ok(id);
        }
        let id = PredId(self.predicates.len() as u32);
        self.predicates.push((name.to_string(), arity));
        self.pred_ids.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn predicate(&self, name: &str) -> Option<PredId> {
        self.pred_ids.get(name).copied()
    }

    pub fn predicate_name(&self, id: PredId) -> &str {
        &self.predicates[id.0 as usize].0
    }

    pub fn arity(&self, id: PredId) -> usize {
        self.predicates[id.0 as usize].1
    }

    pub fn predicates(&self) -> impl Iterator<Item = (PredId, &str, usize)> {
        self.predicates
            .iter()
            .enumerate()
            .map(|(i, (n, a))| (PredId(i as u32), n.as_str(), *a))
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn intern(&mut self, symbol: &str) -> Sym {
        self.symbols.intern(symbol)
    }

    /// Encodes a fact, declaring its predicate and interning its constants.
    pub fn encode(&mut self, fact: &Fact) -> Result<(PredId, Tuple), StoreError> {
        let pred = self.declare(&fact.predicate, fact.arity())?;
        let tuple = fact.args.iter().map(|a| self.symbols.intern(a)).collect();
        Ok((pred, tuple))
    }

    /// Encodes a fact without modifying the catalog. `Ok(None)` means some
    /// constant has never been seen, so the fact cannot be stored anywhere.
    pub fn lookup(&self, fact: &Fact) -> Result<Option<(PredId, Tuple)>, StoreError> {
        let pred = self
            .predicate(&fact.predicate)
            .ok_or_else(|| StoreError::UnknownPredicate(fact.predicate.clone()))?;
        let expected = self.arity(pred);
        if expected != fact.arity() {
            return Err(StoreError::ArityMismatch {
                predicate: fact.predicate.clone(),
                expected,
                found: fact.arity(),
            });
        }
        Ok(fact
            .args
            .iter()
            .map(|a| self.symbols.get(a))
            .collect::<Option<Tuple>>()
            .map(|t| (pred, t)))
    }

    pub fn decode(&self, pred: PredId, tuple: &[Sym]) -> Fact {
        Fact {
            predicate: self.predicate_name(pred).to_string(),
            args: tuple.iter().map(|&s| self.symbols.resolve(s).to_string()).collect(),
        }
    }
}

/// The extension of one predicate: a duplicate-free set of tuples.
#[derive(Debug, Clone)]
pub struct Relation {
    arity: usize,
    tuples: IndexSet<Tuple, FxBuildHasher>,
}

impl Relation {
    pub fn new(arity: usize) -> Self {
        Relation {
            arity,
            tuples: IndexSet::default(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, tuple: &[Sym]) -> bool {
        self.tuples.contains(tuple)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tuple> {
        self.tuples.iter()
    }

    pub fn tuples(&self) -> &IndexSet<Tuple, FxBuildHasher> {
        &self.tuples
    }

    pub fn get(&self, index: usize) -> &Tuple {
        &self.tuples[index]
    }

    /// Tuples in ascending encoded order.
    pub fn sorted(&self) -> Vec<&Tuple> {
        let mut v: Vec<_> = self.tuples.iter().collect();
        v.sort_unstable();
        v
    }
}

impl PartialEq for Relation {
    fn eq(&self, other: &Self) -> bool {
        self.arity == other.arity && self.tuples == other.tuples
    }
}

impl Eq for Relation {}

/// Ground atoms grouped by predicate.
#[derive(Debug, Clone, Default)]
pub struct Database {
    relations: BTreeMap<PredId, Relation>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tuple; returns `true` if it was not present before.
    pub fn insert(&mut self, pred: PredId, tuple: Tuple) -> Result<bool, StoreError> {
        let rel = self.relations.entry(pred).or_insert_with(|| Relation::new(tuple.len()));
        if rel.arity != tuple.len() {
            return Err(StoreError::ArityMismatch {
                predicate: pred.to_string(),
                expected: rel.arity,
                found: tuple.len(),
            });
        }
        Ok(rel.tuples.insert(tuple))
    }

    pub fn insert_fact(&mut self, catalog: &mut Catalog, fact: &Fact) -> Result<bool, StoreError> {
        let (pred, tuple) = catalog.encode(fact)?;
        self.insert(pred, tuple)
    }

    pub fn contains(&self, pred: PredId, tuple: &[Sym]) -> bool {
        self.relations.get(&pred).is_some_and(|r| r.contains(tuple))
    }

    pub fn relation(&self, pred: PredId) -> Option<&Relation> {
        self.relations.get(&pred)
    }

    pub fn relations(&self) -> impl Iterator<Item = (PredId, &Relation)> {
        self.relations.iter().map(|(&p, r)| (p, r))
    }

    /// Number of predicates with at least one stored tuple.
    pub fn predicate_count(&self) -> usize {
        self.relations.values().filter(|r| !r.is_empty()).count()
    }

    /// Total number of stored facts.
    pub fn count(&self) -> usize {
        self.relations.values().map(Relation::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (PredId, &Tuple)> {
        self.relations.iter().flat_map(|(&p, r)| r.iter().map(move |t| (p, t)))
    }

    /// Adds every fact of `other` to `self`; returns how many were new.
    pub fn extend_from(&mut self, other: &Database) -> Result<usize, StoreError> {
        let mut added = 0;
        for (pred, rel) in &other.relations {
            let mine = self.relations.entry(*pred).or_insert_with(|| Relation::new(rel.arity));
            check_arity(*pred, mine, rel)?;
            let before = mine.len();
            mine.tuples.extend(rel.tuples.iter().cloned());
            added += mine.len() - before;
        }
        Ok(added)
    }

    pub fn union(a: &Database, b: &Database) -> Result<Database, StoreError> {
        let mut out = a.clone();
        out.extend_from(b)?;
        Ok(out)
    }

    pub fn difference(a: &Database, b: &Database) -> Result<Database, StoreError> {
        let mut out = Database::new();
        for (pred, rel) in &a.relations {
            let mut kept = Relation::new(rel.arity);
            match b.relations.get(pred) {
                Some(other) => {
                    check_arity(*pred, rel, other)?;
                    kept.tuples
                        .extend(rel.tuples.iter().filter(|t| !other.contains(t)).cloned());
                }
                None => kept.tuples.extend(rel.tuples.iter().cloned()),
            }
            if !kept.is_empty() {
                out.relations.insert(*pred, kept);
            }
        }
        Ok(out)
    }

    pub fn is_subset(&self, other: &Database) -> bool {
        self.iter().all(|(p, t)| other.contains(p, t))
    }

    /// All facts decoded and sorted by predicate name, then arguments.
    pub fn to_facts(&self, catalog: &Catalog) -> Vec<Fact> {
        let mut facts: Vec<Fact> = self.iter().map(|(p, t)| catalog.decode(p, t)).collect();
        facts.sort_unstable();
        facts
    }

    /// One `atom.` per line, sorted lexicographically by the rendered atom.
    pub fn render(&self, catalog: &Catalog) -> String {
        let mut lines: Vec<String> = self.iter().map(|(p, t)| format!("{}.", catalog.decode(p, t))).collect();
        lines.sort_unstable();
        let mut out = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}

fn check_arity(pred: PredId, a: &Relation, b: &Relation) -> Result<(), StoreError> {
    if a.arity != b.arity {
        return Err(StoreError::ArityMismatch {
            predicate: pred.to_string(),
            expected: a.arity,
            found: b.arity,
        });
    }
    Ok(())
}

impl PartialEq for Database {
    fn eq(&self, other: &Self) -> bool {
        self.count() == other.count() && self.is_subset(other)
    }
}

impl Eq for Database {}

/// A read-only union of disjoint databases, e.g. `K ∪ (U − K)`, used without
/// materializing a combined copy.
#[derive(Debug, Clone, Default)]
pub struct View<'a> {
    layers: SmallVec<[&'a Database; 4]>,
}

impl<'a> View<'a> {
    pub fn empty() -> Self {
        View::default()
    }

    pub fn of(layers: &[&'a Database]) -> Self {
        View {
            layers: layers.iter().copied().collect(),
        }
    }

    pub fn with(mut self, layer: &'a Database) -> Self {
        self.layers.push(layer);
        self
    }

    /// A copy of this view with one more layer that may live shorter.
    pub fn and<'b>(&self, layer: &'b Database) -> View<'b>
    where
        'a: 'b,
    {
        let mut layers: SmallVec<[&'b Database; 4]> = self.layers.iter().map(|&db| db as &'b Database).collect();
        layers.push(layer);
        View { layers }
    }

    pub fn layers(&self) -> &[&'a Database] {
        &self.layers
    }

    /// Every non-empty stored relation for `pred`, one per layer.
    pub fn relations(&self, pred: PredId) -> impl Iterator<Item = &'a Relation> + '_ {
        self.layers
            .iter()
            .filter_map(move |db| db.relation(pred))
            .filter(|r| !r.is_empty())
    }

    pub fn contains(&self, pred: PredId, tuple: &[Sym]) -> bool {
        self.layers.iter().any(|db| db.contains(pred, tuple))
    }

    /// Sum of layer sizes; equals the size of the union when layers are disjoint.
    pub fn count(&self) -> usize {
        self.layers.iter().map(|db| db.count()).sum()
    }

    pub fn materialize(&self) -> Result<Database, StoreError> {
        let mut out = Database::new();
        for db in &self.layers {
            out.extend_from(db)?;
        }
        Ok(out)
    }
}
