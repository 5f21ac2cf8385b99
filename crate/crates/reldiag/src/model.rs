//! Values, comparison operators, schemas, database instances, and
//! deterministic enumeration of small instances.
//!
//! All orderings in this module are total and deterministic so that every
//! downstream consumer (the equivalence oracle, counterexample reporting,
//! pretty printers) is reproducible run over run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// A constant value. Integers and strings never compare with each other;
/// attempting to do so is a type fault, never a silent `false`.
///
/// The derived `Ord` (integers before strings) is used only for
/// deterministic container ordering, not for query semantics.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        }
    }
}

/// A comparison operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CompOp {
    Lt,
    Leq,
    Eq,
    Geq,
    Gt,
    Neq,
}

impl CompOp {
    /// The operator for the same predicate with the operands swapped:
    /// `a op b` iff `b op.flip() a`.
    pub fn flip(self) -> CompOp {
        match self {
            CompOp::Lt => CompOp::Gt,
            CompOp::Leq => CompOp::Geq,
            CompOp::Eq => CompOp::Eq,
            CompOp::Geq => CompOp::Leq,
            CompOp::Gt => CompOp::Lt,
            CompOp::Neq => CompOp::Neq,
        }
    }

    /// The negated operator: `a op b` iff not `a op.complement() b`.
    pub fn complement(self) -> CompOp {
        match self {
            CompOp::Lt => CompOp::Geq,
            CompOp::Leq => CompOp::Gt,
            CompOp::Eq => CompOp::Neq,
            CompOp::Geq => CompOp::Lt,
            CompOp::Gt => CompOp::Leq,
            CompOp::Neq => CompOp::Eq,
        }
    }

    /// True for operators whose meaning changes when operands swap.
    pub fn is_asymmetric(self) -> bool {
        !matches!(self, CompOp::Eq | CompOp::Neq)
    }

    /// The source-text symbol (`!=` is printed for inequality; the parser
    /// additionally accepts `<>`).
    pub fn symbol(self) -> &'static str {
        match self {
            CompOp::Lt => "<",
            CompOp::Leq => "<=",
            CompOp::Eq => "=",
            CompOp::Geq => ">=",
            CompOp::Gt => ">",
            CompOp::Neq => "!=",
        }
    }

    /// Parse a symbol. Accepts `!=` and `<>` for inequality.
    pub fn from_symbol(s: &str) -> Option<CompOp> {
        Some(match s {
            "<" => CompOp::Lt,
            "<=" => CompOp::Leq,
            "=" => CompOp::Eq,
            ">=" => CompOp::Geq,
            ">" => CompOp::Gt,
            "!=" | "<>" => CompOp::Neq,
            _ => return None,
        })
    }
}

impl fmt::Display for CompOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Compare two values under binary logic. Comparing an integer with a
/// string is a type fault.
pub fn compare(left: &Value, op: CompOp, right: &Value) -> Result<bool> {
    let ord = match (left, right) {
        (Value::Int(a), Value::Int(b)) => a.cmp(b),
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        _ => {
            return Err(Error::TypeFault {
                left: left.clone(),
                right: right.clone(),
            })
        }
    };
    Ok(match op {
        CompOp::Lt => ord.is_lt(),
        CompOp::Leq => ord.is_le(),
        CompOp::Eq => ord.is_eq(),
        CompOp::Geq => ord.is_ge(),
        CompOp::Gt => ord.is_gt(),
        CompOp::Neq => ord.is_ne(),
    })
}

/// A database schema: an ordered map from relation name to attribute
/// names. Relation order is declaration order and is significant for
/// every deterministic enumeration in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    rels: IndexMap<String, Vec<String>>,
}

impl Schema {
    pub fn new() -> Schema {
        Schema::default()
    }

    /// Add a relation. Attribute names must be distinct.
    pub fn add_relation(&mut self, name: &str, attrs: &[&str]) -> Result<()> {
        self.add_relation_owned(name.to_string(), attrs.iter().map(|a| a.to_string()).collect())
    }

    pub fn add_relation_owned(&mut self, name: String, attrs: Vec<String>) -> Result<()> {
        if self.rels.contains_key(&name) {
            return Err(Error::Scope {
                detail: format!("relation `{name}` declared twice"),
            });
        }
        let mut seen = BTreeSet::new();
        for a in &attrs {
            if !seen.insert(a.clone()) {
                return Err(Error::Scope {
                    detail: format!("relation `{name}` declares attribute `{a}` twice"),
                });
            }
        }
        self.rels.insert(name, attrs);
        Ok(())
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.rels.iter().map(|(n, a)| (n.as_str(), a.as_slice()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.rels.contains_key(name)
    }

    pub fn attrs(&self, name: &str) -> Result<&[String]> {
        self.rels
            .get(name)
            .map(|a| a.as_slice())
            .ok_or_else(|| Error::UnknownRelation {
                name: name.to_string(),
            })
    }

    pub fn arity(&self, name: &str) -> Result<usize> {
        Ok(self.attrs(name)?.len())
    }

    /// Index of `attr` within `relation`.
    pub fn attr_index(&self, relation: &str, attr: &str) -> Result<usize> {
        self.attrs(relation)?
            .iter()
            .position(|a| a == attr)
            .ok_or_else(|| Error::UnknownAttribute {
                relation: relation.to_string(),
                attr: attr.to_string(),
            })
    }

    pub fn len(&self) -> usize {
        self.rels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rels.is_empty()
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, attrs) in &self.rels {
            writeln!(f, "{}({})", name, attrs.join(", "))?;
        }
        Ok(())
    }
}

/// A tuple of constant values, positional with respect to the schema of
/// its relation.
pub type Tuple = Vec<Value>;

/// A database instance under set semantics: every relation holds a set of
/// tuples. Relations are keyed by name; tuples are kept sorted so that
/// printing and iteration are deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Database {
    rels: BTreeMap<String, BTreeSet<Tuple>>,
}

impl Database {
    /// An instance with every relation of `schema` empty.
    pub fn empty(schema: &Schema) -> Database {
        let mut rels = BTreeMap::new();
        for (name, _) in schema.relations() {
            rels.insert(name.to_string(), BTreeSet::new());
        }
        Database { rels }
    }

    /// Insert a tuple, validating the relation name and arity against
    /// `schema`.
    pub fn insert(&mut self, schema: &Schema, relation: &str, tuple: Tuple) -> Result<()> {
        let expected = schema.arity(relation)?;
        if tuple.len() != expected {
            return Err(Error::Arity {
                relation: relation.to_string(),
                expected,
                got: tuple.len(),
            });
        }
        self.rels.entry(relation.to_string()).or_default().insert(tuple);
        Ok(())
    }

    /// Insert without schema validation. Used where the caller has already
    /// established the invariant (e.g. the instance enumerator).
    pub fn insert_unchecked(&mut self, relation: &str, tuple: Tuple) {
        self.rels.entry(relation.to_string()).or_default().insert(tuple);
    }

    /// Tuples of `relation`; the empty set if the relation is absent.
    pub fn tuples(&self, relation: &str) -> impl Iterator<Item = &Tuple> {
        static EMPTY: BTreeSet<Tuple> = BTreeSet::new();
        self.rels.get(relation).unwrap_or(&EMPTY).iter()
    }

    pub fn contains(&self, relation: &str, tuple: &Tuple) -> bool {
        self.rels.get(relation).is_some_and(|t| t.contains(tuple))
    }

    pub fn set_relation(&mut self, relation: &str, tuples: BTreeSet<Tuple>) {
        self.rels.insert(relation.to_string(), tuples);
    }

    pub fn relation(&self, relation: &str) -> Option<&BTreeSet<Tuple>> {
        self.rels.get(relation)
    }

    /// Render in the instance text format: one `R(v, ...)` line per tuple,
    /// relations in name order, tuples in value order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, tuples) in &self.rels {
            for t in tuples {
                let vals: Vec<String> = t.iter().map(render_value_db).collect();
                out.push_str(&format!("{}({})\n", name, vals.join(", ")));
            }
        }
        out
    }
}

fn render_value_db(v: &Value) -> String {
    match v {
        Value::Int(n) => n.to_string(),
        Value::Str(s) => format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
    }
}

impl fmt::Display for Database {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// A named query result: attribute names plus a set of tuples. Attribute
/// names matter for printing; result comparison across languages is
/// positional on the tuple sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub attrs: Vec<String>,
    pub tuples: BTreeSet<Tuple>,
}

impl Relation {
    pub fn new(attrs: Vec<String>) -> Relation {
        Relation {
            attrs,
            tuples: BTreeSet::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.attrs.len()
    }
}

/// Default ceiling on the number of instances an enumeration may produce.
pub const DEFAULT_INSTANCE_CEILING: u128 = 10_000_000;

/// Deterministic enumeration of all database instances over `schema`
/// where every attribute of every relation draws values from `domain`
/// and every relation holds at most `max_rows` tuples.
///
/// Enumeration order: the per-relation subsets advance like an odometer
/// with the last relation of the schema varying fastest; within one
/// relation, candidate tuples are ordered lexicographically over the
/// (sorted) domain and subsets follow binary-counter order over that
/// tuple list. The first instance is always the all-empty database.
///
/// Fails with a capacity fault if the total count exceeds `ceiling`.
pub fn enumerate_databases(
    schema: &Schema,
    domain: &[Value],
    max_rows: usize,
    ceiling: u128,
) -> Result<DatabaseIter> {
    let mut sorted: Vec<Value> = domain.to_vec();
    sorted.sort();
    sorted.dedup();
    let domains: Vec<Vec<Vec<Value>>> = schema
        .relations()
        .map(|(_, attrs)| attrs.iter().map(|_| sorted.clone()).collect())
        .collect();
    enumerate_databases_typed(schema, &domains, max_rows, ceiling)
}

/// As [`enumerate_databases`], but with an explicit domain per attribute
/// position of every relation (`domains[rel_index][attr_index]`), in
/// schema order. This is the entry point used by the equivalence oracle
/// when attributes carry distinct inferred types.
pub fn enumerate_databases_typed(
    schema: &Schema,
    domains: &[Vec<Vec<Value>>],
    max_rows: usize,
    ceiling: u128,
) -> Result<DatabaseIter> {
    assert_eq!(domains.len(), schema.len(), "one domain list per relation");
    let mut relations = Vec::new();
    let mut total: u128 = 1;
    for ((name, attrs), attr_domains) in schema.relations().zip(domains) {
        assert_eq!(attr_domains.len(), attrs.len(), "one domain per attribute");
        let universe = tuple_universe(attr_domains);
        let count = subset_count(universe.len(), max_rows);
        total = total.checked_mul(count).unwrap_or(u128::MAX);
        relations.push(RelationUniverse {
            name: name.to_string(),
            universe,
        });
    }
    if total > ceiling {
        return Err(Error::Capacity {
            needed: total,
            ceiling,
        });
    }
    Ok(DatabaseIter {
        relations,
        max_rows,
        masks: None,
        total,
    })
}

/// Number of subsets of an `n`-element set with at most `max_rows`
/// elements: sum of binomial coefficients, saturating at `u128::MAX`.
pub fn subset_count(n: usize, max_rows: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for i in 0..=max_rows.min(n) {
        total = total.saturating_add(binom);
        // next: C(n, i+1) = C(n, i) * (n - i) / (i + 1)
        binom = match binom.checked_mul((n - i) as u128) {
            Some(b) => b / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    total
}

fn tuple_universe(attr_domains: &[Vec<Value>]) -> Vec<Tuple> {
    let mut tuples = vec![Vec::new()];
    for dom in attr_domains {
        let mut next = Vec::with_capacity(tuples.len() * dom.len());
        for t in &tuples {
            for v in dom {
                let mut t2 = t.clone();
                t2.push(v.clone());
                next.push(t2);
            }
        }
        tuples = next;
    }
    tuples
}

#[derive(Debug)]
struct RelationUniverse {
    name: String,
    universe: Vec<Tuple>,
}

/// A subset selection over a tuple universe, stored as a bit vector that
/// advances in binary-counter order, skipping selections with more than
/// `max_rows` tuples set.
#[derive(Debug)]
struct SubsetMask {
    words: Vec<u64>,
    popcount: usize,
}

impl SubsetMask {
    fn empty(n_bits: usize) -> SubsetMask {
        SubsetMask {
            words: vec![0; n_bits.div_ceil(64).max(1)],
            popcount: 0,
        }
    }

    fn bits(&self) -> impl Iterator<Item = usize> + '_ {
        self.words
            .iter()
            .enumerate()
            .flat_map(|(w, bits)| (0..64).filter(move |b| bits & (1u64 << b) != 0).map(move |b| w * 64 + b))
    }

    /// Plain binary increment; returns false on wrap-around past the
    /// `n_bits`-bit space.
    fn increment(&mut self, n_bits: usize) -> bool {
        for w in &mut self.words {
            let (next, carry) = w.overflowing_add(1);
            *w = next;
            if !carry {
                break;
            }
        }
        self.recount();
        // Overflow out of the allotted bits means the counter wrapped.
        self.bits().all(|b| b < n_bits) && !(self.popcount == 0)
    }

    /// Skip forward past every mask whose lowest run of ones cannot lead
    /// to a popcount within bounds: `x := (x | (x - 1)) + 1` clears the
    /// lowest run of ones and carries into the next bit.
    fn skip_lowest_run(&mut self, n_bits: usize) -> bool {
        // x | (x - 1): set all bits below (and including) the lowest run.
        let mut borrowed = self.words.clone();
        let mut borrow = true;
        for w in &mut borrowed {
            if borrow {
                let (next, under) = w.overflowing_sub(1);
                *w = next;
                borrow = under;
            }
        }
        for (w, m) in self.words.iter_mut().zip(&borrowed) {
            *w |= *m;
        }
        let mut carry = true;
        for w in &mut self.words {
            if carry {
                let (next, over) = w.overflowing_add(1);
                *w = next;
                carry = over;
            }
        }
        self.recount();
        self.bits().all(|b| b < n_bits) && self.popcount != 0
    }

    fn recount(&mut self) {
        self.popcount = self.words.iter().map(|w| w.count_ones() as usize).sum();
    }

    /// Advance to the next mask with popcount within `max_rows`; returns
    /// false when the space is exhausted.
    fn advance(&mut self, n_bits: usize, max_rows: usize) -> bool {
        if !self.increment(n_bits) {
            return false;
        }
        while self.popcount > max_rows {
            if !self.skip_lowest_run(n_bits) {
                return false;
            }
        }
        true
    }
}

/// Iterator over database instances; see [`enumerate_databases`].
#[derive(Debug)]
pub struct DatabaseIter {
    relations: Vec<RelationUniverse>,
    max_rows: usize,
    /// One subset mask per relation; `None` before the first instance.
    masks: Option<Vec<SubsetMask>>,
    total: u128,
}

impl DatabaseIter {
    /// Exact number of instances this iterator yields in total.
    pub fn total(&self) -> u128 {
        self.total
    }

    fn current(&self) -> Database {
        let mut db = Database::default();
        let masks = self.masks.as_ref().expect("current after first advance");
        for (rel, mask) in self.relations.iter().zip(masks) {
            let tuples: BTreeSet<Tuple> = mask.bits().map(|b| rel.universe[b].clone()).collect();
            db.set_relation(&rel.name, tuples);
        }
        db
    }
}

impl Iterator for DatabaseIter {
    type Item = Database;

    fn next(&mut self) -> Option<Database> {
        match &mut self.masks {
            None => {
                self.masks = Some(
                    self.relations
                        .iter()
                        .map(|r| SubsetMask::empty(r.universe.len()))
                        .collect(),
                );
                Some(self.current())
            }
            Some(masks) => {
                // Odometer: the last relation varies fastest.
                for i in (0..self.relations.len()).rev() {
                    let n_bits = self.relations[i].universe.len();
                    if masks[i].advance(n_bits, self.max_rows) {
                        return Some(self.current());
                    }
                    masks[i] = SubsetMask::empty(n_bits);
                }
                None
            }
        }
    }
}
