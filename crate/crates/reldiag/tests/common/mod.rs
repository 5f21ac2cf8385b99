//! Shared helpers for the integration tests.
//!
//! The centerpiece is [`naive_eval_trc`], a deliberately simple
//! brute-force TRC evaluator written independently of the library's
//! evaluators and used as an oracle against them: queries are decided by
//! testing every candidate output tuple over the active domain as its own
//! sentence, and sentences by exhaustively trying every assignment of
//! scope variables to database tuples.

#![allow(dead_code)] // each integration-test crate uses a subset

pub mod gen;

use std::collections::BTreeSet;

use reldiag::ast::trc::{AttrRef, TrcQuery, TrcScope};
use reldiag::model::{compare, Database, Schema, Tuple, Value};
use reldiag::Result;

/// Result of the naive evaluator: rows for queries, a truth value for
/// sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NaiveResult {
    Rows(BTreeSet<Tuple>),
    Bool(bool),
}

impl NaiveResult {
    pub fn rows(self) -> BTreeSet<Tuple> {
        match self {
            NaiveResult::Rows(r) => r,
            NaiveResult::Bool(b) => panic!("expected rows, got sentence verdict {b}"),
        }
    }

    pub fn truth(self) -> bool {
        match self {
            NaiveResult::Bool(b) => b,
            NaiveResult::Rows(r) => panic!("expected a sentence verdict, got {} rows", r.len()),
        }
    }
}

/// Brute-force evaluation of a canonical TRC query or sentence.
pub fn naive_eval_trc(q: &TrcQuery, schema: &Schema, db: &Database) -> Result<NaiveResult> {
    match &q.output {
        None => Ok(NaiveResult::Bool(sat(q, &q.root, schema, db, &mut Vec::new(), None)?)),
        Some(out) => {
            let domain = active_domain(q, db);
            let mut rows = BTreeSet::new();
            let mut candidate: Tuple = vec![Value::Int(0); out.attrs.len()];
            fill_candidates(q, schema, db, &domain, &mut candidate, 0, &mut rows)?;
            Ok(NaiveResult::Rows(rows))
        }
    }
}

/// Every value occurring in the database plus every constant of the
/// query. Safe TRC binds each output attribute to a stored attribute, so
/// candidates outside this set can never qualify.
pub fn active_domain(q: &TrcQuery, db: &Database) -> Vec<Value> {
    let mut dom = BTreeSet::new();
    let mut rels = Vec::new();
    q.visit_scopes(&mut |s, _| {
        for v in &s.vars {
            rels.push(v.relation.clone());
        }
        for p in &s.preds {
            if let reldiag::ast::trc::TrcPred::Sel { value, .. } = p {
                dom.insert(value.clone());
            }
        }
    });
    rels.sort();
    rels.dedup();
    for r in rels {
        for t in db.tuples(&r) {
            for v in t {
                dom.insert(v.clone());
            }
        }
    }
    dom.into_iter().collect()
}

fn fill_candidates(
    q: &TrcQuery,
    schema: &Schema,
    db: &Database,
    domain: &[Value],
    candidate: &mut Tuple,
    pos: usize,
    rows: &mut BTreeSet<Tuple>,
) -> Result<()> {
    if pos == candidate.len() {
        if sat(q, &q.root, schema, db, &mut Vec::new(), Some(candidate))? {
            rows.insert(candidate.clone());
        }
        return Ok(());
    }
    for v in domain {
        candidate[pos] = v.clone();
        fill_candidates(q, schema, db, domain, candidate, pos + 1, rows)?;
    }
    Ok(())
}

type Env = Vec<(String, String, Tuple)>; // (variable, relation, tuple)

/// Does some assignment of `scope`'s variables satisfy its body under
/// `env`?
fn sat(
    q: &TrcQuery,
    scope: &TrcScope,
    schema: &Schema,
    db: &Database,
    env: &mut Env,
    out: Option<&Tuple>,
) -> Result<bool> {
    assign(q, scope, 0, schema, db, env, out)
}

fn assign(
    q: &TrcQuery,
    scope: &TrcScope,
    i: usize,
    schema: &Schema,
    db: &Database,
    env: &mut Env,
    out: Option<&Tuple>,
) -> Result<bool> {
    if i == scope.vars.len() {
        for p in &scope.preds {
            let (l, op, r) = match p {
                reldiag::ast::trc::TrcPred::Join { left, op, right } => {
                    (resolve(q, left, schema, env, out)?, *op, resolve(q, right, schema, env, out)?)
                }
                reldiag::ast::trc::TrcPred::Sel { left, op, value } => {
                    (resolve(q, left, schema, env, out)?, *op, value.clone())
                }
            };
            // Candidate enumeration ranges over the whole active domain,
            // so int/string mismatches are expected here; they mean "this
            // candidate can never satisfy the predicate", not a fault.
            if !compare(&l, op, &r).unwrap_or(false) {
                return Ok(false);
            }
        }
        for n in &scope.negations {
            if sat(q, n, schema, db, env, out)? {
                return Ok(false);
            }
        }
        return Ok(true);
    }
    let v = &scope.vars[i];
    for t in db.tuples(&v.relation) {
        env.push((v.name.clone(), v.relation.clone(), t.clone()));
        let ok = assign(q, scope, i + 1, schema, db, env, out)?;
        env.pop();
        if ok {
            return Ok(true);
        }
    }
    Ok(false)
}

fn resolve(
    q: &TrcQuery,
    r: &AttrRef,
    schema: &Schema,
    env: &Env,
    out: Option<&Tuple>,
) -> Result<Value> {
    if q.is_output_name(&r.var) {
        let spec = q.output.as_ref().expect("output reference in a sentence");
        let idx = spec
            .attrs
            .iter()
            .position(|a| *a == r.attr)
            .expect("validated output attribute");
        return Ok(out.expect("candidate tuple")[idx].clone());
    }
    let (_, relation, tuple) = env
        .iter()
        .rev()
        .find(|(name, _, _)| *name == r.var)
        .expect("validated variable reference");
    let idx = schema.attr_index(relation, &r.attr)?;
    Ok(tuple[idx].clone())
}

// ---------------------------------------------------------------------------
// Fixture schemas and databases
// ---------------------------------------------------------------------------

/// `R(A, B); S(B); T(A)` — the workhorse schema of the test suite.
pub fn schema_rst() -> Schema {
    let mut s = Schema::new();
    s.add_relation("R", &["A", "B"]).unwrap();
    s.add_relation("S", &["B"]).unwrap();
    s.add_relation("T", &["A"]).unwrap();
    s
}

/// `Sailor(sid); Boat(bid, bname, color); Reserves(sid, bid)`.
pub fn schema_sailor() -> Schema {
    let mut s = Schema::new();
    s.add_relation("Sailor", &["sid"]).unwrap();
    s.add_relation("Boat", &["bid", "bname", "color"]).unwrap();
    s.add_relation("Reserves", &["sid", "bid"]).unwrap();
    s
}

/// Parse an instance text against `schema`.
pub fn db(schema: &Schema, text: &str) -> Database {
    reldiag::parse::parse_database(text, schema).unwrap()
}

/// Rows helper: turn `&[&[i64]]` into a tuple set.
pub fn int_rows(rows: &[&[i64]]) -> BTreeSet<Tuple> {
    rows.iter()
        .map(|r| r.iter().map(|n| Value::Int(*n)).collect())
        .collect()
}
