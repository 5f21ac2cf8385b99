//! Evaluation of all four query languages over explicit database
//! instances, plus the bounded equivalence oracle built on exhaustive
//! enumeration of small instances.
//!
//! The evaluators use nested-loop strategies without indexes: instances
//! are desk-scale, and a direct transcription of the semantics is easier
//! to trust than a clever one. All results are sets. Comparing an integer
//! with a string is a type fault everywhere, never a silent `false`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ast::datalog::{self, Atom, DatalogProgram, Literal, Rule, Term};
use crate::ast::ra::{self, RaColumn, RaExpr, RaPred};
use crate::ast::sql::SqlQuery;
use crate::ast::trc::{self, AttrRef, TrcPred, TrcQuery, TrcScope, TrcVar};
use crate::ast::LangQuery;
use crate::error::{Error, Result};
use crate::model::{
    compare, enumerate_databases_typed, CompOp, Database, Relation, Schema, Tuple, Value,
    DEFAULT_INSTANCE_CEILING,
};
use crate::translate;

/// Result of evaluating a query (rows) or a sentence (a truth value).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalOutput {
    Rows(Relation),
    Bool(bool),
}

impl EvalOutput {
    /// The output relation.
    ///
    /// # Panics
    /// Panics if the result is a sentence verdict.
    pub fn rows(self) -> Relation {
        match self {
            EvalOutput::Rows(r) => r,
            EvalOutput::Bool(b) => panic!("expected rows, got the sentence verdict {b}"),
        }
    }

    /// The sentence verdict.
    ///
    /// # Panics
    /// Panics if the result is a relation.
    pub fn truth(self) -> bool {
        match self {
            EvalOutput::Bool(b) => b,
            EvalOutput::Rows(r) => panic!("expected a sentence verdict, got {} rows", r.tuples.len()),
        }
    }
}

// ---------------------------------------------------------------------------
// TRC
// ---------------------------------------------------------------------------

/// Evaluate a TRC query or sentence.
///
/// Queries are evaluated assignment-first: root-scope variables range
/// over the stored tuples of their relations, each child scope is
/// recursively tested for the *non-existence* of a satisfying assignment,
/// and for every surviving root assignment one output row is read off the
/// output bindings. Safe queries bind every output attribute at the root,
/// so no candidate-tuple search is needed.
pub fn eval_trc(q: &TrcQuery, schema: &Schema, db: &Database) -> Result<EvalOutput> {
    trc::validate(q, schema)?;
    let cx = TrcCx {
        q,
        schema,
        db,
        bindings: output_bindings(q),
    };
    let mut env = Vec::new();
    match &q.output {
        None => Ok(EvalOutput::Bool(cx.satisfiable(&q.root, &mut env)?)),
        Some(out) => {
            let mut rel = Relation::new(out.attrs.clone());
            cx.collect(&q.root, 0, &mut env, &mut rel)?;
            Ok(EvalOutput::Rows(rel))
        }
    }
}

/// For each output attribute, the root-variable attribute its value is
/// read from. Validation guarantees exactly one `Q.x = v.y` equality at
/// the root per output attribute.
fn output_bindings(q: &TrcQuery) -> Vec<AttrRef> {
    let Some(out) = &q.output else {
        return Vec::new();
    };
    out.attrs
        .iter()
        .map(|attr| {
            q.root
                .preds
                .iter()
                .find_map(|p| {
                    if let TrcPred::Join {
                        left,
                        op: CompOp::Eq,
                        right,
                    } = p
                    {
                        if left.var == out.name && left.attr == *attr {
                            return Some(right.clone());
                        }
                        if right.var == out.name && right.attr == *attr {
                            return Some(left.clone());
                        }
                    }
                    None
                })
                .expect("validated output binding")
        })
        .collect()
}

/// One quantified variable bound to a stored tuple.
struct Frame<'a> {
    var: &'a TrcVar,
    tuple: &'a Tuple,
}

type Env<'a> = Vec<Frame<'a>>;

struct TrcCx<'a> {
    q: &'a TrcQuery,
    schema: &'a Schema,
    db: &'a Database,
    bindings: Vec<AttrRef>,
}

impl<'a> TrcCx<'a> {
    fn resolve(&self, env: &Env<'a>, r: &AttrRef) -> Result<Value> {
        if self.q.is_output_name(&r.var) {
            let out = self.q.output.as_ref().expect("output reference implies an output spec");
            let idx = out
                .attrs
                .iter()
                .position(|a| *a == r.attr)
                .expect("validated output attribute");
            return self.resolve(env, &self.bindings[idx]);
        }
        let frame = env
            .iter()
            .rev()
            .find(|f| f.var.name == r.var)
            .expect("validated variable reference");
        let idx = self.schema.attr_index(&frame.var.relation, &r.attr)?;
        Ok(frame.tuple[idx].clone())
    }

    /// Predicates of `scope` under the current assignment, then
    /// non-existence for each child scope.
    fn body_holds(&self, scope: &'a TrcScope, env: &mut Env<'a>) -> Result<bool> {
        for p in &scope.preds {
            let ok = match p {
                TrcPred::Join { left, op, right } => {
                    compare(&self.resolve(env, left)?, *op, &self.resolve(env, right)?)?
                }
                TrcPred::Sel { left, op, value } => compare(&self.resolve(env, left)?, *op, value)?,
            };
            if !ok {
                return Ok(false);
            }
        }
        for n in &scope.negations {
            if self.satisfiable(n, env)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Does any assignment of `scope`'s variables, extending `env`,
    /// satisfy its body?
    fn satisfiable(&self, scope: &'a TrcScope, env: &mut Env<'a>) -> Result<bool> {
        self.assign(scope, 0, env)
    }

    fn assign(&self, scope: &'a TrcScope, i: usize, env: &mut Env<'a>) -> Result<bool> {
        if i == scope.vars.len() {
            return self.body_holds(scope, env);
        }
        let var = &scope.vars[i];
        for tuple in self.db.tuples(&var.relation) {
            env.push(Frame { var, tuple });
            let ok = self.assign(scope, i + 1, env)?;
            env.pop();
            if ok {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Enumerate root assignments and read one output row off the
    /// bindings for each satisfying one.
    fn collect(&self, root: &'a TrcScope, i: usize, env: &mut Env<'a>, rel: &mut Relation) -> Result<()> {
        if i == root.vars.len() {
            if self.body_holds(root, env)? {
                let row: Tuple = self
                    .bindings
                    .iter()
                    .map(|b| self.resolve(env, b))
                    .collect::<Result<_>>()?;
                rel.tuples.insert(row);
            }
            return Ok(());
        }
        let var = &root.vars[i];
        for tuple in self.db.tuples(&var.relation) {
            env.push(Frame { var, tuple });
            self.collect(root, i + 1, env, rel)?;
            env.pop();
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Datalog
// ---------------------------------------------------------------------------

/// Evaluate a program rule by rule in dependency order; the answer is the
/// relation of the last rule's head. A zero-arity answer is a sentence:
/// the verdict is whether the empty tuple was derived.
pub fn eval_datalog(p: &DatalogProgram, schema: &Schema, db: &Database) -> Result<EvalOutput> {
    datalog::validate(p, schema)?;
    let mut idb: BTreeMap<&str, BTreeSet<Tuple>> = BTreeMap::new();
    for rule in datalog::topological_rules(p) {
        let rows = eval_rule(rule, db, &idb)?;
        idb.insert(&rule.head.pred, rows);
    }
    let answer = p.answer();
    let rows = idb.remove(answer.pred.as_str()).expect("every rule evaluated");
    if answer.vars.is_empty() {
        Ok(EvalOutput::Bool(rows.contains(&Tuple::new())))
    } else {
        Ok(EvalOutput::Rows(Relation {
            attrs: answer.vars.clone(),
            tuples: rows,
        }))
    }
}

fn eval_rule(rule: &Rule, db: &Database, idb: &BTreeMap<&str, BTreeSet<Tuple>>) -> Result<BTreeSet<Tuple>> {
    let positives: Vec<&Atom> = rule
        .body
        .iter()
        .filter_map(|l| match l {
            Literal::Pos(a) => Some(a),
            _ => None,
        })
        .collect();
    let mut out = BTreeSet::new();
    let mut env: BTreeMap<&str, Value> = BTreeMap::new();
    join_positives(rule, &positives, 0, db, idb, &mut env, &mut out)?;
    Ok(out)
}

/// Tuples of a body predicate: an already-computed intensional relation
/// or a base relation of the database.
fn tuples_of<'d>(
    pred: &str,
    db: &'d Database,
    idb: &'d BTreeMap<&str, BTreeSet<Tuple>>,
) -> Box<dyn Iterator<Item = &'d Tuple> + 'd> {
    match idb.get(pred) {
        Some(rows) => Box::new(rows.iter()),
        None => Box::new(db.tuples(pred)),
    }
}

/// Nested-loop join over the positive atoms with unification: a variable
/// already bound must match the tuple value, an unbound one is bound to
/// it. Once all positives are assigned, `finish_rule` handles built-ins,
/// negated atoms, and the head.
fn join_positives<'r>(
    rule: &'r Rule,
    positives: &[&'r Atom],
    i: usize,
    db: &Database,
    idb: &BTreeMap<&str, BTreeSet<Tuple>>,
    env: &mut BTreeMap<&'r str, Value>,
    out: &mut BTreeSet<Tuple>,
) -> Result<()> {
    if i == positives.len() {
        return finish_rule(rule, db, idb, env, out);
    }
    let atom = positives[i];
    for tuple in tuples_of(&atom.pred, db, idb) {
        let mut added: Vec<&str> = Vec::new();
        let mut matches = true;
        for (v, val) in atom.vars.iter().zip(tuple) {
            match env.get(v.as_str()) {
                Some(bound) => {
                    if !compare(bound, CompOp::Eq, val)? {
                        matches = false;
                        break;
                    }
                }
                None => {
                    env.insert(v, val.clone());
                    added.push(v);
                }
            }
        }
        if matches {
            join_positives(rule, positives, i + 1, db, idb, env, out)?;
        }
        for v in added {
            env.remove(v);
        }
    }
    Ok(())
}

fn finish_rule<'r>(
    rule: &'r Rule,
    db: &Database,
    idb: &BTreeMap<&str, BTreeSet<Tuple>>,
    env: &BTreeMap<&'r str, Value>,
    out: &mut BTreeSet<Tuple>,
) -> Result<()> {
    // Equality built-ins can bind further variables (`z = x`, `x = 1`);
    // run them to a fixpoint on a local copy before checking anything.
    let mut env: BTreeMap<&str, Value> = env.clone();
    loop {
        let mut changed = false;
        for lit in &rule.body {
            if let Literal::Cmp {
                left,
                op: CompOp::Eq,
                right,
            } = lit
            {
                match (term_value(left, &env), term_value(right, &env)) {
                    (Some(v), None) => {
                        if let Term::Var(name) = right {
                            env.insert(name, v);
                            changed = true;
                        }
                    }
                    (None, Some(v)) => {
                        if let Term::Var(name) = left {
                            env.insert(name, v);
                            changed = true;
                        }
                    }
                    _ => {}
                }
            }
        }
        if !changed {
            break;
        }
    }
    for lit in &rule.body {
        match lit {
            Literal::Cmp { left, op, right } => {
                let l = bound_term(left, &env, rule)?;
                let r = bound_term(right, &env, rule)?;
                if !compare(&l, *op, &r)? {
                    return Ok(());
                }
            }
            Literal::Neg(atom) => {
                let probe: Tuple = atom
                    .vars
                    .iter()
                    .map(|v| bound_var(v, &env, rule))
                    .collect::<Result<_>>()?;
                let present = match idb.get(atom.pred.as_str()) {
                    Some(rows) => rows.contains(&probe),
                    None => db.contains(&atom.pred, &probe),
                };
                if present {
                    return Ok(());
                }
            }
            Literal::Pos(_) => {}
        }
    }
    let row: Tuple = rule
        .head
        .vars
        .iter()
        .map(|v| bound_var(v, &env, rule))
        .collect::<Result<_>>()?;
    out.insert(row);
    Ok(())
}

fn term_value(t: &Term, env: &BTreeMap<&str, Value>) -> Option<Value> {
    match t {
        Term::Const(v) => Some(v.clone()),
        Term::Var(n) => env.get(n.as_str()).cloned(),
    }
}

fn bound_term(t: &Term, env: &BTreeMap<&str, Value>, rule: &Rule) -> Result<Value> {
    term_value(t, env).ok_or_else(|| Error::Safety {
        detail: format!("a built-in variable is not bound in `{}`", rule.head.pred),
    })
}

fn bound_var(v: &str, env: &BTreeMap<&str, Value>, rule: &Rule) -> Result<Value> {
    env.get(v).cloned().ok_or_else(|| Error::Safety {
        detail: format!("variable `{v}` is not bound in `{}`", rule.head.pred),
    })
}

// ---------------------------------------------------------------------------
// Relational algebra
// ---------------------------------------------------------------------------

type Rows = BTreeSet<Tuple>;

/// Evaluate an expression bottom-up.
pub fn eval_ra(e: &RaExpr, schema: &Schema, db: &Database) -> Result<EvalOutput> {
    ra::analyze(e, schema)?;
    let mut leaves = Vec::new();
    let (cols, rows) = eval_ra_node(e, schema, db, &mut leaves)?;
    Ok(EvalOutput::Rows(Relation {
        attrs: cols.iter().map(|c| c.name.clone()).collect(),
        tuples: rows,
    }))
}

/// A selection or theta-join condition with its columns resolved to
/// positions.
enum Cond {
    Join(usize, CompOp, usize),
    Sel(usize, CompOp, Value),
}

fn resolve_conds(preds: &[RaPred], cols: &[RaColumn], leaves: &[String]) -> Result<Vec<Cond>> {
    preds
        .iter()
        .map(|p| {
            Ok(match p {
                RaPred::Join { left, op, right } => Cond::Join(
                    ra::resolve_col(cols, leaves, left)?,
                    *op,
                    ra::resolve_col(cols, leaves, right)?,
                ),
                RaPred::Sel { left, op, value } => {
                    Cond::Sel(ra::resolve_col(cols, leaves, left)?, *op, value.clone())
                }
            })
        })
        .collect()
}

fn row_passes(conds: &[Cond], t: &Tuple) -> Result<bool> {
    for c in conds {
        let ok = match c {
            Cond::Join(l, op, r) => compare(&t[*l], *op, &t[*r])?,
            Cond::Sel(l, op, v) => compare(&t[*l], *op, v)?,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

fn eval_ra_node(
    e: &RaExpr,
    schema: &Schema,
    db: &Database,
    leaves: &mut Vec<String>,
) -> Result<(Vec<RaColumn>, Rows)> {
    match e {
        RaExpr::Rel(name) => {
            let attrs = schema.attrs(name)?;
            let leaf = leaves.len();
            leaves.push(name.clone());
            let cols = attrs
                .iter()
                .enumerate()
                .map(|(i, a)| RaColumn {
                    name: a.clone(),
                    leaf,
                    base_attr: i,
                })
                .collect();
            Ok((cols, db.tuples(name).cloned().collect()))
        }
        RaExpr::Project { attrs, input } => {
            let (cols, rows) = eval_ra_node(input, schema, db, leaves)?;
            let idxs: Vec<usize> = attrs
                .iter()
                .map(|a| ra::resolve_col(&cols, leaves, a))
                .collect::<Result<_>>()?;
            let out_cols = idxs.iter().map(|&i| cols[i].clone()).collect();
            let out_rows = rows
                .iter()
                .map(|t| idxs.iter().map(|&i| t[i].clone()).collect())
                .collect();
            Ok((out_cols, out_rows))
        }
        RaExpr::Select { preds, input } => {
            let (cols, rows) = eval_ra_node(input, schema, db, leaves)?;
            let conds = resolve_conds(preds, &cols, leaves)?;
            let mut keep = BTreeSet::new();
            for t in rows {
                if row_passes(&conds, &t)? {
                    keep.insert(t);
                }
            }
            Ok((cols, keep))
        }
        RaExpr::Product(l, r) | RaExpr::ThetaJoin { left: l, right: r, .. } => {
            let (lc, lrows) = eval_ra_node(l, schema, db, leaves)?;
            let (rc, rrows) = eval_ra_node(r, schema, db, leaves)?;
            let cols: Vec<RaColumn> = lc.into_iter().chain(rc).collect();
            let conds = if let RaExpr::ThetaJoin { preds, .. } = e {
                resolve_conds(preds, &cols, leaves)?
            } else {
                Vec::new()
            };
            let mut rows = BTreeSet::new();
            for a in &lrows {
                for b in &rrows {
                    let t: Tuple = a.iter().chain(b.iter()).cloned().collect();
                    if row_passes(&conds, &t)? {
                        rows.insert(t);
                    }
                }
            }
            Ok((cols, rows))
        }
        RaExpr::NatJoin(l, r) => {
            let (lc, lrows) = eval_ra_node(l, schema, db, leaves)?;
            let (rc, rrows) = eval_ra_node(r, schema, db, leaves)?;
            let shared: Vec<(usize, usize)> = rc
                .iter()
                .enumerate()
                .filter_map(|(j, c)| lc.iter().position(|d| d.name == c.name).map(|i| (i, j)))
                .collect();
            let keep_right: Vec<usize> = (0..rc.len())
                .filter(|j| !shared.iter().any(|(_, sj)| sj == j))
                .collect();
            let cols: Vec<RaColumn> = lc
                .iter()
                .cloned()
                .chain(keep_right.iter().map(|&j| rc[j].clone()))
                .collect();
            let mut rows = BTreeSet::new();
            for a in &lrows {
                'right: for b in &rrows {
                    for &(i, j) in &shared {
                        if !compare(&a[i], CompOp::Eq, &b[j])? {
                            continue 'right;
                        }
                    }
                    rows.insert(
                        a.iter()
                            .cloned()
                            .chain(keep_right.iter().map(|&j| b[j].clone()))
                            .collect(),
                    );
                }
            }
            Ok((cols, rows))
        }
        RaExpr::Minus(l, r) => {
            let (lc, lrows) = eval_ra_node(l, schema, db, leaves)?;
            let (_, rrows) = eval_ra_node(r, schema, db, leaves)?;
            Ok((lc, lrows.difference(&rrows).cloned().collect()))
        }
        RaExpr::Union(l, r) => {
            let (lc, lrows) = eval_ra_node(l, schema, db, leaves)?;
            let (_, rrows) = eval_ra_node(r, schema, db, leaves)?;
            Ok((lc, lrows.union(&rrows).cloned().collect()))
        }
        RaExpr::Rename { map, input } => {
            let (mut cols, rows) = eval_ra_node(input, schema, db, leaves)?;
            for (old, new) in map {
                let idx = cols
                    .iter()
                    .position(|c| c.name == *old)
                    .expect("validated rename source");
                cols[idx].name = new.clone();
            }
            Ok((cols, rows))
        }
    }
}

// ---------------------------------------------------------------------------
// SQL and the dispatcher
// ---------------------------------------------------------------------------

/// Evaluate a SQL query by translating it to TRC first; the two languages
/// correspond one-to-one on canonical queries, so this inherits the TRC
/// semantics exactly.
pub fn eval_sql(q: &SqlQuery, schema: &Schema, db: &Database) -> Result<EvalOutput> {
    let t = translate::sql_to_trc(q, schema)?;
    eval_trc(&t, schema, db)
}

/// Evaluate a query in any of the four languages.
pub fn eval_query(q: &LangQuery, schema: &Schema, db: &Database) -> Result<EvalOutput> {
    match q {
        LangQuery::Sql(s) => eval_sql(s, schema, db),
        LangQuery::Trc(t) => eval_trc(t, schema, db),
        LangQuery::Datalog(p) => eval_datalog(p, schema, db),
        LangQuery::Ra(e) => eval_ra(e, schema, db),
    }
}

// ---------------------------------------------------------------------------
// Bounded equivalence
// ---------------------------------------------------------------------------

/// Options for the bounded equivalence oracle.
#[derive(Debug, Clone)]
pub struct EquivOptions {
    /// Size of the base integer domain `{0 .. domain_size-1}`.
    pub domain_size: i64,
    /// Maximum rows per relation in every enumerated instance.
    pub max_rows: usize,
    /// Extra values force-included in every attribute domain of matching
    /// type.
    pub extra: Vec<Value>,
    /// Hard ceiling on the number of instances to enumerate.
    pub ceiling: u128,
}

impl Default for EquivOptions {
    fn default() -> EquivOptions {
        EquivOptions {
            domain_size: 2,
            max_rows: 4,
            extra: Vec::new(),
            ceiling: DEFAULT_INSTANCE_CEILING,
        }
    }
}

/// How two results differed on a counterexample database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Difference {
    /// `tuple` is in exactly one of the two results.
    Tuple { tuple: Tuple, in_first: bool },
    /// The two sentence verdicts.
    Truth { first: bool, second: bool },
}

impl fmt::Display for Difference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Difference::Tuple { tuple, in_first } => {
                let vals: Vec<String> = tuple.iter().map(|v| v.to_string()).collect();
                write!(
                    f,
                    "tuple ({}) appears only in the {} result",
                    vals.join(", "),
                    if *in_first { "first" } else { "second" }
                )
            }
            Difference::Truth { first, second } => {
                write!(f, "sentence verdicts differ: first is {first}, second is {second}")
            }
        }
    }
}

/// Verdict of the bounded equivalence check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EquivVerdict {
    /// No difference on any enumerated instance. Bounded evidence, not a
    /// proof of equivalence.
    EquivalentUpToBound { description: String },
    /// A replayable witness: evaluating both queries on `db` reproduces
    /// `difference`.
    Counterexample { db: Database, difference: Difference },
}

impl EquivVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, EquivVerdict::EquivalentUpToBound { .. })
    }
}

impl fmt::Display for EquivVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EquivVerdict::EquivalentUpToBound { description } => {
                write!(f, "equivalent up to bound: {description}")
            }
            EquivVerdict::Counterexample { db, difference } => {
                write!(f, "counterexample: {difference}\n{db}")
            }
        }
    }
}

/// A query readied for repeated evaluation: SQL is translated to TRC once
/// up front; everything is validated once.
enum Prepared {
    Trc(TrcQuery),
    Datalog(DatalogProgram),
    Ra(RaExpr),
}

fn prepare(q: &LangQuery, schema: &Schema) -> Result<Prepared> {
    Ok(match q {
        LangQuery::Sql(s) => Prepared::Trc(translate::sql_to_trc(s, schema)?),
        LangQuery::Trc(t) => {
            trc::validate(t, schema)?;
            Prepared::Trc(t.clone())
        }
        LangQuery::Datalog(p) => {
            datalog::validate(p, schema)?;
            Prepared::Datalog(p.clone())
        }
        LangQuery::Ra(e) => {
            ra::analyze(e, schema)?;
            Prepared::Ra(e.clone())
        }
    })
}

/// Output arity, or `None` for a sentence.
fn prepared_shape(p: &Prepared, schema: &Schema) -> Result<Option<usize>> {
    Ok(match p {
        Prepared::Trc(q) => q.output.as_ref().map(|o| o.attrs.len()),
        Prepared::Datalog(pr) => {
            let n = pr.answer().vars.len();
            if n == 0 {
                None
            } else {
                Some(n)
            }
        }
        Prepared::Ra(e) => Some(ra::analyze(e, schema)?.columns.len()),
    })
}

fn eval_prepared(p: &Prepared, schema: &Schema, db: &Database) -> Result<EvalOutput> {
    match p {
        Prepared::Trc(q) => eval_trc(q, schema, db),
        Prepared::Datalog(pr) => eval_datalog(pr, schema, db),
        Prepared::Ra(e) => eval_ra(e, schema, db),
    }
}

/// Exhaustively compare two queries on every database instance within the
/// bound. The first difference, in enumeration order, is returned as a
/// replayable counterexample; within one instance the reported tuple is
/// the smallest differing one. This is refutation-complete at the bound,
/// not a decision procedure.
pub fn equiv_check(
    q1: &LangQuery,
    q2: &LangQuery,
    schema: &Schema,
    opts: &EquivOptions,
) -> Result<EquivVerdict> {
    let p1 = prepare(q1, schema)?;
    let p2 = prepare(q2, schema)?;
    let s1 = prepared_shape(&p1, schema)?;
    let s2 = prepared_shape(&p2, schema)?;
    if s1 != s2 {
        let show = |s: Option<usize>| match s {
            Some(n) => format!("a query with {n} output attributes"),
            None => "a sentence".to_string(),
        };
        return Err(Error::Scope {
            detail: format!("cannot compare {} with {}", show(s1), show(s2)),
        });
    }
    let domains = infer_domains(schema, &[&p1, &p2], opts)?;
    let iter = enumerate_databases_typed(schema, &domains, opts.max_rows, opts.ceiling)?;
    let total = iter.total();
    for db in iter {
        let r1 = eval_prepared(&p1, schema, &db)?;
        let r2 = eval_prepared(&p2, schema, &db)?;
        if let Some(difference) = results_differ(&r1, &r2) {
            return Ok(EquivVerdict::Counterexample { db, difference });
        }
    }
    Ok(EquivVerdict::EquivalentUpToBound {
        description: format!(
            "all {total} instances with domain size {} and at most {} rows per relation",
            opts.domain_size, opts.max_rows
        ),
    })
}

fn results_differ(r1: &EvalOutput, r2: &EvalOutput) -> Option<Difference> {
    match (r1, r2) {
        (EvalOutput::Rows(a), EvalOutput::Rows(b)) => {
            let tuple = a.tuples.symmetric_difference(&b.tuples).next()?.clone();
            let in_first = a.tuples.contains(&tuple);
            Some(Difference::Tuple { tuple, in_first })
        }
        (EvalOutput::Bool(x), EvalOutput::Bool(y)) => {
            if x != y {
                Some(Difference::Truth { first: *x, second: *y })
            } else {
                None
            }
        }
        _ => unreachable!("output shapes are checked before enumeration"),
    }
}

// ---------------------------------------------------------------------------
// Typed domain inference
// ---------------------------------------------------------------------------

/// A node of the attribute-type union-find: either an attribute position
/// of the schema or a rule variable of one of the compared programs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ClassNode {
    Attr(String, usize),
    Var(usize, usize, String),
}

/// Union-find over attribute positions and rule variables. Classes
/// accumulate the constants they are compared against; attributes of one
/// class share an enumeration domain.
struct Classes {
    ids: BTreeMap<ClassNode, usize>,
    parent: Vec<usize>,
    consts: Vec<BTreeSet<Value>>,
}

impl Classes {
    fn new() -> Classes {
        Classes {
            ids: BTreeMap::new(),
            parent: Vec::new(),
            consts: Vec::new(),
        }
    }

    fn id(&mut self, n: ClassNode) -> usize {
        if let Some(&i) = self.ids.get(&n) {
            return i;
        }
        let i = self.parent.len();
        self.parent.push(i);
        self.consts.push(BTreeSet::new());
        self.ids.insert(n, i);
        i
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn merge(&mut self, a: ClassNode, b: ClassNode) {
        let ia = self.id(a);
        let ib = self.id(b);
        let ra = self.find(ia);
        let rb = self.find(ib);
        if ra != rb {
            let moved = std::mem::take(&mut self.consts[rb]);
            self.parent[rb] = ra;
            self.consts[ra].extend(moved);
        }
    }

    fn add_const(&mut self, n: ClassNode, v: &Value) {
        let i = self.id(n);
        let r = self.find(i);
        self.consts[r].insert(v.clone());
    }
}

/// One enumeration domain per attribute position, inferred from how the
/// queries compare attributes with each other and with constants.
///
/// Attribute positions connected by a comparison share a class. A class
/// containing a string constant enumerates its constants plus one fresh
/// padding string (so off-constant cases are exercised); every other
/// class enumerates `{0..k-1}` plus its integer constants. A class
/// compared against both an integer and a string constant can never be
/// evaluated without a fault and is rejected up front.
fn infer_domains(schema: &Schema, prepared: &[&Prepared], opts: &EquivOptions) -> Result<Vec<Vec<Vec<Value>>>> {
    let mut classes = Classes::new();
    for (rel, attrs) in schema.relations() {
        for i in 0..attrs.len() {
            classes.id(ClassNode::Attr(rel.to_string(), i));
        }
    }
    for (qidx, p) in prepared.iter().enumerate() {
        match p {
            Prepared::Trc(q) => trc_constraints(q, schema, &mut classes)?,
            Prepared::Datalog(pr) => datalog_constraints(pr, qidx, schema, &mut classes),
            Prepared::Ra(e) => {
                let mut leaves = Vec::new();
                ra_constraints(e, schema, &mut classes, &mut leaves)?;
            }
        }
    }
    let (int_extra, str_extra): (Vec<Value>, Vec<Value>) = opts
        .extra
        .iter()
        .cloned()
        .partition(|v| matches!(v, Value::Int(_)));
    let mut out = Vec::new();
    for (rel, attrs) in schema.relations() {
        let mut rel_doms = Vec::new();
        for i in 0..attrs.len() {
            let id = classes.id(ClassNode::Attr(rel.to_string(), i));
            let root = classes.find(id);
            let consts = classes.consts[root].clone();
            let int_const = consts.iter().find(|v| matches!(v, Value::Int(_)));
            let str_const = consts.iter().find(|v| matches!(v, Value::Str(_)));
            if let (Some(l), Some(r)) = (int_const, str_const) {
                return Err(Error::TypeFault {
                    left: l.clone(),
                    right: r.clone(),
                });
            }
            let mut dom: Vec<Value>;
            if str_const.is_some() {
                dom = consts.into_iter().collect();
                dom.extend(str_extra.iter().cloned());
                let mut n = 0usize;
                loop {
                    let candidate = Value::Str(format!("z{n}"));
                    if !dom.contains(&candidate) {
                        dom.push(candidate);
                        break;
                    }
                    n += 1;
                }
            } else {
                dom = (0..opts.domain_size).map(Value::Int).collect();
                dom.extend(consts);
                dom.extend(int_extra.iter().cloned());
            }
            dom.sort();
            dom.dedup();
            rel_doms.push(dom);
        }
        out.push(rel_doms);
    }
    Ok(out)
}

fn trc_constraints(q: &TrcQuery, schema: &Schema, classes: &mut Classes) -> Result<()> {
    let mut rel_of: BTreeMap<String, String> = BTreeMap::new();
    let mut preds: Vec<TrcPred> = Vec::new();
    q.visit_scopes(&mut |s, _| {
        for v in &s.vars {
            rel_of.insert(v.name.clone(), v.relation.clone());
        }
        preds.extend(s.preds.iter().cloned());
    });
    let bindings = output_bindings(q);
    let node_of = |r: &AttrRef| -> Result<ClassNode> {
        let r = if q.is_output_name(&r.var) {
            let out = q.output.as_ref().expect("output reference implies an output spec");
            let idx = out
                .attrs
                .iter()
                .position(|a| *a == r.attr)
                .expect("validated output attribute");
            &bindings[idx]
        } else {
            r
        };
        let rel = rel_of.get(&r.var).expect("validated variable reference");
        Ok(ClassNode::Attr(rel.clone(), schema.attr_index(rel, &r.attr)?))
    };
    for p in &preds {
        match p {
            TrcPred::Join { left, right, .. } => {
                let a = node_of(left)?;
                let b = node_of(right)?;
                classes.merge(a, b);
            }
            TrcPred::Sel { left, value, .. } => {
                let n = node_of(left)?;
                classes.add_const(n, value);
            }
        }
    }
    Ok(())
}

fn datalog_constraints(p: &DatalogProgram, qidx: usize, schema: &Schema, classes: &mut Classes) {
    for (ridx, rule) in p.rules.iter().enumerate() {
        for lit in &rule.body {
            match lit {
                Literal::Pos(a) | Literal::Neg(a) => {
                    if schema.contains(&a.pred) {
                        for (i, v) in a.vars.iter().enumerate() {
                            classes.merge(
                                ClassNode::Var(qidx, ridx, v.clone()),
                                ClassNode::Attr(a.pred.clone(), i),
                            );
                        }
                    } else {
                        let didx = p
                            .rules
                            .iter()
                            .position(|r| r.head.pred == a.pred)
                            .expect("validated intensional reference");
                        for (i, v) in a.vars.iter().enumerate() {
                            classes.merge(
                                ClassNode::Var(qidx, ridx, v.clone()),
                                ClassNode::Var(qidx, didx, p.rules[didx].head.vars[i].clone()),
                            );
                        }
                    }
                }
                Literal::Cmp { left, right, .. } => match (left, right) {
                    (Term::Var(a), Term::Var(b)) => classes.merge(
                        ClassNode::Var(qidx, ridx, a.clone()),
                        ClassNode::Var(qidx, ridx, b.clone()),
                    ),
                    (Term::Var(a), Term::Const(c)) | (Term::Const(c), Term::Var(a)) => {
                        classes.add_const(ClassNode::Var(qidx, ridx, a.clone()), c);
                    }
                    (Term::Const(_), Term::Const(_)) => {}
                },
            }
        }
    }
}

fn ra_constraints(
    e: &RaExpr,
    schema: &Schema,
    classes: &mut Classes,
    leaves: &mut Vec<String>,
) -> Result<Vec<RaColumn>> {
    let key = |c: &RaColumn, leaves: &[String]| ClassNode::Attr(leaves[c.leaf].clone(), c.base_attr);
    match e {
        RaExpr::Rel(name) => {
            let attrs = schema.attrs(name)?;
            let leaf = leaves.len();
            leaves.push(name.clone());
            Ok(attrs
                .iter()
                .enumerate()
                .map(|(i, a)| RaColumn {
                    name: a.clone(),
                    leaf,
                    base_attr: i,
                })
                .collect())
        }
        RaExpr::Project { attrs, input } => {
            let cols = ra_constraints(input, schema, classes, leaves)?;
            let mut out = Vec::new();
            for a in attrs {
                out.push(cols[ra::resolve_col(&cols, leaves, a)?].clone());
            }
            Ok(out)
        }
        RaExpr::Select { preds, input } => {
            let cols = ra_constraints(input, schema, classes, leaves)?;
            constrain_ra_preds(preds, &cols, leaves, classes)?;
            Ok(cols)
        }
        RaExpr::Product(l, r) | RaExpr::ThetaJoin { left: l, right: r, .. } => {
            let lc = ra_constraints(l, schema, classes, leaves)?;
            let rc = ra_constraints(r, schema, classes, leaves)?;
            let cols: Vec<RaColumn> = lc.into_iter().chain(rc).collect();
            if let RaExpr::ThetaJoin { preds, .. } = e {
                constrain_ra_preds(preds, &cols, leaves, classes)?;
            }
            Ok(cols)
        }
        RaExpr::NatJoin(l, r) => {
            let lc = ra_constraints(l, schema, classes, leaves)?;
            let rc = ra_constraints(r, schema, classes, leaves)?;
            let mut cols = lc.clone();
            for c in rc {
                if let Some(d) = lc.iter().find(|d| d.name == c.name) {
                    classes.merge(key(d, leaves), key(&c, leaves));
                } else {
                    cols.push(c);
                }
            }
            Ok(cols)
        }
        RaExpr::Minus(l, r) | RaExpr::Union(l, r) => {
            let lc = ra_constraints(l, schema, classes, leaves)?;
            let rc = ra_constraints(r, schema, classes, leaves)?;
            for (a, b) in lc.iter().zip(&rc) {
                classes.merge(key(a, leaves), key(b, leaves));
            }
            Ok(lc)
        }
        RaExpr::Rename { map, input } => {
            let mut cols = ra_constraints(input, schema, classes, leaves)?;
            for (old, new) in map {
                let idx = cols
                    .iter()
                    .position(|c| c.name == *old)
                    .expect("validated rename source");
                cols[idx].name = new.clone();
            }
            Ok(cols)
        }
    }
}

fn constrain_ra_preds(
    preds: &[RaPred],
    cols: &[RaColumn],
    leaves: &[String],
    classes: &mut Classes,
) -> Result<()> {
    let key = |c: &RaColumn| ClassNode::Attr(leaves[c.leaf].clone(), c.base_attr);
    for p in preds {
        match p {
            RaPred::Join { left, right, .. } => {
                let l = &cols[ra::resolve_col(cols, leaves, left)?];
                let r = &cols[ra::resolve_col(cols, leaves, right)?];
                classes.merge(key(l), key(r));
            }
            RaPred::Sel { left, value, .. } => {
                let l = &cols[ra::resolve_col(cols, leaves, left)?];
                classes.add_const(key(l), value);
            }
        }
    }
    Ok(())
}
