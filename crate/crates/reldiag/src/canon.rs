//! Normalization passes and fragment-membership checks.
//!
//! [`check_anchored`] tests the anchoring condition on canonical TRC;
//! [`trc_pullup`] hoists mid-formula quantifiers to scope heads;
//! [`sql_canonicalize`] rewrites `IN`, `ALL`, and `ANY` subqueries into
//! `[NOT] EXISTS` form and flattens positive `EXISTS` subqueries into
//! the parent `FROM`, leaving `NOT EXISTS` as the only remaining
//! subquery construct. [`normalize_trc`] and [`normalize_datalog`]
//! produce normal forms under which queries that differ only in naming
//! and local ordering print identically.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::ast::datalog::{self, Atom, DatalogProgram, Literal, Rule, Term};
use crate::ast::sql::{self, Scalar, SelectCols, SqlFromItem, SqlPred, SqlQuery, SqlSelect};
use crate::ast::trc::{Formula, TrcFullQuery, TrcFullScope, TrcQuery, TrcScope, TrcVar};
use crate::ast::ColRef;
use crate::error::{AnchorViolation, Error, Result};
use crate::model::{CompOp, Schema};

// ---------------------------------------------------------------------------
// Anchoring
// ---------------------------------------------------------------------------

/// Report every predicate that is not anchored.
///
/// A predicate is anchored when it references at least one attribute of
/// a variable quantified in its own scope head — the head directly
/// inside the predicate's innermost negation (or the root head, outside
/// all negations). Predicates inside an empty-head scope are therefore
/// always violations. The check is total and never fails.
pub fn check_anchored(q: &TrcQuery) -> Vec<AnchorViolation> {
    let mut out = Vec::new();
    q.visit_scopes(&mut |scope, path| {
        for p in &scope.preds {
            let anchored = p
                .refs()
                .iter()
                .any(|r| scope.vars.iter().any(|v| v.name == r.var));
            if !anchored {
                out.push(AnchorViolation {
                    scope_path: path.to_vec(),
                    predicate: p.to_string(),
                });
            }
        }
    });
    out
}

// ---------------------------------------------------------------------------
// Quantifier pull-up (TRC)
// ---------------------------------------------------------------------------

/// Hoist every positive mid-formula quantifier to the nearest enclosing
/// scope head: the root head, or the head directly following a negation.
/// The logical reading is unchanged; hoisted conjuncts stay in place and
/// head-variable collisions are resolved by renaming the later variable
/// to `<name><k>` for the smallest unused `k >= 2`. Empty-head scopes
/// (doubled negation) are preserved, never collapsed.
///
/// Fails on disjunction: `or` must be eliminated before pull-up.
pub fn trc_pullup(q: &TrcFullQuery) -> Result<TrcQuery> {
    let mut used = BTreeSet::new();
    collect_scope_names(&q.root, &mut used);
    if let Some(out) = &q.output {
        used.insert(out.name.clone());
    }
    let root = pull_scope(q.root.clone(), &mut used, &mut Vec::new())?;
    Ok(TrcQuery {
        output: q.output.clone(),
        root,
    })
}

fn collect_scope_names(s: &TrcFullScope, used: &mut BTreeSet<String>) {
    for v in &s.vars {
        used.insert(v.name.clone());
    }
    collect_formula_names(&s.formula, used);
}

fn collect_formula_names(f: &Formula, used: &mut BTreeSet<String>) {
    match f {
        Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| collect_formula_names(f, used)),
        Formula::Pred(_) => {}
        Formula::Not(s) | Formula::Exists(s) => collect_scope_names(s, used),
    }
}

/// `<base><k>` for the smallest `k >= 2` not yet taken; claims the name.
fn fresh_name(base: &str, used: &mut BTreeSet<String>) -> String {
    let mut k = 2usize;
    loop {
        let candidate = format!("{base}{k}");
        if used.insert(candidate.clone()) {
            return candidate;
        }
        k += 1;
    }
}

fn pull_scope(
    s: TrcFullScope,
    used: &mut BTreeSet<String>,
    bound: &mut Vec<String>,
) -> Result<TrcScope> {
    let depth = bound.len();
    let mut out = TrcScope::default();
    let mut queue = VecDeque::new();
    admit(s.vars, s.formula, &mut out, used, bound, &mut queue);
    while let Some(f) = queue.pop_front() {
        match f {
            Formula::Pred(p) => out.preds.push(p),
            Formula::And(fs) => {
                for f in fs.into_iter().rev() {
                    queue.push_front(f);
                }
            }
            Formula::Exists(sub) => admit(sub.vars, sub.formula, &mut out, used, bound, &mut queue),
            Formula::Not(sub) => out.negations.push(pull_scope(*sub, used, bound)?),
            Formula::Or(_) => {
                return Err(Error::Unsupported {
                    detail: "quantifier pull-up applies to or-free queries; eliminate disjunction first"
                        .into(),
                })
            }
        }
    }
    bound.truncate(depth);
    Ok(out)
}

/// Add `vars` to the scope head under construction, renaming any name
/// already bound on the current path, and splice the guarded formula's
/// conjuncts at the front of the work queue so they stay in place.
fn admit(
    vars: Vec<TrcVar>,
    mut formula: Formula,
    out: &mut TrcScope,
    used: &mut BTreeSet<String>,
    bound: &mut Vec<String>,
    queue: &mut VecDeque<Formula>,
) {
    for mut v in vars {
        if bound.contains(&v.name) {
            let fresh = fresh_name(&v.name, used);
            rename_formula(&mut formula, &v.name, &fresh);
            v.name = fresh;
        }
        bound.push(v.name.clone());
        out.vars.push(v);
    }
    for f in formula.conjuncts().into_iter().rev() {
        queue.push_front(f);
    }
}

/// Rewrite references to variable `old` as `new`, stopping at any scope
/// that rebinds `old`.
fn rename_formula(f: &mut Formula, old: &str, new: &str) {
    match f {
        Formula::And(fs) | Formula::Or(fs) => fs.iter_mut().for_each(|f| rename_formula(f, old, new)),
        Formula::Pred(p) => {
            for r in match p {
                crate::ast::trc::TrcPred::Join { left, right, .. } => vec![left, right],
                crate::ast::trc::TrcPred::Sel { left, .. } => vec![left],
            } {
                if r.var == old {
                    r.var = new.to_string();
                }
            }
        }
        Formula::Not(s) | Formula::Exists(s) => {
            if s.vars.iter().any(|v| v.name == old) {
                return;
            }
            rename_formula(&mut s.formula, old, new);
        }
    }
}

// ---------------------------------------------------------------------------
// SQL canonicalization
// ---------------------------------------------------------------------------

/// Rewrite a fragment-mode SQL query into canonical form:
///
/// 1. `C1 [NOT] IN (SELECT C2 FROM ... WHERE P)` becomes `[NOT] EXISTS
///    (SELECT * FROM ... WHERE P AND C1 = C2)` (one equality per column
///    of a row-value `IN`);
/// 2. `C1 op ALL (S)` becomes `NOT EXISTS (S WHERE ... AND C1 op' C2)`
///    with `op'` the complement of `op`; `C1 op ANY (S)` becomes
///    `EXISTS (S WHERE ... AND C1 op C2)`;
/// 3. every positive `EXISTS` is flattened into the enclosing `FROM`
///    (inside a `NOT (...)` group, into the group, which thereby becomes
///    a `NOT EXISTS` subquery), with subquery aliases renamed apart as
///    `<alias><k>` where they would collide.
///
/// Every column reference in the result is alias-qualified, and `NOT
/// EXISTS` is the only remaining subquery construct. Double negations
/// (`NOT (NOT EXISTS ...)`) are preserved, never collapsed. Fails with
/// an anchoring error when the result, read as TRC, contains a
/// predicate that is not anchored (a hidden disjunction).
pub fn sql_canonicalize(q: &SqlQuery, schema: &Schema) -> Result<SqlQuery> {
    let c = sql_canonical_rewrite(q, schema)?;
    let trc = crate::translate::sql_structural_to_trc(&c, schema)?;
    let violations = check_anchored(&trc);
    if violations.is_empty() {
        Ok(c)
    } else {
        Err(Error::Anchoring(violations))
    }
}

/// The rewrite half of [`sql_canonicalize`], without the anchoring check.
pub(crate) fn sql_canonical_rewrite(q: &SqlQuery, schema: &Schema) -> Result<SqlQuery> {
    sql::validate(q, schema)?;
    if sql::contains_or(q) {
        return Err(Error::Unsupported {
            detail: "canonicalization applies to OR-free queries; eliminate disjunction first".into(),
        });
    }
    let mut q = q.clone();
    qualify_query(&mut q, schema)?;
    let mut used = BTreeSet::new();
    collect_query_aliases(&q, &mut used);
    rewrite_query(q, schema, &mut used)
}

// --- phase A: alias-qualify every column reference -------------------------

fn qualify_query(q: &mut SqlQuery, schema: &Schema) -> Result<()> {
    let mut stack = Vec::new();
    match q {
        SqlQuery::Select(s) => qualify_select(s, schema, &mut stack),
        SqlQuery::SentenceNot(p) => qualify_pred(p, schema, &mut stack),
        SqlQuery::SentenceExists { sub, .. } => qualify_select(sub, schema, &mut stack),
    }
}

fn qualify_select(
    s: &mut SqlSelect,
    schema: &Schema,
    stack: &mut Vec<Vec<SqlFromItem>>,
) -> Result<()> {
    stack.push(s.from.clone());
    let result = (|| {
        if let SelectCols::Cols(cols) = &mut s.cols {
            for c in cols {
                qualify_ref(c, schema, stack)?;
            }
        }
        for p in &mut s.preds {
            qualify_pred(p, schema, stack)?;
        }
        Ok(())
    })();
    stack.pop();
    result
}

fn qualify_pred(
    p: &mut SqlPred,
    schema: &Schema,
    stack: &mut Vec<Vec<SqlFromItem>>,
) -> Result<()> {
    match p {
        SqlPred::Cmp { left, right, .. } => {
            qualify_ref(left, schema, stack)?;
            if let Scalar::Col(c) = right {
                qualify_ref(c, schema, stack)?;
            }
            Ok(())
        }
        SqlPred::Not(inner) => qualify_pred(inner, schema, stack),
        SqlPred::And(ps) | SqlPred::Or(ps) => {
            for p in ps {
                qualify_pred(p, schema, stack)?;
            }
            Ok(())
        }
        SqlPred::Exists { sub, .. } => qualify_select(sub, schema, stack),
        SqlPred::In { cols, sub, .. } => {
            for c in cols {
                qualify_ref(c, schema, stack)?;
            }
            qualify_select(sub, schema, stack)
        }
        SqlPred::Quant { left, sub, .. } => {
            qualify_ref(left, schema, stack)?;
            qualify_select(sub, schema, stack)
        }
    }
}

fn qualify_ref(c: &mut ColRef, schema: &Schema, stack: &[Vec<SqlFromItem>]) -> Result<()> {
    let frames: Vec<&[SqlFromItem]> = stack.iter().map(|f| f.as_slice()).collect();
    let item = sql::resolve_column(&frames, schema, c)?;
    c.qualifier = Some(item.alias.clone());
    Ok(())
}

// --- phase B: subquery rewrites and flattening ------------------------------

fn collect_query_aliases(q: &SqlQuery, out: &mut BTreeSet<String>) {
    match q {
        SqlQuery::Select(s) => collect_select_aliases(s, out),
        SqlQuery::SentenceNot(p) => collect_pred_aliases(p, out),
        SqlQuery::SentenceExists { sub, .. } => collect_select_aliases(sub, out),
    }
}

fn collect_select_aliases(s: &SqlSelect, out: &mut BTreeSet<String>) {
    for item in &s.from {
        out.insert(item.alias.clone());
    }
    for p in &s.preds {
        collect_pred_aliases(p, out);
    }
}

fn collect_pred_aliases(p: &SqlPred, out: &mut BTreeSet<String>) {
    match p {
        SqlPred::Cmp { .. } => {}
        SqlPred::Not(inner) => collect_pred_aliases(inner, out),
        SqlPred::And(ps) | SqlPred::Or(ps) => ps.iter().for_each(|p| collect_pred_aliases(p, out)),
        SqlPred::Exists { sub, .. } | SqlPred::In { sub, .. } | SqlPred::Quant { sub, .. } => {
            collect_select_aliases(sub, out)
        }
    }
}

fn flatten_and(p: SqlPred) -> Vec<SqlPred> {
    match p {
        SqlPred::And(ps) => ps.into_iter().flat_map(flatten_and).collect(),
        p => vec![p],
    }
}

/// Rejoin a conjunct list into a single predicate.
fn conjoin(mut ps: Vec<SqlPred>) -> SqlPred {
    if ps.len() == 1 {
        ps.pop().unwrap()
    } else {
        SqlPred::And(ps)
    }
}

/// Expand a select list to explicit column references against the given
/// `FROM` list (`*` means every attribute of every listed table, in
/// order).
fn explicit_cols(cols: &SelectCols, from: &[SqlFromItem], schema: &Schema) -> Result<Vec<ColRef>> {
    match cols {
        SelectCols::Cols(cols) => Ok(cols.clone()),
        SelectCols::Star => {
            let mut out = Vec::new();
            for item in from {
                for attr in schema.attrs(&item.table)? {
                    out.push(ColRef::qualified(&item.alias, attr));
                }
            }
            Ok(out)
        }
    }
}

struct Block {
    from: Vec<SqlFromItem>,
    preds: Vec<SqlPred>,
}

fn rewrite_query(q: SqlQuery, schema: &Schema, used: &mut BTreeSet<String>) -> Result<SqlQuery> {
    match q {
        SqlQuery::Select(s) => {
            // Expand `*` before rewriting: flattening may grow the FROM
            // list, but the output columns are those of the original.
            let cols = explicit_cols(&s.cols, &s.from, schema)?;
            for (i, c) in cols.iter().enumerate() {
                if cols[..i].iter().any(|d| d.attr == c.attr) {
                    return Err(Error::Scope {
                        detail: format!(
                            "output column `{}` appears twice; output attribute names must be distinct",
                            c.attr
                        ),
                    });
                }
            }
            let b = rewrite_block(s.from, s.preds, schema, used)?;
            Ok(SqlQuery::Select(SqlSelect {
                cols: SelectCols::Cols(cols),
                from: b.from,
                preds: b.preds,
            }))
        }
        SqlQuery::SentenceNot(p) => {
            let b = rewrite_block(Vec::new(), flatten_and(*p), schema, used)?;
            if b.from.is_empty() {
                Ok(SqlQuery::SentenceNot(Box::new(conjoin(b.preds))))
            } else {
                // The negated group gained tables, so it is `NOT EXISTS`.
                Ok(SqlQuery::SentenceExists {
                    negated: true,
                    sub: Box::new(SqlSelect {
                        cols: SelectCols::Star,
                        from: b.from,
                        preds: b.preds,
                    }),
                })
            }
        }
        SqlQuery::SentenceExists { negated, sub } => {
            let mut sub = rewrite_select(*sub, schema, used)?;
            sub.cols = SelectCols::Star;
            Ok(SqlQuery::SentenceExists {
                negated,
                sub: Box::new(sub),
            })
        }
    }
}

fn rewrite_select(s: SqlSelect, schema: &Schema, used: &mut BTreeSet<String>) -> Result<SqlSelect> {
    let b = rewrite_block(s.from, s.preds, schema, used)?;
    Ok(SqlSelect {
        cols: s.cols,
        from: b.from,
        preds: b.preds,
    })
}

/// A rewritten conjunct: either a canonical predicate that stays in
/// place, or a positive subquery whose tables merge into the enclosing
/// `FROM`.
enum Rewritten {
    Plain(SqlPred),
    Merge(SqlSelect),
}

fn rewrite_block(
    from: Vec<SqlFromItem>,
    preds: Vec<SqlPred>,
    schema: &Schema,
    used: &mut BTreeSet<String>,
) -> Result<Block> {
    // Pass 1: rewrite every conjunct, deciding whether it stays a
    // predicate or dissolves into the FROM list.
    let mut items: Vec<Rewritten> = Vec::new();
    let mut queue: VecDeque<SqlPred> = preds.into();
    while let Some(p) = queue.pop_front() {
        match p {
            SqlPred::Cmp { .. } => items.push(Rewritten::Plain(p)),
            SqlPred::And(ps) => {
                for p in ps.into_iter().rev() {
                    queue.push_front(p);
                }
            }
            SqlPred::Or(_) => {
                return Err(Error::Unsupported {
                    detail: "canonicalization applies to OR-free queries; eliminate disjunction first"
                        .into(),
                })
            }
            SqlPred::Exists { negated, sub } => {
                let mut sub = rewrite_select(*sub, schema, used)?;
                sub.cols = SelectCols::Star;
                items.push(exists_item(negated, sub));
            }
            SqlPred::In { negated, cols, sub } => {
                // The subquery's column list is read against its original
                // FROM list: flattening inside the subquery must not
                // change what `*` meant.
                let targets = explicit_cols(&sub.cols, &sub.from, schema)?;
                let mut sub = rewrite_select(*sub, schema, used)?;
                sub.cols = SelectCols::Star;
                for (c1, c2) in cols.into_iter().zip(targets) {
                    sub.preds.push(SqlPred::Cmp {
                        left: c1,
                        op: CompOp::Eq,
                        right: Scalar::Col(c2),
                    });
                }
                items.push(exists_item(negated, sub));
            }
            SqlPred::Quant { left, op, all, sub } => {
                let targets = explicit_cols(&sub.cols, &sub.from, schema)?;
                let mut sub = rewrite_select(*sub, schema, used)?;
                sub.cols = SelectCols::Star;
                sub.preds.push(SqlPred::Cmp {
                    left,
                    op: if all { op.complement() } else { op },
                    right: Scalar::Col(targets.into_iter().next().expect("validated arity 1")),
                });
                items.push(exists_item(all, sub));
            }
            SqlPred::Not(inner) => {
                let b = rewrite_block(Vec::new(), flatten_and(*inner), schema, used)?;
                if !b.from.is_empty() {
                    // Positive quantifiers inside the group hoist into
                    // the group's own head: it becomes `NOT EXISTS`.
                    items.push(Rewritten::Plain(SqlPred::Exists {
                        negated: true,
                        sub: Box::new(SqlSelect {
                            cols: SelectCols::Star,
                            from: b.from,
                            preds: b.preds,
                        }),
                    }));
                } else if b.preds.len() == 1 {
                    items.push(Rewritten::Plain(match b.preds.into_iter().next().unwrap() {
                        SqlPred::Cmp { left, op, right } => SqlPred::Cmp {
                            left,
                            op: op.complement(),
                            right,
                        },
                        other => SqlPred::Not(Box::new(other)),
                    }));
                } else {
                    items.push(Rewritten::Plain(SqlPred::Not(Box::new(SqlPred::And(b.preds)))));
                }
            }
        }
    }

    // Pass 2: merge the positive subqueries in order. An incoming alias
    // is renamed when it would collide with the (growing) FROM list or
    // with any alias that stays nested at this level — those inside kept
    // predicates, or inside predicates of a sibling merge — since the
    // merged entry would otherwise be shadowed.
    let mut protected = BTreeSet::new();
    for item in &items {
        match item {
            Rewritten::Plain(p) => collect_pred_aliases(p, &mut protected),
            Rewritten::Merge(sub) => {
                for p in &sub.preds {
                    collect_pred_aliases(p, &mut protected);
                }
            }
        }
    }
    let mut block = Block {
        from,
        preds: Vec::new(),
    };
    for item in items {
        match item {
            Rewritten::Plain(p) => block.preds.push(p),
            Rewritten::Merge(mut sub) => {
                for item in &mut sub.from {
                    let collides = protected.contains(&item.alias)
                        || block.from.iter().any(|i| i.alias == item.alias);
                    if collides {
                        let fresh = fresh_name(&item.alias, used);
                        rename_alias(&mut sub.preds, &item.alias, &fresh);
                        item.alias = fresh;
                    }
                }
                block.from.extend(sub.from);
                block.preds.extend(sub.preds);
            }
        }
    }
    Ok(block)
}

fn exists_item(negated: bool, sub: SqlSelect) -> Rewritten {
    if negated {
        Rewritten::Plain(SqlPred::Exists {
            negated: true,
            sub: Box::new(sub),
        })
    } else {
        Rewritten::Merge(sub)
    }
}

/// Rewrite qualified references to alias `old` as `new` throughout a
/// predicate list, descending into subqueries (which, by the shadowing
/// rule, never redeclare `old`).
fn rename_alias(preds: &mut [SqlPred], old: &str, new: &str) {
    fn fix(c: &mut ColRef, old: &str, new: &str) {
        if c.qualifier.as_deref() == Some(old) {
            c.qualifier = Some(new.to_string());
        }
    }
    for p in preds {
        match p {
            SqlPred::Cmp { left, right, .. } => {
                fix(left, old, new);
                if let Scalar::Col(c) = right {
                    fix(c, old, new);
                }
            }
            SqlPred::Not(inner) => rename_alias(std::slice::from_mut(&mut **inner), old, new),
            SqlPred::And(ps) | SqlPred::Or(ps) => rename_alias(ps, old, new),
            SqlPred::Exists { sub, .. } => rename_alias(&mut sub.preds, old, new),
            SqlPred::In { cols, sub, .. } => {
                for c in cols {
                    fix(c, old, new);
                }
                rename_alias(&mut sub.preds, old, new);
            }
            SqlPred::Quant { left, sub, .. } => {
                fix(left, old, new);
                rename_alias(&mut sub.preds, old, new);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Normal forms for comparison up to renaming
// ---------------------------------------------------------------------------

/// Nth name from the pool `x, y, z, u, v, w, x2, y2, z2, ...`.
pub(crate) fn pool_name(i: usize) -> String {
    const POOL: [&str; 6] = ["x", "y", "z", "u", "v", "w"];
    let letter = POOL[i % POOL.len()];
    match i / POOL.len() {
        0 => letter.to_string(),
        k => format!("{letter}{}", k + 1),
    }
}

/// Rewrite a program into a normal form for comparison up to renaming:
/// rules in dependency order, the answer relation renamed `Q`, helper
/// relations renamed `I` (or `I1..In` when there are several) in rule
/// order, each body sorted (positive atoms by relation name, then
/// built-in comparisons in original order, then negated atoms by
/// relation name), and variables renamed `x, y, z, u, v, w, x2, ...` in
/// order of first occurrence in the sorted body. Programs that differ
/// only in rule order, literal order, or naming print identically
/// afterwards; the normal form is not a full isomorphism check.
pub fn normalize_datalog(p: &DatalogProgram) -> DatalogProgram {
    let ordered = datalog::topological_rules(p);
    let answer = p.answer().pred.clone();
    let helpers: Vec<String> = ordered
        .iter()
        .map(|r| r.head.pred.clone())
        .filter(|n| *n != answer)
        .collect();
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    names.insert(answer, "Q".to_string());
    for (i, h) in helpers.iter().enumerate() {
        let new = if helpers.len() == 1 {
            "I".to_string()
        } else {
            format!("I{}", i + 1)
        };
        names.insert(h.clone(), new);
    }
    let pred_name = |name: &str| names.get(name).cloned().unwrap_or_else(|| name.to_string());

    fn touch(v: &str, map: &mut BTreeMap<String, String>, named: &mut usize, anon: &mut usize) {
        if map.contains_key(v) {
            return;
        }
        let new = if v.starts_with('_') {
            *anon += 1;
            format!("_{anon}")
        } else {
            let n = pool_name(*named);
            *named += 1;
            n
        };
        map.insert(v.to_string(), new);
    }

    let mut rules = Vec::new();
    for rule in ordered {
        let mut body = rule.body.clone();
        body.sort_by_key(|lit| match lit {
            Literal::Pos(a) => (0u8, pred_name(&a.pred)),
            Literal::Cmp { .. } => (1, String::new()),
            Literal::Neg(a) => (2, pred_name(&a.pred)),
        });
        let mut map = BTreeMap::new();
        let (mut named, mut anon) = (0, 0);
        for lit in &body {
            match lit {
                Literal::Pos(a) | Literal::Neg(a) => {
                    for v in &a.vars {
                        touch(v, &mut map, &mut named, &mut anon);
                    }
                }
                Literal::Cmp { left, right, .. } => {
                    for t in [left, right] {
                        if let Term::Var(v) = t {
                            touch(v, &mut map, &mut named, &mut anon);
                        }
                    }
                }
            }
        }
        let var = |v: &String| map.get(v).cloned().unwrap_or_else(|| v.clone());
        let atom = |a: &Atom| Atom {
            pred: pred_name(&a.pred),
            vars: a.vars.iter().map(var).collect(),
        };
        let term = |t: &Term| match t {
            Term::Var(v) => Term::Var(var(v)),
            c => c.clone(),
        };
        rules.push(Rule {
            head: atom(&rule.head),
            body: body
                .iter()
                .map(|lit| match lit {
                    Literal::Pos(a) => Literal::Pos(atom(a)),
                    Literal::Neg(a) => Literal::Neg(atom(a)),
                    Literal::Cmp { left, op, right } => Literal::Cmp {
                        left: term(left),
                        op: *op,
                        right: term(right),
                    },
                })
                .collect(),
        });
    }
    DatalogProgram { rules }
}

/// Rewrite a canonical TRC query into a normal form for comparison up
/// to renaming: the output relation renamed `Q`, variables renamed
/// `v1, v2, ...` in declaration order (root scope first, then
/// depth-first through negations), every predicate oriented
/// deterministically (output references on the left; otherwise the
/// smaller renamed side on the left, flipping the operator), and each
/// scope's predicates sorted with output bindings first. Sibling
/// negations keep their order, so the normal form is not a full
/// isomorphism check.
pub fn normalize_trc(q: &TrcQuery) -> TrcQuery {
    use crate::ast::trc::{AttrRef, OutputSpec, TrcPred};

    fn ref_key(r: &AttrRef) -> (usize, String, usize, String) {
        (r.var.len(), r.var.clone(), r.attr.len(), r.attr.clone())
    }

    fn walk(
        scope: &TrcScope,
        counter: &mut usize,
        env: &mut Vec<(String, String)>,
        out_name: Option<&str>,
    ) -> TrcScope {
        let depth = env.len();
        let mut vars = Vec::new();
        for v in &scope.vars {
            *counter += 1;
            let new = format!("v{counter}");
            env.push((v.name.clone(), new.clone()));
            vars.push(TrcVar::new(&new, &v.relation));
        }
        let fix = |r: &AttrRef, env: &[(String, String)]| {
            if out_name == Some(r.var.as_str()) {
                return AttrRef::new("Q", &r.attr);
            }
            let var = env
                .iter()
                .rev()
                .find(|(old, _)| *old == r.var)
                .map(|(_, new)| new.clone())
                .unwrap_or_else(|| r.var.clone());
            AttrRef { var, attr: r.attr.clone() }
        };
        let mut preds: Vec<TrcPred> = scope
            .preds
            .iter()
            .map(|p| match p {
                TrcPred::Join { left, op, right } => {
                    let (mut l, mut r, mut o) = (fix(left, env), fix(right, env), *op);
                    let swap = if r.var == "Q" && l.var != "Q" {
                        true
                    } else if l.var == "Q" {
                        false
                    } else {
                        ref_key(&r) < ref_key(&l)
                    };
                    if swap {
                        std::mem::swap(&mut l, &mut r);
                        o = o.flip();
                    }
                    TrcPred::Join { left: l, op: o, right: r }
                }
                TrcPred::Sel { left, op, value } => TrcPred::Sel {
                    left: fix(left, env),
                    op: *op,
                    value: value.clone(),
                },
            })
            .collect();
        preds.sort_by_key(|p| {
            let rank = match p {
                TrcPred::Join { left, .. } | TrcPred::Sel { left, .. } if left.var == "Q" => 0u8,
                _ => 1,
            };
            (rank, p.to_string())
        });
        let negations = scope
            .negations
            .iter()
            .map(|n| walk(n, counter, env, out_name))
            .collect();
        env.truncate(depth);
        TrcScope { vars, preds, negations }
    }

    let out_name = q.output.as_ref().map(|o| o.name.clone());
    let root = walk(&q.root, &mut 0, &mut Vec::new(), out_name.as_deref());
    TrcQuery {
        output: q.output.as_ref().map(|o| OutputSpec {
            name: "Q".to_string(),
            attrs: o.attrs.clone(),
        }),
        root,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{
        parse_datalog, parse_sql, parse_trc, parse_trc_full, print_datalog, print_sql, print_trc,
    };

    fn schema() -> Schema {
        let mut s = Schema::new();
        s.add_relation("R", &["A", "B"]).unwrap();
        s.add_relation("S", &["B"]).unwrap();
        s
    }

    // --- anchoring ---------------------------------------------------------

    #[test]
    fn negated_comparison_inside_empty_head_is_a_violation() {
        let q = parse_trc("not exists r in R [ not ( r.A = 0 ) ]", &schema()).unwrap();
        let v = check_anchored(&q);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].scope_path, vec![0, 0]);
        assert_eq!(v[0].predicate, "r.A = 0");
    }

    #[test]
    fn complemented_comparison_in_own_scope_is_anchored() {
        let q = parse_trc("not exists r in R [ r.A != 0 ]", &schema()).unwrap();
        assert!(check_anchored(&q).is_empty());
    }

    #[test]
    fn hidden_disjunction_is_a_violation() {
        let q = parse_trc(
            "{ q(A) | exists r in R [ q.A = r.A and not exists s in S [ r.A = 0 and s.B = r.B ] ] }",
            &schema(),
        )
        .unwrap();
        let v = check_anchored(&q);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].scope_path, vec![0]);
        assert_eq!(v[0].predicate, "r.A = 0");
    }

    #[test]
    fn output_bindings_are_anchored_through_the_table_side() {
        let q = parse_trc("{ q(A) | exists r in R [ q.A = r.A ] }", &schema()).unwrap();
        assert!(check_anchored(&q).is_empty());
    }

    // --- quantifier pull-up --------------------------------------------------

    #[test]
    fn pullup_hoists_nested_exists_into_the_negated_head() {
        let q = parse_trc_full(
            "not exists r in R [ r.A = 0 and exists s in S [ s.B = r.B ] ]",
            &schema(),
        )
        .unwrap();
        let pulled = trc_pullup(&q).unwrap();
        assert_eq!(
            print_trc(&pulled),
            "not exists r in R, s in S [\n  r.A = 0\n  and s.B = r.B\n]\n"
        );
    }

    #[test]
    fn pullup_is_a_fixpoint_on_canonical_queries() {
        let text = "{ q(A) |\n  exists r in R [\n    q.A = r.A\n    and not exists s in S [\n      s.B = r.B\n    ]\n  ]\n}\n";
        let full = parse_trc_full(text, &schema()).unwrap();
        let pulled = trc_pullup(&full).unwrap();
        assert_eq!(pulled, parse_trc(text, &schema()).unwrap());
    }

    #[test]
    fn pullup_preserves_double_negation() {
        let text = "{ q(A) | exists r in R [ q.A = r.A and not ( not exists s in S [ s.B = r.B ] ) ] }";
        let pulled = trc_pullup(&parse_trc_full(text, &schema()).unwrap()).unwrap();
        assert_eq!(pulled, parse_trc(text, &schema()).unwrap());
        assert_eq!(pulled.root.negations[0].vars.len(), 0);
    }

    #[test]
    fn pullup_renames_colliding_siblings_apart() {
        let q = parse_trc_full(
            "{ q(A) | exists r in R [ q.A = r.A and exists s in S [ s.B = r.B ] and exists s in S [ s.B = r.A ] ] }",
            &schema(),
        )
        .unwrap();
        let pulled = trc_pullup(&q).unwrap();
        assert_eq!(
            print_trc(&pulled),
            "{ q(A) |\n  exists r in R, s in S, s2 in S [\n    q.A = r.A\n    and s.B = r.B\n    and s2.B = r.A\n  ]\n}\n"
        );
        crate::ast::trc::validate(&pulled, &schema()).unwrap();
    }

    #[test]
    fn pullup_rejects_disjunction() {
        let q = parse_trc_full(
            "{ q(A) | exists r in R [ q.A = r.A and ( r.A = 0 or r.A = 1 ) ] }",
            &schema(),
        )
        .unwrap();
        let err = trc_pullup(&q).unwrap_err();
        assert!(matches!(err, Error::Unsupported { .. }), "{err}");
    }

    // --- SQL canonicalization -----------------------------------------------

    fn canon(text: &str) -> SqlQuery {
        sql_canonicalize(&parse_sql(text, &schema()).unwrap(), &schema()).unwrap()
    }

    #[test]
    fn positive_in_flattens_into_the_outer_from() {
        let c = canon("SELECT DISTINCT R.A FROM R WHERE R.B IN (SELECT S.B FROM S)");
        assert_eq!(print_sql(&c), "SELECT DISTINCT R.A\nFROM R, S\nWHERE R.B = S.B\n");
    }

    #[test]
    fn negated_in_becomes_not_exists_with_appended_equality() {
        let c = canon("SELECT DISTINCT R.A FROM R WHERE R.B NOT IN (SELECT S.B FROM S)");
        assert_eq!(
            print_sql(&c),
            "SELECT DISTINCT R.A\nFROM R\nWHERE NOT EXISTS\n  (SELECT *\n  FROM S\n  WHERE R.B = S.B)\n"
        );
    }

    #[test]
    fn all_becomes_not_exists_with_complemented_operator() {
        let c = canon("SELECT DISTINCT R.A FROM R WHERE R.B >= ALL (SELECT S.B FROM S)");
        assert_eq!(
            print_sql(&c),
            "SELECT DISTINCT R.A\nFROM R\nWHERE NOT EXISTS\n  (SELECT *\n  FROM S\n  WHERE R.B < S.B)\n"
        );
    }

    #[test]
    fn any_becomes_exists_and_flattens() {
        let c = canon("SELECT DISTINCT R.A FROM R WHERE R.B = ANY (SELECT S.B FROM S)");
        assert_eq!(print_sql(&c), "SELECT DISTINCT R.A\nFROM R, S\nWHERE R.B = S.B\n");
    }

    #[test]
    fn canonical_queries_are_fixpoints() {
        let text =
            "SELECT DISTINCT R.A\nFROM R\nWHERE NOT EXISTS\n  (SELECT *\n  FROM S\n  WHERE R.B = S.B)\n";
        let q = parse_sql(text, &schema()).unwrap();
        let c = sql_canonicalize(&q, &schema()).unwrap();
        assert_eq!(c, q);
    }

    #[test]
    fn bare_columns_are_qualified() {
        let c = canon("SELECT DISTINCT A FROM R WHERE B IN (SELECT B FROM S)");
        assert_eq!(print_sql(&c), "SELECT DISTINCT R.A\nFROM R, S\nWHERE R.B = S.B\n");
    }

    #[test]
    fn row_value_in_appends_one_equality_per_column() {
        let c = canon("SELECT DISTINCT R.A FROM R WHERE (R.A, R.B) IN (SELECT * FROM R AS R2)");
        assert_eq!(
            print_sql(&c),
            "SELECT DISTINCT R.A\nFROM R, R AS R2\nWHERE R.A = R2.A\nAND R.B = R2.B\n"
        );
    }

    #[test]
    fn colliding_aliases_are_renamed_apart_when_flattening() {
        let c = canon(
            "SELECT DISTINCT R.A FROM R WHERE EXISTS (SELECT * FROM S AS s WHERE s.B = R.B) \
             AND EXISTS (SELECT * FROM S AS s WHERE s.B = R.B)",
        );
        assert_eq!(
            print_sql(&c),
            "SELECT DISTINCT R.A\nFROM R, S AS s, S AS s2\nWHERE s.B = R.B\nAND s2.B = R.B\n"
        );
    }

    #[test]
    fn merged_alias_avoids_names_used_by_sibling_subqueries() {
        // The NOT EXISTS keeps its own alias `s`; the flattened positive
        // EXISTS must not introduce an outer `s` that the inner one would
        // shadow.
        let c = canon(
            "SELECT DISTINCT R.A FROM R WHERE NOT EXISTS (SELECT * FROM S AS s WHERE s.B = R.B) \
             AND EXISTS (SELECT * FROM S AS s WHERE s.B = R.A)",
        );
        assert_eq!(
            print_sql(&c),
            "SELECT DISTINCT R.A\nFROM R, S AS s2\nWHERE NOT EXISTS\n  (SELECT *\n  FROM S AS s\n  WHERE s.B = R.B)\nAND s2.B = R.A\n"
        );
        sql::validate(&c, &schema()).unwrap();
    }

    #[test]
    fn not_group_with_tables_becomes_not_exists() {
        // The positive EXISTS hoists into the group's own head. The extra
        // conjunct `R.A = 1` lands inside the new scope where it is not
        // anchored — this NOT group is a hidden disjunction, so the full
        // canonicalization reports it, while the rewrite half shows the
        // merged shape.
        let q = parse_sql(
            "SELECT DISTINCT R.A FROM R WHERE NOT (EXISTS (SELECT * FROM S WHERE S.B = R.B) AND R.A = 1)",
            &schema(),
        )
        .unwrap();
        let rewritten = sql_canonical_rewrite(&q, &schema()).unwrap();
        assert_eq!(
            print_sql(&rewritten),
            "SELECT DISTINCT R.A\nFROM R\nWHERE NOT EXISTS\n  (SELECT *\n  FROM S\n  WHERE S.B = R.B\n  AND R.A = 1)\n"
        );
        let err = sql_canonicalize(&q, &schema()).unwrap_err();
        match err {
            Error::Anchoring(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].predicate, "R.A = 1");
            }
            other => panic!("expected an anchoring error, got {other}"),
        }
    }

    #[test]
    fn not_over_a_comparison_complements_it() {
        let c = canon("SELECT DISTINCT R.A FROM R WHERE NOT (R.A = 1)");
        assert_eq!(print_sql(&c), "SELECT DISTINCT R.A\nFROM R\nWHERE R.A != 1\n");
    }

    #[test]
    fn double_negation_is_preserved() {
        let text = "SELECT DISTINCT R.A\nFROM R\nWHERE NOT (NOT EXISTS\n  (SELECT *\n  FROM S\n  WHERE S.B = R.B))\n";
        let q = parse_sql(text, &schema()).unwrap();
        let c = sql_canonicalize(&q, &schema()).unwrap();
        assert_eq!(c, q);
    }

    #[test]
    fn canonicalization_preserves_the_extensional_table_multiset() {
        let texts = [
            "SELECT DISTINCT R.A FROM R WHERE R.B IN (SELECT S.B FROM S)",
            "SELECT DISTINCT R.A FROM R WHERE R.B >= ALL (SELECT S.B FROM S)",
            "SELECT DISTINCT R.A FROM R WHERE (R.A, R.B) IN (SELECT * FROM R AS R2)",
            "SELECT DISTINCT R.A FROM R WHERE EXISTS (SELECT * FROM S AS s WHERE s.B = R.B) \
             AND EXISTS (SELECT * FROM S AS s WHERE s.B = R.B)",
        ];
        for text in texts {
            let q = parse_sql(text, &schema()).unwrap();
            let c = sql_canonicalize(&q, &schema()).unwrap();
            let mut before = sql::extensional_tables(&q);
            let mut after = sql::extensional_tables(&c);
            before.sort();
            after.sort();
            assert_eq!(before, after, "{text}");
        }
    }

    #[test]
    fn hidden_disjunction_in_sql_fails_the_anchoring_check() {
        let q = parse_sql(
            "SELECT DISTINCT R.A FROM R WHERE NOT EXISTS (SELECT * FROM S WHERE R.A = 0 AND S.B = R.B)",
            &schema(),
        )
        .unwrap();
        let err = sql_canonicalize(&q, &schema()).unwrap_err();
        match err {
            Error::Anchoring(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].predicate, "R.A = 0");
            }
            other => panic!("expected an anchoring error, got {other}"),
        }
    }

    #[test]
    fn sentence_forms_canonicalize() {
        let c = canon("SELECT NOT EXISTS (SELECT * FROM R WHERE R.A = 1)");
        assert_eq!(
            print_sql(&c),
            "SELECT NOT EXISTS\n  (SELECT *\n  FROM R\n  WHERE R.A = 1)\n"
        );
        let c = canon("SELECT NOT (EXISTS (SELECT * FROM R WHERE R.A = 1))");
        assert_eq!(
            print_sql(&c),
            "SELECT NOT EXISTS\n  (SELECT *\n  FROM R\n  WHERE R.A = 1)\n"
        );
    }

    #[test]
    fn normalize_datalog_identifies_programs_that_differ_only_in_naming() {
        let schema = schema();
        let a = parse_datalog(
            "I(x) :- R(x, _), S(y), not R(x, y).\nQ(x) :- R(x, _), not I(x).",
            &schema,
        )
        .unwrap();
        let b = parse_datalog(
            "H(a) :- S(b), not R(a, b), R(a, _).\nAns(c) :- not H(c), R(c, _).",
            &schema,
        )
        .unwrap();
        let want = "I(x) :- R(x, _), S(y), not R(x, y).\nQ(x) :- R(x, _), not I(x).\n";
        assert_eq!(print_datalog(&normalize_datalog(&a)), want);
        assert_eq!(print_datalog(&normalize_datalog(&b)), want);
    }

    #[test]
    fn normalize_datalog_orders_rules_and_numbers_helpers() {
        let mut schema = schema();
        schema.add_relation("T", &["A"]).unwrap();
        let a = parse_datalog(
            "P1(x) :- T(x), not P2(x).\nP2(y) :- T(y), y = 1.\nQ(z) :- T(z), not P1(z).",
            &schema,
        )
        .unwrap();
        assert_eq!(
            print_datalog(&normalize_datalog(&a)),
            "I1(x) :- T(x), x = 1.\nI2(x) :- T(x), not I1(x).\nQ(x) :- T(x), not I2(x).\n"
        );
    }

    #[test]
    fn normalize_trc_identifies_queries_that_differ_only_in_naming() {
        let schema = schema();
        let a = parse_trc(
            "{ Q(A) | exists r in R [ Q.A = r.A and not exists s in S, r2 in R [ r2.A = r.A and \
             not exists r3 in R [ r3.B = s.B and r3.A = r2.A ] ] ] }",
            &schema,
        )
        .unwrap();
        let b = parse_trc(
            "{ Out(A) | exists u in R [ u.A = Out.A and not exists v in S, w in R [ u.A = w.A and \
             not exists z in R [ v.B = z.B and z.A = w.A ] ] ] }",
            &schema,
        )
        .unwrap();
        let na = print_trc(&normalize_trc(&a));
        let nb = print_trc(&normalize_trc(&b));
        assert_eq!(na, nb);
        assert!(na.starts_with("{ Q(A) |\n  exists v1 in R [\n    Q.A = v1.A\n"), "{na}");
    }

    #[test]
    fn normalize_trc_orients_and_sorts_predicates() {
        let schema = schema();
        let a = parse_trc(
            "{ Q(A) | exists r in R, s in S [ r.B = s.B and Q.A = r.A and r.A >= 1 ] }",
            &schema,
        )
        .unwrap();
        let b = parse_trc(
            "{ X(A) | exists c in R, d in S [ c.A >= 1 and d.B = c.B and c.A = X.A ] }",
            &schema,
        )
        .unwrap();
        assert_eq!(print_trc(&normalize_trc(&a)), print_trc(&normalize_trc(&b)));
    }
}
