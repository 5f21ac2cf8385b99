//! Cross-language translation between the four fragments.
//!
//! Canonical TRC is the hub: SQL reaches it through canonicalization
//! followed by a structural one-to-one map (`SELECT DISTINCT` ↔ output
//! spec, `FROM` ↔ quantifier lists, `NOT EXISTS` ↔ negated scopes,
//! predicates verbatim), and the map runs in both directions. Datalog
//! sits one step from TRC in either direction ([`trc_to_datalog`],
//! [`datalog_to_trc`]), RA one step from Datalog ([`ra_to_datalog`],
//! [`datalog_to_ra`]), and [`translate_query`] routes any language to
//! any other along those edges. Full-mode queries with disjunction
//! enter through [`sql_to_trc_full`] and are split into canonical
//! cells by [`eliminate_disjunction`].

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::datalog::{self, Atom, DatalogProgram, Literal, Rule, Term};
use crate::ast::ra::{self, RaColumn, RaExpr, RaPred};
use crate::ast::sql::{self, Scalar, SelectCols, SqlFromItem, SqlPred, SqlQuery, SqlSelect, SqlUnion};
use crate::ast::trc::{
    self, AttrRef, Formula, OutputSpec, TrcFullQuery, TrcFullScope, TrcPred, TrcQuery, TrcScope,
    TrcVar,
};
use crate::ast::{ColRef, Lang, LangQuery};
use crate::error::{Error, Result};
use crate::model::{CompOp, Schema, Value};

fn non_canonical(found: &str) -> Error {
    Error::Unsupported {
        detail: format!("translation expects canonical SQL (run sql_canonicalize first); found {found}"),
    }
}

// ---------------------------------------------------------------------------
// SQL -> TRC
// ---------------------------------------------------------------------------

/// Translate a fragment-mode SQL query to canonical TRC.
///
/// The input is canonicalized first, so any fragment-mode query is
/// accepted; hidden disjunctions surface as anchoring errors. The output
/// relation is named `Q` (or `Q<k>` if some alias already uses the
/// name), and table variables take the names of the SQL aliases.
pub fn sql_to_trc(q: &SqlQuery, schema: &Schema) -> Result<TrcQuery> {
    let c = crate::canon::sql_canonical_rewrite(q, schema)?;
    let t = sql_structural_to_trc(&c, schema)?;
    trc::validate(&t, schema)?;
    let violations = crate::canon::check_anchored(&t);
    if violations.is_empty() {
        Ok(t)
    } else {
        Err(Error::Anchoring(violations))
    }
}

/// The structural half of [`sql_to_trc`]: maps an already-canonical
/// query (all references qualified, `NOT EXISTS` the only subquery
/// construct) without re-canonicalizing or checking anchoring.
pub(crate) fn sql_structural_to_trc(q: &SqlQuery, schema: &Schema) -> Result<TrcQuery> {
    match q {
        SqlQuery::Select(s) => {
            let cols = match &s.cols {
                SelectCols::Cols(cols) => cols.clone(),
                SelectCols::Star => {
                    let mut out = Vec::new();
                    for item in &s.from {
                        for attr in schema.attrs(&item.table)? {
                            out.push(ColRef::qualified(&item.alias, attr));
                        }
                    }
                    out
                }
            };
            let name = output_name(q);
            let mut root = scope_of_select(s)?;
            let mut bindings = Vec::with_capacity(cols.len());
            for c in &cols {
                let Some(qual) = &c.qualifier else {
                    return Err(non_canonical("an unqualified output column"));
                };
                bindings.push(TrcPred::Join {
                    left: AttrRef::new(&name, &c.attr),
                    op: CompOp::Eq,
                    right: AttrRef::new(qual, &c.attr),
                });
            }
            root.preds.splice(0..0, bindings);
            Ok(TrcQuery {
                output: Some(OutputSpec {
                    name,
                    attrs: cols.into_iter().map(|c| c.attr).collect(),
                }),
                root,
            })
        }
        SqlQuery::SentenceExists { negated: false, sub } => Ok(TrcQuery {
            output: None,
            root: scope_of_select(sub)?,
        }),
        SqlQuery::SentenceExists { negated: true, sub } => Ok(TrcQuery {
            output: None,
            root: TrcScope {
                negations: vec![scope_of_select(sub)?],
                ..Default::default()
            },
        }),
        SqlQuery::SentenceNot(p) => Ok(TrcQuery {
            output: None,
            root: TrcScope {
                negations: vec![scope_of_group(p)?],
                ..Default::default()
            },
        }),
    }
}

/// A name for the output relation that no alias shadows: `Q`, else `Q2`,
/// `Q3`, ...
fn output_name(q: &SqlQuery) -> String {
    let mut aliases = BTreeSet::new();
    collect_aliases(q, &mut aliases);
    if !aliases.contains("Q") {
        return "Q".to_string();
    }
    let mut k = 2usize;
    loop {
        let name = format!("Q{k}");
        if !aliases.contains(&name) {
            return name;
        }
        k += 1;
    }
}

fn collect_aliases(q: &SqlQuery, out: &mut BTreeSet<String>) {
    fn select(s: &SqlSelect, out: &mut BTreeSet<String>) {
        for item in &s.from {
            out.insert(item.alias.clone());
        }
        s.preds.iter().for_each(|p| pred(p, out));
    }
    fn pred(p: &SqlPred, out: &mut BTreeSet<String>) {
        match p {
            SqlPred::Cmp { .. } => {}
            SqlPred::Not(inner) => pred(inner, out),
            SqlPred::And(ps) | SqlPred::Or(ps) => ps.iter().for_each(|p| pred(p, out)),
            SqlPred::Exists { sub, .. } | SqlPred::In { sub, .. } | SqlPred::Quant { sub, .. } => {
                select(sub, out)
            }
        }
    }
    match q {
        SqlQuery::Select(s) => select(s, out),
        SqlQuery::SentenceNot(p) => pred(p, out),
        SqlQuery::SentenceExists { sub, .. } => select(sub, out),
    }
}

fn scope_of_select(s: &SqlSelect) -> Result<TrcScope> {
    let mut scope = TrcScope {
        vars: s
            .from
            .iter()
            .map(|i| TrcVar::new(&i.alias, &i.table))
            .collect(),
        ..Default::default()
    };
    for p in &s.preds {
        add_pred(&mut scope, p)?;
    }
    Ok(scope)
}

/// A `NOT (...)` group maps to an empty-head scope holding the group's
/// conjuncts.
fn scope_of_group(p: &SqlPred) -> Result<TrcScope> {
    let mut scope = TrcScope::default();
    add_pred(&mut scope, p)?;
    Ok(scope)
}

fn add_pred(scope: &mut TrcScope, p: &SqlPred) -> Result<()> {
    match p {
        SqlPred::Cmp { left, op, right } => {
            let left = attr_ref(left)?;
            scope.preds.push(match right {
                Scalar::Col(c) => TrcPred::Join {
                    left,
                    op: *op,
                    right: attr_ref(c)?,
                },
                Scalar::Val(v) => TrcPred::Sel {
                    left,
                    op: *op,
                    value: v.clone(),
                },
            });
            Ok(())
        }
        SqlPred::And(ps) => {
            for p in ps {
                add_pred(scope, p)?;
            }
            Ok(())
        }
        SqlPred::Exists { negated: true, sub } => {
            scope.negations.push(scope_of_select(sub)?);
            Ok(())
        }
        SqlPred::Not(inner) => {
            scope.negations.push(scope_of_group(inner)?);
            Ok(())
        }
        SqlPred::Exists { negated: false, .. } => Err(non_canonical("a positive EXISTS subquery")),
        SqlPred::In { .. } => Err(non_canonical("an IN subquery")),
        SqlPred::Quant { .. } => Err(non_canonical("an ALL/ANY subquery")),
        SqlPred::Or(_) => Err(non_canonical("a disjunction")),
    }
}

fn attr_ref(c: &ColRef) -> Result<AttrRef> {
    match &c.qualifier {
        Some(q) => Ok(AttrRef::new(q, &c.attr)),
        None => Err(non_canonical("an unqualified column reference")),
    }
}

// ---------------------------------------------------------------------------
// TRC -> SQL
// ---------------------------------------------------------------------------

/// Translate a canonical TRC query to canonical SQL.
///
/// The map is the inverse of the structural half of [`sql_to_trc`]:
/// output bindings become the `SELECT DISTINCT` list, quantifier lists
/// become `FROM` clauses (variable names as aliases), negated scopes
/// become `NOT EXISTS` (or `NOT (...)` when the scope head is empty).
/// Sentences must either quantify tables at the root or consist of a
/// single root negation; other root shapes have no SQL sentence form.
pub fn trc_to_sql(q: &TrcQuery, schema: &Schema) -> Result<SqlQuery> {
    trc::validate(q, schema)?;
    match &q.output {
        Some(out) => {
            // Split the root predicates into output bindings (consumed by
            // the select list) and the rest.
            let mut cols: Vec<Option<ColRef>> = vec![None; out.attrs.len()];
            let mut rest = Vec::new();
            for p in &q.root.preds {
                if let TrcPred::Join { left, right, .. } = p {
                    let (out_side, other) = if left.var == out.name {
                        (Some(left), right)
                    } else if right.var == out.name {
                        (Some(right), left)
                    } else {
                        (None, left)
                    };
                    if let Some(out_ref) = out_side {
                        let i = out.attrs.iter().position(|a| a == &out_ref.attr).unwrap();
                        cols[i] = Some(ColRef::qualified(&other.var, &other.attr));
                        continue;
                    }
                }
                rest.push(map_pred(p));
            }
            let cols: Vec<ColRef> = cols
                .into_iter()
                .map(|c| c.expect("validation guarantees one binding per output attribute"))
                .collect();
            let mut select = select_of_scope(&q.root)?;
            select.cols = SelectCols::Cols(cols);
            select.preds = rest;
            for child in &q.root.negations {
                select.preds.push(map_negation(child)?);
            }
            Ok(SqlQuery::Select(select))
        }
        None => {
            if !q.root.vars.is_empty() {
                return Ok(SqlQuery::SentenceExists {
                    negated: false,
                    sub: Box::new(full_select_of_scope(&q.root)?),
                });
            }
            if q.root.preds.is_empty() && q.root.negations.len() == 1 {
                let child = &q.root.negations[0];
                if child.vars.is_empty() {
                    return Ok(SqlQuery::SentenceNot(Box::new(group_of_scope(child)?)));
                }
                return Ok(SqlQuery::SentenceExists {
                    negated: true,
                    sub: Box::new(full_select_of_scope(child)?),
                });
            }
            Err(Error::Unsupported {
                detail: "this sentence has no SQL form: the root must either quantify tables or \
                         consist of a single negation"
                    .into(),
            })
        }
    }
}

/// The scope's head and predicates as a select block, negations included.
fn full_select_of_scope(s: &TrcScope) -> Result<SqlSelect> {
    let mut select = select_of_scope(s)?;
    for child in &s.negations {
        select.preds.push(map_negation(child)?);
    }
    Ok(select)
}

/// Head and plain predicates only; the caller appends negations (the
/// main query needs to interleave binding removal).
fn select_of_scope(s: &TrcScope) -> Result<SqlSelect> {
    Ok(SqlSelect {
        cols: SelectCols::Star,
        from: s
            .vars
            .iter()
            .map(|v| SqlFromItem::aliased(&v.relation, &v.name))
            .collect(),
        preds: s.preds.iter().map(map_pred).collect(),
    })
}

fn map_negation(child: &TrcScope) -> Result<SqlPred> {
    if child.vars.is_empty() {
        Ok(SqlPred::Not(Box::new(group_of_scope(child)?)))
    } else {
        Ok(SqlPred::Exists {
            negated: true,
            sub: Box::new(full_select_of_scope(child)?),
        })
    }
}

/// An empty-head scope as a predicate group (the body of `NOT (...)`).
fn group_of_scope(s: &TrcScope) -> Result<SqlPred> {
    let mut items: Vec<SqlPred> = s.preds.iter().map(map_pred).collect();
    for child in &s.negations {
        items.push(map_negation(child)?);
    }
    match items.len() {
        0 => Err(Error::Unsupported {
            detail: "an empty negation has no SQL form".into(),
        }),
        1 => Ok(items.pop().unwrap()),
        _ => Ok(SqlPred::And(items)),
    }
}

fn map_pred(p: &TrcPred) -> SqlPred {
    match p {
        TrcPred::Join { left, op, right } => SqlPred::Cmp {
            left: ColRef::qualified(&left.var, &left.attr),
            op: *op,
            right: Scalar::Col(ColRef::qualified(&right.var, &right.attr)),
        },
        TrcPred::Sel { left, op, value } => SqlPred::Cmp {
            left: ColRef::qualified(&left.var, &left.attr),
            op: *op,
            right: Scalar::Val(value.clone()),
        },
    }
}

// ---------------------------------------------------------------------------
// Shared naming helpers
// ---------------------------------------------------------------------------

/// Claim `base` if free, otherwise `<base><k>` for the smallest unused
/// `k >= 2`.
fn fresh_var(base: &str, used: &mut BTreeSet<String>) -> String {
    if used.insert(base.to_string()) {
        return base.to_string();
    }
    let mut k = 2usize;
    loop {
        let candidate = format!("{base}{k}");
        if used.insert(candidate.clone()) {
            return candidate;
        }
        k += 1;
    }
}

/// The alphabetic stem of a variable name: `r` and `r2` share the stem
/// `r`, so renamed copies continue the same series (`r3`, `r4`, ...).
fn stem(name: &str) -> &str {
    let trimmed = name.trim_end_matches(|c: char| c.is_ascii_digit());
    if trimmed.is_empty() {
        name
    } else {
        trimmed
    }
}

fn collect_trc_names(q: &TrcQuery, used: &mut BTreeSet<String>) {
    q.visit_scopes(&mut |s, _| used.extend(s.vars.iter().map(|v| v.name.clone())));
    if let Some(out) = &q.output {
        used.insert(out.name.clone());
    }
}

fn collect_full_names(s: &TrcFullScope, used: &mut BTreeSet<String>) {
    fn formula(f: &Formula, used: &mut BTreeSet<String>) {
        match f {
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| formula(f, used)),
            Formula::Pred(_) => {}
            Formula::Not(s) | Formula::Exists(s) => collect_full_names(s, used),
        }
    }
    used.extend(s.vars.iter().map(|v| v.name.clone()));
    formula(&s.formula, used);
}

// ---------------------------------------------------------------------------
// Full-mode SQL -> full TRC
// ---------------------------------------------------------------------------

/// Translate a full-mode SQL query to full TRC, preserving disjunction:
/// `OR` maps to a disjunction node, positive `EXISTS`/`IN`/`ANY` map to
/// mid-formula quantifiers, `ALL` maps to a negated quantifier over the
/// complemented comparison, and `NOT (...)` maps to a negation with an
/// empty head. The result is the natural input to
/// [`eliminate_disjunction`].
pub fn sql_to_trc_full(q: &SqlQuery, schema: &Schema) -> Result<TrcFullQuery> {
    sql::validate(q, schema)?;
    let mut stack: Vec<&[SqlFromItem]> = Vec::new();
    match q {
        SqlQuery::Select(s) => {
            let name = output_name(q);
            stack.push(&s.from);
            let cols = match &s.cols {
                SelectCols::Cols(cols) => cols.clone(),
                SelectCols::Star => {
                    let mut out = Vec::new();
                    for item in &s.from {
                        for attr in schema.attrs(&item.table)? {
                            out.push(ColRef::qualified(&item.alias, attr));
                        }
                    }
                    out
                }
            };
            let mut items = Vec::with_capacity(cols.len());
            let mut attrs = Vec::with_capacity(cols.len());
            for c in &cols {
                let item = sql::resolve_column(&stack, schema, c)?;
                items.push(Formula::Pred(TrcPred::Join {
                    left: AttrRef::new(&name, &c.attr),
                    op: CompOp::Eq,
                    right: AttrRef::new(&item.alias, &c.attr),
                }));
                attrs.push(c.attr.clone());
            }
            stack.pop();
            let scope = full_scope_of_select(s, &mut stack, schema)?;
            items.extend(scope.formula.conjuncts());
            Ok(TrcFullQuery {
                output: Some(OutputSpec { name, attrs }),
                root: TrcFullScope {
                    vars: scope.vars,
                    formula: Formula::and(items),
                },
            })
        }
        SqlQuery::SentenceExists { negated, sub } => {
            let scope = full_scope_of_select(sub, &mut stack, schema)?;
            Ok(TrcFullQuery {
                output: None,
                root: if *negated {
                    TrcFullScope {
                        vars: Vec::new(),
                        formula: Formula::Not(Box::new(scope)),
                    }
                } else {
                    scope
                },
            })
        }
        SqlQuery::SentenceNot(p) => {
            let inner = full_formula_of_pred(p, &mut stack, schema)?;
            Ok(TrcFullQuery {
                output: None,
                root: TrcFullScope {
                    vars: Vec::new(),
                    formula: Formula::Not(Box::new(TrcFullScope {
                        vars: Vec::new(),
                        formula: inner,
                    })),
                },
            })
        }
    }
}

fn full_scope_of_select<'a>(
    s: &'a SqlSelect,
    stack: &mut Vec<&'a [SqlFromItem]>,
    schema: &Schema,
) -> Result<TrcFullScope> {
    stack.push(&s.from);
    let mut items = Vec::new();
    for p in &s.preds {
        items.push(full_formula_of_pred(p, stack, schema)?);
    }
    stack.pop();
    Ok(TrcFullScope {
        vars: s
            .from
            .iter()
            .map(|i| TrcVar::new(&i.alias, &i.table))
            .collect(),
        formula: Formula::and(items),
    })
}

fn full_formula_of_pred<'a>(
    p: &'a SqlPred,
    stack: &mut Vec<&'a [SqlFromItem]>,
    schema: &Schema,
) -> Result<Formula> {
    let wrap = |scope: TrcFullScope, negated: bool| {
        if negated {
            Formula::Not(Box::new(scope))
        } else {
            Formula::Exists(Box::new(scope))
        }
    };
    match p {
        SqlPred::Cmp { left, op, right } => {
            let l = resolve_attr_ref(left, stack, schema)?;
            Ok(Formula::Pred(match right {
                Scalar::Col(c) => TrcPred::Join {
                    left: l,
                    op: *op,
                    right: resolve_attr_ref(c, stack, schema)?,
                },
                Scalar::Val(v) => TrcPred::Sel {
                    left: l,
                    op: *op,
                    value: v.clone(),
                },
            }))
        }
        SqlPred::And(ps) => {
            let mut items = Vec::new();
            for p in ps {
                items.push(full_formula_of_pred(p, stack, schema)?);
            }
            Ok(Formula::and(items))
        }
        SqlPred::Or(ps) => {
            let mut items = Vec::new();
            for p in ps {
                items.push(full_formula_of_pred(p, stack, schema)?);
            }
            Ok(Formula::Or(items))
        }
        SqlPred::Not(inner) => Ok(Formula::Not(Box::new(TrcFullScope {
            vars: Vec::new(),
            formula: full_formula_of_pred(inner, stack, schema)?,
        }))),
        SqlPred::Exists { negated, sub } => {
            let scope = full_scope_of_select(sub, stack, schema)?;
            Ok(wrap(scope, *negated))
        }
        SqlPred::In { negated, cols, sub } => {
            let outer: Vec<AttrRef> = cols
                .iter()
                .map(|c| resolve_attr_ref(c, stack, schema))
                .collect::<Result<_>>()?;
            let inner = sub_output_refs(sub, stack, schema)?;
            let scope = full_scope_of_select(sub, stack, schema)?;
            let mut items: Vec<Formula> = outer
                .into_iter()
                .zip(inner)
                .map(|(o, i)| {
                    Formula::Pred(TrcPred::Join {
                        left: o,
                        op: CompOp::Eq,
                        right: i,
                    })
                })
                .collect();
            items.extend(scope.formula.conjuncts());
            Ok(wrap(
                TrcFullScope {
                    vars: scope.vars,
                    formula: Formula::and(items),
                },
                *negated,
            ))
        }
        SqlPred::Quant { left, op, all, sub } => {
            let l = resolve_attr_ref(left, stack, schema)?;
            let inner = sub_output_refs(sub, stack, schema)?;
            let scope = full_scope_of_select(sub, stack, schema)?;
            let eff = if *all { op.complement() } else { *op };
            let mut items = vec![Formula::Pred(TrcPred::Join {
                left: l,
                op: eff,
                right: inner.into_iter().next().expect("validated arity"),
            })];
            items.extend(scope.formula.conjuncts());
            Ok(wrap(
                TrcFullScope {
                    vars: scope.vars,
                    formula: Formula::and(items),
                },
                *all,
            ))
        }
    }
}

/// The output column references of a subquery, resolved inside the
/// subquery's own scope.
fn sub_output_refs<'a>(
    sub: &'a SqlSelect,
    stack: &mut Vec<&'a [SqlFromItem]>,
    schema: &Schema,
) -> Result<Vec<AttrRef>> {
    stack.push(&sub.from);
    let refs = match &sub.cols {
        SelectCols::Cols(cols) => cols
            .iter()
            .map(|c| resolve_attr_ref(c, stack, schema))
            .collect::<Result<Vec<_>>>(),
        SelectCols::Star => {
            let mut out = Vec::new();
            for item in &sub.from {
                for attr in schema.attrs(&item.table)? {
                    out.push(AttrRef::new(&item.alias, attr));
                }
            }
            Ok(out)
        }
    };
    stack.pop();
    refs
}

fn resolve_attr_ref(c: &ColRef, stack: &[&[SqlFromItem]], schema: &Schema) -> Result<AttrRef> {
    let item = sql::resolve_column(stack, schema, c)?;
    Ok(AttrRef::new(&item.alias, &c.attr))
}

// ---------------------------------------------------------------------------
// Disjunction elimination
// ---------------------------------------------------------------------------

/// Largest number of disjuncts [`eliminate_disjunction`] will produce;
/// beyond this the distribution into disjunctive normal form is refused
/// rather than allowed to explode.
pub const MAX_DNF_DISJUNCTS: usize = 64;

/// An ordered union of canonical TRC cells, all with the same output
/// name and attributes (or all sentences). A single cell is the
/// degenerate case.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionQuery {
    pub cells: Vec<TrcQuery>,
}

/// Split a full TRC query into a union of or-free canonical cells.
///
/// The formula is distributed into disjunctive normal form: `or` under
/// a root or positive quantifier splits the query into one cell per
/// disjunct (each keeping the full quantifier prefix), while `or` under
/// a negation becomes a conjunction of negations — one per disjunct,
/// with the scope variables of every copy after the first renamed apart
/// (`r2`'s copy continues its series as `r3`). Every cell is then
/// pulled up to canonical form, validated, and checked for anchoring.
/// Distribution past [`MAX_DNF_DISJUNCTS`] disjuncts is refused.
pub fn eliminate_disjunction(q: &TrcFullQuery, schema: &Schema) -> Result<UnionQuery> {
    let mut used = BTreeSet::new();
    collect_full_names(&q.root, &mut used);
    if let Some(out) = &q.output {
        used.insert(out.name.clone());
    }
    let disjuncts = dnf(&q.root.formula, &mut used)?;
    let mut cells = Vec::with_capacity(disjuncts.len());
    for items in disjuncts {
        let cell = crate::canon::trc_pullup(&TrcFullQuery {
            output: q.output.clone(),
            root: TrcFullScope {
                vars: q.root.vars.clone(),
                formula: Formula::and(items),
            },
        })?;
        trc::validate(&cell, schema)?;
        let violations = crate::canon::check_anchored(&cell);
        if !violations.is_empty() {
            return Err(Error::Anchoring(violations));
        }
        cells.push(cell);
    }
    Ok(UnionQuery { cells })
}

/// Disjunctive normal form of a formula, as a list of conjunct lists.
/// Every conjunct is or-free all the way down.
fn dnf(f: &Formula, used: &mut BTreeSet<String>) -> Result<Vec<Vec<Formula>>> {
    let check = |n: usize| {
        if n > MAX_DNF_DISJUNCTS {
            Err(Error::DnfBound {
                size: n,
                bound: MAX_DNF_DISJUNCTS,
            })
        } else {
            Ok(n)
        }
    };
    match f {
        Formula::Pred(p) => Ok(vec![vec![Formula::Pred(p.clone())]]),
        Formula::And(fs) => {
            let mut acc: Vec<Vec<Formula>> = vec![Vec::new()];
            for f in fs {
                let d = dnf(f, used)?;
                check(acc.len() * d.len())?;
                let mut next = Vec::with_capacity(acc.len() * d.len());
                for items in &acc {
                    for extra in &d {
                        let mut combined = items.clone();
                        combined.extend(extra.iter().cloned());
                        next.push(combined);
                    }
                }
                acc = next;
            }
            Ok(acc)
        }
        Formula::Or(fs) => {
            let mut acc = Vec::new();
            for f in fs {
                acc.extend(dnf(f, used)?);
                check(acc.len())?;
            }
            Ok(acc)
        }
        Formula::Exists(s) => Ok(dnf(&s.formula, used)?
            .into_iter()
            .map(|items| {
                vec![Formula::Exists(Box::new(TrcFullScope {
                    vars: s.vars.clone(),
                    formula: Formula::and(items),
                }))]
            })
            .collect()),
        // A negation that binds no variables cannot shelter predicates of
        // its own (they would be unanchored); push it inward instead.
        Formula::Not(s) if s.vars.is_empty() => dnf(&negate(&s.formula), used),
        Formula::Not(s) => {
            let parts = dnf(&s.formula, used)?;
            let mut conjuncts = Vec::with_capacity(parts.len());
            for (i, items) in parts.into_iter().enumerate() {
                let mut scope = TrcFullScope {
                    vars: s.vars.clone(),
                    formula: Formula::and(items),
                };
                if i > 0 {
                    rename_scope_apart(&mut scope, used);
                }
                conjuncts.push(Formula::Not(Box::new(scope)));
            }
            Ok(vec![conjuncts])
        }
    }
}

/// The negation of a formula, pushed one level in (negation normal
/// form): comparisons complement their operator, De Morgan swaps
/// conjunction and disjunction, a headless double negation unwraps, and
/// a quantifier flips between `Exists` and `Not`.
fn negate(f: &Formula) -> Formula {
    match f {
        Formula::Pred(p) => Formula::Pred(match p.clone() {
            TrcPred::Join { left, op, right } => TrcPred::Join {
                left,
                op: op.complement(),
                right,
            },
            TrcPred::Sel { left, op, value } => TrcPred::Sel {
                left,
                op: op.complement(),
                value,
            },
        }),
        Formula::And(fs) => Formula::Or(fs.iter().map(negate).collect()),
        Formula::Or(fs) => Formula::and(fs.iter().map(negate).collect()),
        Formula::Not(s) if s.vars.is_empty() => s.formula.clone(),
        Formula::Not(s) => Formula::Exists(s.clone()),
        Formula::Exists(s) => Formula::Not(s.clone()),
    }
}

/// Rename every head variable of `scope` to a fresh name continuing its
/// series, rewriting references throughout the scope's formula.
fn rename_scope_apart(scope: &mut TrcFullScope, used: &mut BTreeSet<String>) {
    for i in 0..scope.vars.len() {
        let old = scope.vars[i].name.clone();
        let new = fresh_var(stem(&old), used);
        scope.vars[i].name = new.clone();
        rename_formula_refs(&mut scope.formula, &old, &new);
    }
}

/// Rewrite references to variable `old` as `new`, stopping at any scope
/// that redeclares `old`.
fn rename_formula_refs(f: &mut Formula, old: &str, new: &str) {
    match f {
        Formula::And(fs) | Formula::Or(fs) => {
            fs.iter_mut().for_each(|f| rename_formula_refs(f, old, new))
        }
        Formula::Pred(p) => {
            let refs = match p {
                TrcPred::Join { left, right, .. } => vec![left, right],
                TrcPred::Sel { left, .. } => vec![left],
            };
            for r in refs {
                if r.var == old {
                    r.var = new.to_string();
                }
            }
        }
        Formula::Not(s) | Formula::Exists(s) => {
            if s.vars.iter().any(|v| v.name == old) {
                return;
            }
            rename_formula_refs(&mut s.formula, old, new);
        }
    }
}

/// Translate every cell of a full-mode SQL union and concatenate the
/// results into one [`UnionQuery`]. Cells after the first are renamed
/// to the first cell's output name; their attribute lists must already
/// agree.
pub fn sql_full_to_union(u: &SqlUnion, schema: &Schema) -> Result<UnionQuery> {
    let mut cells = Vec::new();
    for q in &u.cells {
        let full = sql_to_trc_full(q, schema)?;
        cells.extend(eliminate_disjunction(&full, schema)?.cells);
    }
    let Some(first) = cells.first().map(|c| c.output.clone()) else {
        return Err(Error::Scope {
            detail: "a union needs at least one cell".into(),
        });
    };
    for cell in &mut cells[1..] {
        match (&mut cell.output, &first) {
            (None, None) => {}
            (Some(out), Some(head)) => {
                if out.attrs != head.attrs {
                    return Err(Error::Scope {
                        detail: format!(
                            "union cells disagree on output attributes: ({}) vs ({})",
                            head.attrs.join(", "),
                            out.attrs.join(", ")
                        ),
                    });
                }
                if out.name != head.name {
                    let old = out.name.clone();
                    out.name = head.name.clone();
                    let new = head.name.clone();
                    rename_scope_refs(&mut cell.root, &old, &new);
                }
            }
            _ => {
                return Err(Error::Scope {
                    detail: "union mixes sentences with output-producing cells".into(),
                })
            }
        }
    }
    Ok(UnionQuery { cells })
}

/// Rewrite references to variable `old` as `new` in a canonical scope
/// tree, stopping at any scope that redeclares `old`.
fn rename_scope_refs(s: &mut TrcScope, old: &str, new: &str) {
    if s.vars.iter().any(|v| v.name == old) {
        return;
    }
    for p in &mut s.preds {
        let refs = match p {
            TrcPred::Join { left, right, .. } => vec![left, right],
            TrcPred::Sel { left, .. } => vec![left],
        };
        for r in refs {
            if r.var == old {
                r.var = new.to_string();
            }
        }
    }
    for n in &mut s.negations {
        rename_scope_refs(n, old, new);
    }
}

// ---------------------------------------------------------------------------
// TRC -> Datalog
// ---------------------------------------------------------------------------

/// Translate canonical TRC to non-recursive Datalog.
///
/// The input must pass the anchoring check. Guard variables are then
/// inserted so that no predicate reaches more than one scope up (and a
/// non-equality predicate not even that): a reference to `v.attr` from
/// deeper inside gains, at each intermediate scope, a fresh variable
/// over `v`'s own relation chained downward by equality — `v`'s tuple
/// itself witnesses every guard, so the meaning is unchanged. Each
/// scope then becomes one rule, innermost first, with the references it
/// shares with its parent as the rule's head; a scope that is a bare
/// single-table membership test collapses into a directly negated atom
/// instead of a helper rule. The answer relation takes the query's
/// output name (a sentence answers `Q()`), helpers are named
/// `I, I2, ...`, and rule variables draw from `x, y, z, u, v, w, x2, ...`
/// with unconstrained positions left anonymous.
pub fn trc_to_datalog(q: &TrcQuery, schema: &Schema) -> Result<DatalogProgram> {
    trc::validate(q, schema)?;
    let violations = crate::canon::check_anchored(q);
    if !violations.is_empty() {
        return Err(Error::Anchoring(violations));
    }
    let fixed = insert_guards(q);
    let answer = {
        let base = fixed.output.as_ref().map(|o| o.name.as_str()).unwrap_or("Q");
        let mut name = base.to_string();
        let mut k = 2usize;
        while schema.contains(&name) {
            name = format!("{base}{k}");
            k += 1;
        }
        name
    };
    let mut cx = TrcRules {
        schema,
        rules: Vec::new(),
        taken: std::iter::once(answer.clone()).collect(),
        aux: 0,
    };
    let mut calls = Vec::new();
    for child in &fixed.root.negations {
        calls.push(cx.build_scope(child)?);
    }
    let rule = cx.scope_rule(&fixed.root, &[], &calls, answer, fixed.output.as_ref())?;
    cx.rules.push(rule);
    let program = DatalogProgram { rules: cx.rules };
    datalog::validate(&program, schema)?;
    Ok(program)
}

/// Insert guard variables so that, afterwards, every predicate is
/// either local to its scope or an equality reaching exactly one scope
/// up. Rule generation then never passes a value through more than one
/// level, which is what keeps every generated rule safe.
fn insert_guards(q: &TrcQuery) -> TrcQuery {
    let mut used = BTreeSet::new();
    collect_trc_names(q, &mut used);
    let out_name = q.output.as_ref().map(|o| o.name.clone());
    let root = guard_scope(
        q.root.clone(),
        0,
        &mut Vec::new(),
        &BTreeMap::new(),
        &mut used,
        out_name.as_deref(),
    );
    TrcQuery {
        output: q.output.clone(),
        root,
    }
}

/// One level of guard insertion. `e` is this scope's depth, `stack`
/// holds enclosing variables with their depths, and `parent_guards`
/// maps each guarded (variable, attribute) to the guard created one
/// level up.
fn guard_scope(
    mut scope: TrcScope,
    e: usize,
    stack: &mut Vec<(String, String, usize)>,
    parent_guards: &BTreeMap<(String, String), String>,
    used: &mut BTreeSet<String>,
    out_name: Option<&str>,
) -> TrcScope {
    // which outward references need a guard at this level?
    let mut needs: Vec<(String, String, String)> = Vec::new();
    collect_guard_needs(&scope, e, e, stack, out_name, &mut needs);
    let mut my_guards: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut guard_preds = Vec::new();
    for (var, attr, relation) in needs {
        let g = fresh_var(&relation.to_lowercase(), used);
        scope.vars.push(TrcVar::new(&g, &relation));
        let prev = parent_guards
            .get(&(var.clone(), attr.clone()))
            .cloned()
            .unwrap_or_else(|| var.clone());
        guard_preds.push(TrcPred::Join {
            left: AttrRef::new(&g, &attr),
            op: CompOp::Eq,
            right: AttrRef::new(&prev, &attr),
        });
        my_guards.insert((var, attr), g);
    }
    // rewrite this scope's own predicates: an equality may keep a
    // reference one level up, everything else moves onto a guard
    let frame = stack.len();
    for v in &scope.vars {
        stack.push((v.name.clone(), v.relation.clone(), e));
    }
    for p in &mut scope.preds {
        let op = match p {
            TrcPred::Join { op, .. } | TrcPred::Sel { op, .. } => *op,
        };
        let refs = match p {
            TrcPred::Join { left, right, .. } => vec![left, right],
            TrcPred::Sel { left, .. } => vec![left],
        };
        for r in refs {
            if out_name == Some(r.var.as_str()) {
                continue;
            }
            let Some((_, _, a)) = stack.iter().rev().find(|(n, _, _)| *n == r.var) else {
                continue;
            };
            let a = *a;
            if a >= e {
                continue; // local
            }
            let key = (r.var.clone(), r.attr.clone());
            if op == CompOp::Eq {
                if a + 1 < e {
                    if let Some(g) = parent_guards.get(&key) {
                        r.var = g.clone();
                    }
                }
            } else if let Some(g) = my_guards.get(&key) {
                r.var = g.clone();
            }
        }
    }
    scope.preds.extend(guard_preds);
    scope.negations = scope
        .negations
        .drain(..)
        .map(|n| guard_scope(n, e + 1, stack, &my_guards, used, out_name))
        .collect();
    stack.truncate(frame);
    scope
}

/// Scan the subtree rooted at `s` (depth `d`) for predicate references
/// that must pass through depth `e`: a reference from depth `d` to an
/// enclosing variable at depth `a` needs guards at every level in
/// `a+1 ..= d-1` when the predicate is an equality, and `a+1 ..= d`
/// otherwise.
fn collect_guard_needs(
    s: &TrcScope,
    d: usize,
    e: usize,
    stack: &mut Vec<(String, String, usize)>,
    out_name: Option<&str>,
    needs: &mut Vec<(String, String, String)>,
) {
    let frame = stack.len();
    for v in &s.vars {
        stack.push((v.name.clone(), v.relation.clone(), d));
    }
    for p in &s.preds {
        let op = match p {
            TrcPred::Join { op, .. } | TrcPred::Sel { op, .. } => *op,
        };
        for r in p.refs() {
            if out_name == Some(r.var.as_str()) {
                continue;
            }
            let Some((_, relation, a)) = stack.iter().rev().find(|(n, _, _)| *n == r.var) else {
                continue;
            };
            let (relation, a) = (relation.clone(), *a);
            if a >= d {
                continue; // local to its own scope
            }
            let limit = if op == CompOp::Eq { d - 1 } else { d };
            if a < e
                && e <= limit
                && !needs.iter().any(|(v, at, _)| *v == r.var && *at == r.attr)
            {
                needs.push((r.var.clone(), r.attr.clone(), relation));
            }
        }
    }
    for child in &s.negations {
        collect_guard_needs(child, d + 1, e, stack, out_name, needs);
    }
    stack.truncate(frame);
}

/// Union-find over the equality classes of a rule under construction.
struct Classes {
    parent: Vec<usize>,
}

impl Classes {
    fn make(&mut self) -> usize {
        let id = self.parent.len();
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb] = ra;
        }
    }
}

/// How a parent rule calls a translated child scope: either a helper
/// relation over the child's interface references, or (for a collapsed
/// scope) the base relation itself with one reference per position.
struct NegCall {
    pred: String,
    args: Vec<AttrRef>,
}

struct TrcRules<'a> {
    schema: &'a Schema,
    rules: Vec<Rule>,
    taken: BTreeSet<String>,
    aux: usize,
}

impl TrcRules<'_> {
    fn aux_name(&mut self) -> String {
        loop {
            self.aux += 1;
            let name = if self.aux == 1 {
                "I".to_string()
            } else {
                format!("I{}", self.aux)
            };
            if !self.schema.contains(&name) && self.taken.insert(name.clone()) {
                return name;
            }
        }
    }

    /// Translate a negated scope, innermost scopes first, and describe
    /// how the parent should call it.
    fn build_scope(&mut self, scope: &TrcScope) -> Result<NegCall> {
        let mut calls = Vec::new();
        for child in &scope.negations {
            calls.push(self.build_scope(child)?);
        }
        if calls.is_empty() {
            if let Some(call) = self.try_collapse(scope) {
                return Ok(call);
            }
        }
        // interface: the distinct outward references in this scope's
        // own predicates, in order of appearance (after guard insertion
        // children only reach this scope's variables, so only local
        // predicates contribute)
        let mut interface: Vec<AttrRef> = Vec::new();
        for p in &scope.preds {
            for r in p.refs() {
                if !scope.vars.iter().any(|v| v.name == r.var) && !interface.contains(r) {
                    interface.push(r.clone());
                }
            }
        }
        let name = self.aux_name();
        let rule = self.scope_rule(scope, &interface, &calls, name.clone(), None)?;
        self.rules.push(rule);
        Ok(NegCall {
            pred: name,
            args: interface,
        })
    }

    /// A scope that merely tests membership of one base tuple — a
    /// single variable, no negations, only equalities pinning every
    /// attribute position to exactly one outward reference — collapses
    /// into a directly negated atom.
    fn try_collapse(&self, scope: &TrcScope) -> Option<NegCall> {
        let [v] = &scope.vars[..] else { return None };
        if !scope.negations.is_empty() {
            return None;
        }
        let attrs = self.schema.attrs(&v.relation).ok()?;
        let pos = |attr: &str| attrs.iter().position(|a| a == attr);
        let mut pins: Vec<Option<AttrRef>> = vec![None; attrs.len()];
        let mut links: Vec<(usize, usize)> = Vec::new();
        for p in &scope.preds {
            let TrcPred::Join { left, op, right } = p else { return None };
            if *op != CompOp::Eq {
                return None;
            }
            match (left.var == v.name, right.var == v.name) {
                (true, true) => links.push((pos(&left.attr)?, pos(&right.attr)?)),
                (true, false) => pin(&mut pins, pos(&left.attr)?, right)?,
                (false, true) => pin(&mut pins, pos(&right.attr)?, left)?,
                (false, false) => return None,
            }
        }
        // propagate pins across same-tuple equalities
        let mut changed = true;
        while changed {
            changed = false;
            for &(a, b) in &links {
                for (from, to) in [(a, b), (b, a)] {
                    if pins[to].is_none() {
                        if let Some(r) = pins[from].clone() {
                            pins[to] = Some(r);
                            changed = true;
                        }
                    }
                }
                if let (Some(x), Some(y)) = (&pins[a], &pins[b]) {
                    if x != y {
                        return None;
                    }
                }
            }
        }
        let args = pins.into_iter().collect::<Option<Vec<_>>>()?;
        Some(NegCall {
            pred: v.relation.clone(),
            args,
        })
    }

    /// Emit one rule for a scope: head variables carry the interface
    /// (or the output attributes at the root), equalities merge into
    /// shared variables, other predicates become built-in comparisons,
    /// and translated negations become negated calls.
    fn scope_rule(
        &mut self,
        scope: &TrcScope,
        interface: &[AttrRef],
        calls: &[NegCall],
        head_name: String,
        output: Option<&OutputSpec>,
    ) -> Result<Rule> {
        let mut cx = SlotCx {
            classes: Classes { parent: Vec::new() },
            local: BTreeMap::new(),
            names: BTreeMap::new(),
            next: 0,
        };
        let head_width = output.map(|o| o.attrs.len()).unwrap_or(interface.len());
        let head_slots: Vec<usize> = (0..head_width).map(|_| cx.classes.make()).collect();

        // merge equalities; everything else becomes a built-in later
        let mut builtins: Vec<&TrcPred> = Vec::new();
        for p in &scope.preds {
            match p {
                TrcPred::Join { left, op, right } if *op == CompOp::Eq => {
                    let l = cx.slot_of(left, scope, output, interface, &head_slots)?;
                    let r = cx.slot_of(right, scope, output, interface, &head_slots)?;
                    cx.classes.union(l, r);
                }
                _ => builtins.push(p),
            }
        }

        // assign variable names: head first, then built-ins, then
        // negated calls, then anything forced by repeated atom positions
        let mut head_vars = Vec::with_capacity(head_width);
        let mut dup_eqs: Vec<Literal> = Vec::new();
        for &slot in &head_slots {
            let root = cx.classes.find(slot);
            let name = if cx.names.contains_key(&root) {
                // two head positions share a class: keep head variables
                // distinct and equate them in the body
                let existing = cx.names[&root].clone();
                let fresh = crate::canon::pool_name(cx.next);
                cx.next += 1;
                dup_eqs.push(Literal::Cmp {
                    left: Term::Var(fresh.clone()),
                    op: CompOp::Eq,
                    right: Term::Var(existing),
                });
                fresh
            } else {
                cx.demand(slot)
            };
            head_vars.push(name);
        }

        let mut cmp_lits = Vec::with_capacity(builtins.len());
        for p in builtins {
            cmp_lits.push(match p {
                TrcPred::Join { left, op, right } => {
                    let l = cx.slot_of(left, scope, output, interface, &head_slots)?;
                    let r = cx.slot_of(right, scope, output, interface, &head_slots)?;
                    Literal::Cmp {
                        left: Term::Var(cx.demand(l)),
                        op: *op,
                        right: Term::Var(cx.demand(r)),
                    }
                }
                TrcPred::Sel { left, op, value } => {
                    let l = cx.slot_of(left, scope, output, interface, &head_slots)?;
                    Literal::Cmp {
                        left: Term::Var(cx.demand(l)),
                        op: *op,
                        right: Term::Const(value.clone()),
                    }
                }
            });
        }
        cmp_lits.extend(dup_eqs);

        let mut neg_lits = Vec::with_capacity(calls.len());
        for call in calls {
            let mut vars = Vec::with_capacity(call.args.len());
            for r in &call.args {
                let slot = cx.slot_of(r, scope, output, interface, &head_slots)?;
                vars.push(cx.demand(slot));
            }
            neg_lits.push(Literal::Neg(Atom {
                pred: call.pred.clone(),
                vars,
            }));
        }

        let mut body = Vec::new();
        let mut anon = 0usize;
        for v in &scope.vars {
            let attrs = self.schema.attrs(&v.relation)?;
            let mut vars = Vec::with_capacity(attrs.len());
            for attr in attrs {
                let var = match cx.local.get(&(v.name.clone(), attr.clone())) {
                    Some(&slot) => cx.demand(slot),
                    None => {
                        anon += 1;
                        format!("_{anon}")
                    }
                };
                vars.push(var);
            }
            body.push(Literal::Pos(Atom {
                pred: v.relation.clone(),
                vars,
            }));
        }
        body.extend(cmp_lits);
        body.extend(neg_lits);

        Ok(Rule {
            head: Atom {
                pred: head_name,
                vars: head_vars,
            },
            body,
        })
    }
}

/// Equality classes, local-variable slots, and class names for one rule
/// under construction.
struct SlotCx {
    classes: Classes,
    local: BTreeMap<(String, String), usize>,
    names: BTreeMap<usize, String>,
    next: usize,
}

impl SlotCx {
    /// The slot a reference resolves to: a (variable, attribute) slot
    /// for local references, the matching head slot for references to
    /// the output or the interface.
    fn slot_of(
        &mut self,
        r: &AttrRef,
        scope: &TrcScope,
        output: Option<&OutputSpec>,
        interface: &[AttrRef],
        head_slots: &[usize],
    ) -> Result<usize> {
        if scope.vars.iter().any(|v| v.name == r.var) {
            let key = (r.var.clone(), r.attr.clone());
            if let Some(&slot) = self.local.get(&key) {
                return Ok(slot);
            }
            let slot = self.classes.make();
            self.local.insert(key, slot);
            return Ok(slot);
        }
        if let Some(out) = output {
            let i = out
                .attrs
                .iter()
                .position(|a| *a == r.attr)
                .ok_or_else(|| Error::Scope {
                    detail: format!("unresolvable reference {r} in a root predicate"),
                })?;
            return Ok(head_slots[i]);
        }
        let i = interface
            .iter()
            .position(|x| x == r)
            .expect("interface covers outward references");
        Ok(head_slots[i])
    }

    /// The variable name of a slot's class, assigning the next pool
    /// name on first demand.
    fn demand(&mut self, slot: usize) -> String {
        let root = self.classes.find(slot);
        if let Some(name) = self.names.get(&root) {
            return name.clone();
        }
        let name = crate::canon::pool_name(self.next);
        self.next += 1;
        self.names.insert(root, name.clone());
        name
    }
}

/// Record that attribute position `at` must equal `r`; two different
/// pins on the same position defeat the collapse.
fn pin(pins: &mut [Option<AttrRef>], at: usize, r: &AttrRef) -> Option<()> {
    match &pins[at] {
        None => {
            pins[at] = Some(r.clone());
            Some(())
        }
        Some(existing) if existing == r => Some(()),
        Some(_) => None,
    }
}

// ---------------------------------------------------------------------------
// Datalog -> TRC
// ---------------------------------------------------------------------------

/// Where a value in a translated rule comes from: an attribute of some
/// quantified tuple variable, or a constant.
#[derive(Debug, Clone)]
enum Source {
    Ref(AttrRef),
    Const(Value),
}

/// The TRC translation of one intensional relation: a scope whose
/// variables carry placeholder names (`#0`, `#1`, ...) so every
/// instantiation can rename them fresh, plus the source of each head
/// position. `is_false` marks a body that is statically false with no
/// tuple variables to express the contradiction on.
#[derive(Debug, Clone)]
struct Template {
    scope: TrcScope,
    head: Vec<Source>,
    is_false: bool,
}

/// Translate non-recursive Datalog to canonical TRC.
///
/// Each rule becomes a scope template, built in dependency order:
/// positive base atoms quantify a tuple variable, positive intensional
/// atoms splice in their template, equalities bind or equate, other
/// comparisons become predicates, and negated atoms become negated
/// scopes (a negated intensional atom nests its template). The answer
/// template, instantiated with variables named after their relations,
/// is the query; a 0-ary answer yields a sentence. A final repair pass
/// anchors any predicate left referencing only enclosing scopes (which
/// arises when a negated call binds a constant-valued head position).
pub fn datalog_to_trc(p: &DatalogProgram, schema: &Schema) -> Result<TrcQuery> {
    datalog::validate(p, schema)?;
    let mut templates: BTreeMap<String, Template> = BTreeMap::new();
    for rule in datalog::topological_rules(p) {
        let t = build_template(rule, &templates, schema)?;
        templates.insert(rule.head.pred.clone(), t);
    }
    let answer = p.answer();
    let tpl = &templates[&answer.pred];
    if tpl.is_false {
        return Err(Error::Unsupported {
            detail: "the answer relation is statically empty and quantifies no table to say so"
                .into(),
        });
    }
    let out_name = answer.pred.clone();
    let mut used: BTreeSet<String> = std::iter::once(out_name.clone()).collect();
    let mut map = BTreeMap::new();
    let root = instantiate_scope(&tpl.scope, &mut map, &mut |v: &TrcVar| {
        fresh_var(&v.relation.to_lowercase(), &mut used)
    });
    let head: Vec<Source> = tpl.head.iter().map(|s| rename_source(s, &map)).collect();

    let q = if answer.vars.is_empty() {
        TrcQuery {
            output: None,
            root,
        }
    } else {
        let mut attrs = Vec::new();
        let mut attr_used = BTreeSet::new();
        let mut bindings = Vec::new();
        for src in &head {
            let Source::Ref(r) = src else {
                return Err(Error::Unsupported {
                    detail: "an answer column is bound to a constant; TRC* output columns \
                             must come from a table"
                        .into(),
                });
            };
            let attr = fresh_var(&r.attr, &mut attr_used);
            bindings.push(TrcPred::Join {
                left: AttrRef::new(&out_name, &attr),
                op: CompOp::Eq,
                right: r.clone(),
            });
            attrs.push(attr);
        }
        let mut root = root;
        root.preds.splice(0..0, bindings);
        TrcQuery {
            output: Some(OutputSpec {
                name: out_name,
                attrs,
            }),
            root,
        }
    };
    let q = repair_anchoring(q);
    trc::validate(&q, schema)?;
    let violations = crate::canon::check_anchored(&q);
    if violations.is_empty() {
        Ok(q)
    } else {
        Err(Error::Anchoring(violations))
    }
}

fn build_template(
    rule: &Rule,
    templates: &BTreeMap<String, Template>,
    schema: &Schema,
) -> Result<Template> {
    let mut counter = 0usize;
    let mut scope = TrcScope::default();
    let mut env: BTreeMap<String, Source> = BTreeMap::new();
    let mut is_false = false;

    // positive atoms bind variables (or equate already-bound ones)
    for lit in &rule.body {
        let Literal::Pos(atom) = lit else { continue };
        if let Some(t) = templates.get(&atom.pred) {
            if t.is_false {
                is_false = true;
                continue;
            }
            let mut map = BTreeMap::new();
            let inst = instantiate_scope(&t.scope, &mut map, &mut |_| {
                let n = format!("#{counter}");
                counter += 1;
                n
            });
            let head: Vec<Source> = t.head.iter().map(|s| rename_source(s, &map)).collect();
            scope.vars.extend(inst.vars);
            scope.preds.extend(inst.preds);
            scope.negations.extend(inst.negations);
            for (arg, src) in atom.vars.iter().zip(head) {
                if arg.starts_with('_') {
                    continue;
                }
                bind_or_equate(arg, src, &mut env, &mut scope.preds, &mut is_false)?;
            }
        } else {
            let name = format!("#{counter}");
            counter += 1;
            scope.vars.push(TrcVar::new(&name, &atom.pred));
            let attrs = schema.attrs(&atom.pred)?;
            for (i, arg) in atom.vars.iter().enumerate() {
                if arg.starts_with('_') {
                    continue;
                }
                let src = Source::Ref(AttrRef::new(&name, &attrs[i]));
                bind_or_equate(arg, src, &mut env, &mut scope.preds, &mut is_false)?;
            }
        }
    }

    // equalities bind what they can; the rest become predicates
    let mut cmps: Vec<(Term, CompOp, Term)> = rule
        .body
        .iter()
        .filter_map(|lit| match lit {
            Literal::Cmp { left, op, right } => Some((left.clone(), *op, right.clone())),
            _ => None,
        })
        .collect();
    loop {
        let mut progress = false;
        let mut rest = Vec::new();
        for (l, op, r) in cmps {
            if op != CompOp::Eq {
                rest.push((l, op, r));
                continue;
            }
            match (resolve_term(&l, &env), resolve_term(&r, &env)) {
                (Some(a), Some(b)) => equate(a, b, &mut scope.preds, &mut is_false)?,
                (Some(a), None) => {
                    if let Term::Var(v) = &r {
                        env.insert(v.clone(), a);
                        progress = true;
                    }
                }
                (None, Some(b)) => {
                    if let Term::Var(v) = &l {
                        env.insert(v.clone(), b);
                        progress = true;
                    }
                }
                (None, None) => rest.push((l, op, r)),
            }
        }
        cmps = rest;
        if !progress {
            break;
        }
    }
    for (l, op, r) in cmps {
        let (Some(a), Some(b)) = (resolve_term(&l, &env), resolve_term(&r, &env)) else {
            return Err(Error::Safety {
                detail: "a comparison uses a variable with no binding".into(),
            });
        };
        match (a, b) {
            (Source::Ref(left), Source::Ref(right)) => {
                scope.preds.push(TrcPred::Join { left, op, right })
            }
            (Source::Ref(left), Source::Const(value)) => {
                scope.preds.push(TrcPred::Sel { left, op, value })
            }
            (Source::Const(value), Source::Ref(left)) => scope.preds.push(TrcPred::Sel {
                left,
                op: op.flip(),
                value,
            }),
            (Source::Const(a), Source::Const(b)) => {
                if !crate::model::compare(&a, op, &b)? {
                    is_false = true;
                }
            }
        }
    }

    // negated atoms become negated scopes
    for lit in &rule.body {
        let Literal::Neg(atom) = lit else { continue };
        let args: Vec<Source> = atom
            .vars
            .iter()
            .map(|v| {
                resolve_term(&Term::Var(v.clone()), &env).ok_or_else(|| Error::Safety {
                    detail: format!("negated atom uses unbound variable {v}"),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(t) = templates.get(&atom.pred) {
            if t.is_false {
                continue; // the call never holds, so its negation is vacuous
            }
            let mut map = BTreeMap::new();
            let mut child = instantiate_scope(&t.scope, &mut map, &mut |_| {
                let n = format!("#{counter}");
                counter += 1;
                n
            });
            let head: Vec<Source> = t.head.iter().map(|s| rename_source(s, &map)).collect();
            let mut child_false = false;
            for (want, have) in head.into_iter().zip(args) {
                equate(want, have, &mut child.preds, &mut child_false)?;
            }
            if child_false {
                continue; // the called body can never match these arguments
            }
            scope.negations.push(child);
        } else {
            let name = format!("#{counter}");
            counter += 1;
            let mut child = TrcScope {
                vars: vec![TrcVar::new(&name, &atom.pred)],
                ..TrcScope::default()
            };
            let attrs = schema.attrs(&atom.pred)?;
            for (i, src) in args.into_iter().enumerate() {
                let left = AttrRef::new(&name, &attrs[i]);
                child.preds.push(match src {
                    Source::Ref(right) => TrcPred::Join {
                        left,
                        op: CompOp::Eq,
                        right,
                    },
                    Source::Const(value) => TrcPred::Sel {
                        left,
                        op: CompOp::Eq,
                        value,
                    },
                });
            }
            scope.negations.push(child);
        }
    }

    // a statically false body is expressed on a quantified table when
    // there is one; otherwise the template stays marked false
    if is_false {
        if let Some(v) = scope.vars.first() {
            if let Some(attr) = schema.attrs(&v.relation)?.first() {
                scope.preds.push(TrcPred::Join {
                    left: AttrRef::new(&v.name, attr),
                    op: CompOp::Neq,
                    right: AttrRef::new(&v.name, attr),
                });
                is_false = false;
            }
        }
    }

    let head = rule
        .head
        .vars
        .iter()
        .map(|v| {
            resolve_term(&Term::Var(v.clone()), &env).ok_or_else(|| Error::Safety {
                detail: format!("head variable {v} has no binding"),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Template {
        scope,
        head,
        is_false,
    })
}

/// Clone a template scope, renaming every variable declaration through
/// `namer` and rewriting references accordingly.
fn instantiate_scope(
    s: &TrcScope,
    map: &mut BTreeMap<String, String>,
    namer: &mut dyn FnMut(&TrcVar) -> String,
) -> TrcScope {
    let vars: Vec<TrcVar> = s
        .vars
        .iter()
        .map(|v| {
            let new = namer(v);
            map.insert(v.name.clone(), new.clone());
            TrcVar::new(&new, &v.relation)
        })
        .collect();
    let fix = |r: &AttrRef| AttrRef {
        var: map.get(&r.var).cloned().unwrap_or_else(|| r.var.clone()),
        attr: r.attr.clone(),
    };
    let preds = s
        .preds
        .iter()
        .map(|p| match p {
            TrcPred::Join { left, op, right } => TrcPred::Join {
                left: fix(left),
                op: *op,
                right: fix(right),
            },
            TrcPred::Sel { left, op, value } => TrcPred::Sel {
                left: fix(left),
                op: *op,
                value: value.clone(),
            },
        })
        .collect();
    let negations = s
        .negations
        .iter()
        .map(|n| instantiate_scope(n, map, namer))
        .collect();
    TrcScope {
        vars,
        preds,
        negations,
    }
}

fn rename_source(s: &Source, map: &BTreeMap<String, String>) -> Source {
    match s {
        Source::Ref(r) => Source::Ref(AttrRef {
            var: map.get(&r.var).cloned().unwrap_or_else(|| r.var.clone()),
            attr: r.attr.clone(),
        }),
        Source::Const(v) => Source::Const(v.clone()),
    }
}

fn resolve_term(t: &Term, env: &BTreeMap<String, Source>) -> Option<Source> {
    match t {
        Term::Const(v) => Some(Source::Const(v.clone())),
        Term::Var(v) => env.get(v).cloned(),
    }
}

fn bind_or_equate(
    var: &str,
    src: Source,
    env: &mut BTreeMap<String, Source>,
    preds: &mut Vec<TrcPred>,
    is_false: &mut bool,
) -> Result<()> {
    match env.get(var) {
        None => {
            env.insert(var.to_string(), src);
            Ok(())
        }
        Some(existing) => equate(existing.clone(), src, preds, is_false),
    }
}

/// Assert that two sources agree: as a predicate when at least one is
/// an attribute, by evaluation when both are constants.
fn equate(a: Source, b: Source, preds: &mut Vec<TrcPred>, is_false: &mut bool) -> Result<()> {
    match (a, b) {
        (Source::Ref(left), Source::Ref(right)) => {
            if left != right {
                preds.push(TrcPred::Join {
                    left,
                    op: CompOp::Eq,
                    right,
                });
            }
            Ok(())
        }
        (Source::Ref(left), Source::Const(value)) | (Source::Const(value), Source::Ref(left)) => {
            preds.push(TrcPred::Sel {
                left,
                op: CompOp::Eq,
                value,
            });
            Ok(())
        }
        (Source::Const(a), Source::Const(b)) => {
            if !crate::model::compare(&a, CompOp::Eq, &b)? {
                *is_false = true;
            }
            Ok(())
        }
    }
}

/// Add a local guard for any predicate that references only enclosing
/// scopes: the first such reference `v.attr` gains a fresh variable
/// over `v`'s relation in the predicate's own scope, chained by
/// `g.attr = v.attr`, and the predicate moves onto the guard. `v`'s
/// tuple witnesses the guard, so the meaning is unchanged.
fn repair_anchoring(q: TrcQuery) -> TrcQuery {
    let mut used = BTreeSet::new();
    collect_trc_names(&q, &mut used);
    let root = repair_scope(q.root, &mut Vec::new(), &mut used);
    TrcQuery {
        output: q.output,
        root,
    }
}

fn repair_scope(mut scope: TrcScope, outer: &mut Vec<TrcVar>, used: &mut BTreeSet<String>) -> TrcScope {
    let mut guards: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut guard_vars: Vec<TrcVar> = Vec::new();
    let mut guard_preds: Vec<TrcPred> = Vec::new();
    for p in &mut scope.preds {
        let anchored = p
            .refs()
            .iter()
            .any(|r| scope.vars.iter().any(|v| v.name == r.var));
        if anchored {
            continue;
        }
        let Some(target) = p
            .refs()
            .into_iter()
            .find(|r| outer.iter().any(|v| v.name == r.var))
            .cloned()
        else {
            continue;
        };
        let key = (target.var.clone(), target.attr.clone());
        let g = match guards.get(&key) {
            Some(g) => g.clone(),
            None => {
                let relation = outer
                    .iter()
                    .rev()
                    .find(|v| v.name == target.var)
                    .expect("target resolved above")
                    .relation
                    .clone();
                let name = fresh_var(&relation.to_lowercase(), used);
                guard_vars.push(TrcVar::new(&name, &relation));
                guard_preds.push(TrcPred::Join {
                    left: AttrRef::new(&name, &target.attr),
                    op: CompOp::Eq,
                    right: target.clone(),
                });
                guards.insert(key, name.clone());
                name
            }
        };
        let refs = match p {
            TrcPred::Join { left, right, .. } => vec![left, right],
            TrcPred::Sel { left, .. } => vec![left],
        };
        for r in refs {
            if r.var == target.var && r.attr == target.attr {
                r.var = g.clone();
                break;
            }
        }
    }
    scope.vars.extend(guard_vars);
    scope.preds.extend(guard_preds);
    let frame = outer.len();
    outer.extend(scope.vars.iter().cloned());
    scope.negations = scope
        .negations
        .drain(..)
        .map(|n| repair_scope(n, outer, used))
        .collect();
    outer.truncate(frame);
    scope
}

// ---------------------------------------------------------------------------
// RA -> Datalog
// ---------------------------------------------------------------------------

/// Translate union-free RA to non-recursive Datalog.
///
/// Each operator node becomes one rule over positional variables
/// `x1..xn`: projection picks head positions, selection and theta join
/// add built-in comparisons, natural join repeats the shared variables,
/// and difference negates its right operand. Renames are transparent —
/// they only relabel columns — and a bare relation (possibly under
/// renames) translates as the copy rule `q(x̄) :- R(x̄)`. Inner rules
/// are named `q1, q2, ...` bottom-up; the answer is `q`.
pub fn ra_to_datalog(e: &RaExpr, schema: &Schema) -> Result<DatalogProgram> {
    if e.contains_union() {
        return Err(Error::Unsupported {
            detail: "union has no single-program Datalog* translation; translate each cell"
                .into(),
        });
    }
    ra::analyze(e, schema)?;
    let mut cx = RaRules {
        schema,
        rules: Vec::new(),
        leaves: Vec::new(),
        next: 0,
        used: BTreeSet::new(),
    };
    let (src, cols) = cx.node(e)?;
    let answer = {
        let mut name = "q".to_string();
        let mut k = 2usize;
        while schema.contains(&name) || cx.used.contains(&name) {
            name = format!("q{k}");
            k += 1;
        }
        name
    };
    match src {
        NodeSrc::Base(rel) => {
            let vars = positional(cols.len());
            cx.rules.push(Rule {
                head: Atom {
                    pred: answer,
                    vars: vars.clone(),
                },
                body: vec![Literal::Pos(Atom { pred: rel, vars })],
            });
        }
        NodeSrc::Idb(_) => {
            cx.rules.last_mut().expect("rules emitted").head.pred = answer;
        }
    }
    let program = DatalogProgram { rules: cx.rules };
    datalog::validate(&program, schema)?;
    Ok(program)
}

fn positional(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

enum NodeSrc {
    Base(String),
    Idb(String),
}

struct RaRules<'a> {
    schema: &'a Schema,
    rules: Vec<Rule>,
    leaves: Vec<String>,
    next: usize,
    used: BTreeSet<String>,
}

impl RaRules<'_> {
    fn fresh(&mut self) -> String {
        loop {
            self.next += 1;
            let name = format!("q{}", self.next);
            if !self.schema.contains(&name) && self.used.insert(name.clone()) {
                return name;
            }
        }
    }

    fn push_rule(&mut self, head_vars: Vec<String>, body: Vec<Literal>) -> String {
        let name = self.fresh();
        self.rules.push(Rule {
            head: Atom {
                pred: name.clone(),
                vars: head_vars,
            },
            body,
        });
        name
    }

    fn lit(src: &NodeSrc, vars: Vec<String>) -> Literal {
        let pred = match src {
            NodeSrc::Base(n) | NodeSrc::Idb(n) => n.clone(),
        };
        Literal::Pos(Atom { pred, vars })
    }

    fn builtin(&self, p: &RaPred, cols: &[RaColumn], vars: &[String]) -> Result<Literal> {
        Ok(match p {
            RaPred::Join { left, op, right } => Literal::Cmp {
                left: Term::Var(vars[ra::resolve_col(cols, &self.leaves, left)?].clone()),
                op: *op,
                right: Term::Var(vars[ra::resolve_col(cols, &self.leaves, right)?].clone()),
            },
            RaPred::Sel { left, op, value } => Literal::Cmp {
                left: Term::Var(vars[ra::resolve_col(cols, &self.leaves, left)?].clone()),
                op: *op,
                right: Term::Const(value.clone()),
            },
        })
    }

    /// Translate one node, returning what the parent should reference
    /// (a base relation or the freshly emitted rule) and the node's
    /// output columns, mirroring the analyzer's walk.
    fn node(&mut self, e: &RaExpr) -> Result<(NodeSrc, Vec<RaColumn>)> {
        match e {
            RaExpr::Rel(name) => {
                let leaf = self.leaves.len();
                self.leaves.push(name.clone());
                let cols = self
                    .schema
                    .attrs(name)?
                    .iter()
                    .enumerate()
                    .map(|(i, a)| RaColumn {
                        name: a.clone(),
                        leaf,
                        base_attr: i,
                    })
                    .collect();
                Ok((NodeSrc::Base(name.clone()), cols))
            }
            RaExpr::Rename { map, input } => {
                let (src, mut cols) = self.node(input)?;
                for (old, new) in map {
                    if let Some(c) = cols.iter_mut().find(|c| c.name == *old) {
                        c.name = new.clone();
                    }
                }
                Ok((src, cols))
            }
            RaExpr::Project { attrs, input } => {
                let (src, cols) = self.node(input)?;
                let vars = positional(cols.len());
                let mut head = Vec::new();
                let mut out = Vec::new();
                for a in attrs {
                    let i = ra::resolve_col(&cols, &self.leaves, a)?;
                    head.push(vars[i].clone());
                    out.push(cols[i].clone());
                }
                let name = self.push_rule(head, vec![Self::lit(&src, vars)]);
                Ok((NodeSrc::Idb(name), out))
            }
            RaExpr::Select { preds, input } => {
                let (src, cols) = self.node(input)?;
                let vars = positional(cols.len());
                let mut body = vec![Self::lit(&src, vars.clone())];
                for p in preds {
                    body.push(self.builtin(p, &cols, &vars)?);
                }
                let name = self.push_rule(vars, body);
                Ok((NodeSrc::Idb(name), cols))
            }
            RaExpr::Product(l, r) => {
                let (ls, lc) = self.node(l)?;
                let (rs, rc) = self.node(r)?;
                let d = lc.len();
                let vars = positional(d + rc.len());
                let body = vec![
                    Self::lit(&ls, vars[..d].to_vec()),
                    Self::lit(&rs, vars[d..].to_vec()),
                ];
                let mut cols = lc;
                cols.extend(rc);
                let name = self.push_rule(vars, body);
                Ok((NodeSrc::Idb(name), cols))
            }
            RaExpr::ThetaJoin { preds, left, right } => {
                let (ls, lc) = self.node(left)?;
                let (rs, rc) = self.node(right)?;
                let d = lc.len();
                let vars = positional(d + rc.len());
                let mut body = vec![
                    Self::lit(&ls, vars[..d].to_vec()),
                    Self::lit(&rs, vars[d..].to_vec()),
                ];
                let mut cols = lc;
                cols.extend(rc);
                for p in preds {
                    body.push(self.builtin(p, &cols, &vars)?);
                }
                let name = self.push_rule(vars, body);
                Ok((NodeSrc::Idb(name), cols))
            }
            RaExpr::NatJoin(l, r) => {
                let (ls, lc) = self.node(l)?;
                let (rs, rc) = self.node(r)?;
                let d = lc.len();
                let lvars = positional(d);
                let mut rvars = Vec::new();
                let mut out_vars = lvars.clone();
                let mut out_cols = lc.clone();
                let mut extra = 0usize;
                for c in &rc {
                    match lc.iter().position(|x| x.name == c.name) {
                        Some(i) => rvars.push(lvars[i].clone()),
                        None => {
                            extra += 1;
                            let v = format!("x{}", d + extra);
                            rvars.push(v.clone());
                            out_vars.push(v);
                            out_cols.push(c.clone());
                        }
                    }
                }
                let body = vec![Self::lit(&ls, lvars), Self::lit(&rs, rvars)];
                let name = self.push_rule(out_vars, body);
                Ok((NodeSrc::Idb(name), out_cols))
            }
            RaExpr::Minus(l, r) => {
                let (ls, lc) = self.node(l)?;
                let (rs, _) = self.node(r)?;
                let vars = positional(lc.len());
                let neg = match &rs {
                    NodeSrc::Base(n) | NodeSrc::Idb(n) => Literal::Neg(Atom {
                        pred: n.clone(),
                        vars: vars.clone(),
                    }),
                };
                let body = vec![Self::lit(&ls, vars.clone()), neg];
                let name = self.push_rule(vars, body);
                Ok((NodeSrc::Idb(name), lc))
            }
            RaExpr::Union(_, _) => Err(Error::Unsupported {
                detail: "union has no single-program Datalog* translation".into(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Datalog -> RA
// ---------------------------------------------------------------------------

/// A rule variable's value after constant propagation: a column of the
/// joined positive atoms (named by the variable itself) or a constant.
#[derive(Clone, Debug, PartialEq)]
enum Tgt {
    Var(String),
    Const(Value),
}

struct FreshNames {
    reserved: BTreeSet<String>,
    next: usize,
}

impl FreshNames {
    fn take(&mut self) -> String {
        loop {
            self.next += 1;
            let name = format!("u{}", self.next);
            if self.reserved.insert(name.clone()) {
                return name;
            }
        }
    }
}

/// Translate non-recursive Datalog to RA.
///
/// Rules translate in dependency order. A rule's positive atoms — base
/// relations renamed to the rule's variable names, earlier rules'
/// expressions inlined — fold into a natural join; comparisons become a
/// selection; the result is projected onto the columns the rule still
/// needs (its head variables plus those of its negated atoms); and each
/// negated atom subtracts, padded by a cross product with the missing
/// columns of that projection when the atom covers only part of the
/// needed width. Sentences (0-ary answers), rules with no positive
/// atom, constant-valued answer columns, and negated atoms with only
/// constant arguments have no RA* form and are refused.
pub fn datalog_to_ra(p: &DatalogProgram, schema: &Schema) -> Result<RaExpr> {
    datalog::validate(p, schema)?;
    if p.answer().vars.is_empty() {
        return Err(Error::Unsupported {
            detail: "a sentence (0-ary answer) has no RA* form".into(),
        });
    }
    // fresh column names must avoid rule variables and schema attributes
    let mut reserved: BTreeSet<String> = BTreeSet::new();
    for (_, attrs) in schema.relations() {
        reserved.extend(attrs.iter().cloned());
    }
    for rule in &p.rules {
        reserved.extend(rule.head.vars.iter().cloned());
        for lit in &rule.body {
            match lit {
                Literal::Pos(a) | Literal::Neg(a) => reserved.extend(a.vars.iter().cloned()),
                Literal::Cmp { left, right, .. } => {
                    for t in [left, right] {
                        if let Term::Var(v) = t {
                            reserved.insert(v.clone());
                        }
                    }
                }
            }
        }
    }
    let mut fresh = FreshNames { reserved, next: 0 };
    let mut defs: BTreeMap<String, (RaExpr, Vec<String>)> = BTreeMap::new();
    for rule in datalog::topological_rules(p) {
        let def = rule_to_ra(rule, &defs, schema, &mut fresh)?;
        defs.insert(rule.head.pred.clone(), def);
    }
    let (expr, _) = defs.remove(&p.answer().pred).expect("answer translated");
    ra::analyze(&expr, schema)?;
    Ok(expr)
}

fn resolve_tgt(
    t: &Term,
    subst: &BTreeMap<String, Tgt>,
    positive: &BTreeSet<String>,
) -> Option<Tgt> {
    match t {
        Term::Const(v) => Some(Tgt::Const(v.clone())),
        Term::Var(v) if positive.contains(v) => Some(Tgt::Var(v.clone())),
        Term::Var(v) => subst.get(v).cloned(),
    }
}

fn rule_to_ra(
    rule: &Rule,
    defs: &BTreeMap<String, (RaExpr, Vec<String>)>,
    schema: &Schema,
    fresh: &mut FreshNames,
) -> Result<(RaExpr, Vec<String>)> {
    let mut positive: BTreeSet<String> = BTreeSet::new();
    for lit in &rule.body {
        if let Literal::Pos(a) = lit {
            positive.extend(a.vars.iter().cloned());
        }
    }
    // resolve other variables through equality chains
    let mut subst: BTreeMap<String, Tgt> = BTreeMap::new();
    loop {
        let mut progress = false;
        for lit in &rule.body {
            let Literal::Cmp {
                left,
                op: CompOp::Eq,
                right,
            } = lit
            else {
                continue;
            };
            match (
                resolve_tgt(left, &subst, &positive),
                resolve_tgt(right, &subst, &positive),
            ) {
                (Some(t), None) => {
                    if let Term::Var(v) = right {
                        subst.insert(v.clone(), t);
                        progress = true;
                    }
                }
                (None, Some(t)) => {
                    if let Term::Var(v) = left {
                        subst.insert(v.clone(), t);
                        progress = true;
                    }
                }
                _ => {}
            }
        }
        if !progress {
            break;
        }
    }

    // the joined positives, columns renamed to the rule's variables
    let mut joined: Option<(RaExpr, Vec<String>)> = None;
    for lit in &rule.body {
        let Literal::Pos(atom) = lit else { continue };
        let (expr, cols) = match defs.get(&atom.pred) {
            Some((e, cols)) => (e.clone(), cols.clone()),
            None => (RaExpr::rel(&atom.pred), schema.attrs(&atom.pred)?.to_vec()),
        };
        let targets: Vec<Tgt> = atom
            .vars
            .iter()
            .map(|v| {
                if v.starts_with('_') {
                    Tgt::Var(fresh.take())
                } else {
                    Tgt::Var(v.clone())
                }
            })
            .collect();
        let (expr, vars) = rebind(expr, &cols, &targets, fresh)?;
        joined = Some(match joined {
            None => (expr, vars),
            Some((l, mut merged)) => {
                for v in &vars {
                    if !merged.contains(v) {
                        merged.push(v.clone());
                    }
                }
                (RaExpr::natjoin(l, expr), merged)
            }
        });
    }
    let Some((mut expr, cols)) = joined else {
        return Err(Error::Unsupported {
            detail: "a rule with no positive atom has no RA* form".into(),
        });
    };

    // comparisons become selection conditions
    let mut conds: Vec<RaPred> = Vec::new();
    let mut rule_false = false;
    for lit in &rule.body {
        let Literal::Cmp { left, op, right } = lit else {
            continue;
        };
        let (Some(l), Some(r)) = (
            resolve_tgt(left, &subst, &positive),
            resolve_tgt(right, &subst, &positive),
        ) else {
            return Err(Error::Safety {
                detail: "a comparison uses a variable with no binding".into(),
            });
        };
        match (l, r) {
            (Tgt::Var(a), Tgt::Var(b)) => {
                if a == b && *op == CompOp::Eq {
                    continue; // a binding equality, already folded in
                }
                conds.push(RaPred::Join {
                    left: ColRef::bare(&a),
                    op: *op,
                    right: ColRef::bare(&b),
                });
            }
            (Tgt::Var(a), Tgt::Const(c)) => conds.push(RaPred::Sel {
                left: ColRef::bare(&a),
                op: *op,
                value: c,
            }),
            (Tgt::Const(c), Tgt::Var(b)) => conds.push(RaPred::Sel {
                left: ColRef::bare(&b),
                op: op.flip(),
                value: c,
            }),
            (Tgt::Const(a), Tgt::Const(b)) => {
                if !crate::model::compare(&a, *op, &b)? {
                    rule_false = true;
                }
            }
        }
    }
    if !conds.is_empty() {
        expr = RaExpr::Select {
            preds: conds,
            input: Box::new(expr),
        };
    }

    // head columns, then everything the negated atoms reference
    let mut head_cols: Vec<String> = Vec::new();
    for v in &rule.head.vars {
        match resolve_tgt(&Term::Var(v.clone()), &subst, &positive) {
            Some(Tgt::Var(x)) => {
                if head_cols.contains(&x) {
                    return Err(Error::Unsupported {
                        detail: "two answer columns carry the same value; RA* columns must \
                                 be distinct"
                            .into(),
                    });
                }
                head_cols.push(x);
            }
            Some(Tgt::Const(_)) => {
                return Err(Error::Unsupported {
                    detail: "an answer column is bound to a constant; RA* columns must come \
                             from a table"
                        .into(),
                })
            }
            None => {
                return Err(Error::Safety {
                    detail: format!("head variable {v} has no binding"),
                })
            }
        }
    }
    let mut needed = head_cols.clone();
    let mut negs: Vec<(String, Vec<Tgt>)> = Vec::new();
    for lit in &rule.body {
        let Literal::Neg(atom) = lit else { continue };
        let targets: Vec<Tgt> = atom
            .vars
            .iter()
            .map(|v| {
                resolve_tgt(&Term::Var(v.clone()), &subst, &positive).ok_or_else(|| {
                    Error::Safety {
                        detail: format!("negated atom uses unbound variable {v}"),
                    }
                })
            })
            .collect::<Result<_>>()?;
        for t in &targets {
            if let Tgt::Var(x) = t {
                if !needed.contains(x) {
                    needed.push(x.clone());
                }
            }
        }
        negs.push((atom.pred.clone(), targets));
    }

    // project down to the needed width before subtracting
    if cols != needed {
        expr = project_to(&needed, expr);
    }
    let base = expr.clone();
    if rule_false {
        expr = RaExpr::minus(base.clone(), base.clone());
    }
    for (pred, targets) in negs {
        let (nexpr, ncols) = match defs.get(&pred) {
            Some((e, cols)) => (e.clone(), cols.clone()),
            None => (RaExpr::rel(&pred), schema.attrs(&pred)?.to_vec()),
        };
        let (nexpr, nvars) = rebind(nexpr, &ncols, &targets, fresh)?;
        let missing: Vec<String> = needed.iter().filter(|v| !nvars.contains(v)).cloned().collect();
        let sub = if missing.is_empty() {
            if nvars == needed {
                nexpr
            } else {
                project_to(&needed, nexpr)
            }
        } else {
            project_to(
                &needed,
                RaExpr::product(nexpr, project_to(&missing, base.clone())),
            )
        };
        expr = RaExpr::minus(expr, sub);
    }

    if needed != head_cols {
        expr = project_to(&head_cols, expr);
    }
    Ok((expr, head_cols))
}

fn project_to(cols: &[String], input: RaExpr) -> RaExpr {
    RaExpr::Project {
        attrs: cols.iter().map(|c| ColRef::bare(c)).collect(),
        input: Box::new(input),
    }
}

/// Rename an expression's columns to the caller's variable names:
/// repeated variables keep one column and equate the duplicates,
/// constants select and drop their column, and the result keeps one
/// column per distinct variable, in first-use order.
fn rebind(
    expr: RaExpr,
    cols: &[String],
    targets: &[Tgt],
    fresh: &mut FreshNames,
) -> Result<(RaExpr, Vec<String>)> {
    let mut finals: Vec<String> = Vec::with_capacity(cols.len());
    let mut keep: Vec<String> = Vec::new();
    let mut conds: Vec<RaPred> = Vec::new();
    for t in targets {
        match t {
            Tgt::Var(v) => {
                if keep.contains(v) {
                    let tmp = fresh.take();
                    conds.push(RaPred::Join {
                        left: ColRef::bare(v),
                        op: CompOp::Eq,
                        right: ColRef::bare(&tmp),
                    });
                    finals.push(tmp);
                } else {
                    keep.push(v.clone());
                    finals.push(v.clone());
                }
            }
            Tgt::Const(c) => {
                let tmp = fresh.take();
                conds.push(RaPred::Sel {
                    left: ColRef::bare(&tmp),
                    op: CompOp::Eq,
                    value: c.clone(),
                });
                finals.push(tmp);
            }
        }
    }
    if keep.is_empty() {
        return Err(Error::Unsupported {
            detail: "an atom with only constant arguments has no RA* form".into(),
        });
    }
    let mut expr = safe_rename(expr, cols, &finals, fresh);
    if !conds.is_empty() {
        expr = RaExpr::Select {
            preds: conds,
            input: Box::new(expr),
        };
    }
    if finals != keep {
        expr = project_to(&keep, expr);
    }
    Ok((expr, keep))
}

/// Rename columns positionally from `cols` to `finals`. `Rename`
/// applies its entries sequentially, so a direct map can trip over
/// itself (swaps, or a target equal to a column renamed later); when
/// simulating the sequence detects that, rename in two steps through
/// fresh intermediate names.
fn safe_rename(expr: RaExpr, cols: &[String], finals: &[String], fresh: &mut FreshNames) -> RaExpr {
    let pairs: Vec<(String, String)> = cols
        .iter()
        .zip(finals)
        .filter(|(o, n)| o != n)
        .map(|(o, n)| (o.clone(), n.clone()))
        .collect();
    if pairs.is_empty() {
        return expr;
    }
    let sequential_ok = {
        let mut names: Vec<String> = cols.to_vec();
        let mut good = true;
        for (old, new) in &pairs {
            if names.iter().filter(|n| *n == old).count() != 1 {
                good = false;
                break;
            }
            let i = names.iter().position(|n| n == old).expect("counted above");
            names[i] = new.clone();
        }
        good && names.iter().collect::<BTreeSet<_>>().len() == names.len()
    };
    if sequential_ok {
        return RaExpr::Rename {
            map: pairs,
            input: Box::new(expr),
        };
    }
    let mids: Vec<String> = pairs.iter().map(|_| fresh.take()).collect();
    let step1 = pairs
        .iter()
        .zip(&mids)
        .map(|((o, _), m)| (o.clone(), m.clone()))
        .collect();
    let step2 = pairs
        .iter()
        .zip(&mids)
        .map(|((_, n), m)| (m.clone(), n.clone()))
        .collect();
    RaExpr::Rename {
        map: step2,
        input: Box::new(RaExpr::Rename {
            map: step1,
            input: Box::new(expr),
        }),
    }
}

// ---------------------------------------------------------------------------
// Any-to-any dispatch
// ---------------------------------------------------------------------------

/// Translate a query to another language, routing through canonical
/// TRC (the hub between SQL and Datalog) and Datalog (the hub toward
/// RA) as needed. Translating to the query's own language returns a
/// validated clone.
pub fn translate_query(q: &LangQuery, to: Lang, schema: &Schema) -> Result<LangQuery> {
    Ok(match (q, to) {
        (LangQuery::Sql(s), Lang::Sql) => {
            sql::validate(s, schema)?;
            q.clone()
        }
        (LangQuery::Sql(s), Lang::Trc) => LangQuery::Trc(sql_to_trc(s, schema)?),
        (LangQuery::Sql(s), Lang::Datalog) => {
            LangQuery::Datalog(trc_to_datalog(&sql_to_trc(s, schema)?, schema)?)
        }
        (LangQuery::Sql(s), Lang::Ra) => {
            let d = trc_to_datalog(&sql_to_trc(s, schema)?, schema)?;
            LangQuery::Ra(datalog_to_ra(&d, schema)?)
        }
        (LangQuery::Trc(t), Lang::Sql) => LangQuery::Sql(trc_to_sql(t, schema)?),
        (LangQuery::Trc(t), Lang::Trc) => {
            trc::validate(t, schema)?;
            q.clone()
        }
        (LangQuery::Trc(t), Lang::Datalog) => LangQuery::Datalog(trc_to_datalog(t, schema)?),
        (LangQuery::Trc(t), Lang::Ra) => {
            LangQuery::Ra(datalog_to_ra(&trc_to_datalog(t, schema)?, schema)?)
        }
        (LangQuery::Datalog(d), Lang::Sql) => {
            LangQuery::Sql(trc_to_sql(&datalog_to_trc(d, schema)?, schema)?)
        }
        (LangQuery::Datalog(d), Lang::Trc) => LangQuery::Trc(datalog_to_trc(d, schema)?),
        (LangQuery::Datalog(d), Lang::Datalog) => {
            datalog::validate(d, schema)?;
            q.clone()
        }
        (LangQuery::Datalog(d), Lang::Ra) => LangQuery::Ra(datalog_to_ra(d, schema)?),
        (LangQuery::Ra(e), Lang::Sql) => {
            let t = datalog_to_trc(&ra_to_datalog(e, schema)?, schema)?;
            LangQuery::Sql(trc_to_sql(&t, schema)?)
        }
        (LangQuery::Ra(e), Lang::Trc) => {
            LangQuery::Trc(datalog_to_trc(&ra_to_datalog(e, schema)?, schema)?)
        }
        (LangQuery::Ra(e), Lang::Datalog) => LangQuery::Datalog(ra_to_datalog(e, schema)?),
        (LangQuery::Ra(e), Lang::Ra) => {
            ra::analyze(e, schema)?;
            q.clone()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_sql, parse_trc, print_sql, print_trc};

    fn schema() -> Schema {
        let mut s = Schema::new();
        s.add_relation("R", &["A", "B"]).unwrap();
        s.add_relation("S", &["B"]).unwrap();
        s
    }

    #[test]
    fn canonical_sql_maps_structurally_to_trc() {
        let q = parse_sql(
            "SELECT DISTINCT R.A FROM R WHERE NOT EXISTS (SELECT * FROM S WHERE R.B = S.B)",
            &schema(),
        )
        .unwrap();
        let t = sql_to_trc(&q, &schema()).unwrap();
        assert_eq!(
            print_trc(&t),
            "{ Q(A) |\n  exists R in R [\n    Q.A = R.A\n    and not exists S in S [\n      R.B = S.B\n    ]\n  ]\n}\n"
        );
    }

    #[test]
    fn non_canonical_sql_is_canonicalized_on_the_way() {
        let q = parse_sql("SELECT DISTINCT R.A FROM R WHERE R.B IN (SELECT S.B FROM S)", &schema()).unwrap();
        let t = sql_to_trc(&q, &schema()).unwrap();
        assert_eq!(
            print_trc(&t),
            "{ Q(A) |\n  exists R in R, S in S [\n    Q.A = R.A\n    and R.B = S.B\n  ]\n}\n"
        );
    }

    #[test]
    fn trc_to_sql_renders_aliases_and_not_exists() {
        let t = parse_trc(
            "{ Q(A) | exists r in R [ Q.A = r.A and not exists s in S [ s.B = r.B ] ] }",
            &schema(),
        )
        .unwrap();
        let q = trc_to_sql(&t, &schema()).unwrap();
        assert_eq!(
            print_sql(&q),
            "SELECT DISTINCT r.A\nFROM R AS r\nWHERE NOT EXISTS\n  (SELECT *\n  FROM S AS s\n  WHERE s.B = r.B)\n"
        );
    }

    #[test]
    fn query_round_trip_is_the_identity() {
        let t = parse_trc(
            "{ Q(A) | exists r in R [ Q.A = r.A and r.B = 1 and not exists s in S [ s.B = r.B ] ] }",
            &schema(),
        )
        .unwrap();
        let back = sql_to_trc(&trc_to_sql(&t, &schema()).unwrap(), &schema()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn sql_round_trip_is_the_identity_on_canonical_queries() {
        let text =
            "SELECT DISTINCT R.A\nFROM R\nWHERE NOT EXISTS\n  (SELECT *\n  FROM S\n  WHERE R.B = S.B)\n";
        let q = parse_sql(text, &schema()).unwrap();
        let back = trc_to_sql(&sql_to_trc(&q, &schema()).unwrap(), &schema()).unwrap();
        assert_eq!(print_sql(&back), text);
    }

    #[test]
    fn sentence_round_trips() {
        for text in [
            "exists r in R [ r.A = 1 ]",
            "not exists r in R [ r.A = 1 ]",
            "not ( not exists r in R [ r.A = 1 ] )",
        ] {
            let t = parse_trc(text, &schema()).unwrap();
            let sql = trc_to_sql(&t, &schema()).unwrap();
            let back = sql_to_trc(&sql, &schema()).unwrap();
            assert_eq!(back, t, "{text}\nvia\n{}", print_sql(&sql));
        }
    }

    #[test]
    fn double_negation_sentence_prints_as_a_not_group() {
        let t = parse_trc("not ( not exists r in R [ r.A = 1 ] )", &schema()).unwrap();
        let sql = trc_to_sql(&t, &schema()).unwrap();
        assert_eq!(
            print_sql(&sql),
            "SELECT NOT (NOT EXISTS\n  (SELECT *\n  FROM R AS r\n  WHERE r.A = 1))\n"
        );
    }

    #[test]
    fn conjunction_of_negations_at_the_root_has_no_sentence_form() {
        let t = parse_trc(
            "not exists r in R [ r.A = 1 ] and not exists s in S [ s.B = 2 ]",
            &schema(),
        )
        .unwrap();
        let err = trc_to_sql(&t, &schema()).unwrap_err();
        assert!(matches!(err, Error::Unsupported { .. }), "{err}");
    }

    #[test]
    fn output_name_avoids_colliding_aliases() {
        let q = parse_sql("SELECT DISTINCT Q.A FROM R AS Q", &schema()).unwrap();
        let t = sql_to_trc(&q, &schema()).unwrap();
        assert_eq!(t.output.as_ref().unwrap().name, "Q2");
        crate::ast::trc::validate(&t, &schema()).unwrap();
    }
}
