//! Tuple relational calculus parser.
//!
//! Canonical (fragment) syntax — quantifiers only at scope heads,
//! conjunction only:
//!
//! ```text
//! { Q(A) |
//!   exists r in R [
//!     Q.A = r.A
//!     and not exists s in S [
//!       s.B = r.B
//!     ]
//!   ]
//! }
//! ```
//!
//! Sentences drop the `{ ... | ... }` wrapper. `not ( ... )` opens a
//! negation scope with an empty quantifier head (double negation is
//! preserved, never simplified). The full mode additionally accepts `or`,
//! mid-formula `exists`, and plain parenthesized groups.

use super::lex::Cursor;
use crate::ast::trc::{
    AttrRef, Formula, OutputSpec, TrcFullQuery, TrcFullScope, TrcPred, TrcQuery, TrcScope, TrcVar,
};
use crate::error::{Error, Result};
use crate::model::Schema;

const KEYWORDS: &[&str] = &["exists", "in", "and", "or", "not"];

/// Parse a canonical TRC* query or sentence and validate it.
pub fn parse_trc(text: &str, schema: &Schema) -> Result<TrcQuery> {
    let mut cur = Cursor::new(text)?;
    let q = query(&mut cur, false)?;
    cur.expect_end()?;
    let q = strict(q)?;
    crate::ast::trc::validate(&q, schema)?;
    Ok(q)
}

/// Parse a full-mode TRC query or sentence (disjunction and mid-formula
/// quantifiers allowed) and check that every reference is in scope.
pub fn parse_trc_full(text: &str, schema: &Schema) -> Result<TrcFullQuery> {
    let mut cur = Cursor::new(text)?;
    let q = query(&mut cur, true)?;
    cur.expect_end()?;
    validate_full(&q, schema)?;
    Ok(q)
}

/// Shared grammar. Fragment mode is obtained by parsing in full mode and
/// then rejecting anything that is not already canonical; this keeps the
/// two parsers structurally identical and makes fragment errors precise.
fn query(cur: &mut Cursor, full: bool) -> Result<TrcFullQuery> {
    let output = if cur.eat_punct("{") {
        let name = cur.expect_ident("an output relation name", KEYWORDS)?;
        cur.expect_punct("(")?;
        let mut attrs = vec![cur.expect_ident("an output attribute", KEYWORDS)?];
        while cur.eat_punct(",") {
            attrs.push(cur.expect_ident("an output attribute", KEYWORDS)?);
        }
        cur.expect_punct(")")?;
        cur.expect_punct("|")?;
        Some(OutputSpec { name, attrs })
    } else {
        None
    };
    let root = formula(cur, full)?;
    if output.is_some() {
        cur.expect_punct("}")?;
    }
    Ok(TrcFullQuery {
        output,
        root: TrcFullScope { vars: Vec::new(), formula: root },
    })
}

/// `formula := conjunction { "or" conjunction }` — `or` requires full mode.
fn formula(cur: &mut Cursor, full: bool) -> Result<Formula> {
    let mut disjuncts = vec![conjunction(cur, full)?];
    while cur.at_keyword("or") {
        if !full {
            return Err(cur.error("`or` requires full mode").into());
        }
        cur.next();
        disjuncts.push(conjunction(cur, full)?);
    }
    Ok(if disjuncts.len() == 1 {
        disjuncts.pop().unwrap()
    } else {
        Formula::Or(disjuncts)
    })
}

fn conjunction(cur: &mut Cursor, full: bool) -> Result<Formula> {
    let mut units = vec![unit(cur, full)?];
    while cur.eat_keyword("and") {
        units.push(unit(cur, full)?);
    }
    Ok(Formula::and(units))
}

fn unit(cur: &mut Cursor, full: bool) -> Result<Formula> {
    if cur.eat_keyword("not") {
        // `not exists v in V [ ... ]` or `not ( ... )`.
        if cur.at_keyword("exists") {
            return Ok(Formula::Not(Box::new(scope(cur, full)?)));
        }
        if cur.eat_punct("(") {
            let inner = formula(cur, full)?;
            cur.expect_punct(")")?;
            return Ok(Formula::Not(Box::new(TrcFullScope {
                vars: Vec::new(),
                formula: inner,
            })));
        }
        return Err(cur.error("expected `exists` or `(` after `not`").into());
    }
    if cur.at_keyword("exists") {
        return Ok(Formula::Exists(Box::new(scope(cur, full)?)));
    }
    if cur.at_punct("(") {
        if !full {
            return Err(cur
                .error("parenthesized groups require full mode; the fragment nests with `not exists ... [ ... ]`")
                .into());
        }
        cur.next();
        let inner = formula(cur, full)?;
        cur.expect_punct(")")?;
        return Ok(inner);
    }
    Ok(Formula::Pred(predicate(cur)?))
}

/// `scope := "exists" v "in" V { "," ["exists"] v "in" V } "[" formula "]"`.
fn scope(cur: &mut Cursor, full: bool) -> Result<TrcFullScope> {
    cur.expect_keyword("exists")?;
    let mut vars = vec![binding(cur)?];
    while cur.eat_punct(",") {
        cur.eat_keyword("exists"); // optional repeated quantifier symbol
        vars.push(binding(cur)?);
    }
    cur.expect_punct("[")?;
    let body = if cur.at_punct("]") {
        Formula::And(Vec::new())
    } else {
        formula(cur, full)?
    };
    cur.expect_punct("]")?;
    Ok(TrcFullScope { vars, formula: body })
}

fn binding(cur: &mut Cursor) -> Result<TrcVar> {
    let name = cur.expect_ident("a variable name", KEYWORDS)?;
    cur.expect_keyword("in")?;
    let relation = cur.expect_ident("a relation name", KEYWORDS)?;
    Ok(TrcVar { name, relation })
}

/// `predicate := v "." a op (v "." a | constant)`.
fn predicate(cur: &mut Cursor) -> Result<TrcPred> {
    let left = attr_ref(cur)?;
    let op = cur.expect_op()?;
    if cur.at_value() {
        let value = cur.expect_value()?;
        return Ok(TrcPred::Sel { left, op, value });
    }
    let right = attr_ref(cur)?;
    Ok(TrcPred::Join { left, op, right })
}

fn attr_ref(cur: &mut Cursor) -> Result<AttrRef> {
    let var = cur.expect_ident("a variable reference", KEYWORDS)?;
    cur.expect_punct(".")?;
    let attr = cur.expect_ident("an attribute name", KEYWORDS)?;
    Ok(AttrRef { var, attr })
}

/// Lower a full-form parse to the canonical form, rejecting anything the
/// fragment grammar does not admit: `or` never reaches here (the parser
/// rejects it), but mid-formula `exists` does, in exactly one legal
/// position — as the entire body of the root or of a negation.
fn strict(q: TrcFullQuery) -> Result<TrcQuery> {
    let root = strict_scope(q.root)?;
    Ok(TrcQuery { output: q.output, root })
}

fn strict_scope(s: TrcFullScope) -> Result<TrcScope> {
    // A scope whose entire body is one positive `exists` absorbs it into
    // its own head: this is how `exists r in R [ ... ]` text becomes the
    // root scope, and it cannot change meaning (same quantifier position).
    let mut vars = s.vars;
    let mut body = s.formula;
    loop {
        match body {
            Formula::Exists(inner) if vars.is_empty() => {
                vars = inner.vars;
                body = inner.formula;
            }
            _ => break,
        }
    }
    let mut preds = Vec::new();
    let mut negations = Vec::new();
    for item in body.conjuncts() {
        match item {
            Formula::Pred(p) => preds.push(p),
            Formula::Not(inner) => negations.push(strict_scope(*inner)?),
            Formula::Exists(_) => {
                return Err(Error::Scope {
                    detail: "positive nested `exists` is not canonical; quantify at the scope head"
                        .into(),
                })
            }
            Formula::Or(_) | Formula::And(_) => {
                return Err(Error::Scope {
                    detail: "nested connective groups are not canonical".into(),
                })
            }
        }
    }
    Ok(TrcScope { vars, preds, negations })
}

/// Scope-check a full-form query: relations exist, attribute references
/// resolve against a variable quantified on the path (or the output
/// relation), no variable shadowing.
pub fn validate_full(q: &TrcFullQuery, schema: &Schema) -> Result<()> {
    let mut stack: Vec<TrcVar> = Vec::new();
    check_scope_full(q, &q.root, schema, &mut stack)
}

fn check_scope_full(
    q: &TrcFullQuery,
    scope: &TrcFullScope,
    schema: &Schema,
    stack: &mut Vec<TrcVar>,
) -> Result<()> {
    for v in &scope.vars {
        if stack.iter().any(|s| s.name == v.name) {
            return Err(Error::Scope {
                detail: format!("variable `{}` shadows a variable of an enclosing scope", v.name),
            });
        }
        if q.output.as_ref().is_some_and(|o| o.name == v.name) {
            return Err(Error::Scope {
                detail: format!("variable `{}` shadows the output relation", v.name),
            });
        }
        if !schema.contains(&v.relation) {
            return Err(Error::UnknownRelation {
                name: v.relation.clone(),
            });
        }
    }
    let depth = stack.len();
    stack.extend(scope.vars.iter().cloned());
    let result = check_formula(q, &scope.formula, schema, stack);
    stack.truncate(depth);
    result
}

fn check_formula(
    q: &TrcFullQuery,
    f: &Formula,
    schema: &Schema,
    stack: &mut Vec<TrcVar>,
) -> Result<()> {
    match f {
        Formula::And(fs) | Formula::Or(fs) => {
            for f in fs {
                check_formula(q, f, schema, stack)?;
            }
            Ok(())
        }
        Formula::Not(s) | Formula::Exists(s) => check_scope_full(q, s, schema, stack),
        Formula::Pred(p) => {
            for r in p.refs() {
                if q.output.as_ref().is_some_and(|o| o.name == r.var) {
                    let out = q.output.as_ref().unwrap();
                    if !out.attrs.contains(&r.attr) {
                        return Err(Error::UnknownAttribute {
                            relation: out.name.clone(),
                            attr: r.attr.clone(),
                        });
                    }
                    continue;
                }
                let var = stack.iter().rev().find(|v| v.name == r.var).ok_or(Error::Scope {
                    detail: format!("unknown variable `{}`", r.var),
                })?;
                schema.attr_index(&var.relation, &r.attr)?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::trc::extensional_tables;

    fn schema() -> Schema {
        let mut s = Schema::new();
        s.add_relation("R", &["A", "B"]).unwrap();
        s.add_relation("S", &["B"]).unwrap();
        s.add_relation("T", &["A"]).unwrap();
        s
    }

    #[test]
    fn parses_difference_query() {
        let q = parse_trc(
            "{ Q(A) | exists r in R [ Q.A = r.A and not exists s in S [ r.B = s.B ] ] }",
            &schema(),
        )
        .unwrap();
        assert_eq!(extensional_tables(&q), vec!["R", "S"]);
        assert_eq!(q.root.vars[0].name, "r");
        assert_eq!(q.root.negations.len(), 1);
        assert_eq!(q.root.preds.len(), 1);
    }

    #[test]
    fn parses_division_with_depth_three() {
        // Division: R.A values paired with every S.B value.
        let q = parse_trc(
            "{ Q(A) | exists r in R [ Q.A = r.A and not exists s in S [ \
             not exists r2 in R [ r2.A = r.A and r2.B = s.B ] ] ] }",
            &schema(),
        )
        .unwrap();
        assert_eq!(extensional_tables(&q), vec!["R", "S", "R"]);
        assert_eq!(q.root.negations[0].negations.len(), 1);
    }

    #[test]
    fn parses_sentence_without_wrapper() {
        let q = parse_trc("exists r in R [ r.A = 1 ]", &schema()).unwrap();
        assert!(q.is_sentence());
        assert_eq!(q.root.vars.len(), 1);
    }

    #[test]
    fn parses_negated_sentence_with_empty_root_head() {
        let q = parse_trc("not exists r in R [ r.A = 1 ]", &schema()).unwrap();
        assert!(q.root.vars.is_empty());
        assert_eq!(q.root.negations.len(), 1);
    }

    #[test]
    fn double_negation_is_preserved() {
        let q = parse_trc(
            "not ( not exists r in R [ r.A = 1 ] )",
            &schema(),
        )
        .unwrap();
        assert_eq!(q.root.negations.len(), 1);
        let middle = &q.root.negations[0];
        assert!(middle.vars.is_empty());
        assert_eq!(middle.negations.len(), 1);
        assert_eq!(middle.negations[0].vars[0].relation, "R");
    }

    #[test]
    fn multiple_vars_in_one_head() {
        let q = parse_trc(
            "{ Q(A) | exists r in R, s in S [ Q.A = r.A and r.B = s.B ] }",
            &schema(),
        )
        .unwrap();
        assert_eq!(q.root.vars.len(), 2);
        // The repeated-quantifier spelling parses identically.
        let q2 = parse_trc(
            "{ Q(A) | exists r in R, exists s in S [ Q.A = r.A and r.B = s.B ] }",
            &schema(),
        )
        .unwrap();
        assert_eq!(q, q2);
    }

    #[test]
    fn unbound_variable_is_a_scope_error() {
        let err = parse_trc("{ Q(A) | exists r in R [ Q.A = s.A ] }", &schema()).unwrap_err();
        assert!(err.to_string().contains("unknown variable `s`"), "{err}");
    }

    #[test]
    fn or_requires_full_mode() {
        let text = "{ Q(A) | exists r in R [ Q.A = r.A and ( r.A = 1 or r.A = 2 ) ] }";
        let err = parse_trc(text, &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
        let q = parse_trc_full(text, &schema()).unwrap();
        match &q.root.formula {
            Formula::Exists(_) => {}
            other => panic!("expected a root exists, got {other:?}"),
        }
    }

    #[test]
    fn full_mode_accepts_mid_formula_exists() {
        let q = parse_trc_full(
            "not exists r in R [ r.A = 1 and exists s in S [ s.B = r.B ] ]",
            &schema(),
        )
        .unwrap();
        validate_full(&q, &schema()).unwrap();
        // The same text is rejected by the canonical parser.
        let err = parse_trc(
            "not exists r in R [ r.A = 1 and exists s in S [ s.B = r.B ] ]",
            &schema(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("not canonical"), "{err}");
    }

    #[test]
    fn empty_body_brackets_parse() {
        let q = parse_trc("exists r in R []", &schema()).unwrap();
        assert!(q.root.preds.is_empty() && q.root.negations.is_empty());
    }

    #[test]
    fn selection_predicates_take_constants_on_the_right() {
        let q = parse_trc("exists r in R [ r.A >= -2 and r.B != 3 ]", &schema()).unwrap();
        assert_eq!(q.root.preds.len(), 2);
        let err = parse_trc("exists r in R [ 1 < r.A ]", &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn trailing_input_rejected() {
        let err = parse_trc("exists r in R [ r.A = 1 ] ]", &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn full_mode_shadowing_rejected() {
        let err = parse_trc_full(
            "exists r in R [ exists r in R [ r.A = 1 ] ]",
            &schema(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("shadows"), "{err}");
    }
}
