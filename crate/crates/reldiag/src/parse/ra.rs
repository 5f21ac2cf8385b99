//! Relational algebra parser.
//!
//! Prefix syntax with exact-case operator names:
//!
//! ```text
//! Minus(Project[A](R), Project[A](Minus(Product(Project[A](R), S), R2)))
//! Select[A = B and C > 1](R)    Rename[A -> A2, B -> B2](R)
//! Join(R, S)                    Join[R.B = S.B](R, S2)
//! ```
//!
//! `Join(e1, e2)` is the natural join; `Join[c](e1, e2)` the theta join.
//! `Union` is accepted only in full mode.

use super::lex::{Cursor, Token, TokenKind};
use crate::ast::ra::{RaExpr, RaPred};
use crate::ast::ColRef;
use crate::error::Result;
use crate::model::Schema;

const OPERATORS: &[&str] = &["Project", "Select", "Product", "Join", "Minus", "Union", "Rename"];

/// Parse and validate an RA* expression (no `Union`).
pub fn parse_ra(text: &str, schema: &Schema) -> Result<RaExpr> {
    parse(text, schema, false)
}

/// Parse and validate a full-mode RA expression (`Union` allowed).
pub fn parse_ra_full(text: &str, schema: &Schema) -> Result<RaExpr> {
    parse(text, schema, true)
}

fn parse(text: &str, schema: &Schema, full: bool) -> Result<RaExpr> {
    let mut cur = Cursor::new(text)?;
    let e = expr(&mut cur, full)?;
    cur.expect_end()?;
    crate::ast::ra::analyze(&e, schema)?;
    Ok(e)
}

/// Is the current token the exact (case-sensitive) operator name?
fn at_operator(cur: &Cursor) -> Option<&'static str> {
    match cur.peek() {
        Some(Token { kind: TokenKind::Ident(s), .. }) => {
            OPERATORS.iter().find(|op| *op == s).copied()
        }
        _ => None,
    }
}

fn expr(cur: &mut Cursor, full: bool) -> Result<RaExpr> {
    match at_operator(cur) {
        Some("Project") => {
            cur.next();
            cur.expect_punct("[")?;
            let mut attrs = vec![col_ref(cur)?];
            while cur.eat_punct(",") {
                attrs.push(col_ref(cur)?);
            }
            cur.expect_punct("]")?;
            let input = parens_one(cur, full)?;
            Ok(RaExpr::Project { attrs, input: Box::new(input) })
        }
        Some("Select") => {
            cur.next();
            let preds = bracket_preds(cur)?;
            let input = parens_one(cur, full)?;
            Ok(RaExpr::Select { preds, input: Box::new(input) })
        }
        Some("Rename") => {
            cur.next();
            cur.expect_punct("[")?;
            let mut map = vec![rename_entry(cur)?];
            while cur.eat_punct(",") {
                map.push(rename_entry(cur)?);
            }
            cur.expect_punct("]")?;
            let input = parens_one(cur, full)?;
            Ok(RaExpr::Rename { map, input: Box::new(input) })
        }
        Some("Product") => {
            cur.next();
            let (l, r) = parens_two(cur, full)?;
            Ok(RaExpr::product(l, r))
        }
        Some("Join") => {
            cur.next();
            if cur.at_punct("[") {
                let preds = bracket_preds(cur)?;
                let (l, r) = parens_two(cur, full)?;
                Ok(RaExpr::ThetaJoin {
                    preds,
                    left: Box::new(l),
                    right: Box::new(r),
                })
            } else {
                let (l, r) = parens_two(cur, full)?;
                Ok(RaExpr::natjoin(l, r))
            }
        }
        Some("Minus") => {
            cur.next();
            let (l, r) = parens_two(cur, full)?;
            Ok(RaExpr::minus(l, r))
        }
        Some("Union") => {
            if !full {
                return Err(cur.error("`Union` requires full mode").into());
            }
            cur.next();
            let (l, r) = parens_two(cur, full)?;
            Ok(RaExpr::union(l, r))
        }
        Some(_) => unreachable!("operator list covered"),
        None => {
            // Operator names were matched case-sensitively above, so any
            // other identifier — including lowercase `join` — is a
            // relation name.
            let name = cur.expect_ident("a relation name", &[])?;
            Ok(RaExpr::Rel(name))
        }
    }
}

fn parens_one(cur: &mut Cursor, full: bool) -> Result<RaExpr> {
    cur.expect_punct("(")?;
    let e = expr(cur, full)?;
    cur.expect_punct(")")?;
    Ok(e)
}

fn parens_two(cur: &mut Cursor, full: bool) -> Result<(RaExpr, RaExpr)> {
    cur.expect_punct("(")?;
    let l = expr(cur, full)?;
    cur.expect_punct(",")?;
    let r = expr(cur, full)?;
    cur.expect_punct(")")?;
    Ok((l, r))
}

fn bracket_preds(cur: &mut Cursor) -> Result<Vec<RaPred>> {
    cur.expect_punct("[")?;
    let mut preds = vec![pred(cur)?];
    while cur.eat_keyword("and") {
        preds.push(pred(cur)?);
    }
    cur.expect_punct("]")?;
    Ok(preds)
}

fn pred(cur: &mut Cursor) -> Result<RaPred> {
    let left = col_ref(cur)?;
    let op = cur.expect_op()?;
    if cur.at_value() {
        let value = cur.expect_value()?;
        return Ok(RaPred::Sel { left, op, value });
    }
    let right = col_ref(cur)?;
    Ok(RaPred::Join { left, op, right })
}

fn col_ref(cur: &mut Cursor) -> Result<ColRef> {
    let first = cur.expect_ident("a column reference", &["and"])?;
    if cur.eat_punct(".") {
        let attr = cur.expect_ident("an attribute name", &["and"])?;
        return Ok(ColRef {
            qualifier: Some(first),
            attr,
        });
    }
    Ok(ColRef {
        qualifier: None,
        attr: first,
    })
}

fn rename_entry(cur: &mut Cursor) -> Result<(String, String)> {
    let old = cur.expect_ident("a column name", &[])?;
    cur.expect_punct("->")?;
    let new = cur.expect_ident("a column name", &[])?;
    Ok((old, new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::ra::extensional_tables;
    use crate::error::Error;
    use crate::model::{CompOp, Value};

    fn schema() -> Schema {
        let mut s = Schema::new();
        s.add_relation("R", &["A", "B"]).unwrap();
        s.add_relation("S", &["B"]).unwrap();
        s
    }

    #[test]
    fn parses_difference_with_product() {
        let e = parse_ra("Minus(R, Product(Project[A](R), S))", &schema()).unwrap();
        assert_eq!(extensional_tables(&e), vec!["R", "R", "S"]);
        assert!(matches!(e, RaExpr::Minus(_, _)));
    }

    #[test]
    fn parses_selection_conjunction() {
        let e = parse_ra("Select[A = B and A > 1](R)", &schema()).unwrap();
        let RaExpr::Select { preds, .. } = &e else { panic!() };
        assert_eq!(preds.len(), 2);
        assert_eq!(
            preds[1],
            RaPred::Sel {
                left: ColRef::bare("A"),
                op: CompOp::Gt,
                value: Value::Int(1),
            }
        );
    }

    #[test]
    fn parses_natural_and_theta_join() {
        let e = parse_ra("Join(R, S)", &schema()).unwrap();
        assert!(matches!(e, RaExpr::NatJoin(_, _)));
        let e = parse_ra(
            "Join[R.B = S2.B2](R, Rename[B -> B2](S))",
            &schema(),
        );
        // Qualifier S2 does not name a leaf relation; the analyzer rejects it.
        assert!(e.is_err());
        let e = parse_ra("Join[R.B = B2](R, Rename[B -> B2](S))", &schema()).unwrap();
        assert!(matches!(e, RaExpr::ThetaJoin { .. }));
    }

    #[test]
    fn parses_rename_chain() {
        let e = parse_ra(
            "Product(R, Rename[A -> A2, B -> B2](R))",
            &schema(),
        )
        .unwrap();
        assert_eq!(extensional_tables(&e), vec!["R", "R"]);
    }

    #[test]
    fn union_requires_full_mode() {
        let err = parse_ra("Union(S, S)", &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
        let e = parse_ra_full("Union(S, S)", &schema()).unwrap();
        assert!(matches!(e, RaExpr::Union(_, _)));
    }

    #[test]
    fn ambiguous_product_rejected_by_analysis() {
        let err = parse_ra("Product(R, R)", &schema()).unwrap_err();
        assert!(err.to_string().contains("rename"), "{err}");
    }

    #[test]
    fn operator_names_are_reserved() {
        let err = parse_ra("Minus(R, Join)", &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn case_sensitive_operators() {
        // `join` (lowercase) is just an identifier — an unknown relation.
        let err = parse_ra("join", &schema()).unwrap_err();
        assert!(matches!(err, Error::UnknownRelation { .. }), "{err}");
    }
}
