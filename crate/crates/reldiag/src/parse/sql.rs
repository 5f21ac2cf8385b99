//! SQL parser.
//!
//! The fragment grammar:
//!
//! ```text
//! query    := SELECT DISTINCT col {, col} FROM item {, item} [WHERE preds]
//!           | SELECT NOT ( pred )                      -- sentence
//!           | SELECT [NOT] EXISTS ( sub )              -- sentence
//! sub      := SELECT (col {, col} | *) FROM item {, item} [WHERE preds]
//! item     := table [[AS] alias]
//! preds    := pred {AND pred}
//! pred     := col op (col | value)
//!           | NOT ( preds )
//!           | [NOT] EXISTS ( sub )
//!           | col [NOT] IN ( sub )
//!           | ( col {, col} ) [NOT] IN ( sub )         -- row value
//!           | col op ALL|ANY ( sub )
//! ```
//!
//! Keywords are case-insensitive. Full mode additionally accepts
//! `( preds OR preds ... )` groups and top-level `UNION`.

use super::lex::{Cursor, Token, TokenKind};
use crate::ast::sql::{Scalar, SelectCols, SqlFromItem, SqlPred, SqlQuery, SqlSelect, SqlUnion};
use crate::ast::ColRef;
use crate::error::Result;
use crate::model::Schema;

const KEYWORDS: &[&str] = &[
    "select", "distinct", "from", "where", "and", "or", "not", "exists", "in", "all", "any", "as",
    "union",
];

/// Parse and validate a SQL* query or sentence (fragment mode: no `OR`,
/// no `UNION`).
pub fn parse_sql(text: &str, schema: &Schema) -> Result<SqlQuery> {
    let mut cur = Cursor::new(text)?;
    let q = query(&mut cur, false)?;
    cur.expect_end()?;
    crate::ast::sql::validate(&q, schema)?;
    Ok(q)
}

/// Parse and validate a full-mode SQL query: `OR` groups allowed, and one
/// or more cells joined by `UNION`.
pub fn parse_sql_full(text: &str, schema: &Schema) -> Result<SqlUnion> {
    let mut cur = Cursor::new(text)?;
    let mut cells = vec![query(&mut cur, true)?];
    while cur.eat_keyword("union") {
        cells.push(query(&mut cur, true)?);
    }
    cur.expect_end()?;
    for q in &cells {
        crate::ast::sql::validate(q, schema)?;
    }
    Ok(SqlUnion { cells })
}

fn query(cur: &mut Cursor, full: bool) -> Result<SqlQuery> {
    cur.expect_keyword("select")?;
    // Sentence heads: SELECT NOT (P) / SELECT [NOT] EXISTS (S).
    if cur.at_keyword("not") || cur.at_keyword("exists") {
        let negated = cur.eat_keyword("not");
        if cur.eat_keyword("exists") {
            cur.expect_punct("(")?;
            let sub = subquery(cur, full)?;
            cur.expect_punct(")")?;
            return Ok(SqlQuery::SentenceExists {
                negated,
                sub: Box::new(sub),
            });
        }
        if !negated {
            return Err(cur.error("expected `EXISTS`").into());
        }
        cur.expect_punct("(")?;
        let p = pred_group(cur, full)?;
        cur.expect_punct(")")?;
        return Ok(SqlQuery::SentenceNot(Box::new(p)));
    }
    if !cur.eat_keyword("distinct") {
        return Err(cur
            .error("the main query requires SELECT DISTINCT (set semantics)")
            .into());
    }
    if cur.at_punct("*") {
        return Err(cur.error("the main query must list its output columns").into());
    }
    let mut cols = vec![col_ref(cur)?];
    while cur.eat_punct(",") {
        cols.push(col_ref(cur)?);
    }
    let (from, preds) = from_where(cur, full)?;
    Ok(SqlQuery::Select(SqlSelect {
        cols: SelectCols::Cols(cols),
        from,
        preds,
    }))
}

fn subquery(cur: &mut Cursor, full: bool) -> Result<SqlSelect> {
    cur.expect_keyword("select")?;
    if cur.at_keyword("distinct") {
        return Err(cur
            .error("DISTINCT is implied in subqueries under set semantics; write SELECT")
            .into());
    }
    let cols = if cur.eat_punct("*") {
        SelectCols::Star
    } else {
        let mut cols = vec![col_ref(cur)?];
        while cur.eat_punct(",") {
            cols.push(col_ref(cur)?);
        }
        SelectCols::Cols(cols)
    };
    let (from, preds) = from_where(cur, full)?;
    Ok(SqlSelect { cols, from, preds })
}

fn from_where(cur: &mut Cursor, full: bool) -> Result<(Vec<SqlFromItem>, Vec<SqlPred>)> {
    cur.expect_keyword("from")?;
    let mut from = vec![from_item(cur)?];
    while cur.eat_punct(",") {
        from.push(from_item(cur)?);
    }
    let preds = if cur.eat_keyword("where") {
        let preds = predicates(cur, full)?;
        no_bare_or(cur, full)?;
        preds
    } else {
        Vec::new()
    };
    Ok((from, preds))
}

fn from_item(cur: &mut Cursor) -> Result<SqlFromItem> {
    let table = cur.expect_ident("a table name", KEYWORDS)?;
    let alias = if cur.eat_keyword("as") {
        cur.expect_ident("an alias", KEYWORDS)?
    } else if matches!(cur.peek(), Some(Token { kind: TokenKind::Ident(s), .. })
        if !KEYWORDS.iter().any(|k| s.eq_ignore_ascii_case(k)))
    {
        cur.expect_ident("an alias", KEYWORDS)?
    } else {
        table.clone()
    };
    Ok(SqlFromItem { table, alias })
}

/// `preds := pred {AND pred}` — a conjunction; stops before `OR`.
fn predicates(cur: &mut Cursor, full: bool) -> Result<Vec<SqlPred>> {
    let mut preds = vec![predicate(cur, full)?];
    while cur.eat_keyword("and") {
        preds.push(predicate(cur, full)?);
    }
    Ok(preds)
}

/// A predicate group as it appears inside parentheses: a conjunction,
/// possibly extended by `OR` branches in full mode.
fn pred_group(cur: &mut Cursor, full: bool) -> Result<SqlPred> {
    let mut branches = vec![conjoin(predicates(cur, full)?)];
    while cur.at_keyword("or") {
        if !full {
            return Err(cur.error("OR requires full mode").into());
        }
        cur.next();
        branches.push(conjoin(predicates(cur, full)?));
    }
    Ok(if branches.len() == 1 {
        branches.pop().unwrap()
    } else {
        SqlPred::Or(branches)
    })
}

/// Reject a dangling `OR` where only a conjunction is grammatical (the
/// `WHERE` clause itself: the grammar admits `OR` only in parentheses).
fn no_bare_or(cur: &Cursor, full: bool) -> Result<()> {
    if cur.at_keyword("or") {
        return Err(cur
            .error(if full {
                "OR must be parenthesized: `( P OR P )`"
            } else {
                "OR requires full mode, parenthesized: `( P OR P )`"
            })
            .into());
    }
    Ok(())
}

fn conjoin(mut preds: Vec<SqlPred>) -> SqlPred {
    if preds.len() == 1 {
        preds.pop().unwrap()
    } else {
        SqlPred::And(preds)
    }
}

fn predicate(cur: &mut Cursor, full: bool) -> Result<SqlPred> {
    if cur.at_keyword("not") && cur.peek_at(1).is_some_and(|t| t.kind == TokenKind::Punct("(")) {
        cur.next();
        cur.next();
        let inner = pred_group(cur, full)?;
        cur.expect_punct(")")?;
        return Ok(SqlPred::Not(Box::new(inner)));
    }
    if cur.at_keyword("not") || cur.at_keyword("exists") {
        let negated = cur.eat_keyword("not");
        cur.expect_keyword("exists")?;
        cur.expect_punct("(")?;
        let sub = subquery(cur, full)?;
        cur.expect_punct(")")?;
        return Ok(SqlPred::Exists {
            negated,
            sub: Box::new(sub),
        });
    }
    if cur.at_punct("(") {
        // Row-value IN, or (full mode) a parenthesized OR group. Decide by
        // parsing the column list and looking for [NOT] IN after `)`.
        let mark = cur.mark();
        if let Some(p) = try_row_in(cur, full)? {
            return Ok(p);
        }
        cur.rewind(mark);
        if !full {
            return Err(cur
                .error("expected a predicate; parenthesized groups require full mode")
                .into());
        }
        cur.next();
        let group = pred_group(cur, full)?;
        cur.expect_punct(")")?;
        return Ok(group);
    }
    // col op (col | value) | col op ALL/ANY (sub) | col [NOT] IN (sub)
    let left = col_ref(cur)?;
    if cur.at_keyword("in") || (cur.at_keyword("not") && cur.peek_at(1).is_some_and(|t| is_kw(t, "in"))) {
        let negated = cur.eat_keyword("not");
        cur.expect_keyword("in")?;
        cur.expect_punct("(")?;
        let sub = subquery(cur, full)?;
        cur.expect_punct(")")?;
        return Ok(SqlPred::In {
            negated,
            cols: vec![left],
            sub: Box::new(sub),
        });
    }
    let op = cur.expect_op()?;
    if cur.at_keyword("all") || cur.at_keyword("any") {
        let all = cur.eat_keyword("all");
        if !all {
            cur.expect_keyword("any")?;
        }
        cur.expect_punct("(")?;
        let sub = subquery(cur, full)?;
        cur.expect_punct(")")?;
        return Ok(SqlPred::Quant {
            left,
            op,
            all,
            sub: Box::new(sub),
        });
    }
    let right = if cur.at_value() {
        Scalar::Val(cur.expect_value()?)
    } else {
        Scalar::Col(col_ref(cur)?)
    };
    Ok(SqlPred::Cmp { left, op, right })
}

/// Try `( col {, col} ) [NOT] IN ( sub )` from an opening `(`; returns
/// `Ok(None)` (without consuming input decisions) if the shape does not
/// match, leaving the caller to rewind.
fn try_row_in(cur: &mut Cursor, full: bool) -> Result<Option<SqlPred>> {
    let mark = cur.mark();
    cur.next(); // (
    let mut cols = Vec::new();
    loop {
        if !matches!(cur.peek(), Some(Token { kind: TokenKind::Ident(s), .. })
            if !KEYWORDS.iter().any(|k| s.eq_ignore_ascii_case(k)))
        {
            cur.rewind(mark);
            return Ok(None);
        }
        match col_ref(cur) {
            Ok(c) => cols.push(c),
            Err(_) => {
                cur.rewind(mark);
                return Ok(None);
            }
        }
        if cur.eat_punct(",") {
            continue;
        }
        break;
    }
    if !cur.eat_punct(")") {
        cur.rewind(mark);
        return Ok(None);
    }
    let negated = cur.eat_keyword("not");
    if !cur.eat_keyword("in") {
        cur.rewind(mark);
        return Ok(None);
    }
    cur.expect_punct("(")?;
    let sub = subquery(cur, full)?;
    cur.expect_punct(")")?;
    Ok(Some(SqlPred::In {
        negated,
        cols,
        sub: Box::new(sub),
    }))
}

fn is_kw(t: &Token, kw: &str) -> bool {
    matches!(&t.kind, TokenKind::Ident(s) if s.eq_ignore_ascii_case(kw))
}

fn col_ref(cur: &mut Cursor) -> Result<ColRef> {
    let first = cur.expect_ident("a column reference", KEYWORDS)?;
    if cur.eat_punct(".") {
        let attr = cur.expect_ident("an attribute name", KEYWORDS)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::sql::extensional_tables;
    use crate::error::Error;
    use crate::model::CompOp;

    fn schema() -> Schema {
        let mut s = Schema::new();
        s.add_relation("R", &["A", "B"]).unwrap();
        s.add_relation("S", &["B"]).unwrap();
        s
    }

    #[test]
    fn parses_not_exists_query() {
        let q = parse_sql(
            "SELECT DISTINCT R.A\nFROM R\nWHERE not exists\n (SELECT *\n FROM S\n WHERE R.B = S.B)",
            &schema(),
        )
        .unwrap();
        assert_eq!(extensional_tables(&q), vec!["R", "S"]);
        let SqlQuery::Select(s) = &q else { panic!() };
        assert!(matches!(&s.preds[0], SqlPred::Exists { negated: true, .. }));
    }

    #[test]
    fn parses_membership_and_quantified_variants() {
        let q1 = parse_sql(
            "SELECT DISTINCT R.A FROM R WHERE R.B in (SELECT S.B FROM S)",
            &schema(),
        )
        .unwrap();
        let SqlQuery::Select(s) = &q1 else { panic!() };
        assert!(matches!(&s.preds[0], SqlPred::In { negated: false, .. }));

        let q2 = parse_sql(
            "SELECT DISTINCT R.A FROM R WHERE R.B <> all (SELECT S.B FROM S)",
            &schema(),
        )
        .unwrap();
        let SqlQuery::Select(s) = &q2 else { panic!() };
        let SqlPred::Quant { op, all, .. } = &s.preds[0] else { panic!() };
        assert_eq!((*op, *all), (CompOp::Neq, true));

        let q3 = parse_sql(
            "SELECT DISTINCT R.A FROM R WHERE R.B = any (SELECT S.B FROM S)",
            &schema(),
        )
        .unwrap();
        let SqlQuery::Select(s) = &q3 else { panic!() };
        assert!(matches!(&s.preds[0], SqlPred::Quant { all: false, .. }));
    }

    #[test]
    fn parses_row_value_membership() {
        let q = parse_sql(
            "SELECT DISTINCT R.A FROM R WHERE R.A not in (SELECT R3.A FROM S, R AS R3 \
             WHERE (R3.A, S.B) not in (SELECT R2.A, R2.B FROM R AS R2))",
            &schema(),
        )
        .unwrap();
        assert_eq!(extensional_tables(&q), vec!["R", "S", "R", "R"]);
        let SqlQuery::Select(s) = &q else { panic!() };
        let SqlPred::In { sub, .. } = &s.preds[0] else { panic!() };
        let SqlPred::In { negated, cols, .. } = &sub.preds[0] else { panic!() };
        assert!(*negated);
        assert_eq!(cols.len(), 2);
    }

    #[test]
    fn aliases_with_and_without_as() {
        let q = parse_sql(
            "SELECT DISTINCT R2.A FROM R R2 WHERE R2.A = 1",
            &schema(),
        )
        .unwrap();
        let SqlQuery::Select(s) = &q else { panic!() };
        assert_eq!(s.from[0], SqlFromItem::aliased("R", "R2"));
        let q2 = parse_sql(
            "SELECT DISTINCT R2.A FROM R AS R2 WHERE R2.A = 1",
            &schema(),
        )
        .unwrap();
        assert_eq!(q, q2);
    }

    #[test]
    fn main_query_requires_distinct_and_columns() {
        let err = parse_sql("SELECT R.A FROM R", &schema()).unwrap_err();
        assert!(err.to_string().contains("DISTINCT"), "{err}");
        let err = parse_sql("SELECT DISTINCT * FROM R", &schema()).unwrap_err();
        assert!(err.to_string().contains("list its output columns"), "{err}");
        let err = parse_sql(
            "SELECT DISTINCT R.A FROM R WHERE EXISTS (SELECT DISTINCT S.B FROM S)",
            &schema(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("implied in subqueries"), "{err}");
    }

    #[test]
    fn or_requires_full_mode() {
        let text = "SELECT DISTINCT R.A FROM R WHERE (R.A = 1 OR R.A = 2)";
        let err = parse_sql(text, &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
        let u = parse_sql_full(text, &schema()).unwrap();
        let SqlQuery::Select(s) = &u.cells[0] else { panic!() };
        assert!(matches!(&s.preds[0], SqlPred::Or(ps) if ps.len() == 2));
    }

    #[test]
    fn union_splits_cells_in_full_mode() {
        let text = "SELECT DISTINCT R.A FROM R UNION SELECT DISTINCT R.A FROM R WHERE R.A = 1";
        let u = parse_sql_full(text, &schema()).unwrap();
        assert_eq!(u.cells.len(), 2);
        let err = parse_sql(text, &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
    }

    #[test]
    fn sentences_parse() {
        let q = parse_sql(
            "SELECT NOT (EXISTS (SELECT * FROM R WHERE R.A = 1))",
            &schema(),
        )
        .unwrap();
        assert!(matches!(q, SqlQuery::SentenceNot(_)));
        let q = parse_sql("SELECT EXISTS (SELECT * FROM R)", &schema()).unwrap();
        assert!(matches!(q, SqlQuery::SentenceExists { negated: false, .. }));
        let q = parse_sql("SELECT NOT EXISTS (SELECT * FROM R)", &schema()).unwrap();
        assert!(matches!(q, SqlQuery::SentenceExists { negated: true, .. }));
    }

    #[test]
    fn not_group_parses_as_negation() {
        let q = parse_sql(
            "SELECT DISTINCT R.A FROM R WHERE NOT (R.A = 1 AND R.B = 2)",
            &schema(),
        )
        .unwrap();
        let SqlQuery::Select(s) = &q else { panic!() };
        let SqlPred::Not(inner) = &s.preds[0] else { panic!() };
        assert!(matches!(&**inner, SqlPred::And(ps) if ps.len() == 2));
    }

    #[test]
    fn unresolved_columns_rejected() {
        let err = parse_sql("SELECT DISTINCT R.C FROM R", &schema()).unwrap_err();
        assert!(matches!(err, Error::UnknownAttribute { .. }), "{err}");
        let err = parse_sql("SELECT DISTINCT T.A FROM R", &schema()).unwrap_err();
        assert!(err.to_string().contains("unknown table alias"), "{err}");
        // Bare B is ambiguous in FROM R, S.
        let err = parse_sql("SELECT DISTINCT B FROM R, S", &schema()).unwrap_err();
        assert!(err.to_string().contains("ambiguous"), "{err}");
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let q1 = parse_sql("select distinct R.A from R where R.A = 1", &schema()).unwrap();
        let q2 = parse_sql("SELECT DISTINCT R.A FROM R WHERE R.A = 1", &schema()).unwrap();
        assert_eq!(q1, q2);
    }
}
