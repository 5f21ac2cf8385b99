//! Datalog parser.
//!
//! ```text
//! I(x) :- R(x, _), S(y), not R(x, y).
//! Q(x) :- R(x, _), not I(x).
//! ```
//!
//! Rules end with `.`; the head of the last rule is the answer predicate.
//! Relational atoms hold variables only — constants enter through
//! built-ins (`x = 1`). Each `_` becomes a fresh anonymous variable.

use super::lex::{Cursor, TokenKind};
use crate::ast::datalog::{Atom, DatalogProgram, Literal, Rule, Term};
use crate::error::Result;
use crate::model::Schema;

const KEYWORDS: &[&str] = &["not"];

/// Parse and validate a Datalog* program.
pub fn parse_datalog(text: &str, schema: &Schema) -> Result<DatalogProgram> {
    let mut cur = Cursor::new(text)?;
    let mut rules = Vec::new();
    let mut anon = 0usize;
    while !cur.at_end() {
        rules.push(rule(&mut cur, &mut anon)?);
    }
    if rules.is_empty() {
        return Err(cur.error("expected at least one rule").into());
    }
    let program = DatalogProgram { rules };
    crate::ast::datalog::validate(&program, schema)?;
    Ok(program)
}

fn rule(cur: &mut Cursor, anon: &mut usize) -> Result<Rule> {
    let head = atom(cur, anon, true)?;
    if cur.at_punct(".") {
        return Err(cur.error("a rule needs a body (`head :- body.`)").into());
    }
    cur.expect_punct(":-")?;
    let mut body = vec![literal(cur, anon)?];
    while cur.eat_punct(",") {
        body.push(literal(cur, anon)?);
    }
    cur.expect_punct(".")?;
    Ok(Rule { head, body })
}

fn literal(cur: &mut Cursor, anon: &mut usize) -> Result<Literal> {
    if cur.eat_keyword("not") {
        return Ok(Literal::Neg(atom(cur, anon, false)?));
    }
    // An atom starts `ident (`; otherwise this is a built-in comparison.
    if matches!(cur.peek().map(|t| &t.kind), Some(TokenKind::Ident(_))) && cur.peek_at(1).is_some_and(|t| t.kind == TokenKind::Punct("(")) {
        return Ok(Literal::Pos(atom(cur, anon, false)?));
    }
    let left = term(cur)?;
    let op = cur.expect_op()?;
    let right = term(cur)?;
    if matches!((&left, &right), (Term::Const(_), Term::Const(_))) {
        return Err(cur.error("a built-in needs at least one variable").into());
    }
    Ok(Literal::Cmp { left, op, right })
}

fn term(cur: &mut Cursor) -> Result<Term> {
    if cur.at_value() {
        return Ok(Term::Const(cur.expect_value()?));
    }
    Ok(Term::Var(cur.expect_ident("a variable or constant", KEYWORDS)?))
}

fn atom(cur: &mut Cursor, anon: &mut usize, is_head: bool) -> Result<Atom> {
    let pred = cur.expect_ident("a predicate name", KEYWORDS)?;
    cur.expect_punct("(")?;
    let mut vars = Vec::new();
    if !cur.at_punct(")") {
        loop {
            if cur.eat_punct("_") {
                if is_head {
                    return Err(cur.error("`_` cannot appear in a rule head").into());
                }
                *anon += 1;
                vars.push(format!("_{anon}"));
            } else if cur.at_value() {
                return Err(cur
                    .error("constants are not allowed in atoms; use a built-in equality (x = 1)")
                    .into());
            } else {
                vars.push(cur.expect_ident("a variable", KEYWORDS)?);
            }
            if !cur.eat_punct(",") {
                break;
            }
        }
    }
    cur.expect_punct(")")?;
    Ok(Atom { pred, vars })
}
