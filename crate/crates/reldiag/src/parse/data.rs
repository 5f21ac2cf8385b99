//! Schema and database text formats.
//!
//! Both are line-oriented: one relation (`R(A, B)`) or one tuple
//! (`R(1, "red")`) per line. Blank lines and `#` comments are ignored.

use super::lex::Cursor;
use crate::error::{Error, Result, SourceError};
use crate::model::{Database, Schema};

/// Strip a `#` comment, respecting quoted strings.
fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
            }
            None => match c {
                '\'' | '"' => quote = Some(c),
                '#' => return &line[..i],
                _ => {}
            },
        }
    }
    line
}

/// Parse a schema file: one `R(A, B)` line per relation.
pub fn parse_schema(text: &str) -> Result<Schema> {
    let mut schema = Schema::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let at = |cur: &Cursor, msg: &str| -> Error {
            let mut e = cur.error(msg);
            e.line = lineno;
            e.into()
        };
        let mut cur = Cursor::new(line).map_err(|mut e| {
            e.line = lineno;
            Error::from(e)
        })?;
        let name = cur
            .expect_ident("a relation name", &[])
            .map_err(|_| at(&cur, "expected a relation name"))?;
        cur.expect_punct("(").map_err(|_| at(&cur, "expected `(`"))?;
        let mut attrs = Vec::new();
        loop {
            let attr = cur
                .expect_ident("an attribute name", &[])
                .map_err(|_| at(&cur, "expected an attribute name"))?;
            if attrs.contains(&attr) {
                return Err(at(&cur, "duplicate attribute name"));
            }
            attrs.push(attr);
            if cur.eat_punct(",") {
                continue;
            }
            break;
        }
        cur.expect_punct(")").map_err(|_| at(&cur, "expected `)`"))?;
        cur.expect_end().map_err(|_| at(&cur, "trailing input after the relation"))?;
        if schema.contains(&name) {
            return Err(at(&cur, "relation declared twice"));
        }
        schema.add_relation_owned(name, attrs)?;
    }
    if schema.relations().next().is_none() {
        return Err(Error::Parse(SourceError {
            line: 1,
            column: 1,
            message: "schema declares no relations".to_string(),
            token: None,
        }));
    }
    Ok(schema)
}

/// Parse a database file against `schema`: one `R(1, "red")` line per tuple.
pub fn parse_database(text: &str, schema: &Schema) -> Result<Database> {
    let mut db = Database::empty(schema);
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let at = |cur: &Cursor, msg: &str| -> Error {
            let mut e = cur.error(msg);
            e.line = lineno;
            e.into()
        };
        let mut cur = Cursor::new(line).map_err(|mut e| {
            e.line = lineno;
            Error::from(e)
        })?;
        let name = cur
            .expect_ident("a relation name", &[])
            .map_err(|_| at(&cur, "expected a relation name"))?;
        cur.expect_punct("(").map_err(|_| at(&cur, "expected `(`"))?;
        let mut tuple = Vec::new();
        loop {
            if !cur.at_value() {
                return Err(at(&cur, "expected a constant"));
            }
            tuple.push(cur.expect_value().map_err(Error::from)?);
            if cur.eat_punct(",") {
                continue;
            }
            break;
        }
        cur.expect_punct(")").map_err(|_| at(&cur, "expected `)`"))?;
        cur.expect_end().map_err(|_| at(&cur, "trailing input after the tuple"))?;
        db.insert(schema, &name, tuple)?;
    }
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Value;

    #[test]
    fn parses_schema_lines() {
        let s = parse_schema("# sailors\nR(A, B)\n\nS(B)\n").unwrap();
        assert_eq!(s.attrs("R").unwrap(), &["A".to_string(), "B".to_string()]);
        assert_eq!(s.arity("S").unwrap(), 1);
    }

    #[test]
    fn rejects_duplicate_relation() {
        assert!(parse_schema("R(A)\nR(B)\n").is_err());
        assert!(parse_schema("R(A, A)\n").is_err());
        assert!(parse_schema("").is_err());
    }

    #[test]
    fn parses_database_lines() {
        let s = parse_schema("R(A, B)\nS(B)\n").unwrap();
        let db = parse_database("R(1, \"red\") # first\nR(2, 'blue')\nS(\"red\")\n", &s).unwrap();
        assert_eq!(db.tuples("R").count(), 2);
        assert!(db.contains("S", &vec![Value::Str("red".into())]));
    }

    #[test]
    fn database_errors_carry_line_numbers() {
        let s = parse_schema("R(A, B)\n").unwrap();
        let e = parse_database("R(1, 2)\nR(1)\n", &s).unwrap_err();
        assert!(matches!(e, Error::Arity { .. }), "{e}");
        let e = parse_database("R(1, 2)\nR(1,\n", &s).unwrap_err();
        assert!(e.to_string().contains("2:"), "{e}");
    }

    #[test]
    fn hash_inside_string_is_not_a_comment() {
        let s = parse_schema("R(A)\n").unwrap();
        let db = parse_database("R(\"a#b\")\n", &s).unwrap();
        assert!(db.contains("R", &vec![Value::Str("a#b".into())]));
    }

    #[test]
    fn render_round_trips() {
        let s = parse_schema("R(A, B)\nS(B)\n").unwrap();
        let db = parse_database("R(1, \"r\\\"ed\")\nS(2)\n", &s).unwrap();
        let db2 = parse_database(&db.render(), &s).unwrap();
        assert_eq!(db, db2);
    }
}
