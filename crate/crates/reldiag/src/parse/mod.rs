//! Text front ends and pretty printers for the four query languages.
//!
//! Every parser validates its result against the schema before returning,
//! so a successful parse is a well-formed query. `--` starts a line
//! comment in all four languages. Fragment-mode parsers reject
//! disjunction (`OR`, `Union`); the `_full` variants accept it as input
//! for disjunction elimination.

mod data;
mod datalog;
mod lex;
mod print;
mod ra;
mod sql;
mod trc;

pub use data::{parse_database, parse_schema};
pub use datalog::parse_datalog;
pub use print::{
    print_datalog, print_ra, print_sql, print_sql_union, print_trc, print_trc_full, print_trc_union,
};
pub use ra::{parse_ra, parse_ra_full};
pub use sql::{parse_sql, parse_sql_full};
pub use trc::{parse_trc, parse_trc_full};

use crate::ast::{Lang, LangQuery};
use crate::error::Result;
use crate::model::Schema;

/// Parse one query of the given language in fragment mode.
pub fn parse_query(text: &str, lang: Lang, schema: &Schema) -> Result<LangQuery> {
    Ok(match lang {
        Lang::Sql => LangQuery::Sql(parse_sql(text, schema)?),
        Lang::Trc => LangQuery::Trc(parse_trc(text, schema)?),
        Lang::Datalog => LangQuery::Datalog(parse_datalog(text, schema)?),
        Lang::Ra => LangQuery::Ra(parse_ra(text, schema)?),
    })
}

/// Print one query of any language in its canonical layout.
pub fn print_query(q: &LangQuery) -> String {
    match q {
        LangQuery::Sql(q) => print_sql(q),
        LangQuery::Trc(q) => print_trc(q),
        LangQuery::Datalog(p) => print_datalog(p),
        LangQuery::Ra(e) => print_ra(e),
    }
}
