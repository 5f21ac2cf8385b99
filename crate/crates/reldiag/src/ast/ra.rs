//! Relational algebra over the named perspective.
//!
//! Expressions are operator trees over base relation leaves. Attribute
//! references in conditions are bare names or `Relation.name` qualified
//! references; a qualified reference resolves to the column that descends
//! from a leaf of that relation. References that do not resolve to
//! exactly one column are rejected — disambiguation is the job of
//! `Rename`.

use crate::ast::ColRef;
use crate::error::{Error, Result};
use crate::model::{CompOp, Schema, Value};

/// An atomic condition of a selection or theta-join.
#[derive(Debug, Clone, PartialEq)]
pub enum RaPred {
    /// `col op col`.
    Join { left: ColRef, op: CompOp, right: ColRef },
    /// `col op constant`.
    Sel { left: ColRef, op: CompOp, value: Value },
}

/// A relational algebra expression.
#[derive(Debug, Clone, PartialEq)]
pub enum RaExpr {
    /// A base relation occurrence.
    Rel(String),
    /// `Project[cols](e)` — also reorders columns.
    Project { attrs: Vec<ColRef>, input: Box<RaExpr> },
    /// `Select[p and p and ...](e)` — a conjunction of simple conditions.
    Select { preds: Vec<RaPred>, input: Box<RaExpr> },
    /// `Product(e1, e2)` — operand column names must be disjoint.
    Product(Box<RaExpr>, Box<RaExpr>),
    /// `Join(e1, e2)` — natural join on the shared column names.
    NatJoin(Box<RaExpr>, Box<RaExpr>),
    /// `Join[cond](e1, e2)` — theta join; column names must be disjoint.
    ThetaJoin {
        preds: Vec<RaPred>,
        left: Box<RaExpr>,
        right: Box<RaExpr>,
    },
    /// `Minus(e1, e2)` — operands must have identical column name lists.
    Minus(Box<RaExpr>, Box<RaExpr>),
    /// `Union(e1, e2)` — full mode only; identical column name lists.
    Union(Box<RaExpr>, Box<RaExpr>),
    /// `Rename[old -> new, ...](e)`.
    Rename {
        map: Vec<(String, String)>,
        input: Box<RaExpr>,
    },
}

impl RaExpr {
    pub fn rel(name: &str) -> RaExpr {
        RaExpr::Rel(name.to_string())
    }

    pub fn project(attrs: &[&str], input: RaExpr) -> RaExpr {
        RaExpr::Project {
            attrs: attrs.iter().map(|a| ColRef::bare(a)).collect(),
            input: Box::new(input),
        }
    }

    pub fn select(preds: Vec<RaPred>, input: RaExpr) -> RaExpr {
        RaExpr::Select {
            preds,
            input: Box::new(input),
        }
    }

    pub fn product(l: RaExpr, r: RaExpr) -> RaExpr {
        RaExpr::Product(Box::new(l), Box::new(r))
    }

    pub fn natjoin(l: RaExpr, r: RaExpr) -> RaExpr {
        RaExpr::NatJoin(Box::new(l), Box::new(r))
    }

    pub fn minus(l: RaExpr, r: RaExpr) -> RaExpr {
        RaExpr::Minus(Box::new(l), Box::new(r))
    }

    pub fn union(l: RaExpr, r: RaExpr) -> RaExpr {
        RaExpr::Union(Box::new(l), Box::new(r))
    }

    pub fn rename(map: &[(&str, &str)], input: RaExpr) -> RaExpr {
        RaExpr::Rename {
            map: map.iter().map(|(o, n)| (o.to_string(), n.to_string())).collect(),
            input: Box::new(input),
        }
    }

    /// Does the expression contain a `Union` node (full mode only)?
    pub fn contains_union(&self) -> bool {
        match self {
            RaExpr::Rel(_) => false,
            RaExpr::Union(_, _) => true,
            RaExpr::Project { input, .. } | RaExpr::Select { input, .. } | RaExpr::Rename { input, .. } => {
                input.contains_union()
            }
            RaExpr::Product(l, r) | RaExpr::NatJoin(l, r) | RaExpr::Minus(l, r) => {
                l.contains_union() || r.contains_union()
            }
            RaExpr::ThetaJoin { left, right, .. } => left.contains_union() || right.contains_union(),
        }
    }
}

/// One output column of an expression: its (bare) name plus the leaf
/// occurrence and base attribute position it descends from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaColumn {
    pub name: String,
    /// Index into the left-to-right list of leaf occurrences.
    pub leaf: usize,
    /// Attribute position within the leaf's base relation.
    pub base_attr: usize,
}

/// Static analysis result for an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaInfo {
    /// Relation name of each leaf occurrence, left to right.
    pub leaves: Vec<String>,
    /// Output columns of the root.
    pub columns: Vec<RaColumn>,
}

/// Compute output columns and leaf occurrences, validating the
/// expression: conditions resolve to exactly one column, product and
/// theta-join operands have disjoint column names, minus and union
/// operands have identical column name lists, projections and renamings
/// are well formed.
pub fn analyze(expr: &RaExpr, schema: &Schema) -> Result<RaInfo> {
    let mut leaves = Vec::new();
    let columns = walk(expr, schema, &mut leaves)?;
    Ok(RaInfo { leaves, columns })
}

fn walk(expr: &RaExpr, schema: &Schema, leaves: &mut Vec<String>) -> Result<Vec<RaColumn>> {
    match expr {
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
            let cols = walk(input, schema, leaves)?;
            if attrs.is_empty() {
                return Err(Error::Scope {
                    detail: "projection needs at least one column".into(),
                });
            }
            let mut out = Vec::new();
            for a in attrs {
                let idx = resolve_col(&cols, leaves, a)?;
                out.push(cols[idx].clone());
            }
            check_distinct_names(&out)?;
            Ok(out)
        }
        RaExpr::Select { preds, input } => {
            let cols = walk(input, schema, leaves)?;
            resolve_preds(preds, &cols, leaves)?;
            Ok(cols)
        }
        RaExpr::Product(l, r) | RaExpr::ThetaJoin { left: l, right: r, .. } => {
            let lc = walk(l, schema, leaves)?;
            let rc = walk(r, schema, leaves)?;
            for c in &rc {
                if lc.iter().any(|d| d.name == c.name) {
                    return Err(Error::Scope {
                        detail: format!(
                            "column `{}` appears on both sides; rename one operand",
                            c.name
                        ),
                    });
                }
            }
            let cols: Vec<RaColumn> = lc.into_iter().chain(rc).collect();
            if let RaExpr::ThetaJoin { preds, .. } = expr {
                resolve_preds(preds, &cols, leaves)?;
            }
            Ok(cols)
        }
        RaExpr::NatJoin(l, r) => {
            let lc = walk(l, schema, leaves)?;
            let rc = walk(r, schema, leaves)?;
            let mut cols = lc.clone();
            for c in rc {
                if !lc.iter().any(|d| d.name == c.name) {
                    cols.push(c);
                }
            }
            Ok(cols)
        }
        RaExpr::Minus(l, r) | RaExpr::Union(l, r) => {
            let lc = walk(l, schema, leaves)?;
            let rc = walk(r, schema, leaves)?;
            let ln: Vec<&str> = lc.iter().map(|c| c.name.as_str()).collect();
            let rn: Vec<&str> = rc.iter().map(|c| c.name.as_str()).collect();
            if ln != rn {
                return Err(Error::Scope {
                    detail: format!(
                        "operands of {} must expose the same columns, got ({}) and ({})",
                        if matches!(expr, RaExpr::Minus(_, _)) { "Minus" } else { "Union" },
                        ln.join(", "),
                        rn.join(", ")
                    ),
                });
            }
            Ok(lc)
        }
        RaExpr::Rename { map, input } => {
            let mut cols = walk(input, schema, leaves)?;
            for (old, new) in map {
                let matches: Vec<usize> = cols
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.name == *old)
                    .map(|(i, _)| i)
                    .collect();
                match matches.len() {
                    1 => cols[matches[0]].name = new.clone(),
                    0 => {
                        return Err(Error::Scope {
                            detail: format!("rename source `{old}` does not exist"),
                        })
                    }
                    _ => {
                        return Err(Error::Scope {
                            detail: format!("rename source `{old}` is ambiguous"),
                        })
                    }
                }
            }
            check_distinct_names(&cols)?;
            Ok(cols)
        }
    }
}

fn check_distinct_names(cols: &[RaColumn]) -> Result<()> {
    for (i, c) in cols.iter().enumerate() {
        if cols[..i].iter().any(|d| d.name == c.name) {
            return Err(Error::Scope {
                detail: format!("duplicate column name `{}`", c.name),
            });
        }
    }
    Ok(())
}

fn resolve_preds(preds: &[RaPred], cols: &[RaColumn], leaves: &[String]) -> Result<()> {
    for p in preds {
        match p {
            RaPred::Join { left, right, .. } => {
                resolve_col(cols, leaves, left)?;
                resolve_col(cols, leaves, right)?;
            }
            RaPred::Sel { left, .. } => {
                resolve_col(cols, leaves, left)?;
            }
        }
    }
    Ok(())
}

/// Resolve a column reference against a column list; the qualifier, if
/// present, must equal the relation name of the leaf the column descends
/// from.
pub fn resolve_col(cols: &[RaColumn], leaves: &[String], r: &ColRef) -> Result<usize> {
    let matches: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            c.name == r.attr
                && r.qualifier
                    .as_ref()
                    .is_none_or(|q| leaves.get(c.leaf).map(String::as_str) == Some(q))
        })
        .map(|(i, _)| i)
        .collect();
    match matches.len() {
        1 => Ok(matches[0]),
        0 => Err(Error::Scope {
            detail: format!("column `{r}` does not exist here"),
        }),
        _ => Err(Error::Scope {
            detail: format!("column `{r}` is ambiguous; rename one occurrence"),
        }),
    }
}

/// Extensional table occurrences: the leaves, left to right.
pub fn extensional_tables(expr: &RaExpr) -> Vec<String> {
    fn collect(e: &RaExpr, out: &mut Vec<String>) {
        match e {
            RaExpr::Rel(n) => out.push(n.clone()),
            RaExpr::Project { input, .. } | RaExpr::Select { input, .. } | RaExpr::Rename { input, .. } => {
                collect(input, out)
            }
            RaExpr::Product(l, r) | RaExpr::NatJoin(l, r) | RaExpr::Minus(l, r) | RaExpr::Union(l, r) => {
                collect(l, out);
                collect(r, out);
            }
            RaExpr::ThetaJoin { left, right, .. } => {
                collect(left, out);
                collect(right, out);
            }
        }
    }
    let mut out = Vec::new();
    collect(expr, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        let mut s = Schema::new();
        s.add_relation("R", &["A", "B"]).unwrap();
        s.add_relation("S", &["B"]).unwrap();
        s
    }

    /// `R - (Project[A](R) x S)` — set difference of R with a product.
    fn difference_expr() -> RaExpr {
        RaExpr::minus(
            RaExpr::rel("R"),
            RaExpr::product(RaExpr::project(&["A"], RaExpr::rel("R")), RaExpr::rel("S")),
        )
    }

    #[test]
    fn leaves_left_to_right() {
        assert_eq!(extensional_tables(&difference_expr()), vec!["R", "R", "S"]);
    }

    #[test]
    fn analyze_difference() {
        let info = analyze(&difference_expr(), &schema()).unwrap();
        let names: Vec<&str> = info.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["A", "B"]);
        assert_eq!(info.leaves, vec!["R", "R", "S"]);
        // Output columns descend from the left operand (leaf 0).
        assert!(info.columns.iter().all(|c| c.leaf == 0));
    }

    #[test]
    fn natural_join_collapses_shared_columns() {
        // R(A,B) natural-join S(B) keeps columns A, B.
        let e = RaExpr::natjoin(RaExpr::rel("R"), RaExpr::rel("S"));
        let info = analyze(&e, &schema()).unwrap();
        let names: Vec<&str> = info.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["A", "B"]);
    }

    #[test]
    fn product_rejects_name_collision() {
        let e = RaExpr::product(RaExpr::rel("R"), RaExpr::rel("R"));
        let err = analyze(&e, &schema()).unwrap_err();
        assert!(matches!(err, Error::Scope { .. }), "{err}");
    }

    #[test]
    fn rename_resolves_collision() {
        let e = RaExpr::product(
            RaExpr::rel("R"),
            RaExpr::rename(&[("A", "A2"), ("B", "B2")], RaExpr::rel("R")),
        );
        let info = analyze(&e, &schema()).unwrap();
        let names: Vec<&str> = info.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["A", "B", "A2", "B2"]);
        assert_eq!(info.columns[2].leaf, 1);
        assert_eq!(info.columns[2].base_attr, 0);
    }

    #[test]
    fn qualified_reference_follows_leaf_provenance() {
        let e = RaExpr::product(
            RaExpr::rel("S"),
            RaExpr::rename(&[("B", "B2")], RaExpr::rel("R")),
        );
        let info = analyze(&e, &schema()).unwrap();
        // `R.A` resolves to the column descending from the R leaf.
        let idx = resolve_col(&info.columns, &info.leaves, &ColRef::qualified("R", "A")).unwrap();
        assert_eq!(info.columns[idx].leaf, 1);
        // `S.A` does not exist.
        assert!(resolve_col(&info.columns, &info.leaves, &ColRef::qualified("S", "A")).is_err());
    }

    #[test]
    fn ambiguous_reference_is_rejected() {
        let e = RaExpr::natjoin(RaExpr::rel("R"), RaExpr::rel("S"));
        let info = analyze(&e, &schema()).unwrap();
        // Natural join keeps one B column; bare B resolves.
        resolve_col(&info.columns, &info.leaves, &ColRef::bare("B")).unwrap();
        // Two R leaves under distinct names: qualified R.A2 is fine, R.A is fine,
        // but a bare reference to a name present twice must fail.
        let e2 = RaExpr::product(
            RaExpr::rel("R"),
            RaExpr::rename(&[("A", "A2"), ("B", "B2")], RaExpr::rel("R")),
        );
        let info2 = analyze(&e2, &schema()).unwrap();
        let err = resolve_col(&info2.columns, &info2.leaves, &ColRef::qualified("R", "C"));
        assert!(err.is_err());
        // Qualifier R matches both leaves, but only one has a column still
        // named A, so R.A resolves.
        resolve_col(&info2.columns, &info2.leaves, &ColRef::qualified("R", "A")).unwrap();
    }

    #[test]
    fn minus_requires_matching_columns() {
        let e = RaExpr::minus(RaExpr::rel("R"), RaExpr::rel("S"));
        assert!(analyze(&e, &schema()).is_err());
    }
}
