//! Tuple relational calculus.
//!
//! The canonical form ([`TrcQuery`]) keeps quantifiers only at scope
//! heads: a query is a tree of scopes, each quantifying a list of table
//! variables, holding a conjunction of comparison predicates, and holding
//! child scopes that are negated existential subformulas. The full form
//! ([`TrcFullQuery`]) additionally admits disjunction and mid-formula
//! quantifiers; it is the input to quantifier pull-up and disjunction
//! elimination.

use crate::error::{Error, Result};
use crate::model::{CompOp, Schema, Value};

/// `{ name(attrs) | ... }` — the output relation of a query. `None`
/// output marks a sentence (a Boolean query).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSpec {
    pub name: String,
    pub attrs: Vec<String>,
}

/// A reference `var.attr` to an attribute of a table variable (or of the
/// output relation, for output-binding predicates).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AttrRef {
    pub var: String,
    pub attr: String,
}

impl AttrRef {
    pub fn new(var: &str, attr: &str) -> AttrRef {
        AttrRef {
            var: var.to_string(),
            attr: attr.to_string(),
        }
    }
}

impl std::fmt::Display for AttrRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.var, self.attr)
    }
}

/// A quantified table variable: `var in relation`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrcVar {
    pub name: String,
    pub relation: String,
}

impl TrcVar {
    pub fn new(name: &str, relation: &str) -> TrcVar {
        TrcVar {
            name: name.to_string(),
            relation: relation.to_string(),
        }
    }
}

/// An atomic comparison predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum TrcPred {
    /// `v.a op w.b` — includes output bindings, where one side references
    /// the output relation name.
    Join {
        left: AttrRef,
        op: CompOp,
        right: AttrRef,
    },
    /// `v.a op constant`.
    Sel {
        left: AttrRef,
        op: CompOp,
        value: Value,
    },
}

impl TrcPred {
    /// Attribute references of this predicate (1 or 2).
    pub fn refs(&self) -> Vec<&AttrRef> {
        match self {
            TrcPred::Join { left, right, .. } => vec![left, right],
            TrcPred::Sel { left, .. } => vec![left],
        }
    }
}

/// A quantifier scope: the head quantifies `vars`, the body is the
/// conjunction of `preds` and of the negations of the child scopes.
///
/// A scope with an empty head is legal; it arises from doubled negation
/// (`not ( not exists ... )`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrcScope {
    pub vars: Vec<TrcVar>,
    pub preds: Vec<TrcPred>,
    pub negations: Vec<TrcScope>,
}

/// A canonical TRC query or sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrcQuery {
    /// `Some` for queries, `None` for sentences.
    pub output: Option<OutputSpec>,
    pub root: TrcScope,
}

impl TrcQuery {
    pub fn is_sentence(&self) -> bool {
        self.output.is_none()
    }

    /// True if `name` refers to the output relation.
    pub fn is_output_name(&self, name: &str) -> bool {
        self.output.as_ref().is_some_and(|o| o.name == name)
    }

    /// Visit every scope in pre-order with its path of child indices.
    pub fn visit_scopes<'a>(&'a self, f: &mut impl FnMut(&'a TrcScope, &[usize])) {
        fn walk<'a>(s: &'a TrcScope, path: &mut Vec<usize>, f: &mut impl FnMut(&'a TrcScope, &[usize])) {
            f(s, path);
            for (i, child) in s.negations.iter().enumerate() {
                path.push(i);
                walk(child, path, f);
                path.pop();
            }
        }
        walk(&self.root, &mut Vec::new(), f);
    }
}

/// Extensional table occurrences: scope heads in pre-order, variables in
/// quantification order.
pub fn extensional_tables(q: &TrcQuery) -> Vec<String> {
    let mut out = Vec::new();
    q.visit_scopes(&mut |s, _| {
        for v in &s.vars {
            out.push(v.relation.clone());
        }
    });
    out
}

/// Check well-formedness of a canonical query against a schema:
/// relations exist, every reference resolves to a variable quantified on
/// the path from the root to its scope, attribute names exist, variable
/// names are unique along every root-to-leaf path, and (for queries)
/// every output attribute is bound by exactly one equality predicate in
/// the root scope to an attribute of a root-scope variable.
pub fn validate(q: &TrcQuery, schema: &Schema) -> Result<()> {
    if let Some(out) = &q.output {
        let mut seen = std::collections::BTreeSet::new();
        for a in &out.attrs {
            if !seen.insert(a) {
                return Err(Error::Safety {
                    detail: format!("output attribute `{a}` declared twice"),
                });
            }
        }
        if out.attrs.is_empty() {
            return Err(Error::Safety {
                detail: "a query must have at least one output attribute".into(),
            });
        }
    }
    check_scope(q, &q.root, schema, &mut Vec::new(), true)?;
    if let Some(out) = &q.output {
        // Exactly one root equality `out.attr = rootvar.attr` per output attribute.
        let mut bound: std::collections::BTreeMap<&str, usize> = Default::default();
        for pred in &q.root.preds {
            if let TrcPred::Join { left, op, right } = pred {
                let out_side = [left, right]
                    .into_iter()
                    .filter(|r| r.var == out.name)
                    .collect::<Vec<_>>();
                match out_side.len() {
                    0 => continue,
                    1 => {
                        if *op != CompOp::Eq {
                            return Err(Error::Safety {
                                detail: format!(
                                    "output attribute `{}` used in a non-equality predicate",
                                    out_side[0].attr
                                ),
                            });
                        }
                        let other = if left.var == out.name { right } else { left };
                        if !q.root.vars.iter().any(|v| v.name == other.var) {
                            return Err(Error::Safety {
                                detail: format!(
                                    "output attribute `{}` must be bound to a root-scope table variable",
                                    out_side[0].attr
                                ),
                            });
                        }
                        *bound.entry(out_side[0].attr.as_str()).or_default() += 1;
                    }
                    _ => {
                        return Err(Error::Safety {
                            detail: "predicate relates two output attributes".into(),
                        })
                    }
                }
            }
        }
        for a in &out.attrs {
            match bound.get(a.as_str()) {
                Some(1) => {}
                Some(n) => {
                    return Err(Error::Safety {
                        detail: format!("output attribute `{a}` bound {n} times"),
                    })
                }
                None => {
                    return Err(Error::Safety {
                        detail: format!("output attribute `{a}` is not bound"),
                    })
                }
            }
        }
    }
    Ok(())
}

fn check_scope(
    q: &TrcQuery,
    scope: &TrcScope,
    schema: &Schema,
    stack: &mut Vec<TrcVar>,
    is_root: bool,
) -> Result<()> {
    for v in &scope.vars {
        if stack.iter().any(|s| s.name == v.name) {
            return Err(Error::Scope {
                detail: format!("variable `{}` shadows a variable of an enclosing scope", v.name),
            });
        }
        if scope.vars.iter().filter(|o| o.name == v.name).count() > 1 {
            return Err(Error::Scope {
                detail: format!("variable `{}` quantified twice in one scope head", v.name),
            });
        }
        if q.is_output_name(&v.name) {
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
    for pred in &scope.preds {
        for r in pred.refs() {
            if q.is_output_name(&r.var) {
                if !is_root {
                    return Err(Error::Safety {
                        detail: format!(
                            "output attribute `{}` referenced outside the root scope",
                            r.attr
                        ),
                    });
                }
                let out = q.output.as_ref().unwrap();
                if !out.attrs.contains(&r.attr) {
                    return Err(Error::UnknownAttribute {
                        relation: out.name.clone(),
                        attr: r.attr.clone(),
                    });
                }
                continue;
            }
            let var = stack.iter().find(|v| v.name == r.var).ok_or(Error::Scope {
                detail: format!("unknown variable `{}`", r.var),
            })?;
            schema.attr_index(&var.relation, &r.attr)?;
        }
    }
    for child in &scope.negations {
        check_scope(q, child, schema, stack, false)?;
    }
    stack.truncate(depth);
    Ok(())
}

/// Find the relation a variable is bound to along `stack` (innermost last).
pub fn resolve_var<'a>(stack: &'a [TrcVar], name: &str) -> Option<&'a TrcVar> {
    stack.iter().rev().find(|v| v.name == name)
}

// ---------------------------------------------------------------------------
// Full (non-canonical) form: disjunction and mid-formula quantifiers.
// ---------------------------------------------------------------------------

/// A scope of the full form: quantified variables plus an arbitrary
/// formula.
#[derive(Debug, Clone, PartialEq)]
pub struct TrcFullScope {
    pub vars: Vec<TrcVar>,
    pub formula: Formula,
}

/// A formula of the full form.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Pred(TrcPred),
    /// `not (exists vars [ ... ])`, or `not ( ... )` with an empty head.
    Not(Box<TrcFullScope>),
    /// A positive mid-formula quantifier, to be hoisted by pull-up.
    Exists(Box<TrcFullScope>),
}

impl Formula {
    /// Flatten to a conjunction list (identity for non-`And` formulas).
    pub fn conjuncts(self) -> Vec<Formula> {
        match self {
            Formula::And(fs) => fs,
            f => vec![f],
        }
    }

    pub fn and(mut fs: Vec<Formula>) -> Formula {
        if fs.len() == 1 {
            fs.pop().unwrap()
        } else {
            Formula::And(fs)
        }
    }
}

/// A query or sentence in the full form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrcFullQuery {
    pub output: Option<OutputSpec>,
    pub root: TrcFullScope,
}

impl From<&TrcScope> for TrcFullScope {
    fn from(s: &TrcScope) -> TrcFullScope {
        let mut fs: Vec<Formula> = s.preds.iter().cloned().map(Formula::Pred).collect();
        fs.extend(
            s.negations
                .iter()
                .map(|n| Formula::Not(Box::new(TrcFullScope::from(n)))),
        );
        TrcFullScope {
            vars: s.vars.clone(),
            formula: Formula::and(fs),
        }
    }
}

impl From<&TrcQuery> for TrcFullQuery {
    fn from(q: &TrcQuery) -> TrcFullQuery {
        TrcFullQuery {
            output: q.output.clone(),
            root: TrcFullScope::from(&q.root),
        }
    }
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

    /// `{ Q(A, B) | exists r in R [ Q.A = r.A and Q.B = r.B and
    ///   not exists s in S [ s.B = r.B ] ] }`
    fn difference_query() -> TrcQuery {
        TrcQuery {
            output: Some(OutputSpec {
                name: "Q".into(),
                attrs: vec!["A".into(), "B".into()],
            }),
            root: TrcScope {
                vars: vec![TrcVar::new("r", "R")],
                preds: vec![
                    TrcPred::Join {
                        left: AttrRef::new("Q", "A"),
                        op: CompOp::Eq,
                        right: AttrRef::new("r", "A"),
                    },
                    TrcPred::Join {
                        left: AttrRef::new("Q", "B"),
                        op: CompOp::Eq,
                        right: AttrRef::new("r", "B"),
                    },
                ],
                negations: vec![TrcScope {
                    vars: vec![TrcVar::new("s", "S")],
                    preds: vec![TrcPred::Join {
                        left: AttrRef::new("s", "B"),
                        op: CompOp::Eq,
                        right: AttrRef::new("r", "B"),
                    }],
                    negations: vec![],
                }],
            },
        }
    }

    #[test]
    fn extensional_tables_in_quantification_order() {
        assert_eq!(extensional_tables(&difference_query()), vec!["R", "S"]);
    }

    #[test]
    fn validate_accepts_wellformed() {
        validate(&difference_query(), &schema()).unwrap();
    }

    #[test]
    fn validate_rejects_unbound_output() {
        let mut q = difference_query();
        q.root.preds.remove(1);
        let err = validate(&q, &schema()).unwrap_err();
        assert!(matches!(err, Error::Safety { .. }), "{err}");
    }

    #[test]
    fn validate_rejects_shadowing() {
        let mut q = difference_query();
        q.root.negations[0].vars.push(TrcVar::new("r", "R"));
        let err = validate(&q, &schema()).unwrap_err();
        assert!(matches!(err, Error::Scope { .. }), "{err}");
    }

    #[test]
    fn validate_rejects_unknown_attribute() {
        let mut q = difference_query();
        q.root.negations[0].preds.push(TrcPred::Sel {
            left: AttrRef::new("s", "C"),
            op: CompOp::Eq,
            value: Value::Int(0),
        });
        let err = validate(&q, &schema()).unwrap_err();
        assert!(matches!(err, Error::UnknownAttribute { .. }), "{err}");
    }

    #[test]
    fn validate_rejects_nonroot_output_reference() {
        let mut q = difference_query();
        q.root.negations[0].preds.push(TrcPred::Join {
            left: AttrRef::new("s", "B"),
            op: CompOp::Eq,
            right: AttrRef::new("Q", "B"),
        });
        let err = validate(&q, &schema()).unwrap_err();
        assert!(matches!(err, Error::Safety { .. }), "{err}");
    }
}
