//! Non-recursive Datalog with negation.
//!
//! Programs are lists of rules; every intensional (IDB) predicate heads
//! exactly one rule, dependencies are acyclic, and the head of the last
//! rule is the distinguished answer predicate.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{CompOp, Schema, Value};

/// A term of a built-in comparison. Relational atoms hold only variables;
/// constants enter rules through built-ins (`x = 1`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

/// A relational atom `pred(x, y, ...)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub pred: String,
    /// Variable names. Names beginning with `_` are anonymous: they are
    /// generated at parse time, occur exactly once, and print as `_`.
    pub vars: Vec<String>,
}

impl Atom {
    pub fn new(pred: &str, vars: &[&str]) -> Atom {
        Atom {
            pred: pred.to_string(),
            vars: vars.iter().map(|v| v.to_string()).collect(),
        }
    }
}

/// A body literal.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Pos(Atom),
    Neg(Atom),
    /// A built-in comparison; at least one side is a variable.
    Cmp { left: Term, op: CompOp, right: Term },
}

/// One rule `head :- body.`
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
}

/// A program. The answer predicate is the head of the last rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DatalogProgram {
    pub rules: Vec<Rule>,
}

impl DatalogProgram {
    pub fn answer(&self) -> &Atom {
        &self.rules.last().expect("programs are non-empty").head
    }

    /// Names of the intensional predicates, in rule order.
    pub fn idb_names(&self) -> Vec<&str> {
        self.rules.iter().map(|r| r.head.pred.as_str()).collect()
    }

    pub fn rule_for(&self, idb: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.head.pred == idb)
    }
}

/// Extensional table occurrences: rules in program order, then positive
/// and negated base-relation atoms in body position order. IDB references
/// are not extensional.
pub fn extensional_tables(p: &DatalogProgram, schema: &Schema) -> Vec<String> {
    let mut out = Vec::new();
    for rule in &p.rules {
        for lit in &rule.body {
            let atom = match lit {
                Literal::Pos(a) | Literal::Neg(a) => a,
                Literal::Cmp { .. } => continue,
            };
            if schema.contains(&atom.pred) {
                out.push(atom.pred.clone());
            }
        }
    }
    out
}

/// Validate a program against a schema:
///
/// * every IDB heads exactly one rule and does not shadow a base relation;
/// * atom arities match the schema (base relations) or the defining head
///   (IDB references);
/// * head variables are distinct;
/// * the dependency graph over IDB predicates is acyclic;
/// * every rule is safe: each head variable and each variable of a
///   negated atom or built-in is bound — it occurs in a positive
///   relational atom of the same rule, or an equality chain connects it
///   to a bound variable or constant.
pub fn validate(p: &DatalogProgram, schema: &Schema) -> Result<()> {
    if p.rules.is_empty() {
        return Err(Error::Safety {
            detail: "a program must contain at least one rule".into(),
        });
    }
    let mut arities: BTreeMap<&str, usize> = BTreeMap::new();
    for rule in &p.rules {
        let name = rule.head.pred.as_str();
        if schema.contains(name) {
            return Err(Error::Scope {
                detail: format!("rule head `{name}` shadows a base relation"),
            });
        }
        if arities.insert(name, rule.head.vars.len()).is_some() {
            return Err(Error::MultipleRules { idb: name.into() });
        }
        let mut seen = BTreeSet::new();
        for v in &rule.head.vars {
            if !seen.insert(v) {
                return Err(Error::Safety {
                    detail: format!("head variable `{v}` repeated in `{name}`"),
                });
            }
        }
    }
    for rule in &p.rules {
        for lit in &rule.body {
            if let Literal::Pos(a) | Literal::Neg(a) = lit {
                let expected = if let Some(n) = arities.get(a.pred.as_str()) {
                    *n
                } else {
                    schema.arity(&a.pred)?
                };
                if a.vars.len() != expected {
                    return Err(Error::Arity {
                        relation: a.pred.clone(),
                        expected,
                        got: a.vars.len(),
                    });
                }
            }
        }
        check_rule_safety(rule)?;
    }
    check_acyclic(p)?;
    Ok(())
}

fn check_rule_safety(rule: &Rule) -> Result<()> {
    // Bound variables: fixpoint over positive atoms and equality chains.
    let mut bound: BTreeSet<&str> = BTreeSet::new();
    for lit in &rule.body {
        if let Literal::Pos(a) = lit {
            bound.extend(a.vars.iter().map(String::as_str));
        }
    }
    loop {
        let mut changed = false;
        for lit in &rule.body {
            if let Literal::Cmp {
                left,
                op: CompOp::Eq,
                right,
            } = lit
            {
                for (a, b) in [(left, right), (right, left)] {
                    let a_grounded = match a {
                        Term::Const(_) => true,
                        Term::Var(v) => bound.contains(v.as_str()),
                    };
                    if a_grounded {
                        if let Term::Var(v) = b {
                            changed |= bound.insert(v);
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let check = |v: &str, place: &str| -> Result<()> {
        if bound.contains(v) {
            Ok(())
        } else {
            Err(Error::Safety {
                detail: format!("variable `{v}` in {place} of `{}` is not bound", rule.head.pred),
            })
        }
    };
    for v in &rule.head.vars {
        check(v, "the head")?;
    }
    for lit in &rule.body {
        match lit {
            Literal::Neg(a) => {
                for v in &a.vars {
                    check(v, "a negated atom")?;
                }
            }
            Literal::Cmp { left, right, .. } => {
                for t in [left, right] {
                    if let Term::Var(v) = t {
                        check(v, "a built-in")?;
                    }
                }
            }
            Literal::Pos(_) => {}
        }
    }
    Ok(())
}

fn check_acyclic(p: &DatalogProgram) -> Result<()> {
    let idbs: BTreeSet<&str> = p.rules.iter().map(|r| r.head.pred.as_str()).collect();
    // DFS from each rule; single rule per IDB makes this a simple walk.
    fn visit<'a>(
        p: &'a DatalogProgram,
        name: &'a str,
        visiting: &mut Vec<&'a str>,
        done: &mut BTreeSet<&'a str>,
        idbs: &BTreeSet<&'a str>,
    ) -> Result<()> {
        if done.contains(name) {
            return Ok(());
        }
        if visiting.contains(&name) {
            return Err(Error::Recursion { idb: name.into() });
        }
        visiting.push(name);
        if let Some(rule) = p.rule_for(name) {
            for lit in &rule.body {
                if let Literal::Pos(a) | Literal::Neg(a) = lit {
                    if idbs.contains(a.pred.as_str()) {
                        visit(p, &a.pred, visiting, done, idbs)?;
                    }
                }
            }
        }
        visiting.pop();
        done.insert(name);
        Ok(())
    }
    let mut done = BTreeSet::new();
    for rule in &p.rules {
        visit(p, &rule.head.pred, &mut Vec::new(), &mut done, &idbs)?;
    }
    Ok(())
}

/// Rules in dependency order (callees before callers), preserving program
/// order among independent rules. The program must be acyclic.
pub fn topological_rules(p: &DatalogProgram) -> Vec<&Rule> {
    let idbs: BTreeSet<&str> = p.rules.iter().map(|r| r.head.pred.as_str()).collect();
    let mut done: Vec<&Rule> = Vec::new();
    let mut emitted: BTreeSet<&str> = BTreeSet::new();
    fn emit<'a>(
        p: &'a DatalogProgram,
        rule: &'a Rule,
        idbs: &BTreeSet<&'a str>,
        emitted: &mut BTreeSet<&'a str>,
        done: &mut Vec<&'a Rule>,
    ) {
        if emitted.contains(rule.head.pred.as_str()) {
            return;
        }
        emitted.insert(&rule.head.pred);
        for lit in &rule.body {
            if let Literal::Pos(a) | Literal::Neg(a) = lit {
                if idbs.contains(a.pred.as_str()) {
                    if let Some(dep) = p.rule_for(&a.pred) {
                        emit(p, dep, idbs, emitted, done);
                    }
                }
            }
        }
        done.push(rule);
    }
    for rule in &p.rules {
        emit(p, rule, &idbs, &mut emitted, &mut done);
    }
    done
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

    /// `I(x, y) :- R(x, _), S(y).  Q(x, y) :- R(x, y), not I(x, y).`
    fn program() -> DatalogProgram {
        DatalogProgram {
            rules: vec![
                Rule {
                    head: Atom::new("I", &["x", "y"]),
                    body: vec![
                        Literal::Pos(Atom::new("R", &["x", "_1"])),
                        Literal::Pos(Atom::new("S", &["y"])),
                    ],
                },
                Rule {
                    head: Atom::new("Q", &["x", "y"]),
                    body: vec![
                        Literal::Pos(Atom::new("R", &["x", "y"])),
                        Literal::Neg(Atom::new("I", &["x", "y"])),
                    ],
                },
            ],
        }
    }

    #[test]
    fn answer_is_last_rule_head() {
        assert_eq!(program().answer().pred, "Q");
    }

    #[test]
    fn extensional_tables_in_rule_and_body_order() {
        assert_eq!(extensional_tables(&program(), &schema()), vec!["R", "S", "R"]);
    }

    #[test]
    fn validate_accepts_wellformed() {
        validate(&program(), &schema()).unwrap();
    }

    #[test]
    fn validate_rejects_unsafe_negation() {
        // Q(x) :- R(x, _), not S(y): y is not bound.
        let p = DatalogProgram {
            rules: vec![Rule {
                head: Atom::new("Q", &["x"]),
                body: vec![
                    Literal::Pos(Atom::new("R", &["x", "_1"])),
                    Literal::Neg(Atom::new("S", &["y"])),
                ],
            }],
        };
        let err = validate(&p, &schema()).unwrap_err();
        assert!(matches!(err, Error::Safety { .. }), "{err}");
    }

    #[test]
    fn validate_rejects_unbound_head() {
        let p = DatalogProgram {
            rules: vec![Rule {
                head: Atom::new("Q", &["x", "z"]),
                body: vec![Literal::Pos(Atom::new("R", &["x", "y"]))],
            }],
        };
        assert!(validate(&p, &schema()).is_err());
    }

    #[test]
    fn equality_chain_binds() {
        // Q(z) :- R(x, y), z = x.
        let p = DatalogProgram {
            rules: vec![Rule {
                head: Atom::new("Q", &["z"]),
                body: vec![
                    Literal::Pos(Atom::new("R", &["x", "y"])),
                    Literal::Cmp {
                        left: Term::Var("z".into()),
                        op: CompOp::Eq,
                        right: Term::Var("x".into()),
                    },
                ],
            }],
        };
        validate(&p, &schema()).unwrap();
    }

    #[test]
    fn validate_rejects_recursion() {
        let p = DatalogProgram {
            rules: vec![
                Rule {
                    head: Atom::new("P", &["x"]),
                    body: vec![
                        Literal::Pos(Atom::new("S", &["x"])),
                        Literal::Neg(Atom::new("Q", &["x"])),
                    ],
                },
                Rule {
                    head: Atom::new("Q", &["x"]),
                    body: vec![Literal::Pos(Atom::new("P", &["x"]))],
                },
            ],
        };
        let err = validate(&p, &schema()).unwrap_err();
        assert!(matches!(err, Error::Recursion { .. }), "{err}");
    }

    #[test]
    fn validate_rejects_two_rules_per_idb() {
        let p = DatalogProgram {
            rules: vec![
                Rule {
                    head: Atom::new("Q", &["x"]),
                    body: vec![Literal::Pos(Atom::new("S", &["x"]))],
                },
                Rule {
                    head: Atom::new("Q", &["y"]),
                    body: vec![Literal::Pos(Atom::new("S", &["y"]))],
                },
            ],
        };
        let err = validate(&p, &schema()).unwrap_err();
        assert!(matches!(err, Error::MultipleRules { .. }), "{err}");
    }

    #[test]
    fn validate_rejects_idb_shadowing_base_relation() {
        let p = DatalogProgram {
            rules: vec![Rule {
                head: Atom::new("S", &["x"]),
                body: vec![Literal::Pos(Atom::new("R", &["x", "y"]))],
            }],
        };
        assert!(validate(&p, &schema()).is_err());
    }

    #[test]
    fn topological_order_puts_callees_first() {
        let p = program();
        let order: Vec<&str> = topological_rules(&p).iter().map(|r| r.head.pred.as_str()).collect();
        assert_eq!(order, vec!["I", "Q"]);
    }
}
