//! Seeded pseudo-random generator of valid canonical TRC queries, used
//! by the round-trip properties. Generated queries are anchored by
//! construction: every predicate's left side references a variable of its
//! own scope head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use reldiag::ast::trc::{AttrRef, OutputSpec, TrcPred, TrcQuery, TrcScope, TrcVar};
use reldiag::model::{CompOp, Schema, Value};

pub struct GenOpts {
    /// Maximum negation-nesting depth below the root.
    pub max_depth: usize,
    /// Maximum total table variables.
    pub max_tables: usize,
    /// Maximum total comparison predicates (output bindings not counted).
    pub max_preds: usize,
    /// Generate a sentence instead of a query with this probability (%).
    pub sentence_pct: u32,
}

impl Default for GenOpts {
    fn default() -> GenOpts {
        GenOpts {
            max_depth: 3,
            max_tables: 5,
            max_preds: 6,
            sentence_pct: 20,
        }
    }
}

const OPS: [CompOp; 6] = [
    CompOp::Lt,
    CompOp::Leq,
    CompOp::Eq,
    CompOp::Geq,
    CompOp::Gt,
    CompOp::Neq,
];

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    relations: Vec<(String, Vec<String>)>,
    tables_left: usize,
    preds_left: usize,
    next_var: usize,
}

impl Gen<'_> {
    fn fresh_var(&mut self, relation: &str) -> TrcVar {
        self.next_var += 1;
        TrcVar::new(&format!("v{}", self.next_var), relation)
    }

    fn pick_relation(&mut self) -> (String, Vec<String>) {
        let i = self.rng.random_range(0..self.relations.len());
        self.relations[i].clone()
    }

    /// Build a scope at `depth` with `n_vars` fresh variables;
    /// `visible` holds ancestor variables (with their attribute lists).
    fn scope(&mut self, depth: usize, n_vars: usize, visible: &[(TrcVar, Vec<String>)]) -> TrcScope {
        let mut own: Vec<(TrcVar, Vec<String>)> = Vec::new();
        for _ in 0..n_vars {
            let (rel, attrs) = self.pick_relation();
            let v = self.fresh_var(&rel);
            own.push((v, attrs));
        }
        self.tables_left -= n_vars;
        let mut scope = TrcScope {
            vars: own.iter().map(|(v, _)| v.clone()).collect(),
            preds: Vec::new(),
            negations: Vec::new(),
        };

        // Anchored predicates: left side always from this scope's head.
        let want = self.rng.random_range(0..=2usize.min(self.preds_left));
        let all_visible: Vec<&(TrcVar, Vec<String>)> = visible.iter().chain(own.iter()).collect();
        for _ in 0..want {
            if own.is_empty() {
                break;
            }
            let (lv, lattrs) = &own[self.rng.random_range(0..own.len())];
            let lattr = &lattrs[self.rng.random_range(0..lattrs.len())];
            let left = AttrRef::new(&lv.name, lattr);
            let op = OPS[self.rng.random_range(0..OPS.len())];
            let pred = if self.rng.random_range(0..100) < 40 {
                TrcPred::Sel {
                    left,
                    op,
                    value: Value::Int(self.rng.random_range(0..3)),
                }
            } else {
                let (rv, rattrs) = all_visible[self.rng.random_range(0..all_visible.len())];
                let rattr = &rattrs[self.rng.random_range(0..rattrs.len())];
                TrcPred::Join {
                    left,
                    op,
                    right: AttrRef::new(&rv.name, rattr),
                }
            };
            scope.preds.push(pred);
            self.preds_left -= 1;
        }

        // Child negation scopes, occasionally through a double-negation
        // wrapper (an empty-head scope holding one child).
        if depth > 0 {
            let visible_below: Vec<(TrcVar, Vec<String>)> =
                visible.iter().chain(own.iter()).cloned().collect();
            while self.tables_left > 0
                && scope.negations.len() < 2
                && self.rng.random_range(0..100) < 45
            {
                let n = 1 + usize::from(self.tables_left > 1 && self.rng.random_range(0..100) < 30);
                let child = self.scope(depth - 1, n, &visible_below);
                if self.rng.random_range(0..100) < 15 {
                    scope.negations.push(TrcScope {
                        vars: vec![],
                        preds: vec![],
                        negations: vec![child],
                    });
                } else {
                    scope.negations.push(child);
                }
            }
        }
        scope
    }
}

/// Generate one valid, anchored, canonical TRC query (or sentence).
pub fn gen_trc_query(rng: &mut ChaCha8Rng, schema: &Schema, opts: &GenOpts) -> TrcQuery {
    let relations: Vec<(String, Vec<String>)> = schema
        .relations()
        .map(|(n, a)| (n.to_string(), a.to_vec()))
        .collect();
    let sentence = rng.random_range(0..100) < opts.sentence_pct;
    let mut g = Gen {
        rng,
        relations,
        tables_left: opts.max_tables,
        preds_left: opts.max_preds,
        next_var: 0,
    };
    let root_vars = if sentence {
        g.rng.random_range(0..=2usize)
    } else {
        1 + g.rng.random_range(0..2usize)
    };
    let root_vars = root_vars.min(g.tables_left.max(1));
    let mut root = g.scope(opts.max_depth, root_vars, &[]);

    let output = if sentence {
        // An empty-head root must still have something underneath.
        if root.vars.is_empty() && root.negations.is_empty() {
            let (rel, _) = g.pick_relation();
            let v = g.fresh_var(&rel);
            root.negations.push(TrcScope {
                vars: vec![v],
                preds: vec![],
                negations: vec![],
            });
        }
        None
    } else {
        // Bind 1–2 output attributes to root-scope variables.
        let n_out = 1 + g.rng.random_range(0..2usize);
        let mut attrs = Vec::new();
        for i in 0..n_out {
            let name = format!("O{}", i + 1);
            let vi = g.rng.random_range(0..root.vars.len());
            let v = root.vars[vi].clone();
            let vattrs = schema.attrs(&v.relation).unwrap();
            let a = &vattrs[g.rng.random_range(0..vattrs.len())];
            root.preds.insert(
                i,
                TrcPred::Join {
                    left: AttrRef::new("Q", &name),
                    op: CompOp::Eq,
                    right: AttrRef::new(&v.name, a),
                },
            );
            attrs.push(name);
        }
        Some(OutputSpec {
            name: "Q".into(),
            attrs,
        })
    };
    let q = TrcQuery { output, root };
    reldiag::ast::trc::validate(&q, schema).expect("generator output must validate");
    q
}
