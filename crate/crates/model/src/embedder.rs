//! Two-phase message passing over the literal/clause graph.
//!
//! Each round: clauses update from the summed messages of their literals,
//! then literals update from the summed messages of their own clauses, the
//! messages sent to their complement, and the complement's state. Passing
//! the complement's messages lets information cross a variable within one
//! round, so a connected formula is covered in at most |V|+1 rounds.

use fixedbitset::FixedBitSet;
use rand::Rng;
use serde::{Deserialize, Serialize};

use resprover_nn::params::uniform;
use resprover_nn::{Activation, LstmCell, Mat, Mlp, ParamId, ParamStore, Tape, Var};

use crate::config::EmbedMode;
use crate::error::Result;
use crate::graph::FormulaGraph;

/// Node states on a tape. `lit_h` is E^L and `cls_h` is E^C.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingState {
    pub lit_h: Var,
    pub lit_c: Var,
    pub cls_h: Var,
    pub cls_c: Var,
    pub rounds: usize,
}

/// Replacement initial hidden states (cell states stay zero).
#[derive(Clone, Debug)]
pub struct InitOverride {
    pub lit_h: Mat,
    pub cls_h: Mat,
}

/// One message exchange, as recorded for reachability replay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageEvent {
    /// A full round over the first `clauses` clause nodes.
    Round { clauses: usize },
    /// Local exchange between clause node `clause` and its literals.
    Local { clause: usize },
}

#[derive(Clone, Debug)]
pub struct Embedder {
    pub d: usize,
    pub l_init: ParamId,
    pub c_init: ParamId,
    pub l_msg: Mlp,
    pub c_msg: Mlp,
    pub c_update: LstmCell,
    pub l_update: LstmCell,
}

const SHAPES: &str = "embedder shapes are fixed at construction";

impl Embedder {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, d: usize) -> Result<Self> {
        let scale = 1.0 / (d as f64).sqrt();
        let l_init = store.register("embed.l_init", uniform(1, d, scale, rng))?;
        let c_init = store.register("embed.c_init", uniform(1, d, scale, rng))?;
        let dims = [d, d, d, d];
        let l_msg = Mlp::register(store, rng, "embed.l_msg", &dims, true, Activation::Relu, Activation::Identity)?;
        let c_msg = Mlp::register(store, rng, "embed.c_msg", &dims, true, Activation::Relu, Activation::Identity)?;
        let c_update = LstmCell::register(store, rng, "embed.c_update", d, d)?;
        let l_update = LstmCell::register(store, rng, "embed.l_update", 3 * d, d)?;
        Ok(Embedder {
            d,
            l_init,
            c_init,
            l_msg,
            c_msg,
            c_update,
            l_update,
        })
    }

    /// Every node starts from its type's learned vector with a zero cell.
    pub fn init_state(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        g: &FormulaGraph,
        over: Option<&InitOverride>,
    ) -> EmbeddingState {
        let (nl, nc) = (g.num_literals(), g.num_clauses());
        let (lit_h, cls_h) = match over {
            Some(o) => {
                assert_eq!(o.lit_h.dim(), (nl, self.d));
                assert_eq!(o.cls_h.dim(), (nc, self.d));
                (tape.input(o.lit_h.clone()), tape.input(o.cls_h.clone()))
            }
            None => {
                let l = tape.param(store, self.l_init);
                let c = tape.param(store, self.c_init);
                (tape.gather_rows(l, vec![0; nl]), tape.gather_rows(c, vec![0; nc]))
            }
        };
        EmbeddingState {
            lit_h,
            lit_c: tape.input(Mat::zeros((nl, self.d))),
            cls_h,
            cls_c: tape.input(Mat::zeros((nc, self.d))),
            rounds: 0,
        }
    }

    /// One full two-phase round over the whole graph.
    pub fn round(&self, tape: &mut Tape, store: &ParamStore, g: &FormulaGraph, s: &EmbeddingState) -> EmbeddingState {
        let lm = self.l_msg.forward(tape, store, s.lit_h).expect(SHAPES);
        let to_clauses = tape.segment_sum(lm, g.clause_lits_shared());
        let (cls_h, cls_c) = self
            .c_update
            .step(tape, store, to_clauses, s.cls_h, s.cls_c)
            .expect(SHAPES);

        let cm = self.c_msg.forward(tape, store, cls_h).expect(SHAPES);
        let to_lits = tape.segment_sum(cm, g.lit_clauses_shared());
        let to_comp = tape.gather_rows(to_lits, g.complement_shared());
        let flipped = tape.gather_rows(s.lit_h, g.complement_shared());
        let msgs = tape.concat_cols(to_lits, to_comp);
        let input = tape.concat_cols(msgs, flipped);
        let (lit_h, lit_c) = self.l_update.step(tape, store, input, s.lit_h, s.lit_c).expect(SHAPES);
        EmbeddingState {
            lit_h,
            lit_c,
            cls_h,
            cls_c,
            rounds: s.rounds + 1,
        }
    }

    pub fn embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        g: &FormulaGraph,
        rounds: usize,
        over: Option<&InitOverride>,
    ) -> EmbeddingState {
        assert!(rounds >= 1, "at least one round");
        let mut s = self.init_state(tape, store, g, over);
        for _ in 0..rounds {
            s = self.round(tape, store, g, &s);
        }
        s
    }

    fn append_clause_node(&self, tape: &mut Tape, store: &ParamStore) -> (Var, Var) {
        let c = tape.param(store, self.c_init);
        let h0 = tape.gather_rows(c, vec![0]);
        let c0 = tape.input(Mat::zeros((1, self.d)));
        (h0, c0)
    }

    /// Embeds the last clause node of `g`, which must be new relative to `s`.
    pub fn integrate(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        g: &FormulaGraph,
        s: &EmbeddingState,
        mode: EmbedMode,
    ) -> EmbeddingState {
        let k = g.num_clauses() - 1;
        assert_eq!(tape.shape(s.cls_h).0, k, "graph and state out of step");
        let (h0, c0) = self.append_clause_node(tape, store);
        match mode {
            EmbedMode::Dynamic => {
                let grown = EmbeddingState {
                    cls_h: tape.append_rows(s.cls_h, h0),
                    cls_c: tape.append_rows(s.cls_c, c0),
                    ..*s
                };
                self.round(tape, store, g, &grown)
            }
            EmbedMode::Static => {
                let lits = g.clause_lits(k).to_vec();
                let agg = if lits.is_empty() {
                    tape.input(Mat::zeros((1, self.d)))
                } else {
                    let members = tape.gather_rows(s.lit_h, lits.clone());
                    let lm = self.l_msg.forward(tape, store, members).expect(SHAPES);
                    tape.segment_sum(lm, vec![(0..lits.len()).collect::<Vec<_>>()])
                };
                let (hk, ck) = self.c_update.step(tape, store, agg, h0, c0).expect(SHAPES);
                let cls_h = tape.append_rows(s.cls_h, hk);
                let cls_c = tape.append_rows(s.cls_c, ck);
                if lits.is_empty() {
                    return EmbeddingState { cls_h, cls_c, ..*s };
                }
                // both literals of every variable in the clause
                let mut nodes: Vec<usize> = lits.iter().flat_map(|&l| [l, l ^ 1]).collect();
                nodes.sort_unstable();
                nodes.dedup();
                let cm = self.c_msg.forward(tape, store, hk).expect(SHAPES);
                let zero = tape.input(Mat::zeros((1, self.d)));
                let table = tape.append_rows(cm, zero);
                let pick = |member: &dyn Fn(usize) -> bool| -> Vec<usize> {
                    nodes.iter().map(|&u| if member(u) { 0 } else { 1 }).collect()
                };
                let own = tape.gather_rows(table, pick(&|u| lits.contains(&u)));
                let comp_msg = tape.gather_rows(table, pick(&|u| lits.contains(&(u ^ 1))));
                let comp: Vec<usize> = nodes.iter().map(|&u| u ^ 1).collect();
                let flipped = tape.gather_rows(s.lit_h, comp);
                let msgs = tape.concat_cols(own, comp_msg);
                let input = tape.concat_cols(msgs, flipped);
                let h = tape.gather_rows(s.lit_h, nodes.clone());
                let c = tape.gather_rows(s.lit_c, nodes.clone());
                let (h2, c2) = self.l_update.step(tape, store, input, h, c).expect(SHAPES);
                EmbeddingState {
                    lit_h: tape.scatter_rows(s.lit_h, nodes.clone(), h2),
                    lit_c: tape.scatter_rows(s.lit_c, nodes, c2),
                    cls_h,
                    cls_c,
                    rounds: s.rounds,
                }
            }
        }
    }
}

/// Which clause nodes have exchanged messages, directly or through
/// intermediate nodes. Information is tracked per variable node (both
/// polarities merged): the complement link makes the two literals of a
/// variable share state within a round.
#[derive(Clone, Debug)]
pub struct Reachability {
    info: Vec<FixedBitSet>,
}

impl Reachability {
    pub fn num_clauses(&self) -> usize {
        self.info.len()
    }

    /// Clause `j`'s information has reached clause `i`.
    pub fn reached(&self, i: usize, j: usize) -> bool {
        self.info[i].contains(j)
    }

    /// Information flowed between `i` and `j` in either direction.
    pub fn related(&self, i: usize, j: usize) -> bool {
        i == j || self.reached(i, j) || self.reached(j, i)
    }

    /// Some member of `set` is related to every other member.
    pub fn has_hub(&self, set: &[usize]) -> bool {
        set.iter().any(|&i| set.iter().all(|&j| self.related(i, j)))
    }
}

/// Replays `events` over `g` and returns the resulting relation.
pub fn message_reachability(g: &FormulaGraph, events: &[MessageEvent]) -> Reachability {
    let n = g.num_clauses();
    let mut cls: Vec<FixedBitSet> = (0..n)
        .map(|i| {
            let mut b = FixedBitSet::with_capacity(n);
            b.insert(i);
            b
        })
        .collect();
    let mut vars: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(n); g.num_vars()];

    let clause_gather = |c: usize, cls: &mut Vec<FixedBitSet>, vars: &[FixedBitSet]| {
        let mut acc = cls[c].clone();
        for v in g.clause_vars(c) {
            acc.union_with(&vars[v as usize - 1]);
        }
        cls[c] = acc;
    };

    for ev in events {
        match *ev {
            MessageEvent::Round { clauses } => {
                let before = vars.clone();
                for c in 0..clauses {
                    clause_gather(c, &mut cls, &before);
                }
                for c in 0..clauses {
                    for v in g.clause_vars(c) {
                        vars[v as usize - 1].union_with(&cls[c]);
                    }
                }
            }
            MessageEvent::Local { clause } => {
                clause_gather(clause, &mut cls, &vars);
                for v in g.clause_vars(clause) {
                    vars[v as usize - 1].union_with(&cls[clause]);
                }
            }
        }
    }
    Reachability { info: cls }
}
