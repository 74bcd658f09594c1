//! Pair-selection heads, assignment decoding and the satisfiability head.
//!
//! Each head defines a distribution over ordered clause pairs, normalized
//! over valid cells only. Ranking ties go to the smaller clause contents
//! (anchors: the lower variable), so results do not depend on clause order.

use std::cmp::Ordering;
use std::rc::Rc;

use resprover_core::{Assignment, ClauseId, Var};
use resprover_nn::{Mat, ParamStore, Var as Node};

use crate::error::{ModelError, Result};
use crate::graph::{neg_node, pos_node};
use crate::model::{SelectorParams, Session};
use crate::pool::ClausePool;

/// One selected resolution step. Clause ids are 1-based pool positions.
#[derive(Clone, Debug, PartialEq)]
pub struct PairChoice {
    pub c1: ClauseId,
    pub c2: ClauseId,
    pub pivot: Var,
    /// Log-probability of the ordered choice under the head.
    pub score: f64,
    pub anchor: Option<Var>,
}

impl PairChoice {
    /// 0-based pool indices.
    pub fn indices(&self) -> (usize, usize) {
        (self.c1 - 1, self.c2 - 1)
    }
}

/// Pair scores over a clause grid. `rows` and `cols` map grid positions to
/// 0-based pool indices; `scores` and `mask` are row-major.
#[derive(Clone, Debug)]
pub struct ScoreGrid {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub scores: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ScoreGrid {
    pub fn valid_cells(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Valid `(row, col, score)` triples in pool indices.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let nc = self.cols.len();
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(k, _)| (self.rows[k / nc], self.cols[k % nc], self.scores[k]))
    }
}

/// Log-probability of a teacher step plus whether the head's greedy pick
/// is the same unordered pair.
#[derive(Clone, Copy, Debug)]
pub struct StepScore {
    pub log_prob: Node,
    pub top1: bool,
}

fn log_partition(scores: &[f64], mask: &[bool]) -> f64 {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| (s - max).exp())
        .sum();
    max + z.ln()
}

fn flat(m: &Mat) -> Vec<f64> {
    m.iter().copied().collect()
}

fn d_scale(s: &Session) -> f64 {
    1.0 / (s.model.cfg.d as f64).sqrt()
}

/// `(Q Kᵀ)/√d` with `Q = rows·W_Q`, `K = cols·W_K`.
fn attention(s: &mut Session, rows: Node, cols: Node, wq: resprover_nn::ParamId, wk: resprover_nn::ParamId) -> Node {
    let k = d_scale(s);
    let store: &ParamStore = &s.model.store;
    let tape = &mut s.tape;
    let wq = tape.param(store, wq);
    let wk = tape.param(store, wk);
    let q = tape.matmul(rows, wq);
    let kk = tape.matmul(cols, wk);
    let raw = tape.matmul_t(q, kk);
    tape.scale(raw, k)
}

/// `tanh(B + q·W₁)·u` for every row of `b_rows`.
fn additive(s: &mut Session, b_rows: Node, q: Node, w1: resprover_nn::ParamId, u: resprover_nn::ParamId) -> Node {
    let store: &ParamStore = &s.model.store;
    let tape = &mut s.tape;
    let w1 = tape.param(store, w1);
    let u = tape.param(store, u);
    let qw = tape.matmul(q, w1);
    let pre = tape.add_row(b_rows, qw);
    let act = tape.tanh(pre);
    tape.matmul(act, u)
}

fn project(s: &mut Session, x: Node, w: resprover_nn::ParamId) -> Node {
    let w = s.tape.param(&s.model.store, w);
    s.tape.matmul(x, w)
}

/// Full-grid scores `S = (E^C W_Q)(E^C W_K)ᵀ/√d`.
pub fn full_grid(s: &mut Session) -> Result<(Node, ScoreGrid)> {
    let (wq, wk) = match s.model.selector {
        SelectorParams::Full { wq, wk } => (wq, wk),
        _ => return Err(ModelError::Config("full grid needs the full selector".into())),
    };
    let ec = s.state.cls_h;
    let v = attention(s, ec, ec, wq, wk);
    let n = s.pool.len();
    Ok((
        v,
        ScoreGrid {
            rows: (0..n).collect(),
            cols: (0..n).collect(),
            scores: flat(s.tape.value(v)),
            mask: s.pool.mask(),
        },
    ))
}

/// Anchor scores `uᵀ tanh(W₁ Ē^C + W₂(E^{L⁺}_v + E^{L⁻}_v))`, one per variable.
pub fn anchor_scores(s: &mut Session) -> Result<(Node, Vec<f64>)> {
    let (w1, w2, u) = match s.model.selector {
        SelectorParams::Anchored { w1, w2, u, .. } => (w1, w2, u),
        _ => return Err(ModelError::Config("anchor scores need the anchored selector".into())),
    };
    let m = s.num_vars();
    let groups: Rc<[Vec<usize>]> = (1..=m as Var).map(|v| vec![pos_node(v), neg_node(v)]).collect();
    let mean_c = s.tape.mean_rows(s.state.cls_h);
    let both = s.tape.segment_sum(s.state.lit_h, groups);
    let b = project(s, both, w2);
    let a = additive(s, b, mean_c, w1, u);
    Ok((a, flat(s.tape.value(a))))
}

/// Grid anchored on `v`: rows hold `v`, columns hold `¬v`.
pub fn anchored_grid(s: &mut Session, v: Var) -> Result<(Node, ScoreGrid)> {
    let (wq, wk) = match s.model.selector {
        SelectorParams::Anchored { wq, wk, .. } => (wq, wk),
        _ => return Err(ModelError::Config("anchored grid needs the anchored selector".into())),
    };
    let (rows, cols, mask) = s.pool.anchored(v);
    if rows.is_empty() || cols.is_empty() {
        return Err(ModelError::NoValidPair);
    }
    let r = s.tape.gather_rows(s.state.cls_h, rows.clone());
    let c = s.tape.gather_rows(s.state.cls_h, cols.clone());
    let node = attention(s, r, c, wq, wk);
    let scores = flat(s.tape.value(node));
    Ok((
        node,
        ScoreGrid {
            rows,
            cols,
            scores,
            mask,
        },
    ))
}

/// Cascade query `q = mean(E^L) ∥ second`.
fn cascade_query(s: &mut Session, second: Option<usize>) -> Node {
    let mean_l = s.tape.mean_rows(s.state.lit_h);
    let tail = match second {
        Some(i) => s.tape.gather_rows(s.state.cls_h, vec![i]),
        None => s.tape.input(Mat::zeros((1, s.model.cfg.d))),
    };
    s.tape.concat_cols(mean_l, tail)
}

/// Cascade stage scores over clauses: first query when `first` is `None`,
/// else the second query conditioned on clause `first`.
pub fn cascade_scores(s: &mut Session, first: Option<usize>) -> Result<(Node, Vec<f64>)> {
    let (w1, w2, u) = match s.model.selector {
        SelectorParams::Cascaded { w1, w2, u } => (w1, w2, u),
        _ => return Err(ModelError::Config("cascade scores need the cascaded selector".into())),
    };
    let q = cascade_query(s, first);
    let b = project(s, s.state.cls_h, w2);
    let node = additive(s, b, q, w1, u);
    Ok((node, flat(s.tape.value(node))))
}

/// Orders masked candidates by descending score, ties by `tie`.
fn ranked<T: Copy>(items: impl Iterator<Item = (T, f64)>, mut tie: impl FnMut(&T, &T) -> Ordering) -> Vec<(T, f64)> {
    let mut v: Vec<(T, f64)> = items.collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| tie(&a.0, &b.0)));
    v
}

fn clause_order(p: &ClausePool) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |a, b| p.clause(*a).cmp(p.clause(*b)).then(a.cmp(b))
}

fn pair_order(p: &ClausePool) -> impl Fn(&(usize, usize), &(usize, usize)) -> Ordering + '_ {
    move |a, b| {
        p.clause(a.0)
            .cmp(p.clause(b.0))
            .then_with(|| p.clause(a.1).cmp(p.clause(b.1)))
            .then(a.cmp(b))
    }
}

fn masked_vec(scores: &[f64], mask: &[bool]) -> Vec<(usize, f64)> {
    scores.iter().zip(mask).enumerate().filter(|(_, (_, &m))| m).map(|(i, (&x, _))| (i, x)).collect()
}

fn choice(s: &Session, i: usize, j: usize, score: f64, anchor: Option<Var>) -> PairChoice {
    PairChoice {
        c1: i + 1,
        c2: j + 1,
        pivot: s.pool.pivot(i, j).expect("ranked pairs are valid"),
        score,
        anchor,
    }
}

/// Valid pairs in the head's preference order, at most `limit` of them.
///
/// Full attention ranks all cells globally. The cascaded and anchored heads
/// rank lexicographically: first-stage choice, then second-stage choice.
pub fn ranked_pairs(s: &mut Session, limit: usize) -> Result<Vec<PairChoice>> {
    if s.pool.is_saturated() {
        return Err(ModelError::NoValidPair);
    }
    let mut out = Vec::new();
    match s.model.selector {
        SelectorParams::Full { .. } => {
            let (_, grid) = full_grid(s)?;
            let lz = log_partition(&grid.scores, &grid.mask);
            let cells = grid.cells().map(|(i, j, x)| ((i, j), x));
            for ((i, j), x) in ranked(cells, pair_order(&s.pool)).into_iter().take(limit) {
                out.push(choice(s, i, j, x - lz, None));
            }
        }
        SelectorParams::Cascaded { .. } => {
            let (_, s1) = cascade_scores(s, None)?;
            let m1 = s.pool.partner_mask();
            let lz1 = log_partition(&s1, &m1);
            for (i, x1) in ranked(masked_vec(&s1, &m1).into_iter(), clause_order(&s.pool)) {
                let (_, s2) = cascade_scores(s, Some(i))?;
                let m2 = s.pool.row_mask(i);
                let lz2 = log_partition(&s2, &m2);
                for (j, x2) in ranked(masked_vec(&s2, &m2).into_iter(), clause_order(&s.pool)) {
                    if out.len() == limit {
                        return Ok(out);
                    }
                    out.push(choice(s, i, j, x1 - lz1 + x2 - lz2, None));
                }
            }
        }
        SelectorParams::Anchored { .. } => {
            let (_, a) = anchor_scores(s)?;
            let am = s.pool.anchor_mask();
            let lza = log_partition(&a, &am);
            for (vi, xa) in ranked(masked_vec(&a, &am).into_iter(), |x, y| x.cmp(y)) {
                let v = vi as Var + 1;
                let (_, grid) = anchored_grid(s, v)?;
                let lz = log_partition(&grid.scores, &grid.mask);
                let cells = grid.cells().map(|(i, j, x)| ((i, j), x));
                for ((i, j), x) in ranked(cells, pair_order(&s.pool)) {
                    if out.len() == limit {
                        return Ok(out);
                    }
                    out.push(choice(s, i, j, xa - lza + x - lz, Some(v)));
                }
            }
        }
    }
    Ok(out)
}

/// The single best valid pair.
pub fn select_pair(s: &mut Session) -> Result<PairChoice> {
    ranked_pairs(s, 1)?.pop().ok_or(ModelError::NoValidPair)
}

/// Up to `k` best steps, skipping any whose resolvent an earlier pick
/// already produces and stopping after a pick that derives the empty clause.
pub fn top_k_steps(s: &mut Session, k: usize) -> Result<Vec<PairChoice>> {
    assert!(k >= 1, "k must be positive");
    let candidates = ranked_pairs(s, usize::MAX)?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(k);
    for c in candidates {
        let (i, j) = c.indices();
        let r = s.pool.resolvent(i, j).expect("ranked pairs are valid");
        if !seen.insert(r.clone()) {
            continue;
        }
        out.push(c);
        if out.len() == k || r.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// Log-probability (summed over both orderings where the head orders pairs)
/// of resolving pool clauses `a` (holding `pivot`) and `b` (holding `¬pivot`).
pub fn teacher_log_prob(s: &mut Session, a: usize, b: usize, pivot: Var) -> Result<StepScore> {
    match s.model.selector {
        SelectorParams::Full { .. } => {
            let (node, grid) = full_grid(s)?;
            let n = s.pool.len();
            let lp = s.tape.log_softmax_pick(node, grid.mask.clone(), vec![a * n + b, b * n + a]);
            let best = ranked(grid.cells().map(|(i, j, x)| ((i, j), x)), pair_order(&s.pool))[0].0;
            Ok(StepScore {
                log_prob: lp,
                top1: best == (a, b) || best == (b, a),
            })
        }
        SelectorParams::Cascaded { .. } => {
            let (n1, s1) = cascade_scores(s, None)?;
            let m1 = s.pool.partner_mask();
            let greedy1 = ranked(masked_vec(&s1, &m1).into_iter(), clause_order(&s.pool))[0].0;
            let mut orders = Vec::with_capacity(2);
            let mut greedy2 = None;
            for (x, y) in [(a, b), (b, a)] {
                let p1 = s.tape.log_softmax_pick(n1, m1.clone(), vec![x]);
                let (n2, s2) = cascade_scores(s, Some(x))?;
                let m2 = s.pool.row_mask(x);
                if x == greedy1 {
                    greedy2 = Some(ranked(masked_vec(&s2, &m2).into_iter(), clause_order(&s.pool))[0].0);
                }
                let p2 = s.tape.log_softmax_pick(n2, m2, vec![y]);
                orders.push(s.tape.add(p1, p2));
            }
            let both = s.tape.append_rows(orders[0], orders[1]);
            let lp = s.tape.logsumexp(both);
            let top1 = match greedy2 {
                Some(g2) => (greedy1 == a && g2 == b) || (greedy1 == b && g2 == a),
                None => false,
            };
            Ok(StepScore { log_prob: lp, top1 })
        }
        SelectorParams::Anchored { .. } => {
            let (na, sa) = anchor_scores(s)?;
            let am = s.pool.anchor_mask();
            let best_anchor = ranked(masked_vec(&sa, &am).into_iter(), |x, y| x.cmp(y))[0].0;
            let pa = s.tape.log_softmax_pick(na, am, vec![pivot as usize - 1]);
            let (ng, grid) = anchored_grid(s, pivot)?;
            let r = grid.rows.iter().position(|&i| i == a);
            let c = grid.cols.iter().position(|&j| j == b);
            let (Some(r), Some(c)) = (r, c) else {
                return Err(ModelError::TeacherStepInvalid {
                    step: 0,
                    reason: format!("pair ({a}, {b}) is not on the grid anchored at {pivot}"),
                });
            };
            let pc = s.tape.log_softmax_pick(ng, grid.mask.clone(), vec![r * grid.cols.len() + c]);
            let best = ranked(grid.cells().map(|(i, j, x)| ((i, j), x)), pair_order(&s.pool))[0].0;
            Ok(StepScore {
                log_prob: s.tape.add(pa, pc),
                top1: best_anchor + 1 == pivot as usize && best == (a, b),
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Reads variable `v` off literal `v`.
    Positive,
    /// Reads variable `v` as the negation of literal `¬v`.
    Negative,
}

/// ψ logits for every variable's literal on `branch`, as an `m×1` node.
pub fn decode_node(s: &mut Session, branch: Branch) -> Node {
    let m = s.num_vars() as Var;
    let rows: Vec<usize> = (1..=m)
        .map(|v| match branch {
            Branch::Positive => pos_node(v),
            Branch::Negative => neg_node(v),
        })
        .collect();
    let x = s.tape.gather_rows(s.state.lit_h, rows);
    s.model
        .decoder
        .forward(&mut s.tape, &s.model.store, x)
        .expect("decoder shapes are fixed at construction")
}

pub fn decode_logits(s: &mut Session, branch: Branch) -> Vec<f64> {
    let n = decode_node(s, branch);
    flat(s.tape.value(n))
}

/// Thresholds `σ(ψ(·))` at exactly 0.5, ties to false.
pub fn assignment_from_logits(logits: &[f64], branch: Branch) -> Assignment {
    Assignment::from_values(
        logits
            .iter()
            .map(|&z| {
                let on = z > 0.0;
                match branch {
                    Branch::Positive => on,
                    Branch::Negative => !on,
                }
            })
            .collect(),
    )
}

pub fn decode_assignment(s: &mut Session, branch: Branch) -> Assignment {
    assignment_from_logits(&decode_logits(s, branch), branch)
}

/// Mean per-literal vote as a `1×1` logit. The literal embeddings enter as
/// constants, so gradients stop at the classifier.
pub fn classifier_node(s: &mut Session) -> Node {
    let frozen = s.tape.input(s.tape.value(s.state.lit_h).clone());
    let votes = s
        .model
        .classifier
        .forward(&mut s.tape, &s.model.store, frozen)
        .expect("classifier shapes are fixed at construction");
    s.tape.mean_rows(votes)
}

/// Predicted probability that the formula is satisfiable.
pub fn classify_satisfiability(s: &mut Session) -> f64 {
    let n = classifier_node(s);
    let z = s.tape.scalar(n);
    1.0 / (1.0 + (-z).exp())
}

/// Scalar parameters under a name prefix such as `"select."`.
pub fn count_parameters(store: &ParamStore, scope: &str) -> usize {
    store.count(scope)
}
