//! Reverse-mode differentiation over an explicitly recorded operation list.
//!
//! Every operation appends a node holding its forward value; [`Tape::backward`]
//! walks the list in reverse and accumulates gradients. Values are dense
//! row-major matrices; vectors are `1×n` or `n×1`.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

use crate::params::{ParamId, ParamStore};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    /// Adds a `1×c` row to every row.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, Range<usize>),
    AppendRows(Var, Var),
    GatherRows(Var, Rc<[usize]>),
    ScatterRows(Var, Rc<[usize]>, Var),
    /// Output row `i` is the sum of the input rows listed in group `i`.
    SegmentSum(Var, Rc<[Vec<usize>]>),
    MeanRows(Var),
    Sum(Var),
    /// Log of the total softmax mass (over unmasked entries) on the targets.
    LogSoftmaxPick {
        scores: Var,
        mask: Rc<[bool]>,
        targets: Rc<[usize]>,
        probs: Vec<f64>,
    },
    /// `log Σ exp` over all entries.
    LogSumExp(Var),
    /// Mean binary cross-entropy of `σ(logits)` against targets.
    BceWithLogits(Var, Rc<[f64]>),
}

struct Node {
    value: Mat,
    op: Op,
}

/// Gradients of a scalar with respect to the parameters used on a tape.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Mat>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Mat)> {
        self.grads.iter().map(|(&k, v)| (k, v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Mat)> {
        self.grads.iter_mut().map(|(&k, v)| (k, v))
    }

    pub fn insert(&mut self, id: ParamId, g: Mat) {
        self.grads.insert(id, g);
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .values()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.grads.values_mut() {
            g.mapv_inplace(|x| x * k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.values().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    pattern: u64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Mat>, delta: Mat) {
    match slot {
        Some(g) => *g += &delta,
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        debug_assert!(
            value.iter().all(|x| x.is_finite()),
            "non-finite value produced by {op:?}"
        );
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// A scalar read from a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "not a scalar");
        m[[0, 0]]
    }

    /// A constant input; receives no gradient outside the tape.
    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// The node for a parameter, created on first use.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.ncols(), y.nrows(), "matmul {:?} x {:?}", x.dim(), y.dim());
        let v = x.dot(y);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.ncols(), y.ncols(), "matmul_t {:?} x {:?}ᵀ", x.dim(), y.dim());
        let v = x.dot(&y.t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert!(r.nrows() == 1 && r.ncols() == x.ncols(), "add_row {:?} + {:?}", x.dim(), r.dim());
        let v = x + r;
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Fingerprint of every ReLU's on/off pattern so far. Two evaluations
    /// with equal patterns lie on the same linear piece of each ReLU.
    pub fn activation_pattern(&self) -> u64 {
        self.pattern
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut h = self.pattern;
        for &x in self.value(a) {
            h = (h ^ u64::from(x > 0.0)).wrapping_mul(0x0100_0000_01b3).rotate_left(5);
        }
        self.pattern = h;
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.nrows(), y.nrows(), "concat_cols");
        let v = ndarray::concatenate(Axis(1), &[x.view(), y.view()]).unwrap();
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: Var, cols: Range<usize>) -> Var {
        let v = self.value(a).slice(s![.., cols.clone()]).to_owned();
        self.push(v, Op::SliceCols(a, cols))
    }

    pub fn append_rows(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.ncols(), y.ncols(), "append_rows");
        let v = ndarray::concatenate(Axis(0), &[x.view(), y.view()]).unwrap();
        self.push(v, Op::AppendRows(a, b))
    }

    pub fn gather_rows(&mut self, a: Var, idx: impl Into<Rc<[usize]>>) -> Var {
        let idx: Rc<[usize]> = idx.into();
        let v = self.value(a).select(Axis(0), &idx);
        self.push(v, Op::GatherRows(a, idx))
    }

    /// `base` with rows `idx` replaced by the rows of `updates`.
    pub fn scatter_rows(&mut self, base: Var, idx: impl Into<Rc<[usize]>>, updates: Var) -> Var {
        let idx: Rc<[usize]> = idx.into();
        let mut v = self.value(base).clone();
        let u = self.value(updates);
        assert_eq!(u.nrows(), idx.len(), "scatter_rows");
        for (k, &r) in idx.iter().enumerate() {
            v.row_mut(r).assign(&u.row(k));
        }
        self.push(v, Op::ScatterRows(base, idx, updates))
    }

    pub fn segment_sum(&mut self, a: Var, groups: impl Into<Rc<[Vec<usize>]>>) -> Var {
        let groups: Rc<[Vec<usize>]> = groups.into();
        let x = self.value(a);
        let mut v = Mat::zeros((groups.len(), x.ncols()));
        for (i, g) in groups.iter().enumerate() {
            let mut row = v.row_mut(i);
            for &j in g {
                row += &x.row(j);
            }
        }
        self.push(v, Op::SegmentSum(a, groups))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert!(x.nrows() > 0, "mean of zero rows");
        let v = x.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// `log Σ_{t ∈ targets} softmax(scores)[t]` where the softmax runs over
    /// entries with `mask == true` (row-major order). Targets must be unmasked
    /// and distinct.
    pub fn log_softmax_pick(
        &mut self,
        scores: Var,
        mask: impl Into<Rc<[bool]>>,
        targets: impl Into<Rc<[usize]>>,
    ) -> Var {
        let mask: Rc<[bool]> = mask.into();
        let targets: Rc<[usize]> = targets.into();
        let x = self.value(scores);
        assert_eq!(x.len(), mask.len(), "mask size");
        assert!(!targets.is_empty(), "no target");
        for &t in targets.iter() {
            assert!(mask[t], "target {t} is masked");
        }
        let flat: Vec<f64> = x.iter().copied().collect();
        let max = flat
            .iter()
            .zip(mask.iter())
            .filter(|(_, &m)| m)
            .map(|(&s, _)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = flat
            .iter()
            .zip(mask.iter())
            .map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 })
            .collect();
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);
        let value = if targets.len() == 1 {
            flat[targets[0]] - max - z.ln()
        } else {
            let tmax = targets.iter().map(|&t| flat[t]).fold(f64::NEG_INFINITY, f64::max);
            let tz: f64 = targets.iter().map(|&t| (flat[t] - tmax).exp()).sum();
            tmax + tz.ln() - max - z.ln()
        };
        self.push(
            Mat::from_elem((1, 1), value),
            Op::LogSoftmaxPick {
                scores,
                mask,
                targets,
                probs,
            },
        )
    }

    pub fn logsumexp(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = x.iter().map(|&v| (v - max).exp()).sum();
        self.push(Mat::from_elem((1, 1), max + z.ln()), Op::LogSumExp(a))
    }

    pub fn bce_with_logits(&mut self, logits: Var, targets: impl Into<Rc<[f64]>>) -> Var {
        let targets: Rc<[f64]> = targets.into();
        let z = self.value(logits);
        assert_eq!(z.len(), targets.len(), "bce targets");
        let n = z.len() as f64;
        let total: f64 = z
            .iter()
            .zip(targets.iter())
            .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .sum();
        self.push(Mat::from_elem((1, 1), total / n), Op::BceWithLogits(logits, targets))
    }

    /// Gradients of the scalar `out` with respect to every parameter node.
    pub fn backward(&self, out: Var) -> Gradients {
        let grads = self.backward_all(out);
        let mut result = Gradients::default();
        for (&id, &v) in &self.params {
            if let Some(g) = &grads[v.0] {
                result.insert(id, g.clone());
            }
        }
        result
    }

    /// Gradients of the scalar `out` with respect to every node.
    pub fn backward_all(&self, out: Var) -> Vec<Option<Mat>> {
        assert_eq!(self.shape(out), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Mat>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Mat::from_elem((1, 1), 1.0));

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::MatMulT(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g.clone());
                }
                Op::AddRow(a, row) => {
                    let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[row.0], dr);
                    accumulate(&mut grads[a.0], g.clone());
                }
                Op::Mul(a, b) => {
                    let da = &g * self.value(*b);
                    let db = &g * self.value(*a);
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Scale(a, k) => accumulate(&mut grads[a.0], &g * *k),
                Op::Sigmoid(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= y * (1.0 - y));
                    accumulate(&mut grads[a.0], d);
                }
                Op::Tanh(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut grads[a.0], d);
                }
                Op::Relu(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| {
                        if y <= 0.0 {
                            *d = 0.0
                        }
                    });
                    accumulate(&mut grads[a.0], d);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).ncols();
                    accumulate(&mut grads[a.0], g.slice(s![.., ..ca]).to_owned());
                    accumulate(&mut grads[b.0], g.slice(s![.., ca..]).to_owned());
                }
                Op::SliceCols(a, cols) => {
                    let mut d = Mat::zeros(self.value(*a).dim());
                    d.slice_mut(s![.., cols.clone()]).assign(&g);
                    accumulate(&mut grads[a.0], d);
                }
                Op::AppendRows(a, b) => {
                    let ra = self.value(*a).nrows();
                    accumulate(&mut grads[a.0], g.slice(s![..ra, ..]).to_owned());
                    accumulate(&mut grads[b.0], g.slice(s![ra.., ..]).to_owned());
                }
                Op::GatherRows(a, idx) => {
                    let mut d = Mat::zeros(self.value(*a).dim());
                    for (k, &r) in idx.iter().enumerate() {
                        let mut row = d.row_mut(r);
                        row += &g.row(k);
                    }
                    accumulate(&mut grads[a.0], d);
                }
                Op::ScatterRows(base, idx, updates) => {
                    let mut db = g.clone();
                    let mut du = Mat::zeros(self.value(*updates).dim());
                    for (k, &r) in idx.iter().enumerate() {
                        du.row_mut(k).assign(&g.row(r));
                        db.row_mut(r).fill(0.0);
                    }
                    accumulate(&mut grads[base.0], db);
                    accumulate(&mut grads[updates.0], du);
                }
                Op::SegmentSum(a, groups) => {
                    let mut d = Mat::zeros(self.value(*a).dim());
                    for (i, grp) in groups.iter().enumerate() {
                        for &j in grp {
                            let mut row = d.row_mut(j);
                            row += &g.row(i);
                        }
                    }
                    accumulate(&mut grads[a.0], d);
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.value(*a).dim();
                    let row = &g / r as f64;
                    let d = row.broadcast((r, c)).unwrap().to_owned();
                    accumulate(&mut grads[a.0], d);
                }
                Op::Sum(a) => {
                    let d = Mat::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    accumulate(&mut grads[a.0], d);
                }
                Op::LogSoftmaxPick {
                    scores,
                    mask,
                    targets,
                    probs,
                } => {
                    let gs = g[[0, 0]];
                    let dim = self.value(*scores).dim();
                    let mass: f64 = targets.iter().map(|&t| probs[t]).sum();
                    let mut d = Mat::zeros(dim);
                    for (k, (dv, &m)) in d.iter_mut().zip(mask.iter()).enumerate() {
                        if m {
                            *dv = -gs * probs[k];
                        }
                    }
                    for &t in targets.iter() {
                        d.as_slice_mut().unwrap()[t] += gs * probs[t] / mass;
                    }
                    accumulate(&mut grads[scores.0], d);
                }
                Op::LogSumExp(a) => {
                    let x = self.value(*a);
                    let lse = node.value[[0, 0]];
                    let d = x.mapv(|v| g[[0, 0]] * (v - lse).exp());
                    accumulate(&mut grads[a.0], d);
                }
                Op::BceWithLogits(logits, targets) => {
                    let gs = g[[0, 0]];
                    let z = self.value(*logits);
                    let n = z.len() as f64;
                    let mut d = Mat::zeros(z.dim());
                    for ((dv, &zv), &t) in d.iter_mut().zip(z.iter()).zip(targets.iter()) {
                        *dv = gs * (sigmoid(zv) - t) / n;
                    }
                    accumulate(&mut grads[logits.0], d);
                }
            }
            // keep the upstream gradient for inspection through backward_all
            grads[i] = Some(g);
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matmul_gradient_by_hand() {
        let mut t = Tape::new();
        let a = t.input(array![[1.0, 2.0]]);
        let b = t.input(array![[3.0], [4.0]]);
        let y = t.matmul(a, b);
        assert_eq!(t.scalar(y), 11.0);
        let g = t.backward_all(y);
        assert_eq!(g[a.0].as_ref().unwrap(), &array![[3.0, 4.0]]);
        assert_eq!(g[b.0].as_ref().unwrap(), &array![[1.0], [2.0]]);
    }

    #[test]
    fn log_softmax_single_valid_cell_is_zero() {
        let mut t = Tape::new();
        let s = t.input(array![[5.0, -1.0], [2.0, 0.3]]);
        let lp = t.log_softmax_pick(s, vec![false, true, false, false], vec![1]);
        assert_eq!(t.scalar(lp), 0.0);
        let g = t.backward_all(lp);
        assert!(g[s.0].as_ref().unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn log_softmax_uniform() {
        let mut t = Tape::new();
        let s = t.input(array![[0.0, 0.0, 7.0]]);
        let lp = t.log_softmax_pick(s, vec![true, true, false], vec![0]);
        assert!((t.scalar(lp) + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_softmax_two_targets() {
        let mut t = Tape::new();
        let s = t.input(array![[1.0, 2.0, 3.0]]);
        let lp = t.log_softmax_pick(s, vec![true, true, true], vec![0, 2]);
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let expect = ((1f64.exp() + 3f64.exp()) / z).ln();
        assert!((t.scalar(lp) - expect).abs() < 1e-14);
        let all = t.log_softmax_pick(s, vec![true, false, true], vec![0, 2]);
        assert!(t.scalar(all).abs() < 1e-15);
    }

    #[test]
    fn bce_at_half_is_ln2() {
        let mut t = Tape::new();
        let z = t.input(Mat::zeros((2, 1)));
        let l = t.bce_with_logits(z, vec![1.0, 0.0]);
        assert!((t.scalar(l) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn scatter_and_segment_sum() {
        let mut t = Tape::new();
        let a = t.input(array![[1.0], [2.0], [3.0]]);
        let u = t.input(array![[10.0]]);
        let s = t.scatter_rows(a, vec![1], u);
        assert_eq!(t.value(s), &array![[1.0], [10.0], [3.0]]);
        let seg = t.segment_sum(s, vec![vec![0, 2], vec![], vec![1, 1]]);
        assert_eq!(t.value(seg), &array![[4.0], [0.0], [20.0]]);
        let out = t.sum(seg);
        let g = t.backward_all(out);
        assert_eq!(g[a.0].as_ref().unwrap(), &array![[1.0], [0.0], [1.0]]);
        assert_eq!(g[u.0].as_ref().unwrap(), &array![[2.0]]);
    }

    #[test]
    fn parameter_nodes_are_shared() {
        let mut store = ParamStore::new();
        let id = store.register("w", array![[2.0]]).unwrap();
        let mut t = Tape::new();
        let w1 = t.param(&store, id);
        let w2 = t.param(&store, id);
        assert_eq!(w1, w2);
        let y = t.mul(w1, w2);
        let g = t.backward(y);
        assert_eq!(g.get(id).unwrap(), &array![[4.0]]);
    }
}
