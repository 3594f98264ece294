//! Reverse-mode automatic differentiation over [`Tensor2`] values.
//!
//! The tape is a flat list of nodes. Every operation appends a node whose
//! inputs are earlier nodes, so node order is a topological order and
//! [`Tape::backward`] is a single reverse sweep.
//!
//! Only the operations the model and its losses need are provided.

use rand::Rng;

use super::ops;
use super::tensor::{Tensor2, COSINE_EPS};
use crate::error::{MoiraError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulConst(Var, Tensor2),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>),
    Column(Var, usize),
    HCat(Vec<Var>),
    MulColumn(Var, Var),
    MaskedSoftmax(Var),
    LogSoftmax(Var),
    LnClamp(Var, f64),
    Pick(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    Transpose(Var),
    Cosine(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor2,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that reaches it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros shaped like `like` when `v` does not reach the root.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor2) -> Tensor2 {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor2::zeros(like.rows(), like.cols()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor2) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Parameters and constants are both leaves; whether a
    /// gradient is read back is up to the caller.
    pub fn leaf(&mut self, value: Tensor2) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    /// Leaf ids that `v` reads, directly or transitively.
    pub fn leaves_of(&self, v: Var) -> Vec<Var> {
        let mut seen = vec![false; v.0 + 1];
        seen[v.0] = true;
        let mut out = Vec::new();
        for k in (0..=v.0).rev() {
            if !seen[k] {
                continue;
            }
            let inputs = self.inputs(k);
            if inputs.is_empty() {
                out.push(Var(k));
            }
            for i in inputs {
                seen[i.0] = true;
            }
        }
        out.reverse();
        out
    }

    fn inputs(&self, k: usize) -> Vec<Var> {
        match &self.nodes[k].op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulColumn(a, b)
            | Op::Cosine(a, b) => vec![*a, *b],
            Op::MulConst(a, _)
            | Op::Scale(a, _)
            | Op::LeakyRelu(a, _)
            | Op::GatherRows(a, _)
            | Op::ScatterRows(a, _)
            | Op::Column(a, _)
            | Op::MaskedSoftmax(a)
            | Op::LogSoftmax(a)
            | Op::LnClamp(a, _)
            | Op::Pick(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Transpose(a) => vec![*a],
            Op::HCat(parts) => parts.clone(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// `a + b` with the `1 × c` row `b` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(MoiraError::dim("add_row", av.shape(), bv.shape()));
        }
        let mut v = av.clone();
        for r in 0..v.rows() {
            for (x, y) in v.row_mut(r).iter_mut().zip(bv.values()) {
                *x += y;
            }
        }
        Ok(self.push(Op::AddRow(a, b), v))
    }

    pub fn mul_const(&mut self, a: Var, c: Tensor2) -> Result<Var> {
        let v = self.value(a).zip_map(&c, |x, y| x * y)?;
        Ok(self.push(Op::MulConst(a, c), v))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = ops::leaky_relu(self.value(a), slope);
        self.push(Op::LeakyRelu(a, slope), v)
    }

    /// Inverted dropout. Returns `a` unchanged when not training or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        ops::check_probability(p)?;
        if !training || p == 0.0 {
            return Ok(a);
        }
        let (r, c) = self.value(a).shape();
        let mask = ops::dropout_mask(r, c, p, rng)?;
        self.mul_const(a, mask)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.rows()) {
            return Err(MoiraError::dim("gather_rows", av.shape(), (bad, 0)));
        }
        let v = av.gather_rows(idx);
        Ok(self.push(Op::GatherRows(a, idx.to_vec()), v))
    }

    /// Places row `k` of `a` at row `idx[k]` of an `n_rows`-row zero matrix.
    pub fn scatter_rows(&mut self, a: Var, idx: &[usize], n_rows: usize) -> Result<Var> {
        let av = self.value(a);
        if idx.len() != av.rows() || idx.iter().any(|&i| i >= n_rows) {
            return Err(MoiraError::dim("scatter_rows", av.shape(), (n_rows, idx.len())));
        }
        let mut v = Tensor2::zeros(n_rows, av.cols());
        for (k, &i) in idx.iter().enumerate() {
            v.row_mut(i).copy_from_slice(av.row(k));
        }
        Ok(self.push(Op::ScatterRows(a, idx.to_vec()), v))
    }

    pub fn column(&mut self, a: Var, j: usize) -> Result<Var> {
        let av = self.value(a);
        if j >= av.cols() {
            return Err(MoiraError::dim("column", av.shape(), (0, j)));
        }
        let v = av.gather_cols(&[j]);
        Ok(self.push(Op::Column(a, j), v))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |p| self.value(*p).rows());
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(MoiraError::dim("hcat", (rows, 0), self.value(*p).shape()));
            }
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut v = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let pv = self.value(*p);
                v.row_mut(r)[off..off + pv.cols()].copy_from_slice(pv.row(r));
                off += pv.cols();
            }
        }
        Ok(self.push(Op::HCat(parts.to_vec()), v))
    }

    /// Scales row `i` of `a` by `w[i]`, with `w` an `n × 1` column.
    pub fn mul_column(&mut self, a: Var, w: Var) -> Result<Var> {
        let (av, wv) = (self.value(a), self.value(w));
        if wv.cols() != 1 || wv.rows() != av.rows() {
            return Err(MoiraError::dim("mul_column", av.shape(), wv.shape()));
        }
        let mut v = av.clone();
        for r in 0..v.rows() {
            let s = wv.get(r, 0);
            for x in v.row_mut(r) {
                *x *= s;
            }
        }
        Ok(self.push(Op::MulColumn(a, w), v))
    }

    /// Row softmax restricted to entries where `mask` is true; the rest are 0.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let v = ops::masked_row_softmax(self.value(a), mask)?;
        Ok(self.push(Op::MaskedSoftmax(a), v))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let mask = vec![true; self.value(a).len()];
        self.masked_softmax(a, &mask)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = ops::row_log_softmax(self.value(a));
        self.push(Op::LogSoftmax(a), v)
    }

    /// `ln(max(a, floor))` elementwise.
    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| x.max(floor).ln());
        self.push(Op::LnClamp(a, floor), v)
    }

    /// Selects `a[i, cols[i]]` per row into an `n × 1` column.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if cols.len() != av.rows() {
            return Err(MoiraError::dim("pick", av.shape(), (cols.len(), 1)));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= av.cols()) {
            return Err(MoiraError::Contract(format!(
                "pick index {bad} out of range for {} columns",
                av.cols()
            )));
        }
        let v = Tensor2::from_fn(cols.len(), 1, |i, _| av.get(i, cols[i]));
        Ok(self.push(Op::Pick(a, cols.to_vec()), v))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor2::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let v = Tensor2::scalar(av.sum() / av.len() as f64);
        self.push(Op::Mean(a), v)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    /// Pairwise cosine similarity between rows of `a` and rows of `b`.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::cosine_matrix(self.value(a), self.value(b))?;
        Ok(self.push(Op::Cosine(a, b), v))
    }

    /// Reverse sweep from a `1 × 1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(MoiraError::Contract(format!(
                "backward root must be 1x1, got {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor2::scalar(1.0));

        for k in (0..=root.0).rev() {
            let Some(g) = grads[k].take() else { continue };
            let node = &self.nodes[k];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b))?;
                    let db = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.map(|x| -x))?;
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y)?;
                    let db = g.zip_map(self.value(*a), |x, y| x * y)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::AddRow(a, b) => {
                    let mut db = Tensor2::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, x) in db.values_mut().iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, db)?;
                }
                Op::MulConst(a, c) => {
                    accumulate(&mut grads, *a, g.zip_map(c, |x, y| x * y)?)?;
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, *a, g.map(|x| x * c))?;
                }
                Op::LeakyRelu(a, slope) => {
                    let da = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { slope * x })?;
                    accumulate(&mut grads, *a, da)?;
                }
                Op::GatherRows(a, idx) => {
                    let av = self.value(*a);
                    let mut da = Tensor2::zeros(av.rows(), av.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        for (d, x) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                }
                Op::ScatterRows(a, idx) => {
                    accumulate(&mut grads, *a, g.gather_rows(idx))?;
                }
                Op::Column(a, j) => {
                    let av = self.value(*a);
                    let mut da = Tensor2::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        da.set(r, *j, g.get(r, 0));
                    }
                    accumulate(&mut grads, *a, da)?;
                }
                Op::HCat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let cols: Vec<usize> = (off..off + w).collect();
                        accumulate(&mut grads, *p, g.gather_cols(&cols))?;
                        off += w;
                    }
                }
                Op::MulColumn(a, w) => {
                    let (av, wv) = (self.value(*a), self.value(*w));
                    let mut da = g.clone();
                    let mut dw = Tensor2::zeros(wv.rows(), 1);
                    for r in 0..g.rows() {
                        let s = wv.get(r, 0);
                        let dot: f64 = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                        dw.set(r, 0, dot);
                        for x in da.row_mut(r) {
                            *x *= s;
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *w, dw)?;
                }
                Op::MaskedSoftmax(a) => {
                    let y = &node.value;
                    let mut da = Tensor2::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(x, p)| x * p).sum();
                        for ((d, &x), &p) in da.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *d = p * (x - dot);
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let mut da = g.clone();
                    for r in 0..y.rows() {
                        let total: f64 = g.row(r).iter().sum();
                        for (d, &ly) in da.row_mut(r).iter_mut().zip(y.row(r)) {
                            *d -= ly.exp() * total;
                        }
                    }
                    accumulate(&mut grads, *a, da)?;
                }
                Op::LnClamp(a, floor) => {
                    let da = g.zip_map(self.value(*a), |x, v| if v > *floor { x / v } else { 0.0 })?;
                    accumulate(&mut grads, *a, da)?;
                }
                Op::Pick(a, cols) => {
                    let av = self.value(*a);
                    let mut da = Tensor2::zeros(av.rows(), av.cols());
                    for (i, &c) in cols.iter().enumerate() {
                        da.set(i, c, g.get(i, 0));
                    }
                    accumulate(&mut grads, *a, da)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Tensor2::full(r, c, g.item()?))?;
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let n = (r * c) as f64;
                    accumulate(&mut grads, *a, Tensor2::full(r, c, g.item()? / n))?;
                }
                Op::Transpose(a) => {
                    accumulate(&mut grads, *a, g.transpose())?;
                }
                Op::Cosine(a, b) => {
                    let (da, db) = cosine_backward(self.value(*a), self.value(*b), &node.value, &g)?;
                    accumulate(&mut grads, *a, da)?;
                    accumulate(&mut grads, *b, db)?;
                }
            }
            grads[k] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor2>], v: Var, g: Tensor2) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

// S_ij = a_i·b_j / max(|a_i||b_j|, eps). Where the floor is inactive the
// norm term contributes -S_ij a_i / |a_i|^2; under the floor it is constant.
fn cosine_backward(a: &Tensor2, b: &Tensor2, s: &Tensor2, g: &Tensor2) -> Result<(Tensor2, Tensor2)> {
    let na = ops::row_norms(a);
    let nb = ops::row_norms(b);
    let (n, m) = (a.rows(), b.rows());
    let mut w = Tensor2::zeros(n, m);
    let mut ra = vec![0.0; n];
    let mut rb = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let gij = g.get(i, j);
            if gij == 0.0 {
                continue;
            }
            let prod = na[i] * nb[j];
            w.set(i, j, gij / prod.max(COSINE_EPS));
            if prod > COSINE_EPS {
                let gs = gij * s.get(i, j);
                ra[i] += gs;
                rb[j] += gs;
            }
        }
    }
    let mut da = w.matmul(b)?;
    let mut db = w.t_matmul(a)?;
    for (i, r) in ra.iter().enumerate() {
        if *r != 0.0 {
            let c = r / (na[i] * na[i]);
            da.row_mut(i).iter_mut().zip(a.row(i)).for_each(|(d, x)| *d -= c * x);
        }
    }
    for (j, r) in rb.iter().enumerate() {
        if *r != 0.0 {
            let c = r / (nb[j] * nb[j]);
            db.row_mut(j).iter_mut().zip(b.row(j)).for_each(|(d, x)| *d -= c * x);
        }
    }
    Ok((da, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{max_rel_err, numeric_grad, FD_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor2 {
        Tensor2::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
    }

    type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

    fn check(shapes: &[(usize, usize)], build: &Build, trials: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let inputs: Vec<Tensor2> = shapes.iter().map(|&(r, c)| random(&mut rng, r, c)).collect();
            let eval = |xs: &[Tensor2]| {
                let mut tape = Tape::new();
                let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
                let root = build(&mut tape, &vars);
                tape.value(root).item().unwrap()
            };
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
            let root = build(&mut tape, &vars);
            let grads = tape.backward(root).unwrap();
            for (k, x) in inputs.iter().enumerate() {
                let analytic = grads.get_or_zeros(vars[k], x);
                let numeric = numeric_grad(x, FD_STEP, &mut |xk| {
                    let mut xs = inputs.clone();
                    xs[k] = xk.clone();
                    eval(&xs)
                });
                let err = max_rel_err(&analytic, &numeric);
                assert!(err < 1e-5, "input {k}: rel err {err}");
            }
        }
    }

    // Weighted sum so every output element carries a distinct upstream gradient.
    fn probe(t: &mut Tape, v: Var) -> Var {
        let (r, c) = t.value(v).shape();
        let w = t.leaf(Tensor2::from_fn(r, c, |i, j| 0.3 + 0.7 * ((i * 7 + j * 3) % 5) as f64));
        let p = t.mul(v, w).unwrap();
        t.sum(p)
    }

    #[test]
    fn sum_gives_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor2::from_fn(3, 2, |i, j| i as f64 - j as f64));
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &Tensor2::ones(3, 2));
    }

    #[test]
    fn square_at_three() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor2::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item().unwrap(), 6.0);
    }

    #[test]
    fn non_scalar_root_is_contract_error() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor2::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(MoiraError::Contract(_))));
    }

    #[test]
    fn grads_match_shapes_of_values() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor2::ones(2, 3));
        let b = t.leaf(Tensor2::ones(3, 4));
        let c = t.matmul(a, b).unwrap();
        let s = t.mean(c);
        let g = t.backward(s).unwrap();
        for v in [a, b, c, s] {
            assert_eq!(g.get(v).unwrap().shape(), t.value(v).shape());
        }
    }

    #[test]
    fn fd_matmul_add_sub_mul() {
        check(&[(3, 4), (4, 2), (3, 2)], &|t, v| {
            let m = t.matmul(v[0], v[1]).unwrap();
            let a = t.add(m, v[2]).unwrap();
            let s = t.sub(a, v[2]).unwrap();
            let p = t.mul(s, a).unwrap();
            probe(t, p)
        }, 100, 1);
    }

    #[test]
    fn fd_add_row_scale_leaky_mulconst() {
        check(&[(4, 3), (1, 3)], &|t, v| {
            let a = t.add_row(v[0], v[1]).unwrap();
            let l = t.leaky_relu(a, 0.01);
            let s = t.scale(l, -1.7);
            let c = t.mul_const(s, Tensor2::from_fn(4, 3, |i, j| (i + j) as f64 * 0.5)).unwrap();
            probe(t, c)
        }, 100, 2);
    }

    #[test]
    fn fd_gather_scatter_column_hcat_mulcolumn() {
        check(&[(3, 2), (5, 1), (5, 2)], &|t, v| {
            let s = t.scatter_rows(v[0], &[4, 0, 2], 5).unwrap();
            let h = t.hcat(&[s, v[1], v[2]]).unwrap();
            let c = t.column(h, 3).unwrap();
            let m = t.mul_column(h, c).unwrap();
            let g = t.gather_rows(m, &[1, 1, 4, 0]).unwrap();
            probe(t, g)
        }, 100, 3);
    }

    #[test]
    fn fd_softmax_family() {
        let mask = vec![true, false, true, true, true, true, false, true, true];
        check(&[(3, 3)], &move |t, v| {
            let y = t.masked_softmax(v[0], &mask).unwrap();
            let l = t.log_softmax(v[0]);
            let s = t.add(y, l).unwrap();
            let p = t.pick(s, &[0, 2, 1]).unwrap();
            let w = t.transpose(p);
            let q = t.softmax(w).unwrap();
            let lnq = t.ln_clamped(q, 1e-12);
            let m = t.mean(lnq);
            let pr = probe(t, s);
            t.add(m, pr).unwrap()
        }, 100, 4);
    }

    #[test]
    fn fd_cosine() {
        check(&[(4, 3), (5, 3)], &|t, v| {
            let c = t.cosine(v[0], v[1]).unwrap();
            probe(t, c)
        }, 100, 5);
    }

    #[test]
    fn fd_random_three_layer_composition() {
        // 20 leaves: 3 weight/bias pairs plus extras mixed in.
        let mut shapes = vec![(2, 4), (4, 5), (1, 5), (5, 3), (1, 3), (3, 2), (1, 2)];
        shapes.extend(std::iter::repeat_n((2, 2), 13));
        check(&shapes, &|t, v| {
            let mut h = v[0];
            for layer in 0..3 {
                let w = v[1 + 2 * layer];
                let b = v[2 + 2 * layer];
                let m = t.matmul(h, w).unwrap();
                let a = t.add_row(m, b).unwrap();
                h = t.leaky_relu(a, 0.01);
            }
            for extra in &v[7..] {
                let p = t.mul(h, *extra).unwrap();
                h = t.add(h, p).unwrap();
            }
            probe(t, h)
        }, 20, 6);
    }

    #[test]
    fn leaves_of_finds_inputs() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor2::ones(1, 2));
        let b = t.leaf(Tensor2::ones(1, 2));
        let unused = t.leaf(Tensor2::ones(1, 2));
        let c = t.add(a, b).unwrap();
        let s = t.sum(c);
        assert_eq!(t.leaves_of(s), vec![a, b]);
        assert!(!t.leaves_of(s).contains(&unused));
    }
}
