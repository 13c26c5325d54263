//! Reverse-mode differentiation over 2-D arrays.
//!
//! A [`Graph`] records every operation of one forward pass. Values are
//! computed eagerly; [`Graph::backward`] walks the record in reverse and
//! accumulates gradients. A parameter pulled into the graph more than once
//! resolves to the same node, so its gradient sums every use.

use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{s, Array2, Axis};

use super::params::{Gradients, Mat, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Rc<Mat>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Abs(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Rc<Vec<usize>>),
    AddGroup(Var, Var, usize),
    Reshape(Var),
    MaskedSoftmax(Var, Rc<Vec<bool>>),
    MaskedLogSoftmax(Var, Rc<Vec<bool>>),
    PickCols(Var, Rc<Vec<usize>>),
    RowMatConst(Var, Rc<Vec<Mat>>),
    RowMax(Var, Vec<usize>),
    SumCols(Var),
    SumAll(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
}

/// One recorded forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Dimension(msg()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// A constant; receives no gradient outside the graph.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// The node holding parameter `id`, created on first use.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        check(ac == br, || format!("matmul {ar}x{ac} by {br}x{bc}"))?;
        let value = self.value(a).dot(self.value(b));
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a + row`, broadcasting a 1xC row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, ac) = self.shape(a);
        let (rr, rc) = self.shape(row);
        check(rr == 1 && rc == ac, || format!("bias {rr}x{rc} for {ac} columns"))?;
        let value = self.value(a) + self.value(row);
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        check(sa == sb, || format!("{what} of {sa:?} and {sb:?}"))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.value(a) + self.value(b);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = self.value(a) - self.value(b);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.value(a) * self.value(b);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a) * factor;
        self.push(value, Op::Scale(a, factor))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Mat) -> Result<Var> {
        let (sa, sc) = (self.shape(a), c.dim());
        check(sa == sc, || format!("mul_const of {sa:?} and {sc:?}"))?;
        let value = self.value(a) * &c;
        Ok(self.push(value, Op::MulConst(a, Rc::new(c))))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::abs);
        self.push(value, Op::Abs(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        check(!parts.is_empty(), || "concat of nothing".into())?;
        let rows = self.shape(parts[0]).0;
        check(parts.iter().all(|&p| self.shape(p).0 == rows), || {
            "concat_cols with differing row counts".into()
        })?;
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("shapes checked");
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let cols = self.shape(a).1;
        check(start < end && end <= cols, || format!("slice {start}..{end} of {cols} columns"))?;
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        check(!parts.is_empty(), || "concat of nothing".into())?;
        let cols = self.shape(parts[0]).1;
        check(parts.iter().all(|&p| self.shape(p).1 == cols), || {
            "concat_rows with differing column counts".into()
        })?;
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("shapes checked");
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows of `a` picked by `rows` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        let n = self.shape(a).0;
        check(rows.iter().all(|&r| r < n), || format!("gather row out of {n}"))?;
        let value = self.value(a).select(Axis(0), &rows);
        Ok(self.push(value, Op::GatherRows(a, Rc::new(rows))))
    }

    /// `a` has `B * group` rows; row `b * group + i` gets row `b` of `q` added.
    pub fn add_group(&mut self, a: Var, q: Var, group: usize) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (qr, qc) = self.shape(q);
        check(ac == qc && ar == qr * group, || {
            format!("add_group {ar}x{ac} with {qr}x{qc}, group {group}")
        })?;
        let mut value = self.value(a).clone();
        let qv = self.value(q);
        for (r, mut row) in value.rows_mut().into_iter().enumerate() {
            row += &qv.row(r / group);
        }
        Ok(self.push(value, Op::AddGroup(a, q, group)))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let len = self.value(a).len();
        check(rows * cols == len, || format!("reshape {len} into {rows}x{cols}"))?;
        let data: Vec<f64> = self.value(a).iter().copied().collect();
        let value = Array2::from_shape_vec((rows, cols), data).expect("length checked");
        Ok(self.push(value, Op::Reshape(a)))
    }

    fn check_mask(&self, u: Var, forbidden: &[bool]) -> Result<()> {
        let (r, c) = self.shape(u);
        check(forbidden.len() == r * c, || "mask shape differs from scores".into())?;
        for row in 0..r {
            if forbidden[row * c..(row + 1) * c].iter().all(|&f| f) {
                return Err(Error::State(format!("row {row}: every index is forbidden")));
            }
        }
        Ok(())
    }

    /// Row-wise softmax over the non-forbidden entries; forbidden entries are
    /// exactly zero and excluded from the normalizer. `forbidden` is
    /// row-major with the shape of `u`.
    pub fn masked_softmax(&mut self, u: Var, forbidden: Vec<bool>) -> Result<Var> {
        self.check_mask(u, &forbidden)?;
        let value = masked_softmax_rows(self.value(u), &forbidden);
        Ok(self.push(value, Op::MaskedSoftmax(u, Rc::new(forbidden))))
    }

    /// Row-wise log of [`Graph::masked_softmax`], with forbidden entries set
    /// to 0 instead of minus infinity.
    pub fn masked_log_softmax(&mut self, u: Var, forbidden: Vec<bool>) -> Result<Var> {
        self.check_mask(u, &forbidden)?;
        let uv = self.value(u);
        let (r, c) = uv.dim();
        let mut value = Mat::zeros((r, c));
        for row in 0..r {
            let mask = &forbidden[row * c..(row + 1) * c];
            let max = (0..c)
                .filter(|&i| !mask[i])
                .map(|i| uv[[row, i]])
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = max
                + (0..c)
                    .filter(|&i| !mask[i])
                    .map(|i| (uv[[row, i]] - max).exp())
                    .sum::<f64>()
                    .ln();
            for i in (0..c).filter(|&i| !mask[i]) {
                value[[row, i]] = uv[[row, i]] - lse;
            }
        }
        Ok(self.push(value, Op::MaskedLogSoftmax(u, Rc::new(forbidden))))
    }

    /// Entry `cols[r]` of every row `r`, as an Rx1 column.
    pub fn pick_cols(&mut self, a: Var, cols: Vec<usize>) -> Result<Var> {
        let (r, c) = self.shape(a);
        check(cols.len() == r && cols.iter().all(|&i| i < c), || "pick_cols index".into())?;
        let av = self.value(a);
        let value = Array2::from_shape_fn((r, 1), |(row, _)| av[[row, cols[row]]]);
        Ok(self.push(value, Op::PickCols(a, Rc::new(cols))))
    }

    /// Row `b` of `a` (1xN) times the constant `mats[b]` (NxD); result BxD.
    pub fn row_mat_const(&mut self, a: Var, mats: Rc<Vec<Mat>>) -> Result<Var> {
        let (r, c) = self.shape(a);
        check(mats.len() == r, || format!("{} matrices for {r} rows", mats.len()))?;
        let d = mats.first().map(|m| m.ncols()).unwrap_or(0);
        check(mats.iter().all(|m| m.dim() == (c, d)), || "row_mat_const shapes".into())?;
        let av = self.value(a);
        let mut value = Mat::zeros((r, d));
        for (b, m) in mats.iter().enumerate() {
            let row = av.row(b).dot(m);
            value.row_mut(b).assign(&row);
        }
        Ok(self.push(value, Op::RowMatConst(a, mats)))
    }

    /// Row maxima as an Rx1 column; the gradient flows to the first maximal
    /// entry of each row.
    pub fn row_max(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (r, c) = av.dim();
        let mut arg = Vec::with_capacity(r);
        let mut value = Mat::zeros((r, 1));
        for row in 0..r {
            let mut best = 0;
            for i in 1..c {
                if av[[row, i]] > av[[row, best]] {
                    best = i;
                }
            }
            arg.push(best);
            value[[row, 0]] = av[[row, best]];
        }
        self.push(value, Op::RowMax(a, arg))
    }

    /// Row sums as an Rx1 column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::SumCols(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    /// Batch normalization with statistics of the current rows.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.shape(x);
        check(self.shape(gamma) == (1, c) && self.shape(beta) == (1, c), || {
            "batch norm scale/shift shape".into()
        })?;
        check(r >= 2, || "batch norm statistics need at least two rows".into())?;
        let xv = self.value(x);
        let mean = xv.mean_axis(Axis(0)).expect("rows checked");
        let var = xv.var_axis(Axis(0), 0.0);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = xv - &mean;
        for mut col_row in xhat.rows_mut() {
            col_row.iter_mut().zip(&inv_std).for_each(|(v, s)| *v *= s);
        }
        let value = &xhat * self.value(gamma) + self.value(beta);
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Gradients of the scalar `loss` with respect to every parameter used.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let all = self.backward_all(loss, None)?;
        let mut out: Vec<Option<Mat>> = Vec::new();
        for (&id, &var) in &self.params {
            if out.len() <= id.index() {
                out.resize(id.index() + 1, None);
            }
            out[id.index()] = all.get(var.0).cloned().flatten();
        }
        Ok(Gradients::from_vec(out))
    }

    /// Gradient of `loss` with respect to an arbitrary node.
    pub fn grad_of(&self, loss: Var, wrt: Var) -> Result<Mat> {
        let all = self.backward_all(loss, Some(wrt))?;
        Ok(all
            .get(wrt.0)
            .cloned()
            .flatten()
            .unwrap_or_else(|| Mat::zeros(self.shape(wrt))))
    }

    /// Runs the reverse sweep. Gradients survive in the returned table only
    /// for leaves and for `keep`.
    fn backward_all(&self, loss: Var, keep: Option<Var>) -> Result<Vec<Option<Mat>>> {
        check(self.shape(loss) == (1, 1), || "backward from a non-scalar".into())?;
        let mut grads: Vec<Option<Mat>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf | Op::Param) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if keep == Some(Var(idx)) {
                grads[idx] = Some(g.clone());
            }
            match &node.op {
                Op::Leaf | Op::Param => unreachable!("leaves skipped above"),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, f) => acc(&mut grads, *a, g * *f),
                Op::MulConst(a, c) => acc(&mut grads, *a, g * c.as_ref()),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, g * &y.mapv(|s| s * (1.0 - s)));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, g * &y.mapv(|t| 1.0 - t * t));
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(self.value(*a), |gv, &xv| {
                        if xv <= 0.0 {
                            *gv = 0.0
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => acc(&mut grads, *a, g * &node.value),
                Op::Abs(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(self.value(*a), |gv, &xv| {
                        *gv *= if xv > 0.0 {
                            1.0
                        } else if xv < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        acc(&mut grads, p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Mat::zeros(self.shape(*a));
                    let w = g.ncols();
                    ga.slice_mut(s![.., *start..*start + w]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        acc(&mut grads, p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::GatherRows(a, rows) => {
                    let mut ga = Mat::zeros(self.shape(*a));
                    for (i, &r) in rows.iter().enumerate() {
                        let mut dst = ga.row_mut(r);
                        dst += &g.row(i);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::AddGroup(a, q, group) => {
                    let mut gq = Mat::zeros(self.shape(*q));
                    for (r, row) in g.rows().into_iter().enumerate() {
                        let mut dst = gq.row_mut(r / group);
                        dst += &row;
                    }
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *a, g);
                }
                Op::Reshape(a) => {
                    let data: Vec<f64> = g.iter().copied().collect();
                    let ga = Array2::from_shape_vec(self.shape(*a), data).expect("same length");
                    acc(&mut grads, *a, ga);
                }
                Op::MaskedSoftmax(a, mask) => {
                    let p = &node.value;
                    let (r, c) = p.dim();
                    let mut ga = Mat::zeros((r, c));
                    for row in 0..r {
                        let dot: f64 = (0..c).map(|i| p[[row, i]] * g[[row, i]]).sum();
                        for i in (0..c).filter(|&i| !mask[row * c + i]) {
                            ga[[row, i]] = p[[row, i]] * (g[[row, i]] - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MaskedLogSoftmax(a, mask) => {
                    let lp = &node.value;
                    let (r, c) = lp.dim();
                    let mut ga = Mat::zeros((r, c));
                    for row in 0..r {
                        let m = &mask[row * c..(row + 1) * c];
                        let total: f64 = (0..c).filter(|&i| !m[i]).map(|i| g[[row, i]]).sum();
                        for i in (0..c).filter(|&i| !m[i]) {
                            ga[[row, i]] = g[[row, i]] - lp[[row, i]].exp() * total;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::PickCols(a, cols) => {
                    let mut ga = Mat::zeros(self.shape(*a));
                    for (row, &c) in cols.iter().enumerate() {
                        ga[[row, c]] = g[[row, 0]];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowMatConst(a, mats) => {
                    let mut ga = Mat::zeros(self.shape(*a));
                    for (b, m) in mats.iter().enumerate() {
                        ga.row_mut(b).assign(&m.dot(&g.row(b)));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowMax(a, arg) => {
                    let mut ga = Mat::zeros(self.shape(*a));
                    for (row, &c) in arg.iter().enumerate() {
                        ga[[row, c]] = g[[row, 0]];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = Array2::from_shape_fn((r, c), |(row, _)| g[[row, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let ga = Mat::from_elem(self.shape(*a), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ggamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gxhat = &g * self.value(*gamma);
                    let mean_g = gxhat.mean_axis(Axis(0)).expect("rows");
                    let mean_gx = (&gxhat * xhat).mean_axis(Axis(0)).expect("rows");
                    let gx = Array2::from_shape_fn(gxhat.dim(), |(r, c)| {
                        inv_std[c] * (gxhat[[r, c]] - mean_g[c] - xhat[[r, c]] * mean_gx[c])
                    });
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gamma, ggamma);
                    acc(&mut grads, *beta, gbeta);
                }
            }
        }
        Ok(grads)
    }
}

/// Row-wise masked softmax of a plain matrix.
pub fn masked_softmax_rows(u: &Mat, forbidden: &[bool]) -> Mat {
    let (r, c) = u.dim();
    let mut out = Mat::zeros((r, c));
    for row in 0..r {
        let mask = &forbidden[row * c..(row + 1) * c];
        let max = (0..c)
            .filter(|&i| !mask[i])
            .map(|i| u[[row, i]])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in (0..c).filter(|&i| !mask[i]) {
            let e = (u[[row, i]] - max).exp();
            out[[row, i]] = e;
            total += e;
        }
        out.row_mut(row).mapv_inplace(|v| v / total);
    }
    out
}
