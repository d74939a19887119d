use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{NnError, Tensor};
use crate::math;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    ClampMin(Var, f64),
    Sum(Var),
    Gather(Var, Arc<[usize]>),
    ScatterAdd(Var, Arc<[usize]>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the record is a topological
/// order by construction and the backward pass is a single reverse sweep.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::Shape { op, left: a.shape().to_vec(), right: b.shape().to_vec() }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn two(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize), NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let dims = ta.dims2(op)?;
        tb.dims2(op)?;
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        Ok(dims)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (r, k) = ta.dims2("matmul")?;
        let (k2, c) = tb.dims2("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; r * c];
        let (ad, bd) = (ta.data(), tb.data());
        for i in 0..r {
            let orow = &mut out[i * c..(i + 1) * c];
            for (p, &aip) in ad[i * k..(i + 1) * k].iter().enumerate() {
                if aip == 0.0 {
                    continue;
                }
                for (o, &bv) in orow.iter_mut().zip(&bd[p * c..(p + 1) * c]) {
                    *o += aip * bv;
                }
            }
        }
        let value = Tensor::matrix(r, c, out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64)
        -> Result<Var, NnError>
    {
        let (r, c) = self.two(name, a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::matrix(r, c, data)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    /// Adds a `[1, c]` row to every row of an `[r, c]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(row));
        let (r, c) = ta.dims2("add_row")?;
        if tb.shape() != [1, c] {
            return Err(shape_err("add_row", ta, tb));
        }
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_exact_mut(c) {
            for (x, &b) in chunk.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        let value = Tensor::matrix(r, c, data)?;
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x * factor).collect())
            .expect("same shape");
        self.push(value, Op::Scale(a, factor))
    }

    /// Concatenates along columns; all parts need the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = *parts.first().ok_or(NnError::Shape { op: "concat", left: vec![], right: vec![] })?;
        let (r, _) = self.value(first).dims2("concat")?;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.value(p).dims2("concat")?;
            if pr != r {
                return Err(shape_err("concat", self.value(first), self.value(p)));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::matrix(r, total, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
            .expect("same shape");
        self.push(value, op)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), math::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, Op::Log(a), math::ln)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, Op::Sqrt(a), math::sqrt)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a), |x| x * x)
    }

    /// `max(x, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.map(a, Op::ClampMin(a, floor), |x| if x < floor { floor } else { x })
    }

    /// Sum of all entries, as a `[1, 1]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Output row `i` is input row `index[i]`.
    pub fn gather(&mut self, a: Var, index: &Arc<[usize]>) -> Result<Var, NnError> {
        let t = self.value(a);
        let (r, c) = t.dims2("gather")?;
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            if i >= r {
                return Err(NnError::Index { op: "gather", index: i, len: r });
            }
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::matrix(index.len(), c, data)?;
        Ok(self.push(value, Op::Gather(a, index.clone())))
    }

    /// Output row `j` is the sum of input rows `i` with `index[i] == j`.
    pub fn scatter_add(&mut self, a: Var, index: &Arc<[usize]>, out_rows: usize) -> Result<Var, NnError> {
        let t = self.value(a);
        let (r, c) = t.dims2("scatter_add")?;
        if index.len() != r {
            return Err(NnError::Shape { op: "scatter_add", left: t.shape().to_vec(), right: vec![index.len()] });
        }
        let mut data = vec![0.0; out_rows * c];
        for (i, &j) in index.iter().enumerate() {
            if j >= out_rows {
                return Err(NnError::Index { op: "scatter_add", index: j, len: out_rows });
            }
            for (o, &x) in data[j * c..(j + 1) * c].iter_mut().zip(t.row(i)) {
                *o += x;
            }
        }
        let value = Tensor::matrix(out_rows, c, data)?;
        Ok(self.push(value, Op::ScatterAdd(a, index.clone())))
    }

    /// Gradients of the scalar `loss` with respect to every recorded node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(NnError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lt.shape().to_vec(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            // Interior gradients are consumed; only leaves keep theirs.
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (r, k) = ta.rows_cols();
                    let c = tb.rows_cols().1;
                    let (ad, bd, gd) = (ta.data(), tb.data(), g.data());
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; r * k];
                    for i in 0..r {
                        let grow = &gd[i * c..(i + 1) * c];
                        for p in 0..k {
                            let brow = &bd[p * c..(p + 1) * c];
                            da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * c];
                    for i in 0..r {
                        let grow = &gd[i * c..(i + 1) * c];
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for (o, &x) in db[p * c..(p + 1) * c].iter_mut().zip(grow) {
                                *o += aip * x;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(r, k, da)?);
                    accumulate(&mut grads, *b, Tensor::matrix(k, c, db)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, negate(&g));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = elementwise(&g, self.value(*b), |g, y| g * y);
                    let gb = elementwise(&g, self.value(*a), |g, x| g * x);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Div(a, b) => {
                    let tb = self.value(*b);
                    let ga = elementwise(&g, tb, |g, y| g / y);
                    let gb = elementwise(&elementwise(&g, &node.value, |g, q| g * q), tb, |gq, y| -gq / y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let (_, c) = g.rows_cols();
                    let mut gr = vec![0.0; c];
                    for chunk in g.data().chunks_exact(c) {
                        for (o, &x) in gr.iter_mut().zip(chunk) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *row, Tensor::matrix(1, c, gr)?);
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, factor) => {
                    let f = *factor;
                    accumulate(&mut grads, *a, map_tensor(&g, |x| x * f));
                }
                Op::Concat(parts) => {
                    let (r, total) = g.rows_cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).rows_cols().1;
                        let mut data = Vec::with_capacity(r * pc);
                        for i in 0..r {
                            data.extend_from_slice(&g.data()[i * total + offset..i * total + offset + pc]);
                        }
                        accumulate(&mut grads, p, Tensor::matrix(r, pc, data)?);
                        offset += pc;
                    }
                }
                Op::Relu(a) => {
                    let ga = elementwise(&g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    accumulate(&mut grads, *a, elementwise(&g, &node.value, |g, y| g * y));
                }
                Op::Log(a) => {
                    accumulate(&mut grads, *a, elementwise(&g, self.value(*a), |g, x| g / x));
                }
                Op::Sqrt(a) => {
                    accumulate(&mut grads, *a, elementwise(&g, &node.value, |g, y| 0.5 * g / y));
                }
                Op::Square(a) => {
                    accumulate(&mut grads, *a, elementwise(&g, self.value(*a), |g, x| 2.0 * g * x));
                }
                Op::ClampMin(a, floor) => {
                    let f = *floor;
                    let ga = elementwise(&g, self.value(*a), |g, x| if x < f { 0.0 } else { g });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let t = self.value(*a);
                    accumulate(&mut grads, *a, Tensor::full(t.shape().to_vec(), g.item()));
                }
                Op::Gather(a, index) => {
                    let (r, c) = self.value(*a).rows_cols();
                    let mut data = vec![0.0; r * c];
                    for (i, &src) in index.iter().enumerate() {
                        for (o, &x) in data[src * c..(src + 1) * c].iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(r, c, data)?);
                }
                Op::ScatterAdd(a, index) => {
                    let c = g.rows_cols().1;
                    let mut data = Vec::with_capacity(index.len() * c);
                    for &j in index.iter() {
                        data.extend_from_slice(g.row(j));
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(index.len(), c, data)?);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn map_tensor(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

fn negate(t: &Tensor) -> Tensor {
    map_tensor(t, |x| -x)
}

fn elementwise(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(g.shape().to_vec(), g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect())
        .expect("same shape")
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `like`'s shape when `v` does not
    /// influence the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape().to_vec()))
    }
}

/// Parameter leaves bound onto a tape, indexed like the [`ParamStore`].
///
/// [`ParamStore`]: super::ParamStore
#[derive(Debug, Clone)]
pub struct Bound {
    pub(crate) vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: super::ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
