//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and backward is a single reverse sweep. A node is
//! tracked only when at least one of its inputs is tracked; untracked nodes
//! hold values but never receive gradients.

use super::tensor::{matmul_nt_into, matmul_tn_into, Tensor};
use super::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Tanh(usize),
    Sigmoid(usize),
    LeakyRelu(usize, f64),
    Softplus(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    Log(usize),
    Exp(usize),
    Sum(usize),
    Mean(usize),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    Transpose(usize),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` did not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }
}

fn broadcast_dims(a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize), AutodiffError> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(AutodiffError::Shape(format!(
            "cannot broadcast {a:?} with {b:?}"
        ))),
    }
}

#[inline]
fn bidx(dims: (usize, usize), i: usize, j: usize) -> usize {
    let r = if dims.0 == 1 { 0 } else { i };
    let c = if dims.1 == 1 { 0 } else { j };
    r * dims.1 + c
}

fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
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

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, inputs: &[usize]) -> bool {
        inputs.iter().any(|&i| self.nodes[i].tracked)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    /// Records a leaf; it is differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let tracked = t.requires_grad();
        self.push(t, Op::Leaf, tracked)
    }

    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_grad())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        let tracked = self.tracked(&[a.0, b.0]);
        Ok(self.push(out, Op::MatMul(a.0, b.0), tracked))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let da = self.dims(a);
        let db = self.dims(b);
        let (r, c) = broadcast_dims(da, db)?;
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(f(av[bidx(da, i, j)], bv[bidx(db, i, j)]));
            }
        }
        let tracked = self.tracked(&[a.0, b.0]);
        Ok(self.push(Tensor::matrix(r, c, out)?, op, tracked))
    }

    /// Elementwise sum; either side may broadcast along a unit dimension.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, f64::min, Op::Minimum(a.0, b.0))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.nodes[a.0].value.map(f);
        let (r, c) = t.dims2();
        let t = Tensor::matrix(r, c, t.into_data()).expect("unary shape");
        let tracked = self.tracked(&[a.0]);
        self.push(t, op, tracked)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| k * x, Op::Scale(a.0, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x + k, Op::Offset(a.0))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(
            a,
            |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a.0, slope),
        )
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, stable_softplus, Op::Softplus(a.0))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a.0, lo, hi))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.mul(a, a)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let x = self.nodes[a.0].value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            softmax_row(&x[i * c..(i + 1) * c], &mut out[i * c..(i + 1) * c]);
        }
        let tracked = self.tracked(&[a.0]);
        self.push(
            Tensor::matrix(r, c, out).expect("softmax shape"),
            Op::SoftmaxRows(a.0),
            tracked,
        )
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let x = self.nodes[a.0].value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for j in 0..c {
                out[i * c + j] = row[j] - lse;
            }
        }
        let tracked = self.tracked(&[a.0]);
        self.push(
            Tensor::matrix(r, c, out).expect("log_softmax shape"),
            Op::LogSoftmaxRows(a.0),
            tracked,
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().sum();
        let tracked = self.tracked(&[a.0]);
        self.push(Tensor::scalar(s), Op::Sum(a.0), tracked)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        let tracked = self.tracked(&[a.0]);
        self.push(Tensor::scalar(s), Op::Mean(a.0), tracked)
    }

    /// Columns `start..end` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let (r, c) = self.dims(a);
        if start > end || end > c {
            return Err(AutodiffError::Shape(format!(
                "column slice {start}..{end} of width {c}"
            )));
        }
        let w = end - start;
        let x = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&x[i * c + start..i * c + end]);
        }
        let tracked = self.tracked(&[a.0]);
        Ok(self.push(Tensor::matrix(r, w, out)?, Op::SliceCols(a.0, start), tracked))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let (r, c) = self.dims(a);
        if start > end || end > r {
            return Err(AutodiffError::Shape(format!(
                "row slice {start}..{end} of height {r}"
            )));
        }
        let out = self.nodes[a.0].value.data()[start * c..end * c].to_vec();
        let tracked = self.tracked(&[a.0]);
        Ok(self.push(
            Tensor::matrix(end - start, c, out)?,
            Op::SliceRows(a.0, start),
            tracked,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let r = parts
            .first()
            .map(|&p| self.dims(p).0)
            .ok_or_else(|| AutodiffError::Shape("empty concat".into()))?;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pr != r {
                return Err(AutodiffError::Shape("concat_cols row mismatch".into()));
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let v = &self.nodes[p.0].value;
                out.extend_from_slice(v.row_slice(i));
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let tracked = self.tracked(&ids);
        Ok(self.push(Tensor::matrix(r, total, out)?, Op::ConcatCols(ids), tracked))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let c = parts
            .first()
            .map(|&p| self.dims(p).1)
            .ok_or_else(|| AutodiffError::Shape("empty concat".into()))?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pc != c {
                return Err(AutodiffError::Shape("concat_rows column mismatch".into()));
            }
            rows += pr;
            out.extend_from_slice(self.nodes[p.0].value.data());
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let tracked = self.tracked(&ids);
        Ok(self.push(Tensor::matrix(rows, c, out)?, Op::ConcatRows(ids), tracked))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.nodes[a.0].value.transpose();
        let tracked = self.tracked(&[a.0]);
        self.push(t, Op::Transpose(a.0), tracked)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let n = self.nodes.len();
        if loss.0 >= n {
            return Err(AutodiffError::Usage("loss is not on this tape".into()));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(AutodiffError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        if self.nodes[loss.0].tracked {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], target: usize, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[target].tracked {
            return;
        }
        let slot = grads[target].get_or_insert_with(|| vec![0.0; self.nodes[target].value.len()]);
        f(slot);
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = node.value.data();
        let (r, c) = node.value.dims2();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let av = &self.nodes[a].value;
                let bv = &self.nodes[b].value;
                let (n, k) = av.dims2();
                let m = bv.dims2().1;
                self.accumulate(grads, a, |ga| {
                    // dA = G * B^T
                    matmul_nt_into(g, bv.data(), ga, n, k, m);
                });
                self.accumulate(grads, b, |gb| {
                    // dB = A^T * G
                    matmul_tn_into(av.data(), g, gb, n, k, m);
                });
            }
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let da = self.nodes[a].value.dims2();
                let db = self.nodes[b].value.dims2();
                self.accumulate(grads, a, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[bidx(da, i, j)] += g[i * c + j];
                        }
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for i in 0..r {
                        for j in 0..c {
                            gb[bidx(db, i, j)] += sign * g[i * c + j];
                        }
                    }
                });
            }
            &Op::Mul(a, b) => {
                let da = self.nodes[a].value.dims2();
                let db = self.nodes[b].value.dims2();
                let av = self.nodes[a].value.data();
                let bv = self.nodes[b].value.data();
                self.accumulate(grads, a, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[bidx(da, i, j)] += g[i * c + j] * bv[bidx(db, i, j)];
                        }
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for i in 0..r {
                        for j in 0..c {
                            gb[bidx(db, i, j)] += g[i * c + j] * av[bidx(da, i, j)];
                        }
                    }
                });
            }
            &Op::Minimum(a, b) => {
                let da = self.nodes[a].value.dims2();
                let db = self.nodes[b].value.dims2();
                let av = self.nodes[a].value.data();
                let bv = self.nodes[b].value.data();
                self.accumulate(grads, a, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            if av[bidx(da, i, j)] <= bv[bidx(db, i, j)] {
                                ga[bidx(da, i, j)] += g[i * c + j];
                            }
                        }
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for i in 0..r {
                        for j in 0..c {
                            if av[bidx(da, i, j)] > bv[bidx(db, i, j)] {
                                gb[bidx(db, i, j)] += g[i * c + j];
                            }
                        }
                    }
                });
            }
            &Op::Scale(a, k) => self.accumulate(grads, a, |ga| {
                for (o, &gi) in ga.iter_mut().zip(g) {
                    *o += k * gi;
                }
            }),
            &Op::Offset(a) => self.accumulate(grads, a, |ga| {
                for (o, &gi) in ga.iter_mut().zip(g) {
                    *o += gi;
                }
            }),
            &Op::Tanh(a) => self.accumulate(grads, a, |ga| {
                for ((o, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                    *o += gi * (1.0 - yi * yi);
                }
            }),
            &Op::Sigmoid(a) => self.accumulate(grads, a, |ga| {
                for ((o, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                    *o += gi * yi * (1.0 - yi);
                }
            }),
            &Op::LeakyRelu(a, slope) => {
                let x = self.nodes[a].value.data();
                self.accumulate(grads, a, |ga| {
                    for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        *o += if xi > 0.0 { gi } else { slope * gi };
                    }
                })
            }
            &Op::Softplus(a) => {
                let x = self.nodes[a].value.data();
                self.accumulate(grads, a, |ga| {
                    for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        *o += gi * sigmoid(xi);
                    }
                })
            }
            &Op::Log(a) => {
                let x = self.nodes[a].value.data();
                self.accumulate(grads, a, |ga| {
                    for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        *o += gi / xi;
                    }
                })
            }
            &Op::Exp(a) => self.accumulate(grads, a, |ga| {
                for ((o, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                    *o += gi * yi;
                }
            }),
            &Op::Clamp(a, lo, hi) => {
                let x = self.nodes[a].value.data();
                self.accumulate(grads, a, |ga| {
                    for ((o, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        if xi >= lo && xi <= hi {
                            *o += gi;
                        }
                    }
                })
            }
            &Op::SoftmaxRows(a) => self.accumulate(grads, a, |ga| {
                for i in 0..r {
                    let row = i * c..(i + 1) * c;
                    let dot: f64 = g[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                    for j in row {
                        ga[j] += y[j] * (g[j] - dot);
                    }
                }
            }),
            &Op::LogSoftmaxRows(a) => self.accumulate(grads, a, |ga| {
                for i in 0..r {
                    let row = i * c..(i + 1) * c;
                    let gsum: f64 = g[row.clone()].iter().sum();
                    for j in row {
                        ga[j] += g[j] - y[j].exp() * gsum;
                    }
                }
            }),
            &Op::Sum(a) => self.accumulate(grads, a, |ga| {
                for o in ga.iter_mut() {
                    *o += g[0];
                }
            }),
            &Op::Mean(a) => {
                let n = self.nodes[a].value.len() as f64;
                self.accumulate(grads, a, |ga| {
                    for o in ga.iter_mut() {
                        *o += g[0] / n;
                    }
                })
            }
            &Op::SliceCols(a, start) => {
                let pc = self.nodes[a].value.cols();
                self.accumulate(grads, a, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * pc + start + j] += g[i * c + j];
                        }
                    }
                })
            }
            &Op::SliceRows(a, start) => self.accumulate(grads, a, |ga| {
                for (o, &gi) in ga[start * c..].iter_mut().zip(g) {
                    *o += gi;
                }
            }),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.nodes[p].value.cols();
                    self.accumulate(grads, p, |gp| {
                        for i in 0..r {
                            for j in 0..pc {
                                gp[i * pc + j] += g[i * c + offset + j];
                            }
                        }
                    });
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p].value.len();
                    self.accumulate(grads, p, |gp| {
                        for (o, &gi) in gp.iter_mut().zip(&g[offset..offset + len]) {
                            *o += gi;
                        }
                    });
                    offset += len;
                }
            }
            &Op::Transpose(a) => self.accumulate(grads, a, |ga| {
                // node is (r x c); input is (c x r)
                for i in 0..r {
                    for j in 0..c {
                        ga[j * r + i] += g[i * c + j];
                    }
                }
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_matmul_is_noop() {
        let mut tape = Tape::new();
        let x = Tensor::matrix(2, 3, vec![1., -2., 3., 0.5, 4., -1.]).unwrap();
        let i = tape.constant(Tensor::identity(2));
        let xv = tape.constant(x.clone());
        let y = tape.matmul(i, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn uniform_softmax_row() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[0.3; 5]));
        let y = tape.softmax_rows(x);
        for &v in tape.value(y).data() {
            assert_relative_eq!(v, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn leaky_relu_negative_side() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(-1.0));
        let y = tape.leaky_relu(x, 0.01);
        assert_relative_eq!(tape.value(y).item(), -0.01);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::matrix(3, 2, vec![0.1, 2., -3., 4., 5., 6.]).unwrap());
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0; 6]);
    }

    #[test]
    fn quadratic_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(&[1.0, 2.0]));
        let xx = tape.mul(x, x).unwrap();
        let s = tape.sum(xx);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(AutodiffError::Usage(_))));
    }

    #[test]
    fn untouched_param_gets_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(&[1.0, 2.0]));
        let unused = tape.param(Tensor::row(&[3.0, 4.0, 5.0]));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(unused).data(), &[0.0; 3]);
    }

    #[test]
    fn backward_is_repeatable() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(&[0.3, -0.7, 1.1]));
        let t = tape.tanh(x);
        let e = tape.exp(t);
        let s = tape.mean(e);
        let g1 = tape.backward(s).unwrap().wrt(x);
        let g2 = tape.backward(s).unwrap().wrt(x);
        assert_eq!(g1, g2);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(tape.matmul(a, b).is_err());
        let c = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(tape.add(a, c).is_err());
    }

    #[test]
    fn row_broadcast_gradient_sums() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[4, 2]));
        let b = tape.param(Tensor::row(&[1.0, 1.0]));
        let y = tape.add(x, b).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(b).data(), &[4.0, 4.0]);
    }

    #[test]
    fn constants_are_not_tracked() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::row(&[1.0]));
        let b = tape.exp(a);
        assert!(!tape.is_tracked(b));
    }
}
