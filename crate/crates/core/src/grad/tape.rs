use super::tensor::{dims2, gemm, matmul};
use super::{GradError, ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LogSigmoid(Var),
    ClampMin(Var, f64),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    StraightThrough(Var),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of a forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to a leaf or parameter node.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Adds the gradient of every parameter leaf into its accumulator.
    pub fn accumulate(&self, store: &mut ParamStore) {
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>, GradError> {
    if a.shape() == b.shape() {
        return Ok(a.shape().to_vec());
    }
    let (ar, ac) = a.dims2();
    let (br, bc) = b.dims2();
    let r = match (ar, br) {
        _ if ar == br => ar,
        (1, _) => br,
        (_, 1) => ar,
        _ => return Err(shape_err(op, a, b)),
    };
    let c = match (ac, bc) {
        _ if ac == bc => ac,
        (1, _) => bc,
        (_, 1) => ac,
        _ => return Err(shape_err(op, a, b)),
    };
    Ok(vec![r, c])
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> GradError {
    GradError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

#[inline]
fn at(t: &Tensor, i: usize, j: usize) -> f64 {
    let (r, c) = t.dims2();
    t.data()[(if r == 1 { 0 } else { i }) * c + if c == 1 { 0 } else { j }]
}

fn binary(a: &Tensor, b: &Tensor, shape: Vec<usize>, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (r, c) = dims2(&shape);
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(f(at(a, i, j), at(b, i, j)));
        }
    }
    Tensor::new(shape, data).expect("broadcast shape")
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(g: Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g;
    }
    let (gr, gc) = g.dims2();
    let (r, c) = dims2(shape);
    if (gr, gc) == (r, c) {
        return g.reshape(shape.to_vec()).expect("same size");
    }
    let mut out = Tensor::zeros(shape);
    let d = out.data_mut();
    for i in 0..gr {
        for j in 0..gc {
            let ii = if r == 1 { 0 } else { i };
            let jj = if c == 1 { 0 } else { j };
            d[ii * c + jj] += g.data()[i * gc + j];
        }
    }
    out
}

fn row_softmax(x: &Tensor) -> Tensor {
    let (r, c) = x.dims2();
    let mut out = x.clone();
    let d = out.data_mut();
    for i in 0..r {
        let row = &mut d[i * c..(i + 1) * c];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

fn row_log_softmax(x: &Tensor) -> Tensor {
    let (r, c) = x.dims2();
    let mut out = x.clone();
    let d = out.data_mut();
    for i in 0..r {
        let row = &mut d[i * c..(i + 1) * c];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sigmoid(x: f64) -> f64 {
    // -softplus(-x)
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
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

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; gradients are still reported for it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t)
    }

    /// Snapshot of a parameter's current value, linked back for accumulation.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(Op::Param(id), store.value(id).clone())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let v = matmul(ta, tb);
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape("add", ta, tb)?;
        let v = binary(ta, tb, shape, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape("sub", ta, tb)?;
        let v = binary(ta, tb, shape, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape("mul", ta, tb)?;
        let v = binary(ta, tb, shape, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a), v)
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, GradError> {
        let first = self.value(parts[0]);
        let rows = first.rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(shape_err("concat", first, t));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let v = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(Op::Concat(parts.to_vec()), v))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, GradError> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        if start > end || end > c {
            return Err(GradError::Shape {
                op: "slice_cols",
                lhs: t.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let v = Tensor::new(vec![r, end - start], data)?;
        Ok(self.push(Op::SliceCols(a, start), v))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(a, slope), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Log(a), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    /// Softmax over the last axis (each row of a matrix).
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = row_softmax(self.value(a));
        self.push(Op::Softmax(a), v)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = row_log_softmax(self.value(a));
        self.push(Op::LogSoftmax(a), v)
    }

    /// `log(sigmoid(x))`, stable for large |x|.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(log_sigmoid);
        self.push(Op::LogSigmoid(a), v)
    }

    /// `max(x, lo)`; the gradient is zero where the clamp is active.
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        let v = self.value(a).map(|x| x.max(lo));
        self.push(Op::ClampMin(a, lo), v)
    }

    /// `log(max(x, floor))`.
    pub fn clamped_log(&mut self, a: Var, floor: f64) -> Var {
        let c = self.clamp_min(a, floor);
        self.log(c)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.numel() as f64);
        self.push(Op::Mean(a), v)
    }

    /// Row sums of a matrix, shape `[rows, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (r, _) = t.dims2();
        let data = (0..r).map(|i| t.row(i).iter().sum()).collect();
        let v = Tensor::new(vec![r, 1], data).expect("row sums");
        self.push(Op::SumCols(a), v)
    }

    /// Forward value `hard`, gradient routed unchanged to `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Tensor) -> Result<Var, GradError> {
        if hard.shape() != self.value(soft).shape() {
            return Err(shape_err("straight_through", self.value(soft), &hard));
        }
        Ok(self.push(Op::StraightThrough(soft), hard))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, GradError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(GradError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        let mut params = Vec::new();

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Leaf => grads[idx] = Some(g),
                Op::Param(id) => {
                    params.push((*id, idx));
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k) = ta.dims2();
                    let n = tb.cols();
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, tb.data(), true, &mut da, 0.0);
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, g.data(), false, &mut db, 0.0);
                    acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), da)?);
                    acc(&mut grads, *b, Tensor::new(tb.shape().to_vec(), db)?);
                }
                Op::Add(a, b) => {
                    let sa = self.value(*a).shape().to_vec();
                    let sb = self.value(*b).shape().to_vec();
                    acc(&mut grads, *a, reduce_to(g.clone(), &sa));
                    acc(&mut grads, *b, reduce_to(g, &sb));
                }
                Op::Sub(a, b) => {
                    let sa = self.value(*a).shape().to_vec();
                    let sb = self.value(*b).shape().to_vec();
                    acc(&mut grads, *a, reduce_to(g.clone(), &sa));
                    acc(&mut grads, *b, reduce_to(g.map(|x| -x), &sb));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = binary(&g, tb, g.shape().to_vec(), |x, y| x * y);
                    let gb = binary(&g, ta, g.shape().to_vec(), |x, y| x * y);
                    let (sa, sb) = (ta.shape().to_vec(), tb.shape().to_vec());
                    acc(&mut grads, *a, reduce_to(ga, &sa));
                    acc(&mut grads, *b, reduce_to(gb, &sb));
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| x * c)),
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let pt = self.value(*p);
                        let pc = pt.cols();
                        let mut data = Vec::with_capacity(rows * pc);
                        for i in 0..rows {
                            data.extend_from_slice(&g.data()[i * total + offset..i * total + offset + pc]);
                        }
                        offset += pc;
                        acc(&mut grads, *p, Tensor::new(pt.shape().to_vec(), data)?);
                    }
                }
                Op::SliceCols(a, start) => {
                    let ta = self.value(*a);
                    let (r, c) = ta.dims2();
                    let w = g.cols();
                    let mut full = Tensor::zeros(ta.shape());
                    let d = full.data_mut();
                    for i in 0..r {
                        d[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                    }
                    acc(&mut grads, *a, full);
                }
                Op::Sigmoid(a) => acc(&mut grads, *a, g.zip_map(y, |g, y| g * y * (1.0 - y))),
                Op::Tanh(a) => acc(&mut grads, *a, g.zip_map(y, |g, y| g * (1.0 - y * y))),
                Op::LeakyRelu(a, slope) => {
                    let s = *slope;
                    let gx = g.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { g * s });
                    acc(&mut grads, *a, gx);
                }
                Op::Exp(a) => acc(&mut grads, *a, g.zip_map(y, |g, y| g * y)),
                Op::Log(a) => acc(&mut grads, *a, g.zip_map(self.value(*a), |g, x| g / x)),
                Op::Square(a) => acc(&mut grads, *a, g.zip_map(self.value(*a), |g, x| 2.0 * g * x)),
                Op::Sqrt(a) => acc(&mut grads, *a, g.zip_map(y, |g, y| 0.5 * g / y)),
                Op::Softmax(a) => {
                    let (r, c) = y.dims2();
                    let mut gx = g.clone();
                    let d = gx.data_mut();
                    for i in 0..r {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            d[i * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::LogSoftmax(a) => {
                    let (r, c) = y.dims2();
                    let mut gx = g.clone();
                    let d = gx.data_mut();
                    for i in 0..r {
                        let gsum: f64 = g.row(i).iter().sum();
                        for j in 0..c {
                            d[i * c + j] = g.row(i)[j] - y.row(i)[j].exp() * gsum;
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::LogSigmoid(a) => {
                    acc(&mut grads, *a, g.zip_map(self.value(*a), |g, x| g * sigmoid(-x)))
                }
                Op::ClampMin(a, lo) => {
                    let lo = *lo;
                    let gx = g.zip_map(self.value(*a), |g, x| if x > lo { g } else { 0.0 });
                    acc(&mut grads, *a, gx);
                }
                Op::Sum(a) => {
                    let s = g.item();
                    acc(&mut grads, *a, Tensor::full(self.value(*a).shape(), s));
                }
                Op::Mean(a) => {
                    let ta = self.value(*a);
                    let s = g.item() / ta.numel() as f64;
                    acc(&mut grads, *a, Tensor::full(ta.shape(), s));
                }
                Op::SumCols(a) => {
                    let ta = self.value(*a);
                    let (r, c) = ta.dims2();
                    let data = (0..r).flat_map(|i| std::iter::repeat_n(g.data()[i], c)).collect();
                    acc(&mut grads, *a, Tensor::new(ta.shape().to_vec(), data)?);
                }
                Op::StraightThrough(soft) => acc(&mut grads, *soft, g),
            }
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads, params })
    }
}
