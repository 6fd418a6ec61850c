use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::gemm_into;
use crate::numerics::{ParamId, ParamStore, Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Axis of a rank-2 tensor: `Axis(0)` runs down the rows, `Axis(1)` across
/// the columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Axis(pub usize);

#[derive(Clone, Copy, Debug)]
enum Leaf {
    Constant,
    Input,
    Param(ParamId),
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf(Leaf),
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow {
        a: Var,
        bias: Var,
    },
    Scale {
        a: Var,
        factor: T,
    },
    ScaleRows {
        a: Var,
        s: Var,
    },
    Tanh(Var),
    Sigmoid(Var),
    ConcatRows(Vec<Var>),
    SliceRows {
        a: Var,
        start: usize,
    },
    SliceCols {
        a: Var,
        start: usize,
    },
    Lookup {
        table: Var,
        ids: Vec<usize>,
    },
    SumAxis {
        a: Var,
        axis: Axis,
    },
    SumAll(Var),
    Softmax {
        a: Var,
        axis: Axis,
    },
    SegmentSoftmax {
        a: Var,
        offsets: Vec<usize>,
    },
    SegmentSum {
        a: Var,
        offsets: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor<T>,
    },
    Dropout {
        a: Var,
        mask: Tensor<T>,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only computation tape. Node order is a topological order, so the
/// backward pass simply walks it in reverse.
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.nodes[v.0].value.dims2(op)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf(Leaf::Constant), false)
    }

    /// A free leaf whose gradient is reported by [`Gradients::get`].
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf(Leaf::Input), true)
    }

    /// Copies a parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Leaf(Leaf::Param(id)), p.trainable)
    }

    /// `a · b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, true)
    }

    /// `op(a) · op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let value = Tensor::matmul(self.value(a), ta, self.value(b), tb)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul { a, b, ta, tb }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self
            .value(a)
            .add(self.value(b))
            .map_err(|_| Error::shape("add", self.value(a).shape(), self.value(b).shape()))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape("mul", x.shape(), y.shape()));
        }
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| p * q)
            .collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Adds the `1 × n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.dims(a, "add_row")?;
        if self.value(bias).shape() != [1, n] {
            return Err(Error::shape(
                "add_row",
                self.value(a).shape(),
                self.value(bias).shape(),
            ));
        }
        let mut value = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for row in value.data_mut().chunks_mut(n.max(1)) {
            for (v, &bj) in row.iter_mut().zip(&b) {
                *v += bj;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, Op::AddRow { a, bias }, rg))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let value = self.value(a).map(|v| v * factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale { a, factor }, rg)
    }

    /// Multiplies row `k` of `a` (`m × n`) by `s[k]` (`s` is `m × 1`).
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let (m, n) = self.dims(a, "scale_rows")?;
        if self.value(s).shape() != [m, 1] {
            return Err(Error::shape(
                "scale_rows",
                self.value(a).shape(),
                self.value(s).shape(),
            ));
        }
        let mut value = self.value(a).clone();
        let factors = self.value(s).data().to_vec();
        for (k, &f) in factors.iter().enumerate() {
            for v in &mut value.data_mut()[k * n..(k + 1) * n] {
                *v *= f;
            }
        }
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(value, Op::ScaleRows { a, s }, rg))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.tanh());
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Config("concat_rows of nothing".into()))?;
        let (_, n) = self.dims(first, "concat_rows")?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.dims(p, "concat_rows")?;
            if c != n {
                return Err(Error::shape(
                    "concat_rows",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::from_vec(&[rows, n], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a, "slice_rows")?;
        if start + len > m {
            return Err(Error::Index {
                op: "slice_rows",
                index: start + len,
                bound: m,
            });
        }
        let data = self.value(a).data()[start * n..(start + len) * n].to_vec();
        let value = Tensor::from_vec(&[len, n], data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceRows { a, start }, rg))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a, "slice_cols")?;
        if start + len > n {
            return Err(Error::Index {
                op: "slice_cols",
                index: start + len,
                bound: n,
            });
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&src.row(r)[start..start + len]);
        }
        let value = Tensor::from_vec(&[m, len], data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols { a, start }, rg))
    }

    /// Gathers rows of `table` (`rows × d`) into a `ids.len() × d` matrix.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let value = self.value(table).gather_rows(ids)?;
        let rg = self.rg(table);
        Ok(self.push(
            value,
            Op::Lookup {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Sums out `axis`: `Axis(0)` gives `1 × n`, `Axis(1)` gives `m × 1`.
    pub fn sum_over_axis(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let (m, n) = self.dims(a, "sum_over_axis")?;
        let x = self.value(a);
        let value = match axis.0 {
            0 => {
                let mut out = Tensor::zeros(&[1, n]);
                for r in 0..m {
                    for (o, &v) in out.data_mut().iter_mut().zip(x.row(r)) {
                        *o += v;
                    }
                }
                out
            }
            1 => {
                let data = (0..m).map(|r| x.row(r).iter().copied().sum()).collect();
                Tensor::from_vec(&[m, 1], data)?
            }
            _ => return Err(Error::shape("sum_over_axis", x.shape(), &[axis.0])),
        };
        let rg = self.rg(a);
        Ok(self.push(value, Op::SumAxis { a, axis }, rg))
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Tensor::filled(&[1, 1], self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let (m, n) = self.dims(a, "softmax")?;
        let x = self.value(a);
        if !x.all_finite() {
            return Err(Error::NonFinite("softmax input".into()));
        }
        let mut value = x.clone();
        match axis.0 {
            1 => {
                for r in 0..m {
                    softmax_lane(value.data_mut(), r * n, (r + 1) * n, 1);
                }
            }
            0 => {
                for c in 0..n {
                    softmax_lane(value.data_mut(), c, m * n, n);
                }
            }
            _ => return Err(Error::shape("softmax", x.shape(), &[axis.0])),
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::Softmax { a, axis }, rg))
    }

    /// Softmax over the rows of each segment, independently per column.
    /// `offsets` has one more entry than there are segments.
    pub fn segment_softmax(&mut self, a: Var, offsets: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(a, "segment_softmax")?;
        check_offsets("segment_softmax", offsets, m)?;
        let x = self.value(a);
        if !x.all_finite() {
            return Err(Error::NonFinite("segment_softmax input".into()));
        }
        let mut value = x.clone();
        for seg in offsets.windows(2) {
            let (lo, hi) = (seg[0], seg[1]);
            if lo == hi {
                continue;
            }
            for c in 0..n {
                softmax_lane(value.data_mut(), lo * n + c, hi * n, n);
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            value,
            Op::SegmentSoftmax {
                a,
                offsets: offsets.to_vec(),
            },
            rg,
        ))
    }

    /// Sums the rows of each segment; empty segments give zero rows.
    pub fn segment_sum(&mut self, a: Var, offsets: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(a, "segment_sum")?;
        check_offsets("segment_sum", offsets, m)?;
        let x = self.value(a);
        let segments = offsets.len() - 1;
        let mut value = Tensor::zeros(&[segments, n]);
        for (s, seg) in offsets.windows(2).enumerate() {
            let out = &mut value.data_mut()[s * n..(s + 1) * n];
            for r in seg[0]..seg[1] {
                for (o, &v) in out.iter_mut().zip(x.row(r)) {
                    *o += v;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            value,
            Op::SegmentSum {
                a,
                offsets: offsets.to_vec(),
            },
            rg,
        ))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits` (`N × V`), computed through a fused log-softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (rows, vocab) = self.dims(logits, "cross_entropy")?;
        if rows != targets.len() || rows == 0 {
            return Err(Error::shape(
                "cross_entropy",
                &[rows, vocab],
                &[targets.len()],
            ));
        }
        let x = self.value(logits);
        if !x.all_finite() {
            return Err(Error::NonFinite("cross_entropy logits".into()));
        }
        let mut probs = Tensor::zeros(&[rows, vocab]);
        let mut total = 0.0f64;
        for (r, &t) in targets.iter().enumerate() {
            if t >= vocab {
                return Err(Error::Index {
                    op: "cross_entropy target",
                    index: t,
                    bound: vocab,
                });
            }
            let row = x.row(r);
            let lse = log_sum_exp(row);
            total += lse - row[t].as_f64();
            for (p, &v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = T::of_f64((v.as_f64() - lse).exp());
            }
        }
        let value = Tensor::filled(&[1, 1], T::of_f64(total / rows as f64));
        let rg = self.rg(logits);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Inverted dropout; the identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = T::of_f64(1.0 / (1.0 - p));
        let x = self.value(a);
        let mask_data: Vec<T> = (0..x.len())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let mask = Tensor::from_vec(x.shape(), mask_data)?;
        let data = x
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&v, &k)| v * k)
            .collect();
        let value = Tensor::from_vec(x.shape(), data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Dropout { a, mask }, rg))
    }

    /// Reverse pass from a `1 × 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::shape("backward", shape, &[1, 1]));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(shape, T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else {
                continue;
            };
            self.backward_node(node, &gy, &mut grads)?;
            grads[i] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(
        &self,
        node: &Node<T>,
        gy: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf(_) => {}
            Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    if *ta {
                        // a stored k×m: da = op(b) · gyᵀ
                        gemm_into(ga, bv, *tb, gy, true, true)?;
                    } else {
                        // da = gy · op(b)ᵀ
                        gemm_into(ga, gy, false, bv, !*tb, true)?;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    if *tb {
                        // b stored n×k: db = gyᵀ · op(a)
                        gemm_into(gb, gy, true, av, *ta, true)?;
                    } else {
                        // db = op(a)ᵀ · gy
                        gemm_into(gb, av, !*ta, gy, false, true)?;
                    }
                }
            }
            Op::Transpose(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(&gy.transpose()?)?;
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(g) = self.slot(grads, v) {
                        g.add_assign(gy)?;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.slot(grads, *a) {
                    zip3(ga, gy, bv, |g, d, o| *g += d * o);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    zip3(gb, gy, av, |g, d, o| *g += d * o);
                }
            }
            Op::AddRow { a, bias } => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(gy)?;
                }
                if let Some(gb) = self.slot(grads, *bias) {
                    let n = gb.len();
                    for row in gy.data().chunks(n.max(1)) {
                        for (g, &d) in gb.data_mut().iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                }
            }
            Op::Scale { a, factor } => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (g, &d) in ga.data_mut().iter_mut().zip(gy.data()) {
                        *g += d * *factor;
                    }
                }
            }
            Op::ScaleRows { a, s } => {
                let (av, sv) = (self.value(*a), self.value(*s));
                let n = av.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for (k, &f) in sv.data().iter().enumerate() {
                        for j in 0..n {
                            ga.data_mut()[k * n + j] += gy.data()[k * n + j] * f;
                        }
                    }
                }
                if let Some(gs) = self.slot(grads, *s) {
                    for k in 0..av.rows() {
                        let mut acc = T::zero();
                        for j in 0..n {
                            acc += gy.data()[k * n + j] * av.data()[k * n + j];
                        }
                        gs.data_mut()[k] += acc;
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    zip3(ga, gy, y, |g, d, o| *g += d * (T::one() - o * o));
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    zip3(ga, gy, y, |g, d, o| *g += d * o * (T::one() - o));
                }
            }
            Op::ConcatRows(parts) => {
                let n = y.cols();
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(gp) = self.slot(grads, p) {
                        for (g, &d) in gp
                            .data_mut()
                            .iter_mut()
                            .zip(&gy.data()[offset..offset + len])
                        {
                            *g += d;
                        }
                    }
                    offset += len;
                    debug_assert_eq!(len % n.max(1), 0);
                }
            }
            Op::SliceRows { a, start } => {
                let n = y.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    let dst = &mut ga.data_mut()[start * n..start * n + gy.len()];
                    for (g, &d) in dst.iter_mut().zip(gy.data()) {
                        *g += d;
                    }
                }
            }
            Op::SliceCols { a, start } => {
                let len = y.cols();
                if let Some(ga) = self.slot(grads, *a) {
                    for r in 0..y.rows() {
                        let dst = &mut ga.row_mut(r)[*start..start + len];
                        for (g, &d) in dst.iter_mut().zip(gy.row(r)) {
                            *g += d;
                        }
                    }
                }
            }
            Op::Lookup { table, ids } => {
                if let Some(gt) = self.slot(grads, *table) {
                    for (k, &id) in ids.iter().enumerate() {
                        for (g, &d) in gt.row_mut(id).iter_mut().zip(gy.row(k)) {
                            *g += d;
                        }
                    }
                }
            }
            Op::SumAxis { a, axis } => {
                if let Some(ga) = self.slot(grads, *a) {
                    let n = ga.cols();
                    for r in 0..ga.rows() {
                        for c in 0..n {
                            let d = if axis.0 == 0 {
                                gy.data()[c]
                            } else {
                                gy.data()[r]
                            };
                            ga.data_mut()[r * n + c] += d;
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                let d = gy.data()[0];
                if let Some(ga) = self.slot(grads, *a) {
                    for g in ga.data_mut() {
                        *g += d;
                    }
                }
            }
            Op::Softmax { a, axis } => {
                if let Some(ga) = self.slot(grads, *a) {
                    let (m, n) = (y.rows(), y.cols());
                    if axis.0 == 1 {
                        for r in 0..m {
                            softmax_backward_lane(ga, gy, y, (r * n..(r + 1) * n).step_by(1));
                        }
                    } else {
                        for c in 0..n {
                            softmax_backward_lane(ga, gy, y, (c..m * n).step_by(n));
                        }
                    }
                }
            }
            Op::SegmentSoftmax { a, offsets } => {
                if let Some(ga) = self.slot(grads, *a) {
                    let n = y.cols();
                    for seg in offsets.windows(2) {
                        for c in 0..n {
                            softmax_backward_lane(
                                ga,
                                gy,
                                y,
                                (seg[0] * n + c..seg[1] * n).step_by(n),
                            );
                        }
                    }
                }
            }
            Op::SegmentSum { a, offsets } => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (s, seg) in offsets.windows(2).enumerate() {
                        for r in seg[0]..seg[1] {
                            for (g, &d) in ga.row_mut(r).iter_mut().zip(gy.row(s)) {
                                *g += d;
                            }
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                if let Some(gl) = self.slot(grads, *logits) {
                    let scale = gy.data()[0] / T::from_usize(targets.len()).expect("row count");
                    for (r, &t) in targets.iter().enumerate() {
                        let grow = gl.row_mut(r);
                        for (g, &p) in grow.iter_mut().zip(probs.row(r)) {
                            *g += p * scale;
                        }
                        grow[t] -= scale;
                    }
                }
            }
            Op::Dropout { a, mask } => {
                if let Some(ga) = self.slot(grads, *a) {
                    zip3(ga, gy, mask, |g, d, k| *g += d * k);
                }
            }
        }
        Ok(())
    }

    /// Gradient buffer for `v`, allocated on first use; `None` when `v` does
    /// not need a gradient.
    fn slot<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> Option<&'g mut Tensor<T>> {
        if !self.rg(v) {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(self.value(v).shape())))
    }
}

fn zip3<T: Scalar>(g: &mut Tensor<T>, d: &Tensor<T>, o: &Tensor<T>, f: impl Fn(&mut T, T, T)) {
    for ((g, &d), &o) in g.data_mut().iter_mut().zip(d.data()).zip(o.data()) {
        f(g, d, o);
    }
}

fn check_offsets(op: &'static str, offsets: &[usize], rows: usize) -> Result<()> {
    let ok = offsets.first() == Some(&0)
        && offsets.last() == Some(&rows)
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::shape(op, &[rows], offsets))
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// In-place softmax over `data[start..end]` taken every `stride` entries.
fn softmax_lane<T: Scalar>(data: &mut [T], start: usize, end: usize, stride: usize) {
    let max = (start..end)
        .step_by(stride)
        .fold(T::neg_infinity(), |m, i| m.max(data[i]));
    let mut total = T::zero();
    for i in (start..end).step_by(stride) {
        data[i] = (data[i] - max).exp();
        total += data[i];
    }
    for i in (start..end).step_by(stride) {
        data[i] /= total;
    }
}

fn softmax_backward_lane<T: Scalar>(
    ga: &mut Tensor<T>,
    gy: &Tensor<T>,
    y: &Tensor<T>,
    lane: impl Iterator<Item = usize> + Clone,
) {
    let dot: T = lane.clone().map(|i| gy.data()[i] * y.data()[i]).sum();
    for i in lane {
        ga.data_mut()[i] += y.data()[i] * (gy.data()[i] - dot);
    }
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let total: f64 = row.iter().map(|v| (v.as_f64() - max).exp()).sum();
    max + total.ln()
}

/// Per-row negative log-likelihood of `targets` under softmax of `logits`,
/// accumulated in f64. Does not touch a graph.
pub fn token_nll<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<Vec<f64>> {
    let (rows, vocab) = logits.dims2("token_nll")?;
    if rows != targets.len() {
        return Err(Error::shape("token_nll", logits.shape(), &[targets.len()]));
    }
    targets
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            if t >= vocab {
                return Err(Error::Index {
                    op: "token_nll target",
                    index: t,
                    bound: vocab,
                });
            }
            let row = logits.row(r);
            let nll = log_sum_exp(row) - row[t].as_f64();
            if nll.is_finite() {
                Ok(nll)
            } else {
                Err(Error::NonFinite("logits".into()))
            }
        })
        .collect()
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds the gradient of every parameter leaf into `store`. A parameter
    /// placed on the tape twice receives both contributions.
    pub fn accumulate_into(&self, graph: &Graph<T>, store: &mut ParamStore<T>) -> Result<()> {
        for (i, node) in graph.nodes.iter().enumerate().take(self.grads.len()) {
            if let (Op::Leaf(Leaf::Param(id)), Some(g)) = (&node.op, &self.grads[i]) {
                store.get_mut(*id).grad.add_assign(g)?;
            }
        }
        Ok(())
    }
}
