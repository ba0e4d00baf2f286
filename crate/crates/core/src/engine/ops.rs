use rand::Rng;

use super::conv::{self, ConvGeometry};
use super::graph::{Node, NodeId, Var};
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::tversky::reduction::{pair_measures, pair_measures_backward, PairMeasures, ReductionConfig};

/// Floor applied to row norms by [`Var::normalize_rows`].
pub const NORMALIZE_EPS: f64 = 1e-12;

pub(crate) enum Op<T> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Scale {
        x: NodeId,
        s: NodeId,
    },
    AddBias {
        x: NodeId,
        b: NodeId,
    },
    AddChannelBias {
        x: NodeId,
        b: NodeId,
    },
    MatMul(NodeId, NodeId),
    MatMulT(NodeId, NodeId),
    Dots(NodeId, NodeId),
    Relu(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    SumRows(NodeId),
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        geom: ConvGeometry,
    },
    GlobalAvgPool(NodeId),
    Concat(Vec<NodeId>),
    Reshape(NodeId),
    Dropout {
        x: NodeId,
        mask: Vec<T>,
    },
    NormalizeRows {
        x: NodeId,
        norms: Vec<T>,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    TverskyMeasures {
        a: NodeId,
        b: NodeId,
        cfg: ReductionConfig,
    },
    Select {
        x: NodeId,
        index: usize,
    },
}

impl<T: Real> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Scale { .. } => "scale",
            Op::AddBias { .. } => "add_bias",
            Op::AddChannelBias { .. } => "add_channel_bias",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Dots(..) => "dots",
            Op::Relu(_) => "relu",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumRows(_) => "sum_rows",
            Op::Conv2d { .. } => "conv2d",
            Op::GlobalAvgPool(_) => "global_avg_pool",
            Op::Concat(_) => "concat",
            Op::Reshape(_) => "reshape",
            Op::Dropout { .. } => "dropout",
            Op::NormalizeRows { .. } => "normalize_rows",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::TverskyMeasures { .. } => "tversky_measures",
            Op::Select { .. } => "select",
        }
    }

    pub(crate) fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::MatMul(a, b) | Op::MatMulT(a, b) | Op::Dots(a, b) => vec![*a, *b],
            Op::Scale { x, s } => vec![*x, *s],
            Op::AddBias { x, b } | Op::AddChannelBias { x, b } => vec![*x, *b],
            Op::Conv2d { input, kernel, .. } => vec![*input, *kernel],
            Op::TverskyMeasures { a, b, .. } => vec![*a, *b],
            Op::Concat(xs) => xs.clone(),
            Op::Neg(x)
            | Op::Relu(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::SumRows(x)
            | Op::GlobalAvgPool(x)
            | Op::Reshape(x) => vec![*x],
            Op::Dropout { x, .. } | Op::NormalizeRows { x, .. } | Op::Select { x, .. } => vec![*x],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }

    /// Vector-Jacobian products for each input.
    pub(crate) fn backward(
        &self,
        nodes: &[Node<T>],
        out: &Tensor<T>,
        up: &Tensor<T>,
    ) -> Result<Vec<(NodeId, Tensor<T>)>> {
        let val = |id: &NodeId| &nodes[id.0].value;
        let like = |t: &Tensor<T>, data: Vec<T>| Tensor::new(t.shape().to_vec(), data);
        let grads = match self {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, up.clone()), (*b, up.clone())],
            Op::Sub(a, b) => vec![(*a, up.clone()), (*b, up.map(|v| -v))],
            Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let ga = zip_map(up.data(), bv.data(), |u, y| u * y);
                let gb = zip_map(up.data(), av.data(), |u, x| u * x);
                vec![(*a, like(av, ga)?), (*b, like(bv, gb)?)]
            }
            Op::Neg(x) => vec![(*x, up.map(|v| -v))],
            Op::Scale { x, s } => {
                let sv = val(s).data()[0];
                let xv = val(x);
                let gs: T = up.data().iter().zip(xv.data()).map(|(&u, &v)| u * v).sum();
                vec![(*x, up.map(|u| u * sv)), (*s, Tensor::full(val(s).shape(), gs))]
            }
            Op::AddBias { x, b } => {
                let width = val(b).len();
                let mut gb = vec![T::zero(); width];
                for row in up.data().chunks(width) {
                    for (g, &u) in gb.iter_mut().zip(row) {
                        *g += u;
                    }
                }
                vec![(*x, up.clone()), (*b, like(val(b), gb)?)]
            }
            Op::AddChannelBias { x, b } => {
                let shape = val(x).shape();
                let (c, hw) = (shape[1], shape[2] * shape[3]);
                let mut gb = vec![T::zero(); c];
                for (i, plane) in up.data().chunks(hw).enumerate() {
                    gb[i % c] += plane.iter().copied().sum();
                }
                vec![(*x, up.clone()), (*b, like(val(b), gb)?)]
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let (m, k) = av.dims2()?;
                let n = bv.dims2()?.1;
                let mut ga = vec![T::zero(); m * k];
                T::gemm(
                    m,
                    n,
                    k,
                    T::one(),
                    up.data(),
                    (n, 1),
                    bv.data(),
                    (1, n),
                    T::zero(),
                    &mut ga,
                    (k, 1),
                );
                let mut gb = vec![T::zero(); k * n];
                T::gemm(
                    k,
                    m,
                    n,
                    T::one(),
                    av.data(),
                    (1, k),
                    up.data(),
                    (n, 1),
                    T::zero(),
                    &mut gb,
                    (n, 1),
                );
                vec![(*a, like(av, ga)?), (*b, like(bv, gb)?)]
            }
            Op::MatMulT(a, b) | Op::Dots(a, b) => {
                let (av, bv) = (val(a), val(b));
                let (m, k) = av.dims2()?;
                let n = bv.dims2()?.0;
                let mut ga = vec![T::zero(); m * k];
                T::gemm(
                    m,
                    n,
                    k,
                    T::one(),
                    up.data(),
                    (n, 1),
                    bv.data(),
                    (k, 1),
                    T::zero(),
                    &mut ga,
                    (k, 1),
                );
                let mut gb = vec![T::zero(); n * k];
                T::gemm(
                    n,
                    m,
                    k,
                    T::one(),
                    up.data(),
                    (1, n),
                    av.data(),
                    (k, 1),
                    T::zero(),
                    &mut gb,
                    (k, 1),
                );
                vec![(*a, like(av, ga)?), (*b, like(bv, gb)?)]
            }
            Op::Relu(x) => {
                let xv = val(x);
                let g = zip_map(up.data(), xv.data(), |u, v| if v > T::zero() { u } else { T::zero() });
                vec![(*x, like(xv, g)?)]
            }
            Op::Sum(x) => {
                let g = up.data()[0];
                vec![(*x, Tensor::full(val(x).shape(), g))]
            }
            Op::Mean(x) => {
                let xv = val(x);
                let g = up.data()[0] / T::lit(xv.len() as f64);
                vec![(*x, Tensor::full(xv.shape(), g))]
            }
            Op::SumRows(x) => {
                let xv = val(x);
                let (_, w) = xv.dims2()?;
                let g = up.data().iter().flat_map(|&u| std::iter::repeat_n(u, w)).collect();
                vec![(*x, like(xv, g)?)]
            }
            Op::Conv2d { input, kernel, geom } => {
                let need_input = nodes[input.0].requires_grad;
                let (gi, gk) = conv::backward(geom, val(input).data(), val(kernel).data(), up.data(), need_input);
                let mut out = vec![(*kernel, like(val(kernel), gk)?)];
                if let Some(gi) = gi {
                    out.push((*input, like(val(input), gi)?));
                }
                out
            }
            Op::GlobalAvgPool(x) => {
                let xv = val(x);
                let hw = xv.shape()[2] * xv.shape()[3];
                let scale = T::one() / T::lit(hw as f64);
                let g = up
                    .data()
                    .iter()
                    .flat_map(|&u| std::iter::repeat_n(u * scale, hw))
                    .collect();
                vec![(*x, like(xv, g)?)]
            }
            Op::Concat(xs) => {
                let total = out.shape()[1];
                let mut offset = 0;
                let mut grads = Vec::with_capacity(xs.len());
                for x in xs {
                    let xv = val(x);
                    let (rows, w) = xv.dims2()?;
                    let mut g = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        g.extend_from_slice(&up.data()[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    grads.push((*x, like(xv, g)?));
                }
                grads
            }
            Op::Reshape(x) => vec![(*x, up.clone().reshape(val(x).shape())?)],
            Op::Dropout { x, mask } => {
                let g = zip_map(up.data(), mask, |u, m| u * m);
                vec![(*x, like(val(x), g)?)]
            }
            Op::NormalizeRows { x, norms } => {
                let xv = val(x);
                let (_, w) = xv.dims2()?;
                let eps = T::lit(NORMALIZE_EPS);
                let mut g = Vec::with_capacity(xv.len());
                for ((y, u), &n) in out.data().chunks(w).zip(up.data().chunks(w)).zip(norms) {
                    if n > eps {
                        let yu: T = y.iter().zip(u).map(|(&a, &b)| a * b).sum();
                        g.extend(y.iter().zip(u).map(|(&yi, &ui)| (ui - yi * yu) / n));
                    } else {
                        g.extend(u.iter().map(|&ui| ui / eps));
                    }
                }
                vec![(*x, like(xv, g)?)]
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let lv = val(logits);
                let (n, c) = lv.dims2()?;
                let scale = up.data()[0] / T::lit(n as f64);
                let mut g: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (i, &label) in labels.iter().enumerate() {
                    g[i * c + label] -= scale;
                }
                vec![(*logits, like(lv, g)?)]
            }
            Op::TverskyMeasures { a, b, cfg } => {
                let (av, bv) = (val(a), val(b));
                let (n, k) = av.dims2()?;
                let m = bv.dims2()?.0;
                let mut ga = vec![T::zero(); n * k];
                let mut gb = vec![T::zero(); m * k];
                let plane = n * m;
                let u = up.data();
                for i in 0..n {
                    for j in 0..m {
                        let at = i * m + j;
                        let upstream = PairMeasures {
                            common: u[at],
                            a_only: u[plane + at],
                            b_only: u[2 * plane + at],
                        };
                        pair_measures_backward(
                            av.row(i),
                            bv.row(j),
                            cfg,
                            upstream,
                            &mut ga[i * k..(i + 1) * k],
                            &mut gb[j * k..(j + 1) * k],
                        );
                    }
                }
                vec![(*a, like(av, ga)?), (*b, like(bv, gb)?)]
            }
            Op::Select { x, index } => {
                let xv = val(x);
                let inner = up.len();
                let mut g = vec![T::zero(); xv.len()];
                g[index * inner..(index + 1) * inner].copy_from_slice(up.data());
                vec![(*x, like(xv, g)?)]
            }
        };
        Ok(grads)
    }
}

fn zip_map<T: Real>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn same_shape(op: &'static str, a: &Tensor<impl Real>, b: &Tensor<impl Real>) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

/// Sequential-order dot products `a[i]·b[j]`; the result does not depend on
/// how many rows are evaluated together.
pub fn row_dots<T: Real>(a: &[T], a_rows: usize, b: &[T], b_rows: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(a_rows * b_rows);
    for i in 0..a_rows {
        let ar = &a[i * width..(i + 1) * width];
        for j in 0..b_rows {
            let br = &b[j * width..(j + 1) * width];
            let mut acc = T::zero();
            for (&x, &y) in ar.iter().zip(br) {
                acc += x * y;
            }
            out.push(acc);
        }
    }
    out
}

/// L2 norm floored at [`NORMALIZE_EPS`].
pub fn clamped_norm<T: Real>(row: &[T]) -> T {
    let sq: T = row.iter().map(|&v| v * v).sum();
    sq.sqrt().max(T::lit(NORMALIZE_EPS))
}

// Fallible, so not the operator traits.
#[allow(clippy::should_implement_trait)]
impl<'g, T: Real> Var<'g, T> {
    fn binary(
        self,
        rhs: Var<'g, T>,
        op: &'static str,
        f: impl Fn(T, T) -> T,
        make: fn(NodeId, NodeId) -> Op<T>,
    ) -> Result<Self> {
        self.same_graph(&rhs);
        let value = {
            let (a, b) = (self.value(), rhs.value());
            same_shape(op, &a, &b)?;
            Tensor::new(a.shape().to_vec(), zip_map(a.data(), b.data(), f))?
        };
        self.graph.push(make(self.id, rhs.id), value)
    }

    pub fn add(self, rhs: Var<'g, T>) -> Result<Self> {
        self.binary(rhs, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(self, rhs: Var<'g, T>) -> Result<Self> {
        self.binary(rhs, "sub", |a, b| a - b, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(self, rhs: Var<'g, T>) -> Result<Self> {
        self.binary(rhs, "mul", |a, b| a * b, Op::Mul)
    }

    pub fn neg(self) -> Result<Self> {
        let value = self.value().map(|v| -v);
        self.graph.push(Op::Neg(self.id), value)
    }

    /// Multiplies every element by the single element of `s`.
    pub fn scale(self, s: Var<'g, T>) -> Result<Self> {
        self.same_graph(&s);
        let value = {
            let sv = s.value();
            if sv.len() != 1 {
                return Err(Error::ShapeMismatch {
                    op: "scale",
                    lhs: self.shape(),
                    rhs: sv.shape().to_vec(),
                });
            }
            let k = sv.data()[0];
            self.value().map(|v| v * k)
        };
        self.graph.push(Op::Scale { x: self.id, s: s.id }, value)
    }

    /// `x + b` with `b` broadcast over all leading axes of `x`.
    pub fn add_bias(self, b: Var<'g, T>) -> Result<Self> {
        self.same_graph(&b);
        let value = {
            let (x, bv) = (self.value(), b.value());
            let w = bv.len();
            if bv.ndim() != 1 || x.shape().last() != Some(&w) {
                return Err(Error::ShapeMismatch {
                    op: "add_bias",
                    lhs: x.shape().to_vec(),
                    rhs: bv.shape().to_vec(),
                });
            }
            let data = x
                .data()
                .chunks(w)
                .flat_map(|row| row.iter().zip(bv.data()).map(|(&a, &c)| a + c))
                .collect();
            Tensor::new(x.shape().to_vec(), data)?
        };
        self.graph.push(Op::AddBias { x: self.id, b: b.id }, value)
    }

    /// Adds `b[c]` to every element of channel `c` of an NCHW tensor.
    pub fn add_channel_bias(self, b: Var<'g, T>) -> Result<Self> {
        self.same_graph(&b);
        let value = {
            let (x, bv) = (self.value(), b.value());
            if x.ndim() != 4 || bv.ndim() != 1 || x.shape()[1] != bv.len() {
                return Err(Error::ShapeMismatch {
                    op: "add_channel_bias",
                    lhs: x.shape().to_vec(),
                    rhs: bv.shape().to_vec(),
                });
            }
            let (c, hw) = (bv.len(), x.shape()[2] * x.shape()[3]);
            let mut data = x.data().to_vec();
            for (i, plane) in data.chunks_mut(hw).enumerate() {
                let bias = bv.data()[i % c];
                plane.iter_mut().for_each(|v| *v += bias);
            }
            Tensor::new(x.shape().to_vec(), data)?
        };
        self.graph.push(Op::AddChannelBias { x: self.id, b: b.id }, value)
    }

    fn matrix_pair(&self, rhs: &Var<'g, T>, op: &'static str, transposed: bool) -> Result<(usize, usize, usize)> {
        let (a, b) = (self.value(), rhs.value());
        let mismatch = || Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        };
        let (m, k) = a.dims2().map_err(|_| mismatch())?;
        let (r, c) = b.dims2().map_err(|_| mismatch())?;
        let (inner, n) = if transposed { (c, r) } else { (r, c) };
        if inner != k {
            return Err(mismatch());
        }
        Ok((m, k, n))
    }

    /// `[m×k] · [k×n]`.
    pub fn matmul(self, rhs: Var<'g, T>) -> Result<Self> {
        self.same_graph(&rhs);
        let (m, k, n) = self.matrix_pair(&rhs, "matmul", false)?;
        let mut c = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value().data(),
            (k, 1),
            rhs.value().data(),
            (n, 1),
            T::zero(),
            &mut c,
            (n, 1),
        );
        self.graph
            .push(Op::MatMul(self.id, rhs.id), Tensor::new(vec![m, n], c)?)
    }

    /// `[m×k] · [n×k]ᵀ`.
    pub fn matmul_t(self, rhs: Var<'g, T>) -> Result<Self> {
        self.same_graph(&rhs);
        let (m, k, n) = self.matrix_pair(&rhs, "matmul_t", true)?;
        let mut c = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value().data(),
            (k, 1),
            rhs.value().data(),
            (1, k),
            T::zero(),
            &mut c,
            (n, 1),
        );
        self.graph
            .push(Op::MatMulT(self.id, rhs.id), Tensor::new(vec![m, n], c)?)
    }

    /// Same as [`matmul_t`](Self::matmul_t) but each entry is a plain
    /// left-to-right dot product, so entry `(i, j)` is bitwise independent
    /// of the batch it was computed in.
    pub fn dots(self, rhs: Var<'g, T>) -> Result<Self> {
        self.same_graph(&rhs);
        let (m, k, n) = self.matrix_pair(&rhs, "dots", true)?;
        let c = row_dots(self.value().data(), m, rhs.value().data(), n, k);
        self.graph.push(Op::Dots(self.id, rhs.id), Tensor::new(vec![m, n], c)?)
    }

    pub fn relu(self) -> Result<Self> {
        let value = {
            let x = self.value();
            if self.graph.tracing() {
                self.graph.with_trace(|t| {
                    for &v in x.data() {
                        t.record(v.as_f64(), v > T::zero());
                    }
                });
            }
            x.map(|v| if v > T::zero() { v } else { T::zero() })
        };
        self.graph.push(Op::Relu(self.id), value)
    }

    pub fn sum(self) -> Result<Self> {
        let s = self.value().sum();
        self.graph.push(Op::Sum(self.id), Tensor::scalar(s))
    }

    pub fn mean(self) -> Result<Self> {
        let (s, n) = {
            let v = self.value();
            (v.sum(), v.len())
        };
        self.graph.push(Op::Mean(self.id), Tensor::scalar(s / T::lit(n as f64)))
    }

    /// Row sums of a matrix.
    pub fn sum_rows(self) -> Result<Self> {
        let value = {
            let x = self.value();
            let (rows, _) = x.dims2()?;
            Tensor::new(vec![rows], x.rows().map(|r| r.iter().copied().sum()).collect())?
        };
        self.graph.push(Op::SumRows(self.id), value)
    }

    /// Cross-correlation of an NCHW batch with `[cout, cin, kh, kw]` kernels.
    pub fn conv2d(self, kernel: Var<'g, T>, stride: usize, pad: usize) -> Result<Self> {
        self.same_graph(&kernel);
        let (geom, out) = {
            let (x, k) = (self.value(), kernel.value());
            let geom = ConvGeometry::new(x.shape(), k.shape(), stride, pad)?;
            let out = conv::forward(&geom, x.data(), k.data());
            (geom, out)
        };
        let shape = geom.output_shape();
        self.graph.push(
            Op::Conv2d {
                input: self.id,
                kernel: kernel.id,
                geom,
            },
            Tensor::new(shape, out)?,
        )
    }

    /// Mean over the spatial axes of an NCHW tensor, giving `[n, c]`.
    pub fn global_avg_pool(self) -> Result<Self> {
        let value = {
            let x = self.value();
            if x.ndim() != 4 {
                return Err(Error::InvalidArgument(format!(
                    "global_avg_pool expects NCHW, got {:?}",
                    x.shape()
                )));
            }
            let hw = x.shape()[2] * x.shape()[3];
            let scale = T::one() / T::lit(hw as f64);
            let data = x
                .data()
                .chunks(hw)
                .map(|p| p.iter().copied().sum::<T>() * scale)
                .collect();
            Tensor::new(vec![x.shape()[0], x.shape()[1]], data)?
        };
        self.graph.push(Op::GlobalAvgPool(self.id), value)
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(parts: &[Var<'g, T>]) -> Result<Self> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        let value = {
            let vals: Vec<_> = parts
                .iter()
                .map(|p| {
                    first.same_graph(p);
                    p.value()
                })
                .collect();
            let rows = vals[0].dims2()?.0;
            let mut widths = Vec::with_capacity(vals.len());
            for v in &vals {
                let (r, w) = v.dims2()?;
                if r != rows {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        lhs: vals[0].shape().to_vec(),
                        rhs: v.shape().to_vec(),
                    });
                }
                widths.push(w);
            }
            let total: usize = widths.iter().sum();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for v in &vals {
                    data.extend_from_slice(v.row(r));
                }
            }
            Tensor::new(vec![rows, total], data)?
        };
        first
            .graph
            .push(Op::Concat(parts.iter().map(|p| p.id).collect()), value)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let value = self.value().clone().reshape(shape)?;
        self.graph.push(Op::Reshape(self.id), value)
    }

    /// Inverted dropout: zeroes each element with probability `p` and scales
    /// survivors by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(self, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout rate {p} outside [0, 1)")));
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let (mask, value) = {
            let x = self.value();
            let mask: Vec<T> = (0..x.len())
                .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
                .collect();
            let value = Tensor::new(x.shape().to_vec(), zip_map(x.data(), &mask, |a, m| a * m))?;
            (mask, value)
        };
        self.graph.push(Op::Dropout { x: self.id, mask }, value)
    }

    /// Divides each row by `max(‖row‖, 1e-12)`; zero rows stay zero.
    pub fn normalize_rows(self) -> Result<Self> {
        let (norms, value) = {
            let x = self.value();
            let (_, w) = x.dims2()?;
            let mut norms = Vec::new();
            let mut data = Vec::with_capacity(x.len());
            for row in x.data().chunks(w.max(1)) {
                let n = clamped_norm(row);
                norms.push(n);
                data.extend(row.iter().map(|&v| v / n));
            }
            (norms, Tensor::new(x.shape().to_vec(), data)?)
        };
        self.graph.push(Op::NormalizeRows { x: self.id, norms }, value)
    }

    /// Mean negative log-likelihood of `labels` under a row softmax.
    pub fn softmax_cross_entropy(self, labels: &[usize]) -> Result<Self> {
        let (probs, loss) = {
            let x = self.value();
            let (n, c) = x.dims2()?;
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: labels.len(),
                });
            }
            let mut probs = Vec::with_capacity(x.len());
            let mut total = T::zero();
            for (row, &label) in x.rows().zip(labels) {
                if label >= c {
                    return Err(Error::LabelOutOfRange { label, classes: c });
                }
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
                let z: T = exps.iter().copied().sum();
                total += max + z.ln() - row[label];
                probs.extend(exps.iter().map(|&e| e / z));
            }
            (probs, total / T::lit(n as f64))
        };
        self.graph.push(
            Op::SoftmaxCrossEntropy {
                logits: self.id,
                labels: labels.to_vec(),
                probs,
            },
            Tensor::scalar(loss),
        )
    }

    /// Contrast-model measures for every pair of rows.
    ///
    /// `self` holds object dot products `[n, K]`, `other` prototype dot
    /// products `[m, K]`. The result is `[3, n, m]` holding `f(A∩B)`,
    /// `f(A-B)` and `f(B-A)` in that order.
    pub fn tversky_measures(self, other: Var<'g, T>, cfg: ReductionConfig) -> Result<Self> {
        self.same_graph(&other);
        let value = {
            let (a, b) = (self.value(), other.value());
            let (n, k) = a.dims2()?;
            let (m, k2) = b.dims2()?;
            if k != k2 {
                return Err(Error::ShapeMismatch {
                    op: "tversky_measures",
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let plane = n * m;
            let mut data = vec![T::zero(); 3 * plane];
            let mut trace = self.graph.mask_trace();
            for i in 0..n {
                for j in 0..m {
                    let pm = pair_measures(a.row(i), b.row(j), &cfg, trace.as_mut());
                    let at = i * m + j;
                    data[at] = pm.common;
                    data[plane + at] = pm.a_only;
                    data[2 * plane + at] = pm.b_only;
                }
            }
            if let Some(t) = trace {
                self.graph.with_trace(|slot| *slot = t);
            }
            Tensor::new(vec![3, n, m], data)?
        };
        self.graph.push(
            Op::TverskyMeasures {
                a: self.id,
                b: other.id,
                cfg,
            },
            value,
        )
    }

    /// Slice `index` of the leading axis.
    pub fn select(self, index: usize) -> Result<Self> {
        let value = {
            let x = self.value();
            let lead = *x.shape().first().unwrap_or(&0);
            if index >= lead {
                return Err(Error::InvalidArgument(format!(
                    "select index {index} out of range for leading extent {lead}"
                )));
            }
            let inner: usize = x.shape()[1..].iter().product();
            Tensor::new(
                x.shape()[1..].to_vec(),
                x.data()[index * inner..(index + 1) * inner].to_vec(),
            )?
        };
        self.graph.push(Op::Select { x: self.id, index }, value)
    }
}
