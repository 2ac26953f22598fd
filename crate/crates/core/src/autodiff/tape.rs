use std::fmt;
use std::sync::Arc;

use super::conv::{self, ConvDims};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A real-linear map with a known adjoint, recorded on the tape as one node.
///
/// The adjoint is taken with respect to the Euclidean inner product of the
/// flattened buffers.
pub trait LinearMap: Send + Sync {
    fn input_shape(&self) -> Vec<usize>;
    fn output_shape(&self) -> Vec<usize>;
    fn apply(&self, input: &[f64]) -> Vec<f64>;
    fn apply_adjoint(&self, output: &[f64]) -> Vec<f64>;
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    Div(Var, Var),
    Dot(Var, Var),
    SumSquares(Var),
    Sum(Var),
    Relu(Var),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        dims: ConvDims,
    },
    ChannelAffine {
        input: Var,
        scale: Var,
        shift: Var,
    },
    Linear(Var, Arc<dyn LinearMap>),
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::MulScalar(..) => "mul_scalar",
            Op::Div(..) => "div",
            Op::Dot(..) => "dot",
            Op::SumSquares(..) => "sum_squares",
            Op::Sum(..) => "sum",
            Op::Relu(..) => "relu",
            Op::MatMul(..) => "matmul",
            Op::Conv2d { .. } => "conv2d",
            Op::ChannelAffine { .. } => "channel_affine",
            Op::Linear(..) => "linear",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are pushed in evaluation order, so every node's inputs precede
/// it and the reverse sweep in [`Tape::backward`] is a single pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that needs one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, zeros when the root does not depend on it.
    pub fn wrt_or_zero(&self, v: Var, len: usize) -> Vec<f64> {
        self.wrt(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn check_scalar(op: &'static str, t: &Tensor) -> Result<()> {
    if !t.is_scalar() {
        return Err(Error::dim(op, &[1], t.shape()));
    }
    Ok(())
}

fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += a * s);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
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

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Its gradient is tracked when `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let needs = tensor.requires_grad();
        let mut t = tensor;
        t.clear_grad();
        self.push(Op::Leaf, t, needs)
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn variable(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same("add", ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape(), data)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(Op::Add(a, b), t, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same("sub", ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let t = Tensor::new(ta.shape(), data)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(Op::Sub(a, b), t, ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape(), ta.data().iter().map(|x| x * factor).collect()).expect("shape preserved");
        let ng = self.ng(&[a]);
        self.push(Op::Scale(a, factor), t, ng)
    }

    /// `x * s` where `s` is a scalar node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        check_scalar("mul_scalar", self.value(s))?;
        let k = self.value(s).item();
        let tx = self.value(x);
        let t = Tensor::new(tx.shape(), tx.data().iter().map(|v| v * k).collect())?;
        let ng = self.ng(&[x, s]);
        Ok(self.push(Op::MulScalar(x, s), t, ng))
    }

    /// Scalar quotient `a / b`.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        check_scalar("div", self.value(a))?;
        check_scalar("div", self.value(b))?;
        let t = Tensor::scalar(self.value(a).item() / self.value(b).item());
        let ng = self.ng(&[a, b]);
        Ok(self.push(Op::Div(a, b), t, ng))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        check_same("dot", ta, tb)?;
        let t = Tensor::scalar(dot(ta.data(), tb.data()));
        let ng = self.ng(&[a, b]);
        Ok(self.push(Op::Dot(a, b), t, ng))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let d = self.value(a).data();
        let t = Tensor::scalar(dot(d, d));
        let ng = self.ng(&[a]);
        self.push(Op::SumSquares(a), t, ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).data().iter().sum());
        let ng = self.ng(&[a]);
        self.push(Op::Sum(a), t, ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape(), ta.data().iter().map(|v| v.max(0.0)).collect()).expect("shape preserved");
        let ng = self.ng(&[a]);
        self.push(Op::Relu(a), t, ng)
    }

    /// Matrix product of `[m, k]` and `[k, n]` tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = ta.data()[i * k + p];
                axpy(&mut out[i * n..(i + 1) * n], aip, &tb.data()[p * n..(p + 1) * n]);
            }
        }
        let t = Tensor::new(&[m, n], out)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), t, ng))
    }

    /// 3×3 convolution with unit zero padding: `[N,C,H,W] ⋆ [F,C,3,3] + [F]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (ti, tw, tb) = (self.value(input), self.value(weight), self.value(bias));
        let si = ti.shape();
        let sw = tw.shape();
        if si.len() != 4 {
            return Err(Error::dim("conv2d input rank", &[4], &[si.len()]));
        }
        if sw.len() != 4 || sw[2] != 3 || sw[3] != 3 {
            return Err(Error::dim("conv2d weight", &[sw[0], si[1], 3, 3], sw));
        }
        if sw[1] != si[1] {
            return Err(Error::dim("conv2d channels", &[si[1]], &[sw[1]]));
        }
        if tb.shape() != [sw[0]] {
            return Err(Error::dim("conv2d bias", &[sw[0]], tb.shape()));
        }
        let dims = ConvDims {
            batch: si[0],
            in_channels: si[1],
            out_channels: sw[0],
            height: si[2],
            width: si[3],
        };
        let out = conv::forward_par(&dims, ti.data(), tw.data(), tb.data());
        let t = Tensor::new(&[dims.batch, dims.out_channels, dims.height, dims.width], out)?;
        let ng = self.ng(&[input, weight, bias]);
        Ok(self.push(
            Op::Conv2d {
                input,
                weight,
                bias,
                dims,
            },
            t,
            ng,
        ))
    }

    /// Per-channel `scale[c] * x + shift[c]` on an `[N,C,H,W]` tensor.
    pub fn channel_affine(&mut self, input: Var, scale: Var, shift: Var) -> Result<Var> {
        let (ti, ts, tb) = (self.value(input), self.value(scale), self.value(shift));
        let si = ti.shape();
        if si.len() != 4 {
            return Err(Error::dim("channel_affine input rank", &[4], &[si.len()]));
        }
        if ts.shape() != [si[1]] || tb.shape() != [si[1]] {
            return Err(Error::dim("channel_affine", &[si[1]], ts.shape()));
        }
        let plane = si[2] * si[3];
        let c = si[1];
        let data = ti
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let ch = (i / plane) % c;
                ts.data()[ch] * v + tb.data()[ch]
            })
            .collect();
        let t = Tensor::new(si, data)?;
        let ng = self.ng(&[input, scale, shift]);
        Ok(self.push(Op::ChannelAffine { input, scale, shift }, t, ng))
    }

    pub fn linear(&mut self, input: Var, map: Arc<dyn LinearMap>) -> Result<Var> {
        let ti = self.value(input);
        let expected = map.input_shape();
        if ti.shape() != expected.as_slice() {
            return Err(Error::dim("linear", &expected, ti.shape()));
        }
        let out = map.apply(ti.data());
        let t = Tensor::new(&map.output_shape(), out)?;
        let ng = self.ng(&[input]);
        Ok(self.push(Op::Linear(input, map), t, ng))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = &self.nodes[root.0].value;
        if !rv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        if !self.nodes[root.0].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            {
                let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
                    if !self.nodes[v.0].needs_grad {
                        return;
                    }
                    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
                    f(slot);
                };
                match &node.op {
                    Op::Leaf => {}
                    Op::Add(a, b) => {
                        acc(*a, &|s| axpy(s, 1.0, &g));
                        acc(*b, &|s| axpy(s, 1.0, &g));
                    }
                    Op::Sub(a, b) => {
                        acc(*a, &|s| axpy(s, 1.0, &g));
                        acc(*b, &|s| axpy(s, -1.0, &g));
                    }
                    Op::Scale(a, k) => acc(*a, &|s| axpy(s, *k, &g)),
                    Op::MulScalar(x, sv) => {
                        let k = self.value(*sv).item();
                        acc(*x, &|s| axpy(s, k, &g));
                        let xd = self.value(*x).data();
                        acc(*sv, &|s| s[0] += dot(&g, xd));
                    }
                    Op::Div(a, b) => {
                        let (av, bv) = (self.value(*a).item(), self.value(*b).item());
                        acc(*a, &|s| s[0] += g[0] / bv);
                        acc(*b, &|s| s[0] -= g[0] * av / (bv * bv));
                    }
                    Op::Dot(a, b) => {
                        let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                        acc(*a, &|s| axpy(s, g[0], bd));
                        acc(*b, &|s| axpy(s, g[0], ad));
                    }
                    Op::SumSquares(a) => {
                        let ad = self.value(*a).data();
                        acc(*a, &|s| axpy(s, 2.0 * g[0], ad));
                    }
                    Op::Sum(a) => acc(*a, &|s| s.iter_mut().for_each(|v| *v += g[0])),
                    Op::Relu(a) => {
                        let ad = self.value(*a).data();
                        acc(*a, &|s| {
                            for ((d, x), gv) in s.iter_mut().zip(ad).zip(&g) {
                                if *x > 0.0 {
                                    *d += gv;
                                }
                            }
                        });
                    }
                    Op::MatMul(a, b) => {
                        let (ta, tb) = (self.value(*a), self.value(*b));
                        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                        acc(*a, &|s| {
                            for i in 0..m {
                                for p in 0..k {
                                    s[i * k + p] += dot(&g[i * n..(i + 1) * n], &tb.data()[p * n..(p + 1) * n]);
                                }
                            }
                        });
                        acc(*b, &|s| {
                            for i in 0..m {
                                for p in 0..k {
                                    axpy(&mut s[p * n..(p + 1) * n], ta.data()[i * k + p], &g[i * n..(i + 1) * n]);
                                }
                            }
                        });
                    }
                    Op::Conv2d {
                        input,
                        weight,
                        bias,
                        dims,
                    } => {
                        let wd = self.value(*weight).data();
                        let id = self.value(*input).data();
                        if self.nodes[input.0].needs_grad {
                            let gi = conv::input_grad_par(dims, &g, wd);
                            acc(*input, &|s| axpy(s, 1.0, &gi));
                        }
                        if self.nodes[weight.0].needs_grad {
                            let gw = conv::weight_grad_par(dims, &g, id);
                            acc(*weight, &|s| axpy(s, 1.0, &gw));
                        }
                        if self.nodes[bias.0].needs_grad {
                            let gb = conv::bias_grad(dims, &g);
                            acc(*bias, &|s| axpy(s, 1.0, &gb));
                        }
                    }
                    Op::ChannelAffine { input, scale, shift } => {
                        let ti = self.value(*input);
                        let sc = self.value(*scale).data();
                        let c = ti.shape()[1];
                        let plane = ti.shape()[2] * ti.shape()[3];
                        let ch = |i: usize| (i / plane) % c;
                        acc(*input, &|s| {
                            s.iter_mut().enumerate().for_each(|(i, d)| *d += sc[ch(i)] * g[i])
                        });
                        acc(*scale, &|s| {
                            for (i, x) in ti.data().iter().enumerate() {
                                s[ch(i)] += g[i] * x;
                            }
                        });
                        acc(*shift, &|s| {
                            for (i, gv) in g.iter().enumerate() {
                                s[ch(i)] += gv;
                            }
                        });
                    }
                    Op::Linear(input, map) => {
                        if self.nodes[input.0].needs_grad {
                            let gi = map.apply_adjoint(&g);
                            acc(*input, &|s| axpy(s, 1.0, &gi));
                        }
                    }
                }
            }
            // Leaves keep their gradient for the caller.
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}
