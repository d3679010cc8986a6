//! Single-use computation tape.
//!
//! Every operation evaluates eagerly and records a node; [`Graph::backward`]
//! replays the nodes in reverse once. A training step builds a fresh graph.

use crate::conv::{self, ConvGeometry};
use crate::element::Element;
use crate::error::{AutogradError, Result};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation defined outside this crate.
///
/// The forward value is computed by the caller and handed to
/// [`Graph::custom`]; only the vector-Jacobian product lives here.
pub trait CustomOp<T: Element> {
    fn name(&self) -> &'static str;

    /// Gradient for each input given the upstream gradient of the output.
    /// Entries for inputs that need no gradient may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad_output: &[T],
    ) -> Vec<Option<Vec<T>>>;
}

enum Op<T: Element> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Exp(Var),
    Expm1(Var),
    LeakyRelu(Var, T),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        geometry: ConvGeometry,
    },
    AddChannelBias(Var, Var),
    AddPerChannel(Var, Var),
    Linear(Var, Var, Var),
    PadCircular(Var, usize),
    PointReflect(Var),
    Upsample2x(Var),
    ConcatChannels(Var, Var),
    Custom(Vec<Var>, Box<dyn CustomOp<T>>),
}

struct Node<T: Element> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T: Element> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    consumed: bool,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> AutogradError {
    AutogradError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

fn nchw<T: Element>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    t.nchw().ok_or_else(|| AutogradError::InvalidArgument {
        op,
        msg: format!("expected NCHW tensor, got shape {:?}", t.shape()),
    })
}

fn add_into<T: Element>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    /// Leaf that receives a gradient when `value.requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let rg = value.requires_grad;
        self.push_unchecked(value, Op::Leaf, rg)
    }

    fn push_unchecked(&mut self, mut value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        value.grad = None;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutogradError::NonFinite { op: name });
        }
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(value, op, rg))
    }

    fn zip_same(&self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        let out = self.value(a).map(|x| x * factor);
        self.push("scale", out, Op::Scale(a, factor), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(T::exp);
        self.push("exp", out, Op::Exp(a), &[a])
    }

    pub fn expm1(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(T::exp_m1);
        self.push("expm1", out, Op::Expm1(a), &[a])
    }

    /// `max(x, slope * x)` for `0 <= slope <= 1`.
    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        let out = self.value(a).map(|x| if x >= T::zero() { x } else { x * slope });
        self.push("leaky_relu", out, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.leaky_relu(a, T::zero())
    }

    /// Absolute value; the subgradient at zero is taken as zero.
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(T::abs);
        self.push("abs", out, Op::Abs(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s: T = t.data().iter().copied().sum();
        let m = s / T::from_f64(t.len() as f64);
        self.push("mean", Tensor::scalar(m), Op::Mean(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        self.push("reshape", out, Op::Reshape(a), &[a])
    }

    /// Mean squared error between two same-shape tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    /// Mean absolute error between two same-shape tensors.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let ad = self.abs(d)?;
        self.mean(ad)
    }

    /// Zero-padded 2-D cross-correlation of an NCHW input with an OIKK kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (n, c, h, w) = nchw("conv2d", self.value(input))?;
        let ks = self.value(kernel).shape().to_vec();
        let (o, kc, k) = match ks[..] {
            [o, kc, k1, k2] if k1 == k2 => (o, kc, k1),
            _ => {
                return Err(AutogradError::InvalidArgument {
                    op: "conv2d",
                    msg: format!("kernel must be O x C x K x K, got {ks:?}"),
                })
            }
        };
        if kc != c {
            return Err(mismatch("conv2d", self.value(input).shape(), &ks));
        }
        if stride == 0 {
            return Err(AutogradError::InvalidArgument {
                op: "conv2d",
                msg: "stride must be positive".into(),
            });
        }
        if k > h + 2 * padding || k > w + 2 * padding {
            return Err(AutogradError::InvalidArgument {
                op: "conv2d",
                msg: format!("kernel {k} larger than padded input {}x{}", h + 2 * padding, w + 2 * padding),
            });
        }
        let geometry = ConvGeometry {
            batch: n,
            in_channels: c,
            out_channels: o,
            height: h,
            width: w,
            kernel: k,
            stride,
            padding,
            out_height: (h + 2 * padding - k) / stride + 1,
            out_width: (w + 2 * padding - k) / stride + 1,
        };
        let data = conv::forward(&geometry, self.value(input).data(), self.value(kernel).data());
        let out = Tensor::new(&[n, o, geometry.out_height, geometry.out_width], data)?;
        self.push(
            "conv2d",
            out,
            Op::Conv2d {
                input,
                kernel,
                geometry,
            },
            &[input, kernel],
        )
    }

    /// `x[n, c, :, :] += bias[c]`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (n, c, h, w) = nchw("add_channel_bias", self.value(x))?;
        if self.value(bias).shape() != [c] {
            return Err(mismatch("add_channel_bias", self.value(x).shape(), self.value(bias).shape()));
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for (i, chunk) in data.chunks_mut(h * w).enumerate() {
            let bc = b[i % c];
            chunk.iter_mut().for_each(|v| *v = *v + bc);
        }
        let out = Tensor::new(&[n, c, h, w], data)?;
        self.push("add_channel_bias", out, Op::AddChannelBias(x, bias), &[x, bias])
    }

    /// `x[n, c, :, :] += e[n, c]`; broadcasts a per-sample vector over space.
    pub fn add_per_channel(&mut self, x: Var, e: Var) -> Result<Var> {
        let (n, c, h, w) = nchw("add_per_channel", self.value(x))?;
        if self.value(e).shape() != [n, c] {
            return Err(mismatch("add_per_channel", self.value(x).shape(), self.value(e).shape()));
        }
        let ev = self.value(e).data();
        let mut data = self.value(x).data().to_vec();
        for (i, chunk) in data.chunks_mut(h * w).enumerate() {
            let add = ev[i];
            chunk.iter_mut().for_each(|v| *v = *v + add);
        }
        let out = Tensor::new(&[n, c, h, w], data)?;
        self.push("add_per_channel", out, Op::AddPerChannel(x, e), &[x, e])
    }

    /// `x @ weight^T + bias` with `x: [N, I]`, `weight: [O, I]`, `bias: [O]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(weight).shape().to_vec();
        let (n, i, o) = match (&xs[..], &ws[..]) {
            ([n, i], [o, wi]) if i == wi => (*n, *i, *o),
            _ => return Err(mismatch("linear", &xs, &ws)),
        };
        if self.value(bias).shape() != [o] {
            return Err(mismatch("linear", &ws, self.value(bias).shape()));
        }
        let mut data = Vec::with_capacity(n * o);
        for _ in 0..n {
            data.extend_from_slice(self.value(bias).data());
        }
        T::gemm(
            n,
            i,
            o,
            self.value(x).data(),
            (i as isize, 1),
            self.value(weight).data(),
            (1, i as isize),
            T::one(),
            &mut data,
            (o as isize, 1),
        );
        let out = Tensor::new(&[n, o], data)?;
        self.push("linear", out, Op::Linear(x, weight, bias), &[x, weight, bias])
    }

    /// Periodic padding by `pad` pixels on every spatial border.
    pub fn pad_circular(&mut self, x: Var, pad: usize) -> Result<Var> {
        let (n, c, h, w) = nchw("pad_circular", self.value(x))?;
        if pad > h || pad > w {
            return Err(AutogradError::InvalidArgument {
                op: "pad_circular",
                msg: format!("padding {pad} exceeds plane {h}x{w}"),
            });
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let src = self.value(x).data();
        let mut data = vec![T::zero(); n * c * ph * pw];
        for (plane, out) in src.chunks(h * w).zip(data.chunks_mut(ph * pw)) {
            for y in 0..ph {
                let sy = (y + h - pad) % h;
                for xx in 0..pw {
                    out[y * pw + xx] = plane[sy * w + (xx + w - pad) % w];
                }
            }
        }
        let out = Tensor::new(&[n, c, ph, pw], data)?;
        self.push("pad_circular", out, Op::PadCircular(x, pad), &[x])
    }

    /// `out[u, v] = x[(H - u) mod H, (W - v) mod W]` on every plane.
    pub fn point_reflect(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = nchw("point_reflect", self.value(x))?;
        let data = reflect_planes(self.value(x).data(), h, w);
        let out = Tensor::new(&[n, c, h, w], data)?;
        self.push("point_reflect", out, Op::PointReflect(x), &[x])
    }

    /// Nearest-neighbour 2x spatial upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = nchw("upsample2x", self.value(x))?;
        let src = self.value(x).data();
        let mut data = vec![T::zero(); n * c * 4 * h * w];
        for (plane, out) in src.chunks(h * w).zip(data.chunks_mut(4 * h * w)) {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    out[y * 2 * w + xx] = plane[(y / 2) * w + xx / 2];
                }
            }
        }
        let out = Tensor::new(&[n, c, 2 * h, 2 * w], data)?;
        self.push("upsample2x", out, Op::Upsample2x(x), &[x])
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = nchw("concat_channels", self.value(a))?;
        let (nb, cb, hb, wb) = nchw("concat_channels", self.value(b))?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(mismatch("concat_channels", self.value(a).shape(), self.value(b).shape()));
        }
        let (pa, pb) = (ca * h * w, cb * h * w);
        let mut data = Vec::with_capacity(n * (pa + pb));
        for i in 0..n {
            data.extend_from_slice(&self.value(a).data()[i * pa..(i + 1) * pa]);
            data.extend_from_slice(&self.value(b).data()[i * pb..(i + 1) * pb]);
        }
        let out = Tensor::new(&[n, ca + cb, h, w], data)?;
        self.push("concat_channels", out, Op::ConcatChannels(a, b), &[a, b])
    }

    /// Records an externally evaluated operation.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor<T>, op: Box<dyn CustomOp<T>>) -> Result<Var> {
        let name = op.name();
        self.push(name, output, Op::Custom(inputs.to_vec(), op), inputs)
    }

    /// Reverse pass from a scalar loss. Leaves that require gradients get
    /// `dLoss/dLeaf`, readable through [`Graph::grad`]. The tape can be
    /// replayed only once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(AutogradError::GraphConsumed);
        }
        if !self.value(loss).is_scalar() {
            return Err(AutogradError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            for (input, contribution) in self.vjp(node, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                if contribution.iter().any(|v| !v.is_finite()) {
                    return Err(AutogradError::NonFinite { op: "backward" });
                }
                match grads[input.0].as_mut() {
                    Some(acc) => add_into(acc, &contribution),
                    None => grads[input.0] = Some(contribution),
                }
            }
        }
        // Only leaves retain gradients.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !matches!(node.op, Op::Leaf) {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn vjp(&self, node: &Node<T>, g: &[T]) -> Result<Vec<(Var, Vec<T>)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let need = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.to_vec()));
            }
            Op::Sub(a, b) => {
                out.push((*a, g.to_vec()));
                out.push((*b, g.iter().map(|&x| -x).collect()));
            }
            Op::Mul(a, b) => {
                if need(*a) {
                    out.push((*a, g.iter().zip(val(*b).data()).map(|(&g, &y)| g * y).collect()));
                }
                if need(*b) {
                    out.push((*b, g.iter().zip(val(*a).data()).map(|(&g, &x)| g * x).collect()));
                }
            }
            Op::Scale(a, f) => out.push((*a, g.iter().map(|&x| x * *f).collect())),
            Op::Exp(a) => out.push((*a, g.iter().zip(node.value.data()).map(|(&g, &y)| g * y).collect())),
            Op::Expm1(a) => out.push((
                *a,
                g.iter().zip(node.value.data()).map(|(&g, &y)| g * (y + T::one())).collect(),
            )),
            Op::LeakyRelu(a, slope) => out.push((
                *a,
                g.iter()
                    .zip(val(*a).data())
                    .map(|(&g, &x)| if x >= T::zero() { g } else { g * *slope })
                    .collect(),
            )),
            Op::Abs(a) => out.push((
                *a,
                g.iter()
                    .zip(val(*a).data())
                    .map(|(&g, &x)| {
                        if x > T::zero() {
                            g
                        } else if x < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    })
                    .collect(),
            )),
            Op::Sum(a) => out.push((*a, vec![g[0]; val(*a).len()])),
            Op::Mean(a) => {
                let n = val(*a).len();
                out.push((*a, vec![g[0] / T::from_f64(n as f64); n]));
            }
            Op::Reshape(a) => out.push((*a, g.to_vec())),
            Op::Conv2d {
                input,
                kernel,
                geometry,
            } => {
                let (dx, dk) = conv::backward(
                    geometry,
                    val(*input).data(),
                    val(*kernel).data(),
                    g,
                    need(*input),
                    need(*kernel),
                );
                if let Some(dx) = dx {
                    out.push((*input, dx));
                }
                if let Some(dk) = dk {
                    out.push((*kernel, dk));
                }
            }
            Op::AddChannelBias(x, b) => {
                let (_, c, h, w) = val(*x).nchw().expect("checked in forward");
                if need(*b) {
                    let mut db = vec![T::zero(); c];
                    for (i, chunk) in g.chunks(h * w).enumerate() {
                        db[i % c] = db[i % c] + chunk.iter().copied().sum();
                    }
                    out.push((*b, db));
                }
                out.push((*x, g.to_vec()));
            }
            Op::AddPerChannel(x, e) => {
                let (_, _, h, w) = val(*x).nchw().expect("checked in forward");
                if need(*e) {
                    out.push((*e, g.chunks(h * w).map(|c| c.iter().copied().sum()).collect()));
                }
                out.push((*x, g.to_vec()));
            }
            Op::Linear(x, w, b) => {
                let (n, i) = (val(*x).shape()[0], val(*x).shape()[1]);
                let o = val(*w).shape()[0];
                if need(*x) {
                    let mut dx = vec![T::zero(); n * i];
                    T::gemm(n, o, i, g, (o as isize, 1), val(*w).data(), (i as isize, 1), T::zero(), &mut dx, (i as isize, 1));
                    out.push((*x, dx));
                }
                if need(*w) {
                    let mut dw = vec![T::zero(); o * i];
                    T::gemm(o, n, i, g, (1, o as isize), val(*x).data(), (i as isize, 1), T::zero(), &mut dw, (i as isize, 1));
                    out.push((*w, dw));
                }
                if need(*b) {
                    let mut db = vec![T::zero(); o];
                    for row in g.chunks(o) {
                        add_into(&mut db, row);
                    }
                    out.push((*b, db));
                }
            }
            Op::PadCircular(x, pad) => {
                let (_, _, h, w) = val(*x).nchw().expect("checked in forward");
                let (ph, pw) = (h + 2 * pad, w + 2 * pad);
                let mut dx = vec![T::zero(); val(*x).len()];
                for (gp, dp) in g.chunks(ph * pw).zip(dx.chunks_mut(h * w)) {
                    for y in 0..ph {
                        let sy = (y + h - pad) % h;
                        for xx in 0..pw {
                            let idx = sy * w + (xx + w - pad) % w;
                            dp[idx] = dp[idx] + gp[y * pw + xx];
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::PointReflect(x) => {
                let (_, _, h, w) = val(*x).nchw().expect("checked in forward");
                out.push((*x, reflect_planes(g, h, w)));
            }
            Op::Upsample2x(x) => {
                let (_, _, h, w) = val(*x).nchw().expect("checked in forward");
                let mut dx = vec![T::zero(); val(*x).len()];
                for (gp, dp) in g.chunks(4 * h * w).zip(dx.chunks_mut(h * w)) {
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            let idx = (y / 2) * w + xx / 2;
                            dp[idx] = dp[idx] + gp[y * 2 * w + xx];
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::ConcatChannels(a, b) => {
                let n = val(*a).shape()[0];
                let (pa, pb) = (val(*a).len() / n, val(*b).len() / n);
                let mut da = Vec::with_capacity(n * pa);
                let mut db = Vec::with_capacity(n * pb);
                for chunk in g.chunks(pa + pb) {
                    da.extend_from_slice(&chunk[..pa]);
                    db.extend_from_slice(&chunk[pa..]);
                }
                out.push((*a, da));
                out.push((*b, db));
            }
            Op::Custom(inputs, op) => {
                let ins: Vec<&Tensor<T>> = inputs.iter().map(|&v| val(v)).collect();
                let grads = op.backward(&ins, &node.value, g);
                for (v, gr) in inputs.iter().zip(grads) {
                    if let Some(gr) = gr {
                        if gr.len() != val(*v).len() {
                            return Err(AutogradError::InvalidArgument {
                                op: op.name(),
                                msg: "custom gradient has wrong length".into(),
                            });
                        }
                        out.push((*v, gr));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn reflect_planes<T: Element>(src: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for (plane, dst) in src.chunks(h * w).zip(out.chunks_mut(h * w)) {
        for u in 0..h {
            let su = (h - u) % h;
            for v in 0..w {
                dst[u * w + v] = plane[su * w + (w - v) % w];
            }
        }
    }
    out
}
