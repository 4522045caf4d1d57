use crate::error::{invalid, Result};
use crate::kernels::{self, ConvGeom};
use crate::params::{ParamId, ParameterStore};
use crate::real::{gemm, Mat, Real};
use crate::tensor::{numel, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Input,
    Leaf { param: Option<ParamId> },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Dense { x: Var, w: Var, b: Var },
    Relu { x: Var, slope: f64 },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Sum { x: Var },
    PixelShuffle { x: Var, r: usize },
    ConcatChannels { parts: Vec<Var> },
    ConcatBatch { parts: Vec<Var> },
    SliceBatch { x: Var, start: usize },
    View { x: Var, offset: usize },
    Mean { parts: Vec<Var> },
    L1 { pred: Var, target: Var },
    #[cfg(test)]
    FaultyDouble { x: Var },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Leaf { .. } => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Dense { .. } => "dense",
            Op::Relu { .. } => "relu",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::Sum { .. } => "sum",
            Op::PixelShuffle { .. } => "pixel_shuffle",
            Op::ConcatChannels { .. } => "concat_channels",
            Op::ConcatBatch { .. } => "concat_batch",
            Op::SliceBatch { .. } => "slice_batch",
            Op::View { .. } => "view",
            Op::Mean { .. } => "mean_over_set",
            Op::L1 { .. } => "l1_loss",
            #[cfg(test)]
            Op::FaultyDouble { .. } => "faulty_double",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Location of the first non-finite value found in a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonFinite {
    pub node: usize,
    pub op: &'static str,
    pub param: Option<ParamId>,
}

/// Append-only computation graph. Nodes are stored in creation order, which
/// is a topological order, so backward is a single reverse sweep.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// (batch, channels, rest) split of an at-least-2d shape.
fn split_nc(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2..].iter().product())
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), leaf_grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    /// Free leaf that receives a gradient.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf { param: None }, true)
    }

    /// Leaf bound to a stored parameter; see [`Graph::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParameterStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Leaf { param: Some(id) }, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.leaf_grads[v.0].as_deref()
    }

    /// Adds every parameter leaf's gradient into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParameterStore<T>) {
        for (node, g) in self.nodes.iter().zip(&self.leaf_grads) {
            if let (Op::Leaf { param: Some(id) }, Some(g)) = (&node.op, g) {
                add_into(store.grad_mut(*id), g);
            }
        }
    }

    pub fn first_non_finite(&self) -> Option<NonFinite> {
        self.nodes.iter().enumerate().find(|(_, n)| !n.value.is_finite()).map(|(i, n)| NonFinite {
            node: i,
            op: n.op.name(),
            param: match n.op {
                Op::Leaf { param } => param,
                _ => None,
            },
        })
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    // ----------------------------------------------------------------- ops

    /// Stride-1 cross-correlation with zero padding `(ph, pw)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, padding: (usize, usize)) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 4 || ws.len() != 4 {
            return invalid(format!("conv2d expects 4d input and weight, got {xs:?} and {ws:?}"));
        }
        if xs[1] != ws[1] {
            return invalid(format!("conv2d channel mismatch: input {xs:?}, weight {ws:?}"));
        }
        if ws[2] % 2 == 0 || ws[3] % 2 == 0 {
            return invalid(format!("conv2d kernel must be odd, got {}x{}", ws[2], ws[3]));
        }
        let geom = ConvGeom {
            n: xs[0],
            c: xs[1],
            h: xs[2],
            w: xs[3],
            o: ws[0],
            kh: ws[2],
            kw: ws[3],
            ph: padding.0,
            pw: padding.1,
        };
        if geom.h + 2 * geom.ph < geom.kh || geom.w + 2 * geom.pw < geom.kw {
            return invalid("conv2d kernel larger than padded input");
        }
        if let Some(b) = b {
            if self.shape(b) != [geom.o] {
                return invalid(format!("conv2d bias must have shape [{}], got {:?}", geom.o, self.shape(b)));
            }
        }
        let out = kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let t = Tensor::from_parts(vec![geom.n, geom.o, geom.oh(), geom.ow()], out);
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// `x (n x f) * w (f x o) + b (o)`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || self.shape(b) != [ws[1]] {
            return invalid(format!(
                "dense shape mismatch: x {xs:?}, w {ws:?}, b {:?}",
                self.shape(b)
            ));
        }
        let (n, f, o) = (xs[0], xs[1], ws[1]);
        let mut out = Vec::with_capacity(n * o);
        for _ in 0..n {
            out.extend_from_slice(self.value(b).data());
        }
        gemm(n, f, o, Mat::rows(self.value(x).data(), f), Mat::rows(self.value(w).data(), o), T::one(), &mut out);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![n, o], out), Op::Dense { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    /// `x` for positive inputs, `slope * x` otherwise.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::cast(slope);
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| if v > T::zero() { v } else { s * v }).collect();
        let t = Tensor::from_parts(xv.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(t, Op::Relu { x, slope }, rg)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return invalid(format!("{what}: shape mismatch {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| p + q).collect();
        let t = Tensor::from_parts(self.shape(a).to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| p * q).collect();
        let t = Tensor::from_parts(self.shape(a).to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul { a, b }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    /// Sub-pixel rearrangement `(n, c*r*r, h, w) -> (n, c, h*r, w*r)`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || r == 0 || xs[1] % (r * r) != 0 {
            return invalid(format!("pixel_shuffle: channels of {xs:?} not divisible by r^2 = {}", r * r));
        }
        let c = xs[1] / (r * r);
        let data = kernels::pixel_shuffle(self.value(x).data(), xs[0], c, xs[2], xs[3], r, false);
        let t = Tensor::from_parts(vec![xs[0], c, xs[2] * r, xs[3] * r], data);
        let rg = self.rg(x);
        Ok(self.push(t, Op::PixelShuffle { x, r }, rg))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("concat_channels of zero tensors");
        };
        let s0 = self.shape(first).to_vec();
        if s0.len() < 2 {
            return invalid("concat_channels needs at least 2d tensors");
        }
        let mut channels = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != s0.len() || s[0] != s0[0] || s[2..] != s0[2..] {
                return invalid(format!("concat_channels: {s:?} incompatible with {s0:?}"));
            }
            channels += s[1];
        }
        let (n, _, rest) = split_nc(&s0);
        let mut data = Vec::with_capacity(n * channels * rest);
        for b in 0..n {
            for &p in parts {
                let c = self.shape(p)[1];
                data.extend_from_slice(&self.value(p).data()[b * c * rest..(b + 1) * c * rest]);
            }
        }
        let mut shape = s0;
        shape[1] = channels;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::from_parts(shape, data), Op::ConcatChannels { parts: parts.to_vec() }, rg))
    }

    /// Stacks tensors along the leading (batch) dimension.
    pub fn concat_batch(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("concat_batch of zero tensors");
        };
        let s0 = self.shape(first).to_vec();
        let mut n = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != s0.len() || s[1..] != s0[1..] {
                return invalid(format!("concat_batch: {s:?} incompatible with {s0:?}"));
            }
            n += s[0];
        }
        let mut data = Vec::with_capacity(n * numel(&s0[1..]));
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = s0;
        shape[0] = n;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::from_parts(shape, data), Op::ConcatBatch { parts: parts.to_vec() }, rg))
    }

    /// Rows `[start, start + len)` of the leading dimension.
    pub fn slice_batch(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if len == 0 || start + len > s[0] {
            return invalid(format!("slice_batch [{start}, {}) out of range for {s:?}", start + len));
        }
        let row = numel(&s[1..]);
        let data = self.value(x).data()[start * row..(start + len) * row].to_vec();
        let mut shape = s;
        shape[0] = len;
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape, data), Op::SliceBatch { x, start }, rg))
    }

    /// Contiguous range of the flattened tensor starting at `offset`, under `shape`.
    pub fn view(&mut self, x: Var, offset: usize, shape: &[usize]) -> Result<Var> {
        let len = numel(shape);
        if shape.is_empty() || shape.contains(&0) || offset + len > self.value(x).len() {
            return invalid(format!(
                "view of {shape:?} at offset {offset} exceeds tensor of {} values",
                self.value(x).len()
            ));
        }
        let data = self.value(x).data()[offset..offset + len].to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape.to_vec(), data), Op::View { x, offset }, rg))
    }

    /// Elementwise arithmetic mean of same-shape tensors, summed in slice order.
    pub fn mean_over_set(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("mean_over_set of zero tensors");
        };
        for &p in &parts[1..] {
            self.same_shape(first, p, "mean_over_set")?;
        }
        let mut acc = self.value(first).data().to_vec();
        for &p in &parts[1..] {
            add_into(&mut acc, self.value(p).data());
        }
        let k = T::cast(parts.len() as f64);
        for v in &mut acc {
            *v /= k;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let t = Tensor::from_parts(self.shape(first).to_vec(), acc);
        Ok(self.push(t, Op::Mean { parts: parts.to_vec() }, rg))
    }

    /// Mean absolute error, a scalar.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "l1_loss")?;
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let s = p.iter().zip(t).map(|(&a, &b)| (a - b).abs()).sum::<T>() / T::cast(p.len() as f64);
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(s), Op::L1 { pred, target }, rg))
    }

    /// Doubles in forward but claims a gradient of 3; a deliberately wrong
    /// rule used to show that the gradient checker catches bad backward code.
    #[cfg(test)]
    pub(crate) fn faulty_double(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v + v).collect();
        let t = Tensor::from_parts(xv.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(t, Op::FaultyDouble { x }, rg)
    }

    // ------------------------------------------------------------ backward

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across
    /// calls; intermediate gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return invalid(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss)));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            if let Op::Leaf { .. } = self.nodes[i].op {
                match &mut self.leaf_grads[i] {
                    Some(acc) => add_into(acc, &g),
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let mut send = |v: Var, contrib: Vec<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => add_into(acc, &contrib),
                slot => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Input | Op::Leaf { .. } => {}
            Op::Conv2d { x, w, b, geom } => {
                let need = (self.rg(*x), self.rg(*w), b.is_some_and(|b| self.rg(b)));
                let cg = kernels::conv2d_backward(geom, self.value(*x).data(), self.value(*w).data(), g, need);
                if let Some(gx) = cg.input {
                    send(*x, gx);
                }
                if let Some(gw) = cg.weight {
                    send(*w, gw);
                }
                if let (Some(b), Some(gb)) = (b, cg.bias) {
                    send(*b, gb);
                }
            }
            Op::Dense { x, w, b } => {
                let xs = self.shape(*x);
                let (n, f, o) = (xs[0], xs[1], self.shape(*w)[1]);
                if self.rg(*x) {
                    let mut gx = vec![T::zero(); n * f];
                    gemm(n, o, f, Mat::rows(g, o), Mat::rows_t(self.value(*w).data(), o), T::zero(), &mut gx);
                    send(*x, gx);
                }
                if self.rg(*w) {
                    let mut gw = vec![T::zero(); f * o];
                    gemm(f, n, o, Mat::rows_t(self.value(*x).data(), f), Mat::rows(g, o), T::zero(), &mut gw);
                    send(*w, gw);
                }
                if self.rg(*b) {
                    let mut gb = vec![T::zero(); o];
                    for row in g.chunks(o) {
                        add_into(&mut gb, row);
                    }
                    send(*b, gb);
                }
            }
            Op::Relu { x, slope } => {
                let s = T::cast(*slope);
                let gx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > T::zero() { gv } else { s * gv })
                    .collect();
                send(*x, gx);
            }
            Op::Add { a, b } => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.rg(*a) {
                    send(*a, g.iter().zip(bv).map(|(&gv, &q)| gv * q).collect());
                }
                if self.rg(*b) {
                    send(*b, g.iter().zip(av).map(|(&gv, &p)| gv * p).collect());
                }
            }
            Op::Sum { x } => {
                send(*x, vec![g[0]; self.value(*x).len()]);
            }
            Op::PixelShuffle { x, r } => {
                let xs = self.shape(*x);
                let gx = kernels::pixel_shuffle(g, xs[0], xs[1] / (r * r), xs[2], xs[3], *r, true);
                send(*x, gx);
            }
            Op::ConcatChannels { parts } => {
                let (n, total, rest) = split_nc(node.value.shape());
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    if self.rg(p) {
                        let mut gp = Vec::with_capacity(n * c * rest);
                        for b in 0..n {
                            let base = (b * total + offset) * rest;
                            gp.extend_from_slice(&g[base..base + c * rest]);
                        }
                        send(p, gp);
                    }
                    offset += c;
                }
            }
            Op::ConcatBatch { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.rg(p) {
                        send(p, g[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::SliceBatch { x, start } => {
                let xv = self.value(*x);
                let row = numel(&xv.shape()[1..]);
                let mut gx = vec![T::zero(); xv.len()];
                gx[start * row..start * row + g.len()].copy_from_slice(g);
                send(*x, gx);
            }
            Op::View { x, offset } => {
                let mut gx = vec![T::zero(); self.value(*x).len()];
                gx[*offset..offset + g.len()].copy_from_slice(g);
                send(*x, gx);
            }
            Op::Mean { parts } => {
                let k = T::cast(parts.len() as f64);
                let scaled: Vec<T> = g.iter().map(|&v| v / k).collect();
                for &p in parts {
                    send(p, scaled.clone());
                }
            }
            Op::L1 { pred, target } => {
                let scale = g[0] / T::cast(self.value(*pred).len() as f64);
                let diff_sign: Vec<T> = self
                    .value(*pred)
                    .data()
                    .iter()
                    .zip(self.value(*target).data())
                    .map(|(&p, &t)| {
                        let d = p - t;
                        if d > T::zero() {
                            scale
                        } else if d < T::zero() {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                if self.rg(*target) {
                    send(*target, diff_sign.iter().map(|&v| -v).collect());
                }
                send(*pred, diff_sign);
            }
            #[cfg(test)]
            Op::FaultyDouble { x } => {
                send(*x, g.iter().map(|&v| v * T::cast(3.0)).collect());
            }
        }
    }
}
