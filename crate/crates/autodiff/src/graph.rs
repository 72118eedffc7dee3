use crate::kernels;
use crate::{AutodiffError, Real, Result, Shape, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var, pad: usize },
    UpConv2 { input: Var, weight: Var, bias: Var },
    MaxPool2 { input: Var, argmax: Vec<u32> },
    Dense { input: Var, weight: Var, bias: Var },
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Square(Var),
    Abs(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Affine(Var, T),
    ScaleBy { input: Var, scalar: Var },
    MulConst { input: Var, factor: Vec<T> },
    Concat(Vec<Var>),
    SliceChannels { input: Var, start: usize },
    GlobalAvgPool(Var),
    GlobalMaxPool { input: Var, argmax: Vec<u32> },
    ChannelMean(Var),
    ChannelMax { input: Var, argmax: Vec<u32> },
    MulChannels { input: Var, gate: Var },
    MulSpatial { input: Var, gate: Var },
    Sum(Var),
    MaskedMean { input: Var, mask: Vec<bool>, count: usize },
    Diff { input: Var, along_x: bool, scale: f64 },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// The tape: an append-only list of values and the operations that
/// produced them. Insertion order is a valid topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every `requires_grad` leaf.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&[T]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Moves a gradient out, leaving `None` behind.
    pub fn take(&mut self, var: Var) -> Option<Vec<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn check_same(op: &'static str, a: Shape, b: Shape) -> Result<()> {
    if a != b {
        return Err(AutodiffError::ShapeMismatch { op, expected: a, got: b });
    }
    Ok(())
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node. Handles from before the reset are invalid.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> Shape {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn data(&self, var: Var) -> &[T] {
        self.nodes[var.0].value.data()
    }

    fn unary(&mut self, input: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(input);
        let data = value.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::from_vec(value.shape(), data).expect("unary preserves length");
        let rg = self.any_grad(&[input]);
        self.push(t, rg, op)
    }

    fn binary(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        check_same(op_name, self.shape(a), self.shape(b))?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::from_vec(self.shape(a), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(t, rg, op))
    }

    /// Same-padded (for `pad = (k-1)/2`) cross-correlation with a
    /// `(out, in, k, k)` weight and `out`-element bias.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, pad: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        let is = self.shape(input);
        let ws = self.shape(weight);
        if ws.h != ws.w || ws.h % 2 == 0 {
            return Err(AutodiffError::InvalidArgument {
                op: OP,
                reason: format!("kernel must be square with odd size, got {}x{}", ws.h, ws.w),
            });
        }
        if ws.c != is.c {
            return Err(AutodiffError::ChannelMismatch { op: OP, input: is.c, weight: ws.c });
        }
        if self.value(bias).len() != ws.n {
            return Err(AutodiffError::ShapeMismatch {
                op: OP,
                expected: Shape::new(ws.n, 1, 1, 1),
                got: self.shape(bias),
            });
        }
        if is.h + 2 * pad < ws.h || is.w + 2 * pad < ws.w {
            return Err(AutodiffError::InvalidArgument {
                op: OP,
                reason: format!("kernel {} larger than padded input {}", ws.h, is),
            });
        }
        let os = Shape::new(is.n, ws.n, is.h + 2 * pad + 1 - ws.h, is.w + 2 * pad + 1 - ws.w);
        let mut out = vec![T::zero(); os.len()];
        kernels::conv2d_forward(self.data(input), is, self.data(weight), ws, self.data(bias), pad, &mut out, os);
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(Tensor::from_vec(os, out)?, rg, Op::Conv2d { input, weight, bias, pad }))
    }

    /// 2x2 stride-2 transposed convolution, weight `(in, out, 2, 2)`.
    pub fn upconv2(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        const OP: &str = "upconv2";
        let is = self.shape(input);
        let ws = self.shape(weight);
        if ws.h != 2 || ws.w != 2 {
            return Err(AutodiffError::InvalidArgument {
                op: OP,
                reason: format!("weight must be (in, out, 2, 2), got {ws}"),
            });
        }
        if ws.n != is.c {
            return Err(AutodiffError::ChannelMismatch { op: OP, input: is.c, weight: ws.n });
        }
        if self.value(bias).len() != ws.c {
            return Err(AutodiffError::ShapeMismatch {
                op: OP,
                expected: Shape::new(ws.c, 1, 1, 1),
                got: self.shape(bias),
            });
        }
        let os = Shape::new(is.n, ws.c, 2 * is.h, 2 * is.w);
        let mut out = vec![T::zero(); os.len()];
        kernels::upconv2_forward(self.data(input), is, self.data(weight), ws, self.data(bias), &mut out, os);
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(Tensor::from_vec(os, out)?, rg, Op::UpConv2 { input, weight, bias }))
    }

    pub fn maxpool2(&mut self, input: Var) -> Result<Var> {
        let is = self.shape(input);
        if is.h % 2 != 0 || is.w % 2 != 0 {
            return Err(AutodiffError::OddSpatial { op: "maxpool2", height: is.h, width: is.w });
        }
        let os = Shape::new(is.n, is.c, is.h / 2, is.w / 2);
        let mut out = vec![T::zero(); os.len()];
        let argmax = kernels::maxpool2_forward(self.data(input), is, &mut out, os);
        let rg = self.any_grad(&[input]);
        Ok(self.push(Tensor::from_vec(os, out)?, rg, Op::MaxPool2 { input, argmax }))
    }

    /// Fully connected layer on `(n, in, 1, 1)` with weight `(out, in, 1, 1)`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        const OP: &str = "dense";
        let is = self.shape(input);
        let ws = self.shape(weight);
        if is.h != 1 || is.w != 1 {
            return Err(AutodiffError::InvalidArgument {
                op: OP,
                reason: format!("input must be (n, c, 1, 1), got {is}"),
            });
        }
        if ws.c != is.c || ws.h != 1 || ws.w != 1 {
            return Err(AutodiffError::ChannelMismatch { op: OP, input: is.c, weight: ws.c });
        }
        if self.value(bias).len() != ws.n {
            return Err(AutodiffError::ShapeMismatch {
                op: OP,
                expected: Shape::new(ws.n, 1, 1, 1),
                got: self.shape(bias),
            });
        }
        let os = Shape::new(is.n, ws.n, 1, 1);
        let (x, w, b) = (self.data(input), self.data(weight), self.data(bias));
        let mut out = Vec::with_capacity(os.len());
        for n in 0..is.n {
            let row = &x[n * is.c..(n + 1) * is.c];
            for o in 0..ws.n {
                let wr = &w[o * ws.c..(o + 1) * ws.c];
                out.push(b[o] + wr.iter().zip(row).map(|(a, b)| *a * *b).sum::<T>());
            }
        }
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(Tensor::from_vec(os, out)?, rg, Op::Dense { input, weight, bias }))
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.unary(input, T::tanh, Op::Tanh(input))
    }

    /// Logistic sigmoid. Outputs are kept strictly inside `(0, 1)` even
    /// where the exact value rounds to an endpoint.
    pub fn sigmoid(&mut self, input: Var) -> Var {
        let lo = T::min_positive_value();
        let hi = T::one() - T::epsilon() / T::lit(2.0);
        self.unary(
            input,
            move |x| {
                let s = if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                };
                s.max(lo).min(hi)
            },
            Op::Sigmoid(input),
        )
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.unary(input, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu(input))
    }

    pub fn square(&mut self, input: Var) -> Var {
        self.unary(input, |x| x * x, Op::Square(input))
    }

    pub fn abs(&mut self, input: Var) -> Var {
        self.unary(input, T::abs, Op::Abs(input))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Multiplies by a fixed constant.
    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        self.unary(input, move |x| x * factor, Op::Scale(input, factor))
    }

    /// `factor * x + offset` with fixed constants.
    pub fn affine(&mut self, input: Var, factor: T, offset: T) -> Var {
        self.unary(input, move |x| x * factor + offset, Op::Affine(input, factor))
    }

    /// Multiplies by a `(1, 1, 1, 1)` tensor, typically a learnable scalar.
    pub fn scale_by(&mut self, input: Var, scalar: Var) -> Result<Var> {
        check_same("scale_by", Shape::SCALAR, self.shape(scalar))?;
        let s = self.data(scalar)[0];
        let value = self.value(input);
        let t = Tensor::from_vec(value.shape(), value.data().iter().map(|&v| v * s).collect())?;
        let rg = self.any_grad(&[input, scalar]);
        Ok(self.push(t, rg, Op::ScaleBy { input, scalar }))
    }

    /// Elementwise product with constant factors; no gradient flows into them.
    pub fn mul_const(&mut self, input: Var, factor: Vec<T>) -> Result<Var> {
        let s = self.shape(input);
        if factor.len() != s.len() {
            return Err(AutodiffError::DataLength { shape: s, len: factor.len(), expected: s.len() });
        }
        let data = self.data(input).iter().zip(&factor).map(|(&x, &f)| x * f).collect();
        let rg = self.any_grad(&[input]);
        Ok(self.push(Tensor::from_vec(s, data)?, rg, Op::MulConst { input, factor }))
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| AutodiffError::InvalidArgument {
            op: "concat_channels",
            reason: "no inputs".into(),
        })?;
        let s0 = self.shape(first);
        let mut channels = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.n != s0.n || s.h != s0.h || s.w != s0.w {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_channels",
                    expected: s0.with_channels(s.c),
                    got: s,
                });
            }
            channels += s.c;
        }
        let os = s0.with_channels(channels);
        let mut out = Vec::with_capacity(os.len());
        for n in 0..s0.n {
            for &v in inputs {
                let s = self.shape(v);
                let block = s.c * s.plane();
                out.extend_from_slice(&self.data(v)[n * block..(n + 1) * block]);
            }
        }
        let rg = self.any_grad(inputs);
        Ok(self.push(Tensor::from_vec(os, out)?, rg, Op::Concat(inputs.to_vec())))
    }

    /// Channels `start..start + len`.
    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(input);
        if len == 0 || start + len > s.c {
            return Err(AutodiffError::InvalidArgument {
                op: "slice_channels",
                reason: format!("channels {start}..{} out of range for {s}", start + len),
            });
        }
        let os = s.with_channels(len);
        let mut out = Vec::with_capacity(os.len());
        for n in 0..s.n {
            let from = s.index(n, start, 0, 0);
            out.extend_from_slice(&self.data(input)[from..from + len * s.plane()]);
        }
        let rg = self.any_grad(&[input]);
        Ok(self.push(Tensor::from_vec(os, out)?, rg, Op::SliceChannels { input, start }))
    }

    /// Mean over `(h, w)` per channel, giving `(n, c, 1, 1)`.
    pub fn global_avg_pool(&mut self, input: Var) -> Var {
        let s = self.shape(input);
        let inv = T::one() / T::lit(s.plane() as f64);
        let out = self.data(input).chunks(s.plane()).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let t = Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), out).expect("one value per plane");
        let rg = self.any_grad(&[input]);
        self.push(t, rg, Op::GlobalAvgPool(input))
    }

    /// Max over `(h, w)` per channel, giving `(n, c, 1, 1)`.
    pub fn global_max_pool(&mut self, input: Var) -> Var {
        let s = self.shape(input);
        let mut out = Vec::with_capacity(s.n * s.c);
        let mut argmax = Vec::with_capacity(s.n * s.c);
        for (p, plane) in self.data(input).chunks(s.plane()).enumerate() {
            let mut best = 0;
            for (i, v) in plane.iter().enumerate() {
                if *v > plane[best] {
                    best = i;
                }
            }
            out.push(plane[best]);
            argmax.push((p * s.plane() + best) as u32);
        }
        let t = Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), out).expect("one value per plane");
        let rg = self.any_grad(&[input]);
        self.push(t, rg, Op::GlobalMaxPool { input, argmax })
    }

    /// Mean over channels at each pixel, giving `(n, 1, h, w)`.
    pub fn channel_mean(&mut self, input: Var) -> Var {
        let s = self.shape(input);
        let os = s.with_channels(1);
        let inv = T::one() / T::lit(s.c as f64);
        let x = self.data(input);
        let mut out = vec![T::zero(); os.len()];
        for n in 0..s.n {
            let dst = &mut out[n * s.plane()..(n + 1) * s.plane()];
            for c in 0..s.c {
                let from = s.index(n, c, 0, 0);
                add_into(dst, &x[from..from + s.plane()]);
            }
            dst.iter_mut().for_each(|v| *v *= inv);
        }
        let rg = self.any_grad(&[input]);
        self.push(Tensor::from_vec(os, out).expect("plane sized"), rg, Op::ChannelMean(input))
    }

    /// Max over channels at each pixel, giving `(n, 1, h, w)`; ties go to
    /// the lowest channel.
    pub fn channel_max(&mut self, input: Var) -> Var {
        let s = self.shape(input);
        let os = s.with_channels(1);
        let x = self.data(input);
        let mut out = Vec::with_capacity(os.len());
        let mut argmax = Vec::with_capacity(os.len());
        for n in 0..s.n {
            for p in 0..s.plane() {
                let mut best = s.index(n, 0, 0, 0) + p;
                for c in 1..s.c {
                    let idx = s.index(n, c, 0, 0) + p;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best as u32);
            }
        }
        let rg = self.any_grad(&[input]);
        self.push(Tensor::from_vec(os, out).expect("plane sized"), rg, Op::ChannelMax { input, argmax })
    }

    /// `x * gate` with a per-channel `(n, c, 1, 1)` gate.
    pub fn mul_channels(&mut self, input: Var, gate: Var) -> Result<Var> {
        let s = self.shape(input);
        check_same("mul_channels", Shape::new(s.n, s.c, 1, 1), self.shape(gate))?;
        let g = self.data(gate);
        let out = self
            .data(input)
            .chunks(s.plane())
            .zip(g)
            .flat_map(|(plane, &gv)| plane.iter().map(move |&v| v * gv))
            .collect();
        let rg = self.any_grad(&[input, gate]);
        Ok(self.push(Tensor::from_vec(s, out)?, rg, Op::MulChannels { input, gate }))
    }

    /// `x * gate` with a per-pixel `(n, 1, h, w)` gate shared by all channels.
    pub fn mul_spatial(&mut self, input: Var, gate: Var) -> Result<Var> {
        let s = self.shape(input);
        check_same("mul_spatial", s.with_channels(1), self.shape(gate))?;
        let g = self.data(gate);
        let x = self.data(input);
        let mut out = Vec::with_capacity(s.len());
        for n in 0..s.n {
            let gp = &g[n * s.plane()..(n + 1) * s.plane()];
            for c in 0..s.c {
                let from = s.index(n, c, 0, 0);
                out.extend(x[from..from + s.plane()].iter().zip(gp).map(|(a, b)| *a * *b));
            }
        }
        let rg = self.any_grad(&[input, gate]);
        Ok(self.push(Tensor::from_vec(s, out)?, rg, Op::MulSpatial { input, gate }))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.data(input).iter().copied().sum::<T>();
        let rg = self.any_grad(&[input]);
        self.push(Tensor::scalar(total), rg, Op::Sum(input))
    }

    /// Mean over the elements whose mask entry is `true`.
    pub fn masked_mean(&mut self, input: Var, mask: &[bool]) -> Result<Var> {
        const OP: &str = "masked_mean";
        let s = self.shape(input);
        if mask.len() != s.len() {
            return Err(AutodiffError::DataLength { shape: s, len: mask.len(), expected: s.len() });
        }
        let count = mask.iter().filter(|m| **m).count();
        if count == 0 {
            return Err(AutodiffError::EmptyMask { op: OP });
        }
        let total = self
            .data(input)
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
            .sum::<T>();
        let rg = self.any_grad(&[input]);
        let value = Tensor::scalar(total / T::lit(count as f64));
        Ok(self.push(value, rg, Op::MaskedMean { input, mask: mask.to_vec(), count }))
    }

    /// First derivative along x (columns, increasing index) for spacing
    /// `spacing`: central differences inside, one-sided at the borders.
    pub fn diff_x(&mut self, input: Var, spacing: f64) -> Result<Var> {
        self.diff(input, true, 1.0 / spacing)
    }

    /// First derivative along y, where y increases towards row 0 (the top
    /// of the grid). Same stencil as [`Graph::diff_x`].
    pub fn diff_y(&mut self, input: Var, spacing: f64) -> Result<Var> {
        self.diff(input, false, -1.0 / spacing)
    }

    fn diff(&mut self, input: Var, along_x: bool, scale: f64) -> Result<Var> {
        let s = self.shape(input);
        if s.h < 2 || s.w < 2 || !scale.is_finite() {
            return Err(AutodiffError::InvalidArgument {
                op: "diff",
                reason: format!("needs at least 2x2 cells and finite spacing, got {s}"),
            });
        }
        let mut out = vec![T::zero(); s.len()];
        kernels::apply_stencil(self.data(input), &mut out, s, along_x, scale, false);
        let rg = self.any_grad(&[input]);
        Ok(self.push(Tensor::from_vec(s, out)?, rg, Op::Diff { input, along_x, scale }))
    }

    /// Reverse sweep from `loss`. Returns gradients for every leaf created
    /// with `requires_grad`; nodes that do not require a gradient get none.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ls = self.shape(loss);
        if ls.len() != 1 {
            return Err(AutodiffError::NotScalar(ls));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
        }
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
    }

    /// Accumulates `f(i)` into every element of `v`'s gradient.
    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl Fn(usize) -> T) {
        if let Some(dst) = self.slot(grads, v) {
            for (i, d) in dst.iter_mut().enumerate() {
                *d += f(i);
            }
        }
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, pad } => {
                let (is, ws, os) = (self.shape(*input), self.shape(*weight), node.value.shape());
                let mut gin = self.slot(grads, *input).map(std::mem::take);
                let mut gw = self.slot(grads, *weight).map(std::mem::take);
                let mut gb = self.slot(grads, *bias).map(std::mem::take);
                kernels::conv2d_backward(
                    g,
                    os,
                    self.data(*input),
                    is,
                    self.data(*weight),
                    ws,
                    *pad,
                    gin.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                restore(grads, *input, gin);
                restore(grads, *weight, gw);
                restore(grads, *bias, gb);
            }
            Op::UpConv2 { input, weight, bias } => {
                let (is, ws, os) = (self.shape(*input), self.shape(*weight), node.value.shape());
                let mut gin = self.slot(grads, *input).map(std::mem::take);
                let mut gw = self.slot(grads, *weight).map(std::mem::take);
                let mut gb = self.slot(grads, *bias).map(std::mem::take);
                kernels::upconv2_backward(
                    g,
                    os,
                    self.data(*input),
                    is,
                    self.data(*weight),
                    ws,
                    gin.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                restore(grads, *input, gin);
                restore(grads, *weight, gw);
                restore(grads, *bias, gb);
            }
            Op::MaxPool2 { input, argmax } | Op::GlobalMaxPool { input, argmax } | Op::ChannelMax { input, argmax } => {
                if let Some(dst) = self.slot(grads, *input) {
                    for (gv, &src) in g.iter().zip(argmax) {
                        dst[src as usize] += *gv;
                    }
                }
            }
            Op::Dense { input, weight, bias } => {
                let (is, ws) = (self.shape(*input), self.shape(*weight));
                let (x, w) = (self.data(*input), self.data(*weight));
                if let Some(dst) = self.slot(grads, *input) {
                    for n in 0..is.n {
                        for o in 0..ws.n {
                            let go = g[n * ws.n + o];
                            for i in 0..ws.c {
                                dst[n * is.c + i] += go * w[o * ws.c + i];
                            }
                        }
                    }
                }
                if let Some(dst) = self.slot(grads, *weight) {
                    for n in 0..is.n {
                        for o in 0..ws.n {
                            let go = g[n * ws.n + o];
                            for i in 0..ws.c {
                                dst[o * ws.c + i] += go * x[n * is.c + i];
                            }
                        }
                    }
                }
                if let Some(dst) = self.slot(grads, *bias) {
                    for n in 0..is.n {
                        add_into(dst, &g[n * ws.n..(n + 1) * ws.n]);
                    }
                }
            }
            Op::Tanh(a) => self.accumulate(grads, *a, |i| g[i] * (T::one() - out[i] * out[i])),
            Op::Sigmoid(a) => self.accumulate(grads, *a, |i| g[i] * out[i] * (T::one() - out[i])),
            Op::Relu(a) => {
                let x = self.data(*a);
                self.accumulate(grads, *a, |i| if x[i] > T::zero() { g[i] } else { T::zero() })
            }
            Op::Square(a) => {
                let x = self.data(*a);
                self.accumulate(grads, *a, |i| g[i] * T::lit(2.0) * x[i])
            }
            Op::Abs(a) => {
                let x = self.data(*a);
                self.accumulate(grads, *a, |i| {
                    if x[i] > T::zero() {
                        g[i]
                    } else if x[i] < T::zero() {
                        -g[i]
                    } else {
                        T::zero()
                    }
                })
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |i| g[i]);
                self.accumulate(grads, *b, |i| g[i]);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |i| g[i]);
                self.accumulate(grads, *b, |i| -g[i]);
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (self.data(*a), self.data(*b));
                self.accumulate(grads, *a, |i| g[i] * xb[i]);
                self.accumulate(grads, *b, |i| g[i] * xa[i]);
            }
            Op::Scale(a, f) | Op::Affine(a, f) => self.accumulate(grads, *a, |i| g[i] * *f),
            Op::ScaleBy { input, scalar } => {
                let s = self.data(*scalar)[0];
                self.accumulate(grads, *input, |i| g[i] * s);
                let x = self.data(*input);
                if let Some(dst) = self.slot(grads, *scalar) {
                    dst[0] += g.iter().zip(x).map(|(a, b)| *a * *b).sum::<T>();
                }
            }
            Op::MulConst { input, factor } => self.accumulate(grads, *input, |i| g[i] * factor[i]),
            Op::Concat(inputs) => {
                let os = node.value.shape();
                let mut offset = 0;
                for v in inputs {
                    let s = self.shape(*v);
                    let block = s.c * s.plane();
                    if let Some(dst) = self.slot(grads, *v) {
                        for n in 0..os.n {
                            let from = os.index(n, offset, 0, 0);
                            add_into(&mut dst[n * block..(n + 1) * block], &g[from..from + block]);
                        }
                    }
                    offset += s.c;
                }
            }
            Op::SliceChannels { input, start } => {
                let (s, os) = (self.shape(*input), node.value.shape());
                if let Some(dst) = self.slot(grads, *input) {
                    let block = os.c * os.plane();
                    for n in 0..s.n {
                        let from = s.index(n, *start, 0, 0);
                        add_into(&mut dst[from..from + block], &g[n * block..(n + 1) * block]);
                    }
                }
            }
            Op::GlobalAvgPool(a) => {
                let plane = self.shape(*a).plane();
                let inv = T::one() / T::lit(plane as f64);
                self.accumulate(grads, *a, |i| g[i / plane] * inv)
            }
            Op::ChannelMean(a) => {
                let s = self.shape(*a);
                let inv = T::one() / T::lit(s.c as f64);
                let plane = s.plane();
                self.accumulate(grads, *a, |i| g[(i / (s.c * plane)) * plane + i % plane] * inv)
            }
            Op::MulChannels { input, gate } => {
                let plane = self.shape(*input).plane();
                let (x, gt) = (self.data(*input), self.data(*gate));
                self.accumulate(grads, *input, |i| g[i] * gt[i / plane]);
                if let Some(dst) = self.slot(grads, *gate) {
                    for (k, d) in dst.iter_mut().enumerate() {
                        let r = k * plane..(k + 1) * plane;
                        *d += g[r.clone()].iter().zip(&x[r]).map(|(a, b)| *a * *b).sum::<T>();
                    }
                }
            }
            Op::MulSpatial { input, gate } => {
                let s = self.shape(*input);
                let plane = s.plane();
                let (x, gt) = (self.data(*input), self.data(*gate));
                let gate_index = |i: usize| (i / (s.c * plane)) * plane + i % plane;
                self.accumulate(grads, *input, |i| g[i] * gt[gate_index(i)]);
                if let Some(dst) = self.slot(grads, *gate) {
                    for i in 0..s.len() {
                        dst[gate_index(i)] += g[i] * x[i];
                    }
                }
            }
            Op::Sum(a) => self.accumulate(grads, *a, |_| g[0]),
            Op::MaskedMean { input, mask, count } => {
                let scale = g[0] / T::lit(*count as f64);
                self.accumulate(grads, *input, |i| if mask[i] { scale } else { T::zero() })
            }
            Op::Diff { input, along_x, scale } => {
                let s = self.shape(*input);
                if let Some(dst) = self.slot(grads, *input) {
                    kernels::apply_stencil(g, dst, s, *along_x, *scale, true);
                }
            }
        }
    }
}

fn restore<T>(grads: &mut [Option<Vec<T>>], v: Var, g: Option<Vec<T>>) {
    if let Some(g) = g {
        grads[v.0] = Some(g);
    }
}
