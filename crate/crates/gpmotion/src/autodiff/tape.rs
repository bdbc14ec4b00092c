//! Define-by-run differentiation tape.
//!
//! Forward calls on [`Tape`] evaluate immediately, store the result, and
//! record which primitive produced it. [`Tape::backward`] walks the recording
//! in reverse, visiting each node exactly once; insertion order is the
//! topological order because an operation can only reference existing nodes.

use std::fmt;

use super::ops::{self, Padding};
use super::tensor::Tensor;
use super::AutodiffError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Node(pub(crate) usize);

/// An operation whose backward rule lives outside the engine.
///
/// `forward` runs at record time; `backward` receives the upstream gradient
/// plus the saved input/output values and returns one gradient per input
/// (same shapes as the inputs).
pub trait CustomOp: fmt::Debug {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, AutodiffError>;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, dy: &Tensor) -> Vec<Tensor>;
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add { a: Node, b: Node },
    Sub { a: Node, b: Node },
    Mul { a: Node, b: Node },
    Scale { x: Node, c: f64 },
    Sum { x: Node },
    Reshape { x: Node },
    LeakyRelu { x: Node, alpha: f64 },
    Tanh { x: Node },
    Exp { x: Node },
    ChannelMask { x: Node, mask: Vec<f64> },
    Linear { x: Node, w: Node, b: Option<Node>, squeezed: bool },
    Conv2d { x: Node, k: Node, b: Option<Node>, stride: usize, padding: Padding },
    ConvTranspose2d { x: Node, k: Node, b: Option<Node> },
    Conv1d { x: Node, k: Node, b: Option<Node>, dilation: usize },
    BilinearSample { image: Node, coords: Node },
    SmoothAxis { x: Node, axis: usize, weights: Vec<f64> },
    ConcatChannels { parts: Vec<Node> },
    ConcatBroadcast { x: Node, extra: Node },
    Index { x: Node, i: usize },
    GatherRows { x: Node, rows: Vec<usize> },
    SliceRows { x: Node, r0: usize, r1: usize },
    MeanAxis1 { x: Node },
    Transpose2 { x: Node },
    ScatterColumns { cols: Vec<Node>, slots: Vec<usize>, t_len: usize },
    Custom { op: Box<dyn CustomOp>, inputs: Vec<Node> },
}

struct Entry {
    value: Tensor,
    op: Op,
}

/// Recording of one forward evaluation.
#[derive(Default)]
pub struct Tape {
    entries: Vec<Entry>,
}

/// Per-node gradients produced by [`Tape::backward`]. Nodes the loss does not
/// reach have no entry; callers treat that as a zero gradient.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, n: Node) -> Option<&Tensor> {
        self.grads[n.0].as_ref()
    }

    pub fn take(&mut self, n: Node) -> Option<Tensor> {
        self.grads[n.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Records an input value (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Node {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, n: Node) -> &Tensor {
        &self.entries[n.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Node {
        self.entries.push(Entry { value, op });
        Node(self.entries.len() - 1)
    }

    fn same_shape(&self, a: Node, b: Node, context: &'static str) -> Result<(), AutodiffError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(AutodiffError::ShapeMismatch {
                context,
                a: self.value(a).shape().to_vec(),
                b: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Node, b: Node) -> Result<Node, AutodiffError> {
        self.same_shape(a, b, "add")?;
        let v = zip(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Result<Node, AutodiffError> {
        self.same_shape(a, b, "sub")?;
        let v = zip(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Node, b: Node) -> Result<Node, AutodiffError> {
        self.same_shape(a, b, "mul")?;
        let v = zip(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Node, c: f64) -> Node {
        let v = self.value(x).map(|v| v * c);
        self.push(v, Op::Scale { x, c })
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Node) -> Node {
        let v = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(v, Op::Sum { x })
    }

    pub fn reshape(&mut self, x: Node, shape: impl Into<Vec<usize>>) -> Result<Node, AutodiffError> {
        let v = self.value(x).clone().reshape(shape)?;
        Ok(self.push(v, Op::Reshape { x }))
    }

    pub fn leaky_relu(&mut self, x: Node, alpha: f64) -> Node {
        let v = self.value(x).map(|v| if v >= 0.0 { v } else { alpha * v });
        self.push(v, Op::LeakyRelu { x, alpha })
    }

    pub fn tanh(&mut self, x: Node) -> Node {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh { x })
    }

    pub fn exp(&mut self, x: Node) -> Node {
        let v = self.value(x).map(f64::exp);
        self.push(v, Op::Exp { x })
    }

    /// Scales whole channels of a `[C,T]` tensor; the dropout mask comes from
    /// the caller so the tape itself stays deterministic.
    pub fn channel_mask(&mut self, x: Node, mask: Vec<f64>) -> Result<Node, AutodiffError> {
        let xv = self.value(x);
        if xv.rank() != 2 || xv.shape()[0] != mask.len() {
            return Err(AutodiffError::ShapeMismatch {
                context: "channel_mask",
                a: xv.shape().to_vec(),
                b: vec![mask.len()],
            });
        }
        let (c, t) = (xv.shape()[0], xv.shape()[1]);
        let mut v = xv.clone();
        for ch in 0..c {
            for j in 0..t {
                v.data_mut()[ch * t + j] *= mask[ch];
            }
        }
        Ok(self.push(v, Op::ChannelMask { x, mask }))
    }

    /// Channel-wise dropout on a `[C,T]` tensor: in training mode whole
    /// channels are zeroed with probability `rate` and survivors rescaled by
    /// `1/(1-rate)`; in eval mode (or at rate 0) the input passes through.
    pub fn spatial_dropout1d(
        &mut self,
        x: Node,
        rate: f64,
        rng: &mut impl rand::Rng,
        training: bool,
    ) -> Result<Node, AutodiffError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::Config(format!("dropout rate {rate} outside [0,1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let c = self.value(x).shape()[0];
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..c).map(|_| if rng.random_bool(rate) { 0.0 } else { keep }).collect();
        self.channel_mask(x, mask)
    }

    /// Affine map. `x` may be `[n]` (treated as one row) or `[N,n]`.
    pub fn linear(&mut self, x: Node, w: Node, b: Option<Node>) -> Result<Node, AutodiffError> {
        let squeezed = self.value(x).rank() == 1;
        let xv = if squeezed {
            let n = self.value(x).numel();
            self.value(x).clone().reshape(vec![1, n])?
        } else {
            self.value(x).clone()
        };
        let wv = self.value(w);
        if xv.rank() != 2 || wv.rank() != 2 || xv.shape()[1] != wv.shape()[1] {
            return Err(AutodiffError::ShapeMismatch {
                context: "linear",
                a: xv.shape().to_vec(),
                b: wv.shape().to_vec(),
            });
        }
        if let Some(bn) = b {
            if self.value(bn).numel() != wv.shape()[0] {
                return Err(AutodiffError::ShapeMismatch {
                    context: "linear bias",
                    a: self.value(bn).shape().to_vec(),
                    b: vec![wv.shape()[0]],
                });
            }
        }
        let mut v = ops::linear_forward(&xv, wv, b.map(|bn| self.value(bn)));
        if squeezed {
            let m = v.shape()[1];
            v = v.reshape(vec![m])?;
        }
        Ok(self.push(v, Op::Linear { x, w, b, squeezed }))
    }

    /// 2-D convolution, correlation convention. `x: [N,C,H,W]`, `k: [F,C,kh,kw]`.
    pub fn conv2d(
        &mut self,
        x: Node,
        k: Node,
        b: Option<Node>,
        stride: usize,
        padding: Padding,
    ) -> Result<Node, AutodiffError> {
        let (xv, kv) = (self.value(x), self.value(k));
        if xv.rank() != 4 || kv.rank() != 4 {
            return Err(AutodiffError::ShapeMismatch {
                context: "conv2d rank",
                a: xv.shape().to_vec(),
                b: kv.shape().to_vec(),
            });
        }
        if xv.shape()[1] != kv.shape()[1] {
            return Err(AutodiffError::ShapeMismatch {
                context: "conv2d channels",
                a: xv.shape().to_vec(),
                b: kv.shape().to_vec(),
            });
        }
        if kv.shape()[2] % 2 == 0 || !(stride == 1 || stride == 2) {
            return Err(AutodiffError::Config(format!(
                "conv2d requires odd kernel and stride 1 or 2, got k={} stride={stride}",
                kv.shape()[2]
            )));
        }
        let v = ops::conv2d_forward(xv, kv, b.map(|bn| self.value(bn)), stride, padding);
        Ok(self.push(v, Op::Conv2d { x, k, b, stride, padding }))
    }

    /// Stride-2 transposed convolution: the exact adjoint of
    /// [`Tape::conv2d`]'s input gradient, doubling both spatial extents.
    /// `x: [N,F,h,w]`, `k: [F,C,kh,kw]` (same layout as the paired conv).
    pub fn conv_transpose2d(
        &mut self,
        x: Node,
        k: Node,
        b: Option<Node>,
    ) -> Result<Node, AutodiffError> {
        let (xv, kv) = (self.value(x), self.value(k));
        if xv.rank() != 4 || kv.rank() != 4 || xv.shape()[1] != kv.shape()[0] {
            return Err(AutodiffError::ShapeMismatch {
                context: "conv_transpose2d channels",
                a: xv.shape().to_vec(),
                b: kv.shape().to_vec(),
            });
        }
        let (n, _, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        let c_out = kv.shape()[1];
        let out_shape = [n, c_out, 2 * h, 2 * w];
        let mut v = ops::conv2d_input_grad(xv, kv, 2, Padding::Same, &out_shape);
        if let Some(bn) = b {
            let bd = self.value(bn).data().to_vec();
            let plane = 4 * h * w;
            for ni in 0..n {
                for c in 0..c_out {
                    let base = (ni * c_out + c) * plane;
                    for p in 0..plane {
                        v.data_mut()[base + p] += bd[c];
                    }
                }
            }
        }
        Ok(self.push(v, Op::ConvTranspose2d { x, k, b }))
    }

    /// Dilated non-causal 1-D convolution over `[C,T]`, zero padded to keep
    /// length `T`. Kernel width must be 1 or 3; a width-3 kernel must fit the
    /// sequence (`2·dilation < T`).
    pub fn conv1d_dilated(
        &mut self,
        x: Node,
        k: Node,
        b: Option<Node>,
        dilation: usize,
    ) -> Result<Node, AutodiffError> {
        let (xv, kv) = (self.value(x), self.value(k));
        if xv.rank() != 2 || kv.rank() != 3 || xv.shape()[0] != kv.shape()[1] {
            return Err(AutodiffError::ShapeMismatch {
                context: "conv1d channels",
                a: xv.shape().to_vec(),
                b: kv.shape().to_vec(),
            });
        }
        let width = kv.shape()[2];
        if width != 1 && width != 3 {
            return Err(AutodiffError::Config(format!("conv1d kernel width must be 1 or 3, got {width}")));
        }
        let t_len = xv.shape()[1];
        if width == 3 && 2 * dilation >= t_len {
            return Err(AutodiffError::Config(format!(
                "conv1d receptive field exceeds sequence: 2*dilation = {} >= T = {t_len}",
                2 * dilation
            )));
        }
        let v = ops::conv1d_forward(xv, kv, b.map(|bn| self.value(bn)), dilation);
        Ok(self.push(v, Op::Conv1d { x, k, b, dilation }))
    }

    /// Samples all channels of `image` at `coords` (row coords in channel 0,
    /// column coords in channel 1), clamping out-of-grid coordinates to the
    /// border. Differentiable in both arguments.
    pub fn bilinear_sample(&mut self, image: Node, coords: Node) -> Result<Node, AutodiffError> {
        let (iv, cv) = (self.value(image), self.value(coords));
        let ok = match iv.rank() {
            3 => cv.shape() == [2, iv.shape()[1], iv.shape()[2]],
            4 => cv.shape() == [iv.shape()[0], 2, iv.shape()[2], iv.shape()[3]],
            _ => false,
        };
        if !ok {
            return Err(AutodiffError::ShapeMismatch {
                context: "bilinear_sample",
                a: iv.shape().to_vec(),
                b: cv.shape().to_vec(),
            });
        }
        let v = ops::bilinear_forward(iv, cv);
        Ok(self.push(v, Op::BilinearSample { image, coords }))
    }

    /// Centered correlation with `weights` along `axis`, replication border.
    pub fn smooth_axis(&mut self, x: Node, axis: usize, weights: Vec<f64>) -> Result<Node, AutodiffError> {
        if weights.len() % 2 == 0 || axis >= self.value(x).rank() {
            return Err(AutodiffError::Config(format!(
                "smooth_axis: odd kernel required, axis {axis} within rank {}",
                self.value(x).rank()
            )));
        }
        let v = ops::smooth_axis(self.value(x), axis, &weights);
        Ok(self.push(v, Op::SmoothAxis { x, axis, weights }))
    }

    /// Concatenates `[N,C_i,H,W]` parts along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Node]) -> Result<Node, AutodiffError> {
        let first = self.value(parts[0]).shape().to_vec();
        let (n, h, w) = (first[0], first[2], first[3]);
        let mut c_total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 4 || s[0] != n || s[2] != h || s[3] != w {
                return Err(AutodiffError::ShapeMismatch {
                    context: "concat_channels",
                    a: first,
                    b: s.to_vec(),
                });
            }
            c_total += s[1];
        }
        let mut v = Tensor::zeros(vec![n, c_total, h, w]);
        let plane = h * w;
        for ni in 0..n {
            let mut c_off = 0;
            for &p in parts {
                let pv = self.value(p);
                let c = pv.shape()[1];
                let src = &pv.data()[ni * c * plane..(ni + 1) * c * plane];
                let dst_base = (ni * c_total + c_off) * plane;
                v.data_mut()[dst_base..dst_base + c * plane].copy_from_slice(src);
                c_off += c;
            }
        }
        Ok(self.push(v, Op::ConcatChannels { parts: parts.to_vec() }))
    }

    /// Appends `extra: [E,H,W]` to every batch item of `x: [N,C,H,W]`.
    pub fn concat_broadcast(&mut self, x: Node, extra: Node) -> Result<Node, AutodiffError> {
        let (xv, ev) = (self.value(x), self.value(extra));
        if xv.rank() != 4 || ev.rank() != 3 || xv.shape()[2] != ev.shape()[1] || xv.shape()[3] != ev.shape()[2] {
            return Err(AutodiffError::ShapeMismatch {
                context: "concat_broadcast",
                a: xv.shape().to_vec(),
                b: ev.shape().to_vec(),
            });
        }
        let (n, c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        let e = ev.shape()[0];
        let plane = h * w;
        let mut v = Tensor::zeros(vec![n, c + e, h, w]);
        for ni in 0..n {
            let dst = (ni * (c + e)) * plane;
            v.data_mut()[dst..dst + c * plane]
                .copy_from_slice(&xv.data()[ni * c * plane..(ni + 1) * c * plane]);
            v.data_mut()[dst + c * plane..dst + (c + e) * plane].copy_from_slice(ev.data());
        }
        Ok(self.push(v, Op::ConcatBroadcast { x, extra }))
    }

    /// Extracts `x[i, ...]`, dropping the leading axis.
    pub fn index(&mut self, x: Node, i: usize) -> Result<Node, AutodiffError> {
        let xv = self.value(x);
        if xv.rank() < 1 || i >= xv.shape()[0] {
            return Err(AutodiffError::Config(format!("index {i} out of range")));
        }
        let rest: Vec<usize> = xv.shape()[1..].to_vec();
        let stride: usize = rest.iter().product();
        let v = Tensor::new(rest, xv.data()[i * stride..(i + 1) * stride].to_vec())?;
        Ok(self.push(v, Op::Index { x, i }))
    }

    /// Gathers rows along the leading axis: `out[r,...] = x[rows[r],...]`.
    pub fn gather_rows(&mut self, x: Node, rows: Vec<usize>) -> Result<Node, AutodiffError> {
        let xv = self.value(x);
        let stride: usize = xv.shape()[1..].iter().product();
        if let Some(&bad) = rows.iter().find(|&&r| r >= xv.shape()[0]) {
            return Err(AutodiffError::Config(format!("gather_rows: row {bad} out of range")));
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = rows.len();
        let mut data = Vec::with_capacity(rows.len() * stride);
        for &r in &rows {
            data.extend_from_slice(&xv.data()[r * stride..(r + 1) * stride]);
        }
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::GatherRows { x, rows }))
    }

    /// Rows `[r0, r1)` of a `[C,T]` matrix.
    pub fn slice_rows(&mut self, x: Node, r0: usize, r1: usize) -> Result<Node, AutodiffError> {
        let xv = self.value(x);
        if xv.rank() != 2 || r0 >= r1 || r1 > xv.shape()[0] {
            return Err(AutodiffError::Config(format!("slice_rows [{r0},{r1}) invalid")));
        }
        let t = xv.shape()[1];
        let v = Tensor::new(vec![r1 - r0, t], xv.data()[r0 * t..r1 * t].to_vec())?;
        Ok(self.push(v, Op::SliceRows { x, r0, r1 }))
    }

    /// Mean over the second axis of a `[C,T]` matrix.
    pub fn mean_axis1(&mut self, x: Node) -> Result<Node, AutodiffError> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(AutodiffError::Config("mean_axis1 expects rank 2".into()));
        }
        let (c, t) = (xv.shape()[0], xv.shape()[1]);
        let mut v = Tensor::zeros(vec![c]);
        for ch in 0..c {
            v.data_mut()[ch] = xv.data()[ch * t..(ch + 1) * t].iter().sum::<f64>() / t as f64;
        }
        Ok(self.push(v, Op::MeanAxis1 { x }))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose2(&mut self, x: Node) -> Result<Node, AutodiffError> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(AutodiffError::Config("transpose2 expects rank 2".into()));
        }
        let (r, c) = (xv.shape()[0], xv.shape()[1]);
        let mut v = Tensor::zeros(vec![c, r]);
        for i in 0..r {
            for j in 0..c {
                v.data_mut()[j * r + i] = xv.data()[i * c + j];
            }
        }
        Ok(self.push(v, Op::Transpose2 { x }))
    }

    /// Builds a `[dim, t_len]` matrix whose column `slots[i]` is the vector
    /// `cols[i]`; unnamed columns stay zero.
    pub fn scatter_columns(
        &mut self,
        cols: &[Node],
        slots: &[usize],
        dim: usize,
        t_len: usize,
    ) -> Result<Node, AutodiffError> {
        if cols.len() != slots.len() {
            return Err(AutodiffError::Config("scatter_columns: cols/slots length mismatch".into()));
        }
        let mut v = Tensor::zeros(vec![dim, t_len]);
        for (&col, &slot) in cols.iter().zip(slots) {
            let cv = self.value(col);
            if cv.numel() != dim || slot >= t_len {
                return Err(AutodiffError::ShapeMismatch {
                    context: "scatter_columns",
                    a: cv.shape().to_vec(),
                    b: vec![dim, t_len],
                });
            }
            for d in 0..dim {
                v.data_mut()[d * t_len + slot] = cv.data()[d];
            }
        }
        Ok(self.push(v, Op::ScatterColumns { cols: cols.to_vec(), slots: slots.to_vec(), t_len }))
    }

    /// Records an externally defined primitive.
    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Node]) -> Result<Node, AutodiffError> {
        let vals: Vec<&Tensor> = inputs.iter().map(|&n| self.value(n)).collect();
        let v = op.forward(&vals)?;
        Ok(self.push(v, Op::Custom { op, inputs: inputs.to_vec() }))
    }

    /// Reverse pass from a scalar loss. Each tape node is visited exactly
    /// once; repeated calls on the same tape give bit-identical results.
    pub fn backward(&self, loss: Node) -> Result<Gradients, AutodiffError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.entries.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(dy) = grads[id].take() else { continue };
            match &self.entries[id].op {
                Op::Leaf => {
                    grads[id] = Some(dy);
                    continue;
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy);
                }
                Op::Sub { a, b } => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy.map(|v| -v));
                }
                Op::Mul { a, b } => {
                    let da = zip(&dy, self.value(*b), |g, y| g * y);
                    let db = zip(&dy, self.value(*a), |g, x| g * x);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale { x, c } => {
                    let c = *c;
                    accumulate(&mut grads, *x, dy.map(|v| v * c));
                }
                Op::Sum { x } => {
                    let g = dy.item();
                    accumulate(&mut grads, *x, Tensor::full(self.value(*x).shape().to_vec(), g));
                }
                Op::Reshape { x } => {
                    let shaped = dy.reshape(self.value(*x).shape().to_vec())?;
                    accumulate(&mut grads, *x, shaped);
                }
                Op::LeakyRelu { x, alpha } => {
                    let dx = zip(&dy, self.value(*x), |g, v| if v >= 0.0 { g } else { alpha * g });
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh { x } => {
                    let dx = zip(&dy, &self.entries[id].value, |g, y| g * (1.0 - y * y));
                    accumulate(&mut grads, *x, dx);
                }
                Op::Exp { x } => {
                    let dx = zip(&dy, &self.entries[id].value, |g, y| g * y);
                    accumulate(&mut grads, *x, dx);
                }
                Op::ChannelMask { x, mask } => {
                    let t = dy.shape()[1];
                    let mut dx = dy;
                    for ch in 0..mask.len() {
                        for j in 0..t {
                            dx.data_mut()[ch * t + j] *= mask[ch];
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Linear { x, w, b, squeezed } => {
                    let dy2 = if *squeezed {
                        let m = dy.numel();
                        dy.reshape(vec![1, m])?
                    } else {
                        dy
                    };
                    let xv = if *squeezed {
                        let n = self.value(*x).numel();
                        self.value(*x).clone().reshape(vec![1, n])?
                    } else {
                        self.value(*x).clone()
                    };
                    let dx = ops::linear_input_grad(&dy2, self.value(*w));
                    let dw = ops::linear_weight_grad(&dy2, &xv);
                    let dx = if *squeezed {
                        let n = dx.numel();
                        dx.reshape(vec![n])?
                    } else {
                        dx
                    };
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    if let Some(bn) = b {
                        let (nb, m) = (dy2.shape()[0], dy2.shape()[1]);
                        let mut db = Tensor::zeros(vec![m]);
                        for r in 0..nb {
                            for j in 0..m {
                                db.data_mut()[j] += dy2.data()[r * m + j];
                            }
                        }
                        accumulate(&mut grads, *bn, db);
                    }
                }
                Op::Conv2d { x, k, b, stride, padding } => {
                    let dx = ops::conv2d_input_grad(&dy, self.value(*k), *stride, *padding, self.value(*x).shape());
                    let dk = ops::conv2d_kernel_grad(&dy, self.value(*x), *stride, *padding, self.value(*k).shape());
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *k, dk);
                    if let Some(bn) = b {
                        accumulate(&mut grads, *bn, ops::conv2d_bias_grad(&dy));
                    }
                }
                Op::ConvTranspose2d { x, k, b } => {
                    // forward was conv2d_input_grad, so its adjoints swap roles
                    let dx = ops::conv2d_forward(&dy, self.value(*k), None, 2, Padding::Same);
                    let dk = ops::conv2d_kernel_grad(self.value(*x), &dy, 2, Padding::Same, self.value(*k).shape());
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *k, dk);
                    if let Some(bn) = b {
                        accumulate(&mut grads, *bn, ops::conv2d_bias_grad(&dy));
                    }
                }
                Op::Conv1d { x, k, b, dilation } => {
                    let c_in = self.value(*x).shape()[0];
                    let dx = ops::conv1d_input_grad(&dy, self.value(*k), *dilation, c_in);
                    let dk = ops::conv1d_kernel_grad(&dy, self.value(*x), *dilation, self.value(*k).shape());
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *k, dk);
                    if let Some(bn) = b {
                        let (f, t) = (dy.shape()[0], dy.shape()[1]);
                        let mut db = Tensor::zeros(vec![f]);
                        for fi in 0..f {
                            db.data_mut()[fi] = dy.data()[fi * t..(fi + 1) * t].iter().sum();
                        }
                        accumulate(&mut grads, *bn, db);
                    }
                }
                Op::BilinearSample { image, coords } => {
                    let (di, dc) = ops::bilinear_backward(self.value(*image), self.value(*coords), &dy);
                    accumulate(&mut grads, *image, di);
                    accumulate(&mut grads, *coords, dc);
                }
                Op::SmoothAxis { x, axis, weights } => {
                    let dx = ops::smooth_axis_adjoint(&dy, *axis, weights);
                    accumulate(&mut grads, *x, dx);
                }
                Op::ConcatChannels { parts } => {
                    let (n, c_total, h, w) = {
                        let s = self.entries[id].value.shape();
                        (s[0], s[1], s[2], s[3])
                    };
                    let plane = h * w;
                    let mut c_off = 0;
                    for &p in parts {
                        let c = self.value(p).shape()[1];
                        let mut dp = Tensor::zeros(vec![n, c, h, w]);
                        for ni in 0..n {
                            let src = (ni * c_total + c_off) * plane;
                            let dst = ni * c * plane;
                            dp.data_mut()[dst..dst + c * plane]
                                .copy_from_slice(&dy.data()[src..src + c * plane]);
                        }
                        accumulate(&mut grads, p, dp);
                        c_off += c;
                    }
                }
                Op::ConcatBroadcast { x, extra } => {
                    let xs = self.value(*x).shape().to_vec();
                    let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                    let e = self.value(*extra).shape()[0];
                    let plane = h * w;
                    let mut dx = Tensor::zeros(xs.clone());
                    let mut de = Tensor::zeros(self.value(*extra).shape().to_vec());
                    for ni in 0..n {
                        let src = (ni * (c + e)) * plane;
                        dx.data_mut()[ni * c * plane..(ni + 1) * c * plane]
                            .copy_from_slice(&dy.data()[src..src + c * plane]);
                        for j in 0..e * plane {
                            de.data_mut()[j] += dy.data()[src + c * plane + j];
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *extra, de);
                }
                Op::Index { x, i } => {
                    let mut dx = Tensor::zeros(self.value(*x).shape().to_vec());
                    let stride: usize = self.value(*x).shape()[1..].iter().product();
                    dx.data_mut()[i * stride..(i + 1) * stride].copy_from_slice(dy.data());
                    accumulate(&mut grads, *x, dx);
                }
                Op::GatherRows { x, rows } => {
                    let mut dx = Tensor::zeros(self.value(*x).shape().to_vec());
                    let stride: usize = self.value(*x).shape()[1..].iter().product();
                    for (r, &src_row) in rows.iter().enumerate() {
                        for j in 0..stride {
                            dx.data_mut()[src_row * stride + j] += dy.data()[r * stride + j];
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::SliceRows { x, r0, r1 } => {
                    let mut dx = Tensor::zeros(self.value(*x).shape().to_vec());
                    let t = self.value(*x).shape()[1];
                    dx.data_mut()[r0 * t..r1 * t].copy_from_slice(dy.data());
                    accumulate(&mut grads, *x, dx);
                }
                Op::MeanAxis1 { x } => {
                    let (c, t) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                    let mut dx = Tensor::zeros(vec![c, t]);
                    for ch in 0..c {
                        let g = dy.data()[ch] / t as f64;
                        dx.data_mut()[ch * t..(ch + 1) * t].fill(g);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Transpose2 { x } => {
                    let (r, c) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                    let mut dx = Tensor::zeros(vec![r, c]);
                    for i in 0..c {
                        for j in 0..r {
                            dx.data_mut()[j * c + i] = dy.data()[i * r + j];
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ScatterColumns { cols, slots, t_len } => {
                    for (&col, &slot) in cols.iter().zip(slots) {
                        let dim = self.value(col).numel();
                        let mut dc = Tensor::zeros(self.value(col).shape().to_vec());
                        for d in 0..dim {
                            dc.data_mut()[d] = dy.data()[d * t_len + slot];
                        }
                        accumulate(&mut grads, col, dc);
                    }
                }
                Op::Custom { op, inputs } => {
                    let vals: Vec<&Tensor> = inputs.iter().map(|&n| self.value(n)).collect();
                    let parts = op.backward(&vals, &self.entries[id].value, &dy);
                    debug_assert_eq!(parts.len(), inputs.len());
                    for (&n, g) in inputs.iter().zip(parts) {
                        accumulate(&mut grads, n, g);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], n: Node, g: Tensor) {
    match &mut grads[n.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot => *slot = Some(g),
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("zip shapes checked")
}
