//! Raw forward and adjoint kernels behind the tape operations.
//!
//! Everything here is a pure function over [`Tensor`] values. The tape records
//! which kernel produced a node and replays the matching adjoint during
//! backward; value-level code (deformation utilities, inference) calls the
//! forward kernels directly.

use super::tensor::Tensor;

/// Zero-padding policy for 2-D convolutions.
///
/// `Same` keeps `ceil(extent/stride)` outputs, splitting the required padding
/// with the extra pixel at the end; `Valid` uses no padding.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

pub(crate) fn conv_out_extent(extent: usize, k: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => extent.div_ceil(stride),
        Padding::Valid => (extent - k) / stride + 1,
    }
}

/// Leading padding for one axis.
fn pad_begin(extent: usize, k: usize, stride: usize, padding: Padding) -> isize {
    match padding {
        Padding::Same => {
            let out = extent.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(extent);
            (total / 2) as isize
        }
        Padding::Valid => 0,
    }
}

fn dims4(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    debug_assert_eq!(s.len(), 4);
    (s[0], s[1], s[2], s[3])
}

/// Output indices whose stride-mapped input index `o·s + k_off - pad` lies in
/// `[0, extent_in)`, clipped to `[0, extent_out)`.
#[inline]
fn out_range(extent_in: usize, extent_out: usize, k_off: usize, pad: isize, stride: usize) -> (usize, usize) {
    let s = stride as isize;
    let shift = pad - k_off as isize;
    let lo = (shift + s - 1).div_euclid(s).max(0) as usize;
    let hi = ((extent_in as isize - 1 + shift).div_euclid(s) + 1).clamp(0, extent_out as isize) as usize;
    (lo, hi.max(lo))
}

/// Correlation-convention 2-D convolution over `[N,C,H,W]` input with an
/// `[F,C,kh,kw]` kernel (the kernel is not flipped).
pub(crate) fn conv2d_forward(
    x: &Tensor,
    k: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: Padding,
) -> Tensor {
    let (nb, c_in, h, w) = dims4(x);
    let (f_out, kc, kh, kw) = dims4(k);
    debug_assert_eq!(kc, c_in);
    let oh = conv_out_extent(h, kh, stride, padding);
    let ow = conv_out_extent(w, kw, stride, padding);
    let ph = pad_begin(h, kh, stride, padding);
    let pw = pad_begin(w, kw, stride, padding);

    let mut out = Tensor::zeros(vec![nb, f_out, oh, ow]);
    let xd = x.data();
    let kd = k.data();
    let od = out.data_mut();
    if let Some(b) = bias {
        let bd = b.data();
        for n in 0..nb {
            for f in 0..f_out {
                let base = ((n * f_out) + f) * oh * ow;
                od[base..base + oh * ow].fill(bd[f]);
            }
        }
    }
    for n in 0..nb {
        for c in 0..c_in {
            let xb = (n * c_in + c) * h * w;
            for f in 0..f_out {
                let ob = (n * f_out + f) * oh * ow;
                let kb = (f * c_in + c) * kh * kw;
                for p in 0..kh {
                    let (ilo, ihi) = out_range(h, oh, p, ph, stride);
                    for q in 0..kw {
                        let kv = kd[kb + p * kw + q];
                        if kv == 0.0 {
                            continue;
                        }
                        let (jlo, jhi) = out_range(w, ow, q, pw, stride);
                        let shift_q = pw - q as isize;
                        for oi in ilo..ihi {
                            let ii = (oi * stride) as isize + p as isize - ph;
                            let xrow = (xb + ii as usize * w) as isize - shift_q;
                            let orow = ob + oi * ow;
                            for oj in jlo..jhi {
                                od[orow + oj] += kv * xd[(xrow + (oj * stride) as isize) as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`conv2d_forward`] with respect to its input. Also the forward
/// pass of the stride-2 transposed convolution.
pub(crate) fn conv2d_input_grad(
    dy: &Tensor,
    k: &Tensor,
    stride: usize,
    padding: Padding,
    x_shape: &[usize],
) -> Tensor {
    let (nb, f_out, oh, ow) = dims4(dy);
    let (kf, c_in, kh, kw) = dims4(k);
    debug_assert_eq!(kf, f_out);
    let (h, w) = (x_shape[2], x_shape[3]);
    let ph = pad_begin(h, kh, stride, padding);
    let pw = pad_begin(w, kw, stride, padding);

    let mut dx = Tensor::zeros(x_shape.to_vec());
    let dyd = dy.data();
    let kd = k.data();
    let dxd = dx.data_mut();
    for n in 0..nb {
        for f in 0..f_out {
            let ob = (n * f_out + f) * oh * ow;
            for c in 0..c_in {
                let xb = (n * c_in + c) * h * w;
                let kb = (f * c_in + c) * kh * kw;
                for p in 0..kh {
                    let (ilo, ihi) = out_range(h, oh, p, ph, stride);
                    for q in 0..kw {
                        let kv = kd[kb + p * kw + q];
                        if kv == 0.0 {
                            continue;
                        }
                        let (jlo, jhi) = out_range(w, ow, q, pw, stride);
                        let shift_q = pw - q as isize;
                        for oi in ilo..ihi {
                            let ii = (oi * stride) as isize + p as isize - ph;
                            let xrow = (xb + ii as usize * w) as isize - shift_q;
                            let orow = ob + oi * ow;
                            for oj in jlo..jhi {
                                dxd[(xrow + (oj * stride) as isize) as usize] += kv * dyd[orow + oj];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Adjoint of [`conv2d_forward`] with respect to the kernel.
pub(crate) fn conv2d_kernel_grad(
    dy: &Tensor,
    x: &Tensor,
    stride: usize,
    padding: Padding,
    k_shape: &[usize],
) -> Tensor {
    let (nb, f_out, oh, ow) = dims4(dy);
    let (_, c_in, h, w) = dims4(x);
    let (kh, kw) = (k_shape[2], k_shape[3]);
    let ph = pad_begin(h, kh, stride, padding);
    let pw = pad_begin(w, kw, stride, padding);

    let mut dk = Tensor::zeros(k_shape.to_vec());
    let dyd = dy.data();
    let xd = x.data();
    let dkd = dk.data_mut();
    for n in 0..nb {
        for f in 0..f_out {
            let ob = (n * f_out + f) * oh * ow;
            for c in 0..c_in {
                let xb = (n * c_in + c) * h * w;
                let kb = (f * c_in + c) * kh * kw;
                for p in 0..kh {
                    let (ilo, ihi) = out_range(h, oh, p, ph, stride);
                    for q in 0..kw {
                        let (jlo, jhi) = out_range(w, ow, q, pw, stride);
                        let shift_q = pw - q as isize;
                        let mut acc = 0.0;
                        for oi in ilo..ihi {
                            let ii = (oi * stride) as isize + p as isize - ph;
                            let xrow = (xb + ii as usize * w) as isize - shift_q;
                            let orow = ob + oi * ow;
                            for oj in jlo..jhi {
                                acc += dyd[orow + oj] * xd[(xrow + (oj * stride) as isize) as usize];
                            }
                        }
                        dkd[kb + p * kw + q] += acc;
                    }
                }
            }
        }
    }
    dk
}

/// Per-output-channel bias gradient: sums `dy` over batch and space.
pub(crate) fn conv2d_bias_grad(dy: &Tensor) -> Tensor {
    let (nb, f_out, oh, ow) = dims4(dy);
    let mut db = Tensor::zeros(vec![f_out]);
    let dyd = dy.data();
    let dbd = db.data_mut();
    for n in 0..nb {
        for f in 0..f_out {
            let ob = (n * f_out + f) * oh * ow;
            dbd[f] += dyd[ob..ob + oh * ow].iter().sum::<f64>();
        }
    }
    db
}

/// Dilated 1-D convolution over `[C,T]` with an `[F,C,width]` kernel,
/// non-causal symmetric zero padding, output length `T`.
pub(crate) fn conv1d_forward(
    x: &Tensor,
    k: &Tensor,
    bias: Option<&Tensor>,
    dilation: usize,
) -> Tensor {
    let (c_in, t_len) = (x.shape()[0], x.shape()[1]);
    let (f_out, width) = (k.shape()[0], k.shape()[2]);
    let ctr = (width / 2) as isize;
    let mut out = Tensor::zeros(vec![f_out, t_len]);
    let xd = x.data();
    let kd = k.data();
    let od = out.data_mut();
    if let Some(b) = bias {
        for f in 0..f_out {
            od[f * t_len..(f + 1) * t_len].fill(b.data()[f]);
        }
    }
    for f in 0..f_out {
        for c in 0..c_in {
            let kb = (f * c_in + c) * width;
            for m in 0..width {
                let kv = kd[kb + m];
                if kv == 0.0 {
                    continue;
                }
                let off = (m as isize - ctr) * dilation as isize;
                for t in 0..t_len {
                    let src = t as isize + off;
                    if src < 0 || src >= t_len as isize {
                        continue;
                    }
                    od[f * t_len + t] += kv * xd[c * t_len + src as usize];
                }
            }
        }
    }
    out
}

pub(crate) fn conv1d_input_grad(dy: &Tensor, k: &Tensor, dilation: usize, c_in: usize) -> Tensor {
    let (f_out, t_len) = (dy.shape()[0], dy.shape()[1]);
    let width = k.shape()[2];
    let ctr = (width / 2) as isize;
    let mut dx = Tensor::zeros(vec![c_in, t_len]);
    let dyd = dy.data();
    let kd = k.data();
    let dxd = dx.data_mut();
    for f in 0..f_out {
        for c in 0..c_in {
            let kb = (f * c_in + c) * width;
            for m in 0..width {
                let kv = kd[kb + m];
                if kv == 0.0 {
                    continue;
                }
                let off = (m as isize - ctr) * dilation as isize;
                for t in 0..t_len {
                    let src = t as isize + off;
                    if src < 0 || src >= t_len as isize {
                        continue;
                    }
                    dxd[c * t_len + src as usize] += kv * dyd[f * t_len + t];
                }
            }
        }
    }
    dx
}

pub(crate) fn conv1d_kernel_grad(dy: &Tensor, x: &Tensor, dilation: usize, k_shape: &[usize]) -> Tensor {
    let (f_out, t_len) = (dy.shape()[0], dy.shape()[1]);
    let c_in = x.shape()[0];
    let width = k_shape[2];
    let ctr = (width / 2) as isize;
    let mut dk = Tensor::zeros(k_shape.to_vec());
    let dyd = dy.data();
    let xd = x.data();
    let dkd = dk.data_mut();
    for f in 0..f_out {
        for c in 0..c_in {
            let kb = (f * c_in + c) * width;
            for m in 0..width {
                let off = (m as isize - ctr) * dilation as isize;
                let mut acc = 0.0;
                for t in 0..t_len {
                    let src = t as isize + off;
                    if src < 0 || src >= t_len as isize {
                        continue;
                    }
                    acc += dyd[f * t_len + t] * xd[c * t_len + src as usize];
                }
                dkd[kb + m] += acc;
            }
        }
    }
    dk
}

/// Affine map `y = x·Wᵀ + b` for `x: [N,n]` (row per sample), `w: [m,n]`.
pub(crate) fn linear_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let (nb, n_in) = (x.shape()[0], x.shape()[1]);
    let m_out = w.shape()[0];
    let mut out = Tensor::zeros(vec![nb, m_out]);
    let xd = x.data();
    let wd = w.data();
    let od = out.data_mut();
    for b in 0..nb {
        for m in 0..m_out {
            let mut acc = match bias {
                Some(bb) => bb.data()[m],
                None => 0.0,
            };
            let wrow = m * n_in;
            let xrow = b * n_in;
            for i in 0..n_in {
                acc += wd[wrow + i] * xd[xrow + i];
            }
            od[b * m_out + m] = acc;
        }
    }
    out
}

pub(crate) fn linear_input_grad(dy: &Tensor, w: &Tensor) -> Tensor {
    let (nb, m_out) = (dy.shape()[0], dy.shape()[1]);
    let n_in = w.shape()[1];
    let mut dx = Tensor::zeros(vec![nb, n_in]);
    let dyd = dy.data();
    let wd = w.data();
    let dxd = dx.data_mut();
    for b in 0..nb {
        for m in 0..m_out {
            let g = dyd[b * m_out + m];
            if g == 0.0 {
                continue;
            }
            let wrow = m * n_in;
            let xrow = b * n_in;
            for i in 0..n_in {
                dxd[xrow + i] += g * wd[wrow + i];
            }
        }
    }
    dx
}

pub(crate) fn linear_weight_grad(dy: &Tensor, x: &Tensor) -> Tensor {
    let (nb, m_out) = (dy.shape()[0], dy.shape()[1]);
    let n_in = x.shape()[1];
    let mut dw = Tensor::zeros(vec![m_out, n_in]);
    let dyd = dy.data();
    let xd = x.data();
    let dwd = dw.data_mut();
    for b in 0..nb {
        for m in 0..m_out {
            let g = dyd[b * m_out + m];
            if g == 0.0 {
                continue;
            }
            let wrow = m * n_in;
            let xrow = b * n_in;
            for i in 0..n_in {
                dwd[wrow + i] += g * xd[xrow + i];
            }
        }
    }
    dw
}

/// Bilinear interpolation of every channel of `image` at continuous pixel
/// coordinates, clamped to the border. `image: [C,H,W]` (or `[N,C,H,W]`),
/// `coords: [2,H,W]` (or `[N,2,H,W]`) with channel 0 holding row coordinates
/// and channel 1 column coordinates.
pub(crate) fn bilinear_forward(image: &Tensor, coords: &Tensor) -> Tensor {
    let batched = image.rank() == 4;
    let (nb, c, h, w) = if batched {
        dims4(image)
    } else {
        (1, image.shape()[0], image.shape()[1], image.shape()[2])
    };
    let mut out = Tensor::zeros(image.shape().to_vec());
    let plane = h * w;
    for n in 0..nb {
        let img = &image.data()[n * c * plane..(n + 1) * c * plane];
        let crd = &coords.data()[n * 2 * plane..(n + 1) * 2 * plane];
        let od = &mut out.data_mut()[n * c * plane..(n + 1) * c * plane];
        for pix in 0..plane {
            let (y0, y1, fy) = lattice(crd[pix], h);
            let (x0, x1, fx) = lattice(crd[plane + pix], w);
            let w00 = (1.0 - fy) * (1.0 - fx);
            let w01 = (1.0 - fy) * fx;
            let w10 = fy * (1.0 - fx);
            let w11 = fy * fx;
            for ch in 0..c {
                let base = ch * plane;
                od[base + pix] = w00 * img[base + y0 * w + x0]
                    + w01 * img[base + y0 * w + x1]
                    + w10 * img[base + y1 * w + x0]
                    + w11 * img[base + y1 * w + x1];
            }
        }
    }
    out
}

/// Clamped lattice cell for one coordinate: lower index, upper index, fraction.
#[inline]
fn lattice(p: f64, extent: usize) -> (usize, usize, f64) {
    let max = (extent - 1) as f64;
    let pc = p.clamp(0.0, max);
    let i0 = pc.floor();
    let f = pc - i0;
    let i0 = i0 as usize;
    let i1 = (i0 + 1).min(extent - 1);
    (i0, i1, f)
}

/// Adjoints of [`bilinear_forward`] for both arguments. Coordinate gradients
/// are zero where the clamp saturates.
pub(crate) fn bilinear_backward(image: &Tensor, coords: &Tensor, dy: &Tensor) -> (Tensor, Tensor) {
    let batched = image.rank() == 4;
    let (nb, c, h, w) = if batched {
        dims4(image)
    } else {
        (1, image.shape()[0], image.shape()[1], image.shape()[2])
    };
    let mut dimg = Tensor::zeros(image.shape().to_vec());
    let mut dcrd = Tensor::zeros(coords.shape().to_vec());
    let plane = h * w;
    for n in 0..nb {
        let img = &image.data()[n * c * plane..(n + 1) * c * plane];
        let crd = &coords.data()[n * 2 * plane..(n + 1) * 2 * plane];
        let dyd = &dy.data()[n * c * plane..(n + 1) * c * plane];
        for pix in 0..plane {
            let py = crd[pix];
            let px = crd[plane + pix];
            let (y0, y1, fy) = lattice(py, h);
            let (x0, x1, fx) = lattice(px, w);
            let sat_y = py < 0.0 || py > (h - 1) as f64;
            let sat_x = px < 0.0 || px > (w - 1) as f64;
            let w00 = (1.0 - fy) * (1.0 - fx);
            let w01 = (1.0 - fy) * fx;
            let w10 = fy * (1.0 - fx);
            let w11 = fy * fx;
            let mut gy = 0.0;
            let mut gx = 0.0;
            for ch in 0..c {
                let base = ch * plane;
                let g = dyd[base + pix];
                if g == 0.0 {
                    continue;
                }
                let v00 = img[base + y0 * w + x0];
                let v01 = img[base + y0 * w + x1];
                let v10 = img[base + y1 * w + x0];
                let v11 = img[base + y1 * w + x1];
                let di = &mut dimg.data_mut()[n * c * plane..(n + 1) * c * plane];
                di[base + y0 * w + x0] += w00 * g;
                di[base + y0 * w + x1] += w01 * g;
                di[base + y1 * w + x0] += w10 * g;
                di[base + y1 * w + x1] += w11 * g;
                gy += g * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01));
                gx += g * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10));
            }
            let dc = &mut dcrd.data_mut()[n * 2 * plane..(n + 1) * 2 * plane];
            if !sat_y {
                dc[pix] += gy;
            }
            if !sat_x {
                dc[plane + pix] += gx;
            }
        }
    }
    (dimg, dcrd)
}

/// 1-D correlation with `weights` along `axis`, border handled by replication.
/// `weights.len()` must be odd; the kernel is centered.
pub(crate) fn smooth_axis(x: &Tensor, axis: usize, weights: &[f64]) -> Tensor {
    let shape = x.shape();
    let len = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let r = (weights.len() - 1) / 2;
    let mut out = Tensor::zeros(shape.to_vec());
    let xd = x.data();
    let od = out.data_mut();
    for o in 0..outer {
        let ob = o * len * inner;
        for i in 0..len {
            let dst = ob + i * inner;
            for (k, &wv) in weights.iter().enumerate() {
                let src = (i + k).saturating_sub(r).min(len - 1);
                let sb = ob + src * inner;
                for j in 0..inner {
                    od[dst + j] += wv * xd[sb + j];
                }
            }
        }
    }
    out
}

/// Exact adjoint of [`smooth_axis`] (same clamped index map, scatter instead
/// of gather).
pub(crate) fn smooth_axis_adjoint(dy: &Tensor, axis: usize, weights: &[f64]) -> Tensor {
    let shape = dy.shape();
    let len = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let r = (weights.len() - 1) / 2;
    let mut dx = Tensor::zeros(shape.to_vec());
    let dyd = dy.data();
    let dxd = dx.data_mut();
    for o in 0..outer {
        let ob = o * len * inner;
        for i in 0..len {
            let src = ob + i * inner;
            for (k, &wv) in weights.iter().enumerate() {
                let dst_i = (i + k).saturating_sub(r).min(len - 1);
                let db = ob + dst_i * inner;
                for j in 0..inner {
                    dxd[db + j] += wv * dyd[src + j];
                }
            }
        }
    }
    dx
}
