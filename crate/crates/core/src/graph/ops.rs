//! Primitive layers with hand-written reverse-mode gradients.
//!
//! Filters are stored `[k, k, c_in, c_out]` row-major, biases `[c_out]`.
//! Convolutions use zero "same" padding of `k / 2`.

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::par;

/// Borrowed view of one convolution's parameters.
#[derive(Clone, Copy, Debug)]
pub struct ConvParams<'a> {
    pub weight: &'a [f64],
    pub bias: &'a [f64],
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl<'a> ConvParams<'a> {
    pub fn new(weight: &'a [f64], bias: &'a [f64], kernel: usize, c_in: usize, c_out: usize) -> Result<Self> {
        if weight.len() != kernel * kernel * c_in * c_out {
            return Err(Error::shape("conv weight", kernel * kernel * c_in * c_out, weight.len()));
        }
        if bias.len() != c_out {
            return Err(Error::shape("conv bias", c_out, bias.len()));
        }
        Ok(ConvParams {
            weight,
            bias,
            kernel,
            c_in,
            c_out,
        })
    }

    #[inline]
    fn w(&self, ky: usize, kx: usize, ci: usize, co: usize) -> f64 {
        self.weight[((ky * self.kernel + kx) * self.c_in + ci) * self.c_out + co]
    }

    fn check_input(&self, x: &ImagePlane, context: &'static str) -> Result<()> {
        if x.channels() != self.c_in {
            return Err(Error::shape(context, self.c_in, x.channels()));
        }
        Ok(())
    }
}

/// Parameter gradients of one convolution, laid out like [`ConvParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

fn scatter_weight_grads(per_out: Vec<Vec<f64>>, p: &ConvParams) -> Vec<f64> {
    // per_out[co] is laid out [k, k, c_in].
    let mut dw = vec![0.0; p.weight.len()];
    for (co, g) in per_out.into_iter().enumerate() {
        for (i, v) in g.into_iter().enumerate() {
            dw[i * p.c_out + co] = v;
        }
    }
    dw
}

/// Valid output range for a 1-D tap: indices `o` with `0 <= o*stride + off < n`.
#[inline]
fn tap_range(out_len: usize, stride: usize, off: isize, n: usize) -> std::ops::Range<usize> {
    let s = stride as isize;
    let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
    let hi = ((n as isize - off + s - 1) / s).clamp(0, out_len as isize);
    (lo.max(0) as usize).min(hi as usize)..hi as usize
}

/// 2-D convolution (cross-correlation) with zero padding; output is
/// `ceil(h / stride) × ceil(w / stride)`.
pub fn conv2d(x: &ImagePlane, p: &ConvParams, stride: usize) -> Result<ImagePlane> {
    p.check_input(x, "conv2d input channels")?;
    let stride = stride.max(1);
    let (h, w, _) = x.shape();
    let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
    let pad = (p.kernel / 2) as isize;
    let mut out = ImagePlane::zeros(oh, ow, p.c_out);
    par::for_each_chunk_mut(out.as_mut_slice(), oh * ow, |co, dst| {
        dst.iter_mut().for_each(|v| *v = p.bias[co]);
        for ci in 0..p.c_in {
            let src = x.plane(ci);
            for ky in 0..p.kernel {
                let offy = ky as isize - pad;
                let ys = tap_range(oh, stride, offy, h);
                for kx in 0..p.kernel {
                    let wv = p.w(ky, kx, ci, co);
                    if wv == 0.0 {
                        continue;
                    }
                    let offx = kx as isize - pad;
                    let xs = tap_range(ow, stride, offx, w);
                    if xs.is_empty() {
                        continue;
                    }
                    for oy in ys.clone() {
                        let iy = (oy * stride) as isize + offy;
                        let row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let start = (xs.start as isize + offx) as usize;
                            let len = xs.len();
                            for (d, s) in drow[xs.clone()].iter_mut().zip(&row[start..start + len]) {
                                *d += wv * s;
                            }
                        } else {
                            for ox in xs.clone() {
                                drow[ox] += wv * row[((ox * stride) as isize + offx) as usize];
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of [`conv2d`] given the forward input and output gradient.
pub fn conv2d_backward(
    x: &ImagePlane,
    p: &ConvParams,
    stride: usize,
    dy: &ImagePlane,
) -> Result<(ImagePlane, ConvGrads)> {
    p.check_input(x, "conv2d_backward input channels")?;
    let stride = stride.max(1);
    let (h, w, _) = x.shape();
    let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
    if dy.shape() != (oh, ow, p.c_out) {
        return Err(Error::shape("conv2d_backward grad", (oh, ow, p.c_out), dy.shape()));
    }
    let pad = (p.kernel / 2) as isize;
    let k = p.kernel;

    let mut dx = ImagePlane::zeros(h, w, p.c_in);
    par::for_each_chunk_mut(dx.as_mut_slice(), h * w, |ci, dst| {
        for co in 0..p.c_out {
            let g = dy.plane(co);
            for ky in 0..k {
                let offy = ky as isize - pad;
                let ys = tap_range(oh, stride, offy, h);
                for kx in 0..k {
                    let wv = p.w(ky, kx, ci, co);
                    if wv == 0.0 {
                        continue;
                    }
                    let offx = kx as isize - pad;
                    let xs = tap_range(ow, stride, offx, w);
                    for oy in ys.clone() {
                        let iy = ((oy * stride) as isize + offy) as usize;
                        for ox in xs.clone() {
                            let ix = ((ox * stride) as isize + offx) as usize;
                            dst[iy * w + ix] += wv * g[oy * ow + ox];
                        }
                    }
                }
            }
        }
    });

    let per_out = par::map_range(p.c_out, |co| {
        let g = dy.plane(co);
        let mut acc = vec![0.0; k * k * p.c_in];
        for ky in 0..k {
            let offy = ky as isize - pad;
            let ys = tap_range(oh, stride, offy, h);
            for kx in 0..k {
                let offx = kx as isize - pad;
                let xs = tap_range(ow, stride, offx, w);
                for ci in 0..p.c_in {
                    let src = x.plane(ci);
                    let mut s = 0.0;
                    for oy in ys.clone() {
                        let iy = ((oy * stride) as isize + offy) as usize;
                        for ox in xs.clone() {
                            let ix = ((ox * stride) as isize + offx) as usize;
                            s += g[oy * ow + ox] * src[iy * w + ix];
                        }
                    }
                    acc[(ky * k + kx) * p.c_in + ci] = s;
                }
            }
        }
        acc
    });
    let bias = (0..p.c_out).map(|co| dy.plane(co).iter().sum()).collect();
    let weight = scatter_weight_grads(per_out, p);
    Ok((dx, ConvGrads { weight, bias }))
}

/// Stride-2 transposed convolution producing a `2h × 2w` map.
///
/// Input sample `(iy, ix)` spreads to outputs `(2 iy + ky - k/2, 2 ix + kx - k/2)`.
pub fn deconv2x(x: &ImagePlane, p: &ConvParams) -> Result<ImagePlane> {
    p.check_input(x, "deconv2x input channels")?;
    let (h, w, _) = x.shape();
    let (oh, ow) = (2 * h, 2 * w);
    let pad = (p.kernel / 2) as isize;
    let mut out = ImagePlane::zeros(oh, ow, p.c_out);
    par::for_each_chunk_mut(out.as_mut_slice(), oh * ow, |co, dst| {
        dst.iter_mut().for_each(|v| *v = p.bias[co]);
        for ci in 0..p.c_in {
            let src = x.plane(ci);
            for ky in 0..p.kernel {
                for kx in 0..p.kernel {
                    let wv = p.w(ky, kx, ci, co);
                    if wv == 0.0 {
                        continue;
                    }
                    for iy in 0..h {
                        let oy = (2 * iy) as isize + ky as isize - pad;
                        if oy < 0 || oy >= oh as isize {
                            continue;
                        }
                        for ix in 0..w {
                            let ox = (2 * ix) as isize + kx as isize - pad;
                            if ox < 0 || ox >= ow as isize {
                                continue;
                            }
                            dst[oy as usize * ow + ox as usize] += wv * src[iy * w + ix];
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

pub fn deconv2x_backward(x: &ImagePlane, p: &ConvParams, dy: &ImagePlane) -> Result<(ImagePlane, ConvGrads)> {
    p.check_input(x, "deconv2x_backward input channels")?;
    let (h, w, _) = x.shape();
    let (oh, ow) = (2 * h, 2 * w);
    if dy.shape() != (oh, ow, p.c_out) {
        return Err(Error::shape("deconv2x_backward grad", (oh, ow, p.c_out), dy.shape()));
    }
    let pad = (p.kernel / 2) as isize;
    let k = p.kernel;
    let out_index = |iy: usize, ix: usize, ky: usize, kx: usize| -> Option<usize> {
        let oy = (2 * iy) as isize + ky as isize - pad;
        let ox = (2 * ix) as isize + kx as isize - pad;
        (oy >= 0 && oy < oh as isize && ox >= 0 && ox < ow as isize).then(|| oy as usize * ow + ox as usize)
    };

    let mut dx = ImagePlane::zeros(h, w, p.c_in);
    par::for_each_chunk_mut(dx.as_mut_slice(), h * w, |ci, dst| {
        for co in 0..p.c_out {
            let g = dy.plane(co);
            for ky in 0..k {
                for kx in 0..k {
                    let wv = p.w(ky, kx, ci, co);
                    if wv == 0.0 {
                        continue;
                    }
                    for iy in 0..h {
                        for ix in 0..w {
                            if let Some(o) = out_index(iy, ix, ky, kx) {
                                dst[iy * w + ix] += wv * g[o];
                            }
                        }
                    }
                }
            }
        }
    });

    let per_out = par::map_range(p.c_out, |co| {
        let g = dy.plane(co);
        let mut acc = vec![0.0; k * k * p.c_in];
        for ky in 0..k {
            for kx in 0..k {
                for ci in 0..p.c_in {
                    let src = x.plane(ci);
                    let mut s = 0.0;
                    for iy in 0..h {
                        for ix in 0..w {
                            if let Some(o) = out_index(iy, ix, ky, kx) {
                                s += g[o] * src[iy * w + ix];
                            }
                        }
                    }
                    acc[(ky * k + kx) * p.c_in + ci] = s;
                }
            }
        }
        acc
    });
    let bias = (0..p.c_out).map(|co| dy.plane(co).iter().sum()).collect();
    let weight = scatter_weight_grads(per_out, p);
    Ok((dx, ConvGrads { weight, bias }))
}

/// 2×2 max pooling with stride 2. Odd trailing rows/columns pool over the
/// samples that exist. Returns the pooled map and the flat argmax of each
/// output (first maximum in scan order wins ties).
pub fn maxpool2x(x: &ImagePlane) -> (ImagePlane, Vec<usize>) {
    let (h, w, ch) = x.shape();
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = ImagePlane::zeros(oh, ow, ch);
    let mut argmax = vec![0usize; oh * ow * ch];
    for c in 0..ch {
        let src = x.plane(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for iy in 2 * oy..(2 * oy + 2).min(h) {
                    for ix in 2 * ox..(2 * ox + 2).min(w) {
                        let v = src[iy * w + ix];
                        if v > best {
                            best = v;
                            best_i = c * h * w + iy * w + ix;
                        }
                    }
                }
                let o = (c * oh + oy) * ow + ox;
                out.as_mut_slice()[o] = best;
                argmax[o] = best_i;
            }
        }
    }
    (out, argmax)
}

/// Routes each output gradient to its argmax input.
pub fn maxpool2x_backward(input_shape: (usize, usize, usize), argmax: &[usize], dy: &ImagePlane) -> ImagePlane {
    let (h, w, ch) = input_shape;
    let mut dx = ImagePlane::zeros(h, w, ch);
    let d = dx.as_mut_slice();
    for (&i, &g) in argmax.iter().zip(dy.as_slice()) {
        d[i] += g;
    }
    dx
}

#[inline]
pub fn lrelu_scalar(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

pub fn lrelu(x: &ImagePlane, slope: f64) -> ImagePlane {
    x.map(|v| lrelu_scalar(v, slope))
}

/// Gradient of [`lrelu`] given its pre-activation input.
pub fn lrelu_backward(x: &ImagePlane, slope: f64, dy: &ImagePlane) -> ImagePlane {
    x.zip_map(dy, |v, g| if v > 0.0 { g } else { slope * g })
}
