//! Training losses: multiscale fidelity, salient-edge (ringing) loss, and
//! the perceptual + total-variation detail loss, each with its gradient.
//!
//! Norms are per-element means rather than raw sums so the default weights
//! carry across resolutions. The edge detector and feature extractor are
//! traits; [`ReferenceEdgeDetector`] and [`ReferenceFeatures`] are
//! deterministic stand-ins that need no external weights.

use crate::error::{Error, Result};
use crate::graph::ops::{self, ConvParams};
use crate::image::ImagePlane;
use crate::pyramid::{separable_filter, separable_filter_adjoint, BINOMIAL5};
use crate::seed::rng_from_seed;

/// Loss weights. Defaults: `sed = 2.4`, `perceptual = 3e-6`, `tv = 0.8`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// `w_s`, scales the salient-edge loss.
    pub sed: f64,
    /// `w_p`, scales the feature distance.
    pub perceptual: f64,
    /// `w_t`, scales the total-variation term.
    pub tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            sed: 2.4,
            perceptual: 3e-6,
            tv: 0.8,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.sed, self.perceptual, self.tv].iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be non-negative: {self:?}")))
        }
    }
}

/// Maps an image to a single-channel salient-edge map in `[0, 1]`.
pub trait EdgeDetector: Send + Sync {
    fn detect(&self, img: &ImagePlane) -> Result<ImagePlane>;

    /// Vector–Jacobian product of [`detect`](Self::detect) at `img`.
    fn backward(&self, img: &ImagePlane, grad: &ImagePlane) -> Result<ImagePlane>;
}

/// Maps an image to a list of feature maps.
pub trait FeatureExtractor: Send + Sync {
    fn features(&self, img: &ImagePlane) -> Result<Vec<ImagePlane>>;

    /// Vector–Jacobian product of [`features`](Self::features) at `img`, one
    /// gradient per feature map.
    fn backward(&self, img: &ImagePlane, grads: &[ImagePlane]) -> Result<ImagePlane>;
}

fn check_levels(outputs: &[ImagePlane], truths: &[ImagePlane], context: &'static str) -> Result<()> {
    if outputs.len() != truths.len() || outputs.is_empty() {
        return Err(Error::shape(context, truths.len(), outputs.len()));
    }
    for (y, g) in outputs.iter().zip(truths) {
        y.check_same_shape(g, context)?;
    }
    Ok(())
}

fn mean_abs_diff(a: &ImagePlane, b: &ImagePlane) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(1/N) Σ_i mean|y_i − g_i|` over the pyramid levels.
pub fn fidelity_loss(outputs: &[ImagePlane], truths: &[ImagePlane]) -> Result<f64> {
    check_levels(outputs, truths, "fidelity_loss")?;
    let n = outputs.len() as f64;
    Ok(outputs.iter().zip(truths).map(|(y, g)| mean_abs_diff(y, g)).sum::<f64>() / n)
}

pub fn fidelity_grad(outputs: &[ImagePlane], truths: &[ImagePlane]) -> Result<Vec<ImagePlane>> {
    check_levels(outputs, truths, "fidelity_grad")?;
    let n = outputs.len() as f64;
    Ok(outputs
        .iter()
        .zip(truths)
        .map(|(y, g)| {
            let k = 1.0 / (n * y.len() as f64);
            y.zip_map(g, |a, b| k * sign(a - b))
        })
        .collect())
}

/// `w_s · mean|SED(y) − SED(g)|`, evaluated at full resolution only.
pub fn sed_loss(y: &ImagePlane, g: &ImagePlane, detector: &dyn EdgeDetector, w_s: f64) -> Result<f64> {
    y.check_same_shape(g, "sed_loss")?;
    if w_s == 0.0 {
        return Ok(0.0);
    }
    let ey = detector.detect(y)?;
    let eg = detector.detect(g)?;
    ey.check_same_shape(&eg, "sed_loss edge maps")?;
    Ok(w_s * mean_abs_diff(&ey, &eg))
}

pub fn sed_grad(y: &ImagePlane, g: &ImagePlane, detector: &dyn EdgeDetector, w_s: f64) -> Result<ImagePlane> {
    y.check_same_shape(g, "sed_grad")?;
    if w_s == 0.0 {
        return Ok(ImagePlane::zeros(y.height(), y.width(), y.channels()));
    }
    let ey = detector.detect(y)?;
    let eg = detector.detect(g)?;
    let k = w_s / ey.len() as f64;
    let upstream = ey.zip_map(&eg, |a, b| k * sign(a - b));
    detector.backward(y, &upstream)
}

/// `Σ (Δx)² + (Δy)²` with forward differences over every channel; the
/// difference past the last row or column is zero.
pub fn total_variation(img: &ImagePlane) -> f64 {
    let (h, w, ch) = img.shape();
    let mut s = 0.0;
    for c in 0..ch {
        let p = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                let v = p[y * w + x];
                if x + 1 < w {
                    s += (p[y * w + x + 1] - v).powi(2);
                }
                if y + 1 < h {
                    s += (p[(y + 1) * w + x] - v).powi(2);
                }
            }
        }
    }
    s
}

pub fn total_variation_grad(img: &ImagePlane) -> ImagePlane {
    let (h, w, ch) = img.shape();
    let mut g = ImagePlane::zeros(h, w, ch);
    for c in 0..ch {
        for y in 0..h {
            for x in 0..w {
                let v = img.get(c, y, x);
                if x + 1 < w {
                    let d = 2.0 * (img.get(c, y, x + 1) - v);
                    *g.at_mut(c, y, x + 1) += d;
                    *g.at_mut(c, y, x) -= d;
                }
                if y + 1 < h {
                    let d = 2.0 * (img.get(c, y + 1, x) - v);
                    *g.at_mut(c, y + 1, x) += d;
                    *g.at_mut(c, y, x) -= d;
                }
            }
        }
    }
    g
}

fn feature_pairs(
    y: &ImagePlane,
    g: &ImagePlane,
    fx: &dyn FeatureExtractor,
) -> Result<(Vec<ImagePlane>, Vec<ImagePlane>)> {
    let fy = fx.features(y)?;
    let fg = fx.features(g)?;
    if fy.len() != fg.len() {
        return Err(Error::shape("feature extractor output count", fg.len(), fy.len()));
    }
    for (a, b) in fy.iter().zip(&fg) {
        a.check_same_shape(b, "feature maps")?;
    }
    Ok((fy, fg))
}

/// `Σ_i ( w_p Σ_j mean(vgg_j(y_i) − vgg_j(g_i))² + w_t TV(y_i) / |y_i| )`.
pub fn perceptual_tv_loss(
    outputs: &[ImagePlane],
    truths: &[ImagePlane],
    fx: &dyn FeatureExtractor,
    w_p: f64,
    w_t: f64,
) -> Result<f64> {
    check_levels(outputs, truths, "perceptual_tv_loss")?;
    let mut total = 0.0;
    for (y, g) in outputs.iter().zip(truths) {
        if w_p != 0.0 {
            let (fy, fg) = feature_pairs(y, g, fx)?;
            let feat: f64 = fy
                .iter()
                .zip(&fg)
                .map(|(a, b)| {
                    a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64
                })
                .sum();
            total += w_p * feat;
        }
        if w_t != 0.0 {
            total += w_t * total_variation(y) / y.len() as f64;
        }
    }
    Ok(total)
}

pub fn perceptual_tv_grad(
    outputs: &[ImagePlane],
    truths: &[ImagePlane],
    fx: &dyn FeatureExtractor,
    w_p: f64,
    w_t: f64,
) -> Result<Vec<ImagePlane>> {
    check_levels(outputs, truths, "perceptual_tv_grad")?;
    outputs
        .iter()
        .zip(truths)
        .map(|(y, g)| {
            let mut grad = ImagePlane::zeros(y.height(), y.width(), y.channels());
            if w_p != 0.0 {
                let (fy, fg) = feature_pairs(y, g, fx)?;
                let upstream: Vec<ImagePlane> = fy
                    .iter()
                    .zip(&fg)
                    .map(|(a, b)| {
                        let k = 2.0 * w_p / a.len() as f64;
                        a.zip_map(b, |p, q| k * (p - q))
                    })
                    .collect();
                grad.add_assign(&fx.backward(y, &upstream)?);
            }
            if w_t != 0.0 {
                let mut tv = total_variation_grad(y);
                tv.scale(w_t / y.len() as f64);
                grad.add_assign(&tv);
            }
            Ok(grad)
        })
        .collect()
}

/// `L_f + L_s + L_v`.
pub fn total_loss(fidelity: f64, sed: f64, detail: f64) -> f64 {
    fidelity + sed + detail
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub fidelity: f64,
    pub sed: f64,
    pub detail: f64,
    pub total: f64,
}

/// The full training objective over output and ground-truth pyramids.
pub struct Objective<'a> {
    pub weights: LossWeights,
    pub detector: &'a dyn EdgeDetector,
    pub extractor: &'a dyn FeatureExtractor,
}

impl Objective<'_> {
    pub fn evaluate(&self, outputs: &[ImagePlane], truths: &[ImagePlane]) -> Result<LossBreakdown> {
        self.weights.validate()?;
        let fidelity = fidelity_loss(outputs, truths)?;
        let (y, g) = (outputs.last().expect("checked"), truths.last().expect("checked"));
        let sed = sed_loss(y, g, self.detector, self.weights.sed)?;
        let detail = perceptual_tv_loss(outputs, truths, self.extractor, self.weights.perceptual, self.weights.tv)?;
        Ok(LossBreakdown {
            fidelity,
            sed,
            detail,
            total: total_loss(fidelity, sed, detail),
        })
    }

    /// Gradient of the total loss with respect to every output level.
    pub fn gradient(&self, outputs: &[ImagePlane], truths: &[ImagePlane]) -> Result<Vec<ImagePlane>> {
        self.weights.validate()?;
        let mut grads = fidelity_grad(outputs, truths)?;
        let detail = perceptual_tv_grad(outputs, truths, self.extractor, self.weights.perceptual, self.weights.tv)?;
        for (g, d) in grads.iter_mut().zip(&detail) {
            g.add_assign(d);
        }
        let n = outputs.len();
        let sed = sed_grad(&outputs[n - 1], &truths[n - 1], self.detector, self.weights.sed)?;
        grads[n - 1].add_assign(&sed);
        Ok(grads)
    }
}

/// Floor added to the soft-threshold denominator.
const EDGE_FLOOR: f64 = 1e-8;

/// Deterministic salient-edge stand-in: luma, binomial smoothing, squared
/// forward-difference gradient magnitude `q`, then a soft threshold at the
/// 90th percentile `τ` of `q`, `s(q) = q / (q + τ + ε)`, normalized so the
/// strongest edge maps to 1. Flat images map to all zeros.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceEdgeDetector;

struct EdgeState {
    smooth: ImagePlane,
    q: Vec<f64>,
    tau: f64,
    tau_index: usize,
    max_index: usize,
}

impl ReferenceEdgeDetector {
    pub const PERCENTILE: f64 = 0.9;

    fn state(&self, img: &ImagePlane) -> EdgeState {
        let smooth = separable_filter(&img.luma(), &BINOMIAL5);
        let (h, w) = smooth.dims();
        let s = smooth.as_slice();
        let mut q = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let v = s[y * w + x];
                let gx = if x + 1 < w { s[y * w + x + 1] - v } else { 0.0 };
                let gy = if y + 1 < h { s[(y + 1) * w + x] - v } else { 0.0 };
                q[y * w + x] = gx * gx + gy * gy;
            }
        }
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by(|&a, &b| q[a].total_cmp(&q[b]).then(a.cmp(&b)));
        let rank = ((Self::PERCENTILE * q.len() as f64).ceil() as usize).clamp(1, q.len()) - 1;
        let tau_index = order[rank];
        let max_index = *order.last().expect("non-empty");
        EdgeState {
            tau: q[tau_index],
            smooth,
            q,
            tau_index,
            max_index,
        }
    }
}

impl EdgeDetector for ReferenceEdgeDetector {
    fn detect(&self, img: &ImagePlane) -> Result<ImagePlane> {
        let st = self.state(img);
        let (h, w) = st.smooth.dims();
        let qmax = st.q[st.max_index];
        if qmax == 0.0 {
            return Ok(ImagePlane::zeros(h, w, 1));
        }
        let soft = |q: f64| q / (q + st.tau + EDGE_FLOOR);
        let m = soft(qmax);
        ImagePlane::from_vec(h, w, 1, st.q.iter().map(|&q| soft(q) / m).collect())
    }

    fn backward(&self, img: &ImagePlane, grad: &ImagePlane) -> Result<ImagePlane> {
        let st = self.state(img);
        let (h, w) = st.smooth.dims();
        if grad.shape() != (h, w, 1) {
            return Err(Error::shape("edge detector backward", (h, w, 1), grad.shape()));
        }
        let qmax = st.q[st.max_index];
        if qmax == 0.0 {
            return Ok(ImagePlane::zeros(h, w, img.channels()));
        }
        let t = st.tau + EDGE_FLOOR;
        let dmax = qmax + t;
        let m = qmax / dmax;
        let mut gq = vec![0.0; h * w];
        let mut g_tau = 0.0;
        let mut g_m = 0.0;
        for ((&q, &g), gqp) in st.q.iter().zip(grad.as_slice()).zip(gq.iter_mut()) {
            let d = q + t;
            *gqp += g * t / (d * d) / m;
            g_tau -= g * q / (d * d) / m;
            g_m -= g * (q / d) / (m * m);
        }
        gq[st.max_index] += g_m * t / (dmax * dmax);
        g_tau -= g_m * qmax / (dmax * dmax);
        gq[st.tau_index] += g_tau;

        let s = st.smooth.as_slice();
        let mut gs = ImagePlane::zeros(h, w, 1);
        let gsm = gs.as_mut_slice();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let v = s[i];
                if x + 1 < w {
                    let d = 2.0 * (s[i + 1] - v) * gq[i];
                    gsm[i + 1] += d;
                    gsm[i] -= d;
                }
                if y + 1 < h {
                    let d = 2.0 * (s[i + w] - v) * gq[i];
                    gsm[i + w] += d;
                    gsm[i] -= d;
                }
            }
        }
        let gl = separable_filter_adjoint(&gs, &BINOMIAL5);
        Ok(ImagePlane::luma_adjoint(&gl, img.channels()))
    }
}

/// Two fixed random convolution layers with LReLU: a full-resolution
/// `3×3` layer and a stride-2 `3×3` layer, each returned as a feature map.
#[derive(Clone, Debug)]
pub struct ReferenceFeatures {
    image_channels: usize,
    widths: (usize, usize),
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    slope: f64,
}

impl ReferenceFeatures {
    pub fn new(image_channels: usize, seed: u64) -> Self {
        Self::with_widths(image_channels, 8, 16, seed)
    }

    pub fn with_widths(image_channels: usize, c1: usize, c2: usize, seed: u64) -> Self {
        use rand_distr::{Distribution, Normal};
        let mut rng = rng_from_seed(seed);
        let mut draw = |n: usize, fan_in: usize| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            (0..n).map(|_| normal.sample(&mut rng)).collect::<Vec<f64>>()
        };
        let w1 = draw(9 * image_channels * c1, 9 * image_channels);
        let b1 = draw(c1, 9 * image_channels).into_iter().map(|v| 0.1 * v).collect();
        let w2 = draw(9 * c1 * c2, 9 * c1);
        let b2 = draw(c2, 9 * c1).into_iter().map(|v| 0.1 * v).collect();
        ReferenceFeatures {
            image_channels,
            widths: (c1, c2),
            w1,
            b1,
            w2,
            b2,
            slope: 0.2,
        }
    }

    fn layer1(&self) -> ConvParams<'_> {
        ConvParams::new(&self.w1, &self.b1, 3, self.image_channels, self.widths.0).expect("consistent shapes")
    }

    fn layer2(&self) -> ConvParams<'_> {
        ConvParams::new(&self.w2, &self.b2, 3, self.widths.0, self.widths.1).expect("consistent shapes")
    }
}

impl FeatureExtractor for ReferenceFeatures {
    fn features(&self, img: &ImagePlane) -> Result<Vec<ImagePlane>> {
        let a1 = ops::conv2d(img, &self.layer1(), 1)?;
        let f1 = ops::lrelu(&a1, self.slope);
        let a2 = ops::conv2d(&f1, &self.layer2(), 2)?;
        let f2 = ops::lrelu(&a2, self.slope);
        Ok(vec![f1, f2])
    }

    fn backward(&self, img: &ImagePlane, grads: &[ImagePlane]) -> Result<ImagePlane> {
        if grads.len() != 2 {
            return Err(Error::shape("feature gradients", 2, grads.len()));
        }
        let a1 = ops::conv2d(img, &self.layer1(), 1)?;
        let f1 = ops::lrelu(&a1, self.slope);
        let a2 = ops::conv2d(&f1, &self.layer2(), 2)?;
        let da2 = ops::lrelu_backward(&a2, self.slope, &grads[1]);
        let (mut df1, _) = ops::conv2d_backward(&f1, &self.layer2(), 2, &da2)?;
        df1.add_assign(&grads[0]);
        let da1 = ops::lrelu_backward(&a1, self.slope, &df1);
        let (dx, _) = ops::conv2d_backward(img, &self.layer1(), 1, &da1)?;
        Ok(dx)
    }
}
