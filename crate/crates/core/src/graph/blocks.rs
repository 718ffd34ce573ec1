//! Composite blocks of the network. Each forward returns its output plus a
//! cache; the matching backward consumes the cache, accumulates parameter
//! gradients into a [`GraphWeights`] and returns the input gradient.

use crate::error::{Error, Result};
use crate::graph::ops::{self, ConvParams};
use crate::graph::weights::GraphWeights;
use crate::image::ImagePlane;
use crate::pyramid::{upsample_to, upsample_to_adjoint};

fn conv_params<'a>(w: &'a GraphWeights, name: &str) -> Result<ConvParams<'a>> {
    let wn = format!("{name}.w");
    let bn = format!("{name}.b");
    let weight = w.get(&wn).ok_or_else(|| Error::MissingWeight(wn.clone()))?;
    let bias = w.get(&bn).ok_or_else(|| Error::MissingWeight(bn.clone()))?;
    match weight.shape[..] {
        [k, k2, c_in, c_out] if k == k2 => ConvParams::new(&weight.data, &bias.data, k, c_in, c_out),
        _ => Err(Error::WeightShape {
            name: wn,
            expected: vec![0, 0, 0, 0],
            actual: weight.shape.clone(),
        }),
    }
}

pub(crate) fn conv(w: &GraphWeights, name: &str, x: &ImagePlane, stride: usize) -> Result<ImagePlane> {
    ops::conv2d(x, &conv_params(w, name)?, stride)
}

pub(crate) fn conv_backward(
    w: &GraphWeights,
    name: &str,
    x: &ImagePlane,
    stride: usize,
    dy: &ImagePlane,
    grads: &mut GraphWeights,
) -> Result<ImagePlane> {
    let p = conv_params(w, name)?;
    let (dx, g) = ops::conv2d_backward(x, &p, stride, dy)?;
    grads.accumulate(format!("{name}.w"), vec![p.kernel, p.kernel, p.c_in, p.c_out], &g.weight);
    grads.accumulate(format!("{name}.b"), vec![p.c_out], &g.bias);
    Ok(dx)
}

fn deconv(w: &GraphWeights, name: &str, x: &ImagePlane) -> Result<ImagePlane> {
    ops::deconv2x(x, &conv_params(w, name)?)
}

fn deconv_backward(
    w: &GraphWeights,
    name: &str,
    x: &ImagePlane,
    dy: &ImagePlane,
    grads: &mut GraphWeights,
) -> Result<ImagePlane> {
    let p = conv_params(w, name)?;
    let (dx, g) = ops::deconv2x_backward(x, &p, dy)?;
    grads.accumulate(format!("{name}.w"), vec![p.kernel, p.kernel, p.c_in, p.c_out], &g.weight);
    grads.accumulate(format!("{name}.b"), vec![p.c_out], &g.bias);
    Ok(dx)
}

fn add(a: &ImagePlane, b: &ImagePlane) -> ImagePlane {
    a.zip_map(b, |p, q| p + q)
}

#[derive(Clone, Debug)]
pub struct ResBlockCache {
    input: ImagePlane,
    pre: ImagePlane,
    hidden: ImagePlane,
}

/// `u + conv2(lrelu(conv1(u)))`.
pub fn res_block(w: &GraphWeights, prefix: &str, u: &ImagePlane, slope: f64) -> Result<(ImagePlane, ResBlockCache)> {
    let pre = conv(w, &format!("{prefix}.conv1"), u, 1)?;
    let hidden = ops::lrelu(&pre, slope);
    let r = conv(w, &format!("{prefix}.conv2"), &hidden, 1)?;
    let out = add(u, &r);
    Ok((
        out,
        ResBlockCache {
            input: u.clone(),
            pre,
            hidden,
        },
    ))
}

pub fn res_block_backward(
    w: &GraphWeights,
    prefix: &str,
    cache: &ResBlockCache,
    slope: f64,
    dy: &ImagePlane,
    grads: &mut GraphWeights,
) -> Result<ImagePlane> {
    let dh = conv_backward(w, &format!("{prefix}.conv2"), &cache.hidden, 1, dy, grads)?;
    let dpre = ops::lrelu_backward(&cache.pre, slope, &dh);
    let du = conv_backward(w, &format!("{prefix}.conv1"), &cache.input, 1, &dpre, grads)?;
    Ok(add(dy, &du))
}

#[derive(Clone, Debug)]
pub struct RirCache {
    rb1: ResBlockCache,
    rb2: ResBlockCache,
    tail_in: ImagePlane,
}

/// Residual-in-residual block: two residual blocks and a tail convolution
/// inside an outer skip, `x + tail(rb2(rb1(x)))`. All-zero weights give the
/// identity.
pub fn res_in_res_block(w: &GraphWeights, prefix: &str, x: &ImagePlane, slope: f64) -> Result<(ImagePlane, RirCache)> {
    let (a, rb1) = res_block(w, &format!("{prefix}.rb1"), x, slope)?;
    let (b, rb2) = res_block(w, &format!("{prefix}.rb2"), &a, slope)?;
    let t = conv(w, &format!("{prefix}.tail"), &b, 1)?;
    Ok((add(x, &t), RirCache { rb1, rb2, tail_in: b }))
}

pub fn res_in_res_backward(
    w: &GraphWeights,
    prefix: &str,
    cache: &RirCache,
    slope: f64,
    dy: &ImagePlane,
    grads: &mut GraphWeights,
) -> Result<ImagePlane> {
    let db = conv_backward(w, &format!("{prefix}.tail"), &cache.tail_in, 1, dy, grads)?;
    let da = res_block_backward(w, &format!("{prefix}.rb2"), &cache.rb2, slope, &db, grads)?;
    let dx = res_block_backward(w, &format!("{prefix}.rb1"), &cache.rb1, slope, &da, grads)?;
    Ok(add(dy, &dx))
}

/// Parallel `k × k` convolutions for each kernel size, concatenated along
/// channels in the order given.
pub fn inception_module(w: &GraphWeights, prefix: &str, kernels: &[usize], x: &ImagePlane) -> Result<ImagePlane> {
    let branches = kernels
        .iter()
        .map(|k| conv(w, &format!("{prefix}.k{k}"), x, 1))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&ImagePlane> = branches.iter().collect();
    ImagePlane::concat_channels(&refs)
}

pub fn inception_backward(
    w: &GraphWeights,
    prefix: &str,
    kernels: &[usize],
    x: &ImagePlane,
    dy: &ImagePlane,
    grads: &mut GraphWeights,
) -> Result<ImagePlane> {
    let sizes = kernels
        .iter()
        .map(|k| conv_params(w, &format!("{prefix}.k{k}")).map(|p| p.c_out))
        .collect::<Result<Vec<_>>>()?;
    if sizes.iter().sum::<usize>() != dy.channels() {
        return Err(Error::shape("inception_backward", sizes.iter().sum::<usize>(), dy.channels()));
    }
    let mut dx = ImagePlane::zeros(x.height(), x.width(), x.channels());
    for (k, g) in kernels.iter().zip(dy.split_channels(&sizes)) {
        dx.add_assign(&conv_backward(w, &format!("{prefix}.k{k}"), x, 1, &g, grads)?);
    }
    Ok(dx)
}

/// Hyperparameters the deblurring and upsampling subnets need at run time.
#[derive(Clone, Debug)]
pub struct SubnetShape {
    pub encoder_stages: usize,
    pub inception_kernels: Vec<usize>,
    pub slope: f64,
}

#[derive(Clone, Debug)]
struct EncoderStage {
    pool: Option<((usize, usize, usize), Vec<usize>)>,
    conv_in: ImagePlane,
    pre: ImagePlane,
    rir: RirCache,
}

#[derive(Clone, Debug)]
struct DecoderStage {
    level: usize,
    up_in: ImagePlane,
    pre: ImagePlane,
    rir: RirCache,
}

#[derive(Clone, Debug)]
pub struct DeblurCache {
    dims: (usize, usize),
    padded_dims: (usize, usize),
    encoder: Vec<EncoderStage>,
    inception_in: ImagePlane,
    decoder: Vec<DecoderStage>,
    out_in: ImagePlane,
}

/// Encoder–inception–decoder with a global residual: `y = x + net(x)`.
///
/// The input is reflect-padded to a multiple of `2^stages` and the residual is
/// cropped back, so any size works.
pub fn deblur_subnet(w: &GraphWeights, shape: &SubnetShape, x: &ImagePlane) -> Result<(ImagePlane, DeblurCache)> {
    let m = 1usize << shape.encoder_stages;
    let (h, wd) = x.dims();
    let padded_dims = (h.next_multiple_of(m), wd.next_multiple_of(m));
    let mut cur = x.pad_reflect(padded_dims.0, padded_dims.1);
    let slope = shape.slope;

    let mut encoder = Vec::with_capacity(shape.encoder_stages + 1);
    let mut skips = Vec::with_capacity(shape.encoder_stages + 1);
    for s in 0..=shape.encoder_stages {
        let pool = if s > 0 {
            let in_shape = cur.shape();
            let (p, arg) = ops::maxpool2x(&cur);
            cur = p;
            Some((in_shape, arg))
        } else {
            None
        };
        let pre = conv(w, &format!("deblur.enc{s}.conv"), &cur, 1)?;
        let act = ops::lrelu(&pre, slope);
        let (e, rir) = res_in_res_block(w, &format!("deblur.enc{s}.rir"), &act, slope)?;
        encoder.push(EncoderStage {
            pool,
            conv_in: cur,
            pre,
            rir,
        });
        skips.push(e.clone());
        cur = e;
    }

    let inception_in = cur;
    cur = inception_module(w, "deblur.inception", &shape.inception_kernels, &inception_in)?;

    let mut decoder = Vec::with_capacity(shape.encoder_stages);
    for s in (0..shape.encoder_stages).rev() {
        let pre = deconv(w, &format!("deblur.dec{s}.up"), &cur)?;
        let act = add(&ops::lrelu(&pre, slope), &skips[s]);
        let (d, rir) = res_in_res_block(w, &format!("deblur.dec{s}.rir"), &act, slope)?;
        decoder.push(DecoderStage {
            level: s,
            up_in: cur,
            pre,
            rir,
        });
        cur = d;
    }

    let residual = conv(w, "deblur.out", &cur, 1)?;
    let mut y = x.clone();
    for c in 0..y.channels() {
        for yy in 0..h {
            for xx in 0..wd {
                *y.at_mut(c, yy, xx) += residual.get(c, yy, xx);
            }
        }
    }
    Ok((
        y,
        DeblurCache {
            dims: (h, wd),
            padded_dims,
            encoder,
            inception_in,
            decoder,
            out_in: cur,
        },
    ))
}

pub fn deblur_subnet_backward(
    w: &GraphWeights,
    shape: &SubnetShape,
    cache: &DeblurCache,
    dy: &ImagePlane,
    grads: &mut GraphWeights,
) -> Result<ImagePlane> {
    let (h, wd) = cache.dims;
    let (ph, pw) = cache.padded_dims;
    let slope = shape.slope;
    let ch = dy.channels();

    let mut dres = ImagePlane::zeros(ph, pw, ch);
    for c in 0..ch {
        for yy in 0..h {
            for xx in 0..wd {
                dres.set(c, yy, xx, dy.get(c, yy, xx));
            }
        }
    }
    let mut dcur = conv_backward(w, "deblur.out", &cache.out_in, 1, &dres, grads)?;

    let mut dskip: Vec<Option<ImagePlane>> = vec![None; shape.encoder_stages + 1];
    for stage in cache.decoder.iter().rev() {
        let s = stage.level;
        let dact = res_in_res_backward(w, &format!("deblur.dec{s}.rir"), &stage.rir, slope, &dcur, grads)?;
        let dpre = ops::lrelu_backward(&stage.pre, slope, &dact);
        dskip[s] = Some(dact);
        dcur = deconv_backward(w, &format!("deblur.dec{s}.up"), &stage.up_in, &dpre, grads)?;
    }

    dcur = inception_backward(
        w,
        "deblur.inception",
        &shape.inception_kernels,
        &cache.inception_in,
        &dcur,
        grads,
    )?;

    for (s, stage) in cache.encoder.iter().enumerate().rev() {
        if let Some(g) = dskip[s].take() {
            dcur.add_assign(&g);
        }
        let dact = res_in_res_backward(w, &format!("deblur.enc{s}.rir"), &stage.rir, slope, &dcur, grads)?;
        let dpre = ops::lrelu_backward(&stage.pre, slope, &dact);
        let dconv_in = conv_backward(w, &format!("deblur.enc{s}.conv"), &stage.conv_in, 1, &dpre, grads)?;
        dcur = match &stage.pool {
            Some((in_shape, arg)) => ops::maxpool2x_backward(*in_shape, arg, &dconv_in),
            None => dconv_in,
        };
    }

    let mut dx = dcur.unpad_reflect_adjoint(h, wd);
    dx.add_assign(dy);
    Ok(dx)
}

#[derive(Clone, Debug)]
pub struct UpsampleCache {
    latent_dims: (usize, usize),
    image_channels: usize,
    head_in: ImagePlane,
    head_pre: ImagePlane,
    rirs: Vec<RirCache>,
    proj_in: ImagePlane,
}

pub const UPSAMPLE_RIR_BLOCKS: usize = 3;

/// Enlarges the coarser latent image `y` to the dims of `b`, fuses it with `b`
/// through three residual-in-residual blocks, and adds the result onto `b`.
pub fn upsample_subnet(
    w: &GraphWeights,
    slope: f64,
    y: &ImagePlane,
    b: &ImagePlane,
) -> Result<(ImagePlane, UpsampleCache)> {
    if y.channels() != b.channels() {
        return Err(Error::shape("upsample_subnet channels", b.channels(), y.channels()));
    }
    let up = upsample_to(y, b.dims())?;
    let head_in = ImagePlane::concat_channels(&[&up, b])?;
    let head_pre = conv(w, "upsample.head", &head_in, 1)?;
    let mut cur = ops::lrelu(&head_pre, slope);
    let mut rirs = Vec::with_capacity(UPSAMPLE_RIR_BLOCKS);
    for r in 1..=UPSAMPLE_RIR_BLOCKS {
        let (next, cache) = res_in_res_block(w, &format!("upsample.rir{r}"), &cur, slope)?;
        rirs.push(cache);
        cur = next;
    }
    let proj = conv(w, "upsample.proj", &cur, 1)?;
    Ok((
        add(b, &proj),
        UpsampleCache {
            latent_dims: y.dims(),
            image_channels: b.channels(),
            head_in,
            head_pre,
            rirs,
            proj_in: cur,
        },
    ))
}

/// Returns `(d_latent, d_blurred)`.
pub fn upsample_subnet_backward(
    w: &GraphWeights,
    slope: f64,
    cache: &UpsampleCache,
    dx: &ImagePlane,
    grads: &mut GraphWeights,
) -> Result<(ImagePlane, ImagePlane)> {
    let mut dcur = conv_backward(w, "upsample.proj", &cache.proj_in, 1, dx, grads)?;
    for (r, rc) in cache.rirs.iter().enumerate().rev() {
        dcur = res_in_res_backward(w, &format!("upsample.rir{}", r + 1), rc, slope, &dcur, grads)?;
    }
    let dpre = ops::lrelu_backward(&cache.head_pre, slope, &dcur);
    let dhead = conv_backward(w, "upsample.head", &cache.head_in, 1, &dpre, grads)?;
    let parts = dhead.split_channels(&[cache.image_channels, cache.image_channels]);
    let dlatent = upsample_to_adjoint(&parts[0], cache.latent_dims)?;
    let db = add(dx, &parts[1]);
    Ok((dlatent, db))
}
