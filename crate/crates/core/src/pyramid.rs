//! Gaussian pyramids and the bilinear 2× upsampler that walks back up them.
//!
//! Level index 0 is the coarsest scale and the last level is the source image.
//! Each coarser level is the finer one smoothed by the binomial kernel
//! `[1, 4, 6, 4, 1] / 16` (reflect-101 borders) and decimated to the even
//! rows and columns, so a level is `ceil(finer / 2)` on each axis.

use crate::error::{Error, Result};
use crate::image::{reflect101, ImagePlane};
use crate::par;

pub const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Multiscale stack, coarsest first.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    levels: Vec<ImagePlane>,
}

impl Pyramid {
    pub fn from_levels(levels: Vec<ImagePlane>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("pyramid needs at least one level".into()));
        }
        Ok(Pyramid { levels })
    }

    pub fn levels(&self) -> &[ImagePlane] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<ImagePlane> {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> &ImagePlane {
        self.levels.last().expect("non-empty")
    }

    pub fn coarsest(&self) -> &ImagePlane {
        &self.levels[0]
    }
}

/// Dimensions of every level for an `(h, w)` source, coarsest first.
pub fn level_dims(h: usize, w: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .rev()
        .map(|k| (h.div_ceil(1 << k), w.div_ceil(1 << k)))
        .collect()
}

/// Separable 1-D filtering along both axes with reflect-101 borders.
pub fn separable_filter(img: &ImagePlane, taps: &[f64]) -> ImagePlane {
    let (h, w, ch) = img.shape();
    let r = (taps.len() / 2) as isize;
    let mut tmp = ImagePlane::zeros(h, w, ch);
    par::for_each_chunk_mut(tmp.as_mut_slice(), w, |row, dst| {
        let src = &img.plane(row / h)[(row % h) * w..(row % h + 1) * w];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[reflect101(x as isize + k as isize - r, w)])
                .sum();
        }
    });
    let mut out = ImagePlane::zeros(h, w, ch);
    par::for_each_chunk_mut(out.as_mut_slice(), w, |row, dst| {
        let c = row / h;
        let y = (row % h) as isize;
        let plane = tmp.plane(c);
        for (k, t) in taps.iter().enumerate() {
            let sy = reflect101(y + k as isize - r, h);
            let src = &plane[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += t * s;
            }
        }
    });
    out
}

/// Adjoint of [`separable_filter`] (transpose of the linear map).
pub fn separable_filter_adjoint(grad: &ImagePlane, taps: &[f64]) -> ImagePlane {
    let (h, w, ch) = grad.shape();
    let r = (taps.len() / 2) as isize;
    let mut tmp = ImagePlane::zeros(h, w, ch);
    for c in 0..ch {
        for y in 0..h {
            for (k, t) in taps.iter().enumerate() {
                let sy = reflect101(y as isize + k as isize - r, h);
                for x in 0..w {
                    *tmp.at_mut(c, sy, x) += t * grad.get(c, y, x);
                }
            }
        }
    }
    let mut out = ImagePlane::zeros(h, w, ch);
    for c in 0..ch {
        for y in 0..h {
            for x in 0..w {
                let g = tmp.get(c, y, x);
                for (k, t) in taps.iter().enumerate() {
                    let sx = reflect101(x as isize + k as isize - r, w);
                    *out.at_mut(c, y, sx) += t * g;
                }
            }
        }
    }
    out
}

/// One smooth-and-decimate step.
pub fn downsample(img: &ImagePlane) -> ImagePlane {
    let smooth = separable_filter(img, &BINOMIAL5);
    let (h, w, ch) = img.shape();
    ImagePlane::from_fn(h.div_ceil(2), w.div_ceil(2), ch, |c, y, x| smooth.get(c, 2 * y, 2 * x))
}

/// Builds an `n`-level pyramid whose finest level is `img`.
pub fn decompose(img: &ImagePlane, n: usize) -> Result<Pyramid> {
    if n == 0 {
        return Err(Error::Config("pyramid needs at least one level".into()));
    }
    let min = 1usize << (n - 1);
    if img.height() < min || img.width() < min {
        return Err(Error::Config(format!(
            "{}x{} image is too small for {n} pyramid levels (need at least {min} per side)",
            img.height(),
            img.width()
        )));
    }
    let mut levels = vec![img.clone()];
    for _ in 1..n {
        let next = downsample(levels.last().expect("non-empty"));
        levels.push(next);
    }
    levels.reverse();
    Ok(Pyramid { levels })
}

#[inline]
fn upsample_coord(dst: usize, src_len: usize) -> (usize, usize, f64) {
    // Coarse sample j sits on fine sample 2j, matching the decimation grid.
    let s = dst as f64 / 2.0;
    let i0 = (s.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    let f = if i0 + 1 < src_len { s - i0 as f64 } else { 0.0 };
    (i0, i1, f)
}

/// Bilinear enlargement to exactly `target` dims, which must be `2n` or `2n - 1`
/// of the source on each axis.
pub fn upsample_to(img: &ImagePlane, target: (usize, usize)) -> Result<ImagePlane> {
    check_upsample_dims(img.dims(), target)?;
    let (h, w, ch) = img.shape();
    let (th, tw) = target;
    let mut out = ImagePlane::zeros(th, tw, ch);
    par::for_each_chunk_mut(out.as_mut_slice(), tw, |row, dst| {
        let c = row / th;
        let (y0, y1, fy) = upsample_coord(row % th, h);
        let plane = img.plane(c);
        for (x, d) in dst.iter_mut().enumerate() {
            let (x0, x1, fx) = upsample_coord(x, w);
            let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
            let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
            *d = top * (1.0 - fy) + bot * fy;
        }
    });
    Ok(out)
}

/// Bilinear 2× enlargement.
pub fn upsample2x(img: &ImagePlane) -> ImagePlane {
    upsample_to(img, (img.height() * 2, img.width() * 2)).expect("2x dims are valid")
}

/// Adjoint of [`upsample_to`]: maps a gradient on the enlarged image back to
/// the `source` dims.
pub fn upsample_to_adjoint(grad: &ImagePlane, source: (usize, usize)) -> Result<ImagePlane> {
    check_upsample_dims(source, grad.dims())?;
    let (h, w) = source;
    let (th, tw, ch) = grad.shape();
    let mut out = ImagePlane::zeros(h, w, ch);
    for c in 0..ch {
        for y in 0..th {
            let (y0, y1, fy) = upsample_coord(y, h);
            for x in 0..tw {
                let (x0, x1, fx) = upsample_coord(x, w);
                let g = grad.get(c, y, x);
                *out.at_mut(c, y0, x0) += g * (1.0 - fx) * (1.0 - fy);
                *out.at_mut(c, y0, x1) += g * fx * (1.0 - fy);
                *out.at_mut(c, y1, x0) += g * (1.0 - fx) * fy;
                *out.at_mut(c, y1, x1) += g * fx * fy;
            }
        }
    }
    Ok(out)
}

fn check_upsample_dims(src: (usize, usize), target: (usize, usize)) -> Result<()> {
    let ok = |s: usize, t: usize| t == 2 * s || t + 1 == 2 * s;
    if ok(src.0, target.0) && ok(src.1, target.1) {
        Ok(())
    } else {
        Err(Error::shape("upsample_to", (src.0 * 2, src.1 * 2), target))
    }
}
