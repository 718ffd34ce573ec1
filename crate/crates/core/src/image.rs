//! Channel-planar image and feature-map container.

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// An `height × width × channels` array of `f64` samples, stored channel-planar
/// (`data[c * h * w + y * w + x]`).
///
/// Pixel intensities are nominally in `[0, 1]`; values above 1 are allowed
/// before clipping (printed light sources), and feature maps are unbounded.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(
            height >= 1 && width >= 1 && channels >= 1,
            "image dimensions must be at least 1, got {height}x{width}x{channels}"
        );
        ImagePlane {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Config(format!(
                "image dimensions must be at least 1, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape("ImagePlane::from_vec", height * width * channels, data.len()));
        }
        Ok(ImagePlane { height, width, channels, data })
    }

    /// Builds an image from `f(channel, y, x)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::zeros(height, width, channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    img.data[(c * height + y) * width + x] = f(c, y, x);
                }
            }
        }
        img
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// `(height, width, channels)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &ImagePlane) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &ImagePlane, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(context, self.shape(), other.shape()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImagePlane {
        ImagePlane {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    /// Elementwise combination of two same-shaped images.
    ///
    /// Panics on shape mismatch.
    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f64, f64) -> f64) -> ImagePlane {
        assert!(self.same_shape(other), "zip_map shape mismatch");
        ImagePlane {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..*self
        }
    }

    /// `self += other`, panicking on shape mismatch.
    pub fn add_assign(&mut self, other: &ImagePlane) {
        assert!(self.same_shape(other), "add_assign shape mismatch");
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of rows `y0..y0+h`, columns `x0..x0+w`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<ImagePlane> {
        if y0 + h > self.height || x0 + w > self.width || h == 0 || w == 0 {
            return Err(Error::shape(
                "ImagePlane::crop",
                self.dims(),
                (y0 + h, x0 + w),
            ));
        }
        Ok(ImagePlane::from_fn(h, w, self.channels, |c, y, x| {
            self.get(c, y0 + y, x0 + x)
        }))
    }

    /// Pads bottom and right edges by mirroring without repeating the edge
    /// sample (reflect-101).
    pub fn pad_reflect(&self, new_h: usize, new_w: usize) -> ImagePlane {
        assert!(new_h >= self.height && new_w >= self.width);
        ImagePlane::from_fn(new_h, new_w, self.channels, |c, y, x| {
            self.get(
                c,
                reflect101(y as isize, self.height),
                reflect101(x as isize, self.width),
            )
        })
    }

    /// Adjoint of [`pad_reflect`](Self::pad_reflect): folds the padded
    /// gradient back onto the original `h × w` support.
    pub fn unpad_reflect_adjoint(&self, h: usize, w: usize) -> ImagePlane {
        let mut out = ImagePlane::zeros(h, w, self.channels);
        for c in 0..self.channels {
            for y in 0..self.height {
                let sy = reflect101(y as isize, h);
                for x in 0..self.width {
                    let sx = reflect101(x as isize, w);
                    *out.at_mut(c, sy, sx) += self.get(c, y, x);
                }
            }
        }
        out
    }

    /// Stacks the channels of `parts` in order.
    pub fn concat_channels(parts: &[&ImagePlane]) -> Result<ImagePlane> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("concat of zero images".into()))?;
        let dims = first.dims();
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if p.dims() != dims {
                return Err(Error::shape("concat_channels", dims, p.dims()));
            }
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        ImagePlane::from_vec(dims.0, dims.1, channels, data)
    }

    /// Splits channels into consecutive groups of the given sizes.
    pub fn split_channels(&self, sizes: &[usize]) -> Vec<ImagePlane> {
        assert_eq!(sizes.iter().sum::<usize>(), self.channels);
        let n = self.plane_len();
        let mut start = 0;
        sizes
            .iter()
            .map(|&k| {
                let part = ImagePlane {
                    height: self.height,
                    width: self.width,
                    channels: k,
                    data: self.data[start * n..(start + k) * n].to_vec(),
                };
                start += k;
                part
            })
            .collect()
    }

    /// BT.601 luma for three-channel images; single-channel images pass through.
    pub fn luma(&self) -> ImagePlane {
        match self.channels {
            3 => {
                let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
                let data = r
                    .iter()
                    .zip(g)
                    .zip(b)
                    .map(|((r, g), b)| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
                    .collect();
                ImagePlane {
                    height: self.height,
                    width: self.width,
                    channels: 1,
                    data,
                }
            }
            1 => self.clone(),
            c => {
                // Unweighted mean for unusual channel counts.
                let n = self.plane_len();
                let data = (0..n)
                    .map(|i| (0..c).map(|k| self.data[k * n + i]).sum::<f64>() / c as f64)
                    .collect();
                ImagePlane {
                    height: self.height,
                    width: self.width,
                    channels: 1,
                    data,
                }
            }
        }
    }

    /// Adjoint of [`luma`](Self::luma) for an image with `channels` channels.
    pub fn luma_adjoint(grad: &ImagePlane, channels: usize) -> ImagePlane {
        assert_eq!(grad.channels, 1);
        let weights: Vec<f64> = match channels {
            3 => LUMA_WEIGHTS.to_vec(),
            1 => vec![1.0],
            c => vec![1.0 / c as f64; c],
        };
        let mut data = Vec::with_capacity(grad.len() * channels);
        for w in weights {
            data.extend(grad.data.iter().map(|g| g * w));
        }
        ImagePlane {
            height: grad.height,
            width: grad.width,
            channels,
            data,
        }
    }
}

/// Reflect-101 index into `0..n` (`-1 → 1`, `n → n-2`).
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}
