//! Trajectory-driven blur synthesis: flow fields, subpixel warping, frame
//! averaging, sensor noise, clipping and ground-truth registration.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::par;
use crate::seed::rng_from_seed;
use crate::trajectory::Trajectory;

/// Default upper bound on the noise standard deviation.
pub const MAX_NOISE_SIGMA: f64 = 0.02;

/// Per-pixel displacement at one instant of the exposure.
///
/// `(u, v)` at pixel `p` is the motion of the scene point that lands on `p`:
/// the warped image at `p` is sampled from `p - (u, v)` in the source.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn uniform(height: usize, width: usize, u: f64, v: f64) -> Self {
        FlowField {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn max_magnitude(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0, f64::max)
    }

    /// Largest per-axis displacement.
    pub fn max_axis_shift(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .map(|d| d.abs())
            .fold(0.0, f64::max)
    }
}

/// Rigid in-plane motion for one trajectory sample: rotation by `rotation_deg`
/// about the image center followed by translation `(dx, dy)`.
pub fn trajectory_to_flow(sample: (f64, f64), rotation_deg: f64, dims: (usize, usize)) -> FlowField {
    let (h, w) = dims;
    let (dx, dy) = sample;
    if rotation_deg == 0.0 {
        return FlowField::uniform(h, w, dx, dy);
    }
    let (s, c) = rotation_deg.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut u = Vec::with_capacity(h * w);
    let mut v = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            // Source point q with R(q - center) + center + d = p.
            let px = x as f64 - cx - dx;
            let py = y as f64 - cy - dy;
            let qx = c * px + s * py;
            let qy = -s * px + c * py;
            u.push(x as f64 - (qx + cx));
            v.push(y as f64 - (qy + cy));
        }
    }
    FlowField { height: h, width: w, u, v }
}

/// Bilinear sample with edge replication outside the image.
#[inline]
pub fn sample_bilinear(plane: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Backward-warps `img` by `flow` using bilinear interpolation.
pub fn warp_image(img: &ImagePlane, flow: &FlowField) -> Result<ImagePlane> {
    if img.dims() != flow.dims() {
        return Err(Error::shape("warp_image", img.dims(), flow.dims()));
    }
    let (h, w, ch) = img.shape();
    let mut out = ImagePlane::zeros(h, w, ch);
    par::for_each_chunk_mut(out.as_mut_slice(), w, |row, dst| {
        let c = row / h;
        let y = row % h;
        let src = img.plane(c);
        for (x, d) in dst.iter_mut().enumerate() {
            let (u, v) = flow.at(y, x);
            *d = sample_bilinear(src, h, w, x as f64 - u, y as f64 - v);
        }
    });
    Ok(out)
}

fn translate(img: &ImagePlane, dx: f64, dy: f64) -> ImagePlane {
    warp_image(img, &FlowField::uniform(img.height(), img.width(), dx, dy))
        .expect("uniform flow matches image dims")
}

/// Mean of the images warped along the trajectory, before noise and clipping.
///
/// The sample at index `t` is rotated by `t × rotation_per_sample` degrees.
pub fn accumulate_frames(
    sharp: &ImagePlane,
    traj: &Trajectory,
    rotation_per_sample: f64,
) -> Result<ImagePlane> {
    if traj.is_empty() {
        return Err(Error::Config("empty trajectory".into()));
    }
    let (h, w, ch) = sharp.shape();
    let n = traj.len() as f64;
    let flows: Vec<FlowField> = if rotation_per_sample == 0.0 {
        Vec::new()
    } else {
        traj.samples()
            .iter()
            .enumerate()
            .map(|(t, &s)| trajectory_to_flow(s, t as f64 * rotation_per_sample, (h, w)))
            .collect()
    };
    let mut out = ImagePlane::zeros(h, w, ch);
    // Each row sums over time in a fixed order, so the result is independent
    // of how rows are scheduled.
    par::for_each_chunk_mut(out.as_mut_slice(), w, |row, dst| {
        let c = row / h;
        let y = row % h;
        let src = sharp.plane(c);
        for (t, &(dx, dy)) in traj.samples().iter().enumerate() {
            for (x, d) in dst.iter_mut().enumerate() {
                let (u, v) = if flows.is_empty() { (dx, dy) } else { flows[t].at(y, x) };
                *d += sample_bilinear(src, h, w, x as f64 - u, y as f64 - v);
            }
        }
        dst.iter_mut().for_each(|d| *d /= n);
    });
    Ok(out)
}

/// Sensor noise settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig { sigma: 0.0, seed: 0 }
    }
}

/// Adds i.i.d. zero-mean Gaussian noise per pixel and channel.
pub fn add_noise(img: &ImagePlane, noise: NoiseConfig) -> Result<ImagePlane> {
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma must be non-negative, got {}", noise.sigma)));
    }
    if noise.sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, noise.sigma).expect("sigma validated");
    let mut rng = rng_from_seed(noise.seed);
    let mut out = img.clone();
    for v in out.as_mut_slice() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Clamps every sample to `[0, 1]`.
pub fn clip_dynamic_range(img: &ImagePlane) -> ImagePlane {
    img.map(|v| v.clamp(0.0, 1.0))
}

/// Output of [`synthesize_blur`].
#[derive(Clone, Debug)]
pub struct BlurredPair {
    pub blurred: ImagePlane,
    /// Sharp image shifted to the blur kernel centroid, clipped.
    pub registered_sharp: ImagePlane,
    /// Largest blurred value after noise, before clipping.
    pub blurred_preclip_max: f64,
    /// Largest sharp value before clipping.
    pub sharp_preclip_max: f64,
}

/// Blurs `sharp` along `traj`, adds noise, clips, and registers the ground truth
/// by the mean trajectory displacement.
pub fn synthesize_blur(
    sharp: &ImagePlane,
    traj: &Trajectory,
    rotation_per_sample: f64,
    noise: NoiseConfig,
) -> Result<BlurredPair> {
    let averaged = accumulate_frames(sharp, traj, rotation_per_sample)?;
    let noisy = add_noise(&averaged, noise)?;
    let (mx, my) = traj.mean_displacement();
    let registered = translate(sharp, mx, my);
    Ok(BlurredPair {
        blurred_preclip_max: noisy.max(),
        sharp_preclip_max: sharp.max(),
        blurred: clip_dynamic_range(&noisy),
        registered_sharp: clip_dynamic_range(&registered),
    })
}
