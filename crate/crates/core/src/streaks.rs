//! Saturated light sources printed into sharp images before blurring.
//!
//! Each source is a small random-walk shape scaled by per-channel intensities
//! of 1–10× the unit dynamic range. Sources add to the image; the later clip
//! produces the cutoff that real sensors show around bright lights.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::seed::{derive_seed, rng_from_seed};
use crate::trajectory::{generate_trajectory, rescale_trajectory, MotionConfig, Trajectory};

/// A rasterized light source and where it goes.
#[derive(Clone, Debug, PartialEq)]
pub struct LightSource {
    /// Single-channel shape with unit peak.
    pub patch: ImagePlane,
    /// Per-channel multipliers, each at least 1.
    pub intensities: Vec<f64>,
    /// Top-left anchor `(row, col)`.
    pub position: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreakConfig {
    /// Inclusive range for the number of sources per image.
    pub count_range: (usize, usize),
    /// Half-open intensity range `[lo, hi)`.
    pub intensity_range: (f64, f64),
    /// Side of the square shape raster, in pixels.
    pub shape_size: usize,
    /// Samples per shape trajectory.
    pub shape_samples: usize,
    pub seed: u64,
}

impl Default for StreakConfig {
    fn default() -> Self {
        StreakConfig {
            count_range: (2, 20),
            intensity_range: (1.0, 10.0),
            shape_size: 17,
            shape_samples: 40,
            seed: 0,
        }
    }
}

impl StreakConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.count_range;
        if lo > hi {
            return Err(Error::Config(format!("count range [{lo}, {hi}] is empty")));
        }
        let (a, b) = self.intensity_range;
        if !(a >= 1.0 && b >= a && b.is_finite()) {
            return Err(Error::Config(format!(
                "intensity range [{a}, {b}] must satisfy 1 <= lo <= hi"
            )));
        }
        if self.shape_size == 0 || self.shape_samples == 0 {
            return Err(Error::Config("shape size and sample count must be positive".into()));
        }
        Ok(())
    }
}

/// Splats the trajectory into a `size × size` raster starting at the center
/// and normalizes it to unit peak.
///
/// Trajectories that would leave the raster are shrunk to fit.
pub fn render_source_shape(traj: &Trajectory, size: usize) -> ImagePlane {
    let size = size.max(1);
    let center = ((size - 1) / 2) as f64;
    let reach = center.min((size - 1) as f64 - center);
    let traj = if reach > 0.0 {
        rescale_trajectory(traj, reach)
    } else {
        Trajectory::stationary(traj.len())
    };
    let mut patch = ImagePlane::zeros(size, size, 1);
    let last = (size - 1) as f64;
    for &(dx, dy) in traj.samples() {
        let x = (center + dx).clamp(0.0, last);
        let y = (center + dy).clamp(0.0, last);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        let x1 = (x0 + 1).min(size - 1);
        let y1 = (y0 + 1).min(size - 1);
        *patch.at_mut(0, y0, x0) += (1.0 - fx) * (1.0 - fy);
        *patch.at_mut(0, y0, x1) += fx * (1.0 - fy);
        *patch.at_mut(0, y1, x0) += (1.0 - fx) * fy;
        *patch.at_mut(0, y1, x1) += fx * fy;
    }
    let peak = patch.max();
    if peak > 0.0 {
        patch.map_inplace(|v| v / peak);
    }
    patch
}

/// Adds each source's patch, scaled per channel, onto `img`. Patches that
/// overhang the bottom or right edge are cropped.
pub fn composite_sources(img: &ImagePlane, sources: &[LightSource]) -> Result<ImagePlane> {
    let mut out = img.clone();
    let (h, w, ch) = img.shape();
    for s in sources {
        if s.intensities.len() != ch {
            return Err(Error::shape("composite_sources", ch, s.intensities.len()));
        }
        let (r0, c0) = s.position;
        for (c, &k) in s.intensities.iter().enumerate() {
            for py in 0..s.patch.height() {
                let y = r0 + py;
                if y >= h {
                    break;
                }
                for px in 0..s.patch.width() {
                    let x = c0 + px;
                    if x >= w {
                        break;
                    }
                    *out.at_mut(c, y, x) += k * s.patch.get(0, py, px);
                }
            }
        }
    }
    Ok(out)
}

/// Draws the light sources for one image of the given shape.
pub fn sample_light_sources(dims: (usize, usize, usize), cfg: &StreakConfig) -> Result<Vec<LightSource>> {
    cfg.validate()?;
    let (h, w, ch) = dims;
    let mut rng = rng_from_seed(cfg.seed);
    let count = rng.random_range(cfg.count_range.0..=cfg.count_range.1);
    let (lo, hi) = cfg.intensity_range;
    let reach = ((cfg.shape_size - 1) / 2).max(1) as f64;
    (0..count)
        .map(|i| {
            let motion = MotionConfig {
                num_samples: cfg.shape_samples,
                max_shift: reach,
                seed: derive_seed(cfg.seed, i as u64),
                ..MotionConfig::default()
            };
            let patch = render_source_shape(&generate_trajectory(&motion)?, cfg.shape_size);
            let intensities = (0..ch)
                .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
                .collect();
            let row = rng.random_range(0..=h.saturating_sub(cfg.shape_size));
            let col = rng.random_range(0..=w.saturating_sub(cfg.shape_size));
            Ok(LightSource {
                patch,
                intensities,
                position: (row, col),
            })
        })
        .collect()
}

/// Prints a random set of light sources into `sharp`. The result may exceed 1.
pub fn print_light_sources(sharp: &ImagePlane, cfg: &StreakConfig) -> Result<(ImagePlane, Vec<LightSource>)> {
    let sources = sample_light_sources(sharp.shape(), cfg)?;
    let out = composite_sources(sharp, &sources)?;
    Ok((out, sources))
}

/// Footprint of each source clipped to an `h × w` image, as
/// `(row, col, height, width)`.
pub fn source_regions(sources: &[LightSource], h: usize, w: usize) -> Vec<(usize, usize, usize, usize)> {
    sources
        .iter()
        .filter(|s| s.position.0 < h && s.position.1 < w)
        .map(|s| {
            let (r, c) = s.position;
            (r, c, s.patch.height().min(h - r), s.patch.width().min(w - c))
        })
        .collect()
}
