//! Blurred/sharp pair generation from a directory of sharp photographs.
//!
//! Every item draws its randomness from `derive_seed(master, index)`, so the
//! output does not depend on thread count, scheduling, or which items were
//! already on disk when a run resumed.

use std::fs;
use std::path::{Path, PathBuf};

use easrn_core::blur::{synthesize_blur, NoiseConfig, MAX_NOISE_SIGMA};
use easrn_core::seed::{derive_seed, rng_from_seed};
use easrn_core::streaks::{print_light_sources, source_regions, StreakConfig};
use easrn_core::trajectory::{generate_trajectory, MotionConfig, Trajectory};
use easrn_core::ImagePlane;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::imageio::{list_images, read_image, sha256_file, write_png, BitDepth};
use crate::manifest::{read_manifest, Header, ManifestWriter, Outcome, PairData, PairRecord, StreakRecord, MANIFEST_NAME, SCHEMA_VERSION};

pub const BLURRED_DIR: &str = "blurred";
pub const SHARP_DIR: &str = "sharp";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetPolicy {
    pub input_dir: PathBuf,
    pub seed: u64,
    /// Random crops taken from each source image.
    pub crops_per_image: usize,
    pub crop_size: usize,
    /// Pyramid depth the pairs must support; crops must be at least `2^(scales-1)`.
    pub scales: usize,
    pub flips: bool,
    pub gamma: bool,
    pub gamma_range: [f64; 2],
    pub oe_fraction: f64,
    pub streak_count: [usize; 2],
    pub streak_intensity: [f64; 2],
    pub streak_shape_size: usize,
    pub streak_shape_samples: usize,
    pub max_shift: f64,
    pub trajectory_samples: usize,
    /// Largest per-sample in-plane rotation, in degrees; 0 keeps blur uniform.
    pub max_rotation: f64,
    pub sigma_max: f64,
    pub bit_depth: BitDepth,
}

impl DatasetPolicy {
    pub fn new(input_dir: impl Into<PathBuf>, seed: u64) -> Self {
        let streaks = StreakConfig::default();
        DatasetPolicy {
            input_dir: input_dir.into(),
            seed,
            crops_per_image: 1,
            crop_size: 512,
            scales: 3,
            flips: true,
            gamma: true,
            gamma_range: [0.8, 1.25],
            oe_fraction: 1.0 / 3.0,
            streak_count: [streaks.count_range.0, streaks.count_range.1],
            streak_intensity: [streaks.intensity_range.0, streaks.intensity_range.1],
            streak_shape_size: streaks.shape_size,
            streak_shape_samples: streaks.shape_samples,
            max_shift: 30.0,
            trajectory_samples: MotionConfig::default().num_samples,
            max_rotation: 0.0,
            sigma_max: MAX_NOISE_SIGMA,
            bit_depth: BitDepth::Sixteen,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..=1.0).contains(&self.oe_fraction) {
            return bad(format!("oe-fraction must be in [0, 1], got {}", self.oe_fraction));
        }
        if self.scales == 0 {
            return bad("scales must be at least 1".into());
        }
        let min_crop = 1usize << (self.scales - 1);
        if self.crop_size < min_crop {
            return bad(format!("crop {} is smaller than 2^(scales-1) = {min_crop}", self.crop_size));
        }
        if self.crops_per_image == 0 {
            return bad("count must be at least 1".into());
        }
        if !(0.0..=MAX_NOISE_SIGMA).contains(&self.sigma_max) {
            return bad(format!("sigma-max must be in [0, {MAX_NOISE_SIGMA}], got {}", self.sigma_max));
        }
        let [g0, g1] = self.gamma_range;
        if !(g0 > 0.0 && g0 <= g1 && g1.is_finite()) {
            return bad(format!("gamma range [{g0}, {g1}] is invalid"));
        }
        if !(self.max_rotation >= 0.0 && self.max_rotation.is_finite()) {
            return bad(format!("max rotation must be non-negative, got {}", self.max_rotation));
        }
        self.motion(0).validate()?;
        self.streak_config(0).validate()?;
        Ok(())
    }

    fn motion(&self, seed: u64) -> MotionConfig {
        MotionConfig {
            num_samples: self.trajectory_samples,
            max_shift: self.max_shift,
            seed,
            ..MotionConfig::default()
        }
    }

    fn streak_config(&self, seed: u64) -> StreakConfig {
        StreakConfig {
            count_range: (self.streak_count[0], self.streak_count[1]),
            intensity_range: (self.streak_intensity[0], self.streak_intensity[1]),
            shape_size: self.streak_shape_size,
            shape_samples: self.streak_shape_samples,
            seed,
        }
    }
}

/// One unit of work: a crop of a source image.
#[derive(Clone, Debug)]
pub struct Item {
    pub index: usize,
    pub source: PathBuf,
    pub crop_index: usize,
}

pub fn plan_items(policy: &DatasetPolicy) -> Result<Vec<Item>> {
    let sources = list_images(&policy.input_dir)?;
    if sources.is_empty() {
        return Err(CliError::EmptySet(format!("no images in {}", policy.input_dir.display())));
    }
    let mut items = Vec::with_capacity(sources.len() * policy.crops_per_image);
    for source in sources {
        for crop_index in 0..policy.crops_per_image {
            items.push(Item {
                index: items.len(),
                source: source.clone(),
                crop_index,
            });
        }
    }
    Ok(items)
}

fn item_name(item: &Item) -> String {
    let stem = item.source.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    format!("{:06}_{stem}.png", item.index)
}

fn flip(img: &ImagePlane, horizontal: bool, vertical: bool) -> ImagePlane {
    let (h, w, c) = img.shape();
    ImagePlane::from_fn(h, w, c, |ch, y, x| {
        let sy = if vertical { h - 1 - y } else { y };
        let sx = if horizontal { w - 1 - x } else { x };
        img.get(ch, sy, sx)
    })
}

/// Random draws for one item, taken in a fixed order whatever the toggles.
struct Draws {
    crop_origin: [usize; 2],
    flip_horizontal: bool,
    flip_vertical: bool,
    gamma: f64,
    overexposed: bool,
    noise_sigma: f64,
    rotation_per_sample: f64,
}

fn draw(policy: &DatasetPolicy, seed: u64, dims: (usize, usize)) -> Draws {
    let mut rng = rng_from_seed(seed);
    let (h, w) = dims;
    let row = rng.random_range(0..=h - policy.crop_size);
    let col = rng.random_range(0..=w - policy.crop_size);
    let fh = rng.random_bool(0.5);
    let fv = rng.random_bool(0.5);
    let [g0, g1] = policy.gamma_range;
    let gamma = if g1 > g0 { rng.random_range(g0..=g1) } else { g0 };
    let u: f64 = rng.random();
    let s: f64 = rng.random();
    let r: f64 = rng.random_range(-1.0..=1.0);
    Draws {
        crop_origin: [row, col],
        flip_horizontal: policy.flips && fh,
        flip_vertical: policy.flips && fv,
        gamma: if policy.gamma { gamma } else { 1.0 },
        overexposed: u < policy.oe_fraction,
        noise_sigma: s * policy.sigma_max,
        rotation_per_sample: r * policy.max_rotation,
    }
}

fn process(policy: &DatasetPolicy, item: &Item, out_dir: &Path) -> Result<PairData> {
    let seed = derive_seed(policy.seed, item.index as u64);
    let loaded = read_image(&item.source)?;
    let (h, w) = loaded.image.dims();
    if h < policy.crop_size || w < policy.crop_size {
        return Err(CliError::Config(format!(
            "{}x{w} source is smaller than the {} crop",
            h, policy.crop_size
        )));
    }
    let d = draw(policy, seed, (h, w));
    let [r0, c0] = d.crop_origin;
    let crop = loaded.image.crop(r0, c0, policy.crop_size, policy.crop_size)?;
    let mut sharp = flip(&crop, d.flip_horizontal, d.flip_vertical);
    if d.gamma != 1.0 {
        sharp.map_inplace(|v| v.max(0.0).powf(d.gamma));
    }

    let (streak_seed, sources) = if d.overexposed {
        let s = derive_seed(seed, 1);
        let (printed, sources) = print_light_sources(&sharp, &policy.streak_config(s))?;
        sharp = printed;
        (Some(s), sources)
    } else {
        (None, Vec::new())
    };
    let regions = source_regions(&sources, sharp.height(), sharp.width());
    let streak_max = |img: &ImagePlane| {
        regions
            .iter()
            .flat_map(|&(r, c, rh, rw)| {
                (0..img.channels()).flat_map(move |ch| {
                    (r..r + rh).flat_map(move |y| (c..c + rw).map(move |x| img.get(ch, y, x)))
                })
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (streak_preclip_max, streak_clip_max) = if regions.is_empty() {
        (None, None)
    } else {
        let clipped = easrn_core::blur::clip_dynamic_range(&sharp);
        (Some(streak_max(&sharp)), Some(streak_max(&clipped)))
    };

    let traj: Trajectory = generate_trajectory(&policy.motion(derive_seed(seed, 2)))?;
    let noise = NoiseConfig {
        sigma: d.noise_sigma,
        seed: derive_seed(seed, 3),
    };
    let pair = synthesize_blur(&sharp, &traj, d.rotation_per_sample, noise)?;

    let name = item_name(item);
    let blurred_rel = format!("{BLURRED_DIR}/{name}");
    let sharp_rel = format!("{SHARP_DIR}/{name}");
    let blurred_sha256 = write_png(&out_dir.join(&blurred_rel), &pair.blurred, policy.bit_depth)?;
    let sharp_sha256 = write_png(&out_dir.join(&sharp_rel), &pair.registered_sharp, policy.bit_depth)?;

    Ok(PairData {
        crop_origin: d.crop_origin,
        flip_horizontal: d.flip_horizontal,
        flip_vertical: d.flip_vertical,
        gamma: d.gamma,
        trajectory: traj.to_flat(),
        rotation_per_sample: d.rotation_per_sample,
        streak_seed,
        streaks: sources
            .iter()
            .map(|s| StreakRecord {
                position: [s.position.0, s.position.1],
                size: [s.patch.height(), s.patch.width()],
                intensities: s.intensities.clone(),
            })
            .collect(),
        noise_sigma: d.noise_sigma,
        noise_seed: noise.seed,
        blurred_preclip_max: pair.blurred_preclip_max,
        sharp_preclip_max: pair.sharp_preclip_max,
        streak_preclip_max,
        streak_clip_max,
        blurred: blurred_rel,
        sharp: sharp_rel,
        blurred_sha256,
        sharp_sha256,
    })
}

fn run_item(policy: &DatasetPolicy, item: &Item, out_dir: &Path) -> PairRecord {
    let outcome = match process(policy, item, out_dir) {
        Ok(data) => Outcome::Ok(data),
        Err(e) => Outcome::Error { message: e.to_string() },
    };
    PairRecord {
        index: item.index,
        source: item.source.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        crop_index: item.crop_index,
        seed: derive_seed(policy.seed, item.index as u64),
        outcome,
    }
}

#[cfg(feature = "parallel")]
fn run_batch(policy: &DatasetPolicy, items: &[Item], out_dir: &Path) -> Vec<PairRecord> {
    use rayon::prelude::*;
    items.par_iter().map(|it| run_item(policy, it, out_dir)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_batch(policy: &DatasetPolicy, items: &[Item], out_dir: &Path) -> Vec<PairRecord> {
    items.iter().map(|it| run_item(policy, it, out_dir)).collect()
}

fn batch_len() -> usize {
    #[cfg(feature = "parallel")]
    {
        2 * rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenSummary {
    pub generated: usize,
    pub reused: usize,
    pub failed: usize,
}

/// Records at the head of an existing manifest that can be kept: same policy,
/// consecutive indices, and output files whose checksums still match.
fn reusable_prefix(policy: &DatasetPolicy, out_dir: &Path, items: &[Item]) -> Result<Vec<PairRecord>> {
    let path = out_dir.join(MANIFEST_NAME);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let manifest = read_manifest(&path)?;
    if manifest.header.policy != *policy {
        return Err(CliError::Config(format!(
            "{} was written with a different policy; refusing to resume",
            path.display()
        )));
    }
    let mut keep = Vec::new();
    for (rec, item) in manifest.records.into_iter().zip(items) {
        if rec.index != item.index {
            break;
        }
        if let Some(d) = rec.data() {
            let intact = [(&d.blurred, &d.blurred_sha256), (&d.sharp, &d.sharp_sha256)]
                .iter()
                .all(|(p, sum)| sha256_file(&out_dir.join(p)).is_ok_and(|s| s == **sum));
            if !intact {
                break;
            }
        } else {
            // Failed items get another attempt.
            break;
        }
        keep.push(rec);
    }
    Ok(keep)
}

/// Generates the dataset into `out_dir`. With `resume`, verified records of
/// an earlier run are kept and only the rest is regenerated.
pub fn generate_dataset(policy: &DatasetPolicy, out_dir: &Path, resume: bool) -> Result<GenSummary> {
    policy.validate()?;
    let items = plan_items(policy)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let kept = if resume { reusable_prefix(policy, out_dir, &items)? } else { Vec::new() };
    let header = Header {
        schema: SCHEMA_VERSION,
        policy: policy.clone(),
    };
    let mut writer = ManifestWriter::create(&out_dir.join(MANIFEST_NAME), &header, &kept)?;
    let mut summary = GenSummary {
        reused: kept.len(),
        ..Default::default()
    };
    for batch in items[kept.len()..].chunks(batch_len()) {
        for rec in run_batch(policy, batch, out_dir) {
            match rec.outcome {
                Outcome::Ok(_) => summary.generated += 1,
                Outcome::Error { .. } => summary.failed += 1,
            }
            writer.append(&rec)?;
        }
    }
    Ok(summary)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplaySummary {
    pub matched: usize,
    pub mismatched: Vec<usize>,
}

/// Regenerates a manifest's dataset into `out_dir` and compares every record,
/// checksums included, with the original.
pub fn replay_manifest(manifest_path: &Path, out_dir: &Path) -> Result<ReplaySummary> {
    let original = read_manifest(manifest_path)?;
    generate_dataset(&original.header.policy, out_dir, false)?;
    let replayed = read_manifest(&out_dir.join(MANIFEST_NAME))?;
    let mut summary = ReplaySummary::default();
    for (i, rec) in original.records.iter().enumerate() {
        if replayed.records.get(i) == Some(rec) {
            summary.matched += 1;
        } else {
            summary.mismatched.push(rec.index);
        }
    }
    Ok(summary)
}
