//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use easrn_cli::dataset::{generate_dataset, replay_manifest, DatasetPolicy};
use easrn_cli::imageio::{write_png, BitDepth};
use easrn_cli::manifest::{read_manifest, MANIFEST_NAME};
use easrn_core::blur::{accumulate_frames, synthesize_blur, trajectory_to_flow, NoiseConfig};
use easrn_core::gradcheck::{check_gradient, probe_indices};
use easrn_core::graph::blocks;
use easrn_core::graph::ops::{self, ConvParams};
use easrn_core::graph::{easrn_forward, GraphConfig, GraphWeights};
use easrn_core::losses::{
    fidelity_grad, fidelity_loss, perceptual_tv_grad, perceptual_tv_loss, sed_grad, sed_loss, total_loss,
    total_variation, EdgeDetector, LossWeights, ReferenceEdgeDetector, ReferenceFeatures,
};
use easrn_core::metrics::{psnr, ssim};
use easrn_core::pyramid::decompose;
use easrn_core::seed::{derive_seed, rng_from_seed};
use easrn_core::trajectory::{generate_trajectory, MotionConfig, Trajectory};
use easrn_core::ImagePlane;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImagePlane {
    let mut rng = rng_from_seed(seed);
    ImagePlane::from_fn(h, w, c, |_, _, _| rng.random::<f64>())
}

/// Smooth shading, a few hard-edged disks and fine texture, standing in for a
/// natural photograph crop.
fn natural_image(h: usize, w: usize, seed: u64) -> ImagePlane {
    let mut rng = rng_from_seed(seed);
    let disks: Vec<(f64, f64, f64, [f64; 3])> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                rng.random_range(3.0..12.0),
                [rng.random(), rng.random(), rng.random()],
            )
        })
        .collect();
    let phase: f64 = rng.random_range(0.0..6.0);
    ImagePlane::from_fn(h, w, 3, |c, y, x| {
        let (yf, xf) = (y as f64, x as f64);
        let mut v = 0.35 + 0.2 * ((xf * 0.11 + phase + c as f64).sin() * (yf * 0.07).cos());
        v += 0.05 * ((xf * 1.3).sin() * (yf * 1.7).sin());
        for &(cy, cx, r, col) in &disks {
            if (yf - cy).powi(2) + (xf - cx).powi(2) < r * r {
                v = 0.6 * v + 0.4 * col[c];
            }
        }
        v.clamp(0.0, 1.0)
    })
}

fn dot(a: &ImagePlane, b: &ImagePlane) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| p * q).sum()
}

fn like(x: &ImagePlane, v: &[f64]) -> ImagePlane {
    ImagePlane::from_vec(x.height(), x.width(), x.channels(), v.to_vec()).unwrap()
}

/// Translation blur as a direct convolution with the bilinearly splatted,
/// unit-sum trajectory kernel; out-of-range taps read the nearest edge pixel.
fn kernel_convolution(img: &ImagePlane, traj: &Trajectory) -> ImagePlane {
    let r = traj.max_extent().ceil() as isize + 1;
    let side = (2 * r + 1) as usize;
    let mut k = vec![0.0; side * side];
    for &(dx, dy) in traj.samples() {
        let (ox, oy) = (dx.floor(), dy.floor());
        let (fx, fy) = (dx - ox, dy - oy);
        for (ddy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (ddx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let iy = (oy as isize + ddy + r) as usize;
                let ix = (ox as isize + ddx + r) as usize;
                k[iy * side + ix] += wx * wy;
            }
        }
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    let (h, w, _) = img.shape();
    ImagePlane::from_fn(h, w, img.channels(), |c, y, x| {
        let mut s = 0.0;
        for oy in -r..=r {
            for ox in -r..=r {
                let kv = k[((oy + r) as usize) * side + (ox + r) as usize];
                if kv != 0.0 {
                    let sy = (y as isize - oy).clamp(0, h as isize - 1) as usize;
                    let sx = (x as isize - ox).clamp(0, w as isize - 1) as usize;
                    s += kv * img.get(c, sy, sx);
                }
            }
        }
        s
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    for i in 0..20 {
        let crop = natural_image(64, 64, 100 + i);
        let traj = generate_trajectory(&MotionConfig {
            max_shift: 30.0,
            seed: derive_seed(1, i),
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let blurred = accumulate_frames(&crop, &traj, 0.0).map_err(|e| e.to_string())?;
        let p = psnr(&blurred, &kernel_convolution(&crop, &traj)).map_err(|e| e.to_string())?;
        ensure!(p > 45.0, "trajectory {i}: PSNR {p:.2} dB");
        worst = worst.min(p);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2} s");
    Ok(format!("min PSNR {worst:.1} dB over 20 trajectories, {secs:.2} s"))
}

fn criterion_2() -> Outcome {
    let sharp = natural_image(48, 40, 2);
    let pair = synthesize_blur(&sharp, &Trajectory::stationary(100), 0.0, NoiseConfig::none()).map_err(|e| e.to_string())?;
    let diff = pair
        .blurred
        .as_slice()
        .iter()
        .zip(sharp.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure!(diff < 1e-6, "max abs diff {diff:e}");
    Ok(format!("max abs diff {diff:e}"))
}

fn criterion_3() -> Outcome {
    let mut worst_axis = 0.0f64;
    let mut worst_euclid = 0.0f64;
    for i in 0..100 {
        let traj = generate_trajectory(&MotionConfig {
            max_shift: 30.0,
            seed: derive_seed(3, i),
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        for &s in traj.samples() {
            let flow = trajectory_to_flow(s, 0.0, (64, 64));
            worst_axis = worst_axis.max(flow.max_axis_shift());
            worst_euclid = worst_euclid.max(flow.max_magnitude());
        }
    }
    ensure!(worst_axis <= 30.0, "per-axis shift {worst_axis}");
    Ok(format!("largest per-axis shift {worst_axis:.3} px (Euclidean {worst_euclid:.3} px)"))
}

fn write_sources(dir: &Path, n: usize, h: usize, w: usize) {
    for i in 0..n {
        let img = natural_image(h, w, 500 + i as u64);
        write_png(&dir.join(format!("src{i}.png")), &img, BitDepth::Eight).unwrap();
    }
}

fn small_policy(input: &Path, seed: u64) -> DatasetPolicy {
    DatasetPolicy {
        crop_size: 64,
        max_shift: 10.0,
        ..DatasetPolicy::new(input, seed)
    }
}

fn criterion_4() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("in");
    fs::create_dir_all(&input).map_err(|e| e.to_string())?;
    write_sources(&input, 3, 80, 96);
    let policy = DatasetPolicy {
        oe_fraction: 1.0,
        crops_per_image: 2,
        ..small_policy(&input, 4)
    };
    let out = tmp.path().join("out");
    let summary = generate_dataset(&policy, &out, false).map_err(|e| e.to_string())?;
    ensure!(summary.failed == 0, "{} items failed", summary.failed);
    let m = read_manifest(&out.join(MANIFEST_NAME)).map_err(|e| e.to_string())?;
    ensure!(m.records.len() == 6, "expected 6 records, got {}", m.records.len());
    let mut lowest_pre = f64::INFINITY;
    for r in &m.records {
        let d = r.data().ok_or("error record")?;
        ensure!(!d.streaks.is_empty(), "item {} has no streaks", r.index);
        let pre = d.streak_preclip_max.ok_or("missing pre-clip max")?;
        let post = d.streak_clip_max.ok_or("missing post-clip max")?;
        ensure!(pre > 1.0, "item {}: pre-clip max {pre}", r.index);
        ensure!(post == 1.0, "item {}: post-clip max {post}", r.index);
        lowest_pre = lowest_pre.min(pre);
    }
    Ok(format!("6/6 pairs saturate, smallest pre-clip peak {lowest_pre:.3}"))
}

fn criterion_5() -> Outcome {
    let cfg = GraphConfig::paper();
    let w = GraphWeights::zeros(&cfg);
    let img = natural_image(72, 56, 5);
    let outs = easrn_forward(&img, &w, &cfg).map_err(|e| e.to_string())?;
    let pyr = decompose(&img, 3).map_err(|e| e.to_string())?;
    ensure!(outs.len() == 3, "{} scales", outs.len());
    for (i, (y, b)) in outs.iter().zip(pyr.levels()).enumerate() {
        ensure!(y == b, "scale {} differs", i + 1);
    }
    Ok("y_i == b_i bit-exactly at 3 scales (full-width weights)".into())
}

const PROBES: usize = 50;
const STEP: f64 = 1e-6;

struct GradLog {
    worst: f64,
    checks: usize,
}

impl GradLog {
    fn check(&mut self, name: &str, f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], seed: u64) -> Result<(), String> {
        let rep = check_gradient(f, x, analytic, &probe_indices(x.len(), PROBES, seed), STEP);
        let e = rep.max_relative_error();
        self.worst = self.worst.max(e);
        self.checks += 1;
        ensure!(e < 1e-3, "{name}: relative error {e:.3e}");
        Ok(())
    }
}

fn flat(w: &GraphWeights, names: &[String]) -> Vec<f64> {
    names.iter().flat_map(|n| w.get(n).unwrap().data.clone()).collect()
}

fn with_flat(w: &GraphWeights, names: &[String], v: &[f64]) -> GraphWeights {
    let mut out = w.clone();
    let mut at = 0;
    for n in names {
        let p = out.get_mut(n).unwrap();
        let len = p.data.len();
        p.data.copy_from_slice(&v[at..at + len]);
        at += len;
    }
    out
}

fn block_params(w: &GraphWeights, prefix: &str) -> Vec<String> {
    w.iter().map(|(k, _)| k.clone()).filter(|k| k.starts_with(prefix)).collect()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut log = GradLog { worst: 0.0, checks: 0 };
    let e = |e: easrn_core::Error| e.to_string();

    for stride in [1, 2] {
        let x = random_image(7, 8, 3, 10).map(|v| 2.0 * v - 1.0);
        let wt: Vec<f64> = random_image(1, 1, 9 * 3 * 4, 11).as_slice().iter().map(|v| v - 0.5).collect();
        let b = vec![0.1, -0.2, 0.05, 0.3];
        let p = ConvParams::new(&wt, &b, 3, 3, 4).map_err(e)?;
        let y = ops::conv2d(&x, &p, stride).map_err(e)?;
        let r = random_image(y.height(), y.width(), 4, 12);
        let (dx, g) = ops::conv2d_backward(&x, &p, stride, &r).map_err(e)?;
        log.check("conv input", |v| dot(&ops::conv2d(&like(&x, v), &p, stride).unwrap(), &r), x.as_slice(), dx.as_slice(), 13)?;
        log.check(
            "conv weight",
            |v| dot(&ops::conv2d(&x, &ConvParams::new(v, &b, 3, 3, 4).unwrap(), stride).unwrap(), &r),
            &wt,
            &g.weight,
            14,
        )?;
    }

    let x = random_image(4, 5, 3, 20).map(|v| v - 0.5);
    let wt: Vec<f64> = random_image(1, 1, 9 * 3 * 2, 21).as_slice().iter().map(|v| v - 0.5).collect();
    let b = vec![0.0, 0.1];
    let p = ConvParams::new(&wt, &b, 3, 3, 2).map_err(e)?;
    let r = random_image(8, 10, 2, 22);
    let (dx, g) = ops::deconv2x_backward(&x, &p, &r).map_err(e)?;
    log.check("deconv input", |v| dot(&ops::deconv2x(&like(&x, v), &p).unwrap(), &r), x.as_slice(), dx.as_slice(), 23)?;
    log.check(
        "deconv weight",
        |v| dot(&ops::deconv2x(&x, &ConvParams::new(v, &b, 3, 3, 2).unwrap()).unwrap(), &r),
        &wt,
        &g.weight,
        24,
    )?;

    let x = random_image(8, 6, 2, 30);
    let (y, arg) = ops::maxpool2x(&x);
    let r = random_image(y.height(), y.width(), 2, 31);
    let dx = ops::maxpool2x_backward(x.shape(), &arg, &r);
    log.check("maxpool", |v| dot(&ops::maxpool2x(&like(&x, v)).0, &r), x.as_slice(), dx.as_slice(), 32)?;

    // Inputs at least 1e-2 from the kink.
    let x = random_image(6, 6, 2, 40).zip_map(&random_image(6, 6, 2, 41), |m, s| {
        let m = 0.01 + 0.99 * m;
        if s < 0.5 { -m } else { m }
    });
    let r = random_image(6, 6, 2, 42);
    let dx = ops::lrelu_backward(&x, 0.2, &r);
    log.check("lrelu", |v| dot(&ops::lrelu(&like(&x, v), 0.2), &r), x.as_slice(), dx.as_slice(), 43)?;

    let cfg = GraphConfig {
        image_channels: 3,
        base_channels: 4,
        upsample_channels: 4,
        n_scales: 2,
        encoder_stages: 1,
        lrelu_slope: 0.2,
        inception_kernels: vec![1, 3, 5, 7],
    };
    let w = GraphWeights::seeded(&cfg, 50, 0.8);

    let prefix = "deblur.enc0.rir";
    let x = random_image(6, 7, 4, 51).map(|v| v - 0.5);
    let (y, cache) = blocks::res_in_res_block(&w, prefix, &x, 0.2).map_err(e)?;
    let r = random_image(y.height(), y.width(), 4, 52);
    let mut grads = GraphWeights::new();
    let dx = blocks::res_in_res_backward(&w, prefix, &cache, 0.2, &r, &mut grads).map_err(e)?;
    log.check("res-in-res input", |v| dot(&blocks::res_in_res_block(&w, prefix, &like(&x, v), 0.2).unwrap().0, &r), x.as_slice(), dx.as_slice(), 53)?;
    let names = block_params(&w, prefix);
    log.check(
        "res-in-res weights",
        |v| dot(&blocks::res_in_res_block(&with_flat(&w, &names, v), prefix, &x, 0.2).unwrap().0, &r),
        &flat(&w, &names),
        &flat(&grads, &names),
        54,
    )?;

    let prefix = "deblur.inception";
    let kernels = &cfg.inception_kernels;
    let x = random_image(5, 6, 8, 60).map(|v| v - 0.5);
    let y = blocks::inception_module(&w, prefix, kernels, &x).map_err(e)?;
    let r = random_image(y.height(), y.width(), y.channels(), 61);
    let mut grads = GraphWeights::new();
    let dx = blocks::inception_backward(&w, prefix, kernels, &x, &r, &mut grads).map_err(e)?;
    log.check("inception input", |v| dot(&blocks::inception_module(&w, prefix, kernels, &like(&x, v)).unwrap(), &r), x.as_slice(), dx.as_slice(), 62)?;
    let names = block_params(&w, prefix);
    log.check(
        "inception weights",
        |v| dot(&blocks::inception_module(&with_flat(&w, &names, v), prefix, kernels, &x).unwrap(), &r),
        &flat(&w, &names),
        &flat(&grads, &names),
        63,
    )?;

    let ys: Vec<ImagePlane> = [(5, 6), (10, 12), (20, 24)].iter().enumerate().map(|(i, &(h, w))| random_image(h, w, 3, 70 + i as u64)).collect();
    let gs: Vec<ImagePlane> = [(5, 6), (10, 12), (20, 24)].iter().enumerate().map(|(i, &(h, w))| random_image(h, w, 3, 80 + i as u64)).collect();
    let flat_levels = |l: &[ImagePlane]| l.iter().flat_map(|p| p.as_slice().to_vec()).collect::<Vec<f64>>();
    let unflat = |v: &[f64]| {
        let mut at = 0;
        ys.iter()
            .map(|p| {
                let out = like(p, &v[at..at + p.len()]);
                at += p.len();
                out
            })
            .collect::<Vec<_>>()
    };
    let g = fidelity_grad(&ys, &gs).map_err(e)?;
    log.check("fidelity loss", |v| fidelity_loss(&unflat(v), &gs).unwrap(), &flat_levels(&ys), &flat_levels(&g), 90)?;

    let fx = ReferenceFeatures::new(3, 91);
    let g = perceptual_tv_grad(&ys, &gs, &fx, 0.5, 0.8).map_err(e)?;
    log.check(
        "perceptual+tv loss",
        |v| perceptual_tv_loss(&unflat(v), &gs, &fx, 0.5, 0.8).unwrap(),
        &flat_levels(&ys),
        &flat_levels(&g),
        92,
    )?;

    let det = ReferenceEdgeDetector;
    let y = random_image(16, 16, 3, 93);
    let gt = random_image(16, 16, 3, 94);
    let g = sed_grad(&y, &gt, &det, 2.4).map_err(e)?;
    log.check("sed loss", |v| sed_loss(&like(&y, v), &gt, &det, 2.4).unwrap(), y.as_slice(), g.as_slice(), 95)?;

    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("{} checks, worst relative error {:.2e}, {secs:.2} s", log.checks, log.worst))
}

/// A detector with nothing in common with the reference one, for the
/// detector-independence check.
struct SquaredLuma;

impl EdgeDetector for SquaredLuma {
    fn detect(&self, img: &ImagePlane) -> easrn_core::Result<ImagePlane> {
        Ok(img.luma().map(|v| v * v))
    }

    fn backward(&self, img: &ImagePlane, grad: &ImagePlane) -> easrn_core::Result<ImagePlane> {
        let l = img.luma();
        Ok(ImagePlane::luma_adjoint(&grad.zip_map(&l, |g, v| 2.0 * g * v), img.channels()))
    }
}

fn criterion_7() -> Outcome {
    let e = |e: easrn_core::Error| e.to_string();
    let (f, s, d) = (0.3125, 0.046875, 1.5e-3);
    ensure!(total_loss(f, s, d) == f + s + d, "total loss is not the plain sum");

    // Truths on a 1/64 grid keep `truth + 0.25` exact.
    let truths: Vec<ImagePlane> = [(4, 4), (8, 8), (16, 16)]
        .iter()
        .map(|&(h, w)| ImagePlane::from_fn(h, w, 3, |c, y, x| ((c + y + x) % 32) as f64 / 64.0))
        .collect();
    let outputs: Vec<ImagePlane> = truths.iter().map(|t| t.map(|v| v + 0.25)).collect();
    let fid = fidelity_loss(&outputs, &truths).map_err(e)?;
    ensure!(fid == 0.25, "fidelity of a 0.25 offset is {fid}");

    for v in [0.0, 0.37, 1.0] {
        let tv = total_variation(&ImagePlane::filled(9, 7, 3, v));
        ensure!(tv == 0.0, "TV of constant {v} is {tv}");
    }

    let img = random_image(20, 20, 3, 7);
    let detectors: [&dyn EdgeDetector; 2] = [&ReferenceEdgeDetector, &SquaredLuma];
    for det in detectors {
        let l = sed_loss(&img, &img, det, 2.4).map_err(e)?;
        ensure!(l == 0.0, "SED of identical images is {l}");
    }

    let defaults = LossWeights::default();
    ensure!(
        defaults.sed == 2.4 && defaults.perceptual == 3e-6 && defaults.tv == 0.8,
        "defaults are {defaults:?}"
    );
    let text = serde_json::json!({ "sed": defaults.sed, "perceptual": defaults.perceptual, "tv": defaults.tv }).to_string();
    let parsed: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let back = LossWeights {
        sed: parsed["sed"].as_f64().ok_or("sed")?,
        perceptual: parsed["perceptual"].as_f64().ok_or("perceptual")?,
        tv: parsed["tv"].as_f64().ok_or("tv")?,
    };
    ensure!(back == defaults, "round trip gave {back:?}");
    back.validate().map_err(e)?;
    Ok(format!("additivity, offset {fid}, TV 0, SED 0 for 2 detectors, weights {text}"))
}

fn criterion_8() -> Outcome {
    let e = |e: easrn_core::Error| e.to_string();
    let a = random_image(32, 32, 3, 8).map(|v| 0.8 * v);
    let p = psnr(&a, &a.map(|v| v + 0.1)).map_err(e)?;
    ensure!((p - 20.0).abs() <= 0.01, "offset PSNR {p}");
    let s = ssim(&a, &a).map_err(e)?;
    ensure!(s == 1.0, "ssim(a, a) = {s}");
    for i in 0..20 {
        let x = random_image(24, 28, 3, 200 + 2 * i);
        let y = random_image(24, 28, 3, 201 + 2 * i);
        ensure!(psnr(&x, &y).map_err(e)? == psnr(&y, &x).map_err(e)?, "psnr asymmetric on pair {i}");
        ensure!(ssim(&x, &y).map_err(e)? == ssim(&y, &x).map_err(e)?, "ssim asymmetric on pair {i}");
    }
    Ok(format!("offset PSNR {p:.4} dB, ssim(a,a) = {s}, 20 symmetric pairs"))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("in");
    fs::create_dir_all(&input).map_err(|e| e.to_string())?;
    write_sources(&input, 3, 70, 90);
    let policy = DatasetPolicy {
        crops_per_image: 2,
        oe_fraction: 0.5,
        ..small_policy(&input, 9)
    };
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    generate_dataset(&policy, &a, false).map_err(|e| e.to_string())?;
    generate_dataset(&policy, &b, false).map_err(|e| e.to_string())?;
    let (da, db) = (dir_bytes(&a), dir_bytes(&b));
    ensure!(da.len() == 13, "expected 13 files, found {}", da.len());
    ensure!(da == db, "repeated runs differ");
    let replay = replay_manifest(&a.join(MANIFEST_NAME), &c).map_err(|e| e.to_string())?;
    ensure!(replay.mismatched.is_empty(), "replay mismatches at {:?}", replay.mismatched);
    ensure!(dir_bytes(&c) == da, "replayed dataset differs");
    Ok(format!("{} files byte-identical across runs, {} records replayed", da.len(), replay.matched))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let cfg = GraphConfig::toy();
    let w = GraphWeights::seeded(&cfg, 10, 0.5);
    let sizes = [16, 100, 255, 512];
    let mut runs = 0;
    for &h in &sizes {
        for &wd in &sizes {
            let img = natural_image(h, wd, (h * 1000 + wd) as u64);
            let outs = easrn_forward(&img, &w, &cfg).map_err(|e| format!("{h}x{wd}: {e}"))?;
            let last = outs.last().ok_or("no output")?;
            ensure!(last.shape() == (h, wd, 3), "{h}x{wd} came back as {:?}", last.shape());
            ensure!(last.is_finite(), "{h}x{wd} has non-finite output");
            runs += 1;
        }
    }
    Ok(format!("{runs} sizes (4 square, 12 non-square) preserved, {:.1} s", start.elapsed().as_secs_f64()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("convolution-oracle equivalence", criterion_1),
        ("zero-motion identity", criterion_2),
        ("flow bound", criterion_3),
        ("saturation guarantee", criterion_4),
        ("residual identity", criterion_5),
        ("gradient checks", criterion_6),
        ("loss algebra", criterion_7),
        ("metrics", criterion_8),
        ("determinism", criterion_9),
        ("shape closure", criterion_10),
    ];
    // Keep panic messages out of the report; failures are printed below.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
