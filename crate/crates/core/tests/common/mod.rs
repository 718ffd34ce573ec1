#![allow(dead_code)]

use easrn_core::graph::{GraphWeights, Param};
use easrn_core::ImagePlane;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rand_image(h: usize, w: usize, c: usize, seed: u64) -> ImagePlane {
    rand_image_in(h, w, c, seed, 0.0, 1.0)
}

pub fn rand_image_in(h: usize, w: usize, c: usize, seed: u64, lo: f64, hi: f64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImagePlane::from_fn(h, w, c, |_, _, _| rng.random_range(lo..hi))
}

pub fn rand_vec(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Direct zero-padded "same" cross-correlation, written without any shared
/// code from the crate.
pub fn naive_conv(x: &ImagePlane, w: &[f64], b: &[f64], k: usize, cin: usize, cout: usize, stride: usize) -> ImagePlane {
    let (h, wd, _) = x.shape();
    let oh = (h + stride - 1) / stride;
    let ow = (wd + stride - 1) / stride;
    let p = (k / 2) as isize;
    ImagePlane::from_fn(oh, ow, cout, |co, oy, ox| {
        let mut s = b[co];
        for ci in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * stride) as isize + ky as isize - p;
                    let ix = (ox * stride) as isize + kx as isize - p;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                        s += w[((ky * k + kx) * cin + ci) * cout + co] * x.get(ci, iy as usize, ix as usize);
                    }
                }
            }
        }
        s
    })
}

pub fn naive_lrelu(x: &ImagePlane, slope: f64) -> ImagePlane {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn plus(a: &ImagePlane, b: &ImagePlane) -> ImagePlane {
    a.zip_map(b, |p, q| p + q)
}

pub fn dot(a: &ImagePlane, b: &ImagePlane) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| p * q).sum()
}

pub fn max_abs_diff(a: &ImagePlane, b: &ImagePlane) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

pub fn flatten(w: &GraphWeights) -> Vec<f64> {
    w.iter().flat_map(|(_, p)| p.data.iter().copied()).collect()
}

pub fn unflatten(template: &GraphWeights, flat: &[f64]) -> GraphWeights {
    let mut out = GraphWeights::new();
    let mut at = 0;
    for (name, p) in template.iter() {
        let n = p.data.len();
        out.insert(name.clone(), Param { shape: p.shape.clone(), data: flat[at..at + n].to_vec() });
        at += n;
    }
    out
}

/// Weights for the listed convolutions, filled with seeded values.
pub fn conv_weights(specs: &[(&str, usize, usize, usize)], seed: u64, scale: f64) -> GraphWeights {
    let mut w = GraphWeights::new();
    for (i, &(name, k, cin, cout)) in specs.iter().enumerate() {
        w.insert(format!("{name}.w"), Param { shape: vec![k, k, cin, cout], data: rand_vec(k * k * cin * cout, seed + 2 * i as u64, scale) });
        w.insert(format!("{name}.b"), Param { shape: vec![cout], data: rand_vec(cout, seed + 2 * i as u64 + 1, scale * 0.5) });
    }
    w
}

pub fn rir_specs(prefix: &str, c: usize) -> Vec<(String, usize, usize, usize)> {
    let mut v = Vec::new();
    for rb in ["rb1", "rb2"] {
        v.push((format!("{prefix}.{rb}.conv1"), 3, c, c));
        v.push((format!("{prefix}.{rb}.conv2"), 3, c, c));
    }
    v.push((format!("{prefix}.tail"), 3, c, c));
    v
}

pub fn owned_conv_weights(specs: &[(String, usize, usize, usize)], seed: u64, scale: f64) -> GraphWeights {
    let borrowed: Vec<(&str, usize, usize, usize)> = specs.iter().map(|(n, k, i, o)| (n.as_str(), *k, *i, *o)).collect();
    conv_weights(&borrowed, seed, scale)
}

pub fn conv_of(w: &GraphWeights, name: &str, x: &ImagePlane, stride: usize) -> ImagePlane {
    let p = w.get(&format!("{name}.w")).unwrap();
    let b = w.get(&format!("{name}.b")).unwrap();
    naive_conv(x, &p.data, &b.data, p.shape[0], p.shape[2], p.shape[3], stride)
}
