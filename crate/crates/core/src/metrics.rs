//! Full-reference quality metrics.

use crate::error::Result;
use crate::image::ImagePlane;
use crate::par;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean squared error over all samples of all channels.
pub fn mse(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.check_same_shape(b, "mse")?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / a.len() as f64)
}

/// Peak signal-to-noise ratio for unit-range images, `10 log10(1 / MSE)`.
/// Identical images give `f64::INFINITY`.
pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(len: usize, sigma: f64) -> Vec<f64> {
    let r = (len / 2) as f64;
    let raw: Vec<f64> = (0..len)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable filtering over fully-contained windows only.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    par::for_each_chunk_mut(&mut rows, ow, |y, dst| {
        let src = &plane[y * w..(y + 1) * w];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = taps.iter().zip(&src[x..x + k]).map(|(t, s)| t * s).sum();
        }
    });
    let mut out = vec![0.0; oh * ow];
    par::for_each_chunk_mut(&mut out, ow, |y, dst| {
        for (t, tap) in taps.iter().enumerate() {
            let src = &rows[(y + t) * ow..(y + t + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += tap * s;
            }
        }
    });
    (out, oh, ow)
}

/// Window side used for an `h × w` image: 11, or the largest odd size that fits.
pub fn ssim_window(h: usize, w: usize) -> usize {
    let m = h.min(w).min(SSIM_WINDOW);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Per-window SSIM map on luma (Gaussian window, σ = 1.5, unit dynamic range).
pub fn ssim_map(a: &ImagePlane, b: &ImagePlane) -> Result<ImagePlane> {
    a.check_same_shape(b, "ssim")?;
    let la = a.luma();
    let lb = b.luma();
    let (h, w) = la.dims();
    let taps = gaussian_taps(ssim_window(h, w), SSIM_SIGMA);
    let pa = la.as_slice();
    let pb = lb.as_slice();
    let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = pa.iter().zip(pb).map(|(p, q)| p * q).collect();

    let (mu_a, oh, ow) = filter_valid(pa, h, w, &taps);
    let (mu_b, _, _) = filter_valid(pb, h, w, &taps);
    let (e_aa, _, _) = filter_valid(&aa, h, w, &taps);
    let (e_bb, _, _) = filter_valid(&bb, h, w, &taps);
    let (e_ab, _, _) = filter_valid(&ab, h, w, &taps);

    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let map = (0..oh * ow)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .collect();
    ImagePlane::from_vec(oh, ow, 1, map)
}

/// Mean structural similarity.
pub fn ssim(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    Ok(ssim_map(a, b)?.mean())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_image(h: usize, w: usize, c: usize, salt: usize) -> ImagePlane {
        ImagePlane::from_fn(h, w, c, |ch, y, x| {
            (((ch * 131 + y * 71 + x * 37 + salt * 1009) * 2654435761usize) % 10007) as f64 / 10007.0
        })
    }

    #[test]
    fn psnr_cases() {
        let a = noise_image(16, 16, 3, 1).map(|v| v * 0.8);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &ImagePlane::zeros(16, 15, 3)).is_err());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = noise_image(24, 30, 3, 2);
        let b = noise_image(24, 30, 3, 3);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        let s = ssim(&a, &b).unwrap();
        assert!((-1.0..1.0).contains(&s));
    }

    #[test]
    fn small_images_shrink_window() {
        assert_eq!(ssim_window(64, 64), 11);
        assert_eq!(ssim_window(8, 64), 7);
        assert_eq!(ssim_window(1, 1), 1);
        let a = noise_image(6, 6, 1, 4);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn taps_sum_to_one() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }
}
