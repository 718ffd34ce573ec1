//! PNG/JPEG decoding into float planes and 8/16-bit PNG encoding.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use easrn_core::ImagePlane;
use image::codecs::png::PngEncoder;
use image::{ColorType, ImageEncoder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

impl BitDepth {
    pub fn from_bits(bits: u8) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            _ => Err(CliError::Config(format!("bit depth must be 8 or 16, got {bits}"))),
        }
    }
}

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && is_image_path(&path) {
            out.push(path);
        }
    }
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(out)
}

/// Decoded image plus the bit depth it was stored with.
pub struct Loaded {
    pub image: ImagePlane,
    pub depth: BitDepth,
}

/// Reads an image as RGB floats in `[0, 1]`. Grayscale files are expanded to
/// three equal channels.
pub fn read_image(path: &Path) -> Result<Loaded> {
    let img = image::open(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let sixteen = matches!(
        img.color(),
        ColorType::L16 | ColorType::La16 | ColorType::Rgb16 | ColorType::Rgba16
    );
    let (w, h) = (img.width() as usize, img.height() as usize);
    let image = if sixteen {
        let buf = img.to_rgb16();
        let raw = buf.as_raw();
        ImagePlane::from_fn(h, w, 3, |c, y, x| raw[(y * w + x) * 3 + c] as f64 / 65535.0)
    } else {
        let buf = img.to_rgb8();
        let raw = buf.as_raw();
        ImagePlane::from_fn(h, w, 3, |c, y, x| raw[(y * w + x) * 3 + c] as f64 / 255.0)
    };
    Ok(Loaded {
        image,
        depth: if sixteen { BitDepth::Sixteen } else { BitDepth::Eight },
    })
}

/// PNG bytes for `img` (1 or 3 channels), clamped to `[0, 1]` and rounded.
pub fn encode_png(img: &ImagePlane, depth: BitDepth) -> Result<Vec<u8>> {
    let (h, w, ch) = img.shape();
    if ch != 1 && ch != 3 {
        return Err(CliError::Config(format!("cannot write a {ch}-channel image as PNG")));
    }
    let quantize = |v: f64, max: f64| (v.clamp(0.0, 1.0) * max).round();
    let mut out = Vec::new();
    let encoder = PngEncoder::new(&mut out);
    let color_err = |source| CliError::Image {
        path: PathBuf::from("<png>"),
        source,
    };
    match depth {
        BitDepth::Eight => {
            let mut buf = Vec::with_capacity(h * w * ch);
            for y in 0..h {
                for x in 0..w {
                    for c in 0..ch {
                        buf.push(quantize(img.get(c, y, x), 255.0) as u8);
                    }
                }
            }
            let ct = if ch == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
            encoder.write_image(&buf, w as u32, h as u32, ct).map_err(color_err)?;
        }
        BitDepth::Sixteen => {
            // The encoder takes native-endian samples and swaps them itself.
            let mut buf = Vec::with_capacity(h * w * ch * 2);
            for y in 0..h {
                for x in 0..w {
                    for c in 0..ch {
                        buf.extend_from_slice(&(quantize(img.get(c, y, x), 65535.0) as u16).to_ne_bytes());
                    }
                }
            }
            let ct = if ch == 1 { image::ExtendedColorType::L16 } else { image::ExtendedColorType::Rgb16 };
            encoder.write_image(&buf, w as u32, h as u32, ct).map_err(color_err)?;
        }
    }
    Ok(out)
}

/// Writes `bytes` through a temporary sibling and a rename, so a crash never
/// leaves a truncated file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Encodes and writes a PNG; returns the SHA-256 of the written bytes.
pub fn write_png(path: &Path, img: &ImagePlane, depth: BitDepth) -> Result<String> {
    let bytes = encode_png(img, depth)?;
    write_atomic(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Converts between the RGB planes the reader produces and what a consumer
/// expects: 3 channels pass through, 1 channel takes luma.
pub fn to_channels(img: ImagePlane, channels: usize) -> Result<ImagePlane> {
    match (img.channels(), channels) {
        (a, b) if a == b => Ok(img),
        (3, 1) => Ok(img.luma()),
        (1, 3) => {
            let p = img.plane(0).to_vec();
            let (h, w) = img.dims();
            Ok(ImagePlane::from_fn(h, w, 3, |_, y, x| p[y * w + x]))
        }
        (a, b) => Err(CliError::Config(format!("cannot convert {a}-channel image to {b} channels"))),
    }
}
