//! Runs the network over one image or a directory of images.

use std::path::{Path, PathBuf};

use easrn_core::graph::{load_weights, Easrn, GraphConfig, GraphWeights};

use crate::error::{CliError, Result};
use crate::imageio::{is_image_path, list_images, read_image, to_channels, write_png, BitDepth};

pub struct DeblurOptions {
    pub weights: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
    /// Directory for every scale's `x_i` and `y_i`, if wanted.
    pub dump_intermediates: Option<PathBuf>,
    pub scales: usize,
    /// Output depth; defaults to each input's own depth.
    pub bit_depth: Option<BitDepth>,
}

/// Network config recovered from the weight file's shapes.
pub fn config_for(weights: &GraphWeights, scales: usize) -> Result<GraphConfig> {
    let base = GraphConfig {
        n_scales: scales,
        ..GraphConfig::paper()
    };
    Ok(base.infer_from(weights)?)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn deblur_one(net: &Easrn, input: &Path, output: &Path, opts: &DeblurOptions) -> Result<()> {
    let loaded = read_image(input)?;
    let depth = opts.bit_depth.unwrap_or(loaded.depth);
    let img = to_channels(loaded.image, net.config().image_channels)?;
    let pass = net.forward(&img)?;
    write_png(output, pass.restored(), depth)?;
    if let Some(dir) = &opts.dump_intermediates {
        let s = stem(input);
        for (i, (x, y)) in pass.inputs.iter().zip(&pass.outputs).enumerate() {
            write_png(&dir.join(format!("{s}_x{}.png", i + 1)), x, depth)?;
            write_png(&dir.join(format!("{s}_y{}.png", i + 1)), y, depth)?;
        }
    }
    Ok(())
}

/// Returns the number of images written.
pub fn run_deblur(opts: &DeblurOptions) -> Result<usize> {
    let weights = load_weights(&opts.weights)?;
    let cfg = config_for(&weights, opts.scales)?;
    let net = Easrn::new(cfg, &weights)?;
    if opts.input.is_dir() {
        let inputs = list_images(&opts.input)?;
        if inputs.is_empty() {
            return Err(CliError::EmptySet(format!("no images in {}", opts.input.display())));
        }
        for input in &inputs {
            let name = format!("{}.png", stem(input));
            deblur_one(&net, input, &opts.output.join(name), opts)?;
        }
        Ok(inputs.len())
    } else {
        if !is_image_path(&opts.output) {
            return Err(CliError::Config(format!(
                "output {} must be a .png file when the input is a single image",
                opts.output.display()
            )));
        }
        deblur_one(&net, &opts.input, &opts.output, opts)?;
        Ok(1)
    }
}
