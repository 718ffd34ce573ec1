//! The scale-recurrent deblurring network.
//!
//! The blurred input is decomposed into an `N`-level pyramid `b_1 … b_N`.
//! Starting from `x_1 = b_1`, each scale runs the deblurring subnet
//! `y_i = Deblur(x_i)`, and the upsampling subnet seeds the next scale with
//! `x_{i+1} = Upsample(y_i, b_{i+1})`. Both subnets share their weights
//! across scales; `y_N` is the restored image.
//!
//! Every subnet ends in a residual connection, so all-zero weights make the
//! whole network return `y_i = b_i` exactly.

pub mod blocks;
pub mod io;
pub mod ops;
pub mod weights;

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::pyramid::{decompose, separable_filter_adjoint, Pyramid, BINOMIAL5};

pub use blocks::SubnetShape;
pub use io::{load_weights, read_weights, save_weights, write_weights};
pub use weights::{layout, ConvSpec, GraphWeights, Param};

/// Network hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphConfig {
    /// Channels of the images fed to the network (1 or 3).
    pub image_channels: usize,
    /// Width of the encoder stem; each pooled stage doubles it.
    pub base_channels: usize,
    /// Width of the residual-in-residual blocks in the upsampling subnet.
    pub upsample_channels: usize,
    pub n_scales: usize,
    /// Pooled encoder stages after the stem.
    pub encoder_stages: usize,
    pub lrelu_slope: f64,
    pub inception_kernels: Vec<usize>,
}

impl GraphConfig {
    /// Full-size channel plan: 32/64/128/256 encoder, 32-wide upsampling subnet.
    pub fn paper() -> Self {
        GraphConfig {
            image_channels: 3,
            base_channels: 32,
            upsample_channels: 32,
            n_scales: 3,
            encoder_stages: 3,
            lrelu_slope: 0.2,
            inception_kernels: vec![1, 3, 5, 7],
        }
    }

    /// Narrow variant for tests and desk-scale runs.
    pub fn toy() -> Self {
        GraphConfig {
            base_channels: 4,
            upsample_channels: 4,
            ..Self::paper()
        }
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        (0..=self.encoder_stages).map(|s| self.base_channels << s).collect()
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.base_channels << self.encoder_stages
    }

    pub fn subnet_shape(&self) -> SubnetShape {
        SubnetShape {
            encoder_stages: self.encoder_stages,
            inception_kernels: self.inception_kernels.clone(),
            slope: self.lrelu_slope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.upsample_channels == 0 || self.image_channels == 0 {
            return Err(Error::Config("channel counts must be at least 1".into()));
        }
        if self.n_scales == 0 {
            return Err(Error::Config("n_scales must be at least 1".into()));
        }
        if self.inception_kernels.is_empty() || self.inception_kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::Config(format!(
                "inception kernels must be odd, got {:?}",
                self.inception_kernels
            )));
        }
        if self.bottleneck_channels() % self.inception_kernels.len() != 0 {
            return Err(Error::Config(format!(
                "bottleneck width {} does not split into {} inception branches",
                self.bottleneck_channels(),
                self.inception_kernels.len()
            )));
        }
        if !(self.lrelu_slope.is_finite()) {
            return Err(Error::Config("lrelu_slope must be finite".into()));
        }
        Ok(())
    }

    /// Recovers the channel plan from a weight store, keeping `n_scales`,
    /// `encoder_stages`, slope and inception kernels from `self`.
    pub fn infer_from(&self, weights: &GraphWeights) -> Result<Self> {
        let shape_of = |name: &str| {
            weights
                .get(name)
                .map(|p| p.shape.clone())
                .ok_or_else(|| Error::MissingWeight(name.to_string()))
        };
        let stem = shape_of("deblur.enc0.conv.w")?;
        let head = shape_of("upsample.head.w")?;
        if stem.len() != 4 || head.len() != 4 {
            return Err(Error::Format("convolution weights must have rank 4".into()));
        }
        let cfg = GraphConfig {
            image_channels: stem[2],
            base_channels: stem[3],
            upsample_channels: head[3],
            ..self.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-scale state recorded by [`Easrn::forward`].
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// `b_1 … b_N`, coarsest first.
    pub blurred: Pyramid,
    /// Subnet inputs `x_1 … x_N`.
    pub inputs: Vec<ImagePlane>,
    /// Latent images `y_1 … y_N`.
    pub outputs: Vec<ImagePlane>,
    deblur: Vec<blocks::DeblurCache>,
    upsample: Vec<blocks::UpsampleCache>,
}

impl ForwardPass {
    pub fn restored(&self) -> &ImagePlane {
        self.outputs.last().expect("at least one scale")
    }
}

/// Gradients from [`Easrn::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    /// Parameter gradients, summed over scales.
    pub weights: GraphWeights,
    /// Gradient with respect to each pyramid level `b_i`.
    pub pyramid: Vec<ImagePlane>,
    /// Gradient with respect to the full-resolution blurred input.
    pub input: ImagePlane,
}

/// A validated network ready to evaluate.
#[derive(Clone, Debug)]
pub struct Easrn<'w> {
    config: GraphConfig,
    weights: &'w GraphWeights,
}

impl<'w> Easrn<'w> {
    pub fn new(config: GraphConfig, weights: &'w GraphWeights) -> Result<Self> {
        config.validate()?;
        weights.validate(&config)?;
        Ok(Easrn { config, weights })
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn forward(&self, blurred: &ImagePlane) -> Result<ForwardPass> {
        if blurred.channels() != self.config.image_channels {
            return Err(Error::shape(
                "easrn input channels",
                self.config.image_channels,
                blurred.channels(),
            ));
        }
        let pyramid = decompose(blurred, self.config.n_scales)?;
        let shape = self.config.subnet_shape();
        let slope = self.config.lrelu_slope;
        let n = pyramid.len();
        let mut inputs = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        let mut deblur = Vec::with_capacity(n);
        let mut upsample = Vec::with_capacity(n.saturating_sub(1));

        let mut x = pyramid.coarsest().clone();
        for i in 0..n {
            let (y, cache) = blocks::deblur_subnet(self.weights, &shape, &x)?;
            inputs.push(x);
            deblur.push(cache);
            if i + 1 < n {
                let (next, cache) = blocks::upsample_subnet(self.weights, slope, &y, &pyramid.levels()[i + 1])?;
                upsample.push(cache);
                x = next;
            } else {
                x = ImagePlane::zeros(1, 1, 1);
            }
            outputs.push(y);
        }
        Ok(ForwardPass {
            blurred: pyramid,
            inputs,
            outputs,
            deblur,
            upsample,
        })
    }

    /// Back-propagates `output_grads[i] = dL/dy_i` (coarsest first) through
    /// the recorded pass.
    pub fn backward(&self, pass: &ForwardPass, output_grads: &[ImagePlane]) -> Result<Gradients> {
        let n = pass.outputs.len();
        if output_grads.len() != n {
            return Err(Error::shape("easrn backward scales", n, output_grads.len()));
        }
        for (g, y) in output_grads.iter().zip(&pass.outputs) {
            g.check_same_shape(y, "easrn backward gradient")?;
        }
        let shape = self.config.subnet_shape();
        let slope = self.config.lrelu_slope;
        let mut grads = GraphWeights::new();
        let mut dpyr: Vec<ImagePlane> = pass
            .blurred
            .levels()
            .iter()
            .map(|b| ImagePlane::zeros(b.height(), b.width(), b.channels()))
            .collect();

        let mut carry: Option<ImagePlane> = None;
        for i in (0..n).rev() {
            let mut dy = output_grads[i].clone();
            if let Some(c) = carry.take() {
                dy.add_assign(&c);
            }
            let dx = blocks::deblur_subnet_backward(self.weights, &shape, &pass.deblur[i], &dy, &mut grads)?;
            if i == 0 {
                dpyr[0].add_assign(&dx);
            } else {
                let (dlatent, db) =
                    blocks::upsample_subnet_backward(self.weights, slope, &pass.upsample[i - 1], &dx, &mut grads)?;
                dpyr[i].add_assign(&db);
                carry = Some(dlatent);
            }
        }

        // Fill in zero gradients for parameters the pass never touched.
        let mut weights = GraphWeights::new();
        for (name, p) in self.weights.iter() {
            let g = grads.get(name).cloned().unwrap_or_else(|| Param::zeros(p.shape.clone()));
            weights.insert(name.clone(), g);
        }

        let input = pyramid_adjoint(&dpyr);
        Ok(Gradients {
            weights,
            pyramid: dpyr,
            input,
        })
    }
}

/// Folds per-level gradients back onto the finest level through the
/// smooth-and-decimate chain.
fn pyramid_adjoint(levels: &[ImagePlane]) -> ImagePlane {
    let mut acc = levels[0].clone();
    for finer in &levels[1..] {
        let (h, w, ch) = finer.shape();
        let mut up = ImagePlane::zeros(h, w, ch);
        for c in 0..ch {
            for y in 0..acc.height() {
                for x in 0..acc.width() {
                    up.set(c, 2 * y, 2 * x, acc.get(c, y, x));
                }
            }
        }
        acc = separable_filter_adjoint(&up, &BINOMIAL5);
        acc.add_assign(finer);
    }
    acc
}

/// Runs the network and returns every scale's latent image, coarsest first.
pub fn easrn_forward(blurred: &ImagePlane, weights: &GraphWeights, config: &GraphConfig) -> Result<Vec<ImagePlane>> {
    Ok(Easrn::new(config.clone(), weights)?.forward(blurred)?.outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_channel_plan() {
        let cfg = GraphConfig::paper();
        assert_eq!(cfg.encoder_widths(), vec![32, 64, 128, 256]);
        let specs = layout(&cfg);
        let inception: Vec<_> = specs.iter().filter(|s| s.name.starts_with("deblur.inception")).collect();
        assert_eq!(inception.iter().map(|s| s.kernel).collect::<Vec<_>>(), vec![1, 3, 5, 7]);
        assert!(inception.iter().all(|s| s.c_in == 256 && s.c_out == 64));
        assert_eq!(inception.iter().map(|s| s.c_out).sum::<usize>(), 256);
        for s in specs.iter().filter(|s| s.name.starts_with("upsample.rir")) {
            assert_eq!((s.c_in, s.c_out, s.kernel), (32, 32, 3));
        }
        for s in specs.iter().filter(|s| !s.name.starts_with("deblur.inception")) {
            assert_eq!(s.kernel, 3, "{}", s.name);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = GraphConfig::toy();
        cfg.inception_kernels = vec![1, 2];
        assert!(cfg.validate().is_err());
        let mut cfg = GraphConfig::toy();
        cfg.base_channels = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = GraphConfig::toy();
        cfg.inception_kernels = vec![1, 3, 5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn infer_config_from_weights() {
        let mut cfg = GraphConfig::toy();
        cfg.base_channels = 8;
        cfg.upsample_channels = 6;
        cfg.image_channels = 1;
        let w = GraphWeights::zeros(&cfg);
        assert_eq!(GraphConfig::toy().infer_from(&w).unwrap(), cfg);
    }

    #[test]
    fn missing_entry_is_named() {
        let cfg = GraphConfig::toy();
        let mut w = GraphWeights::new();
        for (k, p) in GraphWeights::zeros(&cfg).iter() {
            if k != "upsample.rir2.tail.b" {
                w.insert(k.clone(), p.clone());
            }
        }
        match Easrn::new(cfg, &w) {
            Err(Error::MissingWeight(name)) => assert_eq!(name, "upsample.rir2.tail.b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pyramid_adjoint_matches_inner_product() {
        let img = ImagePlane::from_fn(11, 9, 1, |_, y, x| ((y * 7 + x * 3) % 5) as f64 * 0.2);
        let pyr = decompose(&img, 3).unwrap();
        let gs: Vec<ImagePlane> = pyr
            .levels()
            .iter()
            .enumerate()
            .map(|(i, l)| ImagePlane::from_fn(l.height(), l.width(), 1, |_, y, x| ((i + y * 3 + x) % 4) as f64 - 1.5))
            .collect();
        let lhs: f64 = pyr
            .levels()
            .iter()
            .zip(&gs)
            .map(|(l, g)| l.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let adj = pyramid_adjoint(&gs);
        let rhs: f64 = img.as_slice().iter().zip(adj.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
