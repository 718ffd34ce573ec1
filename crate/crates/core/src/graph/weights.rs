use indexmap::IndexMap;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::seed::{derive_seed, rng_from_seed};

/// A named parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// One convolution (or transposed convolution) in the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl ConvSpec {
    pub fn new(name: impl Into<String>, kernel: usize, c_in: usize, c_out: usize) -> Self {
        ConvSpec {
            name: name.into(),
            kernel,
            c_in,
            c_out,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.kernel, self.kernel, self.c_in, self.c_out]
    }
}

/// Every convolution of the network, in evaluation order.
pub fn layout(cfg: &GraphConfig) -> Vec<ConvSpec> {
    let mut convs = Vec::new();
    let k = 3;
    let rir = |convs: &mut Vec<ConvSpec>, prefix: &str, c: usize| {
        for rb in ["rb1", "rb2"] {
            convs.push(ConvSpec::new(format!("{prefix}.{rb}.conv1"), k, c, c));
            convs.push(ConvSpec::new(format!("{prefix}.{rb}.conv2"), k, c, c));
        }
        convs.push(ConvSpec::new(format!("{prefix}.tail"), k, c, c));
    };

    let widths = cfg.encoder_widths();
    let img = cfg.image_channels;
    for (s, &c) in widths.iter().enumerate() {
        let c_in = if s == 0 { img } else { widths[s - 1] };
        convs.push(ConvSpec::new(format!("deblur.enc{s}.conv"), k, c_in, c));
        rir(&mut convs, &format!("deblur.enc{s}.rir"), c);
    }
    let bottleneck = *widths.last().expect("at least the stem");
    let branch = bottleneck / cfg.inception_kernels.len();
    for &ik in &cfg.inception_kernels {
        convs.push(ConvSpec::new(format!("deblur.inception.k{ik}"), ik, bottleneck, branch));
    }
    for s in (0..widths.len() - 1).rev() {
        convs.push(ConvSpec::new(format!("deblur.dec{s}.up"), k, widths[s + 1], widths[s]));
        rir(&mut convs, &format!("deblur.dec{s}.rir"), widths[s]);
    }
    convs.push(ConvSpec::new("deblur.out", k, widths[0], img));

    let u = cfg.upsample_channels;
    convs.push(ConvSpec::new("upsample.head", k, 2 * img, u));
    for r in 1..=3 {
        rir(&mut convs, &format!("upsample.rir{r}"), u);
    }
    convs.push(ConvSpec::new("upsample.proj", k, u, img));
    convs
}

/// Named parameter store for the network. Insertion order is preserved so
/// weight files round-trip byte for byte.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphWeights {
    entries: IndexMap<String, Param>,
}

impl GraphWeights {
    pub fn new() -> Self {
        Self::default()
    }

    /// All-zero weights for `cfg`; the network is then the identity at every scale.
    pub fn zeros(cfg: &GraphConfig) -> Self {
        let mut w = GraphWeights::new();
        for spec in layout(cfg) {
            w.insert(spec.weight_name(), Param::zeros(spec.weight_shape()));
            w.insert(spec.bias_name(), Param::zeros(vec![spec.c_out]));
        }
        w
    }

    /// He-scaled Gaussian filters times `gain`, zero biases. Each layer draws from
    /// its own seed so adding layers does not perturb the others.
    pub fn seeded(cfg: &GraphConfig, seed: u64, gain: f64) -> Self {
        let mut w = GraphWeights::new();
        for (i, spec) in layout(cfg).into_iter().enumerate() {
            let fan_in = (spec.kernel * spec.kernel * spec.c_in) as f64;
            let normal = Normal::new(0.0, gain * (2.0 / fan_in).sqrt()).expect("finite std");
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            let mut p = Param::zeros(spec.weight_shape());
            p.data.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            w.insert(spec.weight_name(), p);
            w.insert(spec.bias_name(), Param::zeros(vec![spec.c_out]));
        }
        w
    }

    pub fn insert(&mut self, name: impl Into<String>, param: Param) {
        self.entries.insert(name.into(), param);
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.values().map(Param::len).sum()
    }

    /// Checks that every layer of `cfg` is present with the right shape and
    /// finite values.
    pub fn validate(&self, cfg: &GraphConfig) -> Result<()> {
        for spec in layout(cfg) {
            for (name, shape) in [
                (spec.weight_name(), spec.weight_shape()),
                (spec.bias_name(), vec![spec.c_out]),
            ] {
                let p = self.get(&name).ok_or_else(|| Error::MissingWeight(name.clone()))?;
                if p.shape != shape {
                    return Err(Error::WeightShape {
                        name,
                        expected: shape,
                        actual: p.shape.clone(),
                    });
                }
                if p.data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Format(format!("entry `{name}` has non-finite values")));
                }
            }
        }
        Ok(())
    }

    /// Adds `grad` into the entry `name`, creating a zero entry of `shape` first.
    pub(crate) fn accumulate(&mut self, name: String, shape: Vec<usize>, grad: &[f64]) {
        let p = self.entries.entry(name).or_insert_with(|| Param::zeros(shape));
        p.data.iter_mut().zip(grad).for_each(|(a, g)| *a += g);
    }

    /// Same entries with every value passed through `f32`, matching what a
    /// weight file stores.
    pub fn quantized_f32(&self) -> Self {
        GraphWeights {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            shape: p.shape.clone(),
                            data: p.data.iter().map(|&v| v as f32 as f64).collect(),
                        },
                    )
                })
                .collect(),
        }
    }
}
