//! Random camera-motion trajectories.
//!
//! The camera path is a Markov walk over `(position, velocity)`: each step adds
//! Gaussian acceleration, a pull back toward the origin, and occasionally a
//! larger jerk. The raw walk is then rescaled so its max-norm extent stays
//! within `max_shift` pixels.

use rand_distr::{Distribution, Normal, StandardUniform};

use crate::error::{Error, Result};
use crate::seed::{rng_from_seed, Rng};

/// Multiplier applied to `step_sigma` for impulse jerks.
pub const IMPULSE_SCALE: f64 = 5.0;

/// Time-ordered `(dx, dy)` displacements relative to the start pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, f64)>,
}

impl Trajectory {
    /// Wraps a sample list. The first sample must be the origin.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("trajectory must have at least one sample".into()));
        }
        if samples[0] != (0.0, 0.0) {
            return Err(Error::Config("trajectory must start at (0, 0)".into()));
        }
        if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Config("trajectory samples must be finite".into()));
        }
        Ok(Trajectory { samples })
    }

    /// A trajectory of `n` samples that never leaves the origin.
    pub fn stationary(n: usize) -> Self {
        Trajectory {
            samples: vec![(0.0, 0.0); n.max(1)],
        }
    }

    /// Straight-line motion from the origin to `(dx, dy)` in `n` samples.
    pub fn linear(dx: f64, dy: f64, n: usize) -> Self {
        let n = n.max(1);
        if n == 1 {
            return Self::stationary(1);
        }
        let denom = (n - 1) as f64;
        Trajectory {
            samples: (0..n)
                .map(|i| (dx * i as f64 / denom, dy * i as f64 / denom))
                .collect(),
        }
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest `max(|dx|, |dy|)` over all samples.
    pub fn max_extent(&self) -> f64 {
        self.samples
            .iter()
            .map(|(x, y)| x.abs().max(y.abs()))
            .fold(0.0, f64::max)
    }

    /// Arithmetic mean displacement (the centroid of the blur kernel).
    pub fn mean_displacement(&self) -> (f64, f64) {
        let n = self.samples.len() as f64;
        let (sx, sy) = self
            .samples
            .iter()
            .fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x, ay + y));
        (sx / n, sy / n)
    }

    /// Interleaved `[dx0, dy0, dx1, dy1, ...]` for manifests.
    pub fn to_flat(&self) -> Vec<f64> {
        self.samples.iter().flat_map(|&(x, y)| [x, y]).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::Config("flat trajectory has odd length".into()));
        }
        Self::new(flat.chunks_exact(2).map(|p| (p[0], p[1])).collect())
    }
}

/// Parameters of the camera-motion walk.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionConfig {
    pub num_samples: usize,
    /// Max-norm bound on any displacement, in pixels.
    pub max_shift: f64,
    /// Standard deviation of the per-step acceleration, in pixels.
    pub step_sigma: f64,
    /// Fraction of the current position subtracted from the velocity each step.
    pub centripetal_gain: f64,
    /// Per-step probability of an extra `IMPULSE_SCALE × step_sigma` kick.
    pub impulse_prob: f64,
    pub seed: u64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            num_samples: 100,
            max_shift: 30.0,
            step_sigma: 0.5,
            centripetal_gain: 0.02,
            impulse_prob: 0.02,
            seed: 0,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be at least 1".into()));
        }
        if !(self.max_shift > 0.0 && self.max_shift.is_finite()) {
            return Err(Error::Config(format!(
                "max_shift must be positive, got {}",
                self.max_shift
            )));
        }
        if !(self.step_sigma >= 0.0 && self.step_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "step_sigma must be non-negative, got {}",
                self.step_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.impulse_prob) {
            return Err(Error::Config(format!(
                "impulse_prob must be in [0, 1], got {}",
                self.impulse_prob
            )));
        }
        if !self.centripetal_gain.is_finite() {
            return Err(Error::Config("centripetal_gain must be finite".into()));
        }
        Ok(())
    }
}

/// Full state of the motion walk. Cloning it mid-walk and stepping both copies
/// yields identical suffixes.
#[derive(Clone, Debug)]
pub struct MotionWalk {
    position: (f64, f64),
    velocity: (f64, f64),
    step_sigma: f64,
    centripetal_gain: f64,
    impulse_prob: f64,
    rng: Rng,
}

impl MotionWalk {
    pub fn new(config: &MotionConfig) -> Result<Self> {
        config.validate()?;
        Ok(MotionWalk {
            position: (0.0, 0.0),
            velocity: (0.0, 0.0),
            step_sigma: config.step_sigma,
            centripetal_gain: config.centripetal_gain,
            impulse_prob: config.impulse_prob,
            rng: rng_from_seed(config.seed),
        })
    }

    pub fn position(&self) -> (f64, f64) {
        self.position
    }

    pub fn velocity(&self) -> (f64, f64) {
        self.velocity
    }

    /// Advances one step and returns the new position.
    pub fn step(&mut self) -> (f64, f64) {
        let (ax, ay) = if self.step_sigma > 0.0 {
            let normal = Normal::new(0.0, self.step_sigma).expect("sigma validated");
            let mut a = (normal.sample(&mut self.rng), normal.sample(&mut self.rng));
            let u: f64 = StandardUniform.sample(&mut self.rng);
            if u < self.impulse_prob {
                let kick = Normal::new(0.0, IMPULSE_SCALE * self.step_sigma).expect("sigma validated");
                a.0 += kick.sample(&mut self.rng);
                a.1 += kick.sample(&mut self.rng);
            }
            a
        } else {
            (0.0, 0.0)
        };
        let (px, py) = self.position;
        self.velocity.0 += ax - self.centripetal_gain * px;
        self.velocity.1 += ay - self.centripetal_gain * py;
        self.position = (px + self.velocity.0, py + self.velocity.1);
        self.position
    }
}

/// Raw (unscaled) walk of `n` samples starting at the origin.
pub fn raw_walk(config: &MotionConfig) -> Result<Vec<(f64, f64)>> {
    let mut walk = MotionWalk::new(config)?;
    let mut samples = Vec::with_capacity(config.num_samples);
    samples.push((0.0, 0.0));
    for _ in 1..config.num_samples {
        samples.push(walk.step());
    }
    Ok(samples)
}

/// Generates a seeded camera trajectory bounded by `config.max_shift`.
pub fn generate_trajectory(config: &MotionConfig) -> Result<Trajectory> {
    let traj = Trajectory::new(raw_walk(config)?)?;
    Ok(rescale_trajectory(&traj, config.max_shift))
}

/// Uniformly scales `traj` so its max-norm extent is `min(extent, max_shift)`.
pub fn rescale_trajectory(traj: &Trajectory, max_shift: f64) -> Trajectory {
    let extent = traj.max_extent();
    if extent <= max_shift || extent == 0.0 {
        return traj.clone();
    }
    let k = max_shift / extent;
    let samples = traj
        .samples
        .iter()
        .map(|&(x, y)| {
            // Rounding in `x * k` can land one ulp past the bound.
            ((x * k).clamp(-max_shift, max_shift), (y * k).clamp(-max_shift, max_shift))
        })
        .collect();
    Trajectory { samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n: usize, seed: u64) -> MotionConfig {
        MotionConfig {
            num_samples: n,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn single_sample_is_origin() {
        for seed in [0, 1, 99] {
            let t = generate_trajectory(&cfg(1, seed)).unwrap();
            assert_eq!(t.samples(), &[(0.0, 0.0)]);
        }
    }

    #[test]
    fn zero_variance_walk_stays_put() {
        let c = MotionConfig {
            num_samples: 10,
            step_sigma: 0.0,
            impulse_prob: 0.0,
            ..cfg(10, 3)
        };
        let t = generate_trajectory(&c).unwrap();
        assert_eq!(t.len(), 10);
        assert!(t.samples().iter().all(|&s| s == (0.0, 0.0)));
    }

    #[test]
    fn bounded_by_max_shift() {
        let c = MotionConfig {
            num_samples: 200,
            seed: 7,
            max_shift: 30.0,
            ..Default::default()
        };
        let t = generate_trajectory(&c).unwrap();
        assert_eq!(t.len(), 200);
        assert!(t.max_extent() <= 30.0);
        assert!(t.max_extent() > 0.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate_trajectory(&cfg(0, 0)).is_err());
        let neg = MotionConfig {
            step_sigma: -1.0,
            ..Default::default()
        };
        assert!(generate_trajectory(&neg).is_err());
        let p = MotionConfig {
            impulse_prob: 1.5,
            ..Default::default()
        };
        assert!(generate_trajectory(&p).is_err());
        let m = MotionConfig {
            max_shift: 0.0,
            ..Default::default()
        };
        assert!(generate_trajectory(&m).is_err());
    }

    #[test]
    fn rescale_cases() {
        let zero = Trajectory::stationary(5);
        assert_eq!(rescale_trajectory(&zero, 30.0), zero);

        let big = Trajectory::new(vec![(0.0, 0.0), (60.0, -20.0), (10.0, 40.0)]).unwrap();
        let r = rescale_trajectory(&big, 30.0);
        for (a, b) in big.samples().iter().zip(r.samples()) {
            assert_eq!(b.0, a.0 / 2.0);
            assert_eq!(b.1, a.1 / 2.0);
        }

        let small = Trajectory::new(vec![(0.0, 0.0), (12.0, -3.0)]).unwrap();
        assert_eq!(rescale_trajectory(&small, 30.0), small);
    }

    #[test]
    fn walk_suffix_is_reproducible_from_state() {
        let c = cfg(50, 11);
        let mut walk = MotionWalk::new(&c).unwrap();
        for _ in 0..20 {
            walk.step();
        }
        let mut copy = walk.clone();
        let a: Vec<_> = (0..30).map(|_| walk.step()).collect();
        let b: Vec<_> = (0..30).map(|_| copy.step()).collect();
        assert_eq!(a, b);

        let full = raw_walk(&c).unwrap();
        let mut replay = MotionWalk::new(&c).unwrap();
        let mut prefix = vec![(0.0, 0.0)];
        for _ in 1..20 {
            prefix.push(replay.step());
        }
        let state = replay.clone();
        let mut resumed = state;
        let suffix: Vec<_> = (20..50).map(|_| resumed.step()).collect();
        assert_eq!(&full[20..], &suffix[..]);
    }

    #[test]
    fn flat_round_trip() {
        let t = generate_trajectory(&cfg(17, 5)).unwrap();
        assert_eq!(Trajectory::from_flat(&t.to_flat()).unwrap(), t);
        assert!(Trajectory::from_flat(&[0.0, 0.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn deterministic_and_bounded(seed in any::<u64>(), n in 1usize..300, shift in 0.5f64..60.0) {
            let c = MotionConfig { num_samples: n, seed, max_shift: shift, ..Default::default() };
            let a = generate_trajectory(&c).unwrap();
            let b = generate_trajectory(&c).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), n);
            prop_assert_eq!(a.samples()[0], (0.0, 0.0));
            prop_assert!(a.max_extent() <= shift);
        }
    }
}
