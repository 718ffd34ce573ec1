//! Central finite-difference checks for hand-written gradients.
//!
//! The numeric side only ever evaluates the forward function, so it shares
//! no code with the backward passes it checks.

use rand::Rng as _;

use crate::seed::rng_from_seed;

/// Denominator floor for relative errors near zero.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, step: f64) -> f64 {
    let mut probe = x.to_vec();
    probe[i] = x[i] + step;
    let up = f(&probe);
    probe[i] = x[i] - step;
    let down = f(&probe);
    (up - down) / (2.0 * step)
}

#[derive(Clone, Debug)]
pub struct ProbeResult {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    pub probes: Vec<ProbeResult>,
}

impl GradientReport {
    pub fn max_relative_error(&self) -> f64 {
        self.probes.iter().map(|p| p.relative_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ProbeResult> {
        self.probes
            .iter()
            .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

/// `count` distinct seeded indices into `0..len` (all of them if `count >= len`).
pub fn probe_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= len {
        return (0..len).collect();
    }
    let mut rng = rng_from_seed(seed);
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < count {
        picked.insert(rng.random_range(0..len));
    }
    picked.into_iter().collect()
}

/// Compares `analytic[i]` with central differences of `f` at each probe index.
pub fn check_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    probes: &[usize],
    step: f64,
) -> GradientReport {
    assert_eq!(x.len(), analytic.len(), "gradient length must match the point");
    let probes = probes
        .iter()
        .map(|&i| {
            let numeric = central_difference(&mut f, x, i, step);
            ProbeResult {
                index: i,
                analytic: analytic[i],
                numeric,
                relative_error: relative_error(analytic[i], numeric),
            }
        })
        .collect();
    GradientReport { probes }
}
