//! Random scene generation and the multiplicative counting-noise model.

use std::f64::consts::{PI, SQRT_2};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{DetectorLayout, Emitter, MeasurementSet, Point2, Scene};
use crate::rng::{RngStream, StreamRng};

pub const DEFAULT_ALPHA_MIN: f64 = 0.05;

/// Relative noise level `eta = 1/sqrt(N)` for `N` detected coincidences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    eta: f64,
}

impl NoiseModel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && (0.0..=1.0).contains(&eta)) {
            return Err(Error::domain(
                "NoiseModel::new",
                format!("eta must lie in [0, 1], got {eta}"),
            ));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Equivalent noise level for `n` detected coincidences.
    pub fn from_counts(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("NoiseModel::from_counts", "need at least one count"));
        }
        Self::new(1.0 / (n as f64).sqrt())
    }
}

/// Detectors at `(0, 1)`, `(sqrt 2, -0.5)` and `(-sqrt 2, -0.5)`.
pub fn default_layout() -> DetectorLayout {
    DetectorLayout::new([
        Point2::new(0.0, 1.0),
        Point2::new(SQRT_2, -0.5),
        Point2::new(-SQRT_2, -0.5),
    ])
    .expect("default layout is non-collinear")
}

/// Area-uniform point in the disk of `radius` centered at the origin.
pub(crate) fn uniform_in_disk(rng: &mut StreamRng, radius: f64) -> Point2 {
    let r = radius * rng.uniform().sqrt();
    let theta = 2.0 * PI * rng.uniform();
    Point2::new(r * theta.cos(), r * theta.sin())
}

/// Random scene with both emitters in the unit disk and `alpha` uniform on
/// `(alpha_min, 1]`. Emitter 1 has peak brightness 1.
pub fn sample_scene(rng: &RngStream, alpha_min: f64) -> Result<Scene> {
    if !(0.0..1.0).contains(&alpha_min) {
        return Err(Error::domain(
            "sample_scene",
            format!("alpha_min must lie in [0, 1), got {alpha_min}"),
        ));
    }
    sample_scene_in(rng, alpha_min..=1.0)
}

/// As [`sample_scene`] with `alpha` uniform on `(lo, hi]`.
///
/// Draw order: emitter 1 radius and angle, emitter 2 radius and angle, then alpha.
pub fn sample_scene_in(rng: &RngStream, alpha_range: RangeInclusive<f64>) -> Result<Scene> {
    let (lo, hi) = (*alpha_range.start(), *alpha_range.end());
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::domain(
            "sample_scene_in",
            format!("bad alpha range [{lo}, {hi}]"),
        ));
    }
    let mut g = rng.generator();
    let p1 = uniform_in_disk(&mut g, 1.0);
    let p2 = uniform_in_disk(&mut g, 1.0);
    let alpha = hi - (hi - lo) * g.uniform();
    Ok(Scene::new(
        Emitter::new(p1.x, p1.y, 1.0)?,
        Emitter::new(p2.x, p2.y, alpha)?,
    ))
}

/// Multiplies each value by `1 + eta * z`, `z` standard normal, without clamping.
///
/// Exactly six deviates are drawn from the start of `rng`, consumed for
/// `g1[0], g1[1], g1[2], g2[0], g2[1], g2[2]` in that order.
pub fn apply_noise(exact: &MeasurementSet, noise: &NoiseModel, rng: &RngStream) -> Result<MeasurementSet> {
    if exact.noisy {
        return Err(Error::AlreadyNoisy);
    }
    let mut g = rng.generator();
    let mut out = *exact;
    for v in out.g1.iter_mut().chain(out.g2.iter_mut()) {
        let z = g.standard_normal();
        *v *= 1.0 + noise.eta * z;
    }
    out.noisy = true;
    Ok(out)
}
