//! Closed-form forward physics for two point emitters observed through a
//! Gaussian point-spread function.
//!
//! All lengths are in units of the PSF standard deviation unless converted
//! through [`sigma_from_optics`]. The detection probability keeps the
//! one-dimensional prefactor `1/sqrt(2*pi*sigma^2)`; it cancels in every
//! correlation value and in normalized confocal maps.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the focal plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_sq(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Gaussian PSF with standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsfModel {
    sigma: f64,
}

impl PsfModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(
                "PsfModel::new",
                format!("sigma must be > 0, got {sigma}"),
            ));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Peak detection probability for a unit-brightness emitter at the PSF center.
    pub fn peak_prefactor(&self) -> f64 {
        1.0 / (2.0 * PI * self.sigma * self.sigma).sqrt()
    }
}

impl Default for PsfModel {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

/// A single-photon point emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub position: Point2,
    /// Detection probability scale when centered on the PSF (before the Gaussian prefactor).
    pub peak_brightness: f64,
}

impl Emitter {
    pub fn new(x: f64, y: f64, peak_brightness: f64) -> Result<Self> {
        if !(peak_brightness.is_finite() && peak_brightness >= 0.0) {
            return Err(Error::domain(
                "Emitter::new",
                format!("peak brightness must be finite and >= 0, got {peak_brightness}"),
            ));
        }
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::domain("Emitter::new", "position must be finite"));
        }
        Ok(Self {
            position: Point2::new(x, y),
            peak_brightness,
        })
    }
}

/// Two emitters. The brightness ratio `alpha` is derived from the peak
/// brightnesses so the two can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    emitter1: Emitter,
    emitter2: Emitter,
}

impl Scene {
    pub fn new(emitter1: Emitter, emitter2: Emitter) -> Self {
        Self { emitter1, emitter2 }
    }

    /// Builds a scene from the five fit parameters. The brighter emitter has
    /// peak brightness 1, so `alpha <= 1` gives `P01 = 1, P02 = alpha` and
    /// `alpha > 1` gives `P01 = 1/alpha, P02 = 1`.
    pub fn from_params(x1: f64, y1: f64, x2: f64, y2: f64, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::domain(
                "Scene::from_params",
                format!("alpha must be finite and >= 0, got {alpha}"),
            ));
        }
        let (b1, b2) = if alpha <= 1.0 { (1.0, alpha) } else { (1.0 / alpha, 1.0) };
        Ok(Self::new(Emitter::new(x1, y1, b1)?, Emitter::new(x2, y2, b2)?))
    }

    pub fn emitter1(&self) -> &Emitter {
        &self.emitter1
    }

    pub fn emitter2(&self) -> &Emitter {
        &self.emitter2
    }

    /// Intrinsic brightness ratio `P02 / P01`. Infinite if only emitter 1 is dark,
    /// zero if both are dark.
    pub fn alpha(&self) -> f64 {
        let (b1, b2) = (self.emitter1.peak_brightness, self.emitter2.peak_brightness);
        if b1 > 0.0 {
            b2 / b1
        } else if b2 > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.alpha() <= 1.0
    }

    /// Relabels so that emitter 1 is the brighter one.
    pub fn canonical(self) -> Self {
        if self.is_canonical() {
            self
        } else {
            self.swapped()
        }
    }

    pub fn swapped(self) -> Self {
        Self {
            emitter1: self.emitter2,
            emitter2: self.emitter1,
        }
    }

    /// Multiplies both peak brightnesses by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        let mut out = self;
        out.emitter1.peak_brightness *= factor;
        out.emitter2.peak_brightness *= factor;
        out
    }
}

/// Three non-collinear measurement positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorLayout {
    positions: [Point2; 3],
}

impl DetectorLayout {
    pub const MIN_TRIANGLE_AREA: f64 = 1e-9;

    pub fn new(positions: [Point2; 3]) -> Result<Self> {
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::Layout("detector positions must be finite".into()));
        }
        let area = triangle_area(&positions);
        if area <= Self::MIN_TRIANGLE_AREA {
            return Err(Error::Layout(format!(
                "detectors are collinear (triangle area {area:e})"
            )));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Point2; 3] {
        &self.positions
    }

    pub fn triangle_area(&self) -> f64 {
        triangle_area(&self.positions)
    }
}

fn triangle_area(p: &[Point2; 3]) -> f64 {
    0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y)).abs()
}

/// Per-detector intensity (`g1`) and zero-lag correlation (`g2`) values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub g1: [f64; 3],
    pub g2: [f64; 3],
    pub noisy: bool,
}

impl MeasurementSet {
    pub fn exact(g1: [f64; 3], g2: [f64; 3]) -> Self {
        Self { g1, g2, noisy: false }
    }

    pub fn is_finite(&self) -> bool {
        self.g1.iter().chain(self.g2.iter()).all(|v| v.is_finite())
    }

    /// The six values in the order `g1[0..3]` then `g2[0..3]`.
    pub fn values(&self) -> [f64; 6] {
        [self.g1[0], self.g1[1], self.g1[2], self.g2[0], self.g2[1], self.g2[2]]
    }
}

/// Forward-model output with the per-detector emitter probabilities kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardDetail {
    pub p1: [f64; 3],
    pub p2: [f64; 3],
    pub measurements: MeasurementSet,
}

/// Zero-lag correlation of two emitters with effective brightness ratio `alpha_eff`.
pub fn g2_two_emitter(alpha_eff: f64) -> Result<f64> {
    if !(alpha_eff.is_finite() && alpha_eff >= 0.0) {
        return Err(Error::domain(
            "g2_two_emitter",
            format!("alpha must be finite and >= 0, got {alpha_eff}"),
        ));
    }
    let denom = 1.0 + alpha_eff;
    Ok(2.0 * alpha_eff / (denom * denom))
}

/// Zero-lag correlation of `n` co-located emitters of equal brightness.
pub fn g2_n_colocated(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("g2_n_colocated", "n must be >= 1"));
    }
    Ok(1.0 - 1.0 / n as f64)
}

/// Probability of detecting a photon from `emitter` with the PSF centered at `detector`.
pub fn detection_probability(emitter: &Emitter, detector: &Point2, psf: &PsfModel) -> f64 {
    let s2 = psf.sigma * psf.sigma;
    let r2 = emitter.position.distance_sq(detector);
    emitter.peak_brightness * psf.peak_prefactor() * (-r2 / (2.0 * s2)).exp()
}

/// `2 p1 p2 / (p1 + p2)^2`, defined as 0 when no photons are detected.
fn pair_correlation(p1: f64, p2: f64) -> f64 {
    let total = p1 + p2;
    if total == 0.0 {
        0.0
    } else {
        2.0 * p1 * p2 / (total * total)
    }
}

pub fn forward_detail(scene: &Scene, layout: &DetectorLayout, psf: &PsfModel) -> ForwardDetail {
    let mut p1 = [0.0; 3];
    let mut p2 = [0.0; 3];
    let mut g1 = [0.0; 3];
    let mut g2 = [0.0; 3];
    for (j, det) in layout.positions.iter().enumerate() {
        p1[j] = detection_probability(&scene.emitter1, det, psf);
        p2[j] = detection_probability(&scene.emitter2, det, psf);
        g1[j] = p1[j] + p2[j];
        g2[j] = pair_correlation(p1[j], p2[j]);
    }
    ForwardDetail {
        p1,
        p2,
        measurements: MeasurementSet::exact(g1, g2),
    }
}

/// Exact (noise-free) intensity and correlation values at each detector.
pub fn forward_model(scene: &Scene, layout: &DetectorLayout, psf: &PsfModel) -> MeasurementSet {
    forward_detail(scene, layout, psf).measurements
}

/// Converts an optical wavelength and numerical aperture into the PSF standard deviation.
pub fn sigma_from_optics(wavelength: f64, numerical_aperture: f64) -> Result<f64> {
    if !(wavelength.is_finite() && wavelength > 0.0) {
        return Err(Error::domain(
            "sigma_from_optics",
            format!("wavelength must be > 0, got {wavelength}"),
        ));
    }
    if !(numerical_aperture.is_finite() && numerical_aperture > 0.0) {
        return Err(Error::domain(
            "sigma_from_optics",
            format!("numerical aperture must be > 0, got {numerical_aperture}"),
        ));
    }
    Ok(0.21 * wavelength / numerical_aperture)
}

/// Rectangular sample grid, inclusive of both bounds on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub pitch: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: -2.0,
            x_max: 2.0,
            y_min: -2.0,
            y_max: 2.0,
            pitch: 0.05,
        }
    }
}

impl GridSpec {
    fn axis(lo: f64, hi: f64, pitch: f64) -> Vec<f64> {
        // Round so that e.g. [-2, 2] at 0.05 gives exactly 81 samples.
        let n = ((hi - lo) / pitch + 1e-9).floor() as usize + 1;
        (0..n).map(|i| lo + i as f64 * pitch).collect()
    }

    pub fn axes(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max, self.pitch]
            .iter()
            .all(|v| v.is_finite());
        if !ok || self.pitch <= 0.0 || self.x_max < self.x_min || self.y_max < self.y_min {
            return Err(Error::domain("GridSpec::axes", format!("invalid grid {self:?}")));
        }
        Ok((
            Self::axis(self.x_min, self.x_max, self.pitch),
            Self::axis(self.y_min, self.y_max, self.pitch),
        ))
    }
}

/// Row-major grid of normalized intensities; `values[iy * xs.len() + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl IntensityMap {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.xs.len() + ix]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid points strictly greater than all of their (up to 8) neighbours and
    /// above `fraction` of the global maximum, as `(ix, iy)` pairs.
    pub fn local_maxima(&self, fraction: f64) -> Vec<(usize, usize)> {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let floor = fraction * self.max();
        let mut out = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let v = self.at(ix, iy);
                if v <= floor {
                    continue;
                }
                let mut is_peak = true;
                'nb: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                        if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                            continue;
                        }
                        if self.at(jx as usize, jy as usize) >= v {
                            is_peak = false;
                            break 'nb;
                        }
                    }
                }
                if is_peak {
                    out.push((ix, iy));
                }
            }
        }
        out
    }
}

/// Total intensity a single detector would record while scanned over `grid`,
/// normalized to emitter 1's peak value.
pub fn confocal_map(scene: &Scene, psf: &PsfModel, grid: &GridSpec) -> Result<IntensityMap> {
    let norm = scene.emitter1.peak_brightness * psf.peak_prefactor();
    if norm <= 0.0 {
        return Err(Error::domain(
            "confocal_map",
            "emitter 1 is dark; map cannot be normalized",
        ));
    }
    let (xs, ys) = grid.axes()?;
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let det = Point2::new(x, y);
            let g1 =
                detection_probability(&scene.emitter1, &det, psf) + detection_probability(&scene.emitter2, &det, psf);
            values.push(g1 / norm);
        }
    }
    Ok(IntensityMap { xs, ys, values })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // oracle digits kept verbatim
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_psf() -> PsfModel {
        PsfModel::default()
    }

    #[test]
    fn g2_two_emitter_values() {
        assert_eq!(g2_two_emitter(1.0).unwrap(), 0.5);
        assert_eq!(g2_two_emitter(0.0).unwrap(), 0.0);
        assert_relative_eq!(g2_two_emitter(0.5).unwrap(), 4.0 / 9.0, max_relative = 1e-15);
    }

    #[test]
    fn g2_two_emitter_rejects_bad_input() {
        assert!(g2_two_emitter(-0.1).is_err());
        assert!(g2_two_emitter(f64::NAN).is_err());
        assert!(g2_two_emitter(f64::INFINITY).is_err());
    }

    #[test]
    fn g2_colocated() {
        assert_eq!(g2_n_colocated(1).unwrap(), 0.0);
        assert_eq!(g2_n_colocated(2).unwrap(), 0.5);
        assert_relative_eq!(g2_n_colocated(100).unwrap(), 0.99, max_relative = 1e-15);
        assert!(g2_n_colocated(0).is_err());
    }

    #[test]
    fn detection_probability_values() {
        let psf = unit_psf();
        let e = Emitter::new(0.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(
            detection_probability(&e, &Point2::ORIGIN, &psf),
            0.398_942_280_401_432_68,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            detection_probability(&e, &Point2::new(1.0, 0.0), &psf),
            0.241_970_724_519_143_35,
            max_relative = 1e-15
        );
        let dark = Emitter::new(0.3, -2.0, 0.0).unwrap();
        let wide = PsfModel::new(3.7).unwrap();
        assert_eq!(detection_probability(&dark, &Point2::new(0.1, 0.2), &wide), 0.0);
    }

    #[test]
    fn forward_colocated_equal_brightness() {
        let layout =
            DetectorLayout::new([Point2::new(0.0, 1.0), Point2::new(1.0, 0.0), Point2::new(-1.0, 0.0)]).unwrap();
        let scene = Scene::from_params(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        let m = forward_model(&scene, &layout, &unit_psf());
        assert_eq!(m.g2[0], 0.5);
        assert!(!m.noisy);
    }

    #[test]
    fn forward_one_sigma_offset() {
        let layout = DetectorLayout::new([Point2::ORIGIN, Point2::new(3.0, 0.0), Point2::new(0.0, 3.0)]).unwrap();
        let scene = Scene::from_params(0.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        let d = forward_detail(&scene, &layout, &unit_psf());
        assert_relative_eq!(d.p2[0] / d.p1[0], (-0.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(d.measurements.g2[0], 0.470_007_424_403_188_98, max_relative = 1e-14);
    }

    #[test]
    fn forward_dark_detector_is_zero() {
        let layout = DetectorLayout::new([Point2::ORIGIN, Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]).unwrap();
        let scene = Scene::new(
            Emitter::new(0.0, 0.0, 0.0).unwrap(),
            Emitter::new(1.0, 0.0, 0.0).unwrap(),
        );
        let m = forward_model(&scene, &layout, &unit_psf());
        assert_eq!(m.g2, [0.0; 3]);
        assert_eq!(m.g1, [0.0; 3]);
    }

    #[test]
    fn sigma_conversion() {
        assert_relative_eq!(sigma_from_optics(1.0, 0.21).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(
            sigma_from_optics(532.0, 1.3).unwrap(),
            85.938_461_538_461_54,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            sigma_from_optics(637.0, 0.9).unwrap(),
            148.633_333_333_333_33,
            max_relative = 1e-14
        );
        assert!(sigma_from_optics(0.0, 1.0).is_err());
        assert!(sigma_from_optics(500.0, -1.0).is_err());
    }

    #[test]
    fn layout_rejects_collinear() {
        let r = DetectorLayout::new([Point2::ORIGIN, Point2::new(1.0, 1.0), Point2::new(2.0, 2.0)]);
        assert!(matches!(r, Err(Error::Layout(_))));
    }

    #[test]
    fn psf_rejects_nonpositive_sigma() {
        assert!(PsfModel::new(0.0).is_err());
        assert!(PsfModel::new(-1.0).is_err());
    }

    #[test]
    fn scene_alpha_and_canonical() {
        let s = Scene::from_params(1.0, 0.0, -1.0, 0.0, 2.0).unwrap();
        assert_eq!(s.alpha(), 2.0);
        assert_eq!(s.emitter2().peak_brightness, 1.0);
        let c = s.canonical();
        assert_eq!(c.alpha(), 0.5);
        assert_eq!(c.emitter1().position, Point2::new(-1.0, 0.0));
        assert_eq!(c.canonical(), c);
    }

    #[test]
    fn confocal_coincident_pair() {
        let scene = Scene::from_params(0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let map = confocal_map(&scene, &unit_psf(), &GridSpec::default()).unwrap();
        assert_eq!(map.xs.len(), 81);
        assert_eq!(map.ys.len(), 81);
        assert_relative_eq!(map.at(40, 40), 2.0, max_relative = 1e-12);
        assert_relative_eq!(map.max(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn confocal_dark_second_emitter() {
        let scene = Scene::from_params(0.3, -0.2, 0.0, 0.0, 0.0).unwrap();
        let psf = unit_psf();
        let map = confocal_map(&scene, &psf, &GridSpec::default()).unwrap();
        for (iy, &y) in map.ys.iter().enumerate() {
            for (ix, &x) in map.xs.iter().enumerate() {
                let r2 = (x - 0.3).powi(2) + (y + 0.2).powi(2);
                assert_relative_eq!(map.at(ix, iy), (-r2 / 2.0).exp(), max_relative = 1e-12);
            }
        }
        let peaks = map.local_maxima(0.1);
        assert_eq!(peaks.len(), 1);
        let (ix, iy) = peaks[0];
        assert_relative_eq!(map.xs[ix], 0.3, epsilon = 1e-9);
        assert_relative_eq!(map.ys[iy], -0.2, epsilon = 1e-9);
        assert_relative_eq!(map.max(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn confocal_resolves_well_separated_pair() {
        let scene = Scene::from_params(-1.5, 0.0, 1.5, 0.0, 1.0).unwrap();
        let map = confocal_map(&scene, &unit_psf(), &GridSpec::default()).unwrap();
        assert_eq!(map.local_maxima(0.1).len(), 2);
    }
}
