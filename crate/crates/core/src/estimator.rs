//! Least-squares inversion of the six measured values into two emitter
//! positions and their brightness ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minimize::{self, MinimizeOptions};
use crate::optics::{forward_model, DetectorLayout, MeasurementSet, Point2, PsfModel, Scene};
use crate::rng::RngStream;
use crate::synth::uniform_in_disk;

/// Objective value returned for trial points with negative brightness ratio.
const NEGATIVE_ALPHA_PENALTY: f64 = 1e3;

/// Starts whose chi-squared differ by no more than this are treated as tied.
const TIE_TOLERANCE: f64 = 1e-15;

/// Brightness ratios for random starts are drawn uniformly from this range.
const START_ALPHA_RANGE: (f64, f64) = (0.05, 1.0);

/// Candidate scene parameters `(x1, y1, x2, y2, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub alpha: f64,
}

impl TrialParams {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, alpha: f64) -> Self {
        Self { x1, y1, x2, y2, alpha }
    }

    pub fn from_scene(scene: &Scene) -> Self {
        let (p1, p2) = (scene.emitter1().position, scene.emitter2().position);
        Self::new(p1.x, p1.y, p2.x, p2.y, scene.alpha())
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.x1, self.y1, self.x2, self.y2, self.alpha]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn position1(&self) -> Point2 {
        Point2::new(self.x1, self.y1)
    }

    pub fn position2(&self) -> Point2 {
        Point2::new(self.x2, self.y2)
    }

    /// Scene with the brighter emitter at unit peak brightness.
    pub fn to_scene(&self) -> Result<Scene> {
        Scene::from_params(self.x1, self.y1, self.x2, self.y2, self.alpha)
    }

    /// Emitter labels exchanged and `alpha` inverted; describes the same physical scene.
    pub fn label_swapped(&self) -> Self {
        Self::new(self.x2, self.y2, self.x1, self.y1, 1.0 / self.alpha)
    }

    /// Largest absolute coordinate or ratio difference.
    pub fn max_abs_diff(&self, other: &TrialParams) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: TrialParams,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
    pub starts_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Registered minimizer name, see [`minimize::builtin`].
    pub method: String,
    pub n_starts: usize,
    pub start_box_radius: f64,
    pub initial_step: f64,
    pub x_tolerance: f64,
    pub f_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let o = MinimizeOptions::default();
        Self {
            method: "nelder-mead".to_string(),
            n_starts: 32,
            start_box_radius: 1.5,
            initial_step: o.initial_step,
            x_tolerance: o.x_tolerance,
            f_tolerance: o.f_tolerance,
            max_iterations: o.max_iterations,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.start_box_radius,
            self.initial_step,
            self.x_tolerance,
            self.f_tolerance,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if self.n_starts == 0 || self.max_iterations == 0 || !positive {
            return Err(Error::domain(
                "FitConfig::validate",
                format!("invalid fit configuration {self:?}"),
            ));
        }
        minimize::builtin().get(&self.method)?;
        Ok(())
    }

    fn options(&self) -> MinimizeOptions {
        MinimizeOptions {
            initial_step: self.initial_step,
            x_tolerance: self.x_tolerance,
            f_tolerance: self.f_tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

fn sum_sq_residual(model: &MeasurementSet, measured: &MeasurementSet) -> f64 {
    model
        .values()
        .iter()
        .zip(measured.values())
        .map(|(m, g)| (m - g) * (m - g))
        .sum()
}

/// Sum of squared differences between the forward model of `trial` and the
/// six measured values.
pub fn chi_squared(
    trial: &TrialParams,
    measured: &MeasurementSet,
    layout: &DetectorLayout,
    psf: &PsfModel,
) -> Result<f64> {
    if !trial.is_finite() {
        return Err(Error::domain("chi_squared", format!("non-finite trial {trial:?}")));
    }
    if trial.alpha < 0.0 {
        return Err(Error::domain("chi_squared", format!("negative alpha {}", trial.alpha)));
    }
    let scene = trial.to_scene()?;
    Ok(sum_sq_residual(&forward_model(&scene, layout, psf), measured))
}

/// Objective seen by the minimizer. Negative ratios are penalized instead of rejected.
fn objective(x: &[f64], measured: &MeasurementSet, layout: &DetectorLayout, psf: &PsfModel) -> f64 {
    let trial = TrialParams::from_slice(x);
    if !trial.is_finite() {
        return f64::INFINITY;
    }
    if trial.alpha < 0.0 {
        return NEGATIVE_ALPHA_PENALTY * (1.0 + trial.alpha * trial.alpha);
    }
    match trial.to_scene() {
        Ok(scene) => sum_sq_residual(&forward_model(&scene, layout, psf), measured),
        Err(_) => f64::INFINITY,
    }
}

/// Relabels so that `alpha <= 1`. Chi-squared is unaffected because the
/// swapped parameters describe the same scene.
pub fn canonicalize(fit: FitResult) -> FitResult {
    if fit.params.alpha > 1.0 {
        FitResult {
            params: fit.params.label_swapped(),
            ..fit
        }
    } else {
        fit
    }
}

/// Random starting point for start `index` of a fit.
fn start_point(rng: &RngStream, index: usize, radius: f64) -> [f64; 5] {
    let mut g = rng.child(index as u64).generator();
    let p1 = uniform_in_disk(&mut g, radius);
    let p2 = uniform_in_disk(&mut g, radius);
    let (lo, hi) = START_ALPHA_RANGE;
    let alpha = hi - (hi - lo) * g.uniform();
    [p1.x, p1.y, p2.x, p2.y, alpha]
}

/// Multi-start least-squares fit.
///
/// Start `i` draws its initial point from `rng.child(i)`, so the result
/// depends only on the inputs and `rng`. The lowest chi-squared wins; ties
/// go to the earlier start. Failure to converge is reported in the result,
/// never as an error.
pub fn fit_scene(
    measured: &MeasurementSet,
    layout: &DetectorLayout,
    psf: &PsfModel,
    config: &FitConfig,
    rng: &RngStream,
) -> Result<FitResult> {
    if !measured.is_finite() {
        return Err(Error::domain("fit_scene", "measurements must be finite"));
    }
    config.validate()?;
    let minimizer = minimize::builtin().get(&config.method)?;
    let options = config.options();
    let f = |x: &[f64]| objective(x, measured, layout, psf);

    let mut best: Option<FitResult> = None;
    for i in 0..config.n_starts {
        let x0 = start_point(rng, i, config.start_box_radius);
        let m = minimizer.minimize(&f, &x0, &options);
        let params = TrialParams::from_slice(&m.x);
        let usable = params.is_finite() && params.alpha >= 0.0 && m.value.is_finite();
        let candidate = FitResult {
            params,
            chi2: if usable { m.value } else { f64::INFINITY },
            iterations: m.iterations,
            converged: m.converged && usable,
            starts_used: config.n_starts,
        };
        best = match best {
            Some(b) if candidate.chi2 >= b.chi2 - TIE_TOLERANCE => Some(b),
            _ => Some(candidate),
        };
    }
    let best = best.expect("n_starts >= 1");
    Ok(canonicalize(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::default_layout;
    use approx::assert_relative_eq;

    fn reference() -> TrialParams {
        TrialParams::new(-0.6300, -0.1276, 0.5146, -0.5573, 0.3617)
    }

    fn exact(p: &TrialParams) -> MeasurementSet {
        forward_model(&p.to_scene().unwrap(), &default_layout(), &PsfModel::default())
    }

    #[test]
    fn chi2_zero_at_truth() {
        let p = reference();
        let c = chi_squared(&p, &exact(&p), &default_layout(), &PsfModel::default()).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn chi2_positive_off_truth() {
        let p = reference();
        let mut shifted = p;
        shifted.x1 += 0.1;
        let c = chi_squared(&shifted, &exact(&p), &default_layout(), &PsfModel::default()).unwrap();
        assert!(c > 0.0);
    }

    #[test]
    fn chi2_zero_for_label_swap() {
        let p = reference();
        let c = chi_squared(&p.label_swapped(), &exact(&p), &default_layout(), &PsfModel::default()).unwrap();
        assert!(c < 1e-30, "{c}");
    }

    #[test]
    fn chi2_rejects_bad_trials() {
        let m = exact(&reference());
        let l = default_layout();
        let psf = PsfModel::default();
        assert!(chi_squared(&TrialParams::new(f64::NAN, 0.0, 0.0, 0.0, 0.5), &m, &l, &psf).is_err());
        assert!(chi_squared(&TrialParams::new(0.0, 0.0, 0.0, 0.0, -0.5), &m, &l, &psf).is_err());
    }

    #[test]
    fn penalty_exceeds_any_physical_residual() {
        let m = exact(&reference());
        let v = objective(
            &[0.0, 0.0, 0.0, 0.0, -1e-6],
            &m,
            &default_layout(),
            &PsfModel::default(),
        );
        assert!(v >= NEGATIVE_ALPHA_PENALTY);
    }

    #[test]
    fn canonicalize_swaps_bright_second_emitter() {
        let fit = FitResult {
            params: TrialParams::new(1.0, 2.0, 3.0, 4.0, 2.0),
            chi2: 0.25,
            iterations: 10,
            converged: true,
            starts_used: 1,
        };
        let c = canonicalize(fit);
        assert_eq!(c.params, TrialParams::new(3.0, 4.0, 1.0, 2.0, 0.5));
        assert_eq!(c.chi2, 0.25);
        assert_eq!(canonicalize(c), c);
    }

    #[test]
    fn canonicalize_keeps_canonical() {
        let fit = FitResult {
            params: TrialParams::new(1.0, 2.0, 3.0, 4.0, 0.3),
            chi2: 0.0,
            iterations: 0,
            converged: true,
            starts_used: 1,
        };
        assert_eq!(canonicalize(fit), fit);
    }

    #[test]
    fn canonicalize_preserves_chi2() {
        let truth = reference();
        let m = exact(&truth);
        let trial = TrialParams::new(0.2, -0.4, -0.3, 0.1, 1.7);
        let l = default_layout();
        let psf = PsfModel::default();
        let before = chi_squared(&trial, &m, &l, &psf).unwrap();
        let fit = FitResult {
            params: trial,
            chi2: before,
            iterations: 0,
            converged: true,
            starts_used: 1,
        };
        let after = chi_squared(&canonicalize(fit).params, &m, &l, &psf).unwrap();
        assert_relative_eq!(before, after, max_relative = 1e-12);
    }

    #[test]
    fn recovers_reference_scene_without_noise() {
        let truth = reference();
        let fit = fit_scene(
            &exact(&truth),
            &default_layout(),
            &PsfModel::default(),
            &FitConfig::default(),
            &RngStream::new(1, 0),
        )
        .unwrap();
        assert!(fit.converged);
        assert!(fit.params.max_abs_diff(&truth) < 1e-3, "{:?}", fit.params);
        assert!(fit.chi2 < 1e-10);
        assert_eq!(fit.starts_used, 32);
    }

    #[test]
    fn symmetric_scene_accepts_either_labeling() {
        // Mirror images about the layout's symmetry axis x = 0.
        let truth = TrialParams::new(-0.4, 0.2, 0.4, 0.2, 1.0);
        let m = exact(&truth);
        let l = default_layout();
        let psf = PsfModel::default();
        assert_eq!(chi_squared(&truth, &m, &l, &psf).unwrap(), 0.0);
        assert!(chi_squared(&truth.label_swapped(), &m, &l, &psf).unwrap() < 1e-30);
        let fit = fit_scene(&m, &l, &psf, &FitConfig::default(), &RngStream::new(3, 0)).unwrap();
        let d = fit
            .params
            .max_abs_diff(&truth)
            .min(fit.params.max_abs_diff(&truth.label_swapped()));
        assert!(d < 1e-3, "{:?}", fit.params);
    }

    #[test]
    fn unknown_method_is_an_error() {
        let cfg = FitConfig {
            method: "simulated-annealing".into(),
            ..FitConfig::default()
        };
        let r = fit_scene(
            &exact(&reference()),
            &default_layout(),
            &PsfModel::default(),
            &cfg,
            &RngStream::new(0, 0),
        );
        assert!(matches!(r, Err(Error::UnknownMinimizer { .. })));
    }

    #[test]
    fn tiny_budget_reports_non_convergence() {
        let cfg = FitConfig {
            n_starts: 2,
            max_iterations: 3,
            ..FitConfig::default()
        };
        let fit = fit_scene(
            &exact(&reference()),
            &default_layout(),
            &PsfModel::default(),
            &cfg,
            &RngStream::new(0, 0),
        )
        .unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn non_finite_measurements_rejected() {
        let mut m = exact(&reference());
        m.g2[1] = f64::NAN;
        let r = fit_scene(
            &m,
            &default_layout(),
            &PsfModel::default(),
            &FitConfig::default(),
            &RngStream::new(0, 0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn unphysical_measurements_do_not_crash() {
        let m = MeasurementSet {
            g1: [0.2, 0.3, 0.25],
            g2: [0.7, 0.8, 0.9],
            noisy: true,
        };
        let fit = fit_scene(
            &m,
            &default_layout(),
            &PsfModel::default(),
            &FitConfig::default(),
            &RngStream::new(0, 0),
        )
        .unwrap();
        assert!(fit.chi2.is_finite());
        assert!(fit.params.alpha <= 1.0);
    }
}
