//! Repeated noisy trials, the 90%-boundary precision metric, and noise sweeps
//! over random scene ensembles.
//!
//! Stream layout, all derived from one master seed:
//!
//! - trial `t` noise: `RngStream::new(seed, t).child(0)`
//! - fit starts (shared by every trial of an ensemble): `RngStream::new(seed, 0).child(1)`
//! - sweep scene `i`: `RngStream::new(sweep_seed, i).child(2)`
//! - sweep scene `i` trial seed: first word of `RngStream::new(sweep_seed, i).child(3)`
//!
//! The trial seed of a sweep scene does not depend on the noise level, so the
//! same normal deviates are scaled by each `eta` in turn.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_scene, FitConfig, FitResult};
use crate::optics::{forward_model, DetectorLayout, Point2, PsfModel, Scene};
use crate::rng::RngStream;
use crate::synth::{apply_noise, sample_scene_in, NoiseModel};

const NOISE_TAG: u64 = 0;
const FIT_TAG: u64 = 1;
const SCENE_TAG: u64 = 2;
const TRIAL_SEED_TAG: u64 = 3;

/// Minimum number of converged fits for a precision estimate.
pub const MIN_CONVERGED_FITS: usize = 10;

/// Scenes whose brightness ratio exceeds this get fit labels matched to running cluster means.
pub const LABEL_DEGENERACY_ALPHA: f64 = 0.95;

/// A scene counts as localized when at least this fraction of its trials converge.
pub const MIN_CONVERGED_FRACTION: f64 = 0.5;

/// Shared optical setup and fit settings for a batch of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    pub layout: DetectorLayout,
    pub psf: PsfModel,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEnsemble {
    pub scene: Scene,
    pub eta: f64,
    pub fits: Vec<FitResult>,
    pub master_seed: u64,
}

impl TrialEnsemble {
    pub fn converged(&self) -> impl Iterator<Item = &FitResult> {
        self.fits.iter().filter(|f| f.converged)
    }

    pub fn convergence_fraction(&self) -> f64 {
        if self.fits.is_empty() {
            return 0.0;
        }
        self.converged().count() as f64 / self.fits.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSummary {
    pub mean1: Point2,
    pub mean2: Point2,
    pub radius1: f64,
    pub radius2: f64,
    pub summed_precision: f64,
    pub n_used: usize,
    /// Whether near-degenerate labels were matched to cluster means.
    pub relabeled: bool,
}

impl PrecisionSummary {
    /// Whether `point` lies inside the boundary of emitter 1 or 2.
    pub fn contains(&self, emitter: usize, point: &Point2) -> bool {
        match emitter {
            1 => self.mean1.distance(point) <= self.radius1,
            2 => self.mean2.distance(point) <= self.radius2,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub scene_id: usize,
    pub alpha: f64,
    pub eta: f64,
    /// `None` marks an unlocalizable (scene, eta) pair.
    pub summed_precision: Option<f64>,
    pub radius1: Option<f64>,
    pub radius2: Option<f64>,
    pub convergence_fraction: f64,
    pub relabeled: bool,
}

impl SweepRecord {
    pub fn localized(&self) -> bool {
        self.summed_precision.is_some()
    }

    /// The dim emitter was not found: no precision estimate, or its boundary
    /// radius exceeds `max_radius`.
    pub fn emitter2_unlocalized(&self, max_radius: f64) -> bool {
        self.radius2.is_none_or(|r| r > max_radius)
    }
}

/// Noise-sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub n_scenes: usize,
    pub eta_values: Vec<f64>,
    pub n_trials: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_scenes: 30,
            eta_values: vec![0.01, 0.02, 0.05, 0.1, 0.15, 0.2],
            n_trials: 101,
            alpha_min: crate::synth::DEFAULT_ALPHA_MIN,
            alpha_max: 1.0,
        }
    }
}

/// Fits `n_trials` independent noisy realizations of `scene`.
pub fn run_trials(
    scene: &Scene,
    eta: f64,
    n_trials: usize,
    instrument: &Instrument,
    master_seed: u64,
) -> Result<TrialEnsemble> {
    if n_trials == 0 {
        return Err(Error::domain("run_trials", "n_trials must be >= 1"));
    }
    let noise = NoiseModel::new(eta)?;
    instrument.fit.validate()?;
    let exact = forward_model(scene, &instrument.layout, &instrument.psf);
    let fit_stream = RngStream::new(master_seed, 0).child(FIT_TAG);
    let fits = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let noise_stream = RngStream::new(master_seed, t as u64).child(NOISE_TAG);
            let measured = apply_noise(&exact, &noise, &noise_stream)?;
            fit_scene(
                &measured,
                &instrument.layout,
                &instrument.psf,
                &instrument.fit,
                &fit_stream,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialEnsemble {
        scene: *scene,
        eta,
        fits,
        master_seed,
    })
}

/// Mean accumulated as offsets from the first point, so identical points
/// reproduce that point exactly.
fn mean(points: &[Point2]) -> Point2 {
    let origin = points[0];
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(ax, ay), p| (ax + (p.x - origin.x), ay + (p.y - origin.y)));
    Point2::new(origin.x + sx / n, origin.y + sy / n)
}

/// Distance from `center` of the `ceil(0.9 n)`-th closest point.
pub fn radius_90(points: &[Point2], center: &Point2) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut d: Vec<f64> = points.iter().map(|p| p.distance(center)).collect();
    d.sort_by(f64::total_cmp);
    let keep = (9 * points.len()).div_ceil(10);
    d[keep - 1]
}

/// Assigns each fit's two positions to clusters by minimal total distance to
/// the running cluster means, in fit order.
fn match_to_running_means(pairs: &mut [(Point2, Point2)]) {
    let Some(&(first1, first2)) = pairs.first() else {
        return;
    };
    let (mut s1, mut s2) = ((first1.x, first1.y), (first2.x, first2.y));
    for (k, pair) in pairs.iter_mut().enumerate().skip(1) {
        let n = k as f64;
        let m1 = Point2::new(s1.0 / n, s1.1 / n);
        let m2 = Point2::new(s2.0 / n, s2.1 / n);
        let keep = pair.0.distance(&m1) + pair.1.distance(&m2);
        let swap = pair.1.distance(&m1) + pair.0.distance(&m2);
        if swap < keep {
            *pair = (pair.1, pair.0);
        }
        s1 = (s1.0 + pair.0.x, s1.1 + pair.0.y);
        s2 = (s2.0 + pair.1.x, s2.1 + pair.1.y);
    }
}

/// Per-emitter mean position and the radius containing the 90% of converged
/// fits closest to that mean.
pub fn precision_90(ensemble: &TrialEnsemble) -> Result<PrecisionSummary> {
    let mut pairs: Vec<(Point2, Point2)> = ensemble
        .converged()
        .map(|f| (f.params.position1(), f.params.position2()))
        .collect();
    if pairs.len() < MIN_CONVERGED_FITS {
        return Err(Error::Unlocalizable {
            converged: pairs.len(),
            required: MIN_CONVERGED_FITS,
        });
    }
    let relabeled = ensemble.scene.alpha() > LABEL_DEGENERACY_ALPHA;
    if relabeled {
        match_to_running_means(&mut pairs);
    }
    let p1: Vec<Point2> = pairs.iter().map(|p| p.0).collect();
    let p2: Vec<Point2> = pairs.iter().map(|p| p.1).collect();
    let (mean1, mean2) = (mean(&p1), mean(&p2));
    let radius1 = radius_90(&p1, &mean1);
    let radius2 = radius_90(&p2, &mean2);
    Ok(PrecisionSummary {
        mean1,
        mean2,
        radius1,
        radius2,
        summed_precision: radius1 + radius2,
        n_used: pairs.len(),
        relabeled,
    })
}

/// Condenses an ensemble into one sweep row.
pub fn summarize(scene_id: usize, ensemble: &TrialEnsemble) -> SweepRecord {
    let fraction = ensemble.convergence_fraction();
    let summary = precision_90(ensemble)
        .ok()
        .filter(|_| fraction >= MIN_CONVERGED_FRACTION);
    SweepRecord {
        scene_id,
        alpha: ensemble.scene.alpha(),
        eta: ensemble.eta,
        summed_precision: summary.map(|s| s.summed_precision),
        radius1: summary.map(|s| s.radius1),
        radius2: summary.map(|s| s.radius2),
        convergence_fraction: fraction,
        relabeled: summary.is_some_and(|s| s.relabeled),
    }
}

/// Trial seed used for sweep scene `scene_id`.
pub fn scene_trial_seed(sweep_seed: u64, scene_id: usize) -> u64 {
    RngStream::new(sweep_seed, scene_id as u64)
        .child(TRIAL_SEED_TAG)
        .generator()
        .next_u64()
}

/// The scenes a sweep with these settings evaluates.
pub fn sweep_scene_set(config: &SweepConfig, master_seed: u64) -> Result<Vec<Scene>> {
    (0..config.n_scenes)
        .map(|i| {
            let stream = RngStream::new(master_seed, i as u64).child(SCENE_TAG);
            sample_scene_in(&stream, config.alpha_min..=config.alpha_max)
        })
        .collect()
}

fn validate_etas(eta_values: &[f64]) -> Result<()> {
    if eta_values.is_empty() || eta_values.iter().any(|e| !(0.0..=0.2).contains(e)) {
        return Err(Error::domain(
            "sweep",
            format!("eta values must be non-empty and within [0, 0.2], got {eta_values:?}"),
        ));
    }
    Ok(())
}

/// Evaluates every (scene, eta) pair of explicit `scenes`; rows ordered by scene then eta.
pub fn sweep_scenes(
    scenes: &[Scene],
    eta_values: &[f64],
    n_trials: usize,
    instrument: &Instrument,
    master_seed: u64,
) -> Result<Vec<SweepRecord>> {
    validate_etas(eta_values)?;
    let tasks: Vec<(usize, f64)> = (0..scenes.len())
        .flat_map(|i| eta_values.iter().map(move |&e| (i, e)))
        .collect();
    tasks
        .into_par_iter()
        .map(|(i, eta)| {
            let seed = scene_trial_seed(master_seed, i);
            let ensemble = run_trials(&scenes[i], eta, n_trials, instrument, seed)?;
            Ok(summarize(i, &ensemble))
        })
        .collect()
}

/// Samples `config.n_scenes` scenes once and evaluates each at every noise level.
pub fn sweep(config: &SweepConfig, instrument: &Instrument, master_seed: u64) -> Result<Vec<SweepRecord>> {
    if config.n_scenes == 0 {
        return Err(Error::domain("sweep", "n_scenes must be >= 1"));
    }
    validate_etas(&config.eta_values)?;
    let scenes = sweep_scene_set(config, master_seed)?;
    sweep_scenes(&scenes, &config.eta_values, config.n_trials, instrument, master_seed)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median summed precision per distinct noise level over localized records
/// with `alpha <= alpha_max`, ordered by noise level.
pub fn median_by_eta(records: &[SweepRecord], alpha_max: f64) -> Vec<(f64, f64)> {
    let mut etas: Vec<f64> = records.iter().map(|r| r.eta).collect();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    etas.into_iter()
        .filter_map(|eta| {
            let mut v: Vec<f64> = records
                .iter()
                .filter(|r| r.eta == eta && r.alpha <= alpha_max)
                .filter_map(|r| r.summed_precision)
                .collect();
            median(&mut v).map(|m| (eta, m))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: Vec<(f64, f64)>,
}

/// Power-law fit `log(median precision) = intercept + slope * log(eta)`.
pub fn band_fit(records: &[SweepRecord], alpha_max: f64) -> Result<BandFit> {
    let points: Vec<(f64, f64)> = median_by_eta(records, alpha_max)
        .into_iter()
        .filter(|&(eta, m)| eta > 0.0 && m > 0.0)
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need >= 3 noise levels with positive median precision, got {}",
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(BandFit {
        slope,
        intercept,
        residual,
        points,
    })
}

/// Log-spaced bins for precision histograms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramSpec {
    pub n_bins: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            n_bins: 50,
            min: 1e-4,
            max: 10.0,
        }
    }
}

impl HistogramSpec {
    pub fn edges(&self) -> Result<Vec<f64>> {
        if self.n_bins == 0 || !(self.min > 0.0 && self.max > self.min && self.max.is_finite()) {
            return Err(Error::domain(
                "HistogramSpec::edges",
                format!("invalid histogram {self:?}"),
            ));
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        Ok((0..=self.n_bins)
            .map(|i| (lo + (hi - lo) * i as f64 / self.n_bins as f64).exp())
            .collect())
    }

    /// Bin index; values outside the range land in the first or last bin.
    fn bin(&self, value: f64) -> usize {
        let t = (value.max(self.min).ln() - self.min.ln()) / (self.max.ln() - self.min.ln());
        ((t * self.n_bins as f64).floor().max(0.0) as usize).min(self.n_bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub eta: f64,
    pub counts: Vec<usize>,
    /// Localized records at this noise level; the denominator for proportions.
    pub total: usize,
}

/// Per noise level, counts of summed precision values in each log-spaced bin.
pub fn precision_histogram(records: &[SweepRecord], spec: &HistogramSpec) -> Result<(Vec<f64>, Vec<HistogramRow>)> {
    let edges = spec.edges()?;
    let mut etas: Vec<f64> = records.iter().map(|r| r.eta).collect();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let rows = etas
        .into_iter()
        .map(|eta| {
            let mut counts = vec![0; spec.n_bins];
            let mut total = 0;
            for p in records
                .iter()
                .filter(|r| r.eta == eta)
                .filter_map(|r| r.summed_precision)
            {
                counts[spec.bin(p)] += 1;
                total += 1;
            }
            HistogramRow { eta, counts, total }
        })
        .collect();
    Ok((edges, rows))
}
