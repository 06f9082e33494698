//! One function per subcommand. Each writes its files under `config.out` and
//! reports whether the primary result was localized.

use std::path::PathBuf;

use qcm_core::ensemble::{
    precision_90, precision_histogram, run_trials, sweep, Instrument, MIN_CONVERGED_FITS, MIN_CONVERGED_FRACTION,
};
use qcm_core::{confocal_map, fit_scene, forward_detail, RngStream};
use serde_json::{json, Map};

use crate::config::{Command, RunConfig};
use crate::error::{exit, CliError};
use crate::output::{write_record, write_table, Cell, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Set when the primary result is non-converged or unlocalizable.
    pub unlocalized: Option<String>,
}

impl Outcome {
    fn ok(files: Vec<PathBuf>) -> Self {
        Self {
            files,
            unlocalized: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.unlocalized.is_some() {
            exit::UNLOCALIZED
        } else {
            exit::SUCCESS
        }
    }
}

fn instrument(config: &RunConfig) -> Result<Instrument, CliError> {
    config.fit.validate()?;
    Ok(Instrument {
        layout: config.detector_layout()?,
        psf: config.psf()?,
        fit: config.fit.clone(),
    })
}

pub fn execute(config: &RunConfig) -> Result<Outcome, CliError> {
    match config.command {
        Command::Forward => cmd_forward(config),
        Command::Fit => cmd_fit(config),
        Command::Trials => cmd_trials(config),
        Command::Sweep => cmd_sweep(config),
        Command::Map => cmd_map(config),
    }
}

/// Exact per-detector values of the configured scene.
pub fn cmd_forward(config: &RunConfig) -> Result<Outcome, CliError> {
    let scene = config.require_scene()?;
    let layout = config.detector_layout()?;
    let detail = forward_detail(&scene, &layout, &config.psf()?);
    let m = &detail.measurements;
    let detectors: Vec<_> = layout
        .positions()
        .iter()
        .enumerate()
        .map(|(j, p)| {
            json!({
                "x": p.x, "y": p.y,
                "p1": detail.p1[j], "p2": detail.p2[j],
                "g1": m.g1[j], "g2": m.g2[j],
            })
        })
        .collect();
    let mut payload = Map::new();
    payload.insert("measurements".into(), json!({ "g1": m.g1, "g2": m.g2, "noisy": false }));
    payload.insert("detectors".into(), json!(detectors));
    let path = write_record(config, "measurements", payload)?;
    Ok(Outcome::ok(vec![path]))
}

/// Multi-start fit of the configured measurements.
pub fn cmd_fit(config: &RunConfig) -> Result<Outcome, CliError> {
    let measured = config
        .measurements
        .as_ref()
        .ok_or_else(|| CliError::usage("fit: measurements are required (--measurements or --input)"))?
        .to_measurements()?;
    let inst = instrument(config)?;
    let fit = fit_scene(
        &measured,
        &inst.layout,
        &inst.psf,
        &inst.fit,
        &RngStream::new(config.seed, 0),
    )?;
    let mut payload = Map::new();
    payload.insert("result".into(), serde_json::to_value(fit).expect("fit serializes"));
    let path = write_record(config, "fit", payload)?;
    Ok(Outcome {
        files: vec![path],
        unlocalized: (!fit.converged).then(|| format!("fit did not converge (chi2 = {:e})", fit.chi2)),
    })
}

/// Repeated noisy trials of one scene: the fitted-position scatter plus the
/// 90%-boundary precision summary.
pub fn cmd_trials(config: &RunConfig) -> Result<Outcome, CliError> {
    let scene = config.require_scene()?;
    let inst = instrument(config)?;
    let ensemble = run_trials(&scene, config.eta, config.n_trials, &inst, config.seed)?;

    let mut scatter = Table::new(vec![
        "trial",
        "converged",
        "chi2",
        "iterations",
        "x1",
        "y1",
        "x2",
        "y2",
        "alpha",
    ]);
    scatter.note("eta", config.eta.to_string());
    for (t, f) in ensemble.fits.iter().enumerate() {
        let p = f.params;
        scatter.push(vec![
            t.into(),
            f.converged.into(),
            f.chi2.into(),
            f.iterations.into(),
            p.x1.into(),
            p.y1.into(),
            p.x2.into(),
            p.y2.into(),
            p.alpha.into(),
        ]);
    }
    let scatter_path = write_table(config, "trials", &scatter)?;

    let precision = precision_90(&ensemble);
    let mut payload = Map::new();
    payload.insert("eta".into(), json!(config.eta));
    payload.insert("n_trials".into(), json!(ensemble.fits.len()));
    payload.insert("convergence_fraction".into(), json!(ensemble.convergence_fraction()));
    payload.insert(
        "truth".into(),
        json!({
            "x1": scene.emitter1().position.x, "y1": scene.emitter1().position.y,
            "x2": scene.emitter2().position.x, "y2": scene.emitter2().position.y,
            "alpha": scene.alpha(),
        }),
    );
    let unlocalized = match &precision {
        Ok(s) => {
            payload.insert("precision".into(), serde_json::to_value(s).expect("summary serializes"));
            payload.insert(
                "truth_inside".into(),
                json!([
                    s.contains(1, &scene.emitter1().position),
                    s.contains(2, &scene.emitter2().position)
                ]),
            );
            None
        }
        Err(e) => {
            payload.insert("precision".into(), serde_json::Value::Null);
            Some(e.to_string())
        }
    };
    let summary_path = write_record(config, "precision", payload)?;
    Ok(Outcome {
        files: vec![scatter_path, summary_path],
        unlocalized,
    })
}

/// Noise sweep over random scenes: one row per (scene, eta) plus histograms.
pub fn cmd_sweep(config: &RunConfig) -> Result<Outcome, CliError> {
    let inst = instrument(config)?;
    let records = sweep(&config.sweep, &inst, config.seed)?;
    let exclusion = format!(
        "a (scene, eta) pair is unlocalized when fewer than {MIN_CONVERGED_FITS} fits or less than {:.0}% of trials converge; its precision cells are empty",
        MIN_CONVERGED_FRACTION * 100.0
    );

    let mut table = Table::new(vec![
        "scene_id",
        "alpha",
        "eta",
        "summed_precision",
        "radius1",
        "radius2",
        "convergence_fraction",
        "localized",
        "relabeled",
    ]);
    table.note("exclusion_rule", exclusion.clone());
    for r in &records {
        table.push(vec![
            r.scene_id.into(),
            r.alpha.into(),
            r.eta.into(),
            r.summed_precision.into(),
            r.radius1.into(),
            r.radius2.into(),
            r.convergence_fraction.into(),
            r.localized().into(),
            r.relabeled.into(),
        ]);
    }
    let sweep_path = write_table(config, "sweep", &table)?;

    let (edges, rows) = precision_histogram(&records, &config.histogram)?;
    let mut hist = Table::new(vec!["eta", "bin", "bin_lo", "bin_hi", "count", "proportion"]);
    hist.note("exclusion_rule", exclusion);
    for row in &rows {
        for (b, &count) in row.counts.iter().enumerate() {
            let proportion = if row.total > 0 {
                count as f64 / row.total as f64
            } else {
                0.0
            };
            hist.push(vec![
                row.eta.into(),
                b.into(),
                edges[b].into(),
                edges[b + 1].into(),
                count.into(),
                proportion.into(),
            ]);
        }
    }
    let hist_path = write_table(config, "histogram", &hist)?;
    Ok(Outcome::ok(vec![sweep_path, hist_path]))
}

/// Normalized confocal intensity map of the configured scene.
pub fn cmd_map(config: &RunConfig) -> Result<Outcome, CliError> {
    let scene = config.require_scene()?;
    let map = confocal_map(&scene, &config.psf()?, &config.grid)?;
    let mut table = Table::new(vec!["x", "y", "intensity"]);
    table.note("local_maxima_above_10pct", map.local_maxima(0.1).len().to_string());
    for (iy, &y) in map.ys.iter().enumerate() {
        for (ix, &x) in map.xs.iter().enumerate() {
            table.push(vec![Cell::Float(x), Cell::Float(y), Cell::Float(map.at(ix, iy))]);
        }
    }
    let path = write_table(config, "map", &table)?;
    Ok(Outcome::ok(vec![path]))
}
