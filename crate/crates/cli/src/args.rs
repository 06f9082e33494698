use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{parse_layout, read_config_value, Command, MeasurementSpec, OutputFormat, RunConfig, SceneSpec};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "qcm",
    version,
    about = "Two-emitter localization from intensity and photon-correlation measurements"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Exact intensity and zero-lag correlation at each detector.
    Forward {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Recover emitter positions and brightness ratio from six measurements.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Inline values, `g1=a,b,c;g2=d,e,f`.
        #[arg(long, conflicts_with = "input")]
        measurements: Option<String>,
        /// JSON measurement file (e.g. the output of `forward`).
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Repeated noisy trials of one scene and its 90% precision boundaries.
    Trials {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scene: SceneArgs,
        /// Number of noisy trials.
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Precision against noise level over random scenes.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of random scenes.
        #[arg(long)]
        scenes: Option<usize>,
        /// Comma-separated noise levels within [0, 0.2].
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
        /// Noisy trials per scene and noise level.
        #[arg(long)]
        trials: Option<usize>,
        /// Lower bound of the sampled brightness ratio.
        #[arg(long)]
        alpha_min: Option<f64>,
        /// Upper bound of the sampled brightness ratio.
        #[arg(long)]
        alpha_max: Option<f64>,
        /// Number of log-spaced histogram bins.
        #[arg(long)]
        bins: Option<usize>,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Normalized confocal intensity map of a scene.
    Map {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scene: SceneArgs,
        /// Grid spacing in PSF standard deviations.
        #[arg(long)]
        pitch: Option<f64>,
        /// Half-width of the square grid.
        #[arg(long)]
        extent: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Master seed for every random draw.
    #[arg(long)]
    pub seed: Option<u64>,
    /// PSF standard deviation; positions are in the same unit.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Relative measurement noise level.
    #[arg(long)]
    pub eta: Option<f64>,
    /// `default` or three points `x,y;x,y;x,y`.
    #[arg(long)]
    pub layout: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Table format; single records are always JSON.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Configuration file, or an earlier output file; its values override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// `reference` or `x1=..,y1=..,x2=..,y2=..,alpha=..`.
    #[arg(long)]
    pub scene: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Local minimizer (`nelder-mead`, `nelder-mead-adaptive`).
    #[arg(long)]
    pub method: Option<String>,
    /// Random starting points per fit.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Iteration budget of each local search.
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl CommonArgs {
    fn apply(&self, c: &mut RunConfig) -> Result<(), CliError> {
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.sigma {
            c.sigma = v;
        }
        if let Some(v) = self.eta {
            c.eta = v;
        }
        if let Some(v) = &self.layout {
            c.layout = parse_layout(v)?;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = self.format {
            c.format = match v {
                FormatArg::Csv => OutputFormat::Csv,
                FormatArg::Json => OutputFormat::Json,
            };
        }
        Ok(())
    }
}

impl SceneArgs {
    fn apply(&self, c: &mut RunConfig) -> Result<(), CliError> {
        if let Some(s) = &self.scene {
            c.scene = Some(SceneSpec::parse(s)?);
        }
        Ok(())
    }
}

impl FitArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = &self.method {
            c.fit.method = v.clone();
        }
        if let Some(v) = self.starts {
            c.fit.n_starts = v;
        }
        if let Some(v) = self.max_iterations {
            c.fit.max_iterations = v;
        }
    }
}

impl Cli {
    /// Resolves flags and an optional config file into the run configuration
    /// plus the worker count.
    pub fn into_config(self) -> Result<(RunConfig, Option<usize>), CliError> {
        let mut c = RunConfig::default();
        let common = match &self.command {
            Sub::Forward { common, scene } => {
                c.command = Command::Forward;
                scene.apply(&mut c)?;
                common
            }
            Sub::Fit {
                common,
                measurements,
                input,
                fit,
            } => {
                c.command = Command::Fit;
                if let Some(m) = measurements {
                    c.measurements = Some(MeasurementSpec::parse(m)?);
                }
                if let Some(p) = input {
                    c.measurements = Some(MeasurementSpec::from_file(p)?);
                }
                fit.apply(&mut c);
                common
            }
            Sub::Trials {
                common,
                scene,
                trials,
                fit,
            } => {
                c.command = Command::Trials;
                scene.apply(&mut c)?;
                if let Some(n) = trials {
                    c.n_trials = *n;
                }
                fit.apply(&mut c);
                common
            }
            Sub::Sweep {
                common,
                scenes,
                etas,
                trials,
                alpha_min,
                alpha_max,
                bins,
                fit,
            } => {
                c.command = Command::Sweep;
                if let Some(n) = scenes {
                    c.sweep.n_scenes = *n;
                }
                if let Some(e) = etas {
                    c.sweep.eta_values = e.clone();
                }
                if let Some(n) = trials {
                    c.sweep.n_trials = *n;
                }
                if let Some(a) = alpha_min {
                    c.sweep.alpha_min = *a;
                }
                if let Some(a) = alpha_max {
                    c.sweep.alpha_max = *a;
                }
                if let Some(b) = bins {
                    c.histogram.n_bins = *b;
                }
                fit.apply(&mut c);
                common
            }
            Sub::Map {
                common,
                scene,
                pitch,
                extent,
            } => {
                c.command = Command::Map;
                scene.apply(&mut c)?;
                if let Some(p) = pitch {
                    c.grid.pitch = *p;
                }
                if let Some(e) = extent {
                    c.grid.x_min = -e;
                    c.grid.x_max = *e;
                    c.grid.y_min = -e;
                    c.grid.y_max = *e;
                }
                common
            }
        };
        common.apply(&mut c)?;
        let workers = common.workers;
        if let Some(path) = &common.config {
            let command = c.command;
            c = c.merged_with(&read_config_value(path)?)?;
            if c.command != command {
                return Err(CliError::usage(format!(
                    "config file is for `{}`, but `{}` was requested",
                    c.command.name(),
                    command.name()
                )));
            }
        }
        Ok((c, workers))
    }
}
