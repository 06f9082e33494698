//! Run configuration: everything needed to reproduce a run's output.

use std::path::{Path, PathBuf};

use qcm_core::ensemble::{HistogramSpec, SweepConfig};
use qcm_core::{default_layout, DetectorLayout, FitConfig, GridSpec, MeasurementSet, Point2, PsfModel, Scene};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Prefix of the comment line that embeds the configuration in CSV output.
pub const CONFIG_LINE_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    #[default]
    Forward,
    Fit,
    Trials,
    Sweep,
    Map,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Fit => "fit",
            Command::Trials => "trials",
            Command::Sweep => "sweep",
            Command::Map => "map",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub alpha: f64,
}

impl SceneSpec {
    /// Emitters at (-0.6300, -0.1276) and (0.5146, -0.5573) with ratio 0.3617.
    pub const REFERENCE: SceneSpec = SceneSpec {
        x1: -0.6300,
        y1: -0.1276,
        x2: 0.5146,
        y2: -0.5573,
        alpha: 0.3617,
    };

    /// Parses `reference` or `x1=..,y1=..,x2=..,y2=..,alpha=..`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim() == "reference" {
            return Ok(Self::REFERENCE);
        }
        let fields = parse_key_values(text, "--scene")?;
        let get = |name: &str| -> Result<f64, CliError> {
            fields
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| CliError::usage(format!("--scene: missing field `{name}`")))
        };
        for (k, _) in &fields {
            if !["x1", "y1", "x2", "y2", "alpha"].contains(&k.as_str()) {
                return Err(CliError::usage(format!("--scene: unknown field `{k}`")));
            }
        }
        Ok(Self {
            x1: get("x1")?,
            y1: get("y1")?,
            x2: get("x2")?,
            y2: get("y2")?,
            alpha: get("alpha")?,
        })
    }

    pub fn to_scene(&self) -> Result<Scene, CliError> {
        let v = [self.x1, self.y1, self.x2, self.y2, self.alpha];
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::usage("scene values must be finite"));
        }
        Ok(Scene::from_params(self.x1, self.y1, self.x2, self.y2, self.alpha)?)
    }
}

fn parse_key_values(text: &str, flag: &str) -> Result<Vec<(String, f64)>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("{flag}: expected key=value, got `{kv}`")))?;
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("{flag}: field `{}` is not a number: `{v}`", k.trim())))?;
            Ok((k.trim().to_string(), value))
        })
        .collect()
}

fn parse_triple(text: &str, what: &str) -> Result<[f64; 3], CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("--measurements: {what} value `{s}` is not a number")))
        })
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|_| CliError::usage(format!("--measurements: {what} needs exactly 3 values")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    pub g1: [f64; 3],
    pub g2: [f64; 3],
}

impl MeasurementSpec {
    /// Parses `g1=a,b,c;g2=d,e,f`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut g1 = None;
        let mut g2 = None;
        for part in text.split(';').filter(|s| !s.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--measurements: expected g1=..;g2=.., got `{part}`")))?;
            match k.trim() {
                "g1" => g1 = Some(parse_triple(v, "g1")?),
                "g2" => g2 = Some(parse_triple(v, "g2")?),
                other => return Err(CliError::usage(format!("--measurements: unknown field `{other}`"))),
            }
        }
        Ok(Self {
            g1: g1.ok_or_else(|| CliError::usage("--measurements: missing field `g1`"))?,
            g2: g2.ok_or_else(|| CliError::usage("--measurements: missing field `g2`"))?,
        })
    }

    /// Reads a measurement record: either `{"g1": [..], "g2": [..]}` or a
    /// forward-command output carrying a `measurements` object.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: invalid JSON: {e}", path.display())))?;
        let inner = match value.get("measurements") {
            Some(m) => m.clone(),
            None => value,
        };
        let inner = match inner {
            Value::Object(mut map) => {
                map.remove("noisy");
                Value::Object(map)
            }
            other => other,
        };
        serde_json::from_value(inner).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn to_measurements(&self) -> Result<MeasurementSet, CliError> {
        let m = MeasurementSet {
            g1: self.g1,
            g2: self.g2,
            noisy: true,
        };
        if !m.is_finite() {
            return Err(CliError::usage("measurement values must be finite"));
        }
        Ok(m)
    }
}

pub fn default_layout_points() -> [[f64; 2]; 3] {
    default_layout().positions().map(|p| [p.x, p.y])
}

/// Parses `default` or `x,y;x,y;x,y`.
pub fn parse_layout(text: &str) -> Result<[[f64; 2]; 3], CliError> {
    if text.trim() == "default" {
        return Ok(default_layout_points());
    }
    let pts: Vec<[f64; 2]> = text
        .split(';')
        .map(|pair| {
            let v: Vec<f64> = pair
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::usage(format!("--layout: bad point `{pair}`")))?;
            match v.as_slice() {
                [x, y] => Ok([*x, *y]),
                _ => Err(CliError::usage(format!("--layout: point `{pair}` needs exactly x,y"))),
            }
        })
        .collect::<Result<_, _>>()?;
    pts.try_into()
        .map_err(|_| CliError::usage("--layout: expected exactly three x,y points or `default`"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub sigma: f64,
    pub eta: f64,
    pub layout: [[f64; 2]; 3],
    pub scene: Option<SceneSpec>,
    pub measurements: Option<MeasurementSpec>,
    pub n_trials: usize,
    pub sweep: SweepConfig,
    pub fit: FitConfig,
    pub grid: GridSpec,
    pub histogram: HistogramSpec,
    pub out: PathBuf,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Forward,
            seed: 1,
            sigma: 1.0,
            eta: 0.01,
            layout: default_layout_points(),
            scene: None,
            measurements: None,
            n_trials: 501,
            sweep: SweepConfig::default(),
            fit: FitConfig::default(),
            grid: GridSpec::default(),
            histogram: HistogramSpec::default(),
            out: PathBuf::from("."),
            format: OutputFormat::Csv,
        }
    }
}

impl RunConfig {
    pub fn detector_layout(&self) -> Result<DetectorLayout, CliError> {
        let p = self.layout.map(|[x, y]| Point2::new(x, y));
        Ok(DetectorLayout::new(p)?)
    }

    pub fn psf(&self) -> Result<PsfModel, CliError> {
        Ok(PsfModel::new(self.sigma)?)
    }

    pub fn require_scene(&self) -> Result<Scene, CliError> {
        self.scene
            .as_ref()
            .ok_or_else(|| CliError::usage(format!("{}: a scene is required (--scene)", self.command.name())))?
            .to_scene()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Overlays `overrides` (a full or partial configuration object) on `self`.
    pub fn merged_with(&self, overrides: &Value) -> Result<RunConfig, CliError> {
        let mut base = serde_json::to_value(self).expect("config serializes");
        merge(&mut base, overrides);
        serde_json::from_value(base).map_err(|e| CliError::usage(format!("config: {e}")))
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Extracts a configuration object from a config file or from any output
/// file this tool wrote (CSV `# config:` line, or a JSON `config` field).
pub fn read_config_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |e: serde_json::Error| CliError::usage(format!("{}: invalid configuration: {e}", path.display()));
    if text.trim_start().starts_with('#') {
        let line = text
            .lines()
            .find_map(|l| l.strip_prefix(CONFIG_LINE_PREFIX))
            .ok_or_else(|| CliError::usage(format!("{}: no `{}` line", path.display(), CONFIG_LINE_PREFIX.trim())))?;
        return serde_json::from_str(line).map_err(bad);
    }
    let value: Value = serde_json::from_str(&text).map_err(bad)?;
    if value.get("tool").is_some() {
        if let Some(cfg) = value.get("config") {
            return Ok(cfg.clone());
        }
    }
    Ok(value)
}
