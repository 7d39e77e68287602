//! Scenario configuration: a TOML file, dotted-path overrides, validation
//! with field paths, and a fully resolved dump.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::SystemParams;
use crate::drift::DriftModel;
use crate::error::{Error, Result};
use crate::protocol::SecurityParams;
use crate::sim::SamplingMode;
use crate::slicer::SlicingOptions;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Expectation-level statistics.
    #[default]
    Analytic,
    /// Interval-level sampling.
    Montecarlo,
}

impl std::str::FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(RunMode::Analytic),
            "montecarlo" => Ok(RunMode::Montecarlo),
            other => Err(Error::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Either an explicit list or an inclusive `start..=stop` range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0) || !(stop >= start) {
                    return Vec::new();
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                // round to suppress accumulated float noise in printed grids
                (0..=n)
                    .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                    .collect()
            }
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        if let Grid::Range { step, .. } = self {
            if !(*step > 0.0) {
                return Err(Error::config(path, "step must be positive"));
            }
        }
        let v = self.values();
        if v.is_empty() {
            return Err(Error::config(path, "grid is empty"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(path, "grid values must be finite"));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(path, "grid must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Total loss in dB.
    pub loss_db: Grid,
    /// Total pulse counts for the free-running curves.
    pub n_total: Vec<f64>,
    /// Slice counts for the free-running curves.
    pub m: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            loss_db: Grid::Range {
                start: 20.0,
                stop: 46.0,
                step: 0.1,
            },
            n_total: vec![1.0e12, 1.0e13],
            m: vec![16],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_db.validate("sweep.loss_db")?;
        Grid::List(self.n_total.clone()).validate("sweep.n_total")?;
        if self.n_total.iter().any(|&n| !(n > 0.0)) {
            return Err(Error::config(
                "sweep.n_total",
                "pulse counts must be positive",
            ));
        }
        if self.m.is_empty() {
            return Err(Error::config("sweep.m", "grid is empty"));
        }
        if self.m.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("sweep.m", "grid must be strictly increasing"));
        }
        if self.m.contains(&0) {
            return Err(Error::config("sweep.m", "slice counts must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Simulated duration for Monte Carlo runs.
    pub duration_s: f64,
    pub mode: RunMode,
    pub sampling: SamplingMode,
    pub out_dir: PathBuf,
    pub system: SystemParams,
    pub drift: DriftModel,
    pub security: SecurityParams,
    pub slicing: SlicingOptions,
    pub sweep: SweepConfig,
}

impl Default for ScenarioConfig {
    /// The 50.7 h experiment: 100 km, 16 slices, 29 drift periods.
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            duration_s: 50.7 * 3600.0,
            mode: RunMode::Analytic,
            sampling: SamplingMode::Poisson,
            out_dir: PathBuf::from("out"),
            system: SystemParams::default(),
            drift: DriftModel::default(),
            security: SecurityParams::default(),
            slicing: SlicingOptions::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parses TOML text, filling missing fields from the defaults.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_owned()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_table(doc)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.to_owned(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    fn from_table(doc: toml::Table) -> Result<Self> {
        let mut base =
            toml::Table::try_from(ScenarioConfig::default()).expect("defaults serialize");
        // the drift kind is a tagged enum; replace the whole section rather
        // than merging fields of a different variant
        if let Some(drift) = doc.get("drift") {
            if drift.get("kind").is_some() {
                base.remove("drift");
            }
        }
        merge(&mut base, doc);
        let cfg: ScenarioConfig =
            toml::Value::Table(base)
                .try_into()
                .map_err(|e: toml::de::Error| {
                    Error::config("<config>", e.message().trim().to_owned())
                })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::config("duration_s", "must be positive and finite"));
        }
        if self.duration_s < self.system.t_interval {
            return Err(Error::config(
                "duration_s",
                "must cover at least one sampling interval",
            ));
        }
        self.system.validate()?;
        self.drift.validate()?;
        self.security.validate()?;
        if self.slicing.smoothing_width == 0 {
            return Err(Error::config("slicing.smoothing_width", "must be >= 1"));
        }
        self.sweep.validate()?;
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::config("out_dir", "must not be empty"));
        }
        Ok(())
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `a.b.c=value`. The value is read as a TOML literal, falling back
/// to a plain string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must have the form key.path=value"))?;
    let path = path.trim();
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(path, "empty key in override path"));
    }
    let value = parse_literal(raw.trim());
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::config(path, format!("`{k}` is not a section"))),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}
