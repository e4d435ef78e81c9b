//! TOML experiment configuration and the configs shipped with the crate.
//!
//! ```toml
//! study = "forecast"            # forecast | signals | laglasso | significance
//! output_dir = "forecast_desk"
//! seed = 11                     # optional; overrides every section seed
//!
//! [data]
//! synth = { length = 2000, decoys = 20 }   # or: csv = "rates.csv", target = "y10"
//!
//! [forecast]
//! window = 300
//!
//! [[roster]]
//! kind = "lstm"
//! name = "LSTM06"
//! units = 8
//! seq_in = 6
//! ```
//!
//! Every section is optional and falls back to its defaults. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_csv, synth_generate, SynthConfig, TimeSeriesTable};
use crate::error::{Error, Result};
use crate::experiments::{
    table1_roster, LagLassoConfig, ModelSpec, SignalModelConfig, SignificanceConfig,
    StitchConfig, WalkForwardConfig, TABLE1_LSTM_UNITS, TABLE1_MLP_HIDDEN,
};
use crate::numerics::Rng;
use crate::signals::{ActivityConfig, TraceOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Forecast,
    Signals,
    Laglasso,
    Significance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with a date column followed by numeric columns.
    pub csv: Option<PathBuf>,
    /// Columns the CSV must have, in any order.
    pub columns: Option<Vec<String>>,
    /// Target column; `target` for synthetic data.
    pub target: Option<String>,
    pub synth: Option<SynthConfig>,
    /// Keep only the first this many rows.
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalsSection {
    pub trace: TraceOptions,
    pub activity: ActivityConfig,
    pub stitch: Option<StitchConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagLassoSection {
    /// Explanatory columns; every column that is not a model input when
    /// absent.
    pub exogenous: Option<Vec<String>>,
    pub lasso: crate::lasso::LassoConfig,
    pub trace: TraceOptions,
    pub states: Option<Vec<crate::signals::Location>>,
}

impl LagLassoSection {
    pub fn config(&self) -> LagLassoConfig {
        LagLassoConfig {
            lasso: self.lasso.clone(),
            trace: self.trace,
            states: self.states.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub forecast: WalkForwardConfig,
    pub roster: Vec<ModelSpec>,
    pub model: SignalModelConfig,
    pub signals: SignalsSection,
    pub laglasso: LagLassoSection,
    pub significance: SignificanceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            study: Study::Forecast,
            output_dir: PathBuf::from("output"),
            seed: None,
            data: DataConfig::default(),
            forecast: WalkForwardConfig::default(),
            roster: table1_roster(TABLE1_LSTM_UNITS, TABLE1_MLP_HIDDEN),
            model: SignalModelConfig::default(),
            signals: SignalsSection::default(),
            laglasso: LagLassoSection::default(),
            significance: SignificanceConfig::default(),
        }
    }
}

/// Configs compiled into the crate, by name.
pub const SHIPPED: &[(&str, &str)] = &[
    ("forecast_table1", include_str!("../../../configs/forecast_table1.toml")),
    ("forecast_table1_desk", include_str!("../../../configs/forecast_table1_desk.toml")),
    ("signals_table2", include_str!("../../../configs/signals_table2.toml")),
    ("laglasso", include_str!("../../../configs/laglasso.toml")),
    ("significance", include_str!("../../../configs/significance.toml")),
];

/// The shipped synthetic-data config for `synth`.
pub const SHIPPED_SYNTH: &str = include_str!("../../../configs/synth.toml");

pub fn shipped(name: &str) -> Option<&'static str> {
    SHIPPED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| {
            let field = e
                .span()
                .map(|sp| s[..sp.start].lines().count().to_string())
                .map_or_else(|| "config".to_string(), |line| format!("line {line}"));
            Error::config(field, e.message().to_string())
        })?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&s)?;
        // relative data paths are relative to the config file
        if let (Some(csv), Some(dir)) = (cfg.data.csv.as_mut(), path.parent()) {
            if csv.is_relative() {
                *csv = dir.join(&*csv);
            }
        }
        Ok(cfg)
    }

    /// A shipped config by name, or a file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match shipped(name_or_path) {
            Some(s) => Self::from_toml_str(s),
            None => Self::from_file(Path::new(name_or_path)),
        }
    }

    /// Section configs with the top-level seed applied.
    pub fn effective(&self) -> ExperimentConfig {
        let mut c = self.clone();
        if let Some(seed) = self.seed {
            c.forecast.seed = seed;
            c.model.seed = seed;
            c.significance.seed = seed;
        }
        c
    }

    /// Check everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        match (&self.data.csv, &self.data.synth) {
            (Some(_), Some(_)) => {
                return Err(Error::config("data", "give either csv or synth, not both"))
            }
            (None, None) => return Err(Error::config("data", "needs csv or synth")),
            (Some(p), None) => {
                if !p.is_file() {
                    return Err(Error::config(
                        "data.csv",
                        format!("file not found: {}", p.display()),
                    ));
                }
                if self.data.target.is_none() {
                    return Err(Error::config("data.target", "required with csv"));
                }
            }
            (None, Some(s)) => s.validate().map_err(|e| match e {
                Error::Config { field, message } => {
                    Error::config(format!("data.synth.{field}"), message)
                }
                other => other,
            })?,
        }
        if let Some(r) = self.data.rows {
            if r < 2 {
                return Err(Error::config("data.rows", "must be at least 2"));
            }
        }
        match self.study {
            Study::Forecast => {
                self.forecast.validate().map_err(|e| prefix("forecast", e))?;
                if self.roster.is_empty() {
                    return Err(Error::config("roster", "must list at least one model"));
                }
            }
            Study::Signals | Study::Laglasso | Study::Significance => {
                self.model.validate()?;
                if self.signals.activity.window < 2 {
                    return Err(Error::config("signals.activity.window", "must be at least 2"));
                }
                let k = self.laglasso.lasso.k;
                if self.study != Study::Signals && !(1..=crate::lasso::DEFAULT_MAX_LAGS).contains(&k) {
                    return Err(Error::config("laglasso.k", "must lie in 1..=6"));
                }
                if self.study == Study::Significance
                    && self.significance.n_runs < crate::experiments::MIN_SIGNIFICANCE_RUNS
                {
                    return Err(Error::config(
                        "significance.n_runs",
                        format!(
                            "must be at least {}",
                            crate::experiments::MIN_SIGNIFICANCE_RUNS
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<TimeSeriesTable> {
        let table = match (&self.data.csv, &self.data.synth) {
            (Some(path), _) => {
                let target = self
                    .data
                    .target
                    .as_deref()
                    .ok_or_else(|| Error::config("data.target", "required with csv"))?;
                let schema: Option<Vec<&str>> = self
                    .data
                    .columns
                    .as_ref()
                    .map(|c| c.iter().map(String::as_str).collect());
                load_csv(path, schema.as_deref(), target)?
            }
            (None, Some(s)) => synth_generate(s, &mut Rng::new(s.seed))?,
            (None, None) => return Err(Error::config("data", "needs csv or synth")),
        };
        Ok(match self.data.rows {
            Some(r) if r < table.len() => table.slice_rows(0..r),
            _ => table,
        })
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Config { field, message } => Error::config(format!("{section}.{field}"), message),
        other => other,
    }
}
