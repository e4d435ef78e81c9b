//! Execute an [`ExperimentConfig`] and write its artifacts.
//!
//! Every study writes a `report.json` artifact tagged with its kind and the
//! hash of the config it came from, plus CSV and plot-data files next to it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Study};
use crate::error::{Error, Result};
use crate::experiments::{
    compare_models, config_hash, lstm_laglasso, signal_study, significance_test,
    train_signal_model, walk_forward, ExplanationReport, ForecastReport, SignalStudyConfig,
    SignalStudyReport, SignificanceReport,
};
use crate::plot::{plot_data, PlotKind};

pub const ARTIFACT_FORMAT: &str = "lstm-laglasso/artifact";
pub const OUTPUT_ROOT_ENV: &str = "LAGLASSO_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    ForecastReport(ForecastReport),
    SignalStudy(SignalStudyReport),
    Explanation(ExplanationReport),
    Significance(SignificanceReport),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::ForecastReport(_) => "forecast_report",
            Payload::SignalStudy(_) => "signal_study",
            Payload::Explanation(_) => "explanation",
            Payload::Significance(_) => "significance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub format: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub payload: Payload,
}

impl Artifact {
    pub fn load(path: &Path) -> Result<Artifact> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let a: Artifact = serde_json::from_str(&s)?;
        if a.format != ARTIFACT_FORMAT {
            return Err(Error::Serde(format!(
                "{}: not an artifact (format {:?})",
                path.display(),
                a.format
            )));
        }
        Ok(a)
    }
}

/// Where a run writes: `output_dir` under the root named by
/// `LAGLASSO_OUTPUT_ROOT` when that is set, else as given.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() && cfg.output_dir.is_relative() => {
            PathBuf::from(root).join(&cfg.output_dir)
        }
        _ => cfg.output_dir.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub config_hash: String,
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
    files.push(p);
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

/// Validate, run the selected study, write artifacts to `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let eff = cfg.effective();
    let table = eff.load_data()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let payload = match eff.study {
        Study::Forecast => {
            let report = walk_forward(&table, &eff.roster, &eff.forecast)?;
            write(dir, "forecast_errors.csv", &report.to_csv(), &mut files)?;
            let baseline = report
                .models()
                .into_iter()
                .find(|m| m == "NN TgtOnly")
                .unwrap_or_else(|| report.models()[0].clone());
            let cmp = compare_models(&report, &baseline)?;
            write(dir, "comparison.json", &json(&cmp)?, &mut files)?;
            Payload::ForecastReport(report)
        }
        Study::Signals => {
            let report = signal_study(
                &table,
                &SignalStudyConfig {
                    model: eff.model.clone(),
                    trace: eff.signals.trace,
                    activity: eff.signals.activity,
                    stitch: eff.signals.stitch.clone(),
                },
            )?;
            write(dir, "trace.csv", &report.trace.to_long_csv(), &mut files)?;
            write(dir, "activity.json", &json(&report.activity)?, &mut files)?;
            Payload::SignalStudy(report)
        }
        Study::Laglasso | Study::Significance => {
            let model = train_signal_model(&table, &eff.model)?;
            write(dir, "model.json", &json(&model)?, &mut files)?;
            let exog: Vec<String> = match &eff.laglasso.exogenous {
                Some(e) => e.clone(),
                None => table
                    .names()
                    .iter()
                    .filter(|n| !model.inputs.contains(n))
                    .cloned()
                    .collect(),
            };
            let refs: Vec<&str> = exog.iter().map(String::as_str).collect();
            let lcfg = eff.laglasso.config();
            if eff.study == Study::Laglasso {
                let report = lstm_laglasso(&model, &table, &refs, &lcfg)?;
                let mut paths = String::from("state,unit,gamma,n_active,objective,mse\n");
                for e in &report.explanations {
                    for line in e.fit.path.to_csv().lines().skip(1) {
                        paths.push_str(&format!("{},{},{line}\n", e.state.name(), e.unit));
                    }
                }
                write(dir, "lasso_paths.csv", &paths, &mut files)?;
                Payload::Explanation(report)
            } else {
                Payload::Significance(significance_test(
                    &model,
                    &table,
                    &refs,
                    &lcfg,
                    &eff.significance,
                )?)
            }
        }
    };
    let artifact = Artifact {
        format: ARTIFACT_FORMAT.into(),
        config_hash: hash.clone(),
        seed: cfg.seed,
        payload,
    };
    write(dir, "report.json", &json(&artifact)?, &mut files)?;
    for kind in PlotKind::for_payload(&artifact.payload) {
        let data = plot_data(&artifact, *kind)?;
        write(dir, &format!("plot_{}.json", kind.name()), &json(&data)?, &mut files)?;
    }
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        files,
        config_hash: hash,
    })
}
