//! Walk-forward, direct multi-horizon forecasting.
//!
//! For every forecast target `τ` in the static test region and every horizon
//! `h`, the forecast is made at `t = τ − 1 − h` by a model trained on the
//! trailing window of rows `t − window + 1 ..= t`, using only samples whose
//! labels are at or before `t`. Inputs are normalized with statistics of that
//! same window. Each (model, horizon) pair is its own chain of retrainings,
//! optionally warm-started from the previous window's solution.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_point, SequenceSample, TimeSeriesTable};
use crate::error::{Error, Result};
use crate::lasso::{select_relevant_features, GammaChoice, LassoConfig};
use crate::lstm::{predict, LstmModel, LstmParameters, SeqOut};
use crate::mlp::{mlp_forward, MlpParameters, MlpSample, DEFAULT_HIDDEN};
use crate::numerics::{variance, Rng};
use crate::training::{fit, AdamConfig, TrainConfig};

use super::{config_hash, ErrorSummary};

/// One entry of the model roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Many-to-one LSTM over the last `seq_in` values of the target.
    Lstm {
        name: String,
        units: usize,
        seq_in: usize,
    },
    /// MLP on the target at lags `0..steps`.
    MlpTarget {
        name: String,
        hidden: usize,
        steps: usize,
    },
    /// MLP on lagged features chosen by Lasso on the static training region,
    /// once per horizon.
    MlpRelevant {
        name: String,
        hidden: usize,
        lasso: LassoConfig,
        /// Keep only the strongest terms.
        max_terms: Option<usize>,
        /// Candidate columns; all columns when absent.
        candidates: Option<Vec<String>>,
    },
    /// Predicts the last observed target value.
    LastValue { name: String },
}

impl ModelSpec {
    pub fn name(&self) -> &str {
        match self {
            ModelSpec::Lstm { name, .. }
            | ModelSpec::MlpTarget { name, .. }
            | ModelSpec::MlpRelevant { name, .. }
            | ModelSpec::LastValue { name } => name,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("roster.{}", self.name()), m));
        match self {
            ModelSpec::Lstm { units, seq_in, .. } if *units == 0 || *seq_in == 0 => {
                bad("units and seq_in must be positive")
            }
            ModelSpec::MlpTarget { hidden, steps, .. } if *hidden == 0 || *steps == 0 => {
                bad("hidden and steps must be positive")
            }
            ModelSpec::MlpRelevant { hidden, lasso, .. } if *hidden == 0 || lasso.k == 0 => {
                bad("hidden and lasso.k must be positive")
            }
            _ => Ok(()),
        }
    }
}

/// LSTM06, LSTM21, LSTM61, NN TgtOnly and NN RelFeat.
pub fn table1_roster(lstm_units: usize, mlp_hidden: usize) -> Vec<ModelSpec> {
    let lstm = |seq: usize| ModelSpec::Lstm {
        name: format!("LSTM{seq:02}"),
        units: lstm_units,
        seq_in: seq,
    };
    vec![
        lstm(6),
        lstm(21),
        lstm(61),
        ModelSpec::MlpTarget {
            name: "NN TgtOnly".into(),
            hidden: mlp_hidden,
            steps: 6,
        },
        ModelSpec::MlpRelevant {
            name: "NN RelFeat".into(),
            hidden: mlp_hidden,
            lasso: LassoConfig {
                k: 5,
                gamma: GammaChoice::FractionOfMax(0.1),
                ..LassoConfig::default()
            },
            max_terms: Some(12),
            candidates: None,
        },
    ]
}

pub const TABLE1_HORIZONS: [usize; 5] = [0, 5, 10, 15, 20];
pub const TABLE1_WINDOW: usize = 3000;
pub const TABLE1_LSTM_UNITS: usize = 100;
pub const TABLE1_MLP_HIDDEN: usize = DEFAULT_HIDDEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkForwardConfig {
    pub window: usize,
    pub horizons: Vec<usize>,
    /// Fraction of rows before the static test region.
    pub train_frac: f64,
    /// Retrain every this many forecast steps; in between the last model and
    /// its normalization are reused.
    pub retrain_every: usize,
    pub initial_epochs: usize,
    pub retrain_epochs: usize,
    pub warm_start: bool,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub adam: AdamConfig,
    /// Independent re-runs with shifted seeds; only their MSEs are kept
    /// beyond the first.
    pub replicates: usize,
    /// Only forecast the first this many targets of the test region.
    pub max_test_steps: Option<usize>,
    pub seed: u64,
}

impl Default for WalkForwardConfig {
    fn default() -> Self {
        WalkForwardConfig {
            window: TABLE1_WINDOW,
            horizons: TABLE1_HORIZONS.to_vec(),
            train_frac: 0.7,
            retrain_every: 1,
            initial_epochs: 200,
            retrain_epochs: 50,
            warm_start: true,
            batch_size: 3000,
            clip_norm: None,
            adam: AdamConfig::default(),
            replicates: 1,
            max_test_steps: None,
            seed: 0,
        }
    }
}

impl WalkForwardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::config("window", "must be at least 2"));
        }
        if self.horizons.is_empty() {
            return Err(Error::config("horizons", "must not be empty"));
        }
        let mut h = self.horizons.clone();
        h.sort_unstable();
        h.dedup();
        if h.len() != self.horizons.len() {
            return Err(Error::config("horizons", "must not repeat"));
        }
        if self.retrain_every == 0 {
            return Err(Error::config("retrain_every", "must be at least 1"));
        }
        if self.initial_epochs == 0 || self.retrain_epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::config("train_frac", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Forecasts and errors of one (model, horizon, replicate) chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub model: String,
    pub horizon: usize,
    pub replicate: usize,
    /// Row `t` at which each forecast is made.
    pub origin_rows: Vec<usize>,
    /// Row `t + 1 + h` being forecast.
    pub target_rows: Vec<usize>,
    pub target_dates: Vec<NaiveDate>,
    pub predictions: Vec<f64>,
    pub actuals: Vec<f64>,
    /// Squared errors in the units of the window normalization.
    pub errors: Vec<f64>,
    /// Squared errors in the original units.
    pub raw_errors: Vec<f64>,
    pub summary: ErrorSummary,
    pub raw_summary: ErrorSummary,
    /// Inputs as `column@lag`.
    pub inputs: Vec<String>,
    pub retrainings: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMse {
    pub model: String,
    pub horizon: usize,
    /// Mean normalized squared error of each replicate.
    pub mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub config: WalkForwardConfig,
    pub roster: Vec<ModelSpec>,
    pub config_hash: String,
    pub target: String,
    pub rows: usize,
    /// First row of the static test region.
    pub split: usize,
    /// Replicate 0 only.
    pub series: Vec<ForecastSeries>,
    pub replicate_mse: Vec<ReplicateMse>,
}

impl ForecastReport {
    pub fn series_for(&self, model: &str, horizon: usize) -> Option<&ForecastSeries> {
        self.series
            .iter()
            .find(|s| s.model == model && s.horizon == horizon)
    }

    pub fn models(&self) -> Vec<String> {
        self.roster.iter().map(|m| m.name().to_string()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One line per forecast.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,horizon,origin_row,target_date,prediction,actual,error,raw_error\n",
        );
        for s in &self.series {
            for i in 0..s.errors.len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    s.model,
                    s.horizon,
                    s.origin_rows[i],
                    s.target_dates[i],
                    s.predictions[i],
                    s.actuals[i],
                    s.errors[i],
                    s.raw_errors[i]
                ));
            }
        }
        out
    }
}

/// Median and spread of a model's errors relative to a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeMse {
    pub model: String,
    pub horizon: usize,
    pub median_ratio: f64,
    pub mean_ratio: f64,
    pub std_ratio: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

/// Ratios of every model's error summaries to `baseline`'s, per horizon.
pub fn compare_models(report: &ForecastReport, baseline: &str) -> Result<Vec<RelativeMse>> {
    if !report.series.iter().any(|s| s.model == baseline) {
        return Err(Error::invalid(format!("baseline {baseline:?} not in report")));
    }
    let mut out = Vec::new();
    for s in &report.series {
        let b = report.series_for(baseline, s.horizon).ok_or_else(|| {
            Error::invalid(format!("baseline {baseline:?} has no horizon {}", s.horizon))
        })?;
        out.push(RelativeMse {
            model: s.model.clone(),
            horizon: s.horizon,
            median_ratio: ratio(s.summary.median, b.summary.median),
            mean_ratio: ratio(s.summary.mean, b.summary.mean),
            std_ratio: ratio(s.summary.std, b.summary.std),
        });
    }
    Ok(out)
}

/// How one model turns normalized window data into inputs.
#[derive(Debug, Clone)]
enum Plan {
    Lstm { units: usize, seq_in: usize },
    Mlp { hidden: usize, terms: Vec<(usize, usize)> },
    LastValue,
}

/// Columns a chain reads, with the target last-resolved position.
#[derive(Debug, Clone)]
struct ChainSetup {
    model: String,
    model_index: usize,
    horizon: usize,
    replicate: usize,
    /// Table column indices used, target included.
    cols: Vec<usize>,
    /// Position of the target in `cols`.
    tpos: usize,
    plan: Plan,
    inputs: Vec<String>,
    notes: Vec<String>,
}

impl ChainSetup {
    fn max_lag(&self) -> usize {
        match &self.plan {
            Plan::Lstm { seq_in, .. } => seq_in - 1,
            Plan::Mlp { terms, .. } => terms.iter().map(|t| t.1).max().unwrap_or(0),
            Plan::LastValue => 0,
        }
    }
}

/// Per-window mean/std of the chain's columns.
struct WindowNorm {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl WindowNorm {
    fn fit(table: &TimeSeriesTable, cols: &[usize], lo: usize, t: usize) -> Result<Self> {
        let mut means = Vec::with_capacity(cols.len());
        let mut stds = Vec::with_capacity(cols.len());
        for &c in cols {
            let slice = &table.column_at(c)[lo..=t];
            let m = crate::numerics::mean(slice);
            let sd = variance(slice).sqrt();
            if !(sd > 1e-12 * m.abs().max(1.0)) {
                return Err(Error::ZeroVariance {
                    column: table.names()[c].clone(),
                });
            }
            means.push(m);
            stds.push(sd);
        }
        Ok(WindowNorm { means, stds })
    }
}

enum Trained {
    Lstm(LstmModel),
    Mlp(MlpParameters),
    Nothing,
}

struct ChainData<'a> {
    table: &'a TimeSeriesTable,
    setup: &'a ChainSetup,
    norm: &'a WindowNorm,
}

impl ChainData<'_> {
    #[inline]
    fn z(&self, pos: usize, row: usize) -> f64 {
        let c = self.setup.cols[pos];
        (self.table.column_at(c)[row] - self.norm.means[pos]) / self.norm.stds[pos]
    }

    fn lstm_inputs(&self, seq_in: usize, a: usize) -> Vec<Vec<f64>> {
        (a + 1 - seq_in..=a)
            .map(|r| {
                (0..self.setup.cols.len())
                    .map(|p| self.z(p, r))
                    .collect()
            })
            .collect()
    }

    fn mlp_inputs(&self, terms: &[(usize, usize)], a: usize) -> Vec<f64> {
        terms.iter().map(|&(p, lag)| self.z(p, a - lag)).collect()
    }
}

fn run_chain(
    table: &TimeSeriesTable,
    setup: &ChainSetup,
    cfg: &WalkForwardConfig,
    split: usize,
) -> Result<ForecastSeries> {
    let n = table.len();
    let h = setup.horizon;
    let chain_seed = cfg.seed.wrapping_add(setup.replicate as u64);
    let stream = ((setup.model_index as u64) << 32) | h as u64;
    let mut rng = Rng::substream(chain_seed, stream);
    let y = table.column_at(setup.cols[setup.tpos]);

    let mut taus: Vec<usize> = (split..n).collect();
    if let Some(m) = cfg.max_test_steps {
        taus.truncate(m);
    }
    let mut model = Trained::Nothing;
    let mut norm: Option<WindowNorm> = None;
    let mut retrainings = 0;
    let mut out = ForecastSeries {
        model: setup.model.clone(),
        horizon: h,
        replicate: setup.replicate,
        origin_rows: Vec::with_capacity(taus.len()),
        target_rows: Vec::with_capacity(taus.len()),
        target_dates: Vec::with_capacity(taus.len()),
        predictions: Vec::with_capacity(taus.len()),
        actuals: Vec::with_capacity(taus.len()),
        errors: Vec::with_capacity(taus.len()),
        raw_errors: Vec::with_capacity(taus.len()),
        summary: ErrorSummary::of(&[]),
        raw_summary: ErrorSummary::of(&[]),
        inputs: setup.inputs.clone(),
        retrainings: 0,
        notes: setup.notes.clone(),
    };
    let max_lag = setup.max_lag();

    for (step, &tau) in taus.iter().enumerate() {
        let t = tau - 1 - h;
        let lo = t + 1 - cfg.window;
        if step % cfg.retrain_every == 0 {
            let wn = WindowNorm::fit(table, &setup.cols, lo, t)?;
            let data = ChainData {
                table,
                setup,
                norm: &wn,
            };
            // anchors whose inputs start inside the window and whose label is <= t
            let anchors = lo + max_lag..=t - 1 - h;
            let epochs = if retrainings == 0 || !cfg.warm_start {
                cfg.initial_epochs
            } else {
                cfg.retrain_epochs
            };
            let tc = TrainConfig {
                epochs,
                batch_size: cfg.batch_size,
                warm_start: cfg.warm_start,
                clip_norm: cfg.clip_norm,
                seed: chain_seed ^ stream.rotate_left(17) ^ step as u64,
                adam: cfg.adam,
            };
            model = match (&setup.plan, model) {
                (Plan::Lstm { units, seq_in }, prev) => {
                    let samples: Vec<SequenceSample> = anchors
                        .map(|a| SequenceSample {
                            anchor: a,
                            inputs: data.lstm_inputs(*seq_in, a),
                            labels: vec![data.z(setup.tpos, a + 1 + h)],
                        })
                        .collect();
                    let prev = match prev {
                        Trained::Lstm(m) if cfg.warm_start => Some(m),
                        _ => None,
                    };
                    let initial = match &prev {
                        Some(m) => m.clone(),
                        None => LstmModel::new(LstmParameters::init(*units, setup.cols.len(), &mut rng)?, SeqOut::Last),
                    };
                    Trained::Lstm(fit(&initial, prev.as_ref(), &samples, &tc)?.model)
                }
                (Plan::Mlp { hidden, terms }, prev) => {
                    let samples: Vec<MlpSample> = anchors
                        .map(|a| MlpSample {
                            features: data.mlp_inputs(terms, a),
                            label: data.z(setup.tpos, a + 1 + h),
                        })
                        .collect();
                    let prev = match prev {
                        Trained::Mlp(m) if cfg.warm_start => Some(m),
                        _ => None,
                    };
                    let initial = match &prev {
                        Some(m) => m.clone(),
                        None => MlpParameters::init(*hidden, terms.len(), &mut rng)?,
                    };
                    Trained::Mlp(fit(&initial, prev.as_ref(), &samples, &tc)?.model)
                }
                (Plan::LastValue, _) => Trained::Nothing,
            };
            norm = Some(wn);
            retrainings += 1;
        }
        let wn = norm.as_ref().expect("normalization fitted on first step");
        let data = ChainData {
            table,
            setup,
            norm: wn,
        };
        let pred_z = match (&setup.plan, &model) {
            (Plan::Lstm { seq_in, .. }, Trained::Lstm(m)) => {
                predict(&m.params, &data.lstm_inputs(*seq_in, t))?
            }
            (Plan::Mlp { terms, .. }, Trained::Mlp(p)) => mlp_forward(p, &data.mlp_inputs(terms, t))?,
            _ => data.z(setup.tpos, t),
        };
        let (m, s) = (wn.means[setup.tpos], wn.stds[setup.tpos]);
        let actual = y[tau];
        let pred = pred_z * s + m;
        let err = pred_z - (actual - m) / s;
        out.origin_rows.push(t);
        out.target_rows.push(tau);
        out.target_dates.push(table.timestamps()[tau]);
        out.predictions.push(pred);
        out.actuals.push(actual);
        out.errors.push(err * err);
        out.raw_errors.push((pred - actual) * (pred - actual));
    }
    out.summary = ErrorSummary::of(&out.errors);
    out.raw_summary = ErrorSummary::of(&out.raw_errors);
    out.retrainings = retrainings;
    Ok(out)
}

fn setup_chain(
    table: &TimeSeriesTable,
    spec: &ModelSpec,
    model_index: usize,
    horizon: usize,
    split: usize,
) -> Result<ChainSetup> {
    let target = table.target_index();
    let tname = table.target_name().to_string();
    let mut notes = Vec::new();
    let (cols, tpos, plan, inputs) = match spec {
        ModelSpec::Lstm { units, seq_in, .. } => (
            vec![target],
            0,
            Plan::Lstm {
                units: *units,
                seq_in: *seq_in,
            },
            (0..*seq_in).rev().map(|l| format!("{tname}@{l}")).collect(),
        ),
        ModelSpec::MlpTarget { hidden, steps, .. } => (
            vec![target],
            0,
            Plan::Mlp {
                hidden: *hidden,
                terms: (0..*steps).map(|l| (0, l)).collect(),
            },
            (0..*steps).map(|l| format!("{tname}@{l}")).collect(),
        ),
        ModelSpec::MlpRelevant {
            hidden,
            lasso,
            max_terms,
            candidates,
            ..
        } => {
            let names: Vec<String> = match candidates {
                Some(c) => c.clone(),
                None => table.names().to_vec(),
            };
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            // selection only sees labels up to the first forecast origin
            let first_origin = split - 1 - horizon;
            let sel = select_relevant_features(
                &table.slice_rows(0..first_origin + 1),
                &refs,
                horizon,
                lasso,
            )?;
            let mut terms = sel.selected(*max_terms);
            if terms.is_empty() {
                notes.push(format!(
                    "lasso selected nothing at gamma {}; falling back to {tname}@0",
                    sel.fit.gamma
                ));
                terms.push((tname.clone(), 0));
            }
            let mut cols = vec![target];
            let mut tterms = Vec::with_capacity(terms.len());
            for (f, lag) in &terms {
                let c = table
                    .column_index(f)
                    .ok_or_else(|| Error::invalid(format!("unknown column {f:?}")))?;
                let pos = match cols.iter().position(|&x| x == c) {
                    Some(p) => p,
                    None => {
                        cols.push(c);
                        cols.len() - 1
                    }
                };
                tterms.push((pos, *lag));
            }
            (
                cols,
                0,
                Plan::Mlp {
                    hidden: *hidden,
                    terms: tterms,
                },
                terms.iter().map(|(f, l)| format!("{f}@{l}")).collect(),
            )
        }
        ModelSpec::LastValue { .. } => (vec![target], 0, Plan::LastValue, vec![format!("{tname}@0")]),
    };
    Ok(ChainSetup {
        model: spec.name().to_string(),
        model_index,
        horizon,
        replicate: 0,
        cols,
        tpos,
        plan,
        inputs,
        notes,
    })
}

/// Run every (model, horizon, replicate) chain over the static test region.
pub fn walk_forward(
    table: &TimeSeriesTable,
    roster: &[ModelSpec],
    cfg: &WalkForwardConfig,
) -> Result<ForecastReport> {
    cfg.validate()?;
    if roster.is_empty() {
        return Err(Error::config("roster", "must not be empty"));
    }
    for (i, m) in roster.iter().enumerate() {
        m.validate()?;
        if roster[..i].iter().any(|o| o.name() == m.name()) {
            return Err(Error::config("roster", format!("duplicate model {:?}", m.name())));
        }
    }
    let n = table.len();
    let split = split_point(n, cfg.train_frac)?;
    let max_h = *cfg.horizons.iter().max().expect("validated non-empty");
    if cfg.window + max_h + 1 > split {
        return Err(Error::invalid(format!(
            "window {} plus horizon {max_h} does not fit in the {split}-row training region",
            cfg.window
        )));
    }

    let mut setups = Vec::new();
    for (mi, spec) in roster.iter().enumerate() {
        for &h in &cfg.horizons {
            let s = setup_chain(table, spec, mi, h, split)?;
            if cfg.window < s.max_lag() + h + 2 {
                return Err(Error::invalid(format!(
                    "window {} too short for {} at horizon {h}",
                    cfg.window, s.model
                )));
            }
            setups.push(s);
        }
    }
    let mut chains = Vec::with_capacity(setups.len() * cfg.replicates);
    for r in 0..cfg.replicates {
        for s in &setups {
            let mut c = s.clone();
            c.replicate = r;
            chains.push(c);
        }
    }
    let results: Vec<ForecastSeries> = chains
        .par_iter()
        .map(|c| run_chain(table, c, cfg, split))
        .collect::<Result<_>>()?;

    let replicate_mse = setups
        .iter()
        .map(|s| ReplicateMse {
            model: s.model.clone(),
            horizon: s.horizon,
            mse: results
                .iter()
                .filter(|r| r.model == s.model && r.horizon == s.horizon)
                .map(|r| r.summary.mean)
                .collect(),
        })
        .collect();
    let series = results.into_iter().filter(|r| r.replicate == 0).collect();
    Ok(ForecastReport {
        config_hash: config_hash(&(cfg, roster))?,
        config: cfg.clone(),
        roster: roster.to_vec(),
        target: table.target_name().to_string(),
        rows: n,
        split,
        series,
        replicate_mse,
    })
}

/// Boxplot statistics for every (model, horizon): one population is the
/// per-step errors of the first replicate, the other the per-replicate MSEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotEntry {
    pub model: String,
    pub horizon: usize,
    pub population: String,
    pub summary: ErrorSummary,
}

pub fn boxplot_entries(report: &ForecastReport) -> Vec<BoxplotEntry> {
    let mut out = Vec::new();
    for s in &report.series {
        out.push(BoxplotEntry {
            model: s.model.clone(),
            horizon: s.horizon,
            population: "per_step_errors".into(),
            summary: s.summary,
        });
    }
    for r in &report.replicate_mse {
        out.push(BoxplotEntry {
            model: r.model.clone(),
            horizon: r.horizon,
            population: "per_replicate_mse".into(),
            summary: ErrorSummary::of(&r.mse),
        });
    }
    out
}
