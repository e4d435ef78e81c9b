//! Signal-model training, the signal study, LSTM-LagLasso explanations and
//! the random-feature significance test.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_point, NormalizationStats, SequenceSample, TimeSeriesTable};
use crate::error::{Error, Result};
use crate::lasso::{build_lag_matrix, fit_lag_lasso, GammaChoice, LagLassoFit, LassoConfig};
use crate::lstm::{LstmModel, LstmParameters, SeqOut};
use crate::numerics::{mean, Rng};
use crate::signals::{
    extract_stitched, extract_trace, summarize_activity, ActivityConfig, Location, SignalTrace,
    TraceOptions, TraceSegment, UnitActivitySummary,
};
use crate::training::{fit, TrainConfig};

use super::config_hash;

/// Geometry and training of the LSTM whose internals are studied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalModelConfig {
    pub units: usize,
    pub seq_in: usize,
    /// `seq_in` for sequence-to-sequence training, `0` for a single label.
    pub seq_out: usize,
    pub horizon: usize,
    /// Input columns; just the target when absent.
    pub inputs: Option<Vec<String>>,
    pub train_frac: f64,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for SignalModelConfig {
    fn default() -> Self {
        SignalModelConfig {
            units: 3,
            seq_in: 6,
            seq_out: 6,
            horizon: 5,
            inputs: None,
            train_frac: 0.7,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl SignalModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.units == 0 {
            return Err(Error::config("model.units", "must be at least 1"));
        }
        if self.seq_in == 0 {
            return Err(Error::config("model.seq_in", "must be at least 1"));
        }
        if self.seq_out != 0 && self.seq_out != self.seq_in {
            return Err(Error::config("model.seq_out", "must be 0 or equal to seq_in"));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::config("model.train_frac", "must lie in (0, 1)"));
        }
        self.train.validate()
    }

    fn mode(&self) -> SeqOut {
        if self.seq_out == 0 {
            SeqOut::Last
        } else {
            SeqOut::AllSteps
        }
    }
}

/// A trained signal model together with the normalization of its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub params: LstmParameters,
    pub inputs: Vec<String>,
    pub input_norm: NormalizationStats,
    pub seq_in: usize,
    pub losses: Vec<f64>,
}

impl SignalModel {
    /// The input columns of `table`, normalized as during training.
    pub fn normalized_inputs(&self, table: &TimeSeriesTable) -> Result<TimeSeriesTable> {
        let refs: Vec<&str> = self.inputs.iter().map(String::as_str).collect();
        let sub = table.select_columns(&refs, refs[0])?;
        crate::dataset::apply_normalization(&sub, &self.input_norm)
    }
}

fn input_names(table: &TimeSeriesTable, inputs: &Option<Vec<String>>) -> Vec<String> {
    inputs
        .clone()
        .unwrap_or_else(|| vec![table.target_name().to_string()])
}

/// Samples over rows `rows` with inputs from `x` (normalized inputs) and
/// labels from `y` (normalized target); labels never leave `rows`.
fn signal_samples(
    x: &TimeSeriesTable,
    y: &[f64],
    rows: std::ops::Range<usize>,
    cfg: &SignalModelConfig,
) -> Vec<SequenceSample> {
    let offset = 1 + cfg.horizon;
    let mut out = Vec::new();
    if rows.len() < cfg.seq_in + offset {
        return out;
    }
    for a in rows.start + cfg.seq_in - 1..rows.end - offset {
        let start = a + 1 - cfg.seq_in;
        let labels = if cfg.seq_out == 0 {
            vec![y[a + offset]]
        } else {
            (start..=a).map(|r| y[r + offset]).collect()
        };
        out.push(SequenceSample {
            anchor: a,
            inputs: (start..=a).map(|r| x.row(r)).collect(),
            labels,
        });
    }
    out
}

fn train_on_rows(
    table: &TimeSeriesTable,
    cfg: &SignalModelConfig,
    rows: std::ops::Range<usize>,
    previous: Option<&LstmParameters>,
    train: &TrainConfig,
    rng: &mut Rng,
) -> Result<SignalModel> {
    let inputs = input_names(table, &cfg.inputs);
    let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    let sub = table.select_columns(&refs, refs[0])?;
    let input_norm = crate::dataset::fit_normalization(&sub, rows.clone())?;
    let x = crate::dataset::apply_normalization(&sub, &input_norm)?;
    let tname = table.target_name();
    let tcol = table.target();
    let tslice = &tcol[rows.clone()];
    let (tm, ts) = (mean(tslice), crate::numerics::variance(tslice).sqrt());
    if !(ts > 1e-12 * tm.abs().max(1.0)) {
        return Err(Error::ZeroVariance {
            column: tname.to_string(),
        });
    }
    let y: Vec<f64> = tcol.iter().map(|v| (v - tm) / ts).collect();
    let samples = signal_samples(&x, &y, rows.clone(), cfg);
    if samples.is_empty() {
        return Err(Error::invalid(format!(
            "rows {rows:?} too short for seq_in {} and horizon {}",
            cfg.seq_in, cfg.horizon
        )));
    }
    let initial = LstmModel::new(LstmParameters::init(cfg.units, inputs.len(), rng)?, cfg.mode());
    let prev = previous.map(|p| LstmModel::new(p.clone(), cfg.mode()));
    let fitted = fit(&initial, prev.as_ref(), &samples, train)?;
    Ok(SignalModel {
        params: fitted.model.params,
        inputs,
        input_norm,
        seq_in: cfg.seq_in,
        losses: fitted.losses,
    })
}

/// Train on the static training region.
pub fn train_signal_model(table: &TimeSeriesTable, cfg: &SignalModelConfig) -> Result<SignalModel> {
    cfg.validate()?;
    let split = split_point(table.len(), cfg.train_frac)?;
    let mut rng = Rng::substream(cfg.seed, 0x5161);
    train_on_rows(table, cfg, 0..split, None, &cfg.train, &mut rng)
}

/// Re-train along a moving window and stitch the per-window traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchConfig {
    pub window: usize,
    pub retrain_every: usize,
    pub epochs: usize,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig {
            window: 300,
            retrain_every: 50,
            epochs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalStudyConfig {
    pub model: SignalModelConfig,
    pub trace: TraceOptions,
    pub activity: ActivityConfig,
    pub stitch: Option<StitchConfig>,
}

impl Default for SignalStudyConfig {
    fn default() -> Self {
        SignalStudyConfig {
            model: SignalModelConfig::default(),
            trace: TraceOptions::default(),
            activity: ActivityConfig::default(),
            stitch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalStudyReport {
    pub config_hash: String,
    pub model: SignalModel,
    pub trace: SignalTrace,
    pub activity: UnitActivitySummary,
    /// Raw target at each recorded step, for overlays.
    pub target: Vec<f64>,
    pub target_name: String,
}

/// Train the signal model, record its trace and summarize unit activity.
///
/// Without `stitch` one model trained on the training region is replayed over
/// the whole table. With it, models re-trained along a moving window each
/// cover the anchors up to the next retraining.
pub fn signal_study(table: &TimeSeriesTable, cfg: &SignalStudyConfig) -> Result<SignalStudyReport> {
    let model = train_signal_model(table, &cfg.model)?;
    let trace = match &cfg.stitch {
        None => extract_trace(
            &model.params,
            &model.normalized_inputs(table)?,
            cfg.model.seq_in,
            cfg.trace,
        )?,
        Some(st) => stitched_trace(table, &cfg.model, st, &model, cfg.trace)?,
    };
    let activity = summarize_activity(&trace, cfg.activity)?;
    let y = table.target();
    Ok(SignalStudyReport {
        config_hash: config_hash(cfg)?,
        target: trace.anchors.iter().map(|&a| y[a]).collect(),
        target_name: table.target_name().to_string(),
        model,
        trace,
        activity,
    })
}

fn stitched_trace(
    table: &TimeSeriesTable,
    mcfg: &SignalModelConfig,
    st: &StitchConfig,
    base: &SignalModel,
    opts: TraceOptions,
) -> Result<SignalTrace> {
    if st.retrain_every == 0 || st.epochs == 0 {
        return Err(Error::config("stitch", "retrain_every and epochs must be positive"));
    }
    let split = split_point(table.len(), mcfg.train_frac)?;
    if st.window > split {
        return Err(Error::config("stitch.window", "longer than the training region"));
    }
    let inputs_sub = {
        let refs: Vec<&str> = base.inputs.iter().map(String::as_str).collect();
        table.select_columns(&refs, refs[0])?
    };
    let mut rng = Rng::substream(mcfg.seed, 0x57c4);
    let train = TrainConfig {
        epochs: st.epochs,
        warm_start: true,
        ..mcfg.train.clone()
    };
    let mut prev = base.params.clone();
    let mut segments = Vec::new();
    let mut b = split;
    while b < table.len() {
        let m = train_on_rows(table, mcfg, b - st.window..b, Some(&prev), &train, &mut rng)?;
        let end = (b + st.retrain_every).min(table.len());
        prev = m.params.clone();
        segments.push(TraceSegment {
            anchors: b..end,
            params: m.params,
            normalization: Some(m.input_norm),
        });
        b = end;
    }
    extract_stitched(&segments, &inputs_sub, mcfg.seq_in, opts)
}

/// Lasso settings and trace handling of an explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagLassoConfig {
    pub lasso: LassoConfig,
    pub trace: TraceOptions,
    /// Explain only these states; both hidden and cell when absent.
    pub states: Option<Vec<Location>>,
}

impl Default for LagLassoConfig {
    fn default() -> Self {
        LagLassoConfig {
            lasso: LassoConfig::default(),
            trace: TraceOptions::default(),
            states: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateExplanation {
    pub state: Location,
    pub unit: usize,
    pub fit: LagLassoFit,
    /// The active set is empty at the chosen `γ`.
    pub no_explanation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitOverlap {
    pub unit: usize,
    pub hidden: usize,
    pub cell: usize,
    /// Features active for both states of this unit.
    pub common: usize,
}

/// Feature-level intersection sizes (lags collapsed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlaps {
    pub per_unit: Vec<UnitOverlap>,
    /// Features active in every unit's hidden state.
    pub hidden_all_units: usize,
    pub cell_all_units: usize,
    pub hidden_union: usize,
    pub cell_union: usize,
    /// Features in both unions.
    pub union_common: usize,
    /// `union_common` over the size of the union of both unions.
    pub common_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub k: usize,
    pub gamma: GammaChoice,
    pub exogenous: Vec<String>,
    pub explanations: Vec<StateExplanation>,
    pub overlaps: Overlaps,
    /// Mean in-sample MSE over every explained state and unit.
    pub mean_mse: f64,
    pub notes: Vec<String>,
}

impl ExplanationReport {
    pub fn get(&self, state: Location, unit: usize) -> Option<&StateExplanation> {
        self.explanations
            .iter()
            .find(|e| e.state == state && e.unit == unit)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn overlaps(explanations: &[StateExplanation], units: usize) -> Overlaps {
    let set = |state: Location, u: usize| -> BTreeSet<String> {
        explanations
            .iter()
            .find(|e| e.state == state && e.unit == u)
            .map(|e| e.fit.features())
            .unwrap_or_default()
    };
    let hidden: Vec<BTreeSet<String>> = (0..units).map(|u| set(Location::HiddenState, u)).collect();
    let cell: Vec<BTreeSet<String>> = (0..units).map(|u| set(Location::CellState, u)).collect();
    let all = |sets: &[BTreeSet<String>]| -> BTreeSet<String> {
        let mut it = sets.iter();
        let first = it.next().cloned().unwrap_or_default();
        it.fold(first, |acc, s| acc.intersection(s).cloned().collect())
    };
    let union = |sets: &[BTreeSet<String>]| -> BTreeSet<String> {
        sets.iter().flatten().cloned().collect()
    };
    let (hu, cu) = (union(&hidden), union(&cell));
    let common = hu.intersection(&cu).count();
    let total = hu.union(&cu).count();
    Overlaps {
        per_unit: (0..units)
            .map(|u| UnitOverlap {
                unit: u,
                hidden: hidden[u].len(),
                cell: cell[u].len(),
                common: hidden[u].intersection(&cell[u]).count(),
            })
            .collect(),
        hidden_all_units: all(&hidden).len(),
        cell_all_units: all(&cell).len(),
        hidden_union: hu.len(),
        cell_union: cu.len(),
        union_common: common,
        common_fraction: if total == 0 {
            0.0
        } else {
            common as f64 / total as f64
        },
    }
}

/// Explain each state of each unit of `trace` by the columns of `exogenous`
/// at lags `0..=k`. `exogenous` must be row-aligned with the table the trace
/// was recorded on.
pub fn explain_trace(
    trace: &SignalTrace,
    exogenous: &TimeSeriesTable,
    cfg: &LagLassoConfig,
) -> Result<ExplanationReport> {
    let design = build_lag_matrix(exogenous, cfg.lasso.k)?;
    let mut pos = vec![None; exogenous.len()];
    for (i, &a) in trace.anchors.iter().enumerate() {
        if a >= exogenous.len() {
            return Err(Error::shape("trace rows", exogenous.len(), a + 1));
        }
        pos[a] = Some(i);
    }
    let design = design.filter_rows(|src| pos[src].is_some());
    if design.n_rows() < 2 {
        return Err(Error::invalid("trace and lag matrix share fewer than two rows"));
    }
    let idx: Vec<usize> = design
        .source_rows
        .iter()
        .map(|&r| pos[r].expect("filtered"))
        .collect();
    let states = cfg
        .states
        .clone()
        .unwrap_or_else(|| vec![Location::HiddenState, Location::CellState]);
    let jobs: Vec<(Location, usize)> = states
        .iter()
        .flat_map(|&s| (0..trace.units).map(move |u| (s, u)))
        .collect();
    let explanations: Vec<StateExplanation> = jobs
        .par_iter()
        .map(|&(state, unit)| {
            let series = trace.series(state);
            let target: Vec<f64> = idx.iter().map(|&i| series[i][unit]).collect();
            let fit = fit_lag_lasso(&design, &target, &cfg.lasso)?;
            Ok(StateExplanation {
                state,
                unit,
                no_explanation: fit.active.is_empty(),
                fit,
            })
        })
        .collect::<Result<_>>()?;
    let mut notes = Vec::new();
    for e in &explanations {
        if e.no_explanation {
            notes.push(format!(
                "no explanation at this gamma for {} unit {} (gamma {} >= gamma_max {})",
                e.state.name(),
                e.unit,
                e.fit.gamma,
                e.fit.gamma_max
            ));
        }
        if e.fit.target_degenerate {
            notes.push(format!("{} unit {} is constant", e.state.name(), e.unit));
        }
    }
    let mean_mse = mean(&explanations.iter().map(|e| e.fit.mse).collect::<Vec<_>>());
    Ok(ExplanationReport {
        k: cfg.lasso.k,
        gamma: cfg.lasso.gamma,
        exogenous: exogenous.names().to_vec(),
        overlaps: overlaps(&explanations, trace.units),
        explanations,
        mean_mse,
        notes,
    })
}

fn exogenous_table(
    model: &SignalModel,
    table: &TimeSeriesTable,
    exogenous: &[&str],
) -> Result<TimeSeriesTable> {
    if exogenous.is_empty() {
        return Err(Error::invalid("no exogenous features"));
    }
    if let Some(clash) = exogenous.iter().find(|e| model.inputs.iter().any(|i| i == *e)) {
        return Err(Error::invalid(format!(
            "exogenous feature {clash:?} is also a model input"
        )));
    }
    table.select_columns(exogenous, exogenous[0])
}

/// Record the trace of `model` over `table` and explain it with `exogenous`.
pub fn lstm_laglasso(
    model: &SignalModel,
    table: &TimeSeriesTable,
    exogenous: &[&str],
    cfg: &LagLassoConfig,
) -> Result<ExplanationReport> {
    let exog = exogenous_table(model, table, exogenous)?;
    let trace = extract_trace(
        &model.params,
        &model.normalized_inputs(table)?,
        model.seq_in,
        cfg.trace,
    )?;
    explain_trace(&trace, &exog, cfg)
}

pub const MIN_SIGNIFICANCE_RUNS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignificanceConfig {
    pub n_runs: usize,
    pub seed: u64,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            n_runs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub real_mse: f64,
    pub random_mse: Vec<f64>,
    /// Share of random runs (in percent) whose MSE is below the real one.
    pub percentile: f64,
    pub n_runs: usize,
    pub seed: u64,
}

/// Compare the explanation MSE of the real exogenous features with that of
/// `n_runs` sets of i.i.d. standard normal columns of the same shape. The
/// trace is recorded once and shared by every run.
pub fn significance_test(
    model: &SignalModel,
    table: &TimeSeriesTable,
    exogenous: &[&str],
    cfg: &LagLassoConfig,
    sig: &SignificanceConfig,
) -> Result<SignificanceReport> {
    if sig.n_runs < MIN_SIGNIFICANCE_RUNS {
        return Err(Error::config(
            "significance.n_runs",
            format!("must be at least {MIN_SIGNIFICANCE_RUNS}, got {}", sig.n_runs),
        ));
    }
    let exog = exogenous_table(model, table, exogenous)?;
    let trace = extract_trace(
        &model.params,
        &model.normalized_inputs(table)?,
        model.seq_in,
        cfg.trace,
    )?;
    significance_from_trace(&trace, &exog, cfg, sig)
}

/// [`significance_test`] on a trace that is already recorded.
pub fn significance_from_trace(
    trace: &SignalTrace,
    exog: &TimeSeriesTable,
    cfg: &LagLassoConfig,
    sig: &SignificanceConfig,
) -> Result<SignificanceReport> {
    if sig.n_runs < MIN_SIGNIFICANCE_RUNS {
        return Err(Error::config(
            "significance.n_runs",
            format!("must be at least {MIN_SIGNIFICANCE_RUNS}, got {}", sig.n_runs),
        ));
    }
    // random runs only need the fit at the chosen gamma, not the path
    let mut quick = cfg.clone();
    quick.lasso.grid_points = 0;
    let real_mse = explain_trace(trace, exog, &quick)?.mean_mse;
    let names: Vec<String> = (0..exog.n_columns()).map(|j| format!("gauss_{}", j + 1)).collect();
    let random_mse: Vec<f64> = (0..sig.n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = Rng::substream(sig.seed, run as u64);
            let cols: Vec<Vec<f64>> = (0..exog.n_columns())
                .map(|_| (0..exog.len()).map(|_| rng.normal()).collect())
                .collect();
            let fake = TimeSeriesTable::new(
                exog.timestamps().to_vec(),
                names.clone(),
                cols,
                &names[0],
            )?;
            Ok(explain_trace(trace, &fake, &quick)?.mean_mse)
        })
        .collect::<Result<_>>()?;
    let below = random_mse.iter().filter(|m| **m < real_mse).count();
    Ok(SignificanceReport {
        real_mse,
        percentile: 100.0 * below as f64 / sig.n_runs as f64,
        random_mse,
        n_runs: sig.n_runs,
        seed: sig.seed,
    })
}
