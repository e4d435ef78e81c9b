//! Recording what happens inside the memory cell.
//!
//! A [`SignalTrace`] holds, for every recorded time step and every unit, the
//! values at five places in the cell: the forget gate, the product of input
//! gate and input node, the output gate, the cell state and the hidden state.
//! When input sequences overlap, the value recorded for time `t` is the one
//! produced by the last step of the sequence that ends at `t`, which is the
//! state the forecast at `t` is read from.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::{input_sequence, NormalizationStats, TimeSeriesTable};
use crate::error::{Error, Result};
use crate::lstm::{run_from, LstmParameters, LstmState, LstmStepSignals};
use crate::numerics::{mean, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Forget,
    InputTimesNode,
    OutputGate,
    CellState,
    HiddenState,
}

impl Location {
    pub const ALL: [Location; 5] = [
        Location::Forget,
        Location::InputTimesNode,
        Location::OutputGate,
        Location::CellState,
        Location::HiddenState,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Location::Forget => "forget",
            Location::InputTimesNode => "input_x_node",
            Location::OutputGate => "output_gate",
            Location::CellState => "cell_state",
            Location::HiddenState => "hidden_state",
        }
    }
}

/// How recurrent state is handled between consecutive recorded steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateCarry {
    /// Each anchor replays its own `seq_in`-step sequence from the zero
    /// state, as during training.
    #[default]
    ResetEachAnchor,
    /// One pass over the whole table, carrying state from row to row.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceOptions {
    pub carry: StateCarry,
    /// Also keep the input gate and input node separately.
    pub verbose: bool,
}

/// Whether a trace comes from one set of parameters or from several stitched
/// by time range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    #[default]
    FinalModel,
    Stitched,
}

/// Per-step, per-unit values; every series is indexed `[step][unit]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub timestamps: Vec<NaiveDate>,
    /// Table row of each recorded step.
    pub anchors: Vec<usize>,
    pub units: usize,
    pub source: TraceSource,
    pub forget: Vec<Vec<f64>>,
    pub input_times_node: Vec<Vec<f64>>,
    pub output_gate: Vec<Vec<f64>>,
    pub cell_state: Vec<Vec<f64>>,
    pub hidden_state: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_gate: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_node: Option<Vec<Vec<f64>>>,
}

impl SignalTrace {
    fn empty(units: usize, source: TraceSource, verbose: bool) -> Self {
        SignalTrace {
            timestamps: Vec::new(),
            anchors: Vec::new(),
            units,
            source,
            forget: Vec::new(),
            input_times_node: Vec::new(),
            output_gate: Vec::new(),
            cell_state: Vec::new(),
            hidden_state: Vec::new(),
            input_gate: verbose.then(Vec::new),
            input_node: verbose.then(Vec::new),
        }
    }

    fn push(&mut self, date: NaiveDate, anchor: usize, s: LstmStepSignals) {
        self.timestamps.push(date);
        self.anchors.push(anchor);
        self.forget.push(s.forget);
        self.input_times_node.push(s.input_times_node);
        self.output_gate.push(s.output_gate);
        self.cell_state.push(s.cell_state);
        self.hidden_state.push(s.hidden_state);
        if let Some(v) = self.input_gate.as_mut() {
            v.push(s.input_gate);
        }
        if let Some(v) = self.input_node.as_mut() {
            v.push(s.input_node);
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn series(&self, loc: Location) -> &[Vec<f64>] {
        match loc {
            Location::Forget => &self.forget,
            Location::InputTimesNode => &self.input_times_node,
            Location::OutputGate => &self.output_gate,
            Location::CellState => &self.cell_state,
            Location::HiddenState => &self.hidden_state,
        }
    }

    /// One unit's values over time.
    pub fn unit_series(&self, loc: Location, unit: usize) -> Vec<f64> {
        self.series(loc).iter().map(|row| row[unit]).collect()
    }

    /// Shape, range and `h = o ⊙ tanh(c)` checks at every step. Returns the
    /// largest deviation from the hidden-state identity.
    pub fn check_invariants(&self) -> Result<f64> {
        let n = self.len();
        for loc in Location::ALL {
            let s = self.series(loc);
            if s.len() != n || s.iter().any(|r| r.len() != self.units) {
                return Err(Error::invalid(format!("{} series has wrong shape", loc.name())));
            }
        }
        if self.anchors.len() != n {
            return Err(Error::shape("trace anchors", n, self.anchors.len()));
        }
        let mut worst: f64 = 0.0;
        for t in 0..n {
            for u in 0..self.units {
                let f = self.forget[t][u];
                let o = self.output_gate[t][u];
                let h = self.hidden_state[t][u];
                let c = self.cell_state[t][u];
                if !(f > 0.0 && f < 1.0) || !(o > 0.0 && o < 1.0) {
                    return Err(Error::invalid(format!(
                        "gate outside (0,1) at step {t} unit {u}: forget {f}, output {o}"
                    )));
                }
                if !(h > -1.0 && h < 1.0) {
                    return Err(Error::invalid(format!(
                        "hidden state outside (-1,1) at step {t} unit {u}: {h}"
                    )));
                }
                worst = worst.max((h - o * c.tanh()).abs());
            }
        }
        Ok(worst)
    }

    /// Long format: `timestamp,location,unit,value`, one line per value.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("timestamp,location,unit,value\n");
        for loc in Location::ALL {
            for (t, row) in self.series(loc).iter().enumerate() {
                let date = self.timestamps[t].format(crate::dataset::DATE_FORMAT);
                for (u, v) in row.iter().enumerate() {
                    let _ = writeln!(out, "{date},{},{u},{v}", loc.name());
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_long_csv()).map_err(|e| Error::io(path, e))
    }
}

fn normalized_rows(
    table: &TimeSeriesTable,
    norm: Option<&NormalizationStats>,
    rows: Range<usize>,
) -> Vec<Vec<f64>> {
    rows.map(|r| {
        let mut row = table.row(r);
        if let Some(st) = norm {
            for (c, v) in row.iter_mut().enumerate() {
                *v = st.apply_value(c, *v);
            }
        }
        row
    })
    .collect()
}

fn check_dims(params: &LstmParameters, table: &TimeSeriesTable, seq_in: usize) -> Result<()> {
    if table.n_columns() != params.inputs() {
        return Err(Error::shape("trace features", params.inputs(), table.n_columns()));
    }
    if seq_in == 0 {
        return Err(Error::invalid("seq_in must be at least 1"));
    }
    Ok(())
}

/// Record the trace of `params` over `table`. Every column of `table` is a
/// model input, in order.
///
/// With [`StateCarry::ResetEachAnchor`] one value is recorded per row that
/// has `seq_in` rows of history; with [`StateCarry::Continuous`] every row is
/// recorded.
pub fn extract_trace(
    params: &LstmParameters,
    table: &TimeSeriesTable,
    seq_in: usize,
    opts: TraceOptions,
) -> Result<SignalTrace> {
    let segment = TraceSegment {
        anchors: 0..table.len(),
        params: params.clone(),
        normalization: None,
    };
    let mut trace = extract_segments(std::slice::from_ref(&segment), table, seq_in, opts)?;
    trace.source = TraceSource::FinalModel;
    Ok(trace)
}

/// Parameters (and optionally the normalization they were trained with)
/// that apply to a range of anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub anchors: Range<usize>,
    pub params: LstmParameters,
    pub normalization: Option<NormalizationStats>,
}

/// Trace built from several models, each covering its own range of anchors.
/// Segments must be ordered and non-overlapping.
pub fn extract_stitched(
    segments: &[TraceSegment],
    table: &TimeSeriesTable,
    seq_in: usize,
    opts: TraceOptions,
) -> Result<SignalTrace> {
    let mut trace = extract_segments(segments, table, seq_in, opts)?;
    trace.source = TraceSource::Stitched;
    Ok(trace)
}

fn extract_segments(
    segments: &[TraceSegment],
    table: &TimeSeriesTable,
    seq_in: usize,
    opts: TraceOptions,
) -> Result<SignalTrace> {
    let first = segments
        .first()
        .ok_or_else(|| Error::invalid("no trace segments"))?;
    let units = first.params.units();
    for pair in segments.windows(2) {
        if pair[1].anchors.start < pair[0].anchors.end {
            return Err(Error::invalid("trace segments overlap or are out of order"));
        }
    }
    let mut trace = SignalTrace::empty(units, TraceSource::FinalModel, opts.verbose);
    for seg in segments {
        check_dims(&seg.params, table, seq_in)?;
        if seg.params.units() != units {
            return Err(Error::shape("trace segment units", units, seg.params.units()));
        }
        let end = seg.anchors.end.min(table.len());
        match opts.carry {
            StateCarry::ResetEachAnchor => {
                let start = seg.anchors.start.max(seq_in - 1);
                for t in start..end {
                    let seq = match &seg.normalization {
                        None => input_sequence(table, t, seq_in)?,
                        Some(st) => normalized_rows(table, Some(st), t + 1 - seq_in..t + 1),
                    };
                    let (_, mut sigs, _) = run_from(&seg.params, &seq, LstmState::zeros(units))?;
                    let last = sigs.pop().expect("non-empty sequence");
                    trace.push(table.timestamps()[t], t, last);
                }
            }
            StateCarry::Continuous => {
                let start = seg.anchors.start;
                if start >= end {
                    continue;
                }
                // each segment starts from a fresh state and runs row by row
                let rows = normalized_rows(table, seg.normalization.as_ref(), start..end);
                let (_, sigs, _) = run_from(&seg.params, &rows, LstmState::zeros(units))?;
                for (k, s) in sigs.into_iter().enumerate() {
                    trace.push(table.timestamps()[start + k], start + k, s);
                }
            }
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityConfig {
    pub window: usize,
    pub eps_weight: f64,
    pub eps_var: f64,
}

impl Default for ActivityConfig {
    fn default() -> Self {
        ActivityConfig {
            window: 60,
            eps_weight: 0.05,
            eps_var: 1e-4,
        }
    }
}

/// Half-open range of trace steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitActivity {
    pub unit: usize,
    /// Rolling statistics; entry `s` covers steps `s..s + window`.
    pub mean_abs: Vec<f64>,
    pub variance: Vec<f64>,
    pub inactive_spans: Vec<Span>,
    pub inactive_dates: Vec<(NaiveDate, NaiveDate)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitActivitySummary {
    pub config: ActivityConfig,
    pub units: Vec<UnitActivity>,
}

/// Flag windows where a unit's hidden state is both small and flat.
///
/// A window is inactive when its mean `|h|` is below `eps_weight` and its
/// population variance is below `eps_var`. Every step inside an inactive
/// window is marked, and runs of marked steps become spans. Traces shorter
/// than the window are treated as a single window.
pub fn summarize_activity(trace: &SignalTrace, cfg: ActivityConfig) -> Result<UnitActivitySummary> {
    if cfg.window < 2 {
        return Err(Error::invalid(format!("window must be >= 2, got {}", cfg.window)));
    }
    let n = trace.len();
    let w = cfg.window.min(n);
    let mut units = Vec::with_capacity(trace.units);
    for u in 0..trace.units {
        let h = trace.unit_series(Location::HiddenState, u);
        let mut mean_abs = Vec::new();
        let mut var = Vec::new();
        let mut marked = vec![false; n];
        if w > 0 {
            for s in 0..=n - w {
                let win = &h[s..s + w];
                let ma = win.iter().map(|v| v.abs()).sum::<f64>() / w as f64;
                let vv = variance(win);
                if ma < cfg.eps_weight && vv < cfg.eps_var {
                    marked[s..s + w].iter_mut().for_each(|m| *m = true);
                }
                mean_abs.push(ma);
                var.push(vv);
            }
        }
        let spans = runs(&marked);
        units.push(UnitActivity {
            unit: u,
            mean_abs,
            variance: var,
            inactive_dates: spans
                .iter()
                .map(|s| (trace.timestamps[s.start], trace.timestamps[s.end - 1]))
                .collect(),
            inactive_spans: spans,
        });
    }
    Ok(UnitActivitySummary { config: cfg, units })
}

fn runs(marked: &[bool]) -> Vec<Span> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, m) in marked.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(Span { start: s, end: i });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Span {
            start: s,
            end: marked.len(),
        });
    }
    out
}

/// Intersection over union of the steps covered by two span lists.
pub fn span_jaccard(a: &[Span], b: &[Span]) -> f64 {
    let end = a.iter().chain(b).map(|s| s.end).max().unwrap_or(0);
    let cover = |spans: &[Span]| {
        let mut m = vec![false; end];
        for s in spans {
            m[s.start..s.end].iter_mut().for_each(|v| *v = true);
        }
        m
    };
    let (ma, mb) = (cover(a), cover(b));
    let inter = ma.iter().zip(&mb).filter(|(x, y)| **x && **y).count();
    let union = ma.iter().zip(&mb).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean of one location over units, per step; handy for overlays.
pub fn unit_mean_series(trace: &SignalTrace, loc: Location) -> Vec<f64> {
    trace.series(loc).iter().map(|r| mean(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::business_days;
    use crate::numerics::Rng;
    use crate::params::ParameterSet;

    fn table(n: usize, inputs: usize, seed: u64) -> TimeSeriesTable {
        let mut rng = Rng::new(seed);
        let names: Vec<String> = (0..inputs).map(|i| format!("x{i}")).collect();
        let cols = (0..inputs)
            .map(|_| (0..n).map(|_| rng.normal()).collect())
            .collect();
        TimeSeriesTable::new(
            business_days(NaiveDate::from_ymd_opt(2015, 6, 1).unwrap(), n),
            names,
            cols,
            "x0",
        )
        .unwrap()
    }

    #[test]
    fn zero_model_trace() {
        let p = LstmParameters::zeros(2, 3);
        let t = table(20, 3, 1);
        let tr = extract_trace(&p, &t, 4, TraceOptions::default()).unwrap();
        assert_eq!(tr.len(), 17);
        assert_eq!(tr.anchors[0], 3);
        assert!(tr.forget.iter().flatten().all(|v| *v == 0.5));
        assert!(tr.output_gate.iter().flatten().all(|v| *v == 0.5));
        assert!(tr.cell_state.iter().flatten().all(|v| *v == 0.0));
        assert!(tr.hidden_state.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn continuous_records_every_row() {
        let p = LstmParameters::init(3, 2, &mut Rng::new(4)).unwrap();
        let t = table(30, 2, 2);
        let tr = extract_trace(
            &p,
            &t,
            5,
            TraceOptions {
                carry: StateCarry::Continuous,
                verbose: true,
            },
        )
        .unwrap();
        assert_eq!(tr.len(), 30);
        assert_eq!(tr.input_gate.as_ref().unwrap().len(), 30);
        let ig = tr.input_gate.as_ref().unwrap();
        let inode = tr.input_node.as_ref().unwrap();
        for t in 0..30 {
            for u in 0..3 {
                assert!((ig[t][u] * inode[t][u] - tr.input_times_node[t][u]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reset_trace_uses_last_step_of_each_anchor() {
        let p = LstmParameters::init(2, 2, &mut Rng::new(9)).unwrap();
        let t = table(12, 2, 3);
        let tr = extract_trace(&p, &t, 3, TraceOptions::default()).unwrap();
        let seq = input_sequence(&t, 7, 3).unwrap();
        let (_, sigs) = crate::lstm::forward(&p, &seq, false).unwrap();
        let k = tr.anchors.iter().position(|a| *a == 7).unwrap();
        assert_eq!(tr.hidden_state[k], sigs[2].hidden_state);
        assert_eq!(tr.cell_state[k], sigs[2].cell_state);
    }

    #[test]
    fn saturated_memory_holds_cell_constant() {
        let mut p = LstmParameters::zeros(1, 1);
        p.b_f.data_mut()[0] = 50.0;
        p.b_i.data_mut()[0] = -50.0;
        let t = table(40, 1, 5);
        let tr = extract_trace(
            &p,
            &t,
            1,
            TraceOptions {
                carry: StateCarry::Continuous,
                verbose: false,
            },
        )
        .unwrap();
        let c = tr.unit_series(Location::CellState, 0);
        assert!(c.iter().all(|v| (v - c[0]).abs() < 1e-6));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = LstmParameters::zeros(2, 3);
        assert!(extract_trace(&p, &table(10, 2, 1), 3, TraceOptions::default()).is_err());
    }

    #[test]
    fn invariants_and_reserialized_replay() {
        let p = LstmParameters::init(3, 2, &mut Rng::new(11)).unwrap();
        let t = table(200, 2, 6);
        let tr = extract_trace(&p, &t, 6, TraceOptions::default()).unwrap();
        assert!(tr.check_invariants().unwrap() <= 1e-12);
        let q = LstmParameters::from_json(&p.to_json().unwrap()).unwrap();
        let again = extract_trace(&q, &t, 6, TraceOptions::default()).unwrap();
        assert_eq!(tr, again);
    }

    #[test]
    fn stitched_segments_switch_models() {
        let a = LstmParameters::init(2, 1, &mut Rng::new(1)).unwrap();
        let b = LstmParameters::zeros(2, 1);
        let t = table(30, 1, 7);
        let segs = vec![
            TraceSegment {
                anchors: 0..15,
                params: a.clone(),
                normalization: None,
            },
            TraceSegment {
                anchors: 15..30,
                params: b,
                normalization: None,
            },
        ];
        let tr = extract_stitched(&segs, &t, 3, TraceOptions::default()).unwrap();
        assert_eq!(tr.source, TraceSource::Stitched);
        assert_eq!(tr.len(), 28);
        let only_a = extract_trace(&a, &t, 3, TraceOptions::default()).unwrap();
        assert_eq!(tr.hidden_state[..13], only_a.hidden_state[..13]);
        assert!(tr.hidden_state[13..].iter().flatten().all(|v| *v == 0.0));
        let bad = vec![segs[1].clone(), segs[0].clone()];
        assert!(extract_stitched(&bad, &t, 3, TraceOptions::default()).is_err());
    }

    #[test]
    fn long_csv_layout() {
        let p = LstmParameters::zeros(3, 1);
        let tr = extract_trace(&p, &table(8, 1, 1), 6, TraceOptions::default()).unwrap();
        let csv = tr.to_long_csv();
        assert_eq!(csv.lines().count(), 1 + 5 * 3 * 3);
        assert!(csv.starts_with("timestamp,location,unit,value\n"));
        let locs: std::collections::BTreeSet<&str> =
            csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(locs.len(), 5);
    }

    fn trace_from_hidden(h: Vec<Vec<f64>>) -> SignalTrace {
        let n = h.len();
        let units = h[0].len();
        let half = vec![vec![0.5; units]; n];
        SignalTrace {
            timestamps: business_days(NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(), n),
            anchors: (0..n).collect(),
            units,
            source: TraceSource::FinalModel,
            forget: half.clone(),
            input_times_node: vec![vec![0.0; units]; n],
            output_gate: half,
            cell_state: vec![vec![0.0; units]; n],
            hidden_state: h,
            input_gate: None,
            input_node: None,
        }
    }

    #[test]
    fn constant_zero_unit_is_one_span() {
        let tr = trace_from_hidden(vec![vec![0.0, 0.3]; 150]);
        let s = summarize_activity(&tr, ActivityConfig::default()).unwrap();
        assert_eq!(s.units[0].inactive_spans, vec![Span { start: 0, end: 150 }]);
        // a constant but large unit is not inactive
        assert!(s.units[1].inactive_spans.is_empty());
        assert!(summarize_activity(
            &tr,
            ActivityConfig {
                window: 1,
                ..ActivityConfig::default()
            }
        )
        .is_err());
    }

    #[test]
    fn white_noise_is_never_inactive() {
        let mut rng = Rng::new(3);
        let h = (0..500)
            .map(|_| vec![(0.5 * rng.normal()).clamp(-0.999, 0.999)])
            .collect();
        let s = summarize_activity(
            &trace_from_hidden(h),
            ActivityConfig {
                eps_var: 1e-3,
                ..ActivityConfig::default()
            },
        )
        .unwrap();
        assert!(s.units[0].inactive_spans.is_empty());
    }

    #[test]
    fn spans_are_disjoint_and_ordered() {
        let mut h = Vec::new();
        for block in 0..6 {
            for _ in 0..100 {
                h.push(vec![if block % 2 == 0 { 0.0 } else { 0.6 }]);
            }
        }
        // make the active blocks wiggle so their variance is not tiny
        for (i, row) in h.iter_mut().enumerate() {
            if row[0] != 0.0 {
                row[0] += 0.2 * ((i as f64) * 0.7).sin();
            }
        }
        let s = summarize_activity(&trace_from_hidden(h), ActivityConfig::default()).unwrap();
        let spans = &s.units[0].inactive_spans;
        assert_eq!(
            spans,
            &vec![
                Span { start: 0, end: 100 },
                Span { start: 200, end: 300 },
                Span { start: 400, end: 500 }
            ]
        );
        assert!(spans.windows(2).all(|w| w[0].end < w[1].start));
    }

    #[test]
    fn jaccard_cases() {
        let a = [Span { start: 0, end: 10 }];
        let b = [Span { start: 5, end: 15 }];
        assert!((span_jaccard(&a, &b) - 5.0 / 15.0).abs() < 1e-15);
        assert_eq!(span_jaccard(&a, &a), 1.0);
        assert_eq!(span_jaccard(&[], &[]), 1.0);
    }
}
