//! Aligned time-series tables and everything that turns them into training
//! samples: lagged feature expansion, LSTM input/label sequences, moving-window
//! normalization, chronological splits and a synthetic generator.
//!
//! Horizon convention: `h = 0` is the next row, so a label for anchor `t` sits
//! at row `t + 1 + h`.

use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Multivariate daily series on a shared, strictly increasing date index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesTable {
    timestamps: Vec<NaiveDate>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    target: usize,
}

impl TimeSeriesTable {
    pub fn new(
        timestamps: Vec<NaiveDate>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        target_name: &str,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::shape("TimeSeriesTable", names.len(), columns.len()));
        }
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "timestamps not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != timestamps.len() {
                return Err(Error::invalid(format!(
                    "column {name:?} has {} rows, index has {}",
                    col.len(),
                    timestamps.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("column {name:?} row {i}")));
            }
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::invalid(format!("duplicate column name {n:?}")));
            }
        }
        let target = names
            .iter()
            .position(|n| n == target_name)
            .ok_or_else(|| Error::invalid(format!("unknown target column {target_name:?}")))?;
        Ok(TimeSeriesTable {
            timestamps,
            names,
            columns,
            target,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_columns(&self) -> usize {
        self.names.len()
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|i| self.columns[i].as_slice())
    }

    pub fn column_at(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn target_name(&self) -> &str {
        &self.names[self.target]
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target(&self) -> &[f64] {
        &self.columns[self.target]
    }

    /// Values of every column at row `i`, in column order.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn slice_rows(&self, rows: Range<usize>) -> TimeSeriesTable {
        TimeSeriesTable {
            timestamps: self.timestamps[rows.clone()].to_vec(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[rows.clone()].to_vec()).collect(),
            target: self.target,
        }
    }

    /// Keep only `names`, in that order. The target must be among them unless
    /// `target` names a new one.
    pub fn select_columns(&self, names: &[&str], target: &str) -> Result<TimeSeriesTable> {
        let mut cols = Vec::with_capacity(names.len());
        for n in names {
            let i = self
                .column_index(n)
                .ok_or_else(|| Error::invalid(format!("unknown column {n:?}")))?;
            cols.push(self.columns[i].clone());
        }
        TimeSeriesTable::new(
            self.timestamps.clone(),
            names.iter().map(|s| s.to_string()).collect(),
            cols,
            target,
        )
    }

    /// Replace one column's values; used for perturbation tests and for
    /// swapping in random features.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<TimeSeriesTable> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::invalid(format!("unknown column {name:?}")))?;
        if values.len() != self.len() {
            return Err(Error::shape("with_column", self.len(), values.len()));
        }
        let mut out = self.clone();
        out.columns[i] = values;
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file).map_err(|e| Error::io(path, e))
    }

    /// Same format as [`TimeSeriesTable::write_csv`], to any writer.
    pub fn write_csv_to<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.timestamps[i].format(DATE_FORMAT).to_string()];
            rec.extend(self.columns.iter().map(|c| format!("{}", c[i])));
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

/// Read a CSV whose first column is an ISO-8601 date.
///
/// Rows are sorted by date. Empty (or `NA`/`NaN`) cells are forward-filled
/// from the previous row; leading rows that cannot be filled are dropped.
/// When `schema` is given, the header must contain exactly those columns.
pub fn load_csv(path: &Path, schema: Option<&[&str]>, target: &str) -> Result<TimeSeriesTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 2 {
        return Err(Error::Csv {
            row: 1,
            message: "need a date column and at least one value column".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if let Some(schema) = schema {
        if let Some(extra) = names.iter().find(|n| !schema.contains(&n.as_str())) {
            return Err(Error::Csv {
                row: 1,
                message: format!("unknown column {extra:?}"),
            });
        }
        if let Some(missing) = schema.iter().find(|s| !names.iter().any(|n| n == *s)) {
            return Err(Error::Csv {
                row: 1,
                message: format!("missing column {missing:?}"),
            });
        }
    }

    let mut raw: Vec<(NaiveDate, Vec<Option<f64>>, usize)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Csv {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|e| Error::Csv {
            row: line,
            message: format!("bad date {:?}: {e}", &rec[0]),
        })?;
        let mut values = Vec::with_capacity(names.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
            {
                values.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Csv {
                    row: line,
                    message: format!("column {:?}: unparseable number {cell:?}", names[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv {
                        row: line,
                        message: format!("column {:?}: non-finite value", names[j]),
                    });
                }
                values.push(Some(v));
            }
        }
        raw.push((date, values, line));
    }

    raw.sort_by_key(|r| r.0);
    for w in raw.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Csv {
                row: w[1].2,
                message: format!("duplicate timestamp {}", w[1].0.format(DATE_FORMAT)),
            });
        }
    }

    let mut last: Vec<Option<f64>> = vec![None; names.len()];
    let mut timestamps = Vec::with_capacity(raw.len());
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(raw.len()); names.len()];
    for (date, values, _) in raw {
        for (l, v) in last.iter_mut().zip(values) {
            if v.is_some() {
                *l = v;
            }
        }
        if last.iter().all(Option::is_some) {
            timestamps.push(date);
            for (c, l) in columns.iter_mut().zip(&last) {
                c.push(l.unwrap());
            }
        }
    }
    TimeSeriesTable::new(timestamps, names, columns, target)
}

/// Append `lags` shifted copies of every column (`<col>_lag<k>`) and drop the
/// first `lags` rows, which lack a full history.
pub fn generate_lagged_features(table: &TimeSeriesTable, lags: usize) -> Result<TimeSeriesTable> {
    if lags == 0 {
        return Err(Error::invalid("lags must be at least 1"));
    }
    if lags >= table.len() {
        return Err(Error::invalid(format!(
            "lags ({lags}) must be smaller than table length ({})",
            table.len()
        )));
    }
    let n = table.len() - lags;
    let mut names = table.names.clone();
    let mut columns: Vec<Vec<f64>> = table.columns.iter().map(|c| c[lags..].to_vec()).collect();
    for (name, col) in table.names.iter().zip(&table.columns) {
        for k in 1..=lags {
            names.push(format!("{name}_lag{k}"));
            columns.push(col[lags - k..lags - k + n].to_vec());
        }
    }
    TimeSeriesTable::new(
        table.timestamps[lags..].to_vec(),
        names,
        columns,
        table.target_name(),
    )
}

/// Geometry of one training window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_len: usize,
    pub horizon: usize,
    pub seq_in: usize,
    /// `0` for a single label per sample, `seq_in` for one label per step.
    pub seq_out: usize,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seq_in == 0 {
            return Err(Error::invalid("seq_in must be at least 1"));
        }
        if self.seq_out != 0 && self.seq_out != self.seq_in {
            return Err(Error::invalid(format!(
                "seq_out must be 0 or seq_in ({}), got {}",
                self.seq_in, self.seq_out
            )));
        }
        if self.window_len < self.seq_in + self.horizon + 1 {
            return Err(Error::invalid(format!(
                "window_len {} shorter than seq_in + horizon + 1 = {}",
                self.window_len,
                self.seq_in + self.horizon + 1
            )));
        }
        Ok(())
    }
}

/// One LSTM training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    /// Row index of the last input step.
    pub anchor: usize,
    /// `seq_in` rows of features, oldest first.
    pub inputs: Vec<Vec<f64>>,
    /// One label, or one per input step.
    pub labels: Vec<f64>,
}

/// Feature rows `[t - seq_in + 1, t]` of `table`, oldest first.
pub fn input_sequence(table: &TimeSeriesTable, t: usize, seq_in: usize) -> Result<Vec<Vec<f64>>> {
    if seq_in == 0 || t + 1 < seq_in || t >= table.len() {
        return Err(Error::invalid(format!(
            "no {seq_in}-step input sequence ends at row {t} of {}",
            table.len()
        )));
    }
    Ok((t + 1 - seq_in..=t).map(|r| table.row(r)).collect())
}

/// Build every admissible input/label sample from `table`. All columns are
/// inputs; labels come from the target column. Anchors without enough history
/// or future are skipped, never padded.
pub fn make_sequences(table: &TimeSeriesTable, spec: &WindowSpec) -> Result<Vec<SequenceSample>> {
    if spec.seq_in == 0 {
        return Err(Error::invalid("seq_in must be at least 1"));
    }
    if spec.seq_out != 0 && spec.seq_out != spec.seq_in {
        return Err(Error::invalid("seq_out must be 0 or equal to seq_in"));
    }
    let n = table.len();
    let target = table.target();
    let first = spec.seq_in - 1;
    let offset = 1 + spec.horizon;
    if n < offset + spec.seq_in {
        return Ok(Vec::new());
    }
    let last = n - 1 - offset;
    let rows: Vec<Vec<f64>> = (0..n).map(|r| table.row(r)).collect();
    let mut out = Vec::with_capacity(last + 1 - first);
    for t in first..=last {
        let start = t + 1 - spec.seq_in;
        let inputs = rows[start..=t].to_vec();
        let labels = if spec.seq_out == 0 {
            vec![target[t + offset]]
        } else {
            (start..=t).map(|r| target[r + offset]).collect()
        };
        out.push(SequenceSample {
            anchor: t,
            inputs,
            labels,
        });
    }
    Ok(out)
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl NormalizationStats {
    pub fn index(&self, column: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == column)
            .ok_or_else(|| Error::invalid(format!("no normalization stats for {column:?}")))
    }

    #[inline]
    pub fn apply_value(&self, col: usize, x: f64) -> f64 {
        (x - self.means[col]) / self.stds[col]
    }

    #[inline]
    pub fn invert_value(&self, col: usize, z: f64) -> f64 {
        z * self.stds[col] + self.means[col]
    }
}

/// Fit on `rows` of `table` only.
pub fn fit_normalization(table: &TimeSeriesTable, rows: Range<usize>) -> Result<NormalizationStats> {
    if rows.end > table.len() || rows.len() < 2 {
        return Err(Error::invalid(format!(
            "normalization window {rows:?} invalid for {} rows (need at least 2)",
            table.len()
        )));
    }
    let mut means = Vec::with_capacity(table.n_columns());
    let mut stds = Vec::with_capacity(table.n_columns());
    for (name, col) in table.names.iter().zip(&table.columns) {
        let slice = &col[rows.clone()];
        let m = crate::numerics::mean(slice);
        let sd = crate::numerics::variance(slice).sqrt();
        if !(sd > 1e-12 * m.abs().max(1.0)) {
            return Err(Error::ZeroVariance {
                column: name.clone(),
            });
        }
        means.push(m);
        stds.push(sd);
    }
    Ok(NormalizationStats {
        names: table.names.clone(),
        means,
        stds,
    })
}

pub fn apply_normalization(
    table: &TimeSeriesTable,
    stats: &NormalizationStats,
) -> Result<TimeSeriesTable> {
    if stats.names != table.names {
        return Err(Error::shape(
            "apply_normalization",
            format!("{:?}", stats.names),
            format!("{:?}", table.names),
        ));
    }
    let mut out = table.clone();
    for (j, col) in out.columns.iter_mut().enumerate() {
        col.iter_mut().for_each(|v| *v = stats.apply_value(j, *v));
    }
    Ok(out)
}

pub fn invert_normalization(
    values: &[f64],
    stats: &NormalizationStats,
    column: &str,
) -> Result<Vec<f64>> {
    let j = stats.index(column)?;
    Ok(values.iter().map(|&z| stats.invert_value(j, z)).collect())
}

/// Number of leading rows assigned to training by [`static_split`].
pub fn split_point(len: usize, train_frac: f64) -> Result<usize> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let n_train = (len as f64 * train_frac).round() as usize;
    if n_train == 0 || n_train >= len {
        return Err(Error::invalid(format!(
            "split of {len} rows at {train_frac} leaves an empty side"
        )));
    }
    Ok(n_train)
}

/// Chronological train/test split; no shuffling.
pub fn static_split(
    table: &TimeSeriesTable,
    train_frac: f64,
) -> Result<(TimeSeriesTable, TimeSeriesTable)> {
    let k = split_point(table.len(), train_frac)?;
    Ok((table.slice_rows(0..k), table.slice_rows(k..table.len())))
}

/// Level change of the mean-reverting target from row `start` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub start: usize,
    pub level: f64,
}

/// Settings for [`synth_generate`]. Every key has a default so config files
/// only need the ones they change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub length: usize,
    pub decoys: usize,
    pub driver_lag: usize,
    pub driver_coef: f64,
    /// AR(1) coefficient of the driver (stationary variance is kept at 1).
    pub driver_persistence: f64,
    /// Per-step pull of the target towards its long-run level.
    pub mean_reversion: f64,
    pub noise_std: f64,
    pub level: f64,
    pub regimes: Vec<RegimeShift>,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            length: 2000,
            decoys: 20,
            driver_lag: 5,
            driver_coef: 1.0,
            driver_persistence: 0.5,
            mean_reversion: 0.05,
            noise_std: 0.1,
            level: 2.0,
            regimes: Vec::new(),
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::config("synth", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::config("length", "must be positive"));
        }
        if !(self.driver_persistence.abs() < 1.0) {
            return Err(Error::config("driver_persistence", "must lie in (-1, 1)"));
        }
        if !(self.mean_reversion > 0.0 && self.mean_reversion <= 1.0) {
            return Err(Error::config("mean_reversion", "must lie in (0, 1]"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("noise_std", "must be non-negative"));
        }
        Ok(())
    }
}

pub const SYNTH_TARGET: &str = "target";
pub const SYNTH_DRIVER: &str = "driver";

pub fn decoy_name(i: usize) -> String {
    format!("decoy_{}", i + 1)
}

/// Weekdays starting at `start` (moved forward to a weekday if needed).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Mean-reverting target plus a lagged linear contribution from an AR(1)
/// driver, alongside independent standard-normal decoy columns.
///
/// `target_t = x_t + driver_coef * driver_{t - driver_lag}`, where
/// `x_t = x_{t-1} + mean_reversion * (level_t - x_{t-1}) + noise_std * e_t`
/// and `level_t` follows the configured regime shifts.
pub fn synth_generate(cfg: &SynthConfig, rng: &mut Rng) -> Result<TimeSeriesTable> {
    cfg.validate()?;
    let n = cfg.length;
    let burn = cfg.driver_lag;
    let phi = cfg.driver_persistence;
    let innov = (1.0 - phi * phi).sqrt();

    let mut driver_full = Vec::with_capacity(n + burn);
    let mut d = rng.normal();
    for _ in 0..n + burn {
        driver_full.push(d);
        d = phi * d + innov * rng.normal();
    }

    let level_at = |t: usize| {
        cfg.regimes
            .iter()
            .filter(|r| r.start <= t)
            .max_by_key(|r| r.start)
            .map_or(cfg.level, |r| r.level)
    };
    let mut x = level_at(0);
    let mut target = Vec::with_capacity(n);
    for t in 0..n {
        x += cfg.mean_reversion * (level_at(t) - x) + cfg.noise_std * rng.normal();
        target.push(x + cfg.driver_coef * driver_full[t]);
    }
    let driver = driver_full[burn..].to_vec();

    let mut names = vec![SYNTH_TARGET.to_string(), SYNTH_DRIVER.to_string()];
    let mut columns = vec![target, driver];
    for i in 0..cfg.decoys {
        names.push(decoy_name(i));
        columns.push((0..n).map(|_| rng.normal()).collect());
    }
    TimeSeriesTable::new(
        business_days(cfg.start_date, n),
        names,
        columns,
        SYNTH_TARGET,
    )
}
