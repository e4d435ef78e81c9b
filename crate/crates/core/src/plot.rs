//! Plot-ready JSON derived from artifacts. Nothing is rendered; each output
//! holds the arrays and axis labels a plotting tool needs for one figure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{boxplot_entries, BoxplotEntry};
use crate::runner::{Artifact, Payload};
use crate::signals::Location;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Boxplot,
    Signals,
    Weights,
    Path,
    Histogram,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [
        PlotKind::Boxplot,
        PlotKind::Signals,
        PlotKind::Weights,
        PlotKind::Path,
        PlotKind::Histogram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Boxplot => "boxplot",
            PlotKind::Signals => "signals",
            PlotKind::Weights => "weights",
            PlotKind::Path => "path",
            PlotKind::Histogram => "histogram",
        }
    }

    pub fn parse(s: &str) -> Result<PlotKind> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = PlotKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!(
                    "unknown plot kind {s:?}; supported: {}",
                    names.join(", ")
                ))
            })
    }

    /// The kinds that apply to a payload.
    pub fn for_payload(p: &Payload) -> &'static [PlotKind] {
        match p {
            Payload::ForecastReport(_) => &[PlotKind::Boxplot],
            Payload::SignalStudy(_) => &[PlotKind::Signals],
            Payload::Explanation(_) => &[PlotKind::Weights, PlotKind::Path],
            Payload::Significance(_) => &[PlotKind::Histogram],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotData {
    pub x_label: String,
    pub y_label: String,
    pub entries: Vec<BoxplotEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalsData {
    pub x_label: String,
    pub y_label: String,
    /// Plotted on a second axis.
    pub reference_label: String,
    pub dates: Vec<String>,
    pub reference: Vec<f64>,
    pub series: Vec<Series>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub label: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsPanel {
    pub state: String,
    pub unit: usize,
    pub mse: f64,
    pub bars: Vec<Bar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPanel {
    pub state: String,
    pub unit: usize,
    pub gammas: Vec<f64>,
    pub n_active: Vec<usize>,
    pub mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    pub x_label: String,
    pub y_label: String,
    pub bins: Vec<HistogramBin>,
    pub marker: f64,
    pub marker_label: String,
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlotData {
    Boxplot(BoxplotData),
    Signals(SignalsData),
    Weights { panels: Vec<WeightsPanel> },
    Path { x_label: String, panels: Vec<PathPanel> },
    Histogram(HistogramData),
}

/// Equal-width bins over the range of `values` and `marker`.
pub fn histogram(values: &[f64], marker: f64, bins: usize) -> Vec<HistogramBin> {
    let lo = values.iter().copied().fold(marker, f64::min);
    let hi = values.iter().copied().fold(marker, f64::max);
    let bins = bins.max(1);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

pub fn plot_data(artifact: &Artifact, kind: PlotKind) -> Result<PlotData> {
    let mismatch = || {
        Error::invalid(format!(
            "plot kind {} does not apply to a {} artifact",
            kind.name(),
            artifact.payload.kind()
        ))
    };
    Ok(match (&artifact.payload, kind) {
        (Payload::ForecastReport(r), PlotKind::Boxplot) => PlotData::Boxplot(BoxplotData {
            x_label: "model".into(),
            y_label: "normalized squared error".into(),
            entries: boxplot_entries(r),
        }),
        (Payload::SignalStudy(r), PlotKind::Signals) => {
            let mut series = Vec::new();
            for loc in Location::ALL {
                for u in 0..r.trace.units {
                    series.push(Series {
                        label: format!("{} unit {}", loc.name(), u + 1),
                        values: r.trace.unit_series(loc, u),
                    });
                }
            }
            PlotData::Signals(SignalsData {
                x_label: "date".into(),
                y_label: "signal".into(),
                reference_label: r.target_name.clone(),
                dates: r.trace.timestamps.iter().map(|d| d.to_string()).collect(),
                reference: r.target.clone(),
                series,
                source: format!("{:?}", r.trace.source).to_lowercase(),
            })
        }
        (Payload::Explanation(r), PlotKind::Weights) => PlotData::Weights {
            panels: r
                .explanations
                .iter()
                .map(|e| WeightsPanel {
                    state: e.state.name().into(),
                    unit: e.unit,
                    mse: e.fit.mse,
                    bars: e
                        .fit
                        .active
                        .iter()
                        .map(|t| Bar {
                            label: format!("{}@{}", t.feature, t.lag),
                            weight: t.weight,
                        })
                        .collect(),
                })
                .collect(),
        },
        (Payload::Explanation(r), PlotKind::Path) => PlotData::Path {
            x_label: "gamma".into(),
            panels: r
                .explanations
                .iter()
                .map(|e| PathPanel {
                    state: e.state.name().into(),
                    unit: e.unit,
                    gammas: e.fit.path.gammas.clone(),
                    n_active: e.fit.path.n_active.clone(),
                    mse: e.fit.path.mse.clone(),
                })
                .collect(),
        },
        (Payload::Significance(r), PlotKind::Histogram) => PlotData::Histogram(HistogramData {
            x_label: "explanation MSE".into(),
            y_label: "runs".into(),
            bins: histogram(&r.random_mse, r.real_mse, 20),
            marker: r.real_mse,
            marker_label: "real features".into(),
            percentile: r.percentile,
        }),
        _ => return Err(mismatch()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::SignificanceReport;

    #[test]
    fn unknown_kind_lists_supported() {
        let e = PlotKind::parse("pie").unwrap_err().to_string();
        for k in PlotKind::ALL {
            assert!(e.contains(k.name()));
        }
        assert_eq!(PlotKind::parse("path").unwrap(), PlotKind::Path);
    }

    #[test]
    fn histogram_counts_everything() {
        let v = [0.1, 0.2, 0.2, 0.9, 1.0];
        let h = histogram(&v, 0.05, 4);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 5);
        assert_eq!(h[0].lo, 0.05);
        assert!((h[3].hi - 1.0).abs() < 1e-12);
        assert_eq!(histogram(&[1.0, 1.0], 1.0, 3)[0].count, 2);
    }

    #[test]
    fn significance_histogram_and_mismatch() {
        let a = Artifact {
            format: crate::runner::ARTIFACT_FORMAT.into(),
            config_hash: "x".into(),
            seed: None,
            payload: Payload::Significance(SignificanceReport {
                real_mse: 0.2,
                random_mse: vec![0.8, 0.85, 0.9],
                percentile: 0.0,
                n_runs: 3,
                seed: 0,
            }),
        };
        match plot_data(&a, PlotKind::Histogram).unwrap() {
            PlotData::Histogram(h) => {
                assert_eq!(h.marker, 0.2);
                assert_eq!(h.bins.iter().map(|b| b.count).sum::<usize>(), 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(plot_data(&a, PlotKind::Boxplot).is_err());
    }
}
