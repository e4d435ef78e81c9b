//! The three studies: walk-forward forecasting, signal extraction, and
//! explanation of the extracted signals with lagged exogenous variables.

mod explain;
mod forecast;

pub use explain::*;
pub use forecast::*;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::numerics::{mean, quantile, variance};

/// SHA-256 of the JSON serialization of `value`, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Distribution summary of a list of errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl ErrorSummary {
    pub fn of(values: &[f64]) -> ErrorSummary {
        if values.is_empty() {
            return ErrorSummary {
                count: 0,
                mean: f64::NAN,
                median: f64::NAN,
                std: f64::NAN,
                q1: f64::NAN,
                q3: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        ErrorSummary {
            count: values.len(),
            mean: mean(values),
            median: quantile(values, 0.5),
            std: variance(values).sqrt(),
            q1: quantile(values, 0.25),
            q3: quantile(values, 0.75),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}
