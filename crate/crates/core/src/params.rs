//! Named-tensor view over model parameters, shared by the LSTM and the MLP.
//!
//! Optimizers and the finite-difference checks work on the flat
//! concatenation of the tensors in declaration order. The same ordered list is
//! what gets written to disk:
//!
//! ```json
//! { "format": "lstm-laglasso/params", "version": 1, "kind": "lstm",
//!   "tensors": [ { "name": "W_fx", "shape": [3, 1], "data": [0.1, -0.2, 0.3] }, ... ] }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const PARAMS_FORMAT: &str = "lstm-laglasso/params";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub tensors: Vec<NamedTensor>,
}

pub trait ParameterSet: Clone + Send + Sync + Sized {
    /// Tag written to the `kind` field of the serialized file.
    const KIND: &'static str;

    fn tensors(&self) -> Vec<(&'static str, &Matrix)>;

    /// Same order as [`ParameterSet::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    /// Rebuild from tensors in declaration order. Shapes are validated.
    fn from_tensors(tensors: Vec<Matrix>) -> Result<Self>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, m) in self.tensors() {
            out.extend_from_slice(m.data());
        }
        out
    }

    fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::shape("set_flat", n, flat.len()));
        }
        let mut off = 0;
        for m in self.tensors_mut() {
            let len = m.data().len();
            m.data_mut().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.tensors_mut() {
            m.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, m)| m.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    fn to_file(&self) -> ParamsFile {
        ParamsFile {
            format: PARAMS_FORMAT.into(),
            version: PARAMS_VERSION,
            kind: Self::KIND.into(),
            tensors: self
                .tensors()
                .into_iter()
                .map(|(name, m)| NamedTensor {
                    name: name.into(),
                    shape: [m.rows(), m.cols()],
                    data: m.data().to_vec(),
                })
                .collect(),
        }
    }

    fn from_file(file: ParamsFile) -> Result<Self> {
        if file.format != PARAMS_FORMAT || file.version != PARAMS_VERSION {
            return Err(Error::Serde(format!(
                "unsupported parameter file {} v{}",
                file.format, file.version
            )));
        }
        if file.kind != Self::KIND {
            return Err(Error::Serde(format!(
                "expected {} parameters, file holds {}",
                Self::KIND,
                file.kind
            )));
        }
        let mut mats = Vec::with_capacity(file.tensors.len());
        for t in file.tensors {
            mats.push(Matrix::new(t.shape[0], t.shape[1], t.data).map_err(|e| {
                Error::Serde(format!("tensor {}: {e}", t.name))
            })?);
        }
        Self::from_tensors(mats)
    }

    fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Check that `m` is `rows x cols`.
pub(crate) fn expect_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::shape(
            "parameters",
            format!("{name} expected {rows}x{cols}"),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    Ok(())
}
