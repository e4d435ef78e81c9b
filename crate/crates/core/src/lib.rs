//! Interpretable LSTM forecasting toolkit.
//!
//! A from-scratch LSTM and MLP with exact gradients, walk-forward multi-horizon
//! forecasting, extraction of the LSTM's gate and state signals, and the
//! LSTM-LagLasso procedure that explains those signals with lagged exogenous
//! variables (plus a Gaussian-random-feature significance test).
//!
//! The `book/` directory at the repository root walks through each piece; its
//! code listings are compiled and run as doctests of this crate.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod lasso;
pub mod lstm;
pub mod mlp;
pub mod numerics;
pub mod params;
pub mod plot;
pub mod runner;
pub mod selfcheck;
pub mod signals;
pub mod training;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/numerics.md")]
    mod numerics {}
    #[doc = include_str!("../../../book/src/lstm.md")]
    mod lstm {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/walk_forward.md")]
    mod walk_forward {}
    #[doc = include_str!("../../../book/src/lasso.md")]
    mod lasso {}
    #[doc = include_str!("../../../book/src/signals.md")]
    mod signals {}
    #[doc = include_str!("../../../book/src/laglasso.md")]
    mod laglasso {}
    #[doc = include_str!("../../../book/src/studies.md")]
    mod studies {}
}
