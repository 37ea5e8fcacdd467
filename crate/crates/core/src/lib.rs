//! Second-order expansion of power-utility value functions in the market
//! price of risk.
//!
//! The crate is `no_std` (with `alloc`) and holds the deterministic engine:
//! utilities and conjugates, fixed-step Riccati integration, the model
//! catalog and the assembly of the expansion coefficients. Simulation, file
//! formats and the command line live in the `mprexp` crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod expansion;
pub mod models;
pub mod riccati;
pub mod stats;
pub mod utility;

pub use error::{Error, Result};
pub use models::{BaseSolution, BaseTerms, Control, FactorState, MarketState, Model, ModelSpec, Strategy};
pub use riccati::OdeGrid;
pub use stats::McEstimate;
pub use utility::UtilitySpec;
