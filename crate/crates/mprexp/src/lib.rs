//! Monte-Carlo engine, table drivers and configuration for the
//! market-price-of-risk expansion library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod montecarlo;
pub mod report;
pub mod tables;

pub use mprexp_core as core;
