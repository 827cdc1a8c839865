// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kinematics;
pub mod liegroup;
pub mod models;
pub mod streams;
pub mod filter;
pub mod io;
pub mod baseline;
pub mod cli;
pub mod config;
pub mod observability;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
