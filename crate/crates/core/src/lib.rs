//! Evaluation harness for gridded Earth-system model output and for live
//! models driven through a stepping adapter.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calendar;
pub mod causality;
pub mod constraints;
pub mod dataio;
pub mod dataset;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod grid;
pub mod idealized;
pub mod metrics;
pub mod report;
pub mod sanity;
pub mod toymodels;

pub use dataset::{Dataset, Dim, Field, Provenance};
pub use error::{Error, Result};
pub use grid::GridSpec;
