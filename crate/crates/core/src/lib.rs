//! Heatmap-based goal-conditioned motion planning.
//!
//! The pipeline: procedurally generated driving scenarios are rendered into
//! ego-centred bird's-eye-view rasters, labelled with goal heatmaps, used to
//! train a small encoder–decoder plus trajectory head, and evaluated in a
//! closed-loop log-replay simulator.

pub mod augment;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod heatmap;
pub mod loss;
pub mod nnet;
pub mod pipeline;
pub mod raster;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
