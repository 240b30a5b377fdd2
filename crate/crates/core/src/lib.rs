//! Dataset learning-difficulty metrics, training carbon estimates and the
//! NoFADE score for comparing model-dataset pairs.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`imaging`] decodes images and builds 8-bit intensity histograms.
//! 2. [`complexity`] turns histograms into per-image Shannon entropies and
//!    summarises a dataset either by mean entropy (segmentation, detection)
//!    or by the log of summed pairwise Jensen-Shannon distances between
//!    class entropy distributions (classification).
//! 3. [`carbon`] estimates training energy and CO2 from FLOPs, device
//!    Watt-to-FLOPS ratios and GPU hours.
//! 4. [`scoring`] combines test metric, dataset complexity and FLOPs.
//!
//! [`registry`] handles model metadata and persisted results, [`report`]
//! renders CSV/SVG output, and [`commands`] wires everything into the
//! operations exposed by the `nofade` binary.

pub mod carbon;
pub mod commands;
pub mod complexity;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod registry;
pub mod report;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
