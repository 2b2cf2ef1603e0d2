//! WiFi CSI humidity sensing.
//!
//! The crate covers the full workflow from raw captures to evaluated
//! classifiers:
//!
//! - [`ingest`]: pcap/Nexmon CSI record parsing and amplitude extraction
//! - [`denoise`]: windowed-average downsampling, Hampel outlier removal and
//!   moving-average smoothing, applied per subcarrier
//! - [`features`]: 249-wide feature rows and z-score standardization
//! - [`labels`]: humidity binning at a configurable resolution
//! - [`classify`]: KNN, linear SVM and quadratic-kernel SVM
//! - [`eval`]: repeated random-split evaluation and resolution sweeps
//! - [`synth`]: a synthetic humidity chamber that stands in for hardware
//! - [`pipeline`]: the stages composed end to end

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod denoise;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod labels;
pub mod pcap;
pub mod pipeline;
pub mod series;
pub mod stats;
pub mod synth;

mod error;

pub use error::Error;

/// Number of non-null subcarriers of an 80 MHz 802.11ac channel.
pub const NUM_SUBCARRIERS: usize = 242;

/// Number of appended per-frame statistics.
pub const NUM_STATS: usize = 7;

/// Width of one feature row: subcarrier amplitudes followed by statistics.
pub const FEATURE_WIDTH: usize = NUM_SUBCARRIERS + NUM_STATS;
