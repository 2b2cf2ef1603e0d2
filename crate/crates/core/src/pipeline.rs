//! End-to-end compositions of the pipeline stages.

use crate::denoise::{denoise_pipeline, DenoiseConfig};
use crate::features::{build_dataset, Dataset};
use crate::ingest::{extract_amplitude, Capture};
use crate::series::CsiSeries;
use crate::synth::{generate_series, ScenarioConfig};
use crate::Error;

/// How amplitude series become feature rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preprocess {
    Denoise(DenoiseConfig),
    /// De-noising disabled: keep one raw frame per downsampling block, so
    /// the row count matches the de-noised variant but nothing is averaged
    /// or filtered.
    Decimate(usize),
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess::Denoise(DenoiseConfig::default())
    }
}

impl Preprocess {
    /// The no-de-noising counterpart of the default configuration.
    pub fn disabled() -> Self {
        Preprocess::Decimate(DenoiseConfig::default().downsample_window)
    }

    pub fn apply(&self, series: &CsiSeries) -> Result<CsiSeries, Error> {
        match self {
            Preprocess::Denoise(cfg) => Ok(denoise_pipeline(series, cfg)?),
            Preprocess::Decimate(step) => Ok(series.decimate((*step).max(1))),
        }
    }
}

/// Amplitude series of a parsed capture, without humidity.
pub fn capture_series(capture: &Capture) -> Result<CsiSeries, Error> {
    let frames: Vec<_> = capture.frames.iter().map(extract_amplitude).collect();
    Ok(CsiSeries::from_amplitude_frames(&frames)?)
}

pub fn dataset_from_series(series: &CsiSeries, pre: &Preprocess) -> Result<Dataset, Error> {
    Ok(build_dataset(&pre.apply(series)?)?)
}

/// Synthesizes a run and turns its measured series into a dataset.
pub fn synthetic_dataset(scenario: &ScenarioConfig, pre: &Preprocess) -> Result<Dataset, Error> {
    let run = generate_series(scenario)?;
    dataset_from_series(&run.noisy, pre)
}
