use thiserror::Error;

use crate::{classify, denoise, eval, features, ingest, series, synth};

/// Any error raised by the pipeline, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] ingest::IngestError),
    #[error("series: {0}")]
    Series(#[from] series::SeriesError),
    #[error("denoise: {0}")]
    Denoise(#[from] denoise::DenoiseError),
    #[error("features: {0}")]
    Features(#[from] features::FeatureError),
    #[error("classify: {0}")]
    Classify(#[from] classify::ClassifyError),
    #[error("eval: {0}")]
    Eval(#[from] eval::EvalError),
    #[error("synth: {0}")]
    Synth(#[from] synth::SynthError),
}
