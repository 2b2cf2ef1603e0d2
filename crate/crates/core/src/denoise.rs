//! Three-stage CSI de-noising, applied to every subcarrier column:
//!
//! 1. windowed-average downsampling (non-overlapping blocks),
//! 2. Hampel outlier replacement,
//! 3. trailing moving average.
//!
//! The humidity trace, when present, is block-averaged and smoothed with the
//! same moving average so labels stay aligned with the lagged amplitudes. It
//! never goes through the Hampel stage.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{CsiSeries, SeriesError};
use crate::stats::median_in_place;

/// Gaussian consistency factor for the median absolute deviation.
pub const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("series is empty")]
    EmptySeries,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    /// Frames averaged into one output sample.
    pub downsample_window: usize,
    /// Samples on each side of the Hampel window.
    pub hampel_half_window: usize,
    /// Replacement threshold in scaled-MAD units.
    pub hampel_threshold: f64,
    /// Trailing moving-average length in samples.
    pub ma_window: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            downsample_window: 8,
            hampel_half_window: 30,
            hampel_threshold: 3.0,
            ma_window: 10,
        }
    }
}

impl DenoiseConfig {
    /// Every stage degenerates to the identity.
    pub fn identity() -> Self {
        Self {
            downsample_window: 1,
            hampel_half_window: 1,
            hampel_threshold: f64::INFINITY,
            ma_window: 1,
        }
    }

    pub fn validate(&self) -> Result<(), DenoiseError> {
        if self.downsample_window == 0 || self.hampel_half_window == 0 || self.ma_window == 0 {
            return Err(DenoiseError::InvalidConfig(
                "window lengths must be positive".into(),
            ));
        }
        if !(self.hampel_threshold > 0.0) {
            return Err(DenoiseError::InvalidConfig(
                "hampel threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Replaces consecutive blocks of `window` rows by their element-wise mean.
/// Timestamps and humidity are averaged the same way; a trailing partial
/// block is averaged as-is.
pub fn downsample(series: &CsiSeries, window: usize) -> Result<CsiSeries, DenoiseError> {
    if series.is_empty() {
        return Err(DenoiseError::EmptySeries);
    }
    if window == 0 {
        return Err(DenoiseError::InvalidConfig(
            "downsample window must be positive".into(),
        ));
    }
    if window == 1 {
        return Ok(series.clone());
    }
    let block_mean = |v: &[f64]| -> Vec<f64> {
        v.chunks(window)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    };
    let rows = series.len().div_ceil(window);
    let mut amps = Array2::zeros((rows, series.width()));
    for (b, block) in series.amps().axis_chunks_iter(Axis(0), window).enumerate() {
        let n = block.nrows() as f64;
        let mut out = amps.row_mut(b);
        for row in block.axis_iter(Axis(0)) {
            out += &row;
        }
        out /= n;
    }
    let times = block_mean(series.times());
    let humidity = series.humidity().map(block_mean);
    Ok(CsiSeries::new(times, amps, humidity)?)
}

/// Hampel filter over a window of up to `half_window` samples on each side.
pub fn hampel_filter(column: &[f64], half_window: usize, threshold: f64) -> Vec<f64> {
    hampel_filter_with_mask(column, half_window, threshold).0
}

/// Hampel filter that also reports which indices were replaced.
///
/// A sample is replaced by the window median `m` when
/// `|x - m| > threshold * 1.4826 * median(|w - m|)`. With a zero MAD any
/// sample that differs from the median is replaced.
pub fn hampel_filter_with_mask(
    column: &[f64],
    half_window: usize,
    threshold: f64,
) -> (Vec<f64>, Vec<bool>) {
    let n = column.len();
    let mut out = column.to_vec();
    let mut replaced = vec![false; n];
    if threshold.is_infinite() {
        return (out, replaced);
    }
    let mut window = Vec::with_capacity(2 * half_window + 1);
    for i in 0..n {
        let lo = i.saturating_sub(half_window);
        let hi = (i + half_window + 1).min(n);
        window.clear();
        window.extend_from_slice(&column[lo..hi]);
        let m = median_in_place(&mut window);
        for w in window.iter_mut() {
            *w = (*w - m).abs();
        }
        let s = MAD_SCALE * median_in_place(&mut window);
        if (column[i] - m).abs() > threshold * s {
            out[i] = m;
            replaced[i] = true;
        }
    }
    (out, replaced)
}

/// Trailing mean over the `min(i + 1, window)` most recent samples.
pub fn moving_average(column: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "moving-average window must be positive");
    (0..column.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &column[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Intermediate results of every stage.
#[derive(Debug, Clone)]
pub struct DenoiseStages {
    pub downsampled: CsiSeries,
    pub outliers_removed: CsiSeries,
    pub smoothed: CsiSeries,
    /// `replaced[[t, j]]` is set when the Hampel stage replaced sample `t` of
    /// subcarrier `j`.
    pub replaced: Array2<bool>,
}

fn map_columns<F>(amps: &Array2<f64>, f: F) -> (Array2<f64>, Vec<Vec<bool>>)
where
    F: Fn(&[f64]) -> (Vec<f64>, Vec<bool>) + Sync,
{
    let columns: Vec<(Vec<f64>, Vec<bool>)> = (0..amps.ncols())
        .into_par_iter()
        .map(|j| f(&amps.column(j).to_vec()))
        .collect();
    let mut out = Array2::zeros(amps.raw_dim());
    let mut masks = Vec::with_capacity(columns.len());
    for (j, (col, mask)) in columns.into_iter().enumerate() {
        out.column_mut(j).assign(&ndarray::Array1::from(col));
        masks.push(mask);
    }
    (out, masks)
}

pub fn denoise_stages(
    series: &CsiSeries,
    cfg: &DenoiseConfig,
) -> Result<DenoiseStages, DenoiseError> {
    cfg.validate()?;
    let downsampled = downsample(series, cfg.downsample_window)?;

    let (amps, masks) = map_columns(downsampled.amps(), |c| {
        hampel_filter_with_mask(c, cfg.hampel_half_window, cfg.hampel_threshold)
    });
    let mut replaced = Array2::from_elem(amps.raw_dim(), false);
    for (j, mask) in masks.iter().enumerate() {
        for (t, &r) in mask.iter().enumerate() {
            replaced[[t, j]] = r;
        }
    }
    let outliers_removed = CsiSeries::new(
        downsampled.times().to_vec(),
        amps,
        downsampled.humidity().map(<[f64]>::to_vec),
    )?;

    let (amps, _) = map_columns(outliers_removed.amps(), |c| {
        (moving_average(c, cfg.ma_window), Vec::new())
    });
    let humidity = outliers_removed
        .humidity()
        .map(|h| moving_average(h, cfg.ma_window));
    let smoothed = CsiSeries::new(outliers_removed.times().to_vec(), amps, humidity)?;

    Ok(DenoiseStages {
        downsampled,
        outliers_removed,
        smoothed,
        replaced,
    })
}

/// Downsample, then Hampel, then moving average, per subcarrier column.
pub fn denoise_pipeline(
    series: &CsiSeries,
    cfg: &DenoiseConfig,
) -> Result<CsiSeries, DenoiseError> {
    denoise_stages(series, cfg).map(|s| s.smoothed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn series_from_column(col: &[f64]) -> CsiSeries {
        let n = col.len();
        CsiSeries::new(
            (0..n).map(|i| i as f64).collect(),
            Array2::from_shape_vec((n, 1), col.to_vec()).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn downsample_block_mean() {
        let s = series_from_column(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let d = downsample(&s, 8).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.amps()[[0, 0]], 4.5);
        assert_eq!(d.times(), &[3.5]);
    }

    #[test]
    fn downsample_partial_tail_and_identity() {
        let s = series_from_column(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let d = downsample(&s, 2).unwrap();
        assert_eq!(d.amps().column(0).to_vec(), vec![1.5, 3.5, 5.0]);
        assert_eq!(downsample(&s, 1).unwrap(), s);
    }

    #[test]
    fn downsample_rejects_empty() {
        let s = CsiSeries::new(vec![], Array2::zeros((0, 3)), None).unwrap();
        assert!(matches!(downsample(&s, 4), Err(DenoiseError::EmptySeries)));
    }

    #[test]
    fn hampel_constant_untouched() {
        let c = vec![2.0; 20];
        assert_eq!(hampel_filter(&c, 3, 3.0), c);
    }

    #[test]
    fn hampel_single_spike() {
        let c = [1.0, 1.0, 1.0, 100.0, 1.0, 1.0, 1.0];
        assert_eq!(hampel_filter(&c, 3, 3.0), vec![1.0; 7]);
    }

    #[test]
    fn hampel_infinite_threshold_is_identity() {
        let c = [1.0, 1.0, 50.0, 1.0];
        let (out, mask) = hampel_filter_with_mask(&c, 1, f64::INFINITY);
        assert_eq!(out, c.to_vec());
        assert!(mask.iter().all(|m| !m));
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(
            moving_average(&[2.0, 4.0, 6.0, 8.0], 2),
            vec![2.0, 3.0, 5.0, 7.0]
        );
        let c = [1.0, -3.0, 9.5];
        assert_eq!(moving_average(&c, 1), c.to_vec());
        assert_eq!(moving_average(&[], 3), Vec::<f64>::new());
    }

    #[test]
    fn identity_config_is_identity() {
        let s = series_from_column(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]);
        assert_eq!(denoise_pipeline(&s, &DenoiseConfig::identity()).unwrap(), s);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = DenoiseConfig {
            ma_window: 0,
            ..Default::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(DenoiseError::InvalidConfig(_))
        ));
        let cfg = DenoiseConfig {
            hampel_threshold: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
