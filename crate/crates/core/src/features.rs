//! Feature rows: the de-noised subcarrier amplitudes followed by seven
//! cross-subcarrier statistics, plus z-score standardization.
//!
//! Statistic conventions:
//! - standard deviation and skewness use population (1/N) moments;
//! - MAD is unscaled (the Hampel filter's 1.4826 factor is not applied);
//! - IQR uses linear interpolation between order statistics;
//! - entropy is the base-2 Shannon entropy of a 16-bin histogram spanning
//!   the row's `[min, max]`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::CsiSeries;
use crate::stats::{mad, mean, quantile_sorted};
use crate::NUM_STATS;

pub const ENTROPY_BINS: usize = 16;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("series carries no humidity labels")]
    MissingLabels,
    #[error("need at least 2 rows to fit a standardizer, got {0}")]
    TooFewRows(usize),
    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("bad CSV header: {0}")]
    BadHeader(String),
    #[error("bad CSV value {value:?} at row {row}")]
    BadValue { row: usize, value: String },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// `[mean, std, mad, iqr, max, skewness, entropy]` of one amplitude row.
pub fn frame_stats(amp: &[f64]) -> [f64; NUM_STATS] {
    let n = amp.len() as f64;
    let mu = mean(amp);
    let (m2, m3) = amp.iter().fold((0.0, 0.0), |(s2, s3), x| {
        let d = x - mu;
        (s2 + d * d, s3 + d * d * d)
    });
    let (m2, m3) = (m2 / n, m3 / n);
    let std = m2.sqrt();
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };

    let mut sorted = amp.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);

    [
        mu,
        std,
        mad(amp),
        iqr,
        hi,
        skew,
        histogram_entropy(amp, lo, hi),
    ]
}

fn histogram_entropy(values: &[f64], lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut counts = [0usize; ENTROPY_BINS];
    let scale = ENTROPY_BINS as f64 / (hi - lo);
    for v in values {
        let bin = (((v - lo) * scale) as usize).min(ENTROPY_BINS - 1);
        counts[bin] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub t: f64,
    pub values: Vec<f64>,
    /// Ground-truth relative humidity in percent.
    pub humidity: f64,
}

/// Feature rows sharing one width.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<FeatureRow>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.values.len())
    }

    pub fn humidity(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.humidity).collect()
    }

    pub fn matrix(&self) -> Array2<f64> {
        self.matrix_of(&(0..self.len()).collect::<Vec<_>>())
    }

    /// Feature matrix of the rows at `idx`, in that order.
    pub fn matrix_of(&self, idx: &[usize]) -> Array2<f64> {
        let w = self.width();
        let mut m = Array2::zeros((idx.len(), w));
        for (i, &r) in idx.iter().enumerate() {
            m.row_mut(i).assign(&ArrayView1::from(&self.rows[r].values));
        }
        m
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Header `t,f000..,humidity`, plus a trailing integer `label` column
    /// when `labels` is given.
    pub fn write_csv<W: Write>(&self, out: W, labels: Option<&[i64]>) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.width()).map(|j| format!("f{j:03}")));
        header.push("humidity".into());
        if labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for (i, row) in self.rows.iter().enumerate() {
            rec.clear();
            rec.push(row.t.to_string());
            rec.extend(row.values.iter().map(|v| v.to_string()));
            rec.push(row.humidity.to_string());
            if let Some(l) = labels {
                rec.push(l[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the CSV form. A trailing `label` column is accepted and ignored;
    /// labels are always re-derived from humidity at a chosen resolution.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, FeatureError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        let mut end = names.len();
        if names.last() == Some(&"label") {
            end -= 1;
        }
        if names.first() != Some(&"t") || end < 2 || names[end - 1] != "humidity" {
            return Err(FeatureError::BadHeader(
                "expected t,f000..,humidity[,label]".into(),
            ));
        }
        let width = end - 2;
        for (j, name) in names[1..=width].iter().enumerate() {
            if *name != format!("f{j:03}") {
                return Err(FeatureError::BadHeader(format!(
                    "unexpected column {name:?}"
                )));
            }
        }
        let mut rows = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| FeatureError::BadValue {
                    row,
                    value: s.to_string(),
                })
            };
            let values = (1..=width)
                .map(|j| parse(&rec[j]))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(FeatureRow {
                t: parse(&rec[0])?,
                values,
                humidity: parse(&rec[width + 1])?,
            });
        }
        Ok(Dataset { rows })
    }
}

/// One feature row per time sample: amplitudes, then [`frame_stats`].
pub fn build_dataset(series: &CsiSeries) -> Result<Dataset, FeatureError> {
    let humidity = series.humidity().ok_or(FeatureError::MissingLabels)?;
    let rows = series
        .amps()
        .axis_iter(Axis(0))
        .zip(series.times())
        .zip(humidity)
        .map(|((amp, &t), &h)| {
            let amp = amp.to_vec();
            let stats = frame_stats(&amp);
            let mut values = amp;
            values.extend_from_slice(&stats);
            FeatureRow {
                t,
                values,
                humidity: h,
            }
        })
        .collect();
    Ok(Dataset { rows })
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: ArrayView2<f64>) -> Result<Self, FeatureError> {
        let n = rows.nrows();
        if n < 2 {
            return Err(FeatureError::TooFewRows(n));
        }
        let mean = rows.mean_axis(Axis(0)).expect("non-empty");
        let var = rows
            .axis_iter(Axis(0))
            .fold(Array1::<f64>::zeros(rows.ncols()), |acc, r| {
                let d = &r - &mean;
                acc + &d * &d
            })
            / n as f64;
        Ok(Self {
            mean: mean.to_vec(),
            std: var.mapv(f64::sqrt).to_vec(),
        })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Features with zero spread in the fitting data.
    pub fn degenerate(&self) -> Vec<usize> {
        self.std
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s == 0.0 { 0.0 } else { (x - m) / s })
            .collect()
    }

    pub fn apply_row(&self, row: &FeatureRow) -> Result<FeatureRow, FeatureError> {
        self.check_width(row.values.len())?;
        Ok(FeatureRow {
            t: row.t,
            values: self.apply(&row.values),
            humidity: row.humidity,
        })
    }

    pub fn apply_matrix(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>, FeatureError> {
        self.check_width(rows.ncols())?;
        let mut out = rows.to_owned();
        for mut r in out.axis_iter_mut(Axis(0)) {
            for ((x, m), s) in r.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = if *s == 0.0 { 0.0 } else { (*x - m) / s };
            }
        }
        Ok(out)
    }

    /// Undoes [`Standardizer::apply`]; degenerate features come back as
    /// their mean.
    pub fn inverse(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(z, (m, s))| m + z * s)
            .collect()
    }

    fn check_width(&self, got: usize) -> Result<(), FeatureError> {
        if got != self.width() {
            return Err(FeatureError::WidthMismatch {
                expected: self.width(),
                got,
            });
        }
        Ok(())
    }
}
