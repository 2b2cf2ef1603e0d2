//! Time-ordered amplitude series and its CSV form.
//!
//! CSV schema: `t,seq,a000..a241[,humidity]`. Floats are written in their
//! shortest round-trip form, so write/read is lossless.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, Axis};
use thiserror::Error;

use crate::ingest::AmplitudeFrame;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("timestamps must be strictly increasing (row {index})")]
    NonIncreasingTime { index: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("bad CSV header: {0}")]
    BadHeader(String),
    #[error("bad CSV value {value:?} at row {row}")]
    BadValue { row: usize, value: String },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiSeries {
    times: Vec<f64>,
    amps: Array2<f64>,
    humidity: Option<Vec<f64>>,
}

impl CsiSeries {
    pub fn new(
        times: Vec<f64>,
        amps: Array2<f64>,
        humidity: Option<Vec<f64>>,
    ) -> Result<Self, SeriesError> {
        if amps.nrows() != times.len() {
            return Err(SeriesError::ShapeMismatch(format!(
                "{} timestamps for {} rows",
                times.len(),
                amps.nrows()
            )));
        }
        if let Some(h) = &humidity {
            if h.len() != times.len() {
                return Err(SeriesError::ShapeMismatch(format!(
                    "{} humidity values for {} rows",
                    h.len(),
                    times.len()
                )));
            }
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(SeriesError::NonIncreasingTime { index: i + 1 });
        }
        if let Some((row, _)) = amps
            .axis_iter(Axis(0))
            .enumerate()
            .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
        {
            return Err(SeriesError::NonFinite { row });
        }
        Ok(Self {
            times,
            amps,
            humidity,
        })
    }

    pub fn from_amplitude_frames(frames: &[AmplitudeFrame]) -> Result<Self, SeriesError> {
        let width = frames.first().map_or(0, |f| f.amp.len());
        let mut amps = Array2::zeros((frames.len(), width));
        for (i, f) in frames.iter().enumerate() {
            if f.amp.len() != width {
                return Err(SeriesError::ShapeMismatch(format!(
                    "frame {i} has {} amplitudes, expected {width}",
                    f.amp.len()
                )));
            }
            amps.row_mut(i).assign(&ArrayView1::from(&f.amp));
        }
        Self::new(frames.iter().map(|f| f.timestamp).collect(), amps, None)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn amps(&self) -> &Array2<f64> {
        &self.amps
    }

    pub fn humidity(&self) -> Option<&[f64]> {
        self.humidity.as_deref()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn width(&self) -> usize {
        self.amps.ncols()
    }

    pub fn with_humidity(self, humidity: Vec<f64>) -> Result<Self, SeriesError> {
        Self::new(self.times, self.amps, Some(humidity))
    }

    pub fn into_parts(self) -> (Vec<f64>, Array2<f64>, Option<Vec<f64>>) {
        (self.times, self.amps, self.humidity)
    }

    /// Mean amplitude across subcarriers for every row.
    pub fn mean_trace(&self) -> Vec<f64> {
        self.amps
            .axis_iter(Axis(0))
            .map(|r| r.sum() / r.len() as f64)
            .collect()
    }

    /// Keeps rows whose index is a multiple of `step`.
    pub fn decimate(&self, step: usize) -> Self {
        let idx: Vec<usize> = (0..self.len()).step_by(step.max(1)).collect();
        self.select_rows(&idx)
    }

    /// Rows at the given ascending indices.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            amps: self.amps.select(Axis(0), idx),
            humidity: self
                .humidity
                .as_ref()
                .map(|h| idx.iter().map(|&i| h[i]).collect()),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SeriesError> {
        self.write_csv_with_seq(out, None)
    }

    /// Writes the CSV form; `seq` defaults to the row index.
    pub fn write_csv_with_seq<W: Write>(
        &self,
        out: W,
        seq: Option<&[u64]>,
    ) -> Result<(), SeriesError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "seq".to_string()];
        header.extend((0..self.width()).map(|j| format!("a{j:03}")));
        if self.humidity.is_some() {
            header.push("humidity".into());
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (i, row) in self.amps.axis_iter(Axis(0)).enumerate() {
            record.clear();
            record.push(self.times[i].to_string());
            record.push(seq.map_or(i as u64, |s| s[i]).to_string());
            record.extend(row.iter().map(|v| v.to_string()));
            if let Some(h) = &self.humidity {
                record.push(h[i].to_string());
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, SeriesError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("t") || header.get(1) != Some("seq") {
            return Err(SeriesError::BadHeader(
                "expected leading columns t,seq".into(),
            ));
        }
        let has_humidity = header.iter().next_back() == Some("humidity");
        let width = header.len() - 2 - usize::from(has_humidity);
        for (j, name) in header.iter().skip(2).take(width).enumerate() {
            if name != format!("a{j:03}") {
                return Err(SeriesError::BadHeader(format!(
                    "unexpected column {name:?}"
                )));
            }
        }
        let mut times = Vec::new();
        let mut flat = Vec::new();
        let mut humidity = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|_| SeriesError::BadValue {
                    row,
                    value: s.to_string(),
                })
            };
            times.push(parse(&rec[0])?);
            for j in 0..width {
                flat.push(parse(&rec[2 + j])?);
            }
            if has_humidity {
                humidity.push(parse(&rec[2 + width])?);
            }
        }
        let amps = Array2::from_shape_vec((times.len(), width), flat)
            .map_err(|e| SeriesError::ShapeMismatch(e.to_string()))?;
        Self::new(times, amps, has_humidity.then_some(humidity))
    }
}

/// Reads a hygrometer log: any CSV with columns named `t` and `humidity`,
/// in any position. Other columns are ignored.
pub fn read_humidity_log<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>), SeriesError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SeriesError::BadHeader(format!("missing column {name:?}")))
    };
    let (tc, hc) = (col("t")?, col("humidity")?);
    let mut t = Vec::new();
    let mut h = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| {
            let s = rec.get(j).unwrap_or("");
            s.trim().parse::<f64>().map_err(|_| SeriesError::BadValue {
                row,
                value: s.to_string(),
            })
        };
        t.push(parse(tc)?);
        h.push(parse(hc)?);
    }
    Ok((t, h))
}

/// Linear interpolation of the log `(t, h)` at every time in `at`, held
/// constant beyond either end. A time present in the log takes its logged
/// value exactly.
pub fn interpolate_humidity(at: &[f64], t: &[f64], h: &[f64]) -> Result<Vec<f64>, SeriesError> {
    if t.len() != h.len() || t.is_empty() {
        return Err(SeriesError::ShapeMismatch(format!(
            "humidity log has {} times and {} values",
            t.len(),
            h.len()
        )));
    }
    if let Some(index) = (1..t.len()).find(|&i| !(t[i] > t[i - 1])) {
        return Err(SeriesError::NonIncreasingTime { index });
    }
    if let Some(row) = (0..t.len()).find(|&i| !t[i].is_finite() || !h[i].is_finite()) {
        return Err(SeriesError::NonFinite { row });
    }
    Ok(at
        .iter()
        .map(|&x| {
            // first log index with t > x
            let hi = t.partition_point(|&ti| ti <= x);
            if hi == 0 {
                h[0]
            } else if t[hi - 1] == x || hi == t.len() {
                h[hi - 1]
            } else {
                let (t0, t1) = (t[hi - 1], t[hi]);
                let w = (x - t0) / (t1 - t0);
                h[hi - 1] + w * (h[hi] - h[hi - 1])
            }
        })
        .collect())
}
