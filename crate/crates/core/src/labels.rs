//! Humidity binning: `label = n * round(h / n)` with ties rounded away from
//! zero, where `n` is the resolution in percentage points.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Bin width in relative-humidity percentage points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Resolution(u32);

impl Resolution {
    pub fn new(n: u32) -> Option<Self> {
        (n >= 1).then_some(Self(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for Resolution {
    type Error = String;

    fn try_from(n: u32) -> Result<Self, Self::Error> {
        Resolution::new(n).ok_or_else(|| "resolution must be at least 1".to_string())
    }
}

impl From<Resolution> for u32 {
    fn from(r: Resolution) -> u32 {
        r.0
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%", self.0)
    }
}

/// Bin centre in relative-humidity percent; always a multiple of the
/// resolution it was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub i64);

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn bin_humidity(h: f64, n: Resolution) -> ClassLabel {
    let n = n.get() as f64;
    // f64::round rounds half away from zero
    ClassLabel(((h / n).round() * n) as i64)
}

pub fn bin_all(humidity: &[f64], n: Resolution) -> Vec<ClassLabel> {
    humidity.iter().map(|&h| bin_humidity(h, n)).collect()
}

/// Sorted distinct labels of a humidity trace, or `None` when it is empty.
pub fn class_set(humidity: &[f64], n: Resolution) -> Option<Vec<ClassLabel>> {
    if humidity.is_empty() {
        return None;
    }
    let mut labels = bin_all(humidity, n);
    labels.sort_unstable();
    labels.dedup();
    Some(labels)
}
