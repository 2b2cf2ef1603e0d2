//! Independent reference implementations used as test oracles. Each one is
//! written as the plainest possible loop and shares no code with the crate.

#![allow(dead_code)]

use csi_humidity::labels::ClassLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

pub fn ref_median(v: &[f64]) -> f64 {
    let s = sorted(v);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Block means over consecutive `w`-row blocks; rows are frames.
pub fn ref_downsample(rows: &[Vec<f64>], w: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let end = (start + w).min(rows.len());
        let mut acc = vec![0.0; rows[start].len()];
        for row in &rows[start..end] {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= (end - start) as f64;
        }
        out.push(acc);
        start = end;
    }
    out
}

pub fn ref_hampel(x: &[f64], half: usize, k: f64) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = if i + half < n { i + half } else { n - 1 };
        let window = &x[lo..=hi];
        let m = ref_median(window);
        let dev: Vec<f64> = window.iter().map(|v| (v - m).abs()).collect();
        let s = 1.4826 * ref_median(&dev);
        out.push(if (x[i] - m).abs() > k * s { m } else { x[i] });
    }
    out
}

pub fn ref_moving_average(x: &[f64], w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let first = (i + 1).saturating_sub(w);
        let mut sum = 0.0;
        for v in &x[first..=i] {
            sum += v;
        }
        out.push(sum / (i + 1 - first) as f64);
    }
    out
}

/// Quantile by linear interpolation between order statistics.
fn ref_quantile(v: &[f64], p: f64) -> f64 {
    let s = sorted(v);
    let pos = p * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < s.len() {
        s[lo] + frac * (s[lo + 1] - s[lo])
    } else {
        s[lo]
    }
}

/// mean, population std, MAD, IQR, max, skewness, 16-bin entropy (bits).
pub fn ref_stats(x: &[f64]) -> [f64; 7] {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let med = ref_median(x);
    let mad = ref_median(&x.iter().map(|v| (v - med).abs()).collect::<Vec<_>>());
    let iqr = ref_quantile(x, 0.75) - ref_quantile(x, 0.25);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let skew = if m2 == 0.0 { 0.0 } else { m3 / m2.powf(1.5) };
    let entropy = if max == min {
        0.0
    } else {
        let mut counts = [0usize; 16];
        for v in x {
            let mut b = 0;
            // the last bin is closed on the right
            while b < 15 && *v >= min + (b + 1) as f64 * (max - min) / 16.0 {
                b += 1;
            }
            counts[b] += 1;
        }
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    };
    [mean, m2.sqrt(), mad, iqr, max, skew, entropy]
}

/// Bin label for `h = tenths / 10` at resolution `n`, in exact integer
/// arithmetic with ties rounded away from zero.
pub fn ref_bin_tenths(tenths: i64, n: i64) -> i64 {
    // round(tenths / (10 n)) for tenths >= 0
    let q = (2 * tenths + 10 * n) / (20 * n);
    q * n
}

/// All-pairs KNN: sort every training row by (distance, index), vote among
/// the first k, smallest label on vote ties.
pub fn ref_knn(
    rows: &[Vec<f64>],
    labels: &[ClassLabel],
    k: usize,
    q: &[f64],
) -> (Vec<usize>, ClassLabel) {
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let nn: Vec<usize> = d[..k].iter().map(|&(_, i)| i).collect();
    let mut best = (0usize, ClassLabel(i64::MAX));
    let mut classes: Vec<ClassLabel> = nn.iter().map(|&i| labels[i]).collect();
    classes.sort();
    classes.dedup();
    for c in classes {
        let votes = nn.iter().filter(|&&i| labels[i] == c).count();
        if votes > best.0 {
            best = (votes, c);
        }
    }
    (nn, best.1)
}

/// Four jittered clusters at (+-1, +-1); the label is the sign of x*y.
pub fn xor_fixture(per_cluster: usize, jitter: f64, seed: u64) -> (Vec<[f64; 2]>, Vec<ClassLabel>) {
    let mut r = rng(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (cx, cy) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
        for _ in 0..per_cluster {
            let px: f64 = cx + r.random_range(-jitter..jitter);
            let py: f64 = cy + r.random_range(-jitter..jitter);
            x.push([px, py]);
            y.push(if cx * cy > 0.0 {
                ClassLabel(1)
            } else {
                ClassLabel(0)
            });
        }
    }
    (x, y)
}

/// Two Gaussian blobs of standard deviation `sigma` whose centres are
/// `gap` apart along the first axis of a `d`-dimensional space.
pub fn blobs(
    n_per: usize,
    d: usize,
    sigma: f64,
    gap: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
    use rand_distr::{Distribution, Normal};
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..2 * n_per {
        let class = i % 2;
        let mut row: Vec<f64> = (0..d).map(|_| noise.sample(&mut r)).collect();
        row[0] += class as f64 * gap;
        x.push(row);
        y.push(ClassLabel(40 + 5 * class as i64));
    }
    (x, y)
}

/// Relative closeness with a floor of one ulp-scale at zero.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Least-squares slope of log(y) against log(x).
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
