//! Synthetic humidity-chamber runs.
//!
//! The humidity follows a staircase from `ramp_start` to `ramp_end`, then
//! decays exponentially back to ambient. Humidity-related time scales (dwell
//! and depletion) are divided by `time_compression`; radio time scales
//! (frame rate, probe-request period and duration) are not.
//!
//! Per frame and subcarrier `k` the clean amplitude is
//!
//! ```text
//! g(t) * [b_k(t) * (1 - c h^2) + r(h) * sum_p (cos th_p * u_pk + sin th_p * v_pk)]
//! r(h)  = scatter_depth * mean(b) * c * h^2
//! th_p  = th_p0 + 2 pi h / W_p
//! ```
//!
//! `b(t)` is a frequency-selective baseline built from a few multipath
//! echoes whose gains fade slowly around their nominal values, and `g` is a
//! slow receiver gain drift. Each scattered path `p` carries energy that
//! grows with humidity and whose phase turns once every `W_p` % RH. The
//! profiles `u_p`, `v_p` are zero-mean and orthogonal to `b`, and the echo
//! fading is zero-mean across subcarriers, so the mean amplitude only sees
//! `g(t) * mean(b) * (1 - c h^2)`.
//!
//! Measured amplitudes add noise and probe-request disturbances. Noise
//! variance is split between a few smooth modes across frequency and a
//! white part. A disturbance is an offset on every subcarrier that decays
//! exponentially over 5 to 10 s. Hygrometer labels carry a slowly wandering
//! error.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, CsiFrame, MacAddr, CHIP_BCM43455C0};
use crate::pcap::{self, LinkType};
use crate::series::{CsiSeries, SeriesError};
use crate::NUM_SUBCARRIERS;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Received CSI frames per second (PING plus ACK).
    pub frame_rate: f64,
    /// Transmitter PING interval in seconds.
    pub tx_interval: f64,
    pub ramp_start: f64,
    pub ramp_end: f64,
    pub ramp_step: f64,
    /// Uncompressed seconds spent on each ramp plateau.
    pub dwell_per_step: f64,
    /// Interior plateaus land within +-`plateau_jitter` % of their nominal level.
    pub plateau_jitter: f64,
    /// Uncompressed depletion time in seconds.
    pub depletion_duration: f64,
    /// Divides dwell and depletion durations.
    pub time_compression: f64,
    pub pr_period: f64,
    pub pr_min_duration: f64,
    pub pr_max_duration: f64,
    /// Initial probe-request offset in units of `noise_std`.
    pub pr_magnitude: f64,
    /// Per-frame measurement noise on every subcarrier, amplitude units.
    pub noise_std: f64,
    /// Number of smooth spectral modes carrying the frequency-coherent part
    /// of the noise.
    pub noise_modes: usize,
    /// Share of the noise variance that is white across subcarriers; the
    /// rest is spread evenly over `noise_modes` modes.
    pub white_noise_fraction: f64,
    /// Hygrometer error, % RH. The error wanders slowly, like a sensor
    /// lagging and overshooting, rather than changing every frame.
    pub label_noise_std: f64,
    /// Correlation time of the hygrometer error, seconds.
    pub label_noise_tau: f64,
    /// Fractional amplitude loss per %RH^2.
    pub attenuation_coeff: f64,
    /// Mean of the baseline amplitude profile.
    pub baseline_level: f64,
    /// Relative spread of the baseline profile across subcarriers.
    pub baseline_ripple: f64,
    /// Relative fluctuation of each multipath echo forming the baseline
    /// ripple. Leaves the subcarrier mean unchanged.
    pub echo_drift_std: f64,
    /// Correlation time of the echo fluctuation, seconds.
    pub echo_drift_tau: f64,
    /// Standard deviation of the relative receiver gain drift.
    pub drift_std: f64,
    /// Correlation time of the gain drift, seconds.
    pub drift_tau: f64,
    /// Strength of each humidity-scattered path relative to the attenuated
    /// energy.
    pub scatter_depth: f64,
    /// One entry per scattered path: the humidity change, in % RH, that turns
    /// the path's phase once. Zero keeps that path's phase fixed.
    pub scatter_windings: Vec<f64>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            frame_rate: 8.0,
            tx_interval: 0.25,
            ramp_start: 40.0,
            ramp_end: 70.0,
            ramp_step: 1.0,
            dwell_per_step: 1800.0,
            plateau_jitter: 0.3,
            depletion_duration: 8.0 * 3600.0,
            time_compression: 15.0,
            pr_period: 60.0,
            pr_min_duration: 5.0,
            pr_max_duration: 10.0,
            pr_magnitude: 12.0,
            noise_std: 20.0,
            noise_modes: 8,
            white_noise_fraction: 0.0,
            label_noise_std: 1.0,
            label_noise_tau: 120.0,
            attenuation_coeff: 3.6e-5,
            baseline_level: 500.0,
            baseline_ripple: 0.85,
            echo_drift_std: 0.15,
            echo_drift_tau: 180.0,
            drift_std: 0.015,
            drift_tau: 180.0,
            scatter_depth: 0.1,
            scatter_windings: vec![5.0],
            seed: 42,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("frame_rate", self.frame_rate),
            ("tx_interval", self.tx_interval),
            ("ramp_step", self.ramp_step),
            ("dwell_per_step", self.dwell_per_step),
            ("depletion_duration", self.depletion_duration),
            ("time_compression", self.time_compression),
            ("pr_period", self.pr_period),
            ("pr_min_duration", self.pr_min_duration),
            ("pr_max_duration", self.pr_max_duration),
            ("drift_tau", self.drift_tau),
            ("label_noise_tau", self.label_noise_tau),
            ("echo_drift_tau", self.echo_drift_tau),
            ("baseline_level", self.baseline_level),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SynthError::InvalidConfig(format!(
                    "{name} must be positive"
                )));
            }
        }
        let non_negative = [
            ("plateau_jitter", self.plateau_jitter),
            ("pr_magnitude", self.pr_magnitude),
            ("noise_std", self.noise_std),
            ("label_noise_std", self.label_noise_std),
            ("attenuation_coeff", self.attenuation_coeff),
            ("baseline_ripple", self.baseline_ripple),
            ("drift_std", self.drift_std),
            ("echo_drift_std", self.echo_drift_std),
            ("scatter_depth", self.scatter_depth),
        ];
        let windings = self
            .scatter_windings
            .iter()
            .map(|&w| ("scatter_windings", w));
        for (name, v) in non_negative.into_iter().chain(windings) {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::InvalidConfig(format!(
                    "{name} must be non-negative"
                )));
            }
        }
        if self.white_noise_fraction > 1.0
            || (self.noise_modes == 0 && self.white_noise_fraction < 1.0)
        {
            return Err(SynthError::InvalidConfig(
                "white_noise_fraction must be at most 1, and exactly 1 without noise modes".into(),
            ));
        }
        if !(self.ramp_start < self.ramp_end) {
            return Err(SynthError::InvalidConfig(
                "ramp_start must be below ramp_end".into(),
            ));
        }
        if self.pr_min_duration > self.pr_max_duration || self.pr_max_duration >= self.pr_period {
            return Err(SynthError::InvalidConfig(
                "need pr_min_duration <= pr_max_duration < pr_period".into(),
            ));
        }
        if 2.0 * self.plateau_jitter >= self.ramp_step {
            return Err(SynthError::InvalidConfig(
                "plateau_jitter must be below half a step".into(),
            ));
        }
        Ok(())
    }

    pub fn plateau_count(&self) -> usize {
        ((self.ramp_end - self.ramp_start) / self.ramp_step).round() as usize + 1
    }

    pub fn dwell(&self) -> f64 {
        self.dwell_per_step / self.time_compression
    }

    pub fn depletion(&self) -> f64 {
        self.depletion_duration / self.time_compression
    }

    /// Capture length in seconds.
    pub fn duration(&self) -> f64 {
        self.plateau_count() as f64 * self.dwell() + self.depletion()
    }

    pub fn frame_count(&self) -> usize {
        (self.duration() * self.frame_rate).floor() as usize
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        pcap::timestamp_from_micros((i as f64 * 1e6 / self.frame_rate).round() as u64)
    }
}

/// Independent random streams, so that changing one effect of a scenario
/// leaves the realization of every other effect untouched.
mod stream {
    pub const TRAJECTORY: u64 = 1;
    pub const CHANNEL: u64 = 2;
    pub const PROBE: u64 = 3;
    pub const GAIN: u64 = 4;
    pub const ECHO: u64 = 5;
    pub const NOISE: u64 = 6;
    pub const LABEL: u64 = 7;
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Depletion time constant: the decay covers five time constants, leaving
/// `e^-5` (< 1%) of the ramp height at the end.
const DEPLETION_TIME_CONSTANTS: f64 = 5.0;

/// True humidity at every frame time, as `(t, h)` pairs.
pub fn humidity_trajectory(cfg: &ScenarioConfig) -> Vec<(f64, f64)> {
    let mut rng = stream_rng(cfg.seed, stream::TRAJECTORY);
    let plateaus = cfg.plateau_count();
    let levels: Vec<f64> = (0..plateaus)
        .map(|p| {
            let nominal = cfg.ramp_start + p as f64 * cfg.ramp_step;
            if p == 0 || p + 1 == plateaus || cfg.plateau_jitter == 0.0 {
                nominal.min(cfg.ramp_end)
            } else {
                nominal + rng.random_range(-cfg.plateau_jitter..=cfg.plateau_jitter)
            }
        })
        .collect();
    let top = *levels.last().expect("at least one plateau");
    let ramp_end_t = plateaus as f64 * cfg.dwell();
    let tau = cfg.depletion() / DEPLETION_TIME_CONSTANTS;
    (0..cfg.frame_count())
        .map(|i| {
            let t = cfg.frame_time(i);
            let h = if t < ramp_end_t {
                levels[((t / cfg.dwell()) as usize).min(plateaus - 1)]
            } else {
                cfg.ramp_start + (top - cfg.ramp_start) * (-(t - ramp_end_t) / tau).exp()
            };
            (t, h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub start: f64,
    pub end: f64,
    /// Signed offset at `start`, amplitude units.
    pub magnitude: f64,
    pub frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DisturbanceLog {
    pub events: Vec<Disturbance>,
}

impl DisturbanceLog {
    pub fn frame_mask(&self, frames: usize) -> Vec<bool> {
        let mut mask = vec![false; frames];
        for e in &self.events {
            for &f in &e.frames {
                mask[f] = true;
            }
        }
        mask
    }

    /// Which rows of a `window`-frame block average are disturbed, counting
    /// a block when at least `min_fraction` of its frames are.
    pub fn affected_blocks(&self, frames: usize, window: usize, min_fraction: f64) -> Vec<bool> {
        self.frame_mask(frames)
            .chunks(window)
            .map(|c| {
                c.iter().filter(|&&m| m).count() as f64 >= min_fraction * c.len() as f64
                    && c.iter().any(|&m| m)
            })
            .collect()
    }
}

/// Output of one synthetic run.
#[derive(Debug, Clone)]
pub struct SynthRun {
    /// Measured amplitudes with noisy hygrometer labels.
    pub noisy: CsiSeries,
    /// Noise-free amplitudes with the true humidity.
    pub clean: CsiSeries,
    pub log: DisturbanceLog,
}

fn unit_rms(v: &mut Array1<f64>) {
    let rms = (v.dot(v) / v.len() as f64).sqrt();
    *v /= rms;
}

fn remove_component(v: &mut Array1<f64>, dir: &Array1<f64>) {
    let coef = v.dot(dir) / dir.dot(dir);
    v.scaled_add(-coef, dir);
}

struct Channel {
    baseline: Array1<f64>,
    /// Zero-mean contribution of each echo to `baseline`.
    echoes: Array2<f64>,
    /// Per scattered path, two unit-RMS profiles orthogonal to the
    /// baseline, the constant profile and every other path's profiles.
    paths: Vec<(Array1<f64>, Array1<f64>)>,
    /// Phase of each scattered path at zero humidity.
    theta0: Vec<f64>,
    /// `noise_modes` rows of unit-RMS cosine profiles.
    modes: Array2<f64>,
}

const ECHOES: usize = 4;

fn channel(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Channel {
    let n = NUM_SUBCARRIERS;
    // frequency-selective baseline from a few multipath echoes
    let mut echoes = Array2::<f64>::zeros((ECHOES, n));
    for mut echo in echoes.outer_iter_mut() {
        let delay = rng.random_range(0.5..4.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let gain: f64 = rng.random_range(0.3..1.0);
        for k in 0..n {
            echo[k] = gain * (2.0 * PI * delay * k as f64 / n as f64 + phase).cos();
        }
    }
    let ripple = echoes.sum_axis(ndarray::Axis(0));
    let max = ripple.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = cfg.baseline_level * cfg.baseline_ripple / max.max(1e-12);
    let baseline = ripple.mapv(|r| cfg.baseline_level + scale * r);
    for mut echo in echoes.outer_iter_mut() {
        let mean = echo.mean().expect("non-empty");
        echo.mapv_inplace(|e| scale * (e - mean));
    }

    let ones = Array1::<f64>::ones(n);
    let mut draw = || Array1::from_iter((0..n).map(|_| StandardNormal.sample(&mut *rng)));
    let mut centred = baseline.clone();
    remove_component(&mut centred, &ones);
    let mut basis = vec![ones, centred];
    let mut profiles = Vec::with_capacity(2 * cfg.scatter_windings.len());
    for _ in 0..2 * cfg.scatter_windings.len() {
        let mut p = draw();
        for b in &basis {
            remove_component(&mut p, b);
        }
        basis.push(p.clone());
        unit_rms(&mut p);
        profiles.push(p);
    }
    let mut profiles = profiles.into_iter();
    let paths: Vec<_> = std::iter::from_fn(|| Some((profiles.next()?, profiles.next()?))).collect();
    let modes = Array2::from_shape_fn((cfg.noise_modes, n), |(m, k)| {
        let c = (PI * m as f64 * (k as f64 + 0.5) / n as f64).cos();
        if m == 0 {
            c
        } else {
            c * 2f64.sqrt()
        }
    });
    let theta0 = paths
        .iter()
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    Channel {
        baseline,
        echoes,
        paths,
        theta0,
        modes,
    }
}

pub fn generate_series(cfg: &ScenarioConfig) -> Result<SynthRun, SynthError> {
    cfg.validate()?;
    let ch = channel(cfg, &mut stream_rng(cfg.seed, stream::CHANNEL));
    let mut rng = stream_rng(cfg.seed, stream::PROBE);
    let trajectory = humidity_trajectory(cfg);
    let frames = trajectory.len();
    let dt = 1.0 / cfg.frame_rate;
    let n = NUM_SUBCARRIERS;
    let mean_baseline = ch.baseline.mean().expect("non-empty");

    // probe-request disturbances, one per period
    let duration = cfg.duration();
    let periods = (duration / cfg.pr_period).floor() as usize;
    let mut log = DisturbanceLog::default();
    for p in 0..periods {
        let len = rng.random_range(cfg.pr_min_duration..=cfg.pr_max_duration);
        let start = p as f64 * cfg.pr_period + rng.random_range(0.0..cfg.pr_period - len);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let end = start + len;
        let frames_hit = (0..frames)
            .filter(|&i| {
                let t = trajectory[i].0;
                t >= start && t < end
            })
            .collect();
        log.events.push(Disturbance {
            start,
            end,
            magnitude: sign * cfg.pr_magnitude * cfg.noise_std,
            frames: frames_hit,
        });
    }
    let mut offset = vec![0.0; frames];
    for e in &log.events {
        let len = e.end - e.start;
        for &i in &e.frames {
            offset[i] = e.magnitude * (-(trajectory[i].0 - e.start) / len).exp();
        }
    }

    let rho = (-dt / cfg.drift_tau).exp();
    let innovation = (1.0 - rho * rho).sqrt();
    let mut gain_rng = stream_rng(cfg.seed, stream::GAIN);
    let mut echo_rng = stream_rng(cfg.seed, stream::ECHO);
    let mut rng = stream_rng(cfg.seed, stream::NOISE);
    let mut drift: f64 = StandardNormal.sample(&mut gain_rng);
    let mut echo_drift: Vec<f64> = (0..ECHOES)
        .map(|_| StandardNormal.sample(&mut echo_rng))
        .collect();
    let mut profile = Array1::<f64>::zeros(n);
    let echo_rho = (-dt / cfg.echo_drift_tau).exp();
    let echo_innovation = (1.0 - echo_rho * echo_rho).sqrt();
    let mut scattered = Array1::<f64>::zeros(n);
    let white =
        Normal::new(0.0, cfg.noise_std * cfg.white_noise_fraction.sqrt()).expect("finite std");
    let mode_std = if cfg.noise_modes == 0 {
        0.0
    } else {
        cfg.noise_std * ((1.0 - cfg.white_noise_fraction) / cfg.noise_modes as f64).sqrt()
    };
    let mut coherent = Array1::<f64>::zeros(n);
    let label_rho = (-dt / cfg.label_noise_tau).exp();
    let label_innovation = (1.0 - label_rho * label_rho).sqrt();
    let mut label_rng = stream_rng(cfg.seed, stream::LABEL);
    let mut label_error: f64 = StandardNormal.sample(&mut label_rng);

    let mut clean = Array2::<f64>::zeros((frames, n));
    let mut noisy = Array2::<f64>::zeros((frames, n));
    let mut labels = Vec::with_capacity(frames);
    for (i, &(_, h)) in trajectory.iter().enumerate() {
        let gain = 1.0 + cfg.drift_std * drift;
        let eps: f64 = StandardNormal.sample(&mut gain_rng);
        drift = rho * drift + innovation * eps;
        let direct = gain * (1.0 - cfg.attenuation_coeff * h * h);
        let scatter = cfg.scatter_depth * mean_baseline * cfg.attenuation_coeff * h * h;
        profile.assign(&ch.baseline);
        if cfg.echo_drift_std > 0.0 {
            for (echo, d) in ch.echoes.outer_iter().zip(echo_drift.iter_mut()) {
                profile.scaled_add(cfg.echo_drift_std * *d, &echo);
                let eps: f64 = StandardNormal.sample(&mut echo_rng);
                *d = echo_rho * *d + echo_innovation * eps;
            }
        }
        scattered.fill(0.0);
        for (((u, v), &w), &th0) in ch.paths.iter().zip(&cfg.scatter_windings).zip(&ch.theta0) {
            let turns = if w == 0.0 { 0.0 } else { h / w };
            let (s, c) = (th0 + 2.0 * PI * turns).sin_cos();
            scattered.scaled_add(gain * scatter * c, u);
            scattered.scaled_add(gain * scatter * s, v);
        }
        coherent.fill(0.0);
        for mode in ch.modes.outer_iter() {
            let z: f64 = StandardNormal.sample(&mut rng);
            coherent.scaled_add(z * mode_std, &mode);
        }
        for k in 0..n {
            let a = direct * profile[k] + scattered[k];
            clean[[i, k]] = a;
            noisy[[i, k]] = (a + coherent[k] + white.sample(&mut rng) + offset[i]).max(0.0);
        }
        labels.push(h + cfg.label_noise_std * label_error);
        let eps: f64 = StandardNormal.sample(&mut label_rng);
        label_error = label_rho * label_error + label_innovation * eps;
    }

    let times: Vec<f64> = trajectory.iter().map(|p| p.0).collect();
    let truth: Vec<f64> = trajectory.iter().map(|p| p.1).collect();
    Ok(SynthRun {
        noisy: CsiSeries::new(times.clone(), noisy, Some(labels))?,
        clean: CsiSeries::new(times, clean, Some(truth))?,
        log,
    })
}

/// Per-subcarrier phase slope used when turning amplitudes into complex
/// CSI: a fixed 0.3-sample timing offset.
fn subcarrier_phase(k: usize) -> f64 {
    2.0 * PI * 0.3 * (k as f64 - (NUM_SUBCARRIERS / 2) as f64) / 256.0
}

/// Converts an amplitude series into integer-valued CSI frames.
pub fn series_to_frames(series: &CsiSeries) -> Result<Vec<CsiFrame>, SynthError> {
    if series.width() != NUM_SUBCARRIERS && !series.is_empty() {
        return Err(SynthError::InvalidConfig(format!(
            "capture needs {NUM_SUBCARRIERS} subcarriers, series has {}",
            series.width()
        )));
    }
    Ok(series
        .amps()
        .outer_iter()
        .zip(series.times())
        .enumerate()
        .map(|(i, (row, &t))| CsiFrame {
            timestamp: pcap::timestamp_from_micros(pcap::timestamp_to_micros(t)),
            source_mac: MacAddr([0xdc, 0xa6, 0x32, 0x00, 0x00, 0x01]),
            seq_no: (i % 65536) as u16,
            rssi: -45,
            frame_control: 0x08,
            core_ss: 0,
            // channel 42, 80 MHz, 5 GHz band
            chanspec: 0xe02a,
            chip: CHIP_BCM43455C0,
            csi: row
                .iter()
                .enumerate()
                .map(|(k, &a)| {
                    let c = Complex64::from_polar(a, subcarrier_phase(k));
                    Complex64::new(
                        ingest::quantize_i16(c.re) as f64,
                        ingest::quantize_i16(c.im) as f64,
                    )
                })
                .collect(),
        })
        .collect())
}

/// Writes a series as a CSI capture readable by [`ingest::parse_capture`].
pub fn write_capture<W: Write>(series: &CsiSeries, out: W) -> Result<W, SynthError> {
    let frames = series_to_frames(series)?;
    Ok(ingest::write_capture(&frames, out, LinkType::Ethernet)?)
}
