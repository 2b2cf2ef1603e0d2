//! Repeated-holdout evaluation: random splits, confusion matrices and the
//! resolution sweep.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{Algorithm, ClassifyError, Hyperparams, TrainedModel};
use crate::features::{Dataset, FeatureError};
use crate::labels::{bin_all, ClassLabel, Resolution};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("invalid evaluation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Rows shuffled independently.
    #[default]
    Random,
    /// Contiguous time blocks shuffled as units.
    Block,
}

/// Rows per block in [`SplitMode::Block`].
pub const SPLIT_BLOCK_ROWS: usize = 20;

/// Train and test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn train_size(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

fn check_split_args(n: usize, fraction: f64) -> Result<(), EvalError> {
    if n < 2 {
        return Err(EvalError::TooFewRows(n));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EvalError::BadConfig(format!(
            "train fraction {fraction} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Seeded row-wise random split; the train side gets `round(n * fraction)`
/// rows, clamped so neither side is empty.
pub fn split(n: usize, fraction: f64, seed: u64) -> Result<Split, EvalError> {
    check_split_args(n, fraction)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx.split_off(train_size(n, fraction));
    idx.sort_unstable();
    test.sort_unstable();
    Ok(Split { train: idx, test })
}

/// Seeded split over contiguous blocks of `block` rows. The train side takes
/// whole blocks until it holds at least `round(n * fraction)` rows.
pub fn block_split(n: usize, fraction: f64, block: usize, seed: u64) -> Result<Split, EvalError> {
    check_split_args(n, fraction)?;
    if block == 0 {
        return Err(EvalError::BadConfig("block size must be positive".into()));
    }
    let blocks = n.div_ceil(block);
    if blocks < 2 {
        return Err(EvalError::TooFewRows(n));
    }
    let mut order: Vec<usize> = (0..blocks).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let want = train_size(n, fraction);
    let mut in_train = vec![false; blocks];
    let mut taken = 0;
    for (i, &b) in order.iter().enumerate() {
        if taken >= want || i + 1 == blocks {
            break;
        }
        in_train[b] = true;
        taken += (b * block + block).min(n) - b * block;
    }
    let (train, test) = (0..n).partition(|&r| in_train[r / block]);
    Ok(Split { train, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub algorithm: Algorithm,
    pub resolution: Resolution,
    pub hyperparams: Hyperparams,
    pub rounds: usize,
    /// Round `r` splits with seed `seed + r`.
    pub seed: u64,
    pub train_fraction: f64,
    pub split_mode: SplitMode,
}

impl EvalConfig {
    pub fn new(algorithm: Algorithm, resolution: Resolution) -> Self {
        Self {
            algorithm,
            resolution,
            hyperparams: Hyperparams::default(),
            rounds: 10,
            seed: 42,
            train_fraction: 0.5,
            split_mode: SplitMode::Random,
        }
    }

    fn split(&self, n: usize, round: usize) -> Result<Split, EvalError> {
        let seed = self.seed.wrapping_add(round as u64);
        match self.split_mode {
            SplitMode::Random => split(n, self.train_fraction, seed),
            SplitMode::Block => block_split(n, self.train_fraction, SPLIT_BLOCK_ROWS, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub algorithm: Algorithm,
    pub resolution: Resolution,
    pub hyperparams: Hyperparams,
    pub rounds: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub split_mode: SplitMode,
    /// Row and column order of `confusion`.
    pub classes: Vec<ClassLabel>,
    /// `confusion[true][predicted]`, summed over rounds.
    pub confusion: Vec<Vec<u64>>,
    pub test_rows_per_round: Vec<usize>,
    pub accuracy_per_round: Vec<f64>,
    pub mean_accuracy: f64,
    /// trace / total of the pooled confusion matrix.
    pub pooled_accuracy: f64,
    pub accuracy_span: (f64, f64),
}

struct RoundOutcome {
    truth: Vec<ClassLabel>,
    predicted: Vec<ClassLabel>,
}

fn run_round(data: &Dataset, cfg: &EvalConfig, round: usize) -> Result<RoundOutcome, EvalError> {
    let s = cfg.split(data.len(), round)?;
    let train = data.subset(&s.train);
    let model = TrainedModel::fit(
        train.matrix().view(),
        &train.humidity(),
        cfg.algorithm,
        cfg.resolution,
        cfg.hyperparams,
    )?;
    let test = data.subset(&s.test);
    let predicted = model.predict_matrix(test.matrix().view())?;
    Ok(RoundOutcome {
        truth: bin_all(&test.humidity(), cfg.resolution),
        predicted,
    })
}

/// Runs `cfg.rounds` independent holdout rounds. Each round fits its own
/// standardizer and classifier on the train rows only.
pub fn evaluate(data: &Dataset, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    if cfg.rounds == 0 {
        return Err(EvalError::BadConfig("rounds must be at least 1".into()));
    }
    let outcomes = (0..cfg.rounds)
        .into_par_iter()
        .map(|r| run_round(data, cfg, r))
        .collect::<Result<Vec<_>, _>>()?;

    let mut classes: Vec<ClassLabel> = outcomes
        .iter()
        .flat_map(|o| o.truth.iter().chain(&o.predicted).copied())
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let pos = |c: ClassLabel| classes.binary_search(&c).expect("class collected above");

    let mut confusion = vec![vec![0u64; classes.len()]; classes.len()];
    let mut accuracy_per_round = Vec::with_capacity(outcomes.len());
    let mut test_rows_per_round = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        let mut hits = 0usize;
        for (&t, &p) in o.truth.iter().zip(&o.predicted) {
            confusion[pos(t)][pos(p)] += 1;
            hits += usize::from(t == p);
        }
        accuracy_per_round.push(hits as f64 / o.truth.len() as f64);
        test_rows_per_round.push(o.truth.len());
    }
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..classes.len()).map(|i| confusion[i][i]).sum();
    let mean_accuracy = accuracy_per_round.iter().sum::<f64>() / accuracy_per_round.len() as f64;
    let span = accuracy_per_round
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
            (lo.min(a), hi.max(a))
        });
    Ok(EvalReport {
        algorithm: cfg.algorithm,
        resolution: cfg.resolution,
        hyperparams: cfg.hyperparams,
        rounds: cfg.rounds,
        seed: cfg.seed,
        train_fraction: cfg.train_fraction,
        split_mode: cfg.split_mode,
        classes,
        confusion,
        test_rows_per_round,
        accuracy_per_round,
        mean_accuracy,
        pooled_accuracy: trace as f64 / total as f64,
        accuracy_span: span,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per round plus a `mean` and a `pooled` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "algorithm",
            "resolution",
            "seed",
            "round",
            "test_rows",
            "accuracy",
        ])?;
        let head = [
            self.algorithm.name().to_string(),
            self.resolution.get().to_string(),
        ];
        for (r, (&a, &n)) in self
            .accuracy_per_round
            .iter()
            .zip(&self.test_rows_per_round)
            .enumerate()
        {
            let seed = self.seed.wrapping_add(r as u64);
            w.write_record([
                &head[0],
                &head[1],
                &seed.to_string(),
                &r.to_string(),
                &n.to_string(),
                &a.to_string(),
            ])?;
        }
        let total: usize = self.test_rows_per_round.iter().sum();
        let seed = self.seed.to_string();
        w.write_record([
            &head[0],
            &head[1],
            &seed,
            "mean",
            &total.to_string(),
            &self.mean_accuracy.to_string(),
        ])?;
        w.write_record([
            &head[0],
            &head[1],
            &seed,
            "pooled",
            &total.to_string(),
            &self.pooled_accuracy.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    /// Square matrix with a header of predicted classes and one row per true
    /// class.
    pub fn write_confusion_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.classes.iter().map(|c| c.0.to_string()));
        w.write_record(&header)?;
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            let mut rec = vec![c.0.to_string()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub reports: Vec<EvalReport>,
}

impl SweepReport {
    pub fn get(&self, algorithm: Algorithm, resolution: u32) -> Option<&EvalReport> {
        self.reports
            .iter()
            .find(|r| r.algorithm == algorithm && r.resolution.get() == resolution)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long-format table, one row per (algorithm, resolution).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "algorithm",
            "resolution",
            "rounds",
            "seed",
            "mean_accuracy",
            "pooled_accuracy",
            "min_accuracy",
            "max_accuracy",
        ])?;
        for r in &self.reports {
            w.write_record([
                r.algorithm.name().to_string(),
                r.resolution.get().to_string(),
                r.rounds.to_string(),
                r.seed.to_string(),
                r.mean_accuracy.to_string(),
                r.pooled_accuracy.to_string(),
                r.accuracy_span.0.to_string(),
                r.accuracy_span.1.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates every algorithm at every resolution with the settings of
/// `base` (its algorithm and resolution are ignored).
pub fn resolution_sweep(
    data: &Dataset,
    algorithms: &[Algorithm],
    resolutions: &[Resolution],
    base: &EvalConfig,
) -> Result<SweepReport, EvalError> {
    let mut reports = Vec::with_capacity(algorithms.len() * resolutions.len());
    for &algorithm in algorithms {
        for &resolution in resolutions {
            let cfg = EvalConfig {
                algorithm,
                resolution,
                ..base.clone()
            };
            reports.push(evaluate(data, &cfg)?);
        }
    }
    Ok(SweepReport { reports })
}
