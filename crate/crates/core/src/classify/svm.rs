//! Soft-margin SVM trained by sequential minimal optimization, with
//! one-vs-one multiclass voting.
//!
//! The solver works on the dual
//!
//! ```text
//! min  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,  Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! picking the working pair by maximal violation for `i` and the
//! second-order gain for `j` (Fan, Chen & Lin, JMLR 2005). It stops once the
//! KKT gap `m(a) - M(a)` drops below `tol`.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ClassifyError;
use crate::labels::ClassLabel;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    /// `x . y`
    Linear,
    /// `(x . y + 1)^2`
    Poly2,
}

impl KernelSpec {
    pub fn eval(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        self.apply_to_dot(a.dot(&b))
    }

    fn apply_to_dot(self, dot: f64) -> f64 {
        match self {
            KernelSpec::Linear => dot,
            KernelSpec::Poly2 => {
                let v = dot + 1.0;
                v * v
            }
        }
    }

    /// Full Gram matrix of the rows of `x`.
    pub fn gram(self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut g = x.dot(&x.t());
        if self != KernelSpec::Linear {
            g.mapv_inplace(|d| self.apply_to_dot(d));
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoConfig {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SmoError {
    #[error("SMO did not converge within {iterations} iterations (gap {gap:.3e})")]
    NotConverged { iterations: usize, gap: f64 },
}

#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Final KKT gap `m(a) - M(a)`.
    pub gap: f64,
}

/// Solves the binary dual for the Gram matrix `k` and labels `y` in {-1, +1}.
pub fn solve_smo(k: &Array2<f64>, y: &[f64], cfg: &SmoConfig) -> Result<SmoSolution, SmoError> {
    let n = y.len();
    assert_eq!(k.nrows(), n);
    let c = cfg.c;
    let mut alpha = vec![0.0; n];
    // gradient of the dual objective: Q a - e
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|i| k[[i, i]]).collect();

    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut gap;
    loop {
        // i: maximal violating index in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 {
                !is_upper(alpha[t])
            } else {
                !is_lower(alpha[t])
            };
            if in_up && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        // j: best second-order gain in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            let k_i = k.row(i);
            for t in 0..n {
                let in_low = if y[t] > 0.0 {
                    !is_lower(alpha[t])
                } else {
                    !is_upper(alpha[t])
                };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let quad = diag[i] + diag[t] - 2.0 * k_i[t];
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        gap = gmax + gmax2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            break;
        };
        if gap < cfg.tol {
            break;
        }
        if iterations >= cfg.max_iter {
            return Err(SmoError::NotConverged { iterations, gap });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let k_ij = k[[i, j]];
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] - 2.0 * k_ij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * k_ij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (d_i, d_j) = (alpha[i] - old_i, alpha[j] - old_j);
        let (k_i, k_j) = (k.row(i), k.row(j));
        for t in 0..n {
            // Q_ti = y_t y_i K_ti
            grad[t] += y[t] * (y[i] * k_i[t] * d_i + y[j] * k_j[t] * d_j);
        }
    }

    Ok(SmoSolution {
        bias: -rho(&alpha, &grad, y, c),
        alpha,
        iterations,
        gap,
    })
}

fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        0.5 * (ub + lb)
    }
}

/// One binary machine of a one-vs-one ensemble. `positive` is the smaller
/// label of the pair; a decision value of exactly zero votes positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: ClassLabel,
    pub negative: ClassLabel,
    /// Indices into the ensemble's support-vector pool.
    pub support: Vec<usize>,
    pub alpha: Vec<f64>,
    /// +1 or -1 for each support vector.
    pub y: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

impl BinaryMachine {
    /// `sum_i a_i y_i K_i + b`, given kernel values against the whole pool.
    pub fn decision_from_pool(&self, pool_kernel: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(self.alpha.iter().zip(&self.y))
            .map(|(&s, (a, y))| a * y * pool_kernel[s])
            .sum::<f64>()
            + self.bias
    }

    pub fn sum_alpha_y(&self) -> f64 {
        self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum()
    }
}

/// One-vs-one ensemble with a shared pool of support vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvoSvm {
    pub kernel: KernelSpec,
    pub config: SmoConfig,
    pub classes: Vec<ClassLabel>,
    pub pool: Array2<f64>,
    pub machines: Vec<BinaryMachine>,
}

/// One solved binary problem: the class pair, the rows it used, the
/// solution and the +-1 targets.
type PairFit = (ClassLabel, ClassLabel, Vec<usize>, SmoSolution, Vec<f64>);

impl OvoSvm {
    pub fn train(
        x: ArrayView2<f64>,
        labels: &[ClassLabel],
        kernel: KernelSpec,
        config: SmoConfig,
    ) -> Result<Self, ClassifyError> {
        if x.nrows() != labels.len() {
            return Err(ClassifyError::ShapeMismatch(format!(
                "{} rows for {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if !(config.c > 0.0) || !(config.tol > 0.0) {
            return Err(ClassifyError::BadHyperparameter(
                "C and tol must be positive".into(),
            ));
        }
        let mut by_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        let classes: Vec<ClassLabel> = by_class.keys().copied().collect();
        if classes.len() < 2 {
            return Err(ClassifyError::TooFewClasses(classes.len()));
        }
        let pairs: Vec<(ClassLabel, ClassLabel)> = classes
            .iter()
            .enumerate()
            .flat_map(|(a, &pa)| classes[a + 1..].iter().map(move |&pb| (pa, pb)))
            .collect();

        let solved: Vec<PairFit> = pairs
            .par_iter()
            .map(|&(pos, neg)| {
                let mut idx = by_class[&pos].clone();
                idx.extend_from_slice(&by_class[&neg]);
                idx.sort_unstable();
                let y: Vec<f64> = idx
                    .iter()
                    .map(|&i| if labels[i] == pos { 1.0 } else { -1.0 })
                    .collect();
                let sub = x.select(Axis(0), &idx);
                let gram = kernel.gram(sub.view());
                let sol = solve_smo(&gram, &y, &config).map_err(|e| match e {
                    SmoError::NotConverged { iterations, .. } => {
                        ClassifyError::SolverNotConverged {
                            positive: pos,
                            negative: neg,
                            iterations,
                        }
                    }
                })?;
                Ok((pos, neg, idx, sol, y))
            })
            .collect::<Result<_, ClassifyError>>()?;

        // pool = training rows that are a support vector of any machine
        let mut in_pool = vec![false; x.nrows()];
        for (_, _, idx, sol, _) in &solved {
            for (&i, &a) in idx.iter().zip(&sol.alpha) {
                if a > 0.0 {
                    in_pool[i] = true;
                }
            }
        }
        let pool_rows: Vec<usize> = (0..x.nrows()).filter(|&i| in_pool[i]).collect();
        let mut pool_index = vec![usize::MAX; x.nrows()];
        for (p, &i) in pool_rows.iter().enumerate() {
            pool_index[i] = p;
        }

        let machines = solved
            .into_iter()
            .map(|(positive, negative, idx, sol, y)| {
                let mut m = BinaryMachine {
                    positive,
                    negative,
                    support: Vec::new(),
                    alpha: Vec::new(),
                    y: Vec::new(),
                    bias: sol.bias,
                    iterations: sol.iterations,
                };
                for ((&i, &a), &yi) in idx.iter().zip(&sol.alpha).zip(&y) {
                    if a > 0.0 {
                        m.support.push(pool_index[i]);
                        m.alpha.push(a);
                        m.y.push(yi);
                    }
                }
                m
            })
            .collect();

        Ok(Self {
            kernel,
            config,
            classes,
            pool: x.select(Axis(0), &pool_rows),
            machines,
        })
    }

    pub fn pool_kernel(&self, query: ArrayView1<f64>) -> Vec<f64> {
        self.pool
            .axis_iter(Axis(0))
            .map(|sv| self.kernel.eval(sv, query))
            .collect()
    }

    /// Decision value of every machine, in machine order.
    pub fn decision_values(&self, query: ArrayView1<f64>) -> Vec<f64> {
        let kv = self.pool_kernel(query);
        self.machines
            .iter()
            .map(|m| m.decision_from_pool(&kv))
            .collect()
    }

    pub fn predict(&self, query: ArrayView1<f64>) -> ClassLabel {
        let mut votes: BTreeMap<ClassLabel, usize> = self.classes.iter().map(|&c| (c, 0)).collect();
        for (m, f) in self.machines.iter().zip(self.decision_values(query)) {
            let winner = if f >= 0.0 { m.positive } else { m.negative };
            *votes.get_mut(&winner).expect("known class") += 1;
        }
        votes
            .into_iter()
            .rev()
            .max_by_key(|&(_, n)| n)
            .map(|(c, _)| c)
            .expect("at least two classes")
    }

    pub fn predict_matrix(&self, queries: ArrayView2<f64>) -> Vec<ClassLabel> {
        (0..queries.nrows())
            .into_par_iter()
            .map(|i| self.predict(queries.row(i)))
            .collect()
    }
}
