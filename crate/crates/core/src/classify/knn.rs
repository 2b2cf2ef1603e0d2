//! Brute-force k-nearest-neighbour classification.
//!
//! Neighbours are the `k` smallest Euclidean distances, with distance ties
//! resolved towards the earlier training row. The vote goes to the most
//! frequent label; vote ties go to the smallest label.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::labels::ClassLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    rows: Array2<f64>,
    labels: Vec<ClassLabel>,
}

impl KnnModel {
    /// Stores the (already standardized) rows verbatim.
    pub fn train(
        rows: Array2<f64>,
        labels: Vec<ClassLabel>,
        k: usize,
    ) -> Result<Self, ClassifyError> {
        if rows.nrows() != labels.len() {
            return Err(ClassifyError::ShapeMismatch(format!(
                "{} rows for {} labels",
                rows.nrows(),
                labels.len()
            )));
        }
        if k == 0 || k > rows.nrows() {
            return Err(ClassifyError::BadK { k, n: rows.nrows() });
        }
        Ok(Self { k, rows, labels })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.ncols()
    }

    /// Indices of the `k` nearest training rows, nearest first.
    pub fn neighbors(&self, query: ArrayView1<f64>) -> Vec<usize> {
        let dist = (0..self.len())
            .map(|i| (self.distance(i, query), i))
            .collect();
        self.k_smallest(dist)
    }

    pub fn predict(&self, query: ArrayView1<f64>) -> ClassLabel {
        self.vote(&self.neighbors(query))
    }

    /// Same result as calling [`predict`](Self::predict) per row.
    ///
    /// Distances are first estimated through one matrix product as
    /// `|q|^2 + |x|^2 - 2 q.x`. Every training row whose estimate lies
    /// within twice the rounding bound of the k-th smallest estimate is then
    /// re-ranked with the exact squared difference, so the estimate only
    /// prunes rows that cannot be neighbours.
    pub fn predict_matrix(&self, queries: ArrayView2<f64>) -> Vec<ClassLabel> {
        use rayon::prelude::*;
        const CHUNK: usize = 128;
        let train_norms: Vec<f64> = self.rows.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
        let max_norm = train_norms.iter().copied().fold(0.0, f64::max);
        // forward error bound of a length-d dot product, with headroom
        let unit = 8.0 * (self.width() + 2) as f64 * f64::EPSILON;
        let starts: Vec<usize> = (0..queries.nrows()).step_by(CHUNK).collect();
        starts
            .into_par_iter()
            .flat_map_iter(|start| {
                let block =
                    queries.slice(ndarray::s![start..(start + CHUNK).min(queries.nrows()), ..]);
                let cross = block.dot(&self.rows.t());
                (0..block.nrows())
                    .map(|q| {
                        let query = block.row(q);
                        let qn = query.dot(&query);
                        let mut approx: Vec<f64> = cross
                            .row(q)
                            .iter()
                            .zip(&train_norms)
                            .map(|(&c, &xn)| qn + xn - 2.0 * c)
                            .collect();
                        let mut scratch = approx.clone();
                        let kth = *scratch.select_nth_unstable_by(self.k - 1, f64::total_cmp).1;
                        let cutoff = kth + 2.0 * unit * (qn + max_norm);
                        let candidates = approx
                            .drain(..)
                            .enumerate()
                            .filter(|&(_, a)| a <= cutoff)
                            .map(|(i, _)| (self.distance(i, query), i))
                            .collect();
                        self.vote(&self.k_smallest(candidates))
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn distance(&self, i: usize, query: ArrayView1<f64>) -> f64 {
        self.rows
            .row(i)
            .iter()
            .zip(query.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn k_smallest(&self, mut dist: Vec<(f64, usize)>) -> Vec<usize> {
        let by_dist_then_index =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_dist_then_index);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(by_dist_then_index);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    fn vote(&self, neighbors: &[usize]) -> ClassLabel {
        let mut votes: BTreeMap<ClassLabel, usize> = BTreeMap::new();
        for &i in neighbors {
            *votes.entry(self.labels[i]).or_default() += 1;
        }
        // BTreeMap iterates in ascending label order, and max_by keeps the
        // last maximum, so iterate in reverse to keep the smallest label.
        votes
            .into_iter()
            .rev()
            .max_by_key(|&(_, n)| n)
            .map(|(label, _)| label)
            .expect("k >= 1")
    }
}
