//! Exact kNN oracle and answer-quality metrics: approximation ratio,
//! AP@k and MAP@k.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::l2;
use crate::error::{Error, Result};
use crate::types::{Dataset, Neighbor, ObjectId, ResultSet};

/// Exact k nearest neighbors by full scan; ties broken by id. With
/// `k > n` every record is returned, ranked.
pub fn exact_knn(data: &Dataset, q: &[f32], k: usize) -> Result<ResultSet> {
    if q.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: q.len(),
        });
    }
    let all = data
        .records()
        .iter()
        .map(|r| Neighbor {
            id: r.id,
            dist: l2(q, &r.coords),
        })
        .collect();
    Ok(ResultSet::from_unsorted(all, k))
}

/// [`exact_knn`] for many queries, in parallel.
pub fn exact_knn_batch(data: &Dataset, queries: &[Vec<f32>], k: usize) -> Result<Vec<ResultSet>> {
    queries.par_iter().map(|q| exact_knn(data, q, k)).collect()
}

/// Mean of per-rank distance ratios `d(q,o'_i) / d(q,o_i)`.
///
/// Ranks where the exact distance is zero count as 1 when the returned
/// distance is zero too and are skipped otherwise. Only ranks present in
/// both lists are compared. Returns 1 when nothing is comparable.
pub fn approximation_ratio(approx: &ResultSet, exact: &ResultSet) -> f64 {
    let mut sum = 0.0;
    let mut terms = 0usize;
    for (a, e) in approx.entries.iter().zip(&exact.entries) {
        if e.dist == 0.0 {
            if a.dist == 0.0 {
                sum += 1.0;
                terms += 1;
            }
            continue;
        }
        sum += a.dist / e.dist;
        terms += 1;
    }
    if terms == 0 {
        1.0
    } else {
        sum / terms as f64
    }
}

/// AP@k: `(1/k) * sum_i I(o'_i in T_k) * (j / i)`, where `j` counts the
/// relevant items among the first `i` returned. Relevance is membership in
/// the first `k` exact ids; returned slots beyond the list length count as
/// irrelevant. If fewer than `k` exact answers exist, that count is the
/// normalizer.
pub fn average_precision(approx: &[ObjectId], exact: &[ObjectId], k: usize) -> f64 {
    let truth: HashSet<ObjectId> = exact.iter().take(k).copied().collect();
    let norm = k.min(truth.len());
    if norm == 0 {
        return if approx.is_empty() { 1.0 } else { 0.0 };
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in approx.iter().take(k).enumerate() {
        if truth.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / norm as f64
}

/// MAP@k: arithmetic mean of per-query AP@k values.
pub fn mean_average_precision(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::InvalidArgument("MAP over zero queries".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub ap: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub queries: Vec<QueryEval>,
    pub map: f64,
    pub mean_ratio: f64,
}

impl EvalReport {
    pub fn query_count(&self) -> usize {
        self.queries.len()
    }
}

/// Scores approximate answers against ground truth, query by query.
pub fn evaluate(approx: &[ResultSet], exact: &[ResultSet], k: usize) -> Result<EvalReport> {
    if approx.len() != exact.len() {
        return Err(Error::InvalidArgument(format!(
            "{} answer lists but {} ground-truth lists",
            approx.len(),
            exact.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let queries: Vec<QueryEval> = approx
        .iter()
        .zip(exact)
        .map(|(a, e)| {
            let a_k = ResultSet {
                entries: a.entries.iter().take(k).copied().collect(),
            };
            let e_k = ResultSet {
                entries: e.entries.iter().take(k).copied().collect(),
            };
            QueryEval {
                ap: average_precision(&a_k.ids(), &e_k.ids(), k),
                ratio: approximation_ratio(&a_k, &e_k),
            }
        })
        .collect();
    let aps: Vec<f64> = queries.iter().map(|q| q.ap).collect();
    let map = mean_average_precision(&aps)?;
    let mean_ratio = queries.iter().map(|q| q.ratio).sum::<f64>() / queries.len() as f64;
    Ok(EvalReport {
        k,
        queries,
        map,
        mean_ratio,
    })
}

/// A single-query case whose answers are all close in distance yet all
/// wrong: every exact neighbor sits at distance 1, every returned object at
/// `1 + slack`. The ratio is `1 + slack` while MAP is 0.
pub fn ratio_map_dissociation(k: usize, slack: f64) -> (ResultSet, ResultSet) {
    let exact = (0..k as u64).map(|id| Neighbor { id, dist: 1.0 }).collect();
    let approx = (0..k as u64)
        .map(|i| Neighbor {
            id: k as u64 + i,
            dist: 1.0 + slack,
        })
        .collect();
    (ResultSet { entries: approx }, ResultSet { entries: exact })
}
