//! kANN search: per-tree candidate retrieval, lower-bound filtering, union
//! and exact re-ranking.

use rayon::prelude::*;

use crate::distance::l2;
use crate::error::{Error, Result};
use crate::index::HDIndex;
use crate::types::{FilterMode, Neighbor, ObjectId, QueryParams, ResultSet};

/// Best triangular lower bound on `d(q, o)`: `max_i |d(q,R_i) - d(o,R_i)|`.
pub fn triangular_lb<O: Copy + Into<f64>>(qd: &[f64], od: &[O]) -> Result<f64> {
    if qd.len() != od.len() {
        return Err(Error::DimensionMismatch {
            expected: qd.len(),
            got: od.len(),
        });
    }
    Ok(triangular(qd, od))
}

#[inline]
fn triangular<O: Copy + Into<f64>>(qd: &[f64], od: &[O]) -> f64 {
    qd.iter()
        .zip(od)
        .map(|(&a, &b)| (a - b.into()).abs())
        .fold(0.0, f64::max)
}

/// Best Ptolemaic lower bound on `d(q, o)` over all reference pairs:
/// `max_{i<j} |d(q,R_i) d(o,R_j) - d(q,R_j) d(o,R_i)| / d(R_i,R_j)`.
///
/// `pairwise` is the row-major `m x m` reference distance matrix. Pairs of
/// coincident references are skipped.
pub fn ptolemaic_lb<O: Copy + Into<f64>>(qd: &[f64], od: &[O], pairwise: &[f64]) -> Result<f64> {
    let m = qd.len();
    if od.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: od.len(),
        });
    }
    if m < 2 {
        return Err(Error::InvalidArgument(
            "Ptolemaic bound needs two reference objects".into(),
        ));
    }
    if pairwise.len() != m * m {
        return Err(Error::DimensionMismatch {
            expected: m * m,
            got: pairwise.len(),
        });
    }
    ptolemaic(qd, od, pairwise)
        .ok_or_else(|| Error::InvalidArgument("every reference pair is degenerate".into()))
}

#[inline]
fn ptolemaic<O: Copy + Into<f64>>(qd: &[f64], od: &[O], pairwise: &[f64]) -> Option<f64> {
    let m = qd.len();
    let mut best: Option<f64> = None;
    for i in 0..m {
        let oi: f64 = od[i].into();
        for j in i + 1..m {
            let rij = pairwise[i * m + j];
            if rij <= 0.0 {
                continue;
            }
            let oj: f64 = od[j].into();
            let v = (qd[i] * oj - qd[j] * oi).abs() / rij;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best
}

/// Per-query counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Entries taken from each tree's leaf walk (at most alpha).
    pub retrieved: Vec<usize>,
    /// Candidates the Ptolemaic stage evaluated per tree (0 in
    /// triangular-only mode, else at most beta).
    pub ptolemaic_evaluated: Vec<usize>,
    /// Survivors each tree contributed to the union (at most gamma).
    pub survivors: Vec<usize>,
    /// Size of the deduplicated candidate union (kappa).
    pub kappa: usize,
}

/// Keeps the `keep` smallest `(bound, id)` pairs, sorted.
fn keep_best(mut scored: Vec<(f64, ObjectId)>, keep: usize) -> Vec<(f64, ObjectId)> {
    let cmp = |a: &(f64, ObjectId), b: &(f64, ObjectId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if scored.len() > keep && keep > 0 {
        scored.select_nth_unstable_by(keep - 1, cmp);
    }
    scored.truncate(keep);
    scored.sort_by(cmp);
    scored
}

struct TreeOutcome {
    retrieved: usize,
    ptolemaic_evaluated: usize,
    survivors: Vec<ObjectId>,
}

impl HDIndex {
    /// Approximate k nearest neighbors of `q`.
    pub fn knn(&self, q: &[f32], params: &QueryParams, mode: FilterMode) -> Result<ResultSet> {
        self.knn_with_stats(q, params, mode).map(|(r, _)| r)
    }

    pub fn knn_with_stats(
        &self,
        q: &[f32],
        params: &QueryParams,
        mode: FilterMode,
    ) -> Result<(ResultSet, QueryStats)> {
        if q.len() != self.config.dims {
            return Err(Error::DimensionMismatch {
                expected: self.config.dims,
                got: q.len(),
            });
        }
        params.validate()?;
        if let Some(c) = q.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite query coordinate {c}"
            )));
        }

        let qd: Vec<f64> = self.refs.members.iter().map(|r| l2(q, r)).collect();
        let outcomes: Vec<TreeOutcome> = (0..self.trees.len())
            .into_par_iter()
            .map(|t| self.search_tree(t, q, &qd, params, mode))
            .collect::<Result<_>>()?;

        let mut union: Vec<ObjectId> = outcomes
            .iter()
            .flat_map(|o| o.survivors.iter().copied())
            .collect();
        union.sort_unstable();
        union.dedup();

        // ascending id order keeps descriptor reads sequential
        let mut scored = Vec::with_capacity(union.len());
        for &id in &union {
            let desc = self.descriptors.get(id)?;
            scored.push(Neighbor {
                id,
                dist: l2(q, &desc),
            });
        }
        let stats = QueryStats {
            retrieved: outcomes.iter().map(|o| o.retrieved).collect(),
            ptolemaic_evaluated: outcomes.iter().map(|o| o.ptolemaic_evaluated).collect(),
            survivors: outcomes.iter().map(|o| o.survivors.len()).collect(),
            kappa: union.len(),
        };
        Ok((ResultSet::from_unsorted(scored, params.k), stats))
    }

    fn search_tree(
        &self,
        t: usize,
        q: &[f32],
        qd: &[f64],
        params: &QueryParams,
        mode: FilterMode,
    ) -> Result<TreeOutcome> {
        let probe = self.key_for(t, q)?;
        let candidates = self.trees[t]
            .nearest_alpha(&self.store, &probe, params.alpha, |id| self.is_deleted(id))?;
        let retrieved = candidates.len();
        let scored: Vec<(f64, ObjectId)> = candidates
            .iter()
            .map(|e| (triangular(qd, &e.refdists), e.obj))
            .collect();

        let (survivors, ptolemaic_evaluated) = match mode {
            FilterMode::Triangular => (keep_best(scored, params.gamma), 0),
            FilterMode::TriangularPtolemaic => {
                let stage: Vec<ObjectId> = keep_best(scored, params.beta)
                    .into_iter()
                    .map(|(_, id)| id)
                    .collect();
                let by_id: std::collections::HashMap<ObjectId, &[f32]> = candidates
                    .iter()
                    .map(|e| (e.obj, e.refdists.as_slice()))
                    .collect();
                let rescored: Vec<(f64, ObjectId)> = stage
                    .iter()
                    .map(|id| {
                        let od = by_id[id];
                        let lb = ptolemaic(qd, od, &self.refs.pairwise)
                            .unwrap_or_else(|| triangular(qd, od));
                        (lb, *id)
                    })
                    .collect();
                let evaluated = rescored.len();
                (keep_best(rescored, params.gamma), evaluated)
            }
        };
        Ok(TreeOutcome {
            retrieved,
            ptolemaic_evaluated,
            survivors: survivors.into_iter().map(|(_, id)| id).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::euclidean;
    use proptest::prelude::*;

    const Q: [f32; 4] = [0.18, 0.87, 0.76, 0.23];
    const O1: [f32; 4] = [0.20, 0.74, 0.68, 0.73];
    const O3: [f32; 4] = [0.97, 0.64, 0.32, 0.93];
    const O7: [f32; 4] = [0.05, 0.43, 0.52, 0.82];

    fn d(a: &[f32], b: &[f32]) -> f64 {
        euclidean(a, b).unwrap()
    }

    #[test]
    fn identical_refdists_give_zero() {
        let qd = [1.0, 2.0, 3.0];
        let pw = [0.0, 1.0, 2.0, 1.0, 0.0, 1.5, 2.0, 1.5, 0.0];
        assert_eq!(triangular_lb(&qd, &qd).unwrap(), 0.0);
        assert_eq!(ptolemaic_lb(&qd, &qd, &pw).unwrap(), 0.0);
    }

    #[test]
    fn single_reference_triangular() {
        assert_eq!(triangular_lb(&[5.0], &[2.0f64]).unwrap(), 3.0);
        assert!(triangular_lb(&[5.0], &[2.0f64, 1.0]).is_err());
    }

    #[test]
    fn running_example_bounds() {
        let qd = [d(&Q, &O3), d(&Q, &O7)];
        let od = [d(&O1, &O3), d(&O1, &O7)];
        let r37 = d(&O3, &O7);
        let true_dist = d(&Q, &O1);

        let tri_expected = (qd[0] - od[0]).abs().max((qd[1] - od[1]).abs());
        let tri = triangular_lb(&qd, &od).unwrap();
        assert!((tri - tri_expected).abs() < 1e-12);
        assert!((tri - 0.395).abs() < 1e-3, "{tri}");
        assert!((true_dist - 0.523).abs() < 1e-3, "{true_dist}");
        assert!(tri <= true_dist);

        let pw = [0.0, r37, r37, 0.0];
        let pto_expected = (qd[0] * od[1] - qd[1] * od[0]).abs() / r37;
        let pto = ptolemaic_lb(&qd, &od, &pw).unwrap();
        assert!((pto - pto_expected).abs() < 1e-12);
        assert!((pto - 0.242).abs() < 1e-3, "{pto}");
        assert!(pto <= true_dist);
    }

    #[test]
    fn collinear_ptolemaic_is_exact() {
        // q=1, o=4, R_i=0, R_j=10 on a line
        let qd = [1.0, 9.0];
        let od = [4.0, 6.0];
        let pw = [0.0, 10.0, 10.0, 0.0];
        assert!((ptolemaic_lb(&qd, &od, &pw).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ptolemaic_degenerate_pairs() {
        let qd = [1.0, 2.0, 3.0];
        let od = [1.5, 2.5, 2.0];
        // R_0 and R_1 coincide: only pairs (0,2) and (1,2) count
        let pw = [0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0];
        let expected =
            ((1.0f64 * 2.0 - 3.0 * 1.5).abs() / 2.0).max((2.0f64 * 2.0 - 3.0 * 2.5).abs() / 2.0);
        assert!((ptolemaic_lb(&qd, &od, &pw).unwrap() - expected).abs() < 1e-12);
        assert!(ptolemaic_lb(&qd[..2], &od[..2], &[0.0; 4]).is_err());
        assert!(ptolemaic_lb(&[1.0], &[1.0f64], &[0.0]).is_err());
    }

    #[test]
    fn keep_best_breaks_ties_by_id() {
        let v = vec![(1.0, 9), (0.5, 4), (1.0, 2), (3.0, 1)];
        assert_eq!(keep_best(v, 3), vec![(0.5, 4), (1.0, 2), (1.0, 9)]);
    }

    fn point(dim: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-10.0f32..10.0, dim)
    }

    proptest! {
        #[test]
        fn bounds_never_exceed_distance(
            (q, o, refs) in (2usize..40).prop_flat_map(|dim| (point(dim), point(dim), prop::collection::vec(point(dim), 2..8)))
        ) {
            let m = refs.len();
            let qd: Vec<f64> = refs.iter().map(|r| l2(&q, r)).collect();
            let od: Vec<f64> = refs.iter().map(|r| l2(&o, r)).collect();
            let mut pw = vec![0.0; m * m];
            for i in 0..m { for j in 0..m { pw[i * m + j] = l2(&refs[i], &refs[j]); } }
            let truth = l2(&q, &o);
            let tol = 1e-9 * truth.max(1e-12);
            prop_assert!(triangular_lb(&qd, &od).unwrap() <= truth + tol);
            if let Ok(p) = ptolemaic_lb(&qd, &od, &pw) {
                prop_assert!(p <= truth + tol);
            }
        }
    }
}
