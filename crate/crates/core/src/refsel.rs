//! Reference object selection: random, sparse spatial selection (SSS) and
//! its dynamic variant.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::l2;
use crate::error::{Error, Result};
use crate::types::{Dataset, ObjectId};

/// Hop cap for the farthest-neighbor d_max heuristic.
pub const DMAX_MAX_HOPS: usize = 20;
/// Size of the fixed object-pair sample SSS-Dyn scores reference sets on.
pub const SSS_DYN_PAIR_BUDGET: usize = 1000;
/// Default spread fraction.
pub const DEFAULT_F: f64 = 0.3;
/// Default number of reference objects.
pub const DEFAULT_M: usize = 10;

const RELAX_FACTOR: f64 = 0.9;
const MIN_F: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    Random,
    #[default]
    Sss,
    SssDyn,
}

/// The chosen reference objects together with every distance the query
/// filters need.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub ids: Vec<ObjectId>,
    pub members: Vec<Vec<f32>>,
    /// Row-major `m x m` matrix of member distances.
    pub pairwise: Vec<f64>,
    pub dmax_est: f64,
    /// Spread fraction actually satisfied (after any relaxation).
    pub f: f64,
}

impl ReferenceSet {
    /// Assembles a set from explicit members and fills the distance matrix.
    pub fn from_members(ids: Vec<ObjectId>, members: Vec<Vec<f32>>, dmax_est: f64, f: f64) -> Self {
        let m = members.len();
        let mut pairwise = vec![0.0; m * m];
        for i in 0..m {
            for j in i + 1..m {
                let d = l2(&members[i], &members[j]);
                pairwise[i * m + j] = d;
                pairwise[j * m + i] = d;
            }
        }
        Self {
            ids,
            members,
            pairwise,
            dmax_est,
            f,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.pairwise[i * self.len() + j]
    }

    /// Distances from `coords` to every member.
    pub fn distances_to(&self, coords: &[f32]) -> Result<Vec<f64>> {
        self.members
            .iter()
            .map(|r| crate::distance::euclidean(r, coords))
            .collect()
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Farthest-neighbor hopping estimate of the largest pairwise distance.
///
/// Starts at a random object, jumps to its farthest neighbor and repeats
/// until the distance stops growing or `max_iters` hops were made.
pub fn estimate_dmax(data: &Dataset, max_iters: usize, seed: u64) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall { needed: 2, have: n });
    }
    let mut at = rng(seed).gen_range(0..n);
    let mut best = 0.0f64;
    for _ in 0..max_iters.max(1) {
        let origin = data.coords(at);
        let (far, d) = (0..n)
            .map(|j| (j, l2(origin, data.coords(j))))
            .fold((at, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if d <= best {
            break;
        }
        best = d;
        at = far;
    }
    Ok(best)
}

fn check_sizes(data: &Dataset, m: usize, f: f64) -> Result<()> {
    if m < 2 {
        return Err(Error::config(format!(
            "need at least 2 reference objects, got {m}"
        )));
    }
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::config(format!(
            "spread fraction f must be in (0, 1), got {f}"
        )));
    }
    if data.len() < m {
        return Err(Error::DatasetTooSmall {
            needed: m,
            have: data.len(),
        });
    }
    Ok(())
}

fn far_from_all(data: &Dataset, chosen: &[usize], candidate: usize, threshold: f64) -> bool {
    let c = data.coords(candidate);
    chosen.iter().all(|&r| l2(data.coords(r), c) > threshold)
}

/// Scans for members until `m` are chosen, relaxing `f` by 0.9 per failed
/// pass. Returns the chosen positions, the effective `f` and the position
/// after which the final pass stopped.
fn sss_scan(
    data: &Dataset,
    m: usize,
    f: f64,
    dmax: f64,
    seed: u64,
) -> Result<(Vec<usize>, f64, usize)> {
    let n = data.len();
    let mut chosen = vec![rng(seed).gen_range(0..n)];
    let mut f = f;
    loop {
        let threshold = f * dmax;
        for j in 0..n {
            if chosen.contains(&j) {
                continue;
            }
            if far_from_all(data, &chosen, j, threshold) {
                chosen.push(j);
                if chosen.len() == m {
                    return Ok((chosen, f, j + 1));
                }
            }
        }
        f *= RELAX_FACTOR;
        if f < MIN_F {
            return Err(Error::config(format!(
                "dataset has fewer than {m} mutually distinct objects"
            )));
        }
    }
}

fn to_set(data: &Dataset, positions: &[usize], dmax: f64, f: f64) -> ReferenceSet {
    let ids = positions.iter().map(|&p| data.records()[p].id).collect();
    let members = positions.iter().map(|&p| data.coords(p).to_vec()).collect();
    ReferenceSet::from_members(ids, members, dmax, f)
}

/// Sparse spatial selection: a random first member, then scan order,
/// admitting objects farther than `f * dmax` from every member.
pub fn select_sss(data: &Dataset, m: usize, f: f64, dmax: f64, seed: u64) -> Result<ReferenceSet> {
    check_sizes(data, m, f)?;
    let (chosen, f, _) = sss_scan(data, m, f, dmax, seed)?;
    Ok(to_set(data, &chosen, dmax, f))
}

/// Uniformly sampled object pairs `(i, j)`, `i != j`, used to score
/// reference sets.
pub fn sample_pairs(n: usize, budget: usize, seed: u64) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let mut r = rng(seed ^ 0x5eed_9a17);
    (0..budget)
        .map(|_| {
            let a = r.gen_range(0..n);
            let mut b = r.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        })
        .collect()
}

/// Distances from each sampled pair endpoint to one reference candidate.
struct PairProfile {
    to_a: Vec<f64>,
    to_b: Vec<f64>,
}

impl PairProfile {
    fn new(data: &Dataset, pairs: &[(usize, usize)], reference: usize) -> Self {
        let r = data.coords(reference);
        Self {
            to_a: pairs.iter().map(|&(a, _)| l2(data.coords(a), r)).collect(),
            to_b: pairs.iter().map(|&(_, b)| l2(data.coords(b), r)).collect(),
        }
    }

    fn bound(&self, p: usize) -> f64 {
        (self.to_a[p] - self.to_b[p]).abs()
    }
}

/// Sum over sampled pairs of the best triangular lower bound any of the
/// given profiles achieves.
fn contribution(profiles: &[&PairProfile], pairs: usize) -> f64 {
    (0..pairs)
        .map(|p| profiles.iter().map(|pr| pr.bound(p)).fold(0.0, f64::max))
        .sum()
}

/// SSS-Dyn: after the first `m` members, every further object that passes
/// the spread test may replace the member whose loss hurts the sampled-pair
/// triangular bound sum the least, if the swap raises that sum.
pub fn select_sss_dyn(
    data: &Dataset,
    m: usize,
    f: f64,
    dmax: f64,
    pair_budget: usize,
    seed: u64,
) -> Result<ReferenceSet> {
    check_sizes(data, m, f)?;
    if pair_budget == 0 {
        return Err(Error::config("SSS-Dyn needs a positive pair budget"));
    }
    let (mut chosen, f, resume) = sss_scan(data, m, f, dmax, seed)?;
    let pairs = sample_pairs(data.len(), pair_budget, seed);
    let mut profiles: Vec<PairProfile> = chosen
        .iter()
        .map(|&r| PairProfile::new(data, &pairs, r))
        .collect();
    let threshold = f * dmax;

    for cand in resume..data.len() {
        if chosen.contains(&cand) || !far_from_all(data, &chosen, cand, threshold) {
            continue;
        }
        let current = contribution(&profiles.iter().collect::<Vec<_>>(), pairs.len());
        // victim: the member whose removal keeps the most contribution
        let (victim, _) = (0..m)
            .map(|v| {
                let rest: Vec<&PairProfile> = profiles
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != v)
                    .map(|(_, p)| p)
                    .collect();
                (v, contribution(&rest, pairs.len()))
            })
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
        let newcomer = PairProfile::new(data, &pairs, cand);
        let swapped: Vec<&PairProfile> = profiles
            .iter()
            .enumerate()
            .map(|(i, p)| if i == victim { &newcomer } else { p })
            .collect();
        if contribution(&swapped, pairs.len()) > current {
            chosen[victim] = cand;
            profiles[victim] = newcomer;
        }
    }
    Ok(to_set(data, &chosen, dmax, f))
}

/// `m` distinct objects sampled uniformly.
pub fn select_random(data: &Dataset, m: usize, seed: u64) -> Result<ReferenceSet> {
    if m > data.len() {
        return Err(Error::DatasetTooSmall {
            needed: m,
            have: data.len(),
        });
    }
    let chosen = index::sample(&mut rng(seed), data.len(), m).into_vec();
    Ok(to_set(data, &chosen, 0.0, 0.0))
}

/// Dispatches on `method`, estimating d_max first when the method needs it.
pub fn select(
    data: &Dataset,
    method: SelectionMethod,
    m: usize,
    f: f64,
    seed: u64,
) -> Result<ReferenceSet> {
    match method {
        SelectionMethod::Random => select_random(data, m, seed),
        SelectionMethod::Sss => {
            let dmax = estimate_dmax(data, DMAX_MAX_HOPS, seed)?;
            select_sss(data, m, f, dmax, seed)
        }
        SelectionMethod::SssDyn => {
            let dmax = estimate_dmax(data, DMAX_MAX_HOPS, seed)?;
            select_sss_dyn(data, m, f, dmax, SSS_DYN_PAIR_BUDGET, seed)
        }
    }
}
