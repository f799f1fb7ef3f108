//! Domain types shared across the index, query and evaluation code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Object identifier. Ids are assigned in file order at ingestion.
pub type ObjectId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub id: ObjectId,
    pub coords: Vec<f32>,
}

impl VectorRecord {
    pub fn new(id: ObjectId, coords: Vec<f32>) -> Self {
        Self { id, coords }
    }
}

/// Closed value range `[lo, hi]` that every coordinate of a dataset lies in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::config(format!(
                "degenerate value domain [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// An in-memory set of equal-dimensional vectors.
#[derive(Debug, Clone)]
pub struct Dataset {
    dim: usize,
    records: Vec<VectorRecord>,
    domain: Domain,
}

impl Dataset {
    /// Builds a dataset from rows, assigning ids `0..n` in row order and
    /// scanning the value domain.
    pub fn from_rows(dim: usize, rows: Vec<Vec<f32>>) -> Result<Self> {
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(i, coords)| VectorRecord::new(i as ObjectId, coords))
            .collect();
        Self::from_records(dim, records)
    }

    /// Builds a dataset from records with caller-assigned ids; the domain is
    /// the scanned min/max over all coordinates (widened by one unit if it is
    /// a single value).
    pub fn from_records(dim: usize, records: Vec<VectorRecord>) -> Result<Self> {
        validate_records(dim, &records)?;
        let domain = scan_domain(&records);
        Ok(Self {
            dim,
            records,
            domain,
        })
    }

    /// Builds a dataset with an explicitly supplied value domain.
    pub fn with_domain(dim: usize, records: Vec<VectorRecord>, domain: Domain) -> Result<Self> {
        validate_records(dim, &records)?;
        if let Some(r) = records
            .iter()
            .find(|r| r.coords.iter().any(|&c| !domain.contains(c as f64)))
        {
            return Err(Error::Domain(format!(
                "record {} has coordinates outside [{}, {}]",
                r.id, domain.lo, domain.hi
            )));
        }
        Ok(Self {
            dim,
            records,
            domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn records(&self) -> &[VectorRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<VectorRecord> {
        self.records
    }

    pub fn get(&self, index: usize) -> Option<&VectorRecord> {
        self.records.get(index)
    }

    /// Coordinates of the record at position `index` (not by id).
    pub fn coords(&self, index: usize) -> &[f32] {
        &self.records[index].coords
    }
}

fn validate_records(dim: usize, records: &[VectorRecord]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(records.len());
    for r in records {
        if r.coords.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.coords.len(),
            });
        }
        if let Some(c) = r.coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::format(format!(
                "record {} has non-finite coordinate {c}",
                r.id
            )));
        }
        if !seen.insert(r.id) {
            return Err(Error::DuplicateId(r.id));
        }
    }
    Ok(())
}

fn scan_domain(records: &[VectorRecord]) -> Domain {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in records.iter().flat_map(|r| r.coords.iter()) {
        lo = lo.min(*c as f64);
        hi = hi.max(*c as f64);
    }
    if !lo.is_finite() {
        return Domain { lo: 0.0, hi: 1.0 };
    }
    if lo >= hi {
        hi = lo + 1.0;
    }
    Domain { lo, hi }
}

/// Which lower-bound filters a query applies after candidate retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Triangular bound only; the triangular stage keeps `gamma` candidates.
    #[default]
    Triangular,
    /// Triangular bound to `beta`, then Ptolemaic bound to `gamma`.
    TriangularPtolemaic,
}

/// Candidate counts for a kANN query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryParams {
    pub alpha: usize,
    pub beta: usize,
    pub gamma: usize,
    pub k: usize,
}

impl QueryParams {
    pub const DEFAULT_ALPHA: usize = 4096;
    pub const LARGE_ALPHA: usize = 8192;
    pub const DEFAULT_GAMMA: usize = 1024;
    pub const LARGE_DATASET: usize = 10_000_000;

    /// Recommended defaults for a dataset of `n` objects: alpha = 4096 (8192
    /// from ten million objects up), gamma = 1024 and beta = alpha.
    pub fn recommended(n: usize, k: usize) -> Self {
        let alpha = if n >= Self::LARGE_DATASET {
            Self::LARGE_ALPHA
        } else {
            Self::DEFAULT_ALPHA
        };
        Self {
            alpha,
            beta: alpha,
            gamma: Self::DEFAULT_GAMMA.max(k),
            k,
        }
    }

    /// All three stages keep every candidate.
    pub fn exhaustive(n: usize, k: usize) -> Self {
        let n = n.max(k).max(1);
        Self {
            alpha: n,
            beta: n,
            gamma: n,
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 1 <= self.k
            && self.k <= self.gamma
            && self.gamma <= self.beta
            && self.beta <= self.alpha;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "query parameters must satisfy 1 <= k <= gamma <= beta <= alpha, got k={} gamma={} beta={} alpha={}",
                self.k, self.gamma, self.beta, self.alpha
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: ObjectId,
    pub dist: f64,
}

/// Ordered kNN answer: ascending by distance, ties by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub entries: Vec<Neighbor>,
}

impl ResultSet {
    /// Sorts `neighbors` by (distance, id) and keeps the first `k`.
    pub fn from_unsorted(mut neighbors: Vec<Neighbor>, k: usize) -> Self {
        neighbors.sort_by(cmp_neighbor);
        neighbors.truncate(k);
        Self { entries: neighbors }
    }

    pub fn ids(&self) -> Vec<ObjectId> {
        self.entries.iter().map(|n| n.id).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.entries.iter().map(|n| n.dist).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub(crate) fn cmp_neighbor(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id))
}
