//! Index construction and maintenance.
//!
//! An [`HDIndex`] is `tau` RDB-trees, one per contiguous block of `eta`
//! dimensions, sharing one reference set and one page store, plus a
//! descriptor store that resolves object ids to full vectors.

use std::borrow::Cow;
use std::fs::File;
use std::ops::Range;
use std::os::unix::fs::FileExt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::l2;
use crate::error::{Error, Result};
use crate::hilbert::{HilbertCurve, HilbertKey};
use crate::rdbtree::{LeafEntry, NodeLayout, PageStore, RdbTree};
use crate::refsel::{self, ReferenceSet, SelectionMethod};
use crate::types::{Dataset, Domain, ObjectId, VectorRecord};

pub const DEFAULT_PAGE_SIZE: usize = 4096;
pub const DEFAULT_TAU: usize = 8;
pub const HIGH_DIM_TAU: usize = 16;
/// Dimensionality from which the larger tree count is recommended.
pub const HIGH_DIM_THRESHOLD: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    /// Dimensionality (nu).
    pub dims: usize,
    /// Number of partitions / trees (tau).
    pub tau: usize,
    /// Hilbert order in bits per dimension (omega).
    pub omega: u32,
    /// Number of reference objects.
    pub m: usize,
    /// Page size in bytes.
    pub page_size: usize,
    /// SSS spread fraction.
    pub f: f64,
    pub selection: SelectionMethod,
    pub seed: u64,
}

impl IndexConfig {
    /// Recommended settings: tau = 8 (16 from 500 dimensions), m = 10,
    /// 4 KB pages, SSS with f = 0.3.
    pub fn recommended(dims: usize, omega: u32) -> Self {
        Self {
            dims,
            tau: if dims >= HIGH_DIM_THRESHOLD {
                HIGH_DIM_TAU
            } else {
                DEFAULT_TAU
            },
            omega,
            m: refsel::DEFAULT_M,
            page_size: DEFAULT_PAGE_SIZE,
            f: refsel::DEFAULT_F,
            selection: SelectionMethod::Sss,
            seed: 0,
        }
    }

    /// Dimensions per partition (eta).
    pub fn eta(&self) -> usize {
        self.dims / self.tau.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        partition_dimensions(self.dims, self.tau)?;
        if self.omega == 0 || self.omega > crate::hilbert::MAX_ORDER {
            return Err(Error::config(format!(
                "Hilbert order {} out of range 1..=32",
                self.omega
            )));
        }
        if self.m < 2 {
            return Err(Error::config(format!(
                "need at least 2 reference objects, got {}",
                self.m
            )));
        }
        if self.selection != SelectionMethod::Random && !(self.f > 0.0 && self.f < 1.0) {
            return Err(Error::config(format!(
                "spread fraction f must be in (0, 1), got {}",
                self.f
            )));
        }
        self.node_layout().map(|_| ())
    }

    pub fn curve(&self) -> Result<HilbertCurve> {
        HilbertCurve::new(self.eta(), self.omega)
    }

    pub fn node_layout(&self) -> Result<NodeLayout> {
        NodeLayout::new(self.page_size, self.curve()?.key_len(), self.m)
    }
}

/// Contiguous, equal-width dimension blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioning {
    pub ranges: Vec<Range<usize>>,
}

impl Partitioning {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

/// Splits `dims` dimensions into `tau` contiguous blocks of `dims / tau`.
pub fn partition_dimensions(dims: usize, tau: usize) -> Result<Partitioning> {
    if tau == 0 || dims == 0 {
        return Err(Error::config(
            "dimensionality and tree count must be positive",
        ));
    }
    if !dims.is_multiple_of(tau) {
        let nearest = (1..=dims)
            .filter(|t| dims.is_multiple_of(*t))
            .min_by_key(|t| (t.abs_diff(tau), *t))
            .unwrap_or(1);
        return Err(Error::config(format!(
            "{tau} trees do not divide {dims} dimensions; nearest valid tree count is {nearest}"
        )));
    }
    let eta = dims / tau;
    Ok(Partitioning {
        ranges: (0..tau).map(|i| i * eta..(i + 1) * eta).collect(),
    })
}

/// Full vectors addressable by object id.
///
/// Slot `s` of the descriptor region holds one `dims x f32` vector at byte
/// offset `s * dims * 4`; `offsets[id]` is that byte offset, or `ABSENT`.
/// Slots below `disk_slots` are read from the backing file.
#[derive(Debug)]
pub(crate) struct DescriptorStore {
    pub dims: usize,
    pub offsets: Vec<u64>,
    pub disk: Option<(File, u64)>,
    pub disk_slots: u64,
    pub mem: Vec<f32>,
}

pub(crate) const ABSENT: u64 = u64::MAX;

impl DescriptorStore {
    fn new(dims: usize) -> Self {
        Self {
            dims,
            offsets: Vec::new(),
            disk: None,
            disk_slots: 0,
            mem: Vec::new(),
        }
    }

    fn slot_bytes(&self) -> u64 {
        self.dims as u64 * 4
    }

    pub fn slots(&self) -> u64 {
        self.disk_slots + (self.mem.len() / self.dims.max(1)) as u64
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.offsets.get(id as usize).is_some_and(|&o| o != ABSENT)
    }

    fn push(&mut self, id: ObjectId, coords: &[f32]) {
        let idx = id as usize;
        if self.offsets.len() <= idx {
            self.offsets.resize(idx + 1, ABSENT);
        }
        self.offsets[idx] = self.slots() * self.slot_bytes();
        self.mem.extend_from_slice(coords);
    }

    pub fn get(&self, id: ObjectId) -> Result<Cow<'_, [f32]>> {
        let off = *self
            .offsets
            .get(id as usize)
            .filter(|&&o| o != ABSENT)
            .ok_or(Error::UnknownId(id))?;
        let slot = off / self.slot_bytes().max(1);
        if slot < self.disk_slots {
            let (file, base) = self.disk.as_ref().expect("disk slots without a file");
            let mut buf = vec![0u8; self.slot_bytes() as usize];
            file.read_exact_at(&mut buf, base + off)?;
            Ok(Cow::Owned(
                buf.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ))
        } else {
            let start = ((slot - self.disk_slots) as usize) * self.dims;
            Ok(Cow::Borrowed(&self.mem[start..start + self.dims]))
        }
    }
}

/// The multi-tree index.
#[derive(Debug)]
pub struct HDIndex {
    pub(crate) config: IndexConfig,
    pub(crate) domain: Domain,
    pub(crate) partitioning: Partitioning,
    pub(crate) curve: HilbertCurve,
    pub(crate) refs: ReferenceSet,
    pub(crate) trees: Vec<RdbTree>,
    pub(crate) store: PageStore,
    pub(crate) descriptors: DescriptorStore,
    /// Bit per object id; set means deleted.
    pub(crate) tombstones: Vec<bool>,
    pub(crate) live: u64,
}

impl HDIndex {
    /// Builds the index, selecting reference objects per `config`.
    pub fn build(data: &Dataset, config: IndexConfig) -> Result<Self> {
        config.validate()?;
        check_dims(&config, data)?;
        let refs = refsel::select(data, config.selection, config.m, config.f, config.seed)?;
        Self::build_with_references(data, config, refs)
    }

    /// Builds the index around a caller-supplied reference set, which may
    /// contain points outside the dataset.
    pub fn build_with_references(
        data: &Dataset,
        config: IndexConfig,
        refs: ReferenceSet,
    ) -> Result<Self> {
        config.validate()?;
        check_dims(&config, data)?;
        if refs.len() != config.m {
            return Err(Error::config(format!(
                "reference set has {} members, configuration expects {}",
                refs.len(),
                config.m
            )));
        }
        if refs.members.iter().any(|r| r.len() != config.dims) {
            return Err(Error::DimensionMismatch {
                expected: config.dims,
                got: refs
                    .members
                    .iter()
                    .map(Vec::len)
                    .find(|&l| l != config.dims)
                    .unwrap_or(0),
            });
        }
        let partitioning = partition_dimensions(config.dims, config.tau)?;
        let curve = config.curve()?;
        let layout = config.node_layout()?;
        let domain = data.domain();

        let rdist: Vec<Vec<f32>> = data
            .records()
            .par_iter()
            .map(|r| {
                refs.members
                    .iter()
                    .map(|m| l2(&r.coords, m) as f32)
                    .collect()
            })
            .collect();

        let per_tree: Vec<Vec<LeafEntry>> = partitioning
            .ranges
            .par_iter()
            .map(|range| {
                let mut entries = data
                    .records()
                    .iter()
                    .zip(&rdist)
                    .map(|(r, d)| {
                        let key = curve.key_of(&r.coords[range.clone()], domain)?;
                        Ok(LeafEntry::new(key, r.id, d.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                entries.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
                Ok(entries)
            })
            .collect::<Result<_>>()?;

        let mut store = PageStore::in_memory(config.page_size)?;
        let trees = per_tree
            .iter()
            .map(|entries| RdbTree::bulk_build(layout, entries, &mut store))
            .collect::<Result<Vec<_>>>()?;

        let mut descriptors = DescriptorStore::new(config.dims);
        for r in data.records() {
            descriptors.push(r.id, &r.coords);
        }
        let max_id = data.records().iter().map(|r| r.id + 1).max().unwrap_or(0);
        Ok(Self {
            config,
            domain,
            partitioning,
            curve,
            refs,
            trees,
            store,
            descriptors,
            tombstones: vec![false; max_id as usize],
            live: data.len() as u64,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn partitioning(&self) -> &Partitioning {
        &self.partitioning
    }

    pub fn references(&self) -> &ReferenceSet {
        &self.refs
    }

    pub fn trees(&self) -> &[RdbTree] {
        &self.trees
    }

    pub fn page_store(&self) -> &PageStore {
        &self.store
    }

    /// Number of objects that are neither deleted nor absent.
    pub fn live_count(&self) -> u64 {
        self.live
    }

    pub fn is_deleted(&self, id: ObjectId) -> bool {
        self.tombstones.get(id as usize).copied().unwrap_or(false)
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.descriptors.contains(id) && !self.is_deleted(id)
    }

    /// Full descriptor of a stored object.
    pub fn descriptor(&self, id: ObjectId) -> Result<Cow<'_, [f32]>> {
        self.descriptors.get(id)
    }

    /// Hilbert key of `coords` projected onto partition `tree`.
    pub fn key_for(&self, tree: usize, coords: &[f32]) -> Result<HilbertKey> {
        let range = self.partitioning.ranges[tree].clone();
        self.curve.key_of(&coords[range], self.domain)
    }

    /// Adds one object: reference distances plus one insert per tree. The
    /// reference set is left unchanged.
    pub fn insert_object(&mut self, record: VectorRecord) -> Result<()> {
        if record.coords.len() != self.config.dims {
            return Err(Error::DimensionMismatch {
                expected: self.config.dims,
                got: record.coords.len(),
            });
        }
        if let Some(c) = record.coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite coordinate {c}")));
        }
        if self.descriptors.contains(record.id) || record.id == u64::MAX {
            return Err(Error::DuplicateId(record.id));
        }
        let refdists: Vec<f32> = self
            .refs
            .members
            .iter()
            .map(|m| l2(&record.coords, m) as f32)
            .collect();
        for t in 0..self.trees.len() {
            let key = self.key_for(t, &record.coords)?;
            let entry = LeafEntry::new(key, record.id, refdists.clone());
            self.trees[t].insert(&mut self.store, entry)?;
        }
        self.descriptors.push(record.id, &record.coords);
        let idx = record.id as usize;
        if self.tombstones.len() <= idx {
            self.tombstones.resize(idx + 1, false);
        }
        self.live += 1;
        Ok(())
    }

    /// Marks an object deleted; it is never returned again.
    pub fn delete_object(&mut self, id: ObjectId) -> Result<()> {
        if !self.contains(id) {
            return Err(Error::UnknownId(id));
        }
        self.tombstones[id as usize] = true;
        self.live -= 1;
        Ok(())
    }
}

fn check_dims(config: &IndexConfig, data: &Dataset) -> Result<()> {
    if data.dim() != config.dims {
        return Err(Error::DimensionMismatch {
            expected: config.dims,
            got: data.dim(),
        });
    }
    Ok(())
}
