//! On-page node layouts.
//!
//! Leaf: `[flag=1][left u64][right u64]` then `leaf_order` fixed slots of
//! `key | obj u64 | m x f32`. A slot whose obj is `u64::MAX` is unused; all
//! used slots precede the unused ones.
//!
//! Internal: `[flag=0][count u16]` then `count` slots of `key | child u64`,
//! where each key is a lower bound of the child's keys.

use crate::error::{Error, Result};
use crate::hilbert::HilbertKey;
use crate::types::ObjectId;

use super::store::PageId;

pub(crate) const LEAF_FLAG: u8 = 1;
pub(crate) const INTERNAL_FLAG: u8 = 0;
pub(crate) const LEAF_HEADER: usize = 1 + 8 + 8;
pub(crate) const INTERNAL_HEADER: usize = 1 + 2;
const EMPTY_SLOT: u64 = u64::MAX;

/// One object as stored in a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafEntry {
    pub key: HilbertKey,
    pub obj: ObjectId,
    pub refdists: Vec<f32>,
}

impl LeafEntry {
    pub fn new(key: HilbertKey, obj: ObjectId, refdists: Vec<f32>) -> Self {
        Self { key, obj, refdists }
    }

    pub(crate) fn sort_key(&self) -> (&[u8], ObjectId) {
        (self.key.as_bytes(), self.obj)
    }
}

/// Byte geometry shared by every node of one tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLayout {
    pub page_size: usize,
    pub key_len: usize,
    pub m: usize,
    /// Leaf order (Omega).
    pub leaf_order: usize,
    /// Internal branching factor (theta).
    pub fanout: usize,
}

impl NodeLayout {
    pub fn new(page_size: usize, key_len: usize, m: usize) -> Result<Self> {
        let leaf_order = leaf_capacity(key_len, m, page_size)?;
        let fanout = page_size.saturating_sub(INTERNAL_HEADER) / (key_len + 8);
        if fanout < 2 {
            return Err(Error::PageTooSmall {
                page_size,
                what: "internal node with two children",
            });
        }
        Ok(Self {
            page_size,
            key_len,
            m,
            leaf_order,
            fanout,
        })
    }

    pub fn entry_len(&self) -> usize {
        self.key_len + 8 + 4 * self.m
    }

    /// Bytes of a leaf page that carry data (header plus all slots).
    pub fn leaf_bytes(&self) -> usize {
        LEAF_HEADER + self.entry_len() * self.leaf_order
    }
}

/// Largest number of `entry` slots a leaf can hold.
pub(crate) fn leaf_capacity(key_len: usize, m: usize, page_size: usize) -> Result<usize> {
    let entry = key_len + 4 * m + 8;
    let order = page_size.saturating_sub(LEAF_HEADER) / entry;
    if order == 0 {
        return Err(Error::PageTooSmall {
            page_size,
            what: "leaf entry",
        });
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Leaf {
    pub left: PageId,
    pub right: PageId,
    pub entries: Vec<LeafEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Internal {
    /// (lower-bound key, child page)
    pub slots: Vec<(Vec<u8>, PageId)>,
}

pub(crate) enum Node {
    Leaf(Leaf),
    Internal(Internal),
}

fn u64_at(buf: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

impl Leaf {
    pub fn encode(&self, layout: &NodeLayout) -> Vec<u8> {
        debug_assert!(self.entries.len() <= layout.leaf_order);
        let mut buf = vec![0u8; layout.leaf_bytes()];
        buf[0] = LEAF_FLAG;
        buf[1..9].copy_from_slice(&self.left.to_le_bytes());
        buf[9..17].copy_from_slice(&self.right.to_le_bytes());
        let elen = layout.entry_len();
        for slot in 0..layout.leaf_order {
            let at = LEAF_HEADER + slot * elen;
            let obj_at = at + layout.key_len;
            match self.entries.get(slot) {
                Some(e) => {
                    buf[at..obj_at].copy_from_slice(e.key.as_bytes());
                    buf[obj_at..obj_at + 8].copy_from_slice(&e.obj.to_le_bytes());
                    for (i, d) in e.refdists.iter().enumerate() {
                        let p = obj_at + 8 + 4 * i;
                        buf[p..p + 4].copy_from_slice(&d.to_le_bytes());
                    }
                }
                None => buf[obj_at..obj_at + 8].copy_from_slice(&EMPTY_SLOT.to_le_bytes()),
            }
        }
        buf
    }

    pub fn decode(buf: &[u8], layout: &NodeLayout) -> Result<Self> {
        if buf[0] != LEAF_FLAG {
            return Err(Error::format("expected a leaf page"));
        }
        let elen = layout.entry_len();
        let mut entries = Vec::new();
        for slot in 0..layout.leaf_order {
            let at = LEAF_HEADER + slot * elen;
            let obj_at = at + layout.key_len;
            let obj = u64_at(buf, obj_at);
            if obj == EMPTY_SLOT {
                break;
            }
            let refdists = (0..layout.m)
                .map(|i| {
                    let p = obj_at + 8 + 4 * i;
                    f32::from_le_bytes(buf[p..p + 4].try_into().unwrap())
                })
                .collect();
            entries.push(LeafEntry {
                key: HilbertKey::from_bytes(buf[at..obj_at].to_vec()),
                obj,
                refdists,
            });
        }
        Ok(Self {
            left: u64_at(buf, 1),
            right: u64_at(buf, 9),
            entries,
        })
    }
}

impl Internal {
    pub fn encode(&self, layout: &NodeLayout) -> Vec<u8> {
        debug_assert!(self.slots.len() <= layout.fanout);
        let slot_len = layout.key_len + 8;
        let mut buf = vec![0u8; INTERNAL_HEADER + slot_len * self.slots.len()];
        buf[0] = INTERNAL_FLAG;
        buf[1..3].copy_from_slice(&(self.slots.len() as u16).to_le_bytes());
        for (i, (key, child)) in self.slots.iter().enumerate() {
            let at = INTERNAL_HEADER + i * slot_len;
            buf[at..at + layout.key_len].copy_from_slice(key);
            buf[at + layout.key_len..at + slot_len].copy_from_slice(&child.to_le_bytes());
        }
        buf
    }

    pub fn decode(buf: &[u8], layout: &NodeLayout) -> Result<Self> {
        if buf[0] != INTERNAL_FLAG {
            return Err(Error::format("expected an internal page"));
        }
        let count = u16::from_le_bytes([buf[1], buf[2]]) as usize;
        if count == 0 || count > layout.fanout {
            return Err(Error::format(format!(
                "internal node with {count} children"
            )));
        }
        let slot_len = layout.key_len + 8;
        let slots = (0..count)
            .map(|i| {
                let at = INTERNAL_HEADER + i * slot_len;
                (
                    buf[at..at + layout.key_len].to_vec(),
                    u64_at(buf, at + layout.key_len),
                )
            })
            .collect();
        Ok(Self { slots })
    }
}

impl Node {
    pub fn decode(buf: &[u8], layout: &NodeLayout) -> Result<Self> {
        match buf[0] {
            LEAF_FLAG => Leaf::decode(buf, layout).map(Node::Leaf),
            INTERNAL_FLAG => Internal::decode(buf, layout).map(Node::Internal),
            f => Err(Error::format(format!("unknown node flag {f}"))),
        }
    }
}
