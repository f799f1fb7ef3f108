//! Image-level ranking from per-descriptor results by Borda count.
//!
//! Slot `l` (1-based) of a `k`-slot result adds `k + 1 - l` to the image
//! owning that descriptor.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{ObjectId, ResultSet};

pub type ImageId = u64;

/// Owning image of every descriptor.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DescriptorMap(pub HashMap<ObjectId, ImageId>);

impl DescriptorMap {
    pub fn owner(&self, id: ObjectId) -> Result<ImageId> {
        self.0
            .get(&id)
            .copied()
            .ok_or(Error::UnmappedDescriptor(id))
    }

    /// Text: one `descriptor image` pair per line, whitespace or comma
    /// separated, `#` comments allowed.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty());
            let parse = |s: Option<&str>| -> Result<u64> {
                s.and_then(|s| s.parse().ok()).ok_or_else(|| {
                    Error::format(format!("owners line {}: expected two integers", no + 1))
                })
            };
            let (d, i) = (parse(it.next())?, parse(it.next())?);
            if it.next().is_some() {
                return Err(Error::format(format!(
                    "owners line {}: extra columns",
                    no + 1
                )));
            }
            if map.insert(d, i).is_some() {
                return Err(Error::DuplicateId(d));
            }
        }
        Ok(Self(map))
    }

    /// Binary: consecutive little-endian `(descriptor u64, image u64)` pairs.
    pub fn parse_binary(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(16) {
            return Err(Error::format("owners file length is not a multiple of 16"));
        }
        let mut map = HashMap::with_capacity(bytes.len() / 16);
        for c in bytes.chunks_exact(16) {
            let d = u64::from_le_bytes(c[..8].try_into().unwrap());
            let i = u64::from_le_bytes(c[8..].try_into().unwrap());
            if map.insert(d, i).is_some() {
                return Err(Error::DuplicateId(d));
            }
        }
        Ok(Self(map))
    }

    /// Text if the file is valid UTF-8 that parses as such, binary otherwise.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        match std::str::from_utf8(&bytes).ok().map(Self::parse_text) {
            Some(Ok(m)) => Ok(m),
            _ => Self::parse_binary(&bytes),
        }
    }
}

/// Accumulated score per image.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BordaTable {
    pub scores: BTreeMap<ImageId, u64>,
}

impl BordaTable {
    /// Adds one result list; slots past `k` are ignored.
    pub fn add(&mut self, result: &ResultSet, owners: &DescriptorMap, k: usize) -> Result<()> {
        let mut gains = Vec::with_capacity(k.min(result.len()));
        for (l, n) in result.entries.iter().take(k).enumerate() {
            gains.push((owners.owner(n.id)?, (k - l) as u64));
        }
        for (img, g) in gains {
            *self.scores.entry(img).or_default() += g;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: BordaTable) {
        for (img, s) in other.scores {
            *self.scores.entry(img).or_default() += s;
        }
    }

    pub fn get(&self, image: ImageId) -> u64 {
        self.scores.get(&image).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.scores.values().sum()
    }
}

pub fn borda_scores(results: &[ResultSet], owners: &DescriptorMap, k: usize) -> Result<BordaTable> {
    let mut t = BordaTable::default();
    for r in results {
        t.add(r, owners, k)?;
    }
    Ok(t)
}

/// The `k` best images, highest score first, ties by lower image id.
pub fn top_images(table: &BordaTable, k: usize) -> Vec<(ImageId, u64)> {
    let mut all: Vec<(ImageId, u64)> = table.scores.iter().map(|(&i, &s)| (i, s)).collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
