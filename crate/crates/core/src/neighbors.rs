//! Binary neighbor-list files for ground truth and query results.
//!
//! ```text
//! magic "HDNN" | version u32 | checksum [32] | k u32 | queries u32
//! per query: count u32, then count x (id u64, distance f64)
//! ```
//!
//! All little-endian. For ground truth the checksum is that of the indexed
//! dataset; result files carry the checksum of the query set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Neighbor, ResultSet};

const MAGIC: &[u8; 4] = b"HDNN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborFile {
    pub checksum: [u8; 32],
    pub k: usize,
    pub lists: Vec<ResultSet>,
}

impl NeighborFile {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let k = u32::try_from(self.k).map_err(|_| Error::InvalidArgument("k too large".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.checksum)?;
        w.write_all(&k.to_le_bytes())?;
        w.write_all(&(self.lists.len() as u32).to_le_bytes())?;
        for list in &self.lists {
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for n in &list.entries {
                w.write_all(&n.id.to_le_bytes())?;
                w.write_all(&n.dist.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut u32_buf)
                .map_err(|_| Error::format("neighbor file truncated"))?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::format("neighbor file truncated"))?;
        if &magic != MAGIC {
            return Err(Error::format("not a neighbor file (bad magic)"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::format(format!(
                "unsupported neighbor file version {version}"
            )));
        }
        let mut checksum = [0u8; 32];
        r.read_exact(&mut checksum)
            .map_err(|_| Error::format("neighbor file truncated"))?;
        let k = read_u32(&mut r)? as usize;
        let nq = read_u32(&mut r)?;
        let mut lists = Vec::with_capacity(nq.min(1 << 20) as usize);
        let mut pair = [0u8; 16];
        for _ in 0..nq {
            let count = read_u32(&mut r)?;
            if count as usize > k {
                return Err(Error::format(format!(
                    "list of {count} neighbors exceeds k = {k}"
                )));
            }
            let mut entries = Vec::with_capacity(count as usize);
            for _ in 0..count {
                r.read_exact(&mut pair)
                    .map_err(|_| Error::format("neighbor file truncated"))?;
                entries.push(Neighbor {
                    id: u64::from_le_bytes(pair[..8].try_into().unwrap()),
                    dist: f64::from_le_bytes(pair[8..].try_into().unwrap()),
                });
            }
            lists.push(ResultSet { entries });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::format("trailing bytes after neighbor lists"));
        }
        Ok(Self { checksum, k, lists })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> NeighborFile {
        let list = |v: &[(u64, f64)]| ResultSet {
            entries: v.iter().map(|&(id, dist)| Neighbor { id, dist }).collect(),
        };
        NeighborFile {
            checksum: [7; 32],
            k: 3,
            lists: vec![
                list(&[(4, 0.5), (1, 0.75), (9, 2.0)]),
                list(&[]),
                list(&[(0, 0.0)]),
            ],
        }
    }

    #[test]
    fn roundtrip() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 32 + 4 + 4 + 3 * 4 + 4 * 16);
        assert_eq!(NeighborFile::read_from(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn rejects_damage() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert!(NeighborFile::read_from(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(NeighborFile::read_from(&extra[..]).is_err());
        buf[0] = b'X';
        assert!(NeighborFile::read_from(&buf[..]).is_err());
    }
}
