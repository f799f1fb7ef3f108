//! Index file format.
//!
//! ```text
//! [fixed header, 64 bytes]
//!   magic "HDINDEX1" | version u32 | reserved u32
//!   meta_len u64 | meta_checksum u64
//!   descriptor_offset u64 | descriptor_slots u64 | pages_offset u64 | reserved u64
//! [meta, meta_len bytes]
//!   config | domain | references (ids, coords, pairwise, dmax, f)
//!   tau tree metas | tombstone bitmap | descriptor offset table
//! [descriptor region]  slots x dims x f32
//! [padding to a page boundary]
//! [page region]        page 0 = store header, then node pages
//! ```
//!
//! Integers and floats are little-endian; Hilbert key bytes inside pages are
//! big-endian by construction.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::index::{partition_dimensions, DescriptorStore, HDIndex, IndexConfig};
use crate::rdbtree::{PageStore, RdbTree, TreeMeta};
use crate::refsel::{ReferenceSet, SelectionMethod};
use crate::types::Domain;

const MAGIC: &[u8; 8] = b"HDINDEX1";
pub const FORMAT_VERSION: u32 = 1;
const FIXED_HEADER: usize = 64;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format("index metadata truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::format("length does not fit in memory"))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

fn selection_tag(s: SelectionMethod) -> u8 {
    match s {
        SelectionMethod::Random => 0,
        SelectionMethod::Sss => 1,
        SelectionMethod::SssDyn => 2,
    }
}

fn selection_from(tag: u8) -> Result<SelectionMethod> {
    Ok(match tag {
        0 => SelectionMethod::Random,
        1 => SelectionMethod::Sss,
        2 => SelectionMethod::SssDyn,
        t => return Err(Error::format(format!("unknown selection method tag {t}"))),
    })
}

fn encode_meta(index: &HDIndex) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let c = &index.config;
    w.u64(c.dims as u64);
    w.u64(c.tau as u64);
    w.u32(c.omega);
    w.u64(c.m as u64);
    w.u64(c.page_size as u64);
    w.f64(c.f);
    w.u8(selection_tag(c.selection));
    w.u64(c.seed);
    w.f64(index.domain.lo);
    w.f64(index.domain.hi);

    let r = &index.refs;
    for &id in &r.ids {
        w.u64(id);
    }
    for &v in r.members.iter().flatten() {
        w.f32(v);
    }
    for &v in &r.pairwise {
        w.f64(v);
    }
    w.f64(r.dmax_est);
    w.f64(r.f);

    for t in &index.trees {
        let m = t.meta();
        w.u64(m.root);
        w.u32(m.height);
        w.u64(m.count);
        w.u64(m.first_leaf);
    }

    w.u64(index.tombstones.len() as u64);
    let mut bits = vec![0u8; index.tombstones.len().div_ceil(8)];
    for (i, _) in index.tombstones.iter().enumerate().filter(|(_, &d)| d) {
        bits[i / 8] |= 1 << (i % 8);
    }
    w.0.extend_from_slice(&bits);
    w.u64(index.live);

    w.u64(index.descriptors.offsets.len() as u64);
    for &o in &index.descriptors.offsets {
        w.u64(o);
    }
    w.0
}

impl HDIndex {
    /// Writes the whole index to `path` (via a temporary file in the same
    /// directory, so persisting over the file the index was loaded from is
    /// safe).
    pub fn persist(&self, path: impl AsRef<Path>) -> Result<u64> {
        let path = path.as_ref();
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let tmp = dir.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("index")
        ));
        let written = self.write_file(&tmp);
        match written {
            Ok(len) => {
                fs::rename(&tmp, path)?;
                Ok(len)
            }
            Err(e) => {
                let _ = fs::remove_file(&tmp);
                Err(e)
            }
        }
    }

    fn write_file(&self, path: &Path) -> Result<u64> {
        let meta = encode_meta(self);
        let dims = self.config.dims as u64;
        let slots = self.descriptors.slots();
        let desc_offset = (FIXED_HEADER + meta.len()) as u64;
        let desc_end = desc_offset + slots * dims * 4;
        let page = self.config.page_size as u64;
        let pages_offset = desc_end.div_ceil(page) * page;

        let mut out = BufWriter::new(
            OpenOptions::new()
                .write(true)
                .create(true)
                .truncate(true)
                .open(path)?,
        );
        let mut h = Writer(Vec::with_capacity(FIXED_HEADER));
        h.0.extend_from_slice(MAGIC);
        h.u32(FORMAT_VERSION);
        h.u32(0);
        h.u64(meta.len() as u64);
        h.u64(checksum(&meta));
        h.u64(desc_offset);
        h.u64(slots);
        h.u64(pages_offset);
        h.u64(0);
        out.write_all(&h.0)?;
        out.write_all(&meta)?;

        // descriptor region in slot order
        let slot_bytes = (dims * 4) as usize;
        if let Some((file, base)) = &self.descriptors.disk {
            use std::os::unix::fs::FileExt;
            let mut buf = vec![0u8; slot_bytes * 1024];
            let total = self.descriptors.disk_slots as usize * slot_bytes;
            let mut done = 0usize;
            while done < total {
                let n = buf.len().min(total - done);
                file.read_exact_at(&mut buf[..n], base + done as u64)?;
                out.write_all(&buf[..n])?;
                done += n;
            }
        }
        for v in &self.descriptors.mem {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&vec![0u8; (pages_offset - desc_end) as usize])?;
        self.store.write_to(&mut out)?;
        out.flush()?;
        out.get_ref().sync_all()?;
        Ok(pages_offset + self.store.region_len())
    }

    /// Opens an index file. Metadata is read eagerly; tree pages and
    /// descriptors are read from disk on demand.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = File::open(path.as_ref())?;
        let file_len = file.metadata()?.len();
        let mut header = [0u8; FIXED_HEADER];
        file.read_exact(&mut header)
            .map_err(|_| Error::format("index file shorter than its header"))?;
        let mut h = Reader {
            buf: &header,
            pos: 0,
        };
        if h.take(8)? != MAGIC {
            return Err(Error::format("not an index file (bad magic)"));
        }
        let version = h.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported index format version {version}"
            )));
        }
        h.u32()?;
        let meta_len = h.usize()?;
        let meta_sum = h.u64()?;
        let desc_offset = h.u64()?;
        let desc_slots = h.u64()?;
        let pages_offset = h.u64()?;
        if FIXED_HEADER as u64 + meta_len as u64 > file_len || pages_offset > file_len {
            return Err(Error::format("index file truncated"));
        }
        let mut meta = vec![0u8; meta_len];
        file.read_exact(&mut meta)?;
        if checksum(&meta) != meta_sum {
            return Err(Error::format("index metadata checksum mismatch"));
        }

        let mut r = Reader { buf: &meta, pos: 0 };
        let config = IndexConfig {
            dims: r.usize()?,
            tau: r.usize()?,
            omega: r.u32()?,
            m: r.usize()?,
            page_size: r.usize()?,
            f: r.f64()?,
            selection: selection_from(r.u8()?)?,
            seed: r.u64()?,
        };
        config.validate()?;
        let domain = Domain::new(r.f64()?, r.f64()?)?;

        let m = config.m;
        let ids = (0..m).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let members = (0..m)
            .map(|_| {
                (0..config.dims)
                    .map(|_| r.f32())
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let pairwise = (0..m * m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let refs = ReferenceSet {
            ids,
            members,
            pairwise,
            dmax_est: r.f64()?,
            f: r.f64()?,
        };

        let layout = config.node_layout()?;
        let trees = (0..config.tau)
            .map(|_| {
                Ok(RdbTree::from_meta(
                    layout,
                    TreeMeta {
                        root: r.u64()?,
                        height: r.u32()?,
                        count: r.u64()?,
                        first_leaf: r.u64()?,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let n_bits = r.usize()?;
        let bits = r.take(n_bits.div_ceil(8))?;
        let tombstones = (0..n_bits)
            .map(|i| bits[i / 8] >> (i % 8) & 1 == 1)
            .collect();
        let live = r.u64()?;

        let n_offsets = r.usize()?;
        let offsets = (0..n_offsets)
            .map(|_| r.u64())
            .collect::<Result<Vec<_>>>()?;
        if r.pos != meta.len() {
            return Err(Error::format("trailing bytes in index metadata"));
        }
        let desc_end = desc_offset + desc_slots * config.dims as u64 * 4;
        if desc_end > pages_offset {
            return Err(Error::format("descriptor region overlaps page region"));
        }

        let store = PageStore::open(file.try_clone()?, pages_offset)?;
        if store.page_size() != config.page_size {
            return Err(Error::format(
                "page size in store header disagrees with config",
            ));
        }
        let descriptors = DescriptorStore {
            dims: config.dims,
            offsets,
            disk: Some((file, desc_offset)),
            disk_slots: desc_slots,
            mem: Vec::new(),
        };
        Ok(Self {
            partitioning: partition_dimensions(config.dims, config.tau)?,
            curve: config.curve()?,
            config,
            domain,
            refs,
            trees,
            store,
            descriptors,
            tombstones,
            live,
        })
    }
}
