//! Fixed-size page store.
//!
//! Page 0 is the store header (magic, page size, page count, free-list head);
//! nodes live on pages `1..`. A store is either purely in memory or backed by
//! a page region inside an existing file. File-backed pages are read lazily
//! with positioned reads; writes land in an in-memory overlay until the
//! store is written out again.

use std::borrow::Cow;
use std::fs::File;
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

pub type PageId = u64;

/// Null page reference (page 0 is the header and never a node).
pub const NO_PAGE: PageId = 0;

const MAGIC: &[u8; 4] = b"HDPG";
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug)]
struct FileBacking {
    file: File,
    offset: u64,
}

#[derive(Debug)]
pub struct PageStore {
    page_size: usize,
    /// Index = page id; `None` means "read from the backing file".
    pages: Vec<Option<Box<[u8]>>>,
    backing: Option<FileBacking>,
    free_head: PageId,
    reads: AtomicU64,
}

impl PageStore {
    pub fn in_memory(page_size: usize) -> Result<Self> {
        if page_size < HEADER_LEN {
            return Err(Error::PageTooSmall {
                page_size,
                what: "store header",
            });
        }
        Ok(Self {
            page_size,
            pages: vec![Some(vec![0u8; page_size].into_boxed_slice())],
            backing: None,
            free_head: NO_PAGE,
            reads: AtomicU64::new(0),
        })
    }

    /// Opens a page region that starts at byte `offset` of `file`.
    pub fn open(file: File, offset: u64) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        file.read_exact_at(&mut header, offset)
            .map_err(|e| Error::format(format!("page region header unreadable: {e}")))?;
        if &header[0..4] != MAGIC {
            return Err(Error::format("bad page region magic"));
        }
        let page_size = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let free_head = u64::from_le_bytes(header[16..24].try_into().unwrap());
        if page_size < HEADER_LEN || count == 0 {
            return Err(Error::format("corrupt page region header"));
        }
        let needed = offset + count * page_size as u64;
        if file.metadata()?.len() < needed {
            return Err(Error::format(format!(
                "page region truncated: need {needed} bytes"
            )));
        }
        Ok(Self {
            page_size,
            pages: (0..count).map(|_| None).collect(),
            backing: Some(FileBacking { file, offset }),
            free_head,
            reads: AtomicU64::new(0),
        })
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    /// Number of pages including the header page.
    pub fn page_count(&self) -> u64 {
        self.pages.len() as u64
    }

    /// Byte size of the region as written by [`PageStore::write_to`].
    pub fn region_len(&self) -> u64 {
        self.page_count() * self.page_size as u64
    }

    /// Node page reads served so far (observability only).
    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn read(&self, id: PageId) -> Result<Cow<'_, [u8]>> {
        if id == NO_PAGE || id >= self.page_count() {
            return Err(Error::format(format!("page {id} out of range")));
        }
        self.reads.fetch_add(1, Ordering::Relaxed);
        match &self.pages[id as usize] {
            Some(p) => Ok(Cow::Borrowed(p)),
            None => {
                let backing = self
                    .backing
                    .as_ref()
                    .expect("unbacked page without contents");
                let mut buf = vec![0u8; self.page_size];
                backing
                    .file
                    .read_exact_at(&mut buf, backing.offset + id * self.page_size as u64)?;
                Ok(Cow::Owned(buf))
            }
        }
    }

    pub fn write(&mut self, id: PageId, data: &[u8]) -> Result<()> {
        if id == NO_PAGE || id >= self.page_count() {
            return Err(Error::format(format!("page {id} out of range")));
        }
        if data.len() > self.page_size {
            return Err(Error::PageTooSmall {
                page_size: self.page_size,
                what: "serialized node",
            });
        }
        let mut page = vec![0u8; self.page_size].into_boxed_slice();
        page[..data.len()].copy_from_slice(data);
        self.pages[id as usize] = Some(page);
        Ok(())
    }

    pub fn allocate(&mut self) -> Result<PageId> {
        if self.free_head != NO_PAGE {
            let id = self.free_head;
            let page = self.read(id)?;
            self.free_head = u64::from_le_bytes(page[0..8].try_into().unwrap());
            self.write(id, &[])?;
            return Ok(id);
        }
        self.pages
            .push(Some(vec![0u8; self.page_size].into_boxed_slice()));
        Ok(self.page_count() - 1)
    }

    /// Returns a page to the free list.
    pub fn free(&mut self, id: PageId) -> Result<()> {
        let next = self.free_head.to_le_bytes();
        self.write(id, &next)?;
        self.free_head = id;
        Ok(())
    }

    /// Writes header plus every page, in id order.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut header = vec![0u8; self.page_size];
        header[0..4].copy_from_slice(MAGIC);
        header[4..8].copy_from_slice(&(self.page_size as u32).to_le_bytes());
        header[8..16].copy_from_slice(&self.page_count().to_le_bytes());
        header[16..24].copy_from_slice(&self.free_head.to_le_bytes());
        out.write_all(&header)?;
        for id in 1..self.page_count() {
            out.write_all(&self.read(id)?)?;
        }
        Ok(())
    }
}
