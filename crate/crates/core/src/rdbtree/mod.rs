//! Reference-distance B+-tree (RDB-tree).
//!
//! A paged B+-tree keyed on Hilbert keys. Leaves hold, per object, its key,
//! an 8-byte object identifier and its distances to the `m` reference
//! objects, so candidate filtering never touches the full descriptors.
//! Entries are totally ordered by `(key, obj)`; duplicate keys are normal.

mod node;
mod store;

use std::collections::VecDeque;

pub use node::{LeafEntry, NodeLayout};
pub use store::{PageId, PageStore, NO_PAGE};

use node::{Internal, Leaf, Node};

use crate::error::{Error, Result};
use crate::hilbert::{abs_diff_into, HilbertKey};

/// Leaf order: the largest `Omega` with
/// `(eta * omega/8 + 4m + 8) * Omega + 16 + 1 <= page_size`.
pub fn leaf_order(eta: usize, omega: u32, m: usize, page_size: usize) -> Result<usize> {
    if eta == 0 || omega == 0 || m == 0 || page_size == 0 {
        return Err(Error::config("leaf order parameters must be positive"));
    }
    if !omega.is_multiple_of(8) {
        return Err(Error::config(format!(
            "Hilbert order {omega} is not a multiple of 8"
        )));
    }
    node::leaf_capacity(eta * omega as usize / 8, m, page_size)
}

/// Persistent description of one tree inside a shared page store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeMeta {
    pub root: PageId,
    /// Levels including the leaf level.
    pub height: u32,
    pub count: u64,
    pub first_leaf: PageId,
}

#[derive(Debug, Clone)]
pub struct RdbTree {
    layout: NodeLayout,
    meta: TreeMeta,
}

fn split_evenly(total: usize, parts: usize) -> impl Iterator<Item = usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(move |i| base + usize::from(i < extra))
}

impl RdbTree {
    pub fn from_meta(layout: NodeLayout, meta: TreeMeta) -> Self {
        Self { layout, meta }
    }

    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    pub fn meta(&self) -> TreeMeta {
        self.meta
    }

    pub fn len(&self) -> u64 {
        self.meta.count
    }

    pub fn is_empty(&self) -> bool {
        self.meta.count == 0
    }

    pub fn height(&self) -> u32 {
        self.meta.height
    }

    /// Packs entries (sorted by key, then obj) bottom-up into full-depth
    /// leaves and internal levels.
    pub fn bulk_build(
        layout: NodeLayout,
        entries: &[LeafEntry],
        store: &mut PageStore,
    ) -> Result<Self> {
        if let Some(pos) = entries
            .windows(2)
            .position(|w| w[0].sort_key() >= w[1].sort_key())
        {
            return Err(Error::Unsorted { position: pos + 1 });
        }
        for e in entries {
            check_entry(&layout, e)?;
        }

        let leaves = entries.len().div_ceil(layout.leaf_order).max(1);
        let ids: Vec<PageId> = (0..leaves)
            .map(|_| store.allocate())
            .collect::<Result<_>>()?;
        let mut level: Vec<(Vec<u8>, PageId)> = Vec::with_capacity(leaves);
        let mut start = 0;
        for (i, size) in split_evenly(entries.len(), leaves).enumerate() {
            let chunk = &entries[start..start + size];
            start += size;
            let leaf = Leaf {
                left: if i == 0 { NO_PAGE } else { ids[i - 1] },
                right: ids.get(i + 1).copied().unwrap_or(NO_PAGE),
                entries: chunk.to_vec(),
            };
            store.write(ids[i], &leaf.encode(&layout))?;
            let min = chunk
                .first()
                .map(|e| e.key.as_bytes().to_vec())
                .unwrap_or_else(|| vec![0; layout.key_len]);
            level.push((min, ids[i]));
        }

        let mut height = 1;
        while level.len() > 1 {
            let parents = level.len().div_ceil(layout.fanout);
            let mut next = Vec::with_capacity(parents);
            let sizes: Vec<usize> = split_evenly(level.len(), parents).collect();
            let mut rest = level.into_iter();
            for size in sizes {
                let slots: Vec<_> = rest.by_ref().take(size).collect();
                let id = store.allocate()?;
                let min = slots[0].0.clone();
                store.write(id, &Internal { slots }.encode(&layout))?;
                next.push((min, id));
            }
            level = next;
            height += 1;
        }

        Ok(Self {
            layout,
            meta: TreeMeta {
                root: level[0].1,
                height,
                count: entries.len() as u64,
                first_leaf: ids[0],
            },
        })
    }

    fn read_node(&self, store: &PageStore, id: PageId) -> Result<Node> {
        Node::decode(&store.read(id)?, &self.layout)
    }

    fn read_leaf(&self, store: &PageStore, id: PageId) -> Result<Leaf> {
        Leaf::decode(&store.read(id)?, &self.layout)
    }

    fn read_internal(&self, store: &PageStore, id: PageId) -> Result<Internal> {
        Internal::decode(&store.read(id)?, &self.layout)
    }

    /// Smallest `(key, obj)` stored below `page`.
    fn subtree_min(&self, store: &PageStore, mut page: PageId) -> Result<Option<(Vec<u8>, u64)>> {
        loop {
            match self.read_node(store, page)? {
                Node::Internal(n) => page = n.slots[0].1,
                Node::Leaf(l) => {
                    return Ok(l
                        .entries
                        .first()
                        .map(|e| (e.key.as_bytes().to_vec(), e.obj)));
                }
            }
        }
    }

    /// Child an entry `(key, obj)` belongs to.
    fn route_insert(
        &self,
        store: &PageStore,
        node: &Internal,
        key: &[u8],
        obj: u64,
    ) -> Result<usize> {
        let mut idx = node
            .slots
            .iter()
            .rposition(|(k, _)| k.as_slice() < key)
            .unwrap_or(0);
        for j in idx + 1..node.slots.len() {
            if node.slots[j].0.as_slice() != key {
                break;
            }
            match self.subtree_min(store, node.slots[j].1)? {
                Some((k, o)) if (k.as_slice(), o) <= (key, obj) => idx = j,
                _ => break,
            }
        }
        Ok(idx)
    }

    /// B+-tree insert with leaf and internal splits.
    pub fn insert(&mut self, store: &mut PageStore, entry: LeafEntry) -> Result<()> {
        check_entry(&self.layout, &entry)?;
        let key = entry.key.as_bytes().to_vec();

        // descend, remembering (internal page, chosen slot)
        let mut path: Vec<(PageId, Internal, usize)> = Vec::new();
        let mut page = self.meta.root;
        for _ in 1..self.meta.height {
            let mut node = self.read_internal(store, page)?;
            let idx = self.route_insert(store, &node, &key, entry.obj)?;
            let child = node.slots[idx].1;
            if key < node.slots[idx].0 {
                node.slots[idx].0 = key.clone();
                store.write(page, &node.encode(&self.layout))?;
            }
            path.push((page, node, idx));
            page = child;
        }

        let mut leaf = self.read_leaf(store, page)?;
        let pos = leaf
            .entries
            .partition_point(|e| e.sort_key() < (key.as_slice(), entry.obj));
        if leaf
            .entries
            .get(pos)
            .is_some_and(|e| e.obj == entry.obj && e.key == entry.key)
        {
            return Err(Error::DuplicateId(entry.obj));
        }
        leaf.entries.insert(pos, entry);
        self.meta.count += 1;

        if leaf.entries.len() <= self.layout.leaf_order {
            return store.write(page, &leaf.encode(&self.layout));
        }

        // leaf split
        let right_entries = leaf.entries.split_off(leaf.entries.len().div_ceil(2));
        let new_id = store.allocate()?;
        let old_right = leaf.right;
        let right = Leaf {
            left: page,
            right: old_right,
            entries: right_entries,
        };
        leaf.right = new_id;
        if old_right != NO_PAGE {
            let mut r = self.read_leaf(store, old_right)?;
            r.left = new_id;
            store.write(old_right, &r.encode(&self.layout))?;
        }
        store.write(page, &leaf.encode(&self.layout))?;
        store.write(new_id, &right.encode(&self.layout))?;
        let mut promote = Some((right.entries[0].key.as_bytes().to_vec(), new_id));
        let mut left_min = leaf.entries[0].key.as_bytes().to_vec();
        let mut left_page = page;

        while let Some((sep, child)) = promote.take() {
            match path.pop() {
                Some((pid, mut node, idx)) => {
                    node.slots.insert(idx + 1, (sep, child));
                    if node.slots.len() <= self.layout.fanout {
                        store.write(pid, &node.encode(&self.layout))?;
                    } else {
                        let right_slots = node.slots.split_off(node.slots.len().div_ceil(2));
                        let nid = store.allocate()?;
                        let right_min = right_slots[0].0.clone();
                        store.write(pid, &node.encode(&self.layout))?;
                        store.write(nid, &Internal { slots: right_slots }.encode(&self.layout))?;
                        left_min = node.slots[0].0.clone();
                        left_page = pid;
                        promote = Some((right_min, nid));
                    }
                }
                None => {
                    let root = store.allocate()?;
                    let node = Internal {
                        slots: vec![(left_min.clone(), left_page), (sep, child)],
                    };
                    store.write(root, &node.encode(&self.layout))?;
                    self.meta.root = root;
                    self.meta.height += 1;
                }
            }
        }
        Ok(())
    }

    /// Leaf page and slot of the first entry whose key is `>= probe`
    /// (slot may equal the leaf length when every key is smaller).
    fn lower_bound(&self, store: &PageStore, probe: &[u8]) -> Result<(PageId, Leaf, usize)> {
        let mut page = self.meta.root;
        for _ in 1..self.meta.height {
            let node = self.read_internal(store, page)?;
            let idx = node
                .slots
                .iter()
                .rposition(|(k, _)| k.as_slice() < probe)
                .unwrap_or(0);
            page = node.slots[idx].1;
        }
        let mut leaf = self.read_leaf(store, page)?;
        loop {
            let pos = leaf.entries.partition_point(|e| e.key.as_bytes() < probe);
            if pos < leaf.entries.len() || leaf.right == NO_PAGE {
                return Ok((page, leaf, pos));
            }
            page = leaf.right;
            leaf = self.read_leaf(store, page)?;
            if leaf
                .entries
                .first()
                .is_some_and(|e| e.key.as_bytes() >= probe)
            {
                return Ok((page, leaf, 0));
            }
        }
    }

    /// Entries whose key equals `key`, in obj order.
    pub fn lookup(&self, store: &PageStore, key: &HilbertKey) -> Result<Vec<LeafEntry>> {
        self.check_probe(key)?;
        let (_, leaf, pos) = self.lower_bound(store, key.as_bytes())?;
        let mut cur = RightCursor::at(self, store, leaf, pos);
        let mut out = Vec::new();
        while let Some(e) = cur.next()? {
            if e.key != *key {
                break;
            }
            out.push(e);
        }
        Ok(out)
    }

    fn check_probe(&self, probe: &HilbertKey) -> Result<()> {
        if probe.as_bytes().len() != self.layout.key_len {
            return Err(Error::DimensionMismatch {
                expected: self.layout.key_len,
                got: probe.as_bytes().len(),
            });
        }
        Ok(())
    }

    /// Up to `alpha` entries nearest to `probe` in key space, walking the
    /// leaf chain both ways from the probe position. Nearer keys first; on
    /// equal key distance the lower key, then the lower obj, wins. Entries
    /// for which `skip` returns true are passed over without being counted.
    pub fn nearest_alpha(
        &self,
        store: &PageStore,
        probe: &HilbertKey,
        alpha: usize,
        skip: impl Fn(u64) -> bool,
    ) -> Result<Vec<LeafEntry>> {
        self.check_probe(probe)?;
        let mut out = Vec::with_capacity(alpha.min(self.meta.count as usize));
        if alpha == 0 || self.meta.count == 0 {
            return Ok(out);
        }
        let p = probe.as_bytes();
        let (page, leaf, pos) = self.lower_bound(store, p)?;
        let mut right = RightCursor::at(self, store, leaf.clone(), pos);
        let mut left = LeftCursor::at(self, store, page, leaf, pos);

        let mut next_right = right.next_live(&skip)?;
        let mut left_group: VecDeque<LeafEntry> = VecDeque::new();
        let (mut dl, mut dr) = (Vec::new(), Vec::new());

        while out.len() < alpha {
            if left_group.is_empty() {
                left_group = left.next_group(&skip)?;
            }
            let take_left = match (left_group.front(), &next_right) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(l), Some(r)) => {
                    abs_diff_into(l.key.as_bytes(), p, &mut dl);
                    abs_diff_into(r.key.as_bytes(), p, &mut dr);
                    dl <= dr
                }
            };
            if take_left {
                out.push(left_group.pop_front().unwrap());
            } else {
                out.push(next_right.take().unwrap());
                next_right = right.next_live(&skip)?;
            }
        }
        Ok(out)
    }

    /// All entries in leaf-chain order.
    pub fn entries(&self, store: &PageStore) -> Result<Vec<LeafEntry>> {
        let mut out = Vec::with_capacity(self.meta.count as usize);
        let mut page = self.meta.first_leaf;
        while page != NO_PAGE {
            let leaf = self.read_leaf(store, page)?;
            out.extend(leaf.entries);
            page = leaf.right;
        }
        Ok(out)
    }

    /// Structural self-check: equal leaf depth, leaf capacity, sibling
    /// links, separator bounds and total `(key, obj)` order.
    pub fn check_invariants(&self, store: &PageStore) -> Result<()> {
        let bad = |msg: String| Err(Error::format(msg));
        let mut leaves = Vec::new();
        let mut stack = vec![(self.meta.root, 1u32, None::<Vec<u8>>)];
        while let Some((page, depth, lower)) = stack.pop() {
            match self.read_node(store, page)? {
                Node::Internal(n) => {
                    if depth >= self.meta.height {
                        return bad(format!("internal page {page} at leaf depth"));
                    }
                    for (k, c) in n.slots.iter().rev() {
                        stack.push((*c, depth + 1, Some(k.clone())));
                    }
                    if let Some(l) = lower {
                        if n.slots[0].0 < l {
                            return bad(format!("separator below parent bound at {page}"));
                        }
                    }
                }
                Node::Leaf(l) => {
                    if depth != self.meta.height {
                        return bad(format!(
                            "leaf {page} at depth {depth}, height {}",
                            self.meta.height
                        ));
                    }
                    if l.entries.len() > self.layout.leaf_order {
                        return bad(format!("leaf {page} over capacity"));
                    }
                    if let (Some(lb), Some(first)) = (lower, l.entries.first()) {
                        if first.key.as_bytes() < lb.as_slice() {
                            return bad(format!("leaf {page} key below separator"));
                        }
                    }
                    leaves.push(page);
                }
            }
        }
        // in-order leaves must match the sibling chain
        let mut chain = Vec::new();
        let mut prev = NO_PAGE;
        let mut page = self.meta.first_leaf;
        while page != NO_PAGE {
            let l = self.read_leaf(store, page)?;
            if l.left != prev {
                return bad(format!("leaf {page} has left link {} not {prev}", l.left));
            }
            chain.push(page);
            prev = page;
            page = l.right;
        }
        if chain != leaves {
            return bad("leaf chain differs from in-order traversal".into());
        }
        let all = self.entries(store)?;
        if all.len() as u64 != self.meta.count {
            return bad(format!(
                "count {} but {} entries",
                self.meta.count,
                all.len()
            ));
        }
        if all.windows(2).any(|w| w[0].sort_key() >= w[1].sort_key()) {
            return bad("entries out of (key, obj) order".into());
        }
        Ok(())
    }
}

fn check_entry(layout: &NodeLayout, e: &LeafEntry) -> Result<()> {
    if e.key.as_bytes().len() != layout.key_len {
        return Err(Error::DimensionMismatch {
            expected: layout.key_len,
            got: e.key.as_bytes().len(),
        });
    }
    if e.refdists.len() != layout.m {
        return Err(Error::DimensionMismatch {
            expected: layout.m,
            got: e.refdists.len(),
        });
    }
    if e.refdists.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "object {} has an invalid reference distance",
            e.obj
        )));
    }
    if e.obj == u64::MAX {
        return Err(Error::InvalidArgument(
            "object id u64::MAX is reserved".into(),
        ));
    }
    Ok(())
}

struct RightCursor<'a> {
    tree: &'a RdbTree,
    store: &'a PageStore,
    leaf: Leaf,
    pos: usize,
}

impl<'a> RightCursor<'a> {
    fn at(tree: &'a RdbTree, store: &'a PageStore, leaf: Leaf, pos: usize) -> Self {
        Self {
            tree,
            store,
            leaf,
            pos,
        }
    }

    fn next(&mut self) -> Result<Option<LeafEntry>> {
        while self.pos >= self.leaf.entries.len() {
            if self.leaf.right == NO_PAGE {
                return Ok(None);
            }
            self.leaf = self.tree.read_leaf(self.store, self.leaf.right)?;
            self.pos = 0;
        }
        self.pos += 1;
        Ok(Some(self.leaf.entries[self.pos - 1].clone()))
    }

    fn next_live(&mut self, skip: &impl Fn(u64) -> bool) -> Result<Option<LeafEntry>> {
        while let Some(e) = self.next()? {
            if !skip(e.obj) {
                return Ok(Some(e));
            }
        }
        Ok(None)
    }
}

/// Walks leftwards, yielding runs of equal keys in ascending obj order.
struct LeftCursor<'a> {
    tree: &'a RdbTree,
    store: &'a PageStore,
    leaf: Leaf,
    /// Entries `[0, pos)` of the current leaf are still unvisited.
    pos: usize,
    pending: Option<LeafEntry>,
}

impl<'a> LeftCursor<'a> {
    fn at(tree: &'a RdbTree, store: &'a PageStore, _page: PageId, leaf: Leaf, pos: usize) -> Self {
        Self {
            tree,
            store,
            leaf,
            pos,
            pending: None,
        }
    }

    fn prev(&mut self) -> Result<Option<LeafEntry>> {
        if let Some(e) = self.pending.take() {
            return Ok(Some(e));
        }
        while self.pos == 0 {
            if self.leaf.left == NO_PAGE {
                return Ok(None);
            }
            self.leaf = self.tree.read_leaf(self.store, self.leaf.left)?;
            self.pos = self.leaf.entries.len();
        }
        self.pos -= 1;
        Ok(Some(self.leaf.entries[self.pos].clone()))
    }

    fn next_group(&mut self, skip: &impl Fn(u64) -> bool) -> Result<VecDeque<LeafEntry>> {
        let mut group = VecDeque::new();
        let Some(first) = self.prev()? else {
            return Ok(group);
        };
        let key = first.key.clone();
        group.push_front(first);
        loop {
            match self.prev()? {
                Some(e) if e.key == key => group.push_front(e),
                Some(e) => {
                    self.pending = Some(e);
                    break;
                }
                None => break,
            }
        }
        group.retain(|e| !skip(e.obj));
        if group.is_empty() {
            // whole run skipped; keep walking
            return self.next_group(skip);
        }
        Ok(group)
    }
}
