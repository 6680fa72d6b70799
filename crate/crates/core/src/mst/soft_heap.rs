//! Soft heap with car-pooled item lists.
//!
//! Nodes form binary trees; each node carries a list of items that share the
//! node's current key (`ckey`). Trees of equal rank are melded like a binary
//! counter. When a node's list runs short it pulls the whole list of its
//! smaller child, raising its `ckey`; items that were already in the list now
//! sit under a key larger than their own and count as corrupted.
//!
//! Nodes of rank `<= r` hold exactly one item, with
//! `r = ceil(log2(1/eps)) + 5`; above that the list-size target grows by 3/2
//! per rank, which keeps the number of corrupted items at most `eps * n`.
//!
//! Each node keeps its list split in two: `dirty` (key < ckey) and `clean`
//! (key == ckey), so corruption is tracked exactly and cheaply. The arena form
//! hosts many heaps that can be melded in `O(log n)`; [`SoftHeap`] wraps a
//! single heap.

use std::cmp::Ordering;

use crate::error::{GgError, Result};

const NIL: u32 = u32::MAX;

/// `f64` with the IEEE total order, usable as a soft-heap key.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy, Debug)]
struct List {
    head: u32,
    tail: u32,
    len: u32,
}

impl List {
    const EMPTY: List = List { head: NIL, tail: NIL, len: 0 };
}

#[derive(Debug)]
struct Cell<K, T> {
    key: K,
    item: Option<T>,
    next: u32,
}

#[derive(Debug)]
struct Node<K> {
    ckey: K,
    rank: u32,
    left: u32,
    right: u32,
    dirty: List,
    clean: List,
}

impl<K> Node<K> {
    fn len(&self) -> u32 {
        self.dirty.len + self.clean.len
    }

    fn is_leaf(&self) -> bool {
        self.left == NIL && self.right == NIL
    }
}

#[derive(Debug, Default)]
struct HeapState {
    roots: Vec<u32>,
    len: usize,
    insertions: usize,
    corrupted: usize,
}

/// Handle to one heap inside a [`SoftHeapArena`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HeapId(u32);

/// Item returned by an extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct Extracted<K, T> {
    pub item: T,
    pub key: K,
    /// True when the item sat under a key larger than its own.
    pub corrupted: bool,
}

/// Storage shared by many soft heaps with the same corruption parameter.
#[derive(Debug)]
pub struct SoftHeapArena<K, T> {
    epsilon: f64,
    targets: Vec<u32>,
    cells: Vec<Cell<K, T>>,
    free_cells: Vec<u32>,
    nodes: Vec<Node<K>>,
    free_nodes: Vec<u32>,
    heaps: Vec<HeapState>,
    log_corruptions: bool,
    corruption_log: Vec<u32>,
}

/// Rank threshold below which nodes never corrupt.
pub fn rank_threshold(epsilon: f64) -> u32 {
    (1.0 / epsilon).log2().ceil().max(0.0) as u32 + 5
}

fn list_targets(r: u32) -> Vec<u32> {
    let mut t = Vec::with_capacity(64);
    for k in 0..64u32 {
        if k <= r {
            t.push(1);
        } else {
            let prev = *t.last().unwrap() as u64;
            t.push((3 * prev).div_ceil(2).min(u32::MAX as u64) as u32);
        }
    }
    t
}

impl<K: Ord + Clone, T> SoftHeapArena<K, T> {
    /// `epsilon` must lie in `(0, 1)`.
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(GgError::InvalidConfig(format!("soft heap epsilon must be in (0, 1), got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            targets: list_targets(rank_threshold(epsilon)),
            cells: Vec::new(),
            free_cells: Vec::new(),
            nodes: Vec::new(),
            free_nodes: Vec::new(),
            heaps: Vec::new(),
            log_corruptions: false,
            corruption_log: Vec::new(),
        })
    }

    pub fn with_capacity(epsilon: f64, items: usize) -> Result<Self> {
        let mut a = Self::new(epsilon)?;
        a.cells.reserve(items);
        a.nodes.reserve(items);
        Ok(a)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Record every item at the moment it becomes corrupted; see
    /// [`drain_corruptions`](Self::drain_corruptions).
    pub fn set_corruption_log(&mut self, on: bool) {
        self.log_corruptions = on;
        if !on {
            self.corruption_log.clear();
        }
    }

    pub fn new_heap(&mut self) -> HeapId {
        self.heaps.push(HeapState::default());
        HeapId(self.heaps.len() as u32 - 1)
    }

    pub fn len(&self, h: HeapId) -> usize {
        self.heaps[h.0 as usize].len
    }

    pub fn is_empty(&self, h: HeapId) -> bool {
        self.len(h) == 0
    }

    pub fn insertions(&self, h: HeapId) -> usize {
        self.heaps[h.0 as usize].insertions
    }

    /// Items currently stored whose current key exceeds their own key.
    pub fn corrupted_count(&self, h: HeapId) -> usize {
        self.heaps[h.0 as usize].corrupted
    }

    fn alloc_cell(&mut self, key: K, item: T) -> u32 {
        let cell = Cell { key, item: Some(item), next: NIL };
        if let Some(i) = self.free_cells.pop() {
            self.cells[i as usize] = cell;
            i
        } else {
            self.cells.push(cell);
            (self.cells.len() - 1) as u32
        }
    }

    fn alloc_node(&mut self, node: Node<K>) -> u32 {
        if let Some(i) = self.free_nodes.pop() {
            self.nodes[i as usize] = node;
            i
        } else {
            self.nodes.push(node);
            (self.nodes.len() - 1) as u32
        }
    }

    pub fn insert(&mut self, h: HeapId, key: K, item: T) {
        let c = self.alloc_cell(key.clone(), item);
        let node = self.alloc_node(Node {
            ckey: key,
            rank: 0,
            left: NIL,
            right: NIL,
            dirty: List::EMPTY,
            clean: List { head: c, tail: c, len: 1 },
        });
        let st = &mut self.heaps[h.0 as usize];
        st.len += 1;
        st.insertions += 1;
        self.carry_insert(h, node);
    }

    fn carry_insert(&mut self, h: HeapId, mut x: u32) {
        loop {
            let k = self.nodes[x as usize].rank as usize;
            let roots = &mut self.heaps[h.0 as usize].roots;
            if roots.len() <= k {
                roots.resize(k + 1, NIL);
            }
            let y = roots[k];
            if y == NIL {
                roots[k] = x;
                return;
            }
            roots[k] = NIL;
            x = self.combine(h, x, y);
        }
    }

    fn combine(&mut self, h: HeapId, x: u32, y: u32) -> u32 {
        let rank = self.nodes[x as usize].rank + 1;
        let ckey = self.nodes[x as usize].ckey.clone();
        let z = self.alloc_node(Node { ckey, rank, left: x, right: y, dirty: List::EMPTY, clean: List::EMPTY });
        self.sift(h, z);
        z
    }

    fn append(&mut self, a: List, b: List) -> List {
        if a.len == 0 {
            return b;
        }
        if b.len == 0 {
            return a;
        }
        self.cells[a.tail as usize].next = b.head;
        List { head: a.head, tail: b.tail, len: a.len + b.len }
    }

    fn push_back(&mut self, list: List, c: u32) -> List {
        self.cells[c as usize].next = NIL;
        self.append(list, List { head: c, tail: c, len: 1 })
    }

    fn sift(&mut self, h: HeapId, x: u32) {
        loop {
            let xn = &self.nodes[x as usize];
            if xn.len() >= self.targets[xn.rank as usize] || xn.is_leaf() {
                return;
            }
            let (l, r) = (xn.left, xn.right);
            let take_right = l == NIL || (r != NIL && self.nodes[r as usize].ckey < self.nodes[l as usize].ckey);
            if take_right {
                let xn = &mut self.nodes[x as usize];
                xn.left = r;
                xn.right = l;
            }
            let c = self.nodes[x as usize].left;
            let new_ckey = self.nodes[c as usize].ckey.clone();

            // Items already here now sit under a larger key.
            let old_clean = std::mem::replace(&mut self.nodes[x as usize].clean, List::EMPTY);
            let mut kept = List::EMPTY;
            let mut demoted = List::EMPTY;
            let mut newly = 0usize;
            let mut cur = old_clean.head;
            while cur != NIL {
                let next = self.cells[cur as usize].next;
                if self.cells[cur as usize].key < new_ckey {
                    demoted = self.push_back(demoted, cur);
                    newly += 1;
                    if self.log_corruptions {
                        self.corruption_log.push(cur);
                    }
                } else {
                    kept = self.push_back(kept, cur);
                }
                cur = next;
            }
            let (c_dirty, c_clean) = {
                let cn = &mut self.nodes[c as usize];
                let lists = (cn.dirty, cn.clean);
                cn.dirty = List::EMPTY;
                cn.clean = List::EMPTY;
                lists
            };
            let x_dirty = self.nodes[x as usize].dirty;
            let dirty = self.append(x_dirty, demoted);
            let dirty = self.append(dirty, c_dirty);
            let clean = self.append(kept, c_clean);
            {
                let xn = &mut self.nodes[x as usize];
                xn.dirty = dirty;
                xn.clean = clean;
                xn.ckey = new_ckey;
            }
            self.heaps[h.0 as usize].corrupted += newly;

            if self.nodes[c as usize].is_leaf() {
                self.nodes[x as usize].left = NIL;
                self.free_nodes.push(c);
            } else {
                self.sift(h, c);
            }
        }
    }

    fn min_root(&self, h: HeapId) -> Option<(usize, u32)> {
        let mut best: Option<(usize, u32)> = None;
        for (k, &r) in self.heaps[h.0 as usize].roots.iter().enumerate() {
            if r == NIL {
                continue;
            }
            if best.is_none_or(|(_, b)| self.nodes[r as usize].ckey < self.nodes[b as usize].ckey) {
                best = Some((k, r));
            }
        }
        best
    }

    /// The item the next extraction would return, with its own key and
    /// corruption flag.
    pub fn peek(&self, h: HeapId) -> Option<(&T, &K, bool)> {
        let (_, x) = self.min_root(h)?;
        let node = &self.nodes[x as usize];
        let (c, corrupted) = if node.dirty.len > 0 { (node.dirty.head, true) } else { (node.clean.head, false) };
        let cell = &self.cells[c as usize];
        Some((cell.item.as_ref().expect("live cell"), &cell.key, corrupted))
    }

    /// Current (possibly raised) key of the minimum root.
    pub fn min_current_key(&self, h: HeapId) -> Option<&K> {
        self.min_root(h).map(|(_, x)| &self.nodes[x as usize].ckey)
    }

    /// Removes an item whose current key is minimal among current keys.
    pub fn extract_min(&mut self, h: HeapId) -> Result<Extracted<K, T>> {
        let (k, x) = self.min_root(h).ok_or(GgError::Empty)?;
        let (c, corrupted) = {
            let node = &mut self.nodes[x as usize];
            if node.dirty.len > 0 {
                let c = node.dirty.head;
                node.dirty.len -= 1;
                (c, true)
            } else {
                let c = node.clean.head;
                node.clean.len -= 1;
                (c, false)
            }
        };
        let next = self.cells[c as usize].next;
        {
            let node = &mut self.nodes[x as usize];
            let list = if corrupted { &mut node.dirty } else { &mut node.clean };
            list.head = next;
            if list.len == 0 {
                *list = List::EMPTY;
            }
        }
        let st = &mut self.heaps[h.0 as usize];
        st.len -= 1;
        if corrupted {
            st.corrupted -= 1;
        }
        if self.nodes[x as usize].len() == 0 {
            if self.nodes[x as usize].is_leaf() {
                self.heaps[h.0 as usize].roots[k] = NIL;
                self.free_nodes.push(x);
            } else {
                self.sift(h, x);
            }
        }
        let cell = &mut self.cells[c as usize];
        let item = cell.item.take().expect("live cell");
        let key = cell.key.clone();
        self.free_cells.push(c);
        Ok(Extracted { item, key, corrupted })
    }

    /// Moves every item of `from` into `into`; `from` is left empty.
    pub fn meld(&mut self, into: HeapId, from: HeapId) {
        if into == from {
            return;
        }
        let src = std::mem::take(&mut self.heaps[from.0 as usize]);
        {
            let dst = &mut self.heaps[into.0 as usize];
            dst.len += src.len;
            dst.insertions += src.insertions;
            dst.corrupted += src.corrupted;
        }
        for r in src.roots.into_iter().filter(|&r| r != NIL) {
            self.carry_insert(into, r);
        }
    }

    /// Hands every logged corruption (item, own key) to `f` and clears the log.
    pub fn drain_corruptions(&mut self, mut f: impl FnMut(&T, &K)) {
        for c in self.corruption_log.drain(..) {
            let cell = &self.cells[c as usize];
            if let Some(item) = &cell.item {
                f(item, &cell.key);
            }
        }
    }
}

/// A single soft heap: approximate min-priority queue that may raise the
/// keys of at most `ceil(eps * insertions)` stored items.
#[derive(Debug)]
pub struct SoftHeap<K, T> {
    arena: SoftHeapArena<K, T>,
    id: HeapId,
}

impl<K: Ord + Clone, T> SoftHeap<K, T> {
    pub fn new(epsilon: f64) -> Result<Self> {
        let mut arena = SoftHeapArena::new(epsilon)?;
        let id = arena.new_heap();
        Ok(Self { arena, id })
    }

    pub fn epsilon(&self) -> f64 {
        self.arena.epsilon()
    }

    pub fn insert(&mut self, key: K, item: T) {
        self.arena.insert(self.id, key, item);
    }

    pub fn extract_min(&mut self) -> Result<Extracted<K, T>> {
        self.arena.extract_min(self.id)
    }

    pub fn peek(&self) -> Option<(&T, &K, bool)> {
        self.arena.peek(self.id)
    }

    pub fn len(&self) -> usize {
        self.arena.len(self.id)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insertions(&self) -> usize {
        self.arena.insertions(self.id)
    }

    pub fn corrupted_count(&self) -> usize {
        self.arena.corrupted_count(self.id)
    }

    /// `ceil(eps * insertions)`.
    pub fn corruption_bound(&self) -> usize {
        (self.epsilon() * self.insertions() as f64).ceil() as usize
    }

    /// Absorbs `other`. Its items are re-inserted here, so their corruption
    /// state is reset; insertion counts are summed.
    pub fn meld(&mut self, mut other: SoftHeap<K, T>) {
        let mut moved = 0usize;
        while let Ok(e) = other.extract_min() {
            self.arena.insert(self.id, e.key, e.item);
            moved += 1;
        }
        let st = &mut self.arena.heaps[self.id.0 as usize];
        st.insertions = st.insertions - moved + other.insertions();
    }
}
