//! Chained backend whose entries are `(key, buffer index)` pairs.
//!
//! Each bucket owns a singly linked chain of nodes guarded by a per-bucket
//! lock. Nodes carry their own copy of the key, so lookups never touch the
//! user-facing key buffer. Node storage is a fixed arena recycled through a
//! second [`IndexHeap`].

use std::sync::atomic::{AtomicI32, AtomicU32, Ordering};

use parking_lot::Mutex;

use super::hash::hash_key;
use super::heap::IndexHeap;
use super::NIL;

pub(crate) enum InsertOutcome {
    Inserted(u32),
    Present,
    Exhausted,
}

pub(crate) struct GenericTable {
    arity: usize,
    heads: Vec<AtomicU32>,
    locks: Vec<Mutex<()>>,
    node_keys: Vec<AtomicI32>,
    node_slot: Vec<AtomicU32>,
    node_next: Vec<AtomicU32>,
    nodes: IndexHeap,
}

impl GenericTable {
    pub fn new(arity: usize, capacity: usize, buckets: usize) -> Self {
        Self {
            arity,
            heads: (0..buckets).map(|_| AtomicU32::new(NIL)).collect(),
            locks: (0..buckets).map(|_| Mutex::new(())).collect(),
            node_keys: (0..arity * capacity).map(|_| AtomicI32::new(0)).collect(),
            node_slot: (0..capacity).map(|_| AtomicU32::new(NIL)).collect(),
            node_next: (0..capacity).map(|_| AtomicU32::new(NIL)).collect(),
            nodes: IndexHeap::new(capacity),
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.heads.len()
    }

    #[inline]
    fn node_matches(&self, node: u32, key: &[i32]) -> bool {
        let base = node as usize * self.arity;
        self.node_keys[base..base + self.arity]
            .iter()
            .zip(key)
            .all(|(a, &b)| a.load(Ordering::Relaxed) == b)
    }

    #[inline]
    fn search(&self, key: &[i32], head: u32) -> Option<u32> {
        let mut node = head;
        while node != NIL {
            if self.node_matches(node, key) {
                return Some(node);
            }
            node = self.node_next[node as usize].load(Ordering::Acquire);
        }
        None
    }

    pub fn find(&self, key: &[i32]) -> Option<u32> {
        let b = hash_key(key, self.heads.len());
        self.search(key, self.heads[b].load(Ordering::Acquire))
            .map(|n| self.node_slot[n as usize].load(Ordering::Acquire))
    }

    /// One-pass lazy insertion of a single key.
    ///
    /// The chain is searched under the bucket lock and a buffer index is
    /// drawn from `index_heap` only once the key is known to be absent, so
    /// duplicates never touch the heap.
    pub fn insert(&self, key: &[i32], index_heap: &IndexHeap) -> InsertOutcome {
        let b = hash_key(key, self.heads.len());
        let _guard = self.locks[b].lock();
        let head = self.heads[b].load(Ordering::Acquire);
        if self.search(key, head).is_some() {
            return InsertOutcome::Present;
        }
        let Some(index) = index_heap.alloc() else {
            return InsertOutcome::Exhausted;
        };
        // One node per allocated buffer index, so the arena cannot run dry
        // before the index heap does.
        let node = self.nodes.alloc().expect("node arena exhausted before index heap");
        let base = node as usize * self.arity;
        for (dst, &k) in self.node_keys[base..base + self.arity].iter().zip(key) {
            dst.store(k, Ordering::Relaxed);
        }
        self.node_slot[node as usize].store(index, Ordering::Relaxed);
        self.node_next[node as usize].store(head, Ordering::Relaxed);
        self.heads[b].store(node, Ordering::Release);
        InsertOutcome::Inserted(index)
    }

    /// Unlinks `key` and returns its buffer index. The caller frees the index.
    pub fn erase(&self, key: &[i32]) -> Option<u32> {
        let b = hash_key(key, self.heads.len());
        let _guard = self.locks[b].lock();
        let mut prev = NIL;
        let mut node = self.heads[b].load(Ordering::Acquire);
        while node != NIL {
            let next = self.node_next[node as usize].load(Ordering::Acquire);
            if self.node_matches(node, key) {
                if prev == NIL {
                    self.heads[b].store(next, Ordering::Release);
                } else {
                    self.node_next[prev as usize].store(next, Ordering::Release);
                }
                let slot = self.node_slot[node as usize].swap(NIL, Ordering::AcqRel);
                self.nodes.free(node);
                return Some(slot);
            }
            prev = node;
            node = next;
        }
        None
    }

    /// Buffer indices of every entry, bucket order.
    pub fn collect_slots(&self, out: &mut Vec<u32>) {
        for head in &self.heads {
            let mut node = head.load(Ordering::Acquire);
            while node != NIL {
                out.push(self.node_slot[node as usize].load(Ordering::Acquire));
                node = self.node_next[node as usize].load(Ordering::Acquire);
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.allocated()
    }
}
