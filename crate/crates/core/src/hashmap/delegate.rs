//! Integer-delegate backend: the table stores buffer indices only and
//! resolves keys through the key buffer.
//!
//! Chains are threaded through a `next` array indexed by buffer index, so
//! each active index is its own chain node. Insertion publishes a node with
//! a compare-and-swap on the bucket head; a lost race re-scans only the
//! nodes pushed since the previous attempt.

use std::sync::atomic::{AtomicU32, Ordering};

use rayon::prelude::*;

use super::buffer::KeyBuffer;
use super::hash::hash_key;
use super::NIL;

pub(crate) struct DelegateTable {
    heads: Vec<AtomicU32>,
    next: Vec<AtomicU32>,
}

impl DelegateTable {
    pub fn new(capacity: usize, buckets: usize) -> Self {
        Self {
            heads: (0..buckets).map(|_| AtomicU32::new(NIL)).collect(),
            next: (0..capacity).map(|_| AtomicU32::new(NIL)).collect(),
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.heads.len()
    }

    fn scan(&self, keys: &KeyBuffer, key: &[i32], from: u32, until: u32) -> Option<u32> {
        let mut node = from;
        while node != until {
            if keys.row(node as usize) == key {
                return Some(node);
            }
            node = self.next[node as usize].load(Ordering::Acquire);
        }
        None
    }

    pub fn find(&self, keys: &KeyBuffer, key: &[i32]) -> Option<u32> {
        let b = hash_key(key, self.heads.len());
        self.scan(keys, key, self.heads[b].load(Ordering::Acquire), NIL)
    }

    /// Hashing pass: links `index` under the key already stored at
    /// `keys.row(index)`. Returns false if an equal key is linked already.
    /// The key buffer is only read here.
    pub fn insert_index(&self, keys: &KeyBuffer, index: u32) -> bool {
        let key = keys.row(index as usize);
        let b = hash_key(key, self.heads.len());
        let mut head = self.heads[b].load(Ordering::Acquire);
        let mut until = NIL;
        loop {
            if self.scan(keys, key, head, until).is_some() {
                return false;
            }
            self.next[index as usize].store(head, Ordering::Relaxed);
            match self.heads[b].compare_exchange(head, index, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return true,
                Err(current) => {
                    until = head;
                    head = current;
                }
            }
        }
    }

    /// Unlinks every index in `removed` (sorted, unique). Buckets are
    /// rebuilt independently in parallel.
    pub fn unlink(&self, keys: &KeyBuffer, removed: &[u32]) {
        let mut buckets: Vec<usize> = removed
            .par_iter()
            .map(|&i| hash_key(keys.row(i as usize), self.heads.len()))
            .collect();
        buckets.par_sort_unstable();
        buckets.dedup();
        buckets.par_iter().for_each(|&b| {
            let mut prev = NIL;
            let mut node = self.heads[b].load(Ordering::Acquire);
            while node != NIL {
                let next = self.next[node as usize].load(Ordering::Acquire);
                if removed.binary_search(&node).is_ok() {
                    if prev == NIL {
                        self.heads[b].store(next, Ordering::Release);
                    } else {
                        self.next[prev as usize].store(next, Ordering::Release);
                    }
                    self.next[node as usize].store(NIL, Ordering::Relaxed);
                } else {
                    prev = node;
                }
                node = next;
            }
        });
    }

    pub fn collect_slots(&self, out: &mut Vec<u32>) {
        for head in &self.heads {
            let mut node = head.load(Ordering::Acquire);
            while node != NIL {
                out.push(node);
                node = self.next[node as usize].load(Ordering::Acquire);
            }
        }
    }
}
