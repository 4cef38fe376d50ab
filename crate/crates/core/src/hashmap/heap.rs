//! Free list of buffer indices.
//!
//! The heap holds a permutation of `0..capacity`. Slots `[top, capacity)` are
//! free indices, `top` counts the indices currently handed out. Allocation
//! reads `slots[top]` and bumps `top`; freeing drops `top` and writes the
//! returned index into the vacated slot.
//!
//! Both transitions go through a single atomic on `top`, so concurrent
//! allocations never hand out the same index and concurrent frees never lose
//! one. Allocations and frees must not be interleaved within one parallel
//! phase: an allocator could read a slot before the freeing thread has
//! written it. The map only ever runs allocate-only or free-only phases.

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};

#[derive(Debug)]
pub struct IndexHeap {
    slots: Vec<AtomicU32>,
    top: AtomicUsize,
}

impl IndexHeap {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity <= u32::MAX as usize, "index heap capacity exceeds u32 range");
        Self {
            slots: (0..capacity as u32).map(AtomicU32::new).collect(),
            top: AtomicUsize::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    /// Number of indices currently allocated.
    pub fn allocated(&self) -> usize {
        self.top.load(Ordering::Acquire)
    }

    pub fn free_count(&self) -> usize {
        self.capacity() - self.allocated()
    }

    /// Takes one free index, or `None` if the heap is exhausted.
    pub fn alloc(&self) -> Option<u32> {
        let cap = self.capacity();
        let t = self
            .top
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |t| (t < cap).then_some(t + 1))
            .ok()?;
        Some(self.slots[t].load(Ordering::Acquire))
    }

    /// Reserves `n` consecutive heap slots and returns the first slot
    /// position; read the indices with [`IndexHeap::slot`].
    pub fn reserve(&self, n: usize) -> Option<usize> {
        let cap = self.capacity();
        self.top
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |t| {
                (t + n <= cap).then_some(t + n)
            })
            .ok()
    }

    #[inline]
    pub fn slot(&self, pos: usize) -> u32 {
        self.slots[pos].load(Ordering::Acquire)
    }

    /// Returns an allocated index to the heap.
    pub fn free(&self, index: u32) {
        let t = self.top.fetch_sub(1, Ordering::AcqRel);
        debug_assert!(t > 0, "free on an empty heap");
        self.slots[t - 1].store(index, Ordering::Release);
    }

    /// The free indices, `slots[top..]`.
    pub fn free_indices(&self) -> Vec<u32> {
        (self.allocated()..self.capacity()).map(|p| self.slot(p)).collect()
    }
}
