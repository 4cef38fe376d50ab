//! Index-first parallel hash map.
//!
//! Keys and values live in flat buffers addressed by *buffer index*; the
//! hashing backend only maps keys to those indices. Every batch operation
//! returns a [`BatchResult`] of indices and masks that callers use to gather
//! from or scatter into the buffers directly.
//!
//! # Concurrency
//!
//! Batch operations run in parallel on the current rayon pool. Mutating
//! batches (`insert`, `activate`, `erase`, `rehash`) take `&mut self`, so the
//! borrow checker enforces exclusivity against each other and against
//! readers. `find` and the read-only buffer views take `&self` and may run
//! concurrently from several threads.

mod buffer;
mod delegate;
mod generic;
mod hash;
mod heap;
mod snapshot;

use std::sync::atomic::{AtomicBool, Ordering};

use bytemuck::Pod;
use rayon::prelude::*;

pub use buffer::{Rows, RowsMut, ValueSchema};
pub use hash::hash_key;
pub use heap::IndexHeap;
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use crate::error::{invalid, Error, Result};
use buffer::{copy_value, KeyBuffer, SharedRows, ValueBuffer};
use delegate::DelegateTable;
use generic::{GenericTable, InsertOutcome};

pub(crate) const NIL: u32 = u32::MAX;

/// Index reported at positions whose mask is false. Callers must not rely
/// on its value.
pub const UNSPECIFIED_INDEX: u32 = u32::MAX;

/// Which chaining implementation backs the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Backend {
    /// Locked bucket chains of `(key, buffer index)` nodes, one bucket per
    /// capacity slot, one-pass lazy insertion.
    #[default]
    Generic,
    /// Lock-free chains of bare buffer indices resolved through the key
    /// buffer, two buckets per capacity slot, three-pass insertion.
    IntegerDelegate,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Generic => "generic",
            Backend::IntegerDelegate => "delegate",
        }
    }

    /// Bucket count used for a given capacity.
    pub fn buckets_for(&self, capacity: usize) -> usize {
        match self {
            Backend::Generic => capacity,
            Backend::IntegerDelegate => 2 * capacity,
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(Backend::Generic),
            "delegate" | "integer-delegate" => Ok(Backend::IntegerDelegate),
            other => invalid(format!("unknown backend '{other}'")),
        }
    }
}

/// Parallel index and mask arrays, one entry per input key.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatchResult {
    pub indices: Vec<u32>,
    pub masks: Vec<bool>,
}

impl BatchResult {
    fn unset(n: usize) -> Self {
        Self { indices: vec![UNSPECIFIED_INDEX; n], masks: vec![false; n] }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Number of true masks.
    pub fn count(&self) -> usize {
        self.masks.iter().filter(|&&m| m).count()
    }

    /// `(position, index)` for every true mask.
    pub fn hits(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.masks
            .iter()
            .zip(&self.indices)
            .enumerate()
            .filter_map(|(j, (&m, &i))| m.then_some((j, i)))
    }
}

enum Table {
    Generic(GenericTable),
    Delegate(DelegateTable),
}

/// Capacity-bounded map from fixed-arity `i32` keys to zero or more value
/// buffers. With no value schemas it behaves as a hash set.
pub struct SpatialHashMap {
    arity: usize,
    capacity: usize,
    backend: Backend,
    keys: KeyBuffer,
    values: Vec<ValueBuffer>,
    heap: IndexHeap,
    table: Table,
    auto_grow: bool,
}

impl std::fmt::Debug for SpatialHashMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpatialHashMap")
            .field("arity", &self.arity)
            .field("capacity", &self.capacity)
            .field("buckets", &self.bucket_count())
            .field("size", &self.size())
            .field("backend", &self.backend)
            .field("values", &self.value_schemas())
            .finish()
    }
}

impl SpatialHashMap {
    pub fn new(
        capacity: usize,
        arity: usize,
        value_schemas: &[ValueSchema],
        backend: Backend,
    ) -> Result<Self> {
        if capacity == 0 {
            return invalid("capacity must be positive");
        }
        if arity == 0 {
            return invalid("key arity must be positive");
        }
        if capacity >= NIL as usize {
            return invalid(format!("capacity {capacity} exceeds the u32 index range"));
        }
        let buckets = backend.buckets_for(capacity);
        let table = match backend {
            Backend::Generic => Table::Generic(GenericTable::new(arity, capacity, buckets)),
            Backend::IntegerDelegate => Table::Delegate(DelegateTable::new(capacity, buckets)),
        };
        Ok(Self {
            arity,
            capacity,
            backend,
            keys: KeyBuffer::new(arity, capacity),
            values: value_schemas.iter().map(|&s| ValueBuffer::new(s, capacity)).collect(),
            heap: IndexHeap::new(capacity),
            table,
            auto_grow: true,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn bucket_count(&self) -> usize {
        match &self.table {
            Table::Generic(t) => t.bucket_count(),
            Table::Delegate(t) => t.bucket_count(),
        }
    }

    /// Number of active entries.
    pub fn size(&self) -> usize {
        self.heap.allocated()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }

    pub fn value_schemas(&self) -> Vec<ValueSchema> {
        self.values.iter().map(|v| v.schema).collect()
    }

    /// When enabled (the default) insert and activate rehash to a doubled
    /// capacity before a batch that would not fit. When disabled, such a
    /// batch fails with [`Error::CapacityExceeded`].
    pub fn set_auto_grow(&mut self, enabled: bool) {
        self.auto_grow = enabled;
    }

    pub fn auto_grow(&self) -> bool {
        self.auto_grow
    }

    fn batch_len(&self, keys: &[i32]) -> Result<usize> {
        if keys.len() % self.arity != 0 {
            return invalid(format!(
                "key batch of {} integers is not a multiple of arity {}",
                keys.len(),
                self.arity
            ));
        }
        Ok(keys.len() / self.arity)
    }

    fn check_values(&self, n: usize, values: &[&[u8]]) -> Result<()> {
        if values.len() != self.values.len() {
            return invalid(format!(
                "expected {} value batches, got {}",
                self.values.len(),
                values.len()
            ));
        }
        for (s, (batch, buf)) in values.iter().zip(&self.values).enumerate() {
            let want = n * buf.schema.value_bytes();
            if batch.len() != want {
                return invalid(format!(
                    "value batch {s} has {} bytes, expected {want} for {n} keys",
                    batch.len()
                ));
            }
        }
        Ok(())
    }

    #[inline]
    fn key<'k>(&self, keys: &'k [i32], j: usize) -> &'k [i32] {
        &keys[j * self.arity..(j + 1) * self.arity]
    }

    /// Looks up a single key.
    #[inline]
    pub fn find_one(&self, key: &[i32]) -> Option<u32> {
        debug_assert_eq!(key.len(), self.arity);
        match &self.table {
            Table::Generic(t) => t.find(key),
            Table::Delegate(t) => t.find(&self.keys, key),
        }
    }

    /// Batch lookup. `masks[j]` is true iff key `j` is present, in which case
    /// `indices[j]` is its buffer index.
    pub fn find(&self, keys: &[i32]) -> Result<BatchResult> {
        let n = self.batch_len(keys)?;
        let mut result = BatchResult::unset(n);
        result
            .indices
            .par_iter_mut()
            .zip(result.masks.par_iter_mut())
            .enumerate()
            .for_each(|(j, (index, mask))| {
                if let Some(i) = self.find_one(self.key(keys, j)) {
                    *index = i;
                    *mask = true;
                }
            });
        Ok(result)
    }

    /// Inserts keys with one value batch per value schema, each holding
    /// `n * value_bytes` bytes. Existing keys are left untouched and report
    /// a false mask; among duplicates within the batch exactly one position
    /// wins (which one is unspecified under parallel execution).
    pub fn insert(&mut self, keys: &[i32], values: &[&[u8]]) -> Result<BatchResult> {
        let n = self.batch_len(keys)?;
        self.check_values(n, values)?;
        if n == 0 {
            return Ok(BatchResult::default());
        }
        self.ensure_room(keys, n)?;
        self.insert_unchecked(keys, Some(values))
    }

    /// Typed convenience over [`SpatialHashMap::insert`] for single-schema
    /// maps.
    pub fn insert_typed<T: Pod>(&mut self, keys: &[i32], values: &[T]) -> Result<BatchResult> {
        self.insert(keys, &[bytemuck::cast_slice(values)])
    }

    /// Makes every key present and returns its buffer index, without
    /// writing value buffers. Unlike [`insert`](Self::insert), masks report
    /// association: every position whose key is present after the call,
    /// fresh or pre-existing, gets its index and a true mask.
    pub fn activate(&mut self, keys: &[i32]) -> Result<BatchResult> {
        let n = self.batch_len(keys)?;
        if n == 0 {
            return Ok(BatchResult::default());
        }
        self.ensure_room(keys, n)?;
        let mut result = self.insert_unchecked(keys, None)?;
        let this = &*self;
        result
            .indices
            .par_iter_mut()
            .zip(result.masks.par_iter_mut())
            .enumerate()
            .filter(|(_, (_, mask))| !**mask)
            .for_each(|(j, (index, mask))| {
                if let Some(i) = this.find_one(this.key(keys, j)) {
                    *index = i;
                    *mask = true;
                }
            });
        Ok(result)
    }

    /// Removes keys. Each present key is removed once; duplicates within the
    /// batch report true at exactly one position.
    pub fn erase(&mut self, keys: &[i32]) -> Result<Vec<bool>> {
        let n = self.batch_len(keys)?;
        let mut masks = vec![false; n];
        if n == 0 {
            return Ok(masks);
        }
        let arity = self.arity;
        match &self.table {
            Table::Generic(table) => {
                let heap = &self.heap;
                masks.par_iter_mut().enumerate().for_each(|(j, mask)| {
                    if let Some(i) = table.erase(&keys[j * arity..(j + 1) * arity]) {
                        heap.free(i);
                        *mask = true;
                    }
                });
            }
            Table::Delegate(table) => {
                let key_buf = &self.keys;
                let mut hits: Vec<(u32, usize)> = (0..n)
                    .into_par_iter()
                    .filter_map(|j| {
                        table.find(key_buf, &keys[j * arity..(j + 1) * arity]).map(|i| (i, j))
                    })
                    .collect();
                hits.par_sort_unstable();
                hits.dedup_by_key(|(i, _)| *i);
                for &(_, j) in &hits {
                    masks[j] = true;
                }
                let removed: Vec<u32> = hits.iter().map(|&(i, _)| i).collect();
                table.unlink(key_buf, &removed);
                let heap = &self.heap;
                removed.par_iter().for_each(|&i| heap.free(i));
            }
        }
        Ok(masks)
    }

    /// Every active buffer index, in no particular order.
    pub fn active_indices(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.size());
        match &self.table {
            Table::Generic(t) => t.collect_slots(&mut out),
            Table::Delegate(t) => t.collect_slots(&mut out),
        }
        out
    }

    /// Rebuilds the map with `new_capacity` slots. Content is preserved,
    /// buffer indices are reassigned.
    pub fn rehash(&mut self, new_capacity: usize) -> Result<()> {
        let size = self.size();
        if new_capacity < size {
            return invalid(format!(
                "rehash capacity {new_capacity} is below the current size {size}"
            ));
        }
        let mut active = self.active_indices();
        active.sort_unstable();
        let keys = self.gather_keys(&active);
        let values: Vec<Vec<u8>> = (0..self.values.len()).map(|s| self.gather_values(s, &active)).collect();
        let schemas = self.value_schemas();
        let mut fresh = SpatialHashMap::new(new_capacity, self.arity, &schemas, self.backend)?;
        if !active.is_empty() {
            let refs: Vec<&[u8]> = values.iter().map(Vec::as_slice).collect();
            let result = fresh.insert_unchecked(&keys, Some(&refs))?;
            debug_assert_eq!(result.count(), active.len());
        }
        fresh.auto_grow = self.auto_grow;
        *self = fresh;
        Ok(())
    }

    /// Copies the key rows of `indices` into one flat batch.
    pub fn gather_keys(&self, indices: &[u32]) -> Vec<i32> {
        let mut out = Vec::with_capacity(indices.len() * self.arity);
        for &i in indices {
            out.extend_from_slice(self.keys.row(i as usize));
        }
        out
    }

    /// Copies the value rows of `indices` from value buffer `schema`.
    pub fn gather_values(&self, schema: usize, indices: &[u32]) -> Vec<u8> {
        let buf = &self.values[schema];
        let mut out = Vec::with_capacity(indices.len() * buf.schema.value_bytes());
        for &i in indices {
            out.extend_from_slice(buf.row(i as usize));
        }
        out
    }

    /// Read-only key buffer, one row per buffer index. Rows of inactive
    /// indices hold stale data.
    pub fn key_rows(&self) -> Rows<'_, i32> {
        Rows::new(&self.keys.data, self.arity)
    }

    /// Raw bytes of value buffer `schema`.
    pub fn value_bytes(&self, schema: usize) -> Rows<'_, u8> {
        let buf = &self.values[schema];
        Rows::new(buf.bytes(), buf.schema.value_bytes())
    }

    pub fn value_bytes_mut(&mut self, schema: usize) -> RowsMut<'_, u8> {
        let buf = &mut self.values[schema];
        let w = buf.schema.value_bytes();
        RowsMut::new(buf.bytes_mut(), w)
    }

    /// Typed read view of value buffer `schema`; `T` must match the
    /// schema's element width.
    pub fn values<T: Pod>(&self, schema: usize) -> Result<Rows<'_, T>> {
        let buf = self.value_buffer(schema)?;
        Ok(Rows::new(buf.typed::<T>()?, buf.schema.count))
    }

    /// Typed write view of value buffer `schema`. Writing rows of active
    /// indices is the supported in-place update path.
    pub fn values_mut<T: Pod>(&mut self, schema: usize) -> Result<RowsMut<'_, T>> {
        let count = self.value_buffer(schema)?.schema.count;
        let buf = &mut self.values[schema];
        Ok(RowsMut::new(buf.typed_mut::<T>()?, count))
    }

    /// Typed write views of two distinct value buffers at once.
    pub fn values_mut_pair<A: Pod, B: Pod>(
        &mut self,
        first: usize,
        second: usize,
    ) -> Result<(RowsMut<'_, A>, RowsMut<'_, B>)> {
        if first == second {
            return invalid("value buffers must be distinct");
        }
        self.value_buffer(first)?;
        self.value_buffer(second)?;
        let (lo, hi) = (first.min(second), first.max(second));
        let (left, right) = self.values.split_at_mut(hi);
        let (a, b) = if first < second { (&mut left[lo], &mut right[0]) } else { (&mut right[0], &mut left[lo]) };
        let (ca, cb) = (a.schema.count, b.schema.count);
        Ok((RowsMut::new(a.typed_mut::<A>()?, ca), RowsMut::new(b.typed_mut::<B>()?, cb)))
    }

    fn value_buffer(&self, schema: usize) -> Result<&ValueBuffer> {
        match self.values.get(schema) {
            Some(b) => Ok(b),
            None => invalid(format!("no value buffer {schema}; map has {}", self.values.len())),
        }
    }

    /// Grows the map before a batch of `n` keys if it might not fit.
    fn ensure_room(&mut self, keys: &[i32], n: usize) -> Result<()> {
        if !self.auto_grow || self.size() + n <= self.capacity {
            return Ok(());
        }
        let needed = self.size() + self.count_new_unique(keys)?;
        if needed <= self.capacity {
            return Ok(());
        }
        let mut new_capacity = self.capacity;
        while new_capacity < needed {
            new_capacity *= 2;
        }
        self.rehash(new_capacity)
    }

    /// Distinct keys of the batch not yet present.
    fn count_new_unique(&self, keys: &[i32]) -> Result<usize> {
        let found = self.find(keys)?;
        let mut absent: Vec<&[i32]> = keys
            .par_chunks(self.arity)
            .zip(found.masks.par_iter())
            .filter_map(|(k, &m)| (!m).then_some(k))
            .collect();
        absent.par_sort_unstable();
        absent.dedup();
        Ok(absent.len())
    }

    fn insert_unchecked(&mut self, keys: &[i32], values: Option<&[&[u8]]>) -> Result<BatchResult> {
        match self.table {
            Table::Generic(_) => self.insert_generic(keys, values),
            Table::Delegate(_) => self.insert_delegate(keys, values),
        }
    }

    fn insert_generic(&mut self, keys: &[i32], values: Option<&[&[u8]]>) -> Result<BatchResult> {
        let arity = self.arity;
        let n = keys.len() / arity;
        let Table::Generic(table) = &self.table else { unreachable!() };
        let heap = &self.heap;
        let key_rows = SharedRows::new(&mut self.keys.data, arity);
        let value_rows: Vec<(SharedRows<'_, u8>, usize)> = self
            .values
            .iter_mut()
            .map(|v| {
                let w = v.schema.value_bytes();
                (SharedRows::new(v.bytes_mut(), w), w)
            })
            .collect();
        let exhausted = AtomicBool::new(false);

        let mut result = BatchResult::unset(n);
        result
            .indices
            .par_iter_mut()
            .zip(result.masks.par_iter_mut())
            .enumerate()
            .for_each(|(j, (index, mask))| {
                let key = &keys[j * arity..(j + 1) * arity];
                match table.insert(key, heap) {
                    InsertOutcome::Inserted(i) => {
                        // SAFETY: `i` was just allocated to this worker and is
                        // not yet visible to any other.
                        unsafe { key_rows.row_mut(i as usize) }.copy_from_slice(key);
                        if let Some(values) = values {
                            for ((rows, w), batch) in value_rows.iter().zip(values) {
                                // SAFETY: as above.
                                let dst = unsafe { rows.row_mut(i as usize) };
                                copy_value(dst, &batch[j * w..(j + 1) * w]);
                            }
                        }
                        *index = i;
                        *mask = true;
                    }
                    InsertOutcome::Present => {}
                    InsertOutcome::Exhausted => exhausted.store(true, Ordering::Relaxed),
                }
            });
        if exhausted.load(Ordering::Relaxed) {
            return Err(Error::CapacityExceeded {
                needed: self.size() + result.masks.iter().filter(|&&m| !m).count(),
                capacity: self.capacity,
            });
        }
        Ok(result)
    }

    /// Three-pass insertion: (1) copy every candidate key into freshly
    /// reserved buffer slots, (2) hash the slots with the key buffer
    /// read-only, (3) copy values for winners and free the losers.
    ///
    /// Candidates are processed in chunks no larger than the free slot
    /// count, so a nearly full map still accepts batches whose new keys fit.
    fn insert_delegate(&mut self, keys: &[i32], values: Option<&[&[u8]]>) -> Result<BatchResult> {
        let arity = self.arity;
        let n = keys.len() / arity;
        let mut result = BatchResult::unset(n);
        let mut start = 0;
        while start < n {
            let free = self.heap.free_count();
            if free == 0 {
                // Whatever is left must already be present to succeed.
                let rest = &keys[start * arity..];
                let found = self.find(rest)?;
                if found.masks.iter().any(|&m| !m) {
                    return Err(Error::CapacityExceeded {
                        needed: self.size() + found.masks.iter().filter(|&&m| !m).count(),
                        capacity: self.capacity,
                    });
                }
                break;
            }
            let end = n.min(start + free);
            self.delegate_chunk(keys, values, start..end, &mut result);
            start = end;
        }
        Ok(result)
    }

    fn delegate_chunk(
        &mut self,
        keys: &[i32],
        values: Option<&[&[u8]]>,
        range: std::ops::Range<usize>,
        result: &mut BatchResult,
    ) {
        let arity = self.arity;
        let len = range.len();
        let base = self.heap.reserve(len).expect("chunk larger than free slot count");

        // Pass 1: copy all candidate keys.
        let slots: Vec<u32> = {
            let heap = &self.heap;
            let key_rows = SharedRows::new(&mut self.keys.data, arity);
            (0..len)
                .into_par_iter()
                .map(|t| {
                    let i = heap.slot(base + t);
                    let j = range.start + t;
                    // SAFETY: reserved slots are distinct and owned by this batch.
                    unsafe { key_rows.row_mut(i as usize) }.copy_from_slice(&keys[j * arity..(j + 1) * arity]);
                    i
                })
                .collect()
        };

        #[cfg(debug_assertions)]
        let checksum = key_checksum(&self.keys.data);

        // Pass 2: hash with the key buffer read-only.
        let won: Vec<bool> = {
            let Table::Delegate(table) = &self.table else { unreachable!() };
            let key_buf = &self.keys;
            slots.par_iter().map(|&i| table.insert_index(key_buf, i)).collect()
        };

        // Pass 3: values for winners, losers back to the heap.
        {
            let heap = &self.heap;
            let value_rows: Vec<(SharedRows<'_, u8>, usize)> = self
                .values
                .iter_mut()
                .map(|v| {
                    let w = v.schema.value_bytes();
                    (SharedRows::new(v.bytes_mut(), w), w)
                })
                .collect();
            let out_idx = &mut result.indices[range.clone()];
            let out_mask = &mut result.masks[range.clone()];
            out_idx
                .par_iter_mut()
                .zip(out_mask.par_iter_mut())
                .enumerate()
                .for_each(|(t, (index, mask))| {
                    let i = slots[t];
                    if won[t] {
                        if let Some(values) = values {
                            let j = range.start + t;
                            for ((rows, w), batch) in value_rows.iter().zip(values) {
                                // SAFETY: winning slots are distinct.
                                let dst = unsafe { rows.row_mut(i as usize) };
                                copy_value(dst, &batch[j * w..(j + 1) * w]);
                            }
                        }
                        *index = i;
                        *mask = true;
                    } else {
                        heap.free(i);
                    }
                });
        }

        #[cfg(debug_assertions)]
        debug_assert_eq!(
            checksum,
            key_checksum(&self.keys.data),
            "key buffer modified after the copy pass"
        );
    }

    /// Verifies heap conservation and buffer consistency. Intended for tests
    /// and debugging; runs in O(capacity).
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let active = self.active_indices();
        if active.len() != self.size() {
            return Err(format!("{} linked entries but size {}", active.len(), self.size()));
        }
        if let Table::Generic(t) = &self.table {
            if t.node_count() != self.size() {
                return Err(format!("{} nodes for size {}", t.node_count(), self.size()));
            }
        }
        let mut seen = vec![false; self.capacity];
        for &i in &active {
            let i = i as usize;
            if i >= self.capacity || seen[i] {
                return Err(format!("active index {i} out of range or duplicated"));
            }
            seen[i] = true;
            if self.find_one(self.keys.row(i)) != Some(i as u32) {
                return Err(format!("key at index {i} does not resolve to itself"));
            }
        }
        for i in self.heap.free_indices() {
            let i = i as usize;
            if i >= self.capacity || seen[i] {
                return Err(format!("free index {i} is also active or duplicated"));
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err("an index is neither active nor free".into());
        }
        Ok(())
    }
}

#[cfg(debug_assertions)]
fn key_checksum(data: &[i32]) -> u64 {
    data.par_iter()
        .enumerate()
        .map(|(p, &k)| (k as u32 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15 ^ p as u64))
        .reduce(|| 0, u64::wrapping_add)
}

/// Hash set over fixed-arity `i32` keys: a [`SpatialHashMap`] without value
/// buffers.
#[derive(Debug)]
pub struct SpatialHashSet {
    map: SpatialHashMap,
}

impl SpatialHashSet {
    pub fn new(capacity: usize, arity: usize, backend: Backend) -> Result<Self> {
        Ok(Self { map: SpatialHashMap::new(capacity, arity, &[], backend)? })
    }

    /// Inserts keys; true masks mark the first-seen position of each new key.
    pub fn insert(&mut self, keys: &[i32]) -> Result<BatchResult> {
        self.map.insert(keys, &[])
    }

    pub fn find(&self, keys: &[i32]) -> Result<BatchResult> {
        self.map.find(keys)
    }

    pub fn contains(&self, key: &[i32]) -> bool {
        self.map.find_one(key).is_some()
    }

    pub fn erase(&mut self, keys: &[i32]) -> Result<Vec<bool>> {
        self.map.erase(keys)
    }

    pub fn size(&self) -> usize {
        self.map.size()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_map(&self) -> &SpatialHashMap {
        &self.map
    }

    pub fn into_map(self) -> SpatialHashMap {
        self.map
    }
}
