//! Binary snapshot container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic       4 bytes  "ASHL"
//! version     u32      1
//! capacity    u64
//! buckets     u64
//! size        u64      number of rows that follow
//! arity       u32
//! n_values    u32
//! n_values x { count u32, elem_bytes u32 }
//! size x row  { arity x i32 key, then each value's bytes in schema order }
//! ```
//!
//! Value elements are written little-endian by element width. Rows appear in
//! ascending buffer-index order; loading reinserts them, so indices may
//! differ after a round trip.

use std::io::{Read, Write};

use super::{Backend, SpatialHashMap, ValueSchema};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"ASHL";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Refuse absurd header values before allocating for them.
const MAX_ARITY: u32 = 1 << 16;
const MAX_VALUE_BYTES: u64 = 1 << 30;

fn to_le_elements(bytes: &mut [u8], elem_bytes: usize) {
    if cfg!(target_endian = "big") && elem_bytes > 1 {
        for e in bytes.chunks_exact_mut(elem_bytes) {
            e.reverse();
        }
    }
}

pub fn write_snapshot<W: Write>(map: &SpatialHashMap, mut w: W) -> Result<()> {
    let schemas = map.value_schemas();
    let mut active = map.active_indices();
    active.sort_unstable();

    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(map.capacity() as u64).to_le_bytes())?;
    w.write_all(&(map.bucket_count() as u64).to_le_bytes())?;
    w.write_all(&(active.len() as u64).to_le_bytes())?;
    w.write_all(&(map.arity() as u32).to_le_bytes())?;
    w.write_all(&(schemas.len() as u32).to_le_bytes())?;
    for s in &schemas {
        w.write_all(&(s.count as u32).to_le_bytes())?;
        w.write_all(&(s.elem_bytes as u32).to_le_bytes())?;
    }

    let keys = map.key_rows();
    let mut row = Vec::new();
    for &i in &active {
        row.clear();
        for &k in keys.row(i as usize) {
            row.extend_from_slice(&k.to_le_bytes());
        }
        for (s, schema) in schemas.iter().enumerate() {
            let start = row.len();
            row.extend_from_slice(map.value_bytes(s).row(i as usize));
            to_le_elements(&mut row[start..], schema.elem_bytes);
        }
        w.write_all(&row)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a snapshot into a fresh map with the stored capacity. The stored
/// bucket count is informational; `backend` decides the actual one.
pub fn read_snapshot<R: Read>(mut r: R, backend: Backend) -> Result<SpatialHashMap> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!("bad snapshot magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let capacity = read_u64(&mut r)?;
    let _buckets = read_u64(&mut r)?;
    let size = read_u64(&mut r)?;
    let arity = read_u32(&mut r)?;
    let n_values = read_u32(&mut r)?;
    if arity == 0 || arity > MAX_ARITY {
        return Err(Error::Format(format!("snapshot key arity {arity} out of range")));
    }
    if size > capacity || capacity == 0 || capacity >= u32::MAX as u64 {
        return Err(Error::Format(format!("snapshot size {size} / capacity {capacity} invalid")));
    }
    if n_values > 1024 {
        return Err(Error::Format(format!("snapshot declares {n_values} value buffers")));
    }
    let mut schemas = Vec::with_capacity(n_values as usize);
    for _ in 0..n_values {
        let count = read_u32(&mut r)? as usize;
        let elem_bytes = read_u32(&mut r)? as usize;
        if (count as u64) * (elem_bytes as u64) > MAX_VALUE_BYTES {
            return Err(Error::Format("snapshot value schema too large".into()));
        }
        schemas.push(ValueSchema::new(count, elem_bytes));
    }

    let size = size as usize;
    let arity = arity as usize;
    let mut keys = vec![0i32; size * arity];
    let mut values: Vec<Vec<u8>> =
        schemas.iter().map(|s| vec![0u8; size * s.value_bytes()]).collect();
    let mut kb = vec![0u8; arity * 4];
    for j in 0..size {
        r.read_exact(&mut kb)?;
        for (d, c) in kb.chunks_exact(4).enumerate() {
            keys[j * arity + d] = i32::from_le_bytes(c.try_into().unwrap());
        }
        for (s, schema) in schemas.iter().enumerate() {
            let w = schema.value_bytes();
            let dst = &mut values[s][j * w..(j + 1) * w];
            r.read_exact(dst)?;
            to_le_elements(dst, schema.elem_bytes);
        }
    }

    let mut map = SpatialHashMap::new(capacity as usize, arity, &schemas, backend)?;
    if size > 0 {
        let refs: Vec<&[u8]> = values.iter().map(Vec::as_slice).collect();
        let result = map.insert(&keys, &refs)?;
        if result.count() != size {
            return Err(Error::Format("snapshot contains duplicate keys".into()));
        }
    }
    Ok(map)
}
