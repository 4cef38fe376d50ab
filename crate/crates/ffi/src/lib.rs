//! C ABI over the spatialhash map and voxel downsampling.
//!
//! Maps are addressed by integer handles from a process-wide registry. A
//! destroyed or unknown handle yields `SH_STATUS_INVALID_HANDLE`, never a
//! crash. Every call returns a status code; on failure the message is
//! available from `sh_last_error` on the calling thread. Calls on the same
//! handle serialize on a per-map lock.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, LazyLock, Mutex};

use spatialhash::geometry::voxel_downsample;
use spatialhash::hashmap::{read_snapshot, write_snapshot};
use spatialhash::{Backend, Error, SpatialHashMap, ValueSchema};

/// Opaque map handle. Zero is never a valid handle.
pub type ShMap = u64;

pub const SH_BACKEND_GENERIC: u32 = 0;
pub const SH_BACKEND_INTEGER_DELEGATE: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    InvalidHandle = 3,
    CapacityExceeded = 4,
    Format = 5,
    Io = 6,
    /// Output buffer too small; the required length was written back.
    BufferTooSmall = 7,
    Panic = 8,
}

type Shared = Arc<Mutex<SpatialHashMap>>;

static REGISTRY: LazyLock<Mutex<HashMap<u64, Shared>>> = LazyLock::new(Default::default);
static NEXT_HANDLE: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Fail(ShStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e.root() {
            Error::InvalidArgument(_) => ShStatus::InvalidArgument,
            Error::CapacityExceeded { .. } => ShStatus::CapacityExceeded,
            Error::Format(_) => ShStatus::Format,
            _ => ShStatus::Io,
        };
        Fail(status, e.to_string())
    }
}

fn fail<T>(status: ShStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status plus last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ShStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ShStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            ShStatus::Panic
        }
    }
}

fn lookup(h: ShMap) -> Result<Shared, Fail> {
    let reg = REGISTRY.lock().unwrap_or_else(|p| p.into_inner());
    match reg.get(&h) {
        Some(m) => Ok(m.clone()),
        None => fail(ShStatus::InvalidHandle, format!("invalid map handle {h}")),
    }
}

fn with_map<T>(h: ShMap, f: impl FnOnce(&mut SpatialHashMap) -> Result<T, Fail>) -> Result<T, Fail> {
    let shared = lookup(h)?;
    let mut map = shared.lock().unwrap_or_else(|p| p.into_inner());
    f(&mut map)
}

fn register(map: SpatialHashMap) -> ShMap {
    let h = NEXT_HANDLE.fetch_add(1, Ordering::Relaxed);
    REGISTRY.lock().unwrap_or_else(|p| p.into_inner()).insert(h, Arc::new(Mutex::new(map)));
    h
}

fn backend(code: u32) -> Result<Backend, Fail> {
    match code {
        SH_BACKEND_GENERIC => Ok(Backend::Generic),
        SH_BACKEND_INTEGER_DELEGATE => Ok(Backend::IntegerDelegate),
        _ => fail(ShStatus::InvalidArgument, format!("unknown backend {code}")),
    }
}

fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    // SAFETY: caller passes a valid, writable pointer or null.
    unsafe { p.as_mut() }.map_or_else(|| fail(ShStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(ShStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Option<&'a mut [T]> {
    if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(p, len))
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<std::path::PathBuf, Fail> {
    if p.is_null() {
        return fail(ShStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(s.into()),
        Err(_) => fail(ShStatus::InvalidArgument, "path is not valid UTF-8"),
    }
}

/// Flat keys for `n` entries, validated against the map arity.
unsafe fn keys_arg<'a>(map: &SpatialHashMap, keys: *const i32, n: usize) -> Result<&'a [i32], Fail> {
    let len = n.checked_mul(map.arity()).ok_or_else(|| Fail(ShStatus::InvalidArgument, "key count overflows".into()))?;
    slice(keys, len, "keys")
}

unsafe fn write_result(indices: *mut u32, masks: *mut u8, r: &spatialhash::BatchResult) {
    if let Some(o) = slice_mut(indices, r.len()) {
        o.copy_from_slice(&r.indices);
    }
    if let Some(o) = slice_mut(masks, r.len()) {
        for (d, &m) in o.iter_mut().zip(&r.masks) {
            *d = m as u8;
        }
    }
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on this thread.
#[no_mangle]
pub extern "C" fn sh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a map. `value_counts[i]` elements of `value_elem_bytes[i]`
/// bytes make up value buffer `i`; pass `n_values = 0` for a set.
///
/// # Safety
/// Array arguments must hold `n_values` entries; `out_map` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sh_map_create(
    capacity: usize,
    arity: usize,
    value_counts: *const usize,
    value_elem_bytes: *const usize,
    n_values: usize,
    backend_code: u32,
    out_map: *mut ShMap,
) -> ShStatus {
    guard(|| {
        let out_map = out(out_map, "out_map")?;
        let counts = slice(value_counts, n_values, "value_counts")?;
        let elems = slice(value_elem_bytes, n_values, "value_elem_bytes")?;
        let schemas: Vec<ValueSchema> = counts.iter().zip(elems).map(|(&c, &e)| ValueSchema::new(c, e)).collect();
        let map = SpatialHashMap::new(capacity, arity, &schemas, backend(backend_code)?)?;
        *out_map = register(map);
        Ok(())
    })
}

/// Releases a map. Later calls with the handle fail with
/// `SH_STATUS_INVALID_HANDLE`.
#[no_mangle]
pub extern "C" fn sh_map_destroy(map: ShMap) -> ShStatus {
    guard(|| match REGISTRY.lock().unwrap_or_else(|p| p.into_inner()).remove(&map) {
        Some(_) => Ok(()),
        None => fail(ShStatus::InvalidHandle, format!("invalid map handle {map}")),
    })
}

/// Inserts `n` keys. `values[i]` points at `n` packed values for value
/// buffer `i`. `out_indices` and `out_masks` hold `n` entries each and
/// may be null.
///
/// # Safety
/// Pointers must be valid for the lengths implied by `n` and the schema.
#[no_mangle]
pub unsafe extern "C" fn sh_map_insert(
    map: ShMap,
    keys: *const i32,
    n: usize,
    values: *const *const u8,
    n_values: usize,
    out_indices: *mut u32,
    out_masks: *mut u8,
) -> ShStatus {
    guard(|| {
        with_map(map, |m| {
            let keys = keys_arg(m, keys, n)?;
            let schemas = m.value_schemas();
            if n_values != schemas.len() {
                return fail(
                    ShStatus::InvalidArgument,
                    format!("map has {} value buffers, got {n_values}", schemas.len()),
                );
            }
            let ptrs = slice(values, n_values, "values")?;
            let mut vals = Vec::with_capacity(n_values);
            for (p, s) in ptrs.iter().zip(&schemas) {
                vals.push(slice(*p, n * s.value_bytes(), "value buffer")?);
            }
            let r = m.insert(keys, &vals)?;
            write_result(out_indices, out_masks, &r);
            Ok(())
        })
    })
}

/// Reserves entries for `n` keys without writing values. Every key present
/// afterwards reports mask 1 and its buffer index.
///
/// # Safety
/// `keys` holds `n * arity` ints; outputs hold `n` entries or are null.
#[no_mangle]
pub unsafe extern "C" fn sh_map_activate(
    map: ShMap,
    keys: *const i32,
    n: usize,
    out_indices: *mut u32,
    out_masks: *mut u8,
) -> ShStatus {
    guard(|| {
        with_map(map, |m| {
            let r = m.activate(keys_arg(m, keys, n)?)?;
            write_result(out_indices, out_masks, &r);
            Ok(())
        })
    })
}

/// # Safety
/// `keys` holds `n * arity` ints; outputs hold `n` entries or are null.
#[no_mangle]
pub unsafe extern "C" fn sh_map_find(
    map: ShMap,
    keys: *const i32,
    n: usize,
    out_indices: *mut u32,
    out_masks: *mut u8,
) -> ShStatus {
    guard(|| {
        with_map(map, |m| {
            let r = m.find(keys_arg(m, keys, n)?)?;
            write_result(out_indices, out_masks, &r);
            Ok(())
        })
    })
}

/// # Safety
/// `keys` holds `n * arity` ints; `out_masks` holds `n` bytes or is null.
#[no_mangle]
pub unsafe extern "C" fn sh_map_erase(map: ShMap, keys: *const i32, n: usize, out_masks: *mut u8) -> ShStatus {
    guard(|| {
        with_map(map, |m| {
            let r = m.erase(keys_arg(m, keys, n)?)?;
            if let Some(o) = slice_mut(out_masks, n) {
                for (d, &b) in o.iter_mut().zip(&r) {
                    *d = b as u8;
                }
            }
            Ok(())
        })
    })
}

/// # Safety
/// `out_size` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sh_map_size(map: ShMap, out_size: *mut usize) -> ShStatus {
    guard(|| {
        let o = out(out_size, "out_size")?;
        *o = with_map(map, |m| Ok(m.size()))?;
        Ok(())
    })
}

/// # Safety
/// `out_capacity` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sh_map_capacity(map: ShMap, out_capacity: *mut usize) -> ShStatus {
    guard(|| {
        let o = out(out_capacity, "out_capacity")?;
        *o = with_map(map, |m| Ok(m.capacity()))?;
        Ok(())
    })
}

/// # Safety
/// `out_arity` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sh_map_arity(map: ShMap, out_arity: *mut usize) -> ShStatus {
    guard(|| {
        let o = out(out_arity, "out_arity")?;
        *o = with_map(map, |m| Ok(m.arity()))?;
        Ok(())
    })
}

/// Grows or shrinks to `capacity`, keeping all entries. Buffer indices
/// and pointers from `sh_map_*_buffer` are invalidated.
#[no_mangle]
pub extern "C" fn sh_map_rehash(map: ShMap, capacity: usize) -> ShStatus {
    guard(|| with_map(map, |m| Ok(m.rehash(capacity)?)))
}

/// Copies the buffer indices of all entries into `out` (room for `len`)
/// and stores the count in `out_count`. With `out` null or too small only
/// the count is written; the latter returns `SH_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// `out` holds `len` entries or is null; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sh_map_active_indices(
    map: ShMap,
    out_indices: *mut u32,
    len: usize,
    out_count: *mut usize,
) -> ShStatus {
    guard(|| {
        let count = out(out_count, "out_count")?;
        let idx = with_map(map, |m| Ok(m.active_indices()))?;
        *count = idx.len();
        match slice_mut(out_indices, len) {
            None => Ok(()),
            Some(o) if o.len() >= idx.len() => {
                o[..idx.len()].copy_from_slice(&idx);
                Ok(())
            }
            Some(_) => fail(ShStatus::BufferTooSmall, format!("need {} indices, room for {len}", idx.len())),
        }
    })
}

fn copy_out(src: &[u8], dst: *mut u8, len: usize) -> Result<(), Fail> {
    if src.len() > len {
        return fail(ShStatus::BufferTooSmall, format!("need {} bytes, room for {len}", src.len()));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return fail(ShStatus::NullPointer, "output buffer is null");
        }
        // SAFETY: dst has room for len >= src.len() bytes.
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
    }
    Ok(())
}

/// Copies the whole key buffer (`capacity * arity` ints, rows addressed by
/// buffer index). `len` is the room in `out` counted in ints.
///
/// # Safety
/// `out` holds `len` ints.
#[no_mangle]
pub unsafe extern "C" fn sh_map_copy_keys(map: ShMap, out_keys: *mut i32, len: usize) -> ShStatus {
    guard(|| {
        with_map(map, |m| {
            copy_out(bytemuck::cast_slice(m.key_rows().as_slice()), out_keys.cast(), len.saturating_mul(4))
        })
    })
}

fn check_schema(m: &SpatialHashMap, schema: usize) -> Result<(), Fail> {
    let n = m.value_schemas().len();
    if schema >= n {
        return fail(ShStatus::InvalidArgument, format!("value buffer {schema} out of range, map has {n}"));
    }
    Ok(())
}

/// Copies value buffer `schema` (`capacity * value_bytes` bytes).
///
/// # Safety
/// `out` holds `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sh_map_copy_values(map: ShMap, schema: usize, out_values: *mut u8, len: usize) -> ShStatus {
    guard(|| {
        with_map(map, |m| {
            check_schema(m, schema)?;
            copy_out(m.value_bytes(schema).as_slice(), out_values, len)
        })
    })
}

/// Zero-copy view of the key buffer. The pointer stays valid until the
/// next mutating call or destroy on this handle; reading it concurrently
/// with such calls is undefined.
///
/// # Safety
/// Output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sh_map_key_buffer(map: ShMap, out_ptr: *mut *const i32, out_len: *mut usize) -> ShStatus {
    guard(|| {
        let (p, l) = (out(out_ptr, "out_ptr")?, out(out_len, "out_len")?);
        with_map(map, |m| {
            let s = m.key_rows().as_slice();
            (*p, *l) = (s.as_ptr(), s.len());
            Ok(())
        })
    })
}

/// Zero-copy writable view of value buffer `schema`, `out_len` in bytes.
/// Same lifetime rules as `sh_map_key_buffer`; writing rows of active
/// indices is the supported in-place update.
///
/// # Safety
/// Output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sh_map_value_buffer(
    map: ShMap,
    schema: usize,
    out_ptr: *mut *mut u8,
    out_len: *mut usize,
) -> ShStatus {
    guard(|| {
        let (p, l) = (out(out_ptr, "out_ptr")?, out(out_len, "out_len")?);
        with_map(map, |m| {
            check_schema(m, schema)?;
            let s = m.value_bytes_mut(schema).into_mut_slice();
            (*p, *l) = (s.as_mut_ptr(), s.len());
            Ok(())
        })
    })
}

/// Writes a binary snapshot of the map to `path`.
///
/// # Safety
/// `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sh_map_save(map: ShMap, path: *const c_char) -> ShStatus {
    guard(|| {
        let path = path_arg(path)?;
        with_map(map, |m| {
            let file = File::create(&path).map_err(|e| Error::from(e).at(&path))?;
            let mut w = BufWriter::new(file);
            write_snapshot(m, &mut w).and_then(|_| Ok(w.flush()?)).map_err(|e| e.at(&path))?;
            Ok(())
        })
    })
}

/// Reads a snapshot into a new map.
///
/// # Safety
/// `path` is a NUL-terminated string; `out_map` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sh_map_load(path: *const c_char, backend_code: u32, out_map: *mut ShMap) -> ShStatus {
    guard(|| {
        let out_map = out(out_map, "out_map")?;
        let path = path_arg(path)?;
        let file = File::open(&path).map_err(|e| Error::from(e).at(&path))?;
        let m = read_snapshot(BufReader::new(file), backend(backend_code)?).map_err(|e| e.at(&path))?;
        *out_map = register(m);
        Ok(())
    })
}

/// Keeps one point per voxel of edge `voxel_size`. `points` holds `n`
/// xyz triples. `out_indices` (room for `n`) receives the kept input
/// indices, `out_coords` (room for `3n`, may be null) their voxel
/// coordinates, and `out_count` how many were kept.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn sh_voxel_downsample(
    points: *const f64,
    n: usize,
    voxel_size: f64,
    backend_code: u32,
    out_indices: *mut u64,
    out_coords: *mut i32,
    out_count: *mut usize,
) -> ShStatus {
    guard(|| {
        let count = out(out_count, "out_count")?;
        let len = n.checked_mul(3).ok_or_else(|| Fail(ShStatus::InvalidArgument, "point count overflows".into()))?;
        let flat = slice(points, len, "points")?;
        let v = voxel_downsample(bytemuck::cast_slice(flat), voxel_size, backend(backend_code)?)?;
        *count = v.coords.len();
        if !v.indices.is_empty() {
            let o = slice_mut(out_indices, n).ok_or_else(|| Fail(ShStatus::NullPointer, "out_indices is null".into()))?;
            for (d, &i) in o.iter_mut().zip(&v.indices) {
                *d = i as u64;
            }
        }
        if let Some(o) = slice_mut(out_coords, len) {
            o[..3 * v.coords.len()].copy_from_slice(v.coords.as_flattened());
        }
        Ok(())
    })
}
