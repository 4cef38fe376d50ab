//! Key and value buffers addressed by buffer index.

use std::marker::PhantomData;

use bytemuck::Pod;

use crate::error::{invalid, Result};

/// Layout of one value buffer: `count` elements of `elem_bytes` bytes each
/// per buffer index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueSchema {
    pub count: usize,
    pub elem_bytes: usize,
}

impl ValueSchema {
    pub fn new(count: usize, elem_bytes: usize) -> Self {
        Self { count, elem_bytes }
    }

    /// `count` elements of type `T`.
    pub fn of<T: Pod>(count: usize) -> Self {
        Self::new(count, std::mem::size_of::<T>())
    }

    /// Bytes occupied by one value.
    pub fn value_bytes(&self) -> usize {
        self.count * self.elem_bytes
    }
}

/// Copies one value, dispatching on its byte width.
#[inline]
pub(crate) fn copy_value(dst: &mut [u8], src: &[u8]) {
    debug_assert_eq!(dst.len(), src.len());
    match src.len() {
        0 => {}
        4 => copy_fixed::<4>(dst, src),
        8 => copy_fixed::<8>(dst, src),
        12 => copy_fixed::<12>(dst, src),
        16 => copy_fixed::<16>(dst, src),
        _ => dst.copy_from_slice(src),
    }
}

#[inline(always)]
fn copy_fixed<const N: usize>(dst: &mut [u8], src: &[u8]) {
    let src: &[u8; N] = src.try_into().unwrap();
    let dst: &mut [u8; N] = dst.try_into().unwrap();
    *dst = *src;
}

/// Row-addressed mutable access to a slice that several workers write
/// concurrently, each to rows no other worker touches.
pub(crate) struct SharedRows<'a, T> {
    ptr: *mut T,
    rows: usize,
    width: usize,
    _borrow: PhantomData<&'a mut [T]>,
}

// SAFETY: the wrapper only hands out rows through `row_mut`, whose contract
// requires callers to keep row sets disjoint across threads.
unsafe impl<T: Send> Send for SharedRows<'_, T> {}
unsafe impl<T: Send> Sync for SharedRows<'_, T> {}

impl<'a, T> SharedRows<'a, T> {
    pub fn new(data: &'a mut [T], width: usize) -> Self {
        let rows = if width == 0 { 0 } else { data.len() / width };
        Self { ptr: data.as_mut_ptr(), rows, width, _borrow: PhantomData }
    }

    /// # Safety
    /// No two live references to the same row may exist at once, and no
    /// other thread may read the row while the returned slice is alive.
    #[inline]
    #[allow(clippy::mut_from_ref)]
    pub unsafe fn row_mut(&self, row: usize) -> &mut [T] {
        assert!(row < self.rows || self.width == 0);
        std::slice::from_raw_parts_mut(self.ptr.add(row * self.width), self.width)
    }
}

/// Keys stored contiguously, `arity` coordinates per buffer index.
#[derive(Debug, Clone)]
pub(crate) struct KeyBuffer {
    pub arity: usize,
    pub data: Vec<i32>,
}

impl KeyBuffer {
    pub fn new(arity: usize, capacity: usize) -> Self {
        Self { arity, data: vec![0; arity * capacity] }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[i32] {
        &self.data[i * self.arity..(i + 1) * self.arity]
    }
}

/// One value buffer. Storage is 8-byte aligned so typed views of any
/// `Pod` element up to 8 bytes are valid.
#[derive(Debug, Clone)]
pub(crate) struct ValueBuffer {
    pub schema: ValueSchema,
    capacity: usize,
    words: Vec<u64>,
}

impl ValueBuffer {
    pub fn new(schema: ValueSchema, capacity: usize) -> Self {
        let bytes = schema.value_bytes() * capacity;
        Self { schema, capacity, words: vec![0; bytes.div_ceil(8)] }
    }

    pub fn bytes(&self) -> &[u8] {
        let len = self.schema.value_bytes() * self.capacity;
        &bytemuck::cast_slice(&self.words)[..len]
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        let len = self.schema.value_bytes() * self.capacity;
        &mut bytemuck::cast_slice_mut(&mut self.words)[..len]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        let w = self.schema.value_bytes();
        &self.bytes()[i * w..(i + 1) * w]
    }

    fn check_type<T: Pod>(&self) -> Result<()> {
        if std::mem::size_of::<T>() != self.schema.elem_bytes {
            return invalid(format!(
                "element type of {} bytes does not match value buffer element width {}",
                std::mem::size_of::<T>(),
                self.schema.elem_bytes
            ));
        }
        if std::mem::align_of::<T>() > 8 {
            return invalid("element alignment above 8 bytes is not supported");
        }
        Ok(())
    }

    pub fn typed<T: Pod>(&self) -> Result<&[T]> {
        self.check_type::<T>()?;
        let len = self.schema.count * self.capacity;
        let all: &[u8] = bytemuck::cast_slice(&self.words);
        let bytes = &all[..len * std::mem::size_of::<T>()];
        Ok(bytemuck::cast_slice(bytes))
    }

    pub fn typed_mut<T: Pod>(&mut self) -> Result<&mut [T]> {
        self.check_type::<T>()?;
        let len = self.schema.count * self.capacity;
        let all: &mut [u8] = bytemuck::cast_slice_mut(&mut self.words);
        let bytes = &mut all[..len * std::mem::size_of::<T>()];
        Ok(bytemuck::cast_slice_mut(bytes))
    }
}

/// Read-only view of a buffer as `capacity` rows of `width` elements.
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a, T> {
    data: &'a [T],
    width: usize,
}

impl<'a, T> Rows<'a, T> {
    pub(crate) fn new(data: &'a [T], width: usize) -> Self {
        Self { data, width }
    }

    /// Number of rows, which is the map capacity.
    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &'a [T] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn as_slice(&self) -> &'a [T] {
        self.data
    }
}

/// Mutable view of a value buffer, rows addressed by buffer index.
#[derive(Debug)]
pub struct RowsMut<'a, T> {
    data: &'a mut [T],
    width: usize,
}

impl<'a, T> RowsMut<'a, T> {
    pub(crate) fn new(data: &'a mut [T], width: usize) -> Self {
        Self { data, width }
    }

    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        self.data
    }

    pub fn into_mut_slice(self) -> &'a mut [T] {
        self.data
    }

    pub fn into_row_mut(self, i: usize) -> &'a mut [T] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_dispatch_covers_all_widths() {
        for w in [0usize, 1, 4, 8, 12, 16, 20, 2048] {
            let src: Vec<u8> = (0..w).map(|b| b as u8).collect();
            let mut dst = vec![0xAAu8; w];
            copy_value(&mut dst, &src);
            assert_eq!(dst, src);
        }
    }

    #[test]
    fn typed_view_checks_width() {
        let mut buf = ValueBuffer::new(ValueSchema::of::<f32>(3), 5);
        assert_eq!(buf.typed::<f32>().unwrap().len(), 15);
        assert!(buf.typed::<f64>().is_err());
        buf.typed_mut::<f32>().unwrap()[3] = 2.5;
        assert_eq!(&buf.row(1)[..4], &2.5f32.to_ne_bytes());
    }

    #[test]
    fn odd_sized_values_round_up_storage() {
        let buf = ValueBuffer::new(ValueSchema::new(3, 1), 3);
        assert_eq!(buf.bytes().len(), 9);
        assert_eq!(buf.typed::<u8>().unwrap().len(), 9);
    }
}
