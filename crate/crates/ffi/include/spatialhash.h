#ifndef SPATIALHASH_H
#define SPATIALHASH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SH_BACKEND_GENERIC 0

#define SH_BACKEND_INTEGER_DELEGATE 1

typedef enum {
  SH_STATUS_OK = 0,
  SH_STATUS_INVALID_ARGUMENT = 1,
  SH_STATUS_NULL_POINTER = 2,
  SH_STATUS_INVALID_HANDLE = 3,
  SH_STATUS_CAPACITY_EXCEEDED = 4,
  SH_STATUS_FORMAT = 5,
  SH_STATUS_IO = 6,
  /**
   * Output buffer too small; the required length was written back.
   */
  SH_STATUS_BUFFER_TOO_SMALL = 7,
  SH_STATUS_PANIC = 8,
} ShStatus;

/**
 * Opaque map handle. Zero is never a valid handle.
 */
typedef uint64_t ShMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call on this thread.
 */
const char *sh_last_error(void);

/**
 * Creates a map. `value_counts[i]` elements of `value_elem_bytes[i]`
 * bytes make up value buffer `i`; pass `n_values = 0` for a set.
 *
 * # Safety
 * Array arguments must hold `n_values` entries; `out_map` must be writable.
 */
ShStatus sh_map_create(size_t capacity,
                       size_t arity,
                       const size_t *value_counts,
                       const size_t *value_elem_bytes,
                       size_t n_values,
                       uint32_t backend_code,
                       ShMap *out_map);

/**
 * Releases a map. Later calls with the handle fail with
 * `SH_STATUS_INVALID_HANDLE`.
 */
ShStatus sh_map_destroy(ShMap map);

/**
 * Inserts `n` keys. `values[i]` points at `n` packed values for value
 * buffer `i`. `out_indices` and `out_masks` hold `n` entries each and
 * may be null.
 *
 * # Safety
 * Pointers must be valid for the lengths implied by `n` and the schema.
 */
ShStatus sh_map_insert(ShMap map,
                       const int32_t *keys,
                       size_t n,
                       const uint8_t *const *values,
                       size_t n_values,
                       uint32_t *out_indices,
                       uint8_t *out_masks);

/**
 * Reserves entries for `n` keys without writing values. Every key present
 * afterwards reports mask 1 and its buffer index.
 *
 * # Safety
 * `keys` holds `n * arity` ints; outputs hold `n` entries or are null.
 */
ShStatus sh_map_activate(ShMap map,
                         const int32_t *keys,
                         size_t n,
                         uint32_t *out_indices,
                         uint8_t *out_masks);

/**
 * # Safety
 * `keys` holds `n * arity` ints; outputs hold `n` entries or are null.
 */
ShStatus sh_map_find(ShMap map,
                     const int32_t *keys,
                     size_t n,
                     uint32_t *out_indices,
                     uint8_t *out_masks);

/**
 * # Safety
 * `keys` holds `n * arity` ints; `out_masks` holds `n` bytes or is null.
 */
ShStatus sh_map_erase(ShMap map, const int32_t *keys, size_t n, uint8_t *out_masks);

/**
 * # Safety
 * `out_size` must be writable.
 */
ShStatus sh_map_size(ShMap map, size_t *out_size);

/**
 * # Safety
 * `out_capacity` must be writable.
 */
ShStatus sh_map_capacity(ShMap map, size_t *out_capacity);

/**
 * # Safety
 * `out_arity` must be writable.
 */
ShStatus sh_map_arity(ShMap map, size_t *out_arity);

/**
 * Grows or shrinks to `capacity`, keeping all entries. Buffer indices
 * and pointers from `sh_map_*_buffer` are invalidated.
 */
ShStatus sh_map_rehash(ShMap map, size_t capacity);

/**
 * Copies the buffer indices of all entries into `out` (room for `len`)
 * and stores the count in `out_count`. With `out` null or too small only
 * the count is written; the latter returns `SH_STATUS_BUFFER_TOO_SMALL`.
 *
 * # Safety
 * `out` holds `len` entries or is null; `out_count` must be writable.
 */
ShStatus sh_map_active_indices(ShMap map, uint32_t *out_indices, size_t len, size_t *out_count);

/**
 * Copies the whole key buffer (`capacity * arity` ints, rows addressed by
 * buffer index). `len` is the room in `out` counted in ints.
 *
 * # Safety
 * `out` holds `len` ints.
 */
ShStatus sh_map_copy_keys(ShMap map, int32_t *out_keys, size_t len);

/**
 * Copies value buffer `schema` (`capacity * value_bytes` bytes).
 *
 * # Safety
 * `out` holds `len` bytes.
 */
ShStatus sh_map_copy_values(ShMap map, size_t schema, uint8_t *out_values, size_t len);

/**
 * Zero-copy view of the key buffer. The pointer stays valid until the
 * next mutating call or destroy on this handle; reading it concurrently
 * with such calls is undefined.
 *
 * # Safety
 * Output pointers must be writable.
 */
ShStatus sh_map_key_buffer(ShMap map, const int32_t **out_ptr, size_t *out_len);

/**
 * Zero-copy writable view of value buffer `schema`, `out_len` in bytes.
 * Same lifetime rules as `sh_map_key_buffer`; writing rows of active
 * indices is the supported in-place update.
 *
 * # Safety
 * Output pointers must be writable.
 */
ShStatus sh_map_value_buffer(ShMap map, size_t schema, uint8_t **out_ptr, size_t *out_len);

/**
 * Writes a binary snapshot of the map to `path`.
 *
 * # Safety
 * `path` is a NUL-terminated string.
 */
ShStatus sh_map_save(ShMap map, const char *path);

/**
 * Reads a snapshot into a new map.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out_map` must be writable.
 */
ShStatus sh_map_load(const char *path, uint32_t backend_code, ShMap *out_map);

/**
 * Keeps one point per voxel of edge `voxel_size`. `points` holds `n`
 * xyz triples. `out_indices` (room for `n`) receives the kept input
 * indices, `out_coords` (room for `3n`, may be null) their voxel
 * coordinates, and `out_count` how many were kept.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
ShStatus sh_voxel_downsample(const double *points,
                             size_t n,
                             double voxel_size,
                             uint32_t backend_code,
                             uint64_t *out_indices,
                             int32_t *out_coords,
                             size_t *out_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPATIALHASH_H */
