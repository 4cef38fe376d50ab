use std::collections::HashSet;
use std::ffi::{CStr, CString};
use std::ptr;

use spatialhash_ffi::*;

fn last_error() -> String {
    let p = sh_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn create(capacity: usize, arity: usize, counts: &[usize], elems: &[usize], backend: u32) -> ShMap {
    let mut h = 0;
    let st = unsafe { sh_map_create(capacity, arity, counts.as_ptr(), elems.as_ptr(), counts.len(), backend, &mut h) };
    assert_eq!(st, ShStatus::Ok, "{}", last_error());
    assert_ne!(h, 0);
    h
}

fn size(h: ShMap) -> usize {
    let mut n = 0;
    assert_eq!(unsafe { sh_map_size(h, &mut n) }, ShStatus::Ok);
    n
}

#[test]
fn insert_then_index_values() {
    for backend in [SH_BACKEND_GENERIC, SH_BACKEND_INTEGER_DELEGATE] {
        let h = create(4, 3, &[1], &[4], backend);
        let keys = [1, 2, 3, 4, 5, 6, 1, 2, 3];
        let vals: [f32; 3] = [10.0, 20.0, 30.0];
        let vptr = [vals.as_ptr().cast::<u8>()];
        let (mut idx, mut mask) = ([0u32; 3], [0u8; 3]);
        let st = unsafe { sh_map_insert(h, keys.as_ptr(), 3, vptr.as_ptr(), 1, idx.as_mut_ptr(), mask.as_mut_ptr()) };
        assert_eq!(st, ShStatus::Ok);
        assert_eq!(mask, [1, 1, 0]);
        assert_eq!(size(h), 2);

        let (mut fi, mut fm) = ([0u32; 3], [0u8; 3]);
        let probe = [4, 5, 6, 7, 7, 7, 1, 2, 3];
        assert_eq!(unsafe { sh_map_find(h, probe.as_ptr(), 3, fi.as_mut_ptr(), fm.as_mut_ptr()) }, ShStatus::Ok);
        assert_eq!(fm, [1, 0, 1]);

        // Copy path and zero-copy path agree.
        let mut cap = 0;
        unsafe { sh_map_capacity(h, &mut cap) };
        let mut copy = vec![0u8; cap * 4];
        assert_eq!(unsafe { sh_map_copy_values(h, 0, copy.as_mut_ptr(), copy.len()) }, ShStatus::Ok);
        let (mut p, mut len) = (ptr::null_mut(), 0);
        assert_eq!(unsafe { sh_map_value_buffer(h, 0, &mut p, &mut len) }, ShStatus::Ok);
        assert_eq!(len, cap * 4);
        let view: &[f32] = bytemuck::cast_slice(&copy);
        assert_eq!(view[fi[0] as usize], 20.0);
        assert_eq!(view[fi[2] as usize], 10.0);
        assert_eq!(unsafe { std::slice::from_raw_parts(p, len) }, &copy[..]);

        let (mut kp, mut klen) = (ptr::null(), 0);
        assert_eq!(unsafe { sh_map_key_buffer(h, &mut kp, &mut klen) }, ShStatus::Ok);
        let key_rows = unsafe { std::slice::from_raw_parts(kp, klen) };
        assert_eq!(&key_rows[fi[0] as usize * 3..fi[0] as usize * 3 + 3], &[4, 5, 6]);

        assert_eq!(sh_map_destroy(h), ShStatus::Ok);
    }
}

#[test]
fn activate_erase_rehash_and_indices() {
    let h = create(8, 2, &[2], &[4], SH_BACKEND_INTEGER_DELEGATE);
    let keys: Vec<i32> = (0..40).collect();
    let (mut idx, mut mask) = (vec![0u32; 20], vec![0u8; 20]);
    assert_eq!(unsafe { sh_map_activate(h, keys.as_ptr(), 20, idx.as_mut_ptr(), mask.as_mut_ptr()) }, ShStatus::Ok);
    assert!(mask.iter().all(|&m| m == 1));
    assert_eq!(size(h), 20);

    let mut erased = vec![0u8; 5];
    assert_eq!(unsafe { sh_map_erase(h, keys.as_ptr(), 5, erased.as_mut_ptr()) }, ShStatus::Ok);
    assert!(erased.iter().all(|&m| m == 1));
    assert_eq!(size(h), 15);

    assert_eq!(sh_map_rehash(h, 64), ShStatus::Ok);
    let mut cap = 0;
    unsafe { sh_map_capacity(h, &mut cap) };
    assert_eq!(cap, 64);

    let mut count = 0;
    assert_eq!(unsafe { sh_map_active_indices(h, ptr::null_mut(), 0, &mut count) }, ShStatus::Ok);
    assert_eq!(count, 15);
    let mut small = [0u32; 4];
    assert_eq!(unsafe { sh_map_active_indices(h, small.as_mut_ptr(), 4, &mut count) }, ShStatus::BufferTooSmall);
    let mut all = vec![0u32; count];
    assert_eq!(unsafe { sh_map_active_indices(h, all.as_mut_ptr(), count, &mut count) }, ShStatus::Ok);
    let mut keys_out = vec![0i32; cap * 2];
    assert_eq!(unsafe { sh_map_copy_keys(h, keys_out.as_mut_ptr(), keys_out.len()) }, ShStatus::Ok);
    let got: HashSet<[i32; 2]> = all.iter().map(|&i| [keys_out[2 * i as usize], keys_out[2 * i as usize + 1]]).collect();
    let want: HashSet<[i32; 2]> = (5..20).map(|j| [2 * j, 2 * j + 1]).collect();
    assert_eq!(got, want);
    sh_map_destroy(h);
}

#[test]
fn dropped_and_unknown_handles_fail_cleanly() {
    let h = create(4, 1, &[], &[], SH_BACKEND_GENERIC);
    assert_eq!(sh_map_destroy(h), ShStatus::Ok);
    assert_eq!(sh_map_destroy(h), ShStatus::InvalidHandle);
    let mut n = 0;
    assert_eq!(unsafe { sh_map_size(h, &mut n) }, ShStatus::InvalidHandle);
    assert!(last_error().contains("handle"));
    let key = [1];
    assert_eq!(unsafe { sh_map_find(0, key.as_ptr(), 1, ptr::null_mut(), ptr::null_mut()) }, ShStatus::InvalidHandle);
    assert_eq!(sh_map_rehash(u64::MAX, 8), ShStatus::InvalidHandle);
}

#[test]
fn bad_arguments_report_status_and_message() {
    let mut h = 0;
    assert_eq!(
        unsafe { sh_map_create(0, 3, ptr::null(), ptr::null(), 0, SH_BACKEND_GENERIC, &mut h) },
        ShStatus::InvalidArgument
    );
    assert!(last_error().contains("capacity"));
    assert_eq!(unsafe { sh_map_create(4, 3, ptr::null(), ptr::null(), 0, 9, &mut h) }, ShStatus::InvalidArgument);
    assert_eq!(
        unsafe { sh_map_create(4, 3, ptr::null(), ptr::null(), 0, SH_BACKEND_GENERIC, ptr::null_mut()) },
        ShStatus::NullPointer
    );

    let h = create(4, 3, &[1], &[4], SH_BACKEND_GENERIC);
    // Wrong number of value buffers, null keys, bad schema index.
    let keys = [0, 0, 0];
    assert_eq!(
        unsafe { sh_map_insert(h, keys.as_ptr(), 1, ptr::null(), 0, ptr::null_mut(), ptr::null_mut()) },
        ShStatus::InvalidArgument
    );
    assert!(last_error().contains("value buffers"));
    assert_eq!(
        unsafe { sh_map_find(h, ptr::null(), 2, ptr::null_mut(), ptr::null_mut()) },
        ShStatus::NullPointer
    );
    let mut buf = [0u8; 4];
    assert_eq!(unsafe { sh_map_copy_values(h, 3, buf.as_mut_ptr(), 4) }, ShStatus::InvalidArgument);
    assert_eq!(unsafe { sh_map_copy_values(h, 0, buf.as_mut_ptr(), 4) }, ShStatus::BufferTooSmall);
    // Success clears the message.
    assert_eq!(unsafe { sh_map_find(h, keys.as_ptr(), 1, ptr::null_mut(), ptr::null_mut()) }, ShStatus::Ok);
    assert!(sh_last_error().is_null());
    sh_map_destroy(h);
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.bin").to_str().unwrap()).unwrap();
    let h = create(16, 3, &[1], &[8], SH_BACKEND_GENERIC);
    let keys: Vec<i32> = (0..30).collect();
    let vals: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
    let vptr = [vals.as_ptr().cast::<u8>()];
    unsafe { sh_map_insert(h, keys.as_ptr(), 10, vptr.as_ptr(), 1, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(unsafe { sh_map_save(h, path.as_ptr()) }, ShStatus::Ok);

    let mut g = 0;
    assert_eq!(unsafe { sh_map_load(path.as_ptr(), SH_BACKEND_INTEGER_DELEGATE, &mut g) }, ShStatus::Ok);
    assert_ne!(g, h);
    assert_eq!(size(g), 10);
    let (mut idx, mut mask) = (vec![0u32; 10], vec![0u8; 10]);
    unsafe { sh_map_find(g, keys.as_ptr(), 10, idx.as_mut_ptr(), mask.as_mut_ptr()) };
    assert!(mask.iter().all(|&m| m == 1));
    let (mut p, mut len) = (ptr::null_mut(), 0);
    unsafe { sh_map_value_buffer(g, 0, &mut p, &mut len) };
    let view: &[f64] = bytemuck::cast_slice(unsafe { std::slice::from_raw_parts(p, len) });
    for (j, &i) in idx.iter().enumerate() {
        assert_eq!(view[i as usize], vals[j]);
    }

    let missing = CString::new(dir.path().join("nope.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sh_map_load(missing.as_ptr(), 0, &mut g) }, ShStatus::Io);
    assert!(last_error().contains("nope.bin"));
    std::fs::write(dir.path().join("junk.bin"), b"junkjunkjunk").unwrap();
    let junk = CString::new(dir.path().join("junk.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sh_map_load(junk.as_ptr(), 0, &mut g) }, ShStatus::Format);
    sh_map_destroy(h);
}

#[test]
fn voxel_downsample_matches_floor_oracle() {
    let mut state = 99u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let n = 100_000;
    let pts: Vec<f64> = (0..3 * n).map(|_| next()).collect();
    let s = 0.05;
    let (mut idx, mut coords, mut count) = (vec![0u64; n], vec![0i32; 3 * n], 0);
    let st = unsafe {
        sh_voxel_downsample(pts.as_ptr(), n, s, SH_BACKEND_GENERIC, idx.as_mut_ptr(), coords.as_mut_ptr(), &mut count)
    };
    assert_eq!(st, ShStatus::Ok);
    let oracle: HashSet<[i32; 3]> =
        pts.chunks(3).map(|p| [p[0], p[1], p[2]].map(|c| (c / s).floor() as i32)).collect();
    assert_eq!(count, oracle.len());
    let got: HashSet<[i32; 3]> = coords[..3 * count].chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    assert_eq!(got, oracle);
    for (k, &i) in idx[..count].iter().enumerate() {
        let p = &pts[3 * i as usize..3 * i as usize + 3];
        assert_eq!([p[0], p[1], p[2]].map(|c| (c / s).floor() as i32), [coords[3 * k], coords[3 * k + 1], coords[3 * k + 2]]);
    }

    assert_eq!(
        unsafe { sh_voxel_downsample(pts.as_ptr(), n, 0.0, 0, idx.as_mut_ptr(), ptr::null_mut(), &mut count) },
        ShStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { sh_voxel_downsample(ptr::null(), 0, 0.1, 0, ptr::null_mut(), ptr::null_mut(), &mut count) },
        ShStatus::Ok
    );
    assert_eq!(count, 0);
}

#[test]
fn generated_header_compiles_as_c() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::path::Path::new(dir).join("include/spatialhash.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["sh_map_create", "sh_map_destroy", "sh_voxel_downsample", "SH_STATUS_INVALID_HANDLE"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(cc) = which_cc() else { return };
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("t.c");
    std::fs::write(
        &src,
        "#include \"spatialhash.h\"\nint main(void){ShMap h=0;return sh_map_destroy(h)==SH_STATUS_OK;}\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
