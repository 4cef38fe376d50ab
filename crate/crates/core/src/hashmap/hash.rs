//! Bucket hash for fixed-arity integer keys.

/// Odd multipliers, one per key dimension. Dimensions past the table reuse a
/// derived odd constant.
const MULTIPLIERS: [u32; 8] = [
    0x9E37_79B1,
    0x85EB_CA77,
    0xC2B2_AE3D,
    0x27D4_EB2F,
    0x1656_67B1,
    0xD3A2_646D,
    0xFD70_46C5,
    0xB55A_4F09,
];

#[inline]
fn multiplier(dim: usize) -> u32 {
    match MULTIPLIERS.get(dim) {
        Some(&m) => m,
        None => 0x9E37_79B1u32.wrapping_mul(2 * dim as u32 + 1) | 1,
    }
}

/// Mixes one coordinate with its dimension's multiplier.
#[inline]
fn mix(x: i32, dim: usize) -> u32 {
    let mut h = (x as u32).wrapping_mul(multiplier(dim));
    h ^= h >> 16;
    h = h.wrapping_mul(0x7FEB_352D);
    h ^= h >> 15;
    h
}

/// Hashes a key into `0..buckets`. `buckets` must be non-zero.
#[inline]
pub fn hash_key(key: &[i32], buckets: usize) -> usize {
    debug_assert!(buckets > 0);
    let mut h = 0u32;
    for (dim, &x) in key.iter().enumerate() {
        h ^= mix(x, dim);
    }
    // Spread the combined word before the modulo so low-entropy XORs of
    // neighbouring lattice keys do not cluster.
    h ^= h >> 16;
    h = h.wrapping_mul(0x846C_A68B);
    h ^= h >> 16;
    (h as u64 % buckets as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bucket() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k = [rng.random(), rng.random(), rng.random()];
            assert_eq!(hash_key(&k, 1), 0);
        }
    }

    #[test]
    fn deterministic() {
        let k = [12, -7, 300];
        assert_eq!(hash_key(&k, 997), hash_key(&k, 997));
        assert!(hash_key(&k, 997) < 997);
    }

    #[test]
    fn permuted_coordinates_differ() {
        assert_ne!(hash_key(&[1, 2, 3], 1 << 20), hash_key(&[3, 2, 1], 1 << 20));
    }

    fn chi_square(counts: &[u64], total: u64) -> f64 {
        let expected = total as f64 / counts.len() as f64;
        counts
            .iter()
            .map(|&c| {
                let diff = c as f64 - expected;
                diff * diff / expected
            })
            .sum()
    }

    #[test]
    fn chi_square_random_keys_within_three_sigma() {
        let buckets = 10_000usize;
        let mut counts = vec![0u64; buckets];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let total = 100_000u64;
        for _ in 0..total {
            let k = [
                rng.random_range(-(1 << 20)..(1 << 20)),
                rng.random_range(-(1 << 20)..(1 << 20)),
                rng.random_range(-(1 << 20)..(1 << 20)),
            ];
            counts[hash_key(&k, buckets)] += 1;
        }
        let chi2 = chi_square(&counts, total);
        let dof = (buckets - 1) as f64;
        let sigma = (2.0 * dof).sqrt();
        assert!((chi2 - dof).abs() <= 3.0 * sigma, "chi2 = {chi2}, dof = {dof}");
    }

    #[test]
    fn chi_square_dense_lattice_within_three_sigma() {
        let buckets = 10_000usize;
        let mut counts = vec![0u64; buckets];
        let mut total = 0u64;
        for x in -23..23 {
            for y in -23..23 {
                for z in 0..46 {
                    counts[hash_key(&[x, y, z], buckets)] += 1;
                    total += 1;
                }
            }
        }
        let chi2 = chi_square(&counts, total);
        let dof = (buckets - 1) as f64;
        let sigma = (2.0 * dof).sqrt();
        assert!((chi2 - dof).abs() <= 3.0 * sigma, "chi2 = {chi2}, dof = {dof}");
    }
}
