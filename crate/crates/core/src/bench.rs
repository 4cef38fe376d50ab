//! Synthetic hash map workloads and timing.
//!
//! Each trial builds a fresh map whose capacity equals the batch length,
//! times one batch operation and then checks the result (size plus a sample
//! of find round trips) before the timing is accepted.

use std::collections::HashSet;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::hashmap::{Backend, SpatialHashMap, ValueSchema};

pub const CSV_HEADER: &str = "backend,op,key_kind,value_bytes,capacity,uniqueness,threads,trial,ms";

/// Keys sampled for the find check after every trial.
const CHECK_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    /// 3D coordinates in `[-2^20, 2^20)^3`.
    Coord3,
    /// Single `i32` keys over the full range.
    Scalar,
}

impl KeyKind {
    pub fn name(&self) -> &'static str {
        match self {
            KeyKind::Coord3 => "3d",
            KeyKind::Scalar => "scalar",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            KeyKind::Coord3 => 3,
            KeyKind::Scalar => 1,
        }
    }
}

impl FromStr for KeyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3d" => Ok(KeyKind::Coord3),
            "scalar" => Ok(KeyKind::Scalar),
            _ => invalid(format!("unknown key kind '{s}' (expected 3d or scalar)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Insert,
    Activate,
    Find,
    Erase,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Insert, Op::Activate, Op::Find, Op::Erase];

    pub fn name(&self) -> &'static str {
        match self {
            Op::Insert => "insert",
            Op::Activate => "activate",
            Op::Find => "find",
            Op::Erase => "erase",
        }
    }
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Op::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown operation '{s}'")))
    }
}

/// Number of distinct keys in a batch of `count` at uniqueness `rho`.
pub fn distinct_count(count: usize, rho: f64) -> usize {
    // Guard against products like 0.99 * 1000 landing a hair above 990.
    (((rho * count as f64) - 1e-9).ceil().max(1.0) as usize).min(count)
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        invalid(format!("uniqueness must be in (0, 1], got {rho}"))
    }
}

/// `count` keys (flattened) with `⌈ρ·count⌉` distinct values; duplicates
/// are drawn uniformly from the distinct pool and the batch is shuffled.
pub fn gen_keys(count: usize, rho: f64, kind: KeyKind, seed: u64) -> Result<Vec<i32>> {
    check_rho(rho)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = distinct_count(count, rho);
    if count == 0 {
        return Ok(Vec::new());
    }
    let arity = kind.arity();
    let mut seen = HashSet::with_capacity(m);
    let mut pool: Vec<[i32; 3]> = Vec::with_capacity(m);
    while pool.len() < m {
        let k = match kind {
            KeyKind::Coord3 => [0, 1, 2].map(|_| rng.random_range(-(1 << 20)..(1 << 20))),
            KeyKind::Scalar => [rng.random::<i32>(), 0, 0],
        };
        if seen.insert(k) {
            pool.push(k);
        }
    }
    let mut batch = pool.clone();
    for _ in m..count {
        batch.push(pool[rng.random_range(0..m)]);
    }
    batch.shuffle(&mut rng);
    Ok(batch.iter().flat_map(|k| k[..arity].iter().copied()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSpec {
    pub backend: Backend,
    pub op: Op,
    pub key_kind: KeyKind,
    /// Bytes per value; a multiple of 4, stored as f32s. Zero makes a set.
    pub value_bytes: usize,
    pub capacity: usize,
    pub uniqueness: f64,
    pub trials: usize,
    pub threads: usize,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        check_rho(self.uniqueness)?;
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.capacity == 0 {
            return invalid("capacity must be positive");
        }
        if self.threads == 0 {
            return invalid("threads must be at least 1");
        }
        if self.value_bytes % 4 != 0 {
            return invalid(format!("value size {} is not a multiple of 4 bytes", self.value_bytes));
        }
        Ok(())
    }

    /// Rough peak bytes: the map's buffers plus the input batch.
    pub fn footprint(&self) -> usize {
        let key = 4 * self.key_kind.arity();
        self.capacity * (2 * self.value_bytes + 3 * key + 32)
    }

    fn schemas(&self) -> Vec<ValueSchema> {
        if self.value_bytes == 0 {
            Vec::new()
        } else {
            vec![ValueSchema::of::<f32>(self.value_bytes / 4)]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub spec: WorkloadSpec,
    /// Wall time of the timed operation, per trial.
    pub trial_ms: Vec<f64>,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    /// Mean map construction time, reported apart from the operation.
    pub construct_ms: f64,
    /// Distinct keys in the batch, which every trial verified.
    pub unique: usize,
}

impl BenchRecord {
    pub fn write_csv_rows<W: Write>(&self, out: &mut W) -> Result<()> {
        for (t, ms) in self.trial_ms.iter().enumerate() {
            writeln!(out, "{},{:.4}", csv_prefix(&self.spec, t), ms)?;
        }
        Ok(())
    }
}

fn csv_prefix(s: &WorkloadSpec, trial: usize) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        s.backend.name(),
        s.op.name(),
        s.key_kind.name(),
        s.value_bytes,
        s.capacity,
        s.uniqueness,
        s.threads,
        trial
    )
}

/// Value payload for a key: its first component, repeated. Duplicates of a
/// key carry identical payloads, so whichever copy wins is checkable.
fn value_word(key: &[i32]) -> u32 {
    key.iter().fold(0x9e37_79b9u32, |h, &k| (h ^ k as u32).wrapping_mul(0x0100_0193))
}

fn make_values(keys: &[i32], arity: usize, value_bytes: usize) -> Vec<u32> {
    let words = value_bytes / 4;
    let mut out = vec![0u32; keys.len() / arity * words];
    if words > 0 {
        out.par_chunks_mut(words).zip(keys.par_chunks(arity)).for_each(|(row, k)| row.fill(value_word(k)));
    }
    out
}

fn check(cond: bool, spec: &WorkloadSpec, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Format(format!("{} {} check failed: {}", spec.backend.name(), spec.op.name(), what())))
    }
}

fn run_trial(spec: &WorkloadSpec, trial: usize) -> Result<(f64, f64, usize)> {
    let arity = spec.key_kind.arity();
    let keys = gen_keys(spec.capacity, spec.uniqueness, spec.key_kind, spec.seed.wrapping_add(trial as u64))?;
    let n = keys.len() / arity;
    let unique = distinct_count(n, spec.uniqueness);
    let values = make_values(&keys, arity, spec.value_bytes);
    let value_slices: Vec<&[u8]> =
        if spec.value_bytes == 0 { Vec::new() } else { vec![bytemuck::cast_slice(&values)] };

    let t0 = Instant::now();
    let mut map = SpatialHashMap::new(spec.capacity, arity, &spec.schemas(), spec.backend)?;
    map.set_auto_grow(false);
    let construct = t0.elapsed().as_secs_f64() * 1e3;

    if matches!(spec.op, Op::Find | Op::Erase) {
        map.insert(&keys, &value_slices)?;
    }
    let t0 = Instant::now();
    let outcome = match spec.op {
        Op::Insert => map.insert(&keys, &value_slices)?.count(),
        Op::Activate => map.activate(&keys)?.count(),
        Op::Find => map.find(&keys)?.count(),
        Op::Erase => map.erase(&keys)?.iter().filter(|&&m| m).count(),
    };
    let ms = t0.elapsed().as_secs_f64() * 1e3;

    match spec.op {
        Op::Insert => check(outcome == unique, spec, || format!("{outcome} fresh keys, expected {unique}"))?,
        Op::Activate | Op::Find => check(outcome == n, spec, || format!("{outcome} of {n} keys resolved"))?,
        Op::Erase => check(outcome == unique, spec, || format!("{outcome} erased, expected {unique}"))?,
    }
    let expected_size = if spec.op == Op::Erase { 0 } else { unique };
    check(map.size() == expected_size, spec, || format!("size {} != {expected_size}", map.size()))?;

    let step = (n / CHECK_SAMPLES).max(1);
    for j in (0..n).step_by(step) {
        let key = &keys[j * arity..(j + 1) * arity];
        let found = map.find_one(key);
        if spec.op == Op::Erase {
            check(found.is_none(), spec, || format!("erased key {key:?} still found"))?;
            continue;
        }
        let i = found.ok_or_else(|| Error::Format(format!("key {key:?} missing after {}", spec.op.name())))?;
        if spec.op != Op::Activate && spec.value_bytes > 0 {
            let row = map.values::<u32>(0)?.row(i as usize);
            let want = value_word(key);
            check(row.iter().all(|&w| w == want), spec, || format!("value mismatch for key {key:?}"))?;
        }
    }
    Ok((ms, construct, unique))
}

/// Runs all trials of one workload on a pool of `spec.threads` workers.
pub fn run(spec: &WorkloadSpec) -> Result<BenchRecord> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {} threads: {e}", spec.threads)))?;
    let mut trial_ms = Vec::with_capacity(spec.trials);
    let mut construct = 0.0;
    let mut unique = 0;
    for t in 0..spec.trials {
        let (ms, c, u) = pool.install(|| run_trial(spec, t))?;
        trial_ms.push(ms);
        construct += c;
        unique = u;
    }
    let mean_ms = trial_ms.iter().sum::<f64>() / trial_ms.len() as f64;
    let min_ms = trial_ms.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ms = trial_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BenchRecord {
        spec: *spec,
        trial_ms,
        mean_ms,
        min_ms,
        max_ms,
        construct_ms: construct / spec.trials as f64,
        unique,
    })
}

/// The cross product of workload parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub backends: Vec<Backend>,
    pub ops: Vec<Op>,
    pub key_kinds: Vec<KeyKind>,
    pub value_bytes: Vec<usize>,
    pub capacities: Vec<usize>,
    pub uniqueness: Vec<f64>,
    pub trials: usize,
    pub threads: usize,
    pub seed: u64,
    /// Cells whose [`WorkloadSpec::footprint`] exceeds this are not run;
    /// their rows carry an empty `ms` field.
    pub max_bytes: usize,
}

impl Grid {
    /// Value sizes `4·2^j`, `j = 0..12`, capacities `10^3..10^6`, `ρ ∈
    /// {0.1, 0.99}`, all four operations on 3D keys with the generic backend.
    pub fn standard() -> Self {
        Self {
            backends: vec![Backend::Generic],
            ops: Op::ALL.to_vec(),
            key_kinds: vec![KeyKind::Coord3],
            value_bytes: (0..13).map(|j| 4 << j).collect(),
            capacities: vec![1_000, 10_000, 100_000, 1_000_000],
            uniqueness: vec![0.1, 0.99],
            trials: 10,
            threads: rayon::current_num_threads(),
            seed: 0,
            max_bytes: 1 << 30,
        }
    }

    pub fn specs(&self) -> Vec<WorkloadSpec> {
        let mut out = Vec::new();
        for &backend in &self.backends {
            for &key_kind in &self.key_kinds {
                for &op in &self.ops {
                    for &capacity in &self.capacities {
                        for &uniqueness in &self.uniqueness {
                            for &value_bytes in &self.value_bytes {
                                out.push(WorkloadSpec {
                                    backend,
                                    op,
                                    key_kind,
                                    value_bytes,
                                    capacity,
                                    uniqueness,
                                    trials: self.trials,
                                    threads: self.threads,
                                    seed: self.seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Runs every cell and writes the CSV. Returns the records of the cells
    /// that ran.
    pub fn run<W: Write>(&self, out: &mut W) -> Result<Vec<BenchRecord>> {
        let specs = self.specs();
        for s in &specs {
            s.validate()?;
        }
        writeln!(out, "{CSV_HEADER}")?;
        let mut records = Vec::new();
        for s in &specs {
            if s.footprint() > self.max_bytes {
                for t in 0..s.trials {
                    writeln!(out, "{},", csv_prefix(s, t))?;
                }
                continue;
            }
            let r = run(s)?;
            r.write_csv_rows(out)?;
            records.push(r);
        }
        out.flush()?;
        Ok(records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn distinct(keys: &[i32], arity: usize) -> usize {
        keys.chunks(arity).collect::<HashSet<_>>().len()
    }

    #[test]
    fn distinct_counts() {
        assert_eq!(distinct_count(1000, 0.99), 990);
        assert_eq!(distinct_count(1000, 0.1), 100);
        assert_eq!(distinct_count(10, 1.0), 10);
        assert_eq!(distinct_count(3, 0.5), 2);
        assert_eq!(distinct_count(7, 1e-6), 1);
    }

    #[test]
    fn gen_keys_matches_counts() {
        let k = gen_keys(10, 1.0, KeyKind::Coord3, 1).unwrap();
        assert_eq!((k.len(), distinct(&k, 3)), (30, 10));
        let k = gen_keys(1000, 0.1, KeyKind::Coord3, 2).unwrap();
        assert_eq!(distinct(&k, 3), 100);
        assert!(k.iter().all(|&c| (-(1 << 20)..(1 << 20)).contains(&c)));
        let k = gen_keys(1000, 0.5, KeyKind::Scalar, 3).unwrap();
        assert_eq!((k.len(), distinct(&k, 1)), (1000, 500));
    }

    #[test]
    fn gen_keys_is_seeded() {
        let a = gen_keys(500, 0.3, KeyKind::Coord3, 9).unwrap();
        assert_eq!(a, gen_keys(500, 0.3, KeyKind::Coord3, 9).unwrap());
        assert_ne!(a, gen_keys(500, 0.3, KeyKind::Coord3, 10).unwrap());
    }

    #[test]
    fn gen_keys_rejects_bad_rho() {
        for rho in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(gen_keys(10, rho, KeyKind::Scalar, 0), Err(Error::InvalidArgument(_))));
        }
    }

    fn spec(op: Op, backend: Backend) -> WorkloadSpec {
        WorkloadSpec {
            backend,
            op,
            key_kind: KeyKind::Coord3,
            value_bytes: 16,
            capacity: 1000,
            uniqueness: 0.99,
            trials: 2,
            threads: 2,
            seed: 5,
        }
    }

    #[test]
    fn every_op_and_backend_verifies() {
        for backend in [Backend::Generic, Backend::IntegerDelegate] {
            for op in Op::ALL {
                let r = run(&spec(op, backend)).unwrap();
                assert_eq!(r.unique, 990);
                assert_eq!(r.trial_ms.len(), 2);
                assert!(r.min_ms <= r.mean_ms && r.mean_ms <= r.max_ms);
            }
        }
    }

    #[test]
    fn set_workload() {
        let r = run(&WorkloadSpec { value_bytes: 0, key_kind: KeyKind::Scalar, ..spec(Op::Insert, Backend::Generic) })
            .unwrap();
        assert_eq!(r.unique, 990);
    }

    #[test]
    fn invalid_specs() {
        let s = spec(Op::Insert, Backend::Generic);
        assert!(run(&WorkloadSpec { uniqueness: 0.0, ..s }).is_err());
        assert!(run(&WorkloadSpec { trials: 0, ..s }).is_err());
        assert!(run(&WorkloadSpec { value_bytes: 6, ..s }).is_err());
    }

    #[test]
    fn grid_rows_and_skips() {
        let grid = Grid {
            backends: vec![Backend::Generic],
            ops: vec![Op::Insert, Op::Find],
            key_kinds: vec![KeyKind::Coord3],
            value_bytes: vec![4, 4096],
            capacities: vec![100, 1000],
            uniqueness: vec![0.5],
            trials: 2,
            threads: 1,
            seed: 0,
            max_bytes: 1000 * 4096,
        };
        let mut out = Vec::new();
        let records = grid.run(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 2 * 2 * 2 * 2);
        // The two 1000 x 4096 cells exceed the budget.
        assert_eq!(records.len(), 6);
        assert_eq!(lines.iter().filter(|l| l.ends_with(',')).count(), 4);
    }
}
