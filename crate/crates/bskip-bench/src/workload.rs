//! YCSB-style operation stream generation.
//!
//! A workload is a named find/insert/range mix over a keyed population of
//! `record_count` elements. Load-phase keys are a pseudorandom permutation
//! of [1, record_count] pushed through a 64-bit mix function; run-phase
//! keys come from a uniform or scrambled-zipfian distribution over the
//! loaded population. Every stream is fully determined by
//! (seed, thread_id, op_index).

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

/// 64-bit finalizer-style mixer: bijective on u64, maps 0 to 0 and nothing
/// else to 0, so indices from [1, N] always yield distinct nonzero keys.
pub fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// The benchmark mixes: (find%, insert%, range%).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MixName {
    Load,
    A,
    B,
    C,
    E,
}

impl MixName {
    pub fn percentages(self) -> (u32, u32, u32) {
        match self {
            MixName::Load => (0, 100, 0),
            MixName::A => (50, 50, 0),
            MixName::B => (95, 5, 0),
            MixName::C => (100, 0, 0),
            MixName::E => (0, 5, 95),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MixName::Load => "load",
            MixName::A => "a",
            MixName::B => "b",
            MixName::C => "c",
            MixName::E => "e",
        }
    }
}

pub const DEFAULT_ZIPFIAN_THETA: f64 = 0.99;
pub const DEFAULT_MAX_SCAN_LEN: usize = 100;

#[derive(Clone, Copy, Debug)]
pub enum Distribution {
    Uniform,
    Zipfian { theta: f64 },
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Zipfian { .. } => "zipfian",
        }
    }
}

#[derive(Clone, Debug)]
pub struct WorkloadSpec {
    pub mix: MixName,
    pub distribution: Distribution,
    pub record_count: u64,
    pub operation_count: u64,
    pub max_scan_len: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OpRecord {
    Find { key: u64 },
    Insert { key: u64, value: u64 },
    Range { key: u64, scan_len: usize },
}

/// Rejection-free zipfian rank sampler with precomputed zeta constants.
/// Ranks come out in [1, n] with P(rank = r) proportional to 1/r^theta.
#[derive(Clone, Debug)]
pub struct Zipfian {
    n: u64,
    theta: f64,
    alpha: f64,
    zetan: f64,
    eta: f64,
}

fn zeta(n: u64, theta: f64) -> f64 {
    (1..=n).map(|i| 1.0 / (i as f64).powf(theta)).sum()
}

impl Zipfian {
    pub fn new(n: u64, theta: f64) -> Zipfian {
        assert!(n >= 1);
        assert!((0.0..1.0).contains(&theta));
        let zetan = zeta(n, theta);
        let zeta2 = zeta(2.min(n), theta);
        let eta = if n == 1 {
            0.0
        } else {
            (1.0 - (2.0 / n as f64).powf(1.0 - theta)) / (1.0 - zeta2 / zetan)
        };
        Zipfian { n, theta, alpha: 1.0 / (1.0 - theta), zetan, eta }
    }

    pub fn next<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let uz = u * self.zetan;
        if uz < 1.0 {
            return 1;
        }
        if self.n >= 2 && uz < 1.0 + 0.5f64.powf(self.theta) {
            return 2;
        }
        let rank = 1 + (self.n as f64 * (self.eta * u - self.eta + 1.0).powf(self.alpha)) as u64;
        rank.min(self.n)
    }

    /// Analytic P(rank = r).
    pub fn pmf(&self, r: u64) -> f64 {
        1.0 / (r as f64).powf(self.theta) / self.zetan
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// The load-phase key sequence: a seeded affine permutation of
/// [0, record_count) mapped through [`mix64`], so keys are distinct,
/// nonzero, uniform-looking, and arrive in an order uncorrelated with
/// their magnitude.
#[derive(Clone, Debug)]
pub struct LoadKeys {
    record_count: u64,
    mul: u64,
    add: u64,
}

impl LoadKeys {
    pub fn new(spec: &WorkloadSpec) -> LoadKeys {
        let n = spec.record_count;
        assert!(n >= 1);
        let mut rng = SmallRng::seed_from_u64(mix64(spec.seed ^ 0x10ad));
        let mul = loop {
            let a = rng.gen_range(1..n.max(2));
            if gcd(a, n) == 1 {
                break a;
            }
        };
        LoadKeys { record_count: n, mul, add: rng.gen_range(0..n) }
    }

    /// Key of load record `i`, for `i` in `0..record_count`.
    pub fn key(&self, i: u64) -> u64 {
        debug_assert!(i < self.record_count);
        let idx = (self.mul as u128 * i as u128 + self.add as u128) % self.record_count as u128;
        mix64(idx as u64 + 1)
    }

    pub fn len(&self) -> u64 {
        self.record_count
    }

    pub fn is_empty(&self) -> bool {
        self.record_count == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.record_count).map(move |i| self.key(i))
    }
}

/// Per-thread run-phase generator. Op `i` of thread `t` is the same in
/// every execution with the same spec.
pub struct OpStream {
    rng: SmallRng,
    find_pct: u32,
    insert_pct: u32,
    record_count: u64,
    max_scan_len: usize,
    zipf: Option<Zipfian>,
}

impl OpStream {
    pub fn new(spec: &WorkloadSpec, thread_id: u64) -> OpStream {
        let (find_pct, insert_pct, _) = spec.mix.percentages();
        let zipf = match spec.distribution {
            Distribution::Uniform => None,
            Distribution::Zipfian { theta } => Some(Zipfian::new(spec.record_count, theta)),
        };
        OpStream {
            rng: SmallRng::seed_from_u64(mix64(spec.seed) ^ mix64(thread_id.wrapping_add(1))),
            find_pct,
            insert_pct,
            record_count: spec.record_count,
            max_scan_len: spec.max_scan_len,
            zipf,
        }
    }

    /// A key from the loaded population, per the configured distribution.
    /// Zipfian ranks are scrambled through the mixer so the hottest keys
    /// are scattered across the key space instead of clustered.
    fn population_key(&mut self) -> u64 {
        let idx = match &self.zipf {
            None => self.rng.gen_range(1..=self.record_count),
            Some(z) => {
                let rank = z.next(&mut self.rng);
                1 + mix64(rank) % self.record_count
            }
        };
        mix64(idx)
    }

    /// An insert key from the doubled index domain: about half the draws
    /// collide with loaded keys and exercise the duplicate path, the rest
    /// grow the population.
    fn insert_key(&mut self) -> u64 {
        mix64(self.rng.gen_range(1..=2 * self.record_count))
    }

    pub fn next_op(&mut self) -> OpRecord {
        let roll = self.rng.gen_range(0..100u32);
        if roll < self.find_pct {
            OpRecord::Find { key: self.population_key() }
        } else if roll < self.find_pct + self.insert_pct {
            OpRecord::Insert { key: self.insert_key(), value: self.rng.gen() }
        } else {
            OpRecord::Range {
                key: self.population_key(),
                scan_len: self.rng.gen_range(1..=self.max_scan_len),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn spec(mix: MixName, dist: Distribution, records: u64, seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            mix,
            distribution: dist,
            record_count: records,
            operation_count: 0,
            max_scan_len: DEFAULT_MAX_SCAN_LEN,
            seed,
        }
    }

    #[test]
    fn mixer_is_nonzero_on_positive_indices() {
        assert_eq!(mix64(0), 0);
        for i in 1..10_000u64 {
            assert_ne!(mix64(i), 0);
        }
    }

    #[test]
    fn load_keys_distinct_and_deterministic() {
        let s = spec(MixName::Load, Distribution::Uniform, 10, 7);
        let keys: Vec<u64> = LoadKeys::new(&s).iter().collect();
        assert_eq!(keys.len(), 10);
        assert_eq!(keys.iter().collect::<HashSet<_>>().len(), 10);
        assert!(keys.iter().all(|&k| k != 0));
        let again: Vec<u64> = LoadKeys::new(&s).iter().collect();
        assert_eq!(keys, again);
        let other: Vec<u64> = LoadKeys::new(&spec(MixName::Load, Distribution::Uniform, 10, 8))
            .iter()
            .collect();
        assert_ne!(keys, other);
    }

    #[test]
    fn load_keys_uniform_over_buckets() {
        // Chi-square over 256 equal slices of the u64 space at 10^6 keys.
        let s = spec(MixName::Load, Distribution::Uniform, 1_000_000, 11);
        let mut counts = [0u64; 256];
        for k in LoadKeys::new(&s).iter() {
            counts[(k >> 56) as usize] += 1;
        }
        let expected = 1_000_000.0 / 256.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected) * (c as f64 - expected) / expected)
            .sum();
        // 0.999 quantile of chi-square at 255 dof (Wilson-Hilferty), ~330.
        assert!(stat < 330.0, "chi-square statistic {stat}");
    }

    #[test]
    fn mix_c_is_all_finds() {
        let s = spec(MixName::C, Distribution::Uniform, 1000, 3);
        let mut stream = OpStream::new(&s, 0);
        for _ in 0..5000 {
            assert!(matches!(stream.next_op(), OpRecord::Find { .. }));
        }
    }

    #[test]
    fn mix_a_insert_fraction() {
        let s = spec(MixName::A, Distribution::Uniform, 1000, 5);
        let mut stream = OpStream::new(&s, 0);
        let n = 1_000_000;
        let inserts = (0..n)
            .filter(|_| matches!(stream.next_op(), OpRecord::Insert { .. }))
            .count();
        let frac = inserts as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.002, "insert fraction {frac}");
    }

    #[test]
    fn mix_e_scan_lengths_in_bounds() {
        let s = spec(MixName::E, Distribution::Uniform, 1000, 6);
        let mut stream = OpStream::new(&s, 0);
        let mut scans = 0;
        for _ in 0..10_000 {
            match stream.next_op() {
                OpRecord::Range { scan_len, .. } => {
                    assert!((1..=DEFAULT_MAX_SCAN_LEN).contains(&scan_len));
                    scans += 1;
                }
                OpRecord::Insert { .. } => {}
                OpRecord::Find { .. } => panic!("mix E has no finds"),
            }
        }
        assert!(scans > 9000);
    }

    #[test]
    fn streams_deterministic_per_thread() {
        let s = spec(MixName::A, Distribution::Zipfian { theta: 0.99 }, 500, 9);
        let draw = |t| {
            let mut stream = OpStream::new(&s, t);
            (0..200).map(|_| stream.next_op()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn zipfian_matches_analytic_pmf_small_n() {
        let z = Zipfian::new(10, 0.99);
        let mut rng = SmallRng::seed_from_u64(13);
        let mut counts = [0u64; 11];
        let n = 1_000_000;
        for _ in 0..n {
            counts[z.next(&mut rng) as usize] += 1;
        }
        for r in 1..=10u64 {
            let emp = counts[r as usize] as f64 / n as f64;
            assert!(
                (emp - z.pmf(r)).abs() < 0.02,
                "rank {r}: empirical {emp}, analytic {}",
                z.pmf(r)
            );
        }
    }

    #[test]
    fn zipfian_head_probability_large_n() {
        let z = Zipfian::new(100_000, 0.99);
        let mut rng = SmallRng::seed_from_u64(14);
        let n = 1_000_000;
        let head = (0..n).filter(|_| z.next(&mut rng) == 1).count() as f64 / n as f64;
        let analytic = z.pmf(1);
        assert!(
            ((head - analytic) / analytic).abs() < 0.05,
            "head {head} vs analytic {analytic}"
        );
    }

    #[test]
    fn zipfian_theta_zero_is_uniform() {
        let z = Zipfian::new(16, 0.0);
        let mut rng = SmallRng::seed_from_u64(15);
        let mut counts = [0u64; 17];
        let n = 160_000;
        for _ in 0..n {
            counts[z.next(&mut rng) as usize] += 1;
        }
        let expected = n as f64 / 16.0;
        let stat: f64 = (1..=16)
            .map(|r| {
                let c = counts[r] as f64;
                (c - expected) * (c - expected) / expected
            })
            .sum();
        // 0.999 quantile at 15 dof.
        assert!(stat < 37.70, "chi-square statistic {stat}");
    }
}
