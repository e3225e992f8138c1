//! Reference implementations used to check the concurrent index.
//!
//! `OracleMap` is a plain ordered map with the same operation semantics;
//! `diff_run` drives both structures with one seeded operation stream and
//! reports the first divergence. The chi-square helpers test that sampled
//! promotion heights follow the clipped geometric law.

use std::collections::BTreeMap;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::index::BSkipList;
use crate::node::{Key, Value};
use crate::promote::PromotionParams;

/// Sequential ordered map with the index's operation semantics.
#[derive(Default)]
pub struct OracleMap {
    map: BTreeMap<u64, u64>,
}

impl OracleMap {
    pub fn new() -> Self {
        OracleMap::default()
    }

    /// Returns true if the key was new, false if its value was replaced.
    pub fn insert(&mut self, k: u64, v: u64) -> bool {
        self.map.insert(k, v).is_none()
    }

    pub fn get(&self, k: u64) -> Option<u64> {
        self.map.get(&k).copied()
    }

    pub fn range(&self, start: u64, max_len: usize) -> Vec<(u64, u64)> {
        self.map.range(start..).take(max_len).map(|(&k, &v)| (k, v)).collect()
    }

    pub fn items(&self) -> Vec<(u64, u64)> {
        self.map.iter().map(|(&k, &v)| (k, v)).collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Op {
    Insert(u64, u64),
    Get(u64),
    Range(u64, usize),
}

/// Draws one operation; keys are uniform in `1..=key_space` so streams of
/// any length revisit keys and exercise the duplicate paths.
pub fn random_op<R: Rng>(rng: &mut R, key_space: u64) -> Op {
    let k = rng.gen_range(1..=key_space);
    match rng.gen_range(0..10) {
        0..=5 => Op::Insert(k, rng.gen()),
        6..=8 => Op::Get(k),
        _ => Op::Range(k, rng.gen_range(1..=32)),
    }
}

/// Checks the index's full contents and structure against the oracle.
pub fn verify_against(list: &BSkipList, oracle: &OracleMap) -> Result<(), String> {
    let got: Vec<(u64, u64)> = list.items().iter().map(|&(k, v)| (k.0, v.0)).collect();
    let expect = oracle.items();
    if got != expect {
        return Err(format!(
            "contents diverge: {} stored vs {} expected",
            got.len(),
            expect.len()
        ));
    }
    let audit = list.audit();
    if !audit.is_ok() {
        return Err(format!("audit failed: {}", audit.violations.join("; ")));
    }
    Ok(())
}

/// Runs one seeded operation stream against the index and the oracle and
/// reports the first divergence. Heights come from the same seeded stream,
/// so a failure is exactly reproducible from (params, seed, ops, key_space).
pub fn diff_run(
    params: PromotionParams,
    seed: u64,
    ops: usize,
    key_space: u64,
) -> Result<(), String> {
    let list = BSkipList::new(params);
    let mut oracle = OracleMap::new();
    let mut rng = SmallRng::seed_from_u64(seed);
    for i in 0..ops {
        match random_op(&mut rng, key_space) {
            Op::Insert(k, v) => {
                let expect = oracle.insert(k, v);
                let got = list
                    .insert(Key(k), Value(v), &mut rng)
                    .map_err(|e| format!("op {i}: {e}"))?;
                if got != expect {
                    return Err(format!("op {i}: insert({k}) -> {got}, expected {expect}"));
                }
            }
            Op::Get(k) => {
                let expect = oracle.get(k);
                let got = list.get(Key(k)).map(|v| v.0);
                if got != expect {
                    return Err(format!("op {i}: get({k}) -> {got:?}, expected {expect:?}"));
                }
            }
            Op::Range(start, max_len) => {
                let expect = oracle.range(start, max_len);
                let got: Vec<(u64, u64)> = list
                    .range(Key(start), max_len)
                    .iter()
                    .map(|&(k, v)| (k.0, v.0))
                    .collect();
                if got != expect {
                    return Err(format!(
                        "op {i}: range({start}, {max_len}) returned {} pairs, expected {}",
                        got.len(),
                        expect.len()
                    ));
                }
            }
        }
    }
    verify_against(&list, &oracle)
}

/// P(height = i) for the geometric process with success probability `p`
/// clipped to `levels` outcomes: p^i * (1-p) below the cap, p^(levels-1)
/// at it.
pub fn clipped_geometric_pmf(p: f64, levels: usize) -> Vec<f64> {
    (0..levels)
        .map(|i| {
            let base = p.powi(i as i32);
            if i + 1 == levels {
                base
            } else {
                base * (1.0 - p)
            }
        })
        .collect()
}

/// Pearson chi-square statistic of an observed height histogram against the
/// clipped geometric law. Tail bins are pooled until every expected count
/// reaches 5. Returns (statistic, degrees of freedom).
pub fn chi_square_geometric(counts: &[u64], p: f64) -> (f64, usize) {
    assert!(counts.len() >= 2);
    let n: u64 = counts.iter().sum();
    let pmf = clipped_geometric_pmf(p, counts.len());
    let mut obs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mut exp: Vec<f64> = pmf.iter().map(|&q| q * n as f64).collect();
    while exp.len() > 2 && *exp.last().unwrap() < 5.0 {
        let o = obs.pop().unwrap();
        let e = exp.pop().unwrap();
        *obs.last_mut().unwrap() += o;
        *exp.last_mut().unwrap() += e;
    }
    let stat = obs
        .iter()
        .zip(&exp)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    (stat, exp.len() - 1)
}

/// Upper critical values of the chi-square distribution at the 0.999
/// quantile; a correct sampler exceeds these once in a thousand runs.
pub fn chi_square_critical_999(dof: usize) -> f64 {
    match dof {
        1 => 10.828,
        2 => 13.816,
        3 => 16.266,
        4 => 18.467,
        5 => 20.515,
        6 => 22.458,
        7 => 24.322,
        8 => 26.124,
        _ => panic!("critical value table covers 1..=8 degrees of freedom"),
    }
}
