//! Low-overhead operation counters.
//!
//! Counters are sharded across cache-line-padded slots, indexed by a
//! thread-local shard id, so concurrent benchmark threads do not contend on
//! a single cache line. All updates are relaxed; snapshots are only
//! meaningful at quiescent points.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use crossbeam_utils::CachePadded;

const SHARDS: usize = 16;

static NEXT_SHARD: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static SHARD: usize = NEXT_SHARD.fetch_add(1, Ordering::Relaxed) % SHARDS;
}

fn shard() -> usize {
    SHARD.with(|s| *s)
}

struct Shard {
    /// Write-mode acquisitions of the topmost sentinel.
    root_write_locks: AtomicU64,
    /// Horizontal steps per level: nodes inspected while walking a level,
    /// including the node first landed on (so every visit counts >= 1).
    steps: Vec<AtomicU64>,
    /// Traversal visits, per level (one per operation per level walked).
    visits: Vec<AtomicU64>,
    /// Leaf nodes touched by range queries.
    range_leaves: AtomicU64,
    range_queries: AtomicU64,
}

impl Shard {
    fn new(levels: usize) -> Self {
        Shard {
            root_write_locks: AtomicU64::new(0),
            steps: (0..levels).map(|_| AtomicU64::new(0)).collect(),
            visits: (0..levels).map(|_| AtomicU64::new(0)).collect(),
            range_leaves: AtomicU64::new(0),
            range_queries: AtomicU64::new(0),
        }
    }
}

pub struct Stats {
    shards: Vec<CachePadded<Shard>>,
}

impl Stats {
    pub fn new(levels: usize) -> Self {
        Stats { shards: (0..SHARDS).map(|_| CachePadded::new(Shard::new(levels))).collect() }
    }

    pub(crate) fn count_root_write_lock(&self) {
        self.shards[shard()].root_write_locks.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn count_level_walk(&self, level: usize, steps: u64) {
        let s = &self.shards[shard()];
        s.steps[level].fetch_add(steps, Ordering::Relaxed);
        s.visits[level].fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn count_range(&self, leaves: u64) {
        let s = &self.shards[shard()];
        s.range_leaves.fetch_add(leaves, Ordering::Relaxed);
        s.range_queries.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let levels = self.shards[0].steps.len();
        let mut snap = StatsSnapshot {
            root_write_locks: 0,
            steps: vec![0; levels],
            visits: vec![0; levels],
            range_leaves: 0,
            range_queries: 0,
        };
        for s in &self.shards {
            snap.root_write_locks += s.root_write_locks.load(Ordering::Relaxed);
            for l in 0..levels {
                snap.steps[l] += s.steps[l].load(Ordering::Relaxed);
                snap.visits[l] += s.visits[l].load(Ordering::Relaxed);
            }
            snap.range_leaves += s.range_leaves.load(Ordering::Relaxed);
            snap.range_queries += s.range_queries.load(Ordering::Relaxed);
        }
        snap
    }
}

/// Point-in-time copy of all counters, summed over shards.
#[derive(Clone, Debug)]
pub struct StatsSnapshot {
    pub root_write_locks: u64,
    pub steps: Vec<u64>,
    pub visits: Vec<u64>,
    pub range_leaves: u64,
    pub range_queries: u64,
}

impl StatsSnapshot {
    /// Mean horizontal steps taken per level visited, over all operations.
    pub fn steps_per_level(&self) -> f64 {
        let steps: u64 = self.steps.iter().sum();
        let visits: u64 = self.visits.iter().sum();
        if visits == 0 {
            0.0
        } else {
            steps as f64 / visits as f64
        }
    }

    /// Mean leaf nodes touched per range query.
    pub fn leaves_per_range(&self) -> f64 {
        if self.range_queries == 0 {
            0.0
        } else {
            self.range_leaves as f64 / self.range_queries as f64
        }
    }

    /// Difference of two snapshots taken on the same index, `self - earlier`.
    pub fn since(&self, earlier: &StatsSnapshot) -> StatsSnapshot {
        StatsSnapshot {
            root_write_locks: self.root_write_locks - earlier.root_write_locks,
            steps: self.steps.iter().zip(&earlier.steps).map(|(a, b)| a - b).collect(),
            visits: self.visits.iter().zip(&earlier.visits).map(|(a, b)| a - b).collect(),
            range_leaves: self.range_leaves - earlier.range_leaves,
            range_queries: self.range_queries - earlier.range_queries,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_sum_over_updates() {
        let stats = Stats::new(3);
        stats.count_root_write_lock();
        stats.count_level_walk(0, 2);
        stats.count_level_walk(0, 1);
        stats.count_level_walk(2, 0);
        stats.count_range(4);
        stats.count_range(2);
        let snap = stats.snapshot();
        assert_eq!(snap.root_write_locks, 1);
        assert_eq!(snap.steps, vec![3, 0, 0]);
        assert_eq!(snap.visits, vec![2, 0, 1]);
        assert_eq!(snap.steps_per_level(), 1.0);
        assert_eq!(snap.leaves_per_range(), 3.0);
    }

    #[test]
    fn snapshot_difference() {
        let stats = Stats::new(2);
        stats.count_level_walk(1, 5);
        let before = stats.snapshot();
        stats.count_level_walk(1, 7);
        stats.count_root_write_lock();
        let delta = stats.snapshot().since(&before);
        assert_eq!(delta.steps, vec![0, 7]);
        assert_eq!(delta.visits, vec![0, 1]);
        assert_eq!(delta.root_write_locks, 1);
    }

    #[test]
    fn shared_across_threads() {
        let stats = std::sync::Arc::new(Stats::new(1));
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let stats = stats.clone();
                std::thread::spawn(move || {
                    for _ in 0..1000 {
                        stats.count_level_walk(0, 1);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(stats.snapshot().steps[0], 4000);
    }
}
