//! The concurrent ordered index: a skiplist over fixed-capacity multi-key
//! nodes, with all structural change done in a single top-down pass.
//!
//! Every insert draws its promotion height before touching the structure,
//! preallocates one node per promoted level (the pending tower, write-locked
//! from birth), and descends once from the top level: searching under read
//! locks above the promotion height, splitting and splicing under write
//! locks at and below it. Traversal is hand-over-hand and always follows
//! the global lock order (higher levels first, left to right within a
//! level), so operations cannot deadlock.
//!
//! Nodes are never freed while the index is alive. Every allocation is
//! pushed onto an intrusive list and reclaimed only on drop, so a plain
//! pointer read under a predecessor's lock can always be dereferenced.

use std::ptr::null_mut;
use std::sync::atomic::{AtomicPtr, Ordering};

use rand::Rng;

use crate::error::Error;
use crate::lock::{
    hoh_advance, lock_new_node, lock_node, mode_for, publish, LockMode, LockTrace, NodeGuard,
};
use crate::node::{Key, Node, NodePtr, Value};
use crate::promote::{sample_height, PromotionParams};
use crate::stats::{Stats, StatsSnapshot};

pub struct BSkipList {
    params: PromotionParams,
    /// Leftmost node of each level, index = level.
    sentinels: Vec<NodePtr>,
    /// Head of the intrusive allocation list threaded through every node.
    alloc_head: AtomicPtr<Node>,
    stats: Stats,
    trace: Option<LockTrace>,
}

impl BSkipList {
    pub fn new(params: PromotionParams) -> Self {
        Self::build(params, false)
    }

    /// Like [`BSkipList::new`], but records every lock event for later
    /// verification. Serializes all lock operations; test use only.
    pub fn with_lock_trace(params: PromotionParams) -> Self {
        Self::build(params, true)
    }

    fn build(params: PromotionParams, traced: bool) -> Self {
        let mut list = BSkipList {
            params,
            sentinels: Vec::with_capacity(params.max_height()),
            alloc_head: AtomicPtr::new(null_mut()),
            stats: Stats::new(params.max_height()),
            trace: traced.then(LockTrace::new),
        };
        for level in 0..params.max_height() {
            let ptr = Node::alloc(level as u8, true, params.node_capacity());
            {
                let node = unsafe { ptr.as_node() };
                let mut inner = node.inner().write();
                if level == 0 {
                    inner.seed_header(Key::RESERVED, Some(Value(0)), None);
                } else {
                    inner.seed_header(Key::RESERVED, None, Some(list.sentinels[level - 1]));
                }
            }
            list.register(ptr);
            list.sentinels.push(ptr);
        }
        list
    }

    pub fn params(&self) -> &PromotionParams {
        &self.params
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn lock_trace(&self) -> Option<&LockTrace> {
        self.trace.as_ref()
    }

    fn register(&self, ptr: NodePtr) {
        let node = unsafe { ptr.as_node() };
        let mut head = self.alloc_head.load(Ordering::Relaxed);
        loop {
            node.alloc_next.store(head, Ordering::Relaxed);
            match self.alloc_head.compare_exchange_weak(
                head,
                ptr.raw(),
                Ordering::Release,
                Ordering::Relaxed,
            ) {
                Ok(_) => break,
                Err(now) => head = now,
            }
        }
    }

    fn alloc_node(&self, level: u8) -> NodePtr {
        let ptr = Node::alloc(level, false, self.params.node_capacity());
        self.register(ptr);
        ptr
    }

    fn sentinel(&self, level: usize) -> &Node {
        unsafe { self.sentinels[level].as_node() }
    }

    /// Advances `cur` rightward while the successor's header is `<= k`,
    /// hand over hand in `mode`. Returns the number of links followed.
    fn walk_right<'a>(&'a self, cur: &mut NodeGuard<'a>, k: Key, mode: LockMode) -> u64 {
        let mut steps = 0;
        loop {
            match cur.next_header() {
                Some(nh) if nh <= k => {
                    let next = unsafe { cur.next().unwrap().as_node() };
                    let held = std::mem::replace(cur, lock_node(next, mode, self.trace.as_ref()));
                    drop(held);
                    steps += 1;
                }
                _ => return steps,
            }
        }
    }

    /// Point lookup.
    pub fn get(&self, k: Key) -> Option<Value> {
        if k.is_reserved() {
            return None;
        }
        let trace = self.trace.as_ref();
        let mut level = self.params.max_height() - 1;
        let mut cur = lock_node(self.sentinel(level), LockMode::Read, trace);
        loop {
            let steps = self.walk_right(&mut cur, k, LockMode::Read);
            self.stats.count_level_walk(level, steps + 1);
            let (rank, found) = cur.find_rank(k);
            if level == 0 {
                return found.then(|| cur.value(rank));
            }
            let child = unsafe { cur.child(rank).as_node() };
            cur = hoh_advance(cur, child, LockMode::Read, trace);
            level -= 1;
        }
    }

    /// Ascending scan of up to `max_len` pairs with key `>= start`.
    pub fn range(&self, start: Key, max_len: usize) -> Vec<(Key, Value)> {
        let mut out = Vec::new();
        if max_len == 0 {
            return out;
        }
        let trace = self.trace.as_ref();
        let mut level = self.params.max_height() - 1;
        let mut cur = lock_node(self.sentinel(level), LockMode::Read, trace);
        loop {
            let steps = self.walk_right(&mut cur, start, LockMode::Read);
            self.stats.count_level_walk(level, steps + 1);
            if level == 0 {
                break;
            }
            let (rank, _) = cur.find_rank(start);
            let child = unsafe { cur.child(rank).as_node() };
            cur = hoh_advance(cur, child, LockMode::Read, trace);
            level -= 1;
        }
        let mut leaves = 1u64;
        let (rank, found) = cur.find_rank(start);
        let mut idx = if found { rank } else { rank + 1 };
        loop {
            while idx < cur.count() && out.len() < max_len {
                let key = cur.key(idx);
                if !key.is_reserved() {
                    out.push((key, cur.value(idx)));
                }
                idx += 1;
            }
            if out.len() >= max_len {
                break;
            }
            match cur.next() {
                Some(next) => {
                    cur = hoh_advance(cur, unsafe { next.as_node() }, LockMode::Read, trace);
                    leaves += 1;
                    idx = 0;
                }
                None => break,
            }
        }
        self.stats.count_range(leaves);
        out
    }

    /// Inserts `k -> v`, drawing the promotion height from `rng`. Returns
    /// `Ok(true)` if the key was new, `Ok(false)` if its value was updated.
    pub fn insert<R: Rng>(&self, k: Key, v: Value, rng: &mut R) -> Result<bool, Error> {
        let h = sample_height(&self.params, rng);
        self.insert_with_height(k, v, h)
    }

    /// Insert with an explicit promotion height `h` in `0..max_height`.
    /// The single top-down structural pass: search under read locks above
    /// `h`, insert and splice under write locks at and below `h`.
    pub fn insert_with_height(&self, k: Key, v: Value, h: usize) -> Result<bool, Error> {
        if k.is_reserved() {
            return Err(Error::ReservedKey);
        }
        if h >= self.params.max_height() {
            return Err(Error::InvalidParams(format!(
                "height {h} outside 0..{}",
                self.params.max_height()
            )));
        }
        let trace = self.trace.as_ref();

        // Pending tower: the nodes k will head at each level below h,
        // chained by child links, locked from birth so nothing observes
        // them half-built once they become reachable.
        let tower: Vec<NodePtr> = (0..h).map(|l| self.alloc_node(l as u8)).collect();
        let mut tower_guards: Vec<Option<NodeGuard>> = Vec::with_capacity(h);
        for (l, &ptr) in tower.iter().enumerate() {
            let node = unsafe { ptr.as_node() };
            let mut guard = lock_new_node(node, trace);
            if l == 0 {
                guard.as_mut().seed_header(k, Some(v), None);
            } else {
                guard.as_mut().seed_header(k, None, Some(tower[l - 1]));
            }
            node.set_header(k);
            tower_guards.push(Some(guard));
        }

        let mut level = self.params.max_height() - 1;
        let top_mode = mode_for(h, level);
        if top_mode == LockMode::Write {
            self.stats.count_root_write_lock();
        }
        let mut cur = lock_node(self.sentinel(level), top_mode, trace);
        // At levels at or below h, the node into which k was just placed one
        // level up. Its write lock guards the pending child link to the
        // tower, so it stays held until the level below is resolved.
        let mut parent: Option<NodeGuard> = None;
        loop {
            let steps = self.walk_right(&mut cur, k, mode_for(h, level));
            self.stats.count_level_walk(level, steps + 1);
            let (mut rank, found) = cur.find_rank(k);
            if found {
                return Ok(self.resolve_duplicate(cur, parent, tower_guards, level, h, rank, k, v));
            }
            if level == h {
                if cur.is_full() {
                    let (right, new_rank) = self.overflow_split(cur, rank);
                    cur = right;
                    rank = new_rank;
                }
                if level == 0 {
                    cur.as_mut().insert_leaf(rank, k, v);
                    return Ok(true);
                }
                cur.as_mut().insert_internal(rank, k, tower[level - 1]);
            } else if level < h {
                // Promotion split: k and everything after it move into the
                // tower node, which is linked in behind cur.
                let mut tg = tower_guards[level].take().expect("tower level spliced once");
                tg.as_mut().set_next(cur.next());
                cur.as_mut().split_at(rank + 1, tg.as_mut());
                cur.as_mut().set_next(Some(tower[level]));
                publish(tg.node(), trace);
                drop(parent.take());
                if level == 0 {
                    return Ok(true);
                }
                let child = unsafe { cur.child(rank).as_node() };
                let child_guard = lock_node(child, LockMode::Write, trace);
                drop(cur);
                parent = Some(tg);
                cur = child_guard;
                level -= 1;
                continue;
            }
            debug_assert!(level > 0);
            let child = unsafe { cur.child(rank).as_node() };
            let child_guard = lock_node(child, mode_for(h, level - 1), trace);
            if level == h {
                parent = Some(cur);
            } else {
                drop(cur);
            }
            cur = child_guard;
            level -= 1;
        }
    }

    /// Splits a full node in half ahead of an insert at the promotion
    /// level. The right half is reachable only through the next link; no
    /// child link from above points at it. Returns the half that will
    /// receive k and k's rank within it.
    fn overflow_split<'a>(
        &'a self,
        mut cur: NodeGuard<'a>,
        rank: usize,
    ) -> (NodeGuard<'a>, usize) {
        let trace = self.trace.as_ref();
        let right_ptr = self.alloc_node(cur.node().level());
        let right = unsafe { right_ptr.as_node() };
        let mut rg = lock_new_node(right, trace);
        let split_rank = cur.count() / 2;
        rg.as_mut().set_next(cur.next());
        cur.as_mut().split_at(split_rank, rg.as_mut());
        right.set_header(rg.key(0));
        cur.as_mut().set_next(Some(right_ptr));
        publish(right, trace);
        if rank + 1 <= split_rank {
            (cur, rank)
        } else {
            (rg, rank - split_rank)
        }
    }

    /// The insert found k already present at `level`. No key is ever
    /// removed, so k must stay a header wherever a child link above points
    /// at it; the pending tower below this level is abandoned.
    #[allow(clippy::too_many_arguments)]
    fn resolve_duplicate<'a>(
        &'a self,
        mut cur: NodeGuard<'a>,
        parent: Option<NodeGuard<'a>>,
        mut tower_guards: Vec<Option<NodeGuard<'a>>>,
        level: usize,
        h: usize,
        rank: usize,
        k: Key,
        v: Value,
    ) -> bool {
        let trace = self.trace.as_ref();
        if level >= h {
            // Nothing was spliced yet; the whole tower is private garbage
            // (reclaimed when the index drops). Walk k's child chain down
            // and overwrite the value.
            debug_assert!(parent.is_none());
            drop(tower_guards);
            self.finish_update(cur, rank, level, k, v);
            return false;
        }
        // k was spliced in at level + 1 with a child link aimed at the
        // tower, but an older copy of k exists down here. The parent's
        // write lock has been held since that link was created, so it is
        // still unobserved and can be fixed up.
        let mut parent = parent.expect("levels below a splice retain the node holding k");
        if rank == 0 {
            // k already heads cur: aim the parent link at cur and abandon
            // the tower from this level down.
            let (pr, pfound) = parent.find_rank(k);
            debug_assert!(pfound);
            parent.as_mut().set_child(pr, NodePtr::from_ref(cur.node()));
            drop(parent);
            drop(tower_guards);
            self.finish_update(cur, 0, level, k, v);
            return false;
        }
        // k sits mid-node: split cur so k becomes the header of the tower
        // node, which inherits k's existing child (or carries the new
        // value, at the leaf). The old slot for k is dropped from cur.
        let mut tg = tower_guards[level].take().expect("tower level spliced once");
        let child_k = (!cur.is_leaf()).then(|| cur.child(rank));
        if let Some(child_k) = child_k {
            tg.as_mut().set_child(0, child_k);
        }
        tg.as_mut().set_next(cur.next());
        cur.as_mut().split_at(rank + 1, tg.as_mut());
        cur.as_mut().truncate(rank);
        cur.as_mut().set_next(Some(NodePtr::from_ref(tg.node())));
        publish(tg.node(), trace);
        drop(tower_guards);
        drop(parent);
        if level == 0 {
            // The tower leaf was seeded with (k, v); the update is done.
            return false;
        }
        let child = unsafe { child_k.expect("internal node").as_node() };
        let mode = if level == 1 { LockMode::Write } else { LockMode::Read };
        let child_guard = lock_node(child, mode, trace);
        drop(cur);
        drop(tg);
        self.finish_update(child_guard, 0, level - 1, k, v);
        false
    }

    /// Descends k's child chain from a node where k sits at `rank` and
    /// overwrites the stored value. Read locks down to level 1, write lock
    /// at the leaf; the caller already holds a write lock when starting at
    /// the leaf itself.
    fn finish_update<'a>(
        &'a self,
        mut cur: NodeGuard<'a>,
        mut rank: usize,
        mut level: usize,
        k: Key,
        v: Value,
    ) {
        let trace = self.trace.as_ref();
        loop {
            if level == 0 {
                debug_assert_eq!(cur.key(rank), k);
                cur.as_mut().write_value(rank, v);
                return;
            }
            let child = unsafe { cur.child(rank).as_node() };
            let mode = if level == 1 { LockMode::Write } else { LockMode::Read };
            cur = hoh_advance(cur, child, mode, trace);
            debug_assert_eq!(cur.key(0), k);
            rank = 0;
            level -= 1;
        }
    }

    /// Number of stored keys. Walks the leaf level; quiescent use only.
    pub fn len(&self) -> usize {
        self.items_from(Key::RESERVED).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every stored pair in key order. Quiescent use only.
    pub fn items(&self) -> Vec<(Key, Value)> {
        self.items_from(Key::RESERVED)
    }

    fn items_from(&self, start: Key) -> Vec<(Key, Value)> {
        let mut out = Vec::new();
        let mut ptr = Some(self.sentinels[0]);
        while let Some(p) = ptr {
            let node = unsafe { p.as_node() };
            let inner = node.inner().read();
            for i in 0..inner.count() {
                let key = inner.key(i);
                if !key.is_reserved() && key >= start {
                    out.push((key, inner.value(i)));
                }
            }
            ptr = inner.next();
        }
        out
    }

    /// Full structural validation. Must run at a quiescent point: it reads
    /// whole levels without hand-over-hand coupling.
    pub fn audit(&self) -> AuditReport {
        let levels = self.params.max_height();
        let mut report = AuditReport {
            violations: Vec::new(),
            nodes_per_level: vec![0; levels],
            keys_per_level: vec![0; levels],
        };
        // (node id, keys, child ids) per level, walking each level's chain.
        let mut level_nodes: Vec<Vec<(usize, Vec<Key>, Vec<NodePtr>)>> = Vec::new();
        for level in 0..levels {
            let mut nodes = Vec::new();
            let mut ptr = Some(self.sentinels[level]);
            let mut first = true;
            let mut prev_last: Option<Key> = None;
            while let Some(p) = ptr {
                let node = unsafe { p.as_node() };
                let inner = node.inner().read();
                let keys: Vec<Key> = inner.keys().to_vec();
                if node.level() as usize != level {
                    report.fail(format!("level {level}: node {:#x} tagged level {}", p.id(), node.level()));
                }
                if first != node.is_sentinel() {
                    report.fail(format!("level {level}: sentinel flag wrong on node {:#x}", p.id()));
                }
                if keys.is_empty() {
                    report.fail(format!("level {level}: empty node {:#x}", p.id()));
                } else {
                    if keys.len() > inner.capacity() {
                        report.fail(format!("level {level}: node {:#x} over capacity", p.id()));
                    }
                    if node.header() != keys[0] {
                        report.fail(format!(
                            "level {level}: header copy {:?} != slot 0 {:?} in node {:#x}",
                            node.header(),
                            keys[0],
                            p.id()
                        ));
                    }
                    if first && keys[0] != Key::RESERVED {
                        report.fail(format!("level {level}: sentinel header not minimal"));
                    }
                    if !keys.windows(2).all(|w| w[0] < w[1]) {
                        report.fail(format!("level {level}: node {:#x} keys not ascending", p.id()));
                    }
                    if let Some(prev) = prev_last {
                        if prev >= keys[0] {
                            report.fail(format!(
                                "level {level}: node {:#x} overlaps predecessor ({:?} >= {:?})",
                                p.id(),
                                prev,
                                keys[0]
                            ));
                        }
                    }
                    prev_last = keys.last().copied();
                }
                let children: Vec<NodePtr> =
                    (0..if inner.is_leaf() { 0 } else { inner.count() })
                        .map(|i| inner.child(i))
                        .collect();
                report.nodes_per_level[level] += 1;
                report.keys_per_level[level] += keys.len();
                nodes.push((p.id(), keys, children));
                ptr = inner.next();
                first = false;
            }
            level_nodes.push(nodes);
        }
        // Child links: each key of an internal node points at a node one
        // level down headed by that same key, and that node is reachable
        // in the lower level's chain.
        for level in 1..levels {
            let below: std::collections::HashSet<usize> =
                level_nodes[level - 1].iter().map(|(id, _, _)| *id).collect();
            for (id, keys, children) in &level_nodes[level] {
                for (key, child) in keys.iter().zip(children) {
                    let child_node = unsafe { child.as_node() };
                    if child_node.header() != *key {
                        report.fail(format!(
                            "level {level}: key {:?} in node {id:#x} links to header {:?}",
                            key,
                            child_node.header()
                        ));
                    }
                    if !below.contains(&child.id()) {
                        report.fail(format!(
                            "level {level}: key {:?} in node {id:#x} links to unreachable node",
                            key
                        ));
                    }
                }
            }
        }
        report
    }
}

impl Drop for BSkipList {
    fn drop(&mut self) {
        let mut cur = *self.alloc_head.get_mut();
        while !cur.is_null() {
            let next = unsafe { (*cur).alloc_next.load(Ordering::Relaxed) };
            unsafe { drop(Box::from_raw(cur)) };
            cur = next;
        }
    }
}

/// Outcome of [`BSkipList::audit`].
#[derive(Debug)]
pub struct AuditReport {
    pub violations: Vec<String>,
    pub nodes_per_level: Vec<usize>,
    /// Stored keys per level, sentinel headers included.
    pub keys_per_level: Vec<usize>,
}

impl AuditReport {
    fn fail(&mut self, msg: String) {
        self.violations.push(msg);
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}
