//! Per-node reader-writer lock protocol.
//!
//! Defines the level-sensitive lock-mode rule (write at and below the
//! promotion height, read above), hand-over-hand advancement, and an
//! optional trace that checks every acquisition against the total lock
//! order: top-to-bottom across levels, left-to-right within a level. The
//! trace serializes all lock events through one mutex, so it is off by
//! default and only enabled for verification runs.

use std::collections::HashMap;
use std::ops::Deref;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::{Mutex, RwLockReadGuard, RwLockWriteGuard};

use crate::node::{Node, NodeInner};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LockMode {
    Read,
    Write,
}

/// Lock mode for a traversal at `level` inserting an element promoted to
/// `promote_h`: read above the promotion height, write at and below it.
/// Writes only ever happen at levels `<= promote_h`, so the leaf is always
/// write-locked during an insert.
pub fn mode_for(promote_h: usize, level: usize) -> LockMode {
    if level > promote_h {
        LockMode::Read
    } else {
        LockMode::Write
    }
}

/// Position of a node in the total lock order. Levels are ordered top to
/// bottom; within a level, the sentinel comes first and the remaining nodes
/// are ordered by header key (unique per level).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct OrderPos {
    pub level: u8,
    /// `None` for the level's sentinel, which orders before all keys.
    pub key: Option<u64>,
}

impl PartialOrd for OrderPos {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderPos {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Higher level first, then sentinel, then ascending header key.
        other
            .level
            .cmp(&self.level)
            .then_with(|| match (self.key, other.key) {
                (None, None) => std::cmp::Ordering::Equal,
                (None, Some(_)) => std::cmp::Ordering::Less,
                (Some(_), None) => std::cmp::Ordering::Greater,
                (Some(a), Some(b)) => a.cmp(&b),
            })
    }
}

#[derive(Clone, Copy, Debug)]
enum EventKind {
    /// Lock acquired. `pos` is `None` for a freshly allocated node that is
    /// not yet linked into the structure and so has no place in the order.
    Acquire { mode: LockMode, pos: Option<OrderPos> },
    /// A previously unlinked node became reachable while its birth lock was
    /// still held.
    Publish { pos: OrderPos },
    Release,
}

#[derive(Clone, Copy, Debug)]
struct TraceEvent {
    thread: u64,
    node: usize,
    kind: EventKind,
}

static NEXT_TRACE_THREAD: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static TRACE_THREAD_ID: u64 = NEXT_TRACE_THREAD.fetch_add(1, Ordering::Relaxed);
}

fn trace_thread_id() -> u64 {
    TRACE_THREAD_ID.with(|id| *id)
}

/// Verification result of a recorded lock trace.
#[derive(Debug)]
pub struct TraceReport {
    pub events: usize,
    /// Most locks on reachable nodes held by one thread at one instant.
    pub max_locks_held: usize,
    /// Widest level span (inclusive node count) over one thread's held locks.
    pub max_level_span: usize,
    pub violations: Vec<String>,
}

impl TraceReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Serialized trace of every lock acquisition, publication, and release.
#[derive(Default)]
pub struct LockTrace {
    events: Mutex<Vec<TraceEvent>>,
}

impl LockTrace {
    pub fn new() -> Self {
        LockTrace::default()
    }

    fn record(&self, node: usize, kind: EventKind) {
        self.events.lock().push(TraceEvent { thread: trace_thread_id(), node, kind });
    }

    pub(crate) fn acquire(&self, node: usize, mode: LockMode, pos: Option<OrderPos>) {
        self.record(node, EventKind::Acquire { mode, pos });
    }

    pub(crate) fn publish(&self, node: usize, pos: OrderPos) {
        self.record(node, EventKind::Publish { pos });
    }

    pub(crate) fn release(&self, node: usize) {
        self.record(node, EventKind::Release);
    }

    pub fn len(&self) -> usize {
        self.events.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.events.lock().clear();
    }

    /// Replays the trace and checks, per thread:
    /// - every ordered acquisition is `>=` all locks the thread holds
    ///   (no circular wait is possible under such a discipline);
    /// - at most 3 locks on reachable nodes are held at any instant;
    /// - held locks span at most two adjacent levels.
    pub fn verify(&self) -> TraceReport {
        let events = self.events.lock();
        let mut held: HashMap<u64, HashMap<usize, (LockMode, Option<OrderPos>)>> = HashMap::new();
        let mut report = TraceReport {
            events: events.len(),
            max_locks_held: 0,
            max_level_span: 0,
            violations: Vec::new(),
        };
        for (i, ev) in events.iter().enumerate() {
            let thread_held = held.entry(ev.thread).or_default();
            match ev.kind {
                EventKind::Acquire { mode, pos } => {
                    if let Some(pos) = pos {
                        for (_, other) in thread_held.values() {
                            if let Some(other) = other {
                                if pos < *other {
                                    report.violations.push(format!(
                                        "event {i}: thread {} acquired {:?} while holding later {:?}",
                                        ev.thread, pos, other
                                    ));
                                }
                            }
                        }
                    }
                    if thread_held.insert(ev.node, (mode, pos)).is_some() {
                        report
                            .violations
                            .push(format!("event {i}: node {:#x} acquired twice", ev.node));
                    }
                }
                EventKind::Publish { pos } => {
                    match thread_held.get_mut(&ev.node) {
                        Some((LockMode::Write, slot @ None)) => *slot = Some(pos),
                        Some((LockMode::Read, _)) => report.violations.push(format!(
                            "event {i}: node {:#x} published under a read lock",
                            ev.node
                        )),
                        Some(_) => report.violations.push(format!(
                            "event {i}: node {:#x} published twice",
                            ev.node
                        )),
                        None => report.violations.push(format!(
                            "event {i}: publish of node {:#x} not held by thread {}",
                            ev.node, ev.thread
                        )),
                    }
                }
                EventKind::Release => {
                    if thread_held.remove(&ev.node).is_none() {
                        report.violations.push(format!(
                            "event {i}: release of node {:#x} not held by thread {}",
                            ev.node, ev.thread
                        ));
                    }
                }
            }
            let reachable: Vec<OrderPos> =
                thread_held.values().filter_map(|&(_, pos)| pos).collect();
            report.max_locks_held = report.max_locks_held.max(reachable.len());
            if reachable.len() > 3 {
                report.violations.push(format!(
                    "event {i}: thread {} holds {} locks on reachable nodes",
                    ev.thread,
                    reachable.len()
                ));
            }
            if let (Some(lo), Some(hi)) = (
                reachable.iter().map(|p| p.level).min(),
                reachable.iter().map(|p| p.level).max(),
            ) {
                let span = (hi - lo) as usize + 1;
                report.max_level_span = report.max_level_span.max(span);
                if span > 2 {
                    report.violations.push(format!(
                        "event {i}: thread {} holds locks spanning levels {lo}..={hi}",
                        ev.thread
                    ));
                }
            }
        }
        for (thread, locks) in &held {
            if !locks.is_empty() {
                report
                    .violations
                    .push(format!("thread {thread} ended trace holding {} locks", locks.len()));
            }
        }
        report
    }
}

enum GuardInner<'a> {
    Read(RwLockReadGuard<'a, NodeInner>),
    Write(RwLockWriteGuard<'a, NodeInner>),
}

/// A held node lock. Releases (and records the release) on drop.
pub struct NodeGuard<'a> {
    node: &'a Node,
    inner: GuardInner<'a>,
    trace: Option<&'a LockTrace>,
}

impl<'a> NodeGuard<'a> {
    pub fn node(&self) -> &'a Node {
        self.node
    }

    pub fn mode(&self) -> LockMode {
        match self.inner {
            GuardInner::Read(_) => LockMode::Read,
            GuardInner::Write(_) => LockMode::Write,
        }
    }

    /// Mutable access to the node contents; the guard must be a write guard.
    pub fn as_mut(&mut self) -> &mut NodeInner {
        match &mut self.inner {
            GuardInner::Write(g) => &mut *g,
            GuardInner::Read(_) => panic!("mutation through a read lock"),
        }
    }
}

impl Deref for NodeGuard<'_> {
    type Target = NodeInner;

    fn deref(&self) -> &NodeInner {
        match &self.inner {
            GuardInner::Read(g) => g,
            GuardInner::Write(g) => g,
        }
    }
}

impl Drop for NodeGuard<'_> {
    fn drop(&mut self) {
        if let Some(trace) = self.trace {
            trace.release(self.node as *const Node as usize);
        }
    }
}

fn order_pos(node: &Node) -> OrderPos {
    OrderPos {
        level: node.level(),
        key: if node.is_sentinel() { None } else { Some(node.header().0) },
    }
}

/// Blocking acquisition of a reachable node's lock.
pub fn lock_node<'a>(
    node: &'a Node,
    mode: LockMode,
    trace: Option<&'a LockTrace>,
) -> NodeGuard<'a> {
    let inner = match mode {
        LockMode::Read => GuardInner::Read(node.inner().read()),
        LockMode::Write => GuardInner::Write(node.inner().write()),
    };
    if let Some(t) = trace {
        t.acquire(node as *const Node as usize, mode, Some(order_pos(node)));
    }
    NodeGuard { node, inner, trace }
}

/// Write-locks a freshly allocated node that is not yet linked anywhere.
/// Taking this lock cannot delay any other thread; it has no position in
/// the lock order until the node is published.
pub fn lock_new_node<'a>(node: &'a Node, trace: Option<&'a LockTrace>) -> NodeGuard<'a> {
    let inner = GuardInner::Write(node.inner().write());
    if let Some(t) = trace {
        t.acquire(node as *const Node as usize, LockMode::Write, None);
    }
    NodeGuard { node, inner, trace }
}

/// Records that `node`, locked since allocation, became reachable.
pub(crate) fn publish(node: &Node, trace: Option<&LockTrace>) {
    if let Some(t) = trace {
        t.publish(node as *const Node as usize, order_pos(node));
    }
}

/// Hand-over-hand step: acquires `target` in `mode`, then releases `held`.
/// The caller holds exactly one lock on return.
pub fn hoh_advance<'a>(
    held: NodeGuard<'a>,
    target: &'a Node,
    mode: LockMode,
    trace: Option<&'a LockTrace>,
) -> NodeGuard<'a> {
    let next = lock_node(target, mode, trace);
    drop(held);
    next
}
