//! Fixed-capacity node layout and intra-node operations.
//!
//! A node stores up to `B` sorted keys. Leaf nodes carry a parallel value
//! array, internal nodes a parallel array of child links (one per key).
//! Slot 0 always holds the node's header (its smallest key); the leftmost
//! node of each level is a sentinel whose header is the reserved minimum
//! key, read as negative infinity.
//!
//! Nothing in this module takes locks. Callers must hold the node's lock in
//! the appropriate mode (read for lookups, write for mutation).

use std::ptr::NonNull;
use std::sync::atomic::{AtomicPtr, AtomicU64, AtomicUsize, Ordering};

use parking_lot::RwLock;

/// 64-bit key. The minimum representable value is reserved for sentinel
/// headers and is never a user key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Key(pub u64);

impl Key {
    /// Reserved sentinel header, interpreted as negative infinity.
    pub const RESERVED: Key = Key(u64::MIN);

    pub fn is_reserved(self) -> bool {
        self == Key::RESERVED
    }
}

/// 64-bit value stored at the leaf level.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Value(pub u64);

/// Intra-node search switches from linear scan to binary search at this
/// node capacity.
const BINARY_SEARCH_MIN_CAPACITY: usize = 32;

/// Largest number of elements shifted or copied within a single node by any
/// mutation so far. Updated in debug builds so stress suites can check the
/// fixed-size move bound.
pub static MAX_ELEMENTS_MOVED: AtomicUsize = AtomicUsize::new(0);

#[cfg(debug_assertions)]
fn record_moves(moved: usize) {
    MAX_ELEMENTS_MOVED.fetch_max(moved, Ordering::Relaxed);
}

#[cfg(not(debug_assertions))]
fn record_moves(_moved: usize) {}

/// Shared pointer to a node. Nodes are owned by the index's allocation list
/// and are never freed while the index is alive, so dereferencing is safe
/// for any lifetime bounded by a borrow of the index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NodePtr(NonNull<Node>);

unsafe impl Send for NodePtr {}
unsafe impl Sync for NodePtr {}

impl NodePtr {
    /// # Safety
    /// The node must outlive `'a`. The index guarantees this for every node
    /// reachable from it: nodes are only freed when the index is dropped.
    pub(crate) unsafe fn as_node<'a>(self) -> &'a Node {
        &*self.0.as_ptr()
    }

    pub fn id(self) -> usize {
        self.0.as_ptr() as usize
    }

    pub(crate) fn raw(self) -> *mut Node {
        self.0.as_ptr()
    }

    pub(crate) fn from_ref(node: &Node) -> NodePtr {
        NodePtr(NonNull::from(node))
    }
}

/// One fixed-size node: header metadata outside the lock, element storage
/// inside it.
pub struct Node {
    level: u8,
    sentinel: bool,
    /// Copy of `keys[0]`, readable without holding the lock. Written before
    /// the node is published; immutable afterwards (no operation ever
    /// changes slot 0 of a linked node).
    header: AtomicU64,
    /// Intrusive list of every allocation owned by one index; freed on drop.
    pub(crate) alloc_next: AtomicPtr<Node>,
    inner: RwLock<NodeInner>,
}

impl Node {
    /// Heap-allocates a node. Ownership moves to the caller's allocation
    /// list (see [`NodePtr`]); the pointer is valid until explicitly freed.
    pub(crate) fn alloc(level: u8, sentinel: bool, capacity: usize) -> NodePtr {
        let leaf = level == 0;
        let node = Box::new(Node {
            level,
            sentinel,
            header: AtomicU64::new(Key::RESERVED.0),
            alloc_next: AtomicPtr::new(std::ptr::null_mut()),
            inner: RwLock::new(NodeInner::empty(capacity, leaf)),
        });
        NodePtr(NonNull::from(Box::leak(node)))
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn is_sentinel(&self) -> bool {
        self.sentinel
    }

    pub fn is_leaf(&self) -> bool {
        self.level == 0
    }

    /// Header key without taking the lock. Valid for sentinels and for any
    /// published node; synchronization piggybacks on the lock of whichever
    /// node the pointer to this one was read from.
    pub fn header(&self) -> Key {
        Key(self.header.load(Ordering::Relaxed))
    }

    pub(crate) fn set_header(&self, k: Key) {
        self.header.store(k.0, Ordering::Relaxed);
    }

    pub(crate) fn inner(&self) -> &RwLock<NodeInner> {
        &self.inner
    }
}

/// Lock-protected element storage of a node.
pub struct NodeInner {
    capacity: usize,
    leaf: bool,
    keys: Vec<Key>,
    values: Vec<Value>,
    children: Vec<NodePtr>,
    next: Option<NodePtr>,
}

impl NodeInner {
    fn empty(capacity: usize, leaf: bool) -> Self {
        NodeInner {
            capacity,
            leaf,
            keys: Vec::with_capacity(capacity),
            values: if leaf { Vec::with_capacity(capacity) } else { Vec::new() },
            children: if leaf { Vec::new() } else { Vec::with_capacity(capacity) },
            next: None,
        }
    }

    pub fn count(&self) -> usize {
        self.keys.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.keys.len() == self.capacity
    }

    pub fn is_leaf(&self) -> bool {
        self.leaf
    }

    pub fn key(&self, rank: usize) -> Key {
        self.keys[rank]
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn value(&self, rank: usize) -> Value {
        self.values[rank]
    }

    pub fn child(&self, rank: usize) -> NodePtr {
        self.children[rank]
    }

    pub fn next(&self) -> Option<NodePtr> {
        self.next
    }

    pub(crate) fn set_next(&mut self, next: Option<NodePtr>) {
        self.next = next;
    }

    /// Header of the successor node, or `None` when this node is the
    /// rightmost of its level (read as positive infinity).
    pub fn next_header(&self) -> Option<Key> {
        // Safe without the successor's lock: headers are immutable once the
        // node is reachable through `next`.
        self.next.map(|p| unsafe { p.as_node() }.header())
    }

    /// Rank of the largest stored key `<= k`, and whether it equals `k`.
    ///
    /// Requires `keys[0] <= k`, which traversal guarantees (the sentinel
    /// header is the global minimum).
    pub fn find_rank(&self, k: Key) -> (usize, bool) {
        debug_assert!(!self.keys.is_empty());
        debug_assert!(self.keys[0] <= k);
        let rank = if self.keys.len() >= BINARY_SEARCH_MIN_CAPACITY {
            self.keys.partition_point(|&key| key <= k) - 1
        } else {
            let mut i = 0;
            while i + 1 < self.keys.len() && self.keys[i + 1] <= k {
                i += 1;
            }
            i
        };
        (rank, self.keys[rank] == k)
    }

    /// Places `k` (with its value) at slot `rank + 1` of a leaf, shifting
    /// the tail right by one.
    pub fn insert_leaf(&mut self, rank: usize, k: Key, v: Value) {
        debug_assert!(self.leaf);
        assert!(self.keys.len() < self.capacity, "insert into full node");
        debug_assert!(self.keys[rank] < k);
        debug_assert!(rank + 1 == self.keys.len() || k < self.keys[rank + 1]);
        record_moves(self.keys.len() - rank - 1);
        self.keys.insert(rank + 1, k);
        self.values.insert(rank + 1, v);
    }

    /// Places `k` with its child link at slot `rank + 1` of an internal node.
    pub fn insert_internal(&mut self, rank: usize, k: Key, child: NodePtr) {
        debug_assert!(!self.leaf);
        assert!(self.keys.len() < self.capacity, "insert into full node");
        debug_assert!(self.keys[rank] < k);
        debug_assert!(rank + 1 == self.keys.len() || k < self.keys[rank + 1]);
        record_moves(self.keys.len() - rank - 1);
        self.keys.insert(rank + 1, k);
        self.children.insert(rank + 1, child);
    }

    /// Overwrites the value at `rank`; leaf only.
    pub fn write_value(&mut self, rank: usize, v: Value) {
        debug_assert!(self.leaf);
        self.values[rank] = v;
    }

    /// Moves slots `split_rank..` (keys plus parallel values or children)
    /// onto the end of `dst`, preserving order. `dst` may already hold a
    /// pre-seeded header. Next links are not touched; the caller splices.
    pub fn split_at(&mut self, split_rank: usize, dst: &mut NodeInner) {
        debug_assert!(split_rank > 0 && split_rank <= self.keys.len());
        debug_assert_eq!(self.leaf, dst.leaf);
        let moved = self.keys.len() - split_rank;
        assert!(dst.keys.len() + moved <= dst.capacity, "split overflows target");
        record_moves(moved);
        dst.keys.extend(self.keys.drain(split_rank..));
        if self.leaf {
            dst.values.extend(self.values.drain(split_rank..));
        } else {
            dst.children.extend(self.children.drain(split_rank..));
        }
    }

    /// Drops slots `new_count..`. Used when a duplicate discovered mid-pass
    /// migrates a key (and its link) into the pending tower node.
    pub(crate) fn truncate(&mut self, new_count: usize) {
        debug_assert!(new_count >= 1);
        self.keys.truncate(new_count);
        if self.leaf {
            self.values.truncate(new_count);
        } else {
            self.children.truncate(new_count);
        }
    }

    /// Seeds slot 0 of a freshly allocated node. The caller mirrors the key
    /// into the node's unlocked header copy.
    pub(crate) fn seed_header(&mut self, k: Key, value: Option<Value>, child: Option<NodePtr>) {
        debug_assert!(self.keys.is_empty());
        self.keys.push(k);
        if self.leaf {
            self.values.push(value.expect("leaf header needs a value"));
        } else {
            self.children.push(child.expect("internal header needs a child"));
        }
    }

    /// Replaces the child link at `rank`. Used to redirect a pending child
    /// link when an insert discovers its key already promoted.
    pub(crate) fn set_child(&mut self, rank: usize, child: NodePtr) {
        debug_assert!(!self.leaf);
        self.children[rank] = child;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf_with(keys: &[u64]) -> NodeInner {
        let mut n = NodeInner::empty(8, true);
        for &k in keys {
            n.keys.push(Key(k));
            n.values.push(Value(k * 10));
        }
        n
    }

    #[test]
    fn find_rank_between_keys() {
        let n = leaf_with(&[10, 20, 40, 50]);
        assert_eq!(n.find_rank(Key(30)), (1, false));
    }

    #[test]
    fn find_rank_exact_hit() {
        let n = leaf_with(&[10, 20, 40, 50]);
        assert_eq!(n.find_rank(Key(40)), (2, true));
    }

    #[test]
    fn find_rank_sentinel_header() {
        let n = leaf_with(&[0]);
        assert_eq!(n.find_rank(Key(7)), (0, false));
        assert_eq!(n.find_rank(Key(u64::MAX)), (0, false));
    }

    #[test]
    fn binary_and_linear_search_agree() {
        // Both strategies must return identical ranks; exercise around the
        // switch-over capacity with every probe key.
        for count in [1usize, 2, 5, 31, 32, 33, 64] {
            let mut n = NodeInner::empty(64, true);
            for i in 0..count {
                n.keys.push(Key((i as u64) * 2 + 2));
                n.values.push(Value(0));
            }
            for probe in 2..=(count as u64 * 2 + 3) {
                let mut lin = 0;
                while lin + 1 < n.keys.len() && n.keys[lin + 1] <= Key(probe) {
                    lin += 1;
                }
                let bin = n.keys.partition_point(|&key| key <= Key(probe)) - 1;
                assert_eq!(lin, bin);
                assert_eq!(n.find_rank(Key(probe)), (lin, n.keys[lin] == Key(probe)));
            }
        }
    }

    #[test]
    fn insert_shifts_tail() {
        let mut n = leaf_with(&[10, 20]);
        n.insert_leaf(1, Key(30), Value(300));
        assert_eq!(n.keys, vec![Key(10), Key(20), Key(30)]);

        let mut n = leaf_with(&[10, 20, 40]);
        n.insert_leaf(1, Key(30), Value(300));
        assert_eq!(n.keys, vec![Key(10), Key(20), Key(30), Key(40)]);
        assert_eq!(n.values[2], Value(300));
        assert_eq!(n.values[3], Value(400));
    }

    #[test]
    fn split_with_preseeded_header() {
        let mut n = leaf_with(&[10, 20, 40, 50]);
        let mut dst = NodeInner::empty(8, true);
        dst.seed_header(Key(30), Some(Value(300)), None);
        n.split_at(2, &mut dst);
        assert_eq!(n.keys, vec![Key(10), Key(20)]);
        assert_eq!(dst.keys, vec![Key(30), Key(40), Key(50)]);
        assert_eq!(dst.values, vec![Value(300), Value(400), Value(500)]);
    }

    #[test]
    fn split_overflow_half() {
        let mut n = leaf_with(&[10, 20, 40, 50]);
        let mut dst = NodeInner::empty(8, true);
        n.split_at(2, &mut dst);
        assert_eq!(n.keys, vec![Key(10), Key(20)]);
        assert_eq!(dst.keys, vec![Key(40), Key(50)]);
    }

    #[test]
    fn split_at_count_moves_nothing() {
        let mut n = leaf_with(&[10, 20]);
        let mut dst = NodeInner::empty(8, true);
        n.split_at(2, &mut dst);
        assert_eq!(n.keys.len(), 2);
        assert!(dst.keys.is_empty());
    }

    #[test]
    fn split_then_concat_reproduces_sequence() {
        for split in 1..=4 {
            let mut n = leaf_with(&[10, 20, 40, 50]);
            let mut dst = NodeInner::empty(8, true);
            n.split_at(split, &mut dst);
            let mut combined = n.keys.clone();
            combined.extend(&dst.keys);
            assert_eq!(combined, vec![Key(10), Key(20), Key(40), Key(50)]);
        }
    }

    #[test]
    fn write_value_overwrites() {
        let mut n = leaf_with(&[10, 20]);
        n.write_value(1, Value(999));
        assert_eq!(n.value(1), Value(999));
        assert_eq!(n.value(0), Value(100));
    }

    #[test]
    fn next_header_end_of_level() {
        let n = leaf_with(&[10, 20]);
        assert_eq!(n.next_header(), None);
    }

    #[test]
    #[should_panic(expected = "full node")]
    fn insert_into_full_node_is_programming_error() {
        let mut n = NodeInner::empty(2, true);
        n.keys.push(Key(1));
        n.values.push(Value(1));
        n.keys.push(Key(5));
        n.values.push(Value(5));
        n.insert_leaf(1, Key(7), Value(7));
    }
}
