//! Property tests: arbitrary operation sequences with arbitrary (valid)
//! structural parameters always match the ordered-map semantics and leave
//! a structurally sound index.

use bskiplist::oracle::OracleMap;
use bskiplist::{BSkipList, Key, PromotionParams, Value};
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum PlannedOp {
    // Height chosen by the generator so shrinking stays deterministic.
    Insert { k: u64, v: u64, h: usize },
    Get { k: u64 },
    Range { start: u64, max_len: usize },
}

fn op_strategy(max_height: usize) -> impl Strategy<Value = PlannedOp> {
    prop_oneof![
        4 => (1..200u64, any::<u64>(), 0..max_height)
            .prop_map(|(k, v, h)| PlannedOp::Insert { k, v, h }),
        2 => (1..220u64).prop_map(|k| PlannedOp::Get { k }),
        1 => (1..220u64, 0..40usize)
            .prop_map(|(start, max_len)| PlannedOp::Range { start, max_len }),
    ]
}

fn scenario() -> impl Strategy<Value = (usize, usize, Vec<PlannedOp>)> {
    (4..32usize, 2..5usize).prop_flat_map(|(b, height)| {
        (
            Just(b),
            Just(height),
            prop::collection::vec(op_strategy(height), 1..400),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_ordered_map((b, height, ops) in scenario()) {
        let params = PromotionParams::new(b, 0.5, height).unwrap();
        let list = BSkipList::new(params);
        let mut oracle = OracleMap::new();
        for op in &ops {
            match *op {
                PlannedOp::Insert { k, v, h } => {
                    let expect = oracle.insert(k, v);
                    let got = list.insert_with_height(Key(k), Value(v), h).unwrap();
                    prop_assert_eq!(got, expect);
                }
                PlannedOp::Get { k } => {
                    prop_assert_eq!(list.get(Key(k)).map(|v| v.0), oracle.get(k));
                }
                PlannedOp::Range { start, max_len } => {
                    let got: Vec<(u64, u64)> = list
                        .range(Key(start), max_len)
                        .iter()
                        .map(|&(k, v)| (k.0, v.0))
                        .collect();
                    prop_assert_eq!(got, oracle.range(start, max_len));
                }
            }
        }
        let report = list.audit();
        prop_assert!(report.is_ok(), "{:?}", report.violations);
        let items: Vec<(u64, u64)> = list.items().iter().map(|&(k, v)| (k.0, v.0)).collect();
        prop_assert_eq!(items, oracle.items());
    }

    #[test]
    fn lock_order_holds_for_any_sequence((b, height, ops) in scenario()) {
        let params = PromotionParams::new(b, 0.5, height).unwrap();
        let list = BSkipList::with_lock_trace(params);
        for op in &ops {
            match *op {
                PlannedOp::Insert { k, v, h } => {
                    list.insert_with_height(Key(k), Value(v), h).unwrap();
                }
                PlannedOp::Get { k } => {
                    list.get(Key(k));
                }
                PlannedOp::Range { start, max_len } => {
                    list.range(Key(start), max_len);
                }
            }
        }
        let report = list.lock_trace().unwrap().verify();
        prop_assert!(report.is_ok(), "{:?}", report.violations);
        prop_assert!(report.max_locks_held <= 3);
        prop_assert!(report.max_level_span <= 2);
    }
}
