//! A concurrent ordered map built as a skiplist over fixed-capacity
//! multi-key nodes.
//!
//! Each node holds up to B sorted keys; an element's height is drawn from a
//! geometric distribution with probability 1/(c*B) per promotion, so levels
//! thin out fast enough that structural writes near the top are rare.
//! Inserts restructure in a single top-down pass under hand-over-hand
//! reader-writer locks: read locks above the insertion height, write locks
//! at and below it, never more than a constant number of locks at once.

pub mod error;
pub mod index;
pub mod lock;
pub mod node;
pub mod oracle;
pub mod promote;
pub mod stats;

pub use error::Error;
pub use index::{AuditReport, BSkipList};
pub use lock::{LockMode, LockTrace, TraceReport};
pub use node::{Key, Value};
pub use promote::{sample_height, PromotionParams};
pub use stats::StatsSnapshot;
