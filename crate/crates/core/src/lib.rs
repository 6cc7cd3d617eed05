//! Ranking engine for pairwise-comparison annotation.
//!
//! Items are first pre-ordered from per-level zero-shot similarity scores
//! into coarse buckets with initial Elo ratings ([`preorder`]). A classical
//! top-down MergeSort then runs over that near-sorted array; each of its
//! comparisons is scored for information gain ([`rating`]) and either sent
//! to a human or resolved from the live ratings ([`sorter`]). [`session`]
//! wraps the whole pipeline as an event-sourced state machine and
//! [`simulator`] drives it with synthetic annotators for benchmarking.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod metrics;
pub mod preorder;
pub mod rating;
pub mod rng;
pub mod session;
pub mod simulator;
pub mod sorter;

pub use error::{Error, Result};
pub use preorder::{EloInitConfig, ItemLevels, ItemRecord, PreorderResult, SimilarityTable};
pub use rating::{EloState, ExponentMode, Outcome, PairAssessment, PriorityWeights, ThresholdConfig, ThresholdState};
pub use rng::SplitMix64;
pub use session::{Event, EventKind, RankedItem, RequestRecord, Session, SessionConfig, SessionStats, SessionStatus};
pub use simulator::{BenchConfig, BenchReport, OracleConfig, SeedInputs, SyntheticPreorderConfig};
pub use sorter::{ComparisonRequest, MergeSchedule, Route, SorterState};
