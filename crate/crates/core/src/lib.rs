//! Context-aware proactive cache placement.
//!
//! A caching entity refreshes `m` of `|F|` files every slot, having seen the
//! contexts of the users currently connected, and learns context-specific
//! popularity from the requests its cached files receive. The crate provides
//! the learner ([`policy::Mcac`]), reference policies, a slot-level simulator
//! over synthetic or trace-driven demand, MovieLens ingestion and a seeded
//! experiment runner.

pub mod acceptance;
pub mod context;
pub mod decision;
pub mod env;
pub mod error;
pub mod experiment;
pub mod movielens;
pub mod policy;
pub mod seed;
pub mod stats;
pub mod types;
pub mod weights;

pub use context::{quantize, ContextVector, Partition, PartitionCell};
pub use decision::{CacheDecision, Phase};
pub use error::{Error, Result};
pub use policy::{CachePolicy, Feedback, FeedbackRow, Mcac, McacConfig, PolicyTag};
pub use stats::{DemandStats, StatsStore};
pub use types::{FileId, Request, ServiceType, SlotContext, UserContext};
pub use weights::WeightConfig;
