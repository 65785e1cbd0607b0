//! Cache placement policies behind a common slot-by-slot interface.

mod baselines;
mod mcac;

pub use baselines::{
    ContextFreeStats, MGreedy, MMyopic, MUcb, Oracle, RandomPolicy, DEFAULT_EPSILON,
};
pub use mcac::{control_function, Mcac, McacConfig};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decision::CacheDecision;
use crate::error::Result;
use crate::types::{FileId, Request, SlotContext, UserContext};

/// What a policy learns after a slot: one row per user it may learn from.
///
/// Rows only describe cached files (`hits[j]`, `values[j]` refer to
/// `decision.files()[j]`); requests for non-cached files never reach a policy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub rows: Vec<FeedbackRow>,
    /// Hits at neighbouring caches by users in the coverage intersection.
    pub overheard: Vec<Overheard>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRow {
    pub user: UserContext,
    /// Requests per cached file.
    pub hits: Vec<f64>,
    /// Learning signal per cached file.
    pub values: Vec<f64>,
    /// False where the observation must not update any counter.
    pub mask: Vec<bool>,
    /// False for users that connected after placement.
    pub placed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overheard {
    pub user: UserContext,
    pub file: FileId,
    pub value: f64,
}

/// A cache placement strategy run one slot at a time.
pub trait CachePolicy: Send {
    fn name(&self) -> &str;

    fn cache_size(&self) -> usize;

    /// Clairvoyant policies receive the slot's realized requests at placement.
    fn needs_lookahead(&self) -> bool {
        false
    }

    fn place(
        &mut self,
        t: u64,
        slot: &SlotContext,
        lookahead: Option<&[Vec<Request>]>,
    ) -> Result<CacheDecision>;

    fn learn(&mut self, t: u64, decision: &CacheDecision, feedback: &Feedback) -> Result<()>;

    /// Expected number of requests for `f` from the users of `slot`, if the
    /// policy keeps such an estimate.
    fn estimated_demand(&self, _slot: &SlotContext, _f: FileId) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTag {
    Oracle,
    Mcac,
    Mcacao,
    MUcb,
    MEpsilonGreedy,
    MMyopic,
    Random,
    /// Ranks by true expected demand; synthetic environments only.
    ExpectedOracle,
}

impl PolicyTag {
    pub const ALL: [PolicyTag; 8] = [
        PolicyTag::Oracle,
        PolicyTag::Mcac,
        PolicyTag::Mcacao,
        PolicyTag::MUcb,
        PolicyTag::MEpsilonGreedy,
        PolicyTag::MMyopic,
        PolicyTag::Random,
        PolicyTag::ExpectedOracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyTag::Oracle => "oracle",
            PolicyTag::Mcac => "mcac",
            PolicyTag::Mcacao => "mcacao",
            PolicyTag::MUcb => "m_ucb",
            PolicyTag::MEpsilonGreedy => "m_epsilon_greedy",
            PolicyTag::MMyopic => "m_myopic",
            PolicyTag::Random => "random",
            PolicyTag::ExpectedOracle => "expected_oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl std::fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Uniform `k`-subset of `0..n` as file ids.
pub(crate) fn sample_files<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<FileId> {
    index::sample(rng, n, k)
        .into_iter()
        .map(|i| FileId(i as u32))
        .collect()
}

/// Uniform `k`-subset of `pool`.
pub(crate) fn sample_from<R: Rng + ?Sized>(rng: &mut R, pool: &[FileId], k: usize) -> Vec<FileId> {
    index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}
