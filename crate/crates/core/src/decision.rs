//! Cache decisions and the top-m ranking shared by all score-based policies.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::FileId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Exploration,
    Exploitation,
}

/// The `m` files placed in the cache for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheDecision {
    files: Vec<FileId>,
    phase: Phase,
    explored_count: usize,
}

impl CacheDecision {
    pub fn new(files: Vec<FileId>, phase: Phase, explored_count: usize) -> Result<Self> {
        let mut sorted = files.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract(format!(
                "duplicate file in cache decision {files:?}"
            )));
        }
        if explored_count > files.len() {
            return Err(Error::Contract(format!(
                "explored count {explored_count} exceeds cache size {}",
                files.len()
            )));
        }
        if (explored_count == 0) != (phase == Phase::Exploitation) {
            return Err(Error::Contract(format!(
                "phase {phase:?} inconsistent with explored count {explored_count}"
            )));
        }
        Ok(Self {
            files,
            phase,
            explored_count,
        })
    }

    pub fn exploit(files: Vec<FileId>) -> Result<Self> {
        Self::new(files, Phase::Exploitation, 0)
    }

    pub fn files(&self) -> &[FileId] {
        &self.files
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn explored_count(&self) -> usize {
        self.explored_count
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn contains(&self, f: FileId) -> bool {
        self.files.contains(&f)
    }

    /// Position of `f` in the decision, if cached.
    pub fn position(&self, f: FileId) -> Option<usize> {
        self.files.iter().position(|&g| g == f)
    }
}

/// Descending score, ascending file id.
#[inline]
fn rank_order(a: (FileId, f64), b: (FileId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `k` highest-scoring candidates, highest first, ties broken by
/// ascending file id. `score` is indexed by file id.
pub fn top_k<I>(candidates: I, score: &[f64], k: usize) -> Vec<FileId>
where
    I: IntoIterator<Item = FileId>,
{
    let mut scored: Vec<(FileId, f64)> = candidates
        .into_iter()
        .map(|f| (f, score[f.index()]))
        .collect();
    if k == 0 {
        return Vec::new();
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        scored.truncate(k);
    }
    scored.sort_unstable_by(|a, b| rank_order(*a, *b));
    scored.into_iter().map(|(f, _)| f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_breaks_ties_by_lower_id() {
        let score = [16.0, 7.0, 7.0];
        let got = top_k((0..3).map(FileId), &score, 2);
        assert_eq!(got, vec![FileId(0), FileId(1)]);
        let got = top_k((0..3).map(FileId), &[1.0, 1.0, 1.0], 1);
        assert_eq!(got, vec![FileId(0)]);
    }

    #[test]
    fn top_k_handles_short_candidate_lists() {
        let score = [0.5, 2.0, 1.0];
        assert_eq!(top_k([FileId(2)], &score, 3), vec![FileId(2)]);
        assert!(top_k((0..3).map(FileId), &score, 0).is_empty());
    }

    #[test]
    fn decision_invariants() {
        assert!(CacheDecision::exploit(vec![FileId(1), FileId(1)]).is_err());
        assert!(CacheDecision::new(vec![FileId(1)], Phase::Exploration, 0).is_err());
        assert!(CacheDecision::new(vec![FileId(1)], Phase::Exploitation, 1).is_err());
        let d = CacheDecision::new(vec![FileId(3), FileId(1)], Phase::Exploration, 1).unwrap();
        assert_eq!(d.position(FileId(1)), Some(1));
    }
}
