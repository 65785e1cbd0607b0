//! Reference policies: clairvoyant oracle, context-free learners, a myopic
//! replacement rule and uniform random placement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_files, sample_from, CachePolicy, Feedback};
use crate::decision::{top_k, CacheDecision, Phase};
use crate::error::{Error, Result};
use crate::stats::DemandStats;
use crate::types::{FileId, Request, SlotContext};
use crate::weights::WeightConfig;

pub const DEFAULT_EPSILON: f64 = 0.09;

fn check_sizes(library_size: usize, m: usize) -> Result<()> {
    if m == 0 || m > library_size {
        return Err(Error::Config(format!(
            "cache size {m} must be in 1..={library_size}"
        )));
    }
    Ok(())
}

fn all_files(n: usize) -> impl Iterator<Item = FileId> {
    (0..n as u32).map(FileId)
}

/// Caches the `m` files with the highest weighted realized requests of the
/// coming slot.
pub struct Oracle {
    library_size: usize,
    m: usize,
    weights: WeightConfig,
}

impl Oracle {
    pub fn new(library_size: usize, m: usize, weights: WeightConfig) -> Result<Self> {
        check_sizes(library_size, m)?;
        Ok(Self {
            library_size,
            m,
            weights,
        })
    }

    /// Top-m by `w_f * sum_i v_{s_i} * d_{f,i}`.
    pub fn select(&self, slot: &SlotContext, requests: &[Vec<Request>]) -> Result<CacheDecision> {
        if requests.len() != slot.len() {
            return Err(Error::InvalidInput(format!(
                "{} users but {} request lists",
                slot.len(),
                requests.len()
            )));
        }
        let mut score = vec![0.0; self.library_size];
        for (user, reqs) in slot.users.iter().zip(requests) {
            let v = self.weights.service(user.service);
            for r in reqs {
                score[r.file.index()] += v * r.count;
            }
        }
        for (f, s) in score.iter_mut().enumerate() {
            *s *= self.weights.file(FileId(f as u32));
        }
        CacheDecision::exploit(top_k(all_files(self.library_size), &score, self.m))
    }
}

impl CachePolicy for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn cache_size(&self) -> usize {
        self.m
    }

    fn needs_lookahead(&self) -> bool {
        true
    }

    fn place(
        &mut self,
        _t: u64,
        slot: &SlotContext,
        lookahead: Option<&[Vec<Request>]>,
    ) -> Result<CacheDecision> {
        let requests = lookahead
            .ok_or_else(|| Error::Contract("oracle placed without realized requests".into()))?;
        self.select(slot, requests)
    }

    fn learn(&mut self, _t: u64, _d: &CacheDecision, _f: &Feedback) -> Result<()> {
        Ok(())
    }
}

/// Per-file statistics pooled over all users and contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFreeStats {
    files: Vec<DemandStats>,
    total: u64,
}

impl ContextFreeStats {
    pub fn new(library_size: usize) -> Self {
        Self {
            files: vec![DemandStats::default(); library_size],
            total: 0,
        }
    }

    pub fn get(&self, f: FileId) -> DemandStats {
        self.files[f.index()]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn observe(&mut self, f: FileId, value: f64) {
        self.files[f.index()].observe(value);
        self.total += 1;
    }

    /// Folds every unmasked (user, cached file) observation of a slot.
    pub fn absorb(&mut self, decision: &CacheDecision, feedback: &Feedback) {
        for (j, f) in decision.files().iter().enumerate() {
            let (mut n, mut sum) = (0u64, 0.0);
            for row in &feedback.rows {
                if row.mask[j] {
                    n += 1;
                    sum += row.values[j];
                }
            }
            self.files[f.index()].observe_batch(n, sum);
            self.total += n;
        }
    }
}

/// UCB1 extended to cache `m` arms per slot, ignoring context.
///
/// An initial sweep caches the library in id order, `m` files per slot.
/// Afterwards files are ranked by `w_f * (mean_f + R_max * sqrt(2 ln n / n_f))`
/// where `n` counts all observations; unobserved files rank first.
pub struct MUcb {
    m: usize,
    r_max: f64,
    weights: WeightConfig,
    stats: ContextFreeStats,
    sweep_next: usize,
}

impl MUcb {
    pub fn new(library_size: usize, m: usize, r_max: f64, weights: WeightConfig) -> Result<Self> {
        check_sizes(library_size, m)?;
        Ok(Self {
            m,
            r_max,
            weights,
            stats: ContextFreeStats::new(library_size),
            sweep_next: 0,
        })
    }

    pub fn stats(&self) -> &ContextFreeStats {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut ContextFreeStats {
        &mut self.stats
    }

    pub fn index(&self, f: FileId) -> f64 {
        let st = self.stats.get(f);
        if st.count == 0 {
            return f64::INFINITY;
        }
        let n = self.stats.total() as f64;
        st.mean + self.r_max * (2.0 * n.ln() / st.count as f64).sqrt()
    }

    fn library_size(&self) -> usize {
        self.stats.files.len()
    }
}

impl CachePolicy for MUcb {
    fn name(&self) -> &str {
        "m_ucb"
    }

    fn cache_size(&self) -> usize {
        self.m
    }

    fn place(
        &mut self,
        _t: u64,
        _slot: &SlotContext,
        _lookahead: Option<&[Vec<Request>]>,
    ) -> Result<CacheDecision> {
        let n = self.library_size();
        if self.sweep_next < n {
            let end = (self.sweep_next + self.m).min(n);
            let mut files: Vec<FileId> = (self.sweep_next..end).map(|i| FileId(i as u32)).collect();
            // The last sweep slot tops up from the start of the library.
            let mut fill = 0u32;
            while files.len() < self.m {
                if !files.contains(&FileId(fill)) {
                    files.push(FileId(fill));
                }
                fill += 1;
            }
            self.sweep_next = end;
            let m = files.len();
            return CacheDecision::new(files, Phase::Exploration, m);
        }
        let score: Vec<f64> = all_files(n)
            .map(|f| self.weights.file(f) * self.index(f))
            .collect();
        CacheDecision::exploit(top_k(all_files(n), &score, self.m))
    }

    fn learn(&mut self, _t: u64, decision: &CacheDecision, feedback: &Feedback) -> Result<()> {
        self.stats.absorb(decision, feedback);
        Ok(())
    }
}

/// Caches a uniform random `m`-subset with probability `epsilon`, otherwise
/// the `m` files of highest context-free estimated demand.
pub struct MGreedy {
    m: usize,
    epsilon: f64,
    weights: WeightConfig,
    stats: ContextFreeStats,
    rng: ChaCha8Rng,
}

impl MGreedy {
    pub fn new(
        library_size: usize,
        m: usize,
        epsilon: f64,
        weights: WeightConfig,
        seed: u64,
    ) -> Result<Self> {
        check_sizes(library_size, m)?;
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(Self {
            m,
            epsilon,
            weights,
            stats: ContextFreeStats::new(library_size),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn stats_mut(&mut self) -> &mut ContextFreeStats {
        &mut self.stats
    }
}

impl CachePolicy for MGreedy {
    fn name(&self) -> &str {
        "m_epsilon_greedy"
    }

    fn cache_size(&self) -> usize {
        self.m
    }

    fn place(
        &mut self,
        _t: u64,
        _slot: &SlotContext,
        _lookahead: Option<&[Vec<Request>]>,
    ) -> Result<CacheDecision> {
        let n = self.stats.files.len();
        if self.rng.gen::<f64>() < self.epsilon {
            let files = sample_files(&mut self.rng, n, self.m);
            return CacheDecision::new(files, Phase::Exploration, self.m);
        }
        let score: Vec<f64> = all_files(n)
            .map(|f| self.weights.file(f) * self.stats.get(f).mean)
            .collect();
        CacheDecision::exploit(top_k(all_files(n), &score, self.m))
    }

    fn learn(&mut self, _t: u64, decision: &CacheDecision, feedback: &Feedback) -> Result<()> {
        self.stats.absorb(decision, feedback);
        Ok(())
    }

    fn estimated_demand(&self, slot: &SlotContext, f: FileId) -> Option<f64> {
        Some(self.stats.get(f).mean * slot.len() as f64)
    }
}

/// Keeps the files requested in the previous slot and replaces the rest
/// with files drawn uniformly from the remainder of the library.
pub struct MMyopic {
    library_size: usize,
    m: usize,
    rng: ChaCha8Rng,
    kept: Option<Vec<FileId>>,
}

impl MMyopic {
    pub fn new(library_size: usize, m: usize, seed: u64) -> Result<Self> {
        check_sizes(library_size, m)?;
        Ok(Self {
            library_size,
            m,
            rng: ChaCha8Rng::seed_from_u64(seed),
            kept: None,
        })
    }
}

impl CachePolicy for MMyopic {
    fn name(&self) -> &str {
        "m_myopic"
    }

    fn cache_size(&self) -> usize {
        self.m
    }

    fn place(
        &mut self,
        _t: u64,
        _slot: &SlotContext,
        _lookahead: Option<&[Vec<Request>]>,
    ) -> Result<CacheDecision> {
        let kept = match self.kept.take() {
            None => {
                let files = sample_files(&mut self.rng, self.library_size, self.m);
                return CacheDecision::new(files, Phase::Exploration, self.m);
            }
            Some(k) => k,
        };
        let fresh = self.m - kept.len();
        if fresh == 0 {
            return CacheDecision::exploit(kept);
        }
        let mut is_kept = vec![false; self.library_size];
        for f in &kept {
            is_kept[f.index()] = true;
        }
        let pool: Vec<FileId> = all_files(self.library_size)
            .filter(|f| !is_kept[f.index()])
            .collect();
        let mut files = kept;
        files.extend(sample_from(&mut self.rng, &pool, fresh));
        CacheDecision::new(files, Phase::Exploration, fresh)
    }

    fn learn(&mut self, _t: u64, decision: &CacheDecision, feedback: &Feedback) -> Result<()> {
        let kept = decision
            .files()
            .iter()
            .enumerate()
            .filter(|(j, _)| feedback.rows.iter().any(|r| r.hits[*j] > 0.0))
            .map(|(_, f)| *f)
            .collect();
        self.kept = Some(kept);
        Ok(())
    }
}

/// Uniform random `m`-subset every slot.
pub struct RandomPolicy {
    library_size: usize,
    m: usize,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(library_size: usize, m: usize, seed: u64) -> Result<Self> {
        check_sizes(library_size, m)?;
        Ok(Self {
            library_size,
            m,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl CachePolicy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn cache_size(&self) -> usize {
        self.m
    }

    fn place(
        &mut self,
        _t: u64,
        _slot: &SlotContext,
        _lookahead: Option<&[Vec<Request>]>,
    ) -> Result<CacheDecision> {
        let files = sample_files(&mut self.rng, self.library_size, self.m);
        CacheDecision::new(files, Phase::Exploration, self.m)
    }

    fn learn(&mut self, _t: u64, _d: &CacheDecision, _f: &Feedback) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ContextVector;
    use crate::policy::FeedbackRow;
    use crate::types::{ServiceType, UserContext};

    fn user(x: f64, s: u16) -> UserContext {
        UserContext {
            context: ContextVector::new(vec![x]).unwrap(),
            service: ServiceType(s),
        }
    }

    fn sorted(d: &CacheDecision) -> Vec<u32> {
        let mut v: Vec<u32> = d.files().iter().map(|f| f.0).collect();
        v.sort();
        v
    }

    fn feedback_with_hits(hits: &[f64]) -> Feedback {
        Feedback {
            rows: vec![FeedbackRow {
                user: user(0.5, 0),
                hits: hits.to_vec(),
                values: hits.to_vec(),
                mask: vec![true; hits.len()],
                placed: true,
            }],
            overheard: vec![],
        }
    }

    #[test]
    fn oracle_examples() {
        let slot = SlotContext::new(vec![user(0.5, 0)]);
        let reqs = |d: &[f64]| {
            vec![d
                .iter()
                .enumerate()
                .map(|(f, &c)| Request::plain(FileId(f as u32), c))
                .collect::<Vec<_>>()]
        };
        let o = Oracle::new(3, 2, WeightConfig::uniform()).unwrap();
        assert_eq!(
            o.select(&slot, &reqs(&[5.0, 3.0, 0.0])).unwrap().files(),
            &[FileId(0), FileId(1)]
        );
        let o = Oracle::new(3, 1, WeightConfig::uniform()).unwrap();
        assert_eq!(
            o.select(&slot, &reqs(&[1.0, 1.0, 1.0])).unwrap().files(),
            &[FileId(0)]
        );

        let w = WeightConfig::uniform().with_file(FileId(1), 2.0).unwrap();
        let demands = [4.0, 3.0, 5.0];
        // Brute force over singletons.
        let best = (0..3u32)
            .max_by(|&a, &b| {
                (w.file(FileId(a)) * demands[a as usize])
                    .total_cmp(&(w.file(FileId(b)) * demands[b as usize]))
            })
            .unwrap();
        let o = Oracle::new(3, 1, w).unwrap();
        assert_eq!(
            o.select(&slot, &reqs(&demands)).unwrap().files(),
            &[FileId(best)]
        );
        assert_eq!(best, 1);
    }

    #[test]
    fn oracle_requires_lookahead() {
        let mut o = Oracle::new(3, 1, WeightConfig::uniform()).unwrap();
        assert!(o.place(1, &SlotContext::default(), None).is_err());
    }

    #[test]
    fn ucb_sweep_then_index() {
        let mut p = MUcb::new(4, 2, 1.0, WeightConfig::uniform()).unwrap();
        let slot = SlotContext::new(vec![user(0.1, 0)]);
        let d1 = p.place(1, &slot, None).unwrap();
        assert_eq!(d1.files(), &[FileId(0), FileId(1)]);
        let d2 = p.place(2, &slot, None).unwrap();
        assert_eq!(d2.files(), &[FileId(2), FileId(3)]);

        let mut p = MUcb::new(3, 2, 1.0, WeightConfig::uniform()).unwrap();
        p.place(1, &slot, None).unwrap();
        let d = p.place(2, &slot, None).unwrap();
        assert_eq!(d.files(), &[FileId(2), FileId(0)]);
    }

    #[test]
    fn ucb_equal_counts_rank_by_mean() {
        let mut p = MUcb::new(3, 1, 1.0, WeightConfig::uniform()).unwrap();
        for _ in 0..3 {
            p.place(0, &SlotContext::default(), None).unwrap();
        }
        for (f, v) in [(0, 3.0), (1, 1.0), (2, 1.0)] {
            for _ in 0..4 {
                p.stats_mut().observe(FileId(f), v / 3.0);
            }
        }
        assert_eq!(
            p.place(4, &SlotContext::default(), None).unwrap().files(),
            &[FileId(0)]
        );
    }

    #[test]
    fn ucb_bonus_dominates_for_rare_arm() {
        let mut p = MUcb::new(2, 1, 1.0, WeightConfig::uniform()).unwrap();
        p.place(1, &SlotContext::default(), None).unwrap();
        p.place(2, &SlotContext::default(), None).unwrap();
        for _ in 0..100 {
            p.stats_mut().observe(FileId(0), 1.0);
        }
        p.stats_mut().observe(FileId(1), 0.9);
        p.stats_mut().observe(FileId(1), 0.9);
        // Frozen from a 30-digit evaluation of both indices.
        assert!((p.index(FileId(1)) - 3.050_574_995_968_350_6).abs() < 1e-9);
        assert!((p.index(FileId(0)) - 1.304_137_232_619_890_6).abs() < 1e-9);
        assert_eq!(
            p.place(3, &SlotContext::default(), None).unwrap().files(),
            &[FileId(1)]
        );
    }

    #[test]
    fn greedy_epsilon_extremes() {
        let mut p = MGreedy::new(4, 2, 0.0, WeightConfig::uniform(), 3).unwrap();
        for (f, v) in [(0, 5.0), (1, 2.0), (2, 2.0), (3, 1.0)] {
            p.stats_mut().observe(FileId(f), v);
        }
        for t in 0..20 {
            assert_eq!(
                p.place(t, &SlotContext::default(), None).unwrap().files(),
                &[FileId(0), FileId(1)]
            );
        }
        let run = |seed| {
            let mut p = MGreedy::new(10, 3, 1.0, WeightConfig::uniform(), seed).unwrap();
            (0..5)
                .map(|t| p.place(t, &SlotContext::default(), None).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert!(run(9).iter().all(|d| d.phase() == Phase::Exploration));
    }

    #[test]
    fn myopic_keeps_requested_files() {
        let slot = SlotContext::new(vec![user(0.5, 0)]);
        let mut p = MMyopic::new(10, 3, 4).unwrap();
        let d1 = p.place(1, &slot, None).unwrap();
        p.learn(1, &d1, &feedback_with_hits(&[1.0, 2.0, 1.0]))
            .unwrap();
        let d2 = p.place(2, &slot, None).unwrap();
        assert_eq!(d2, CacheDecision::exploit(d1.files().to_vec()).unwrap());

        p.learn(2, &d2, &feedback_with_hits(&[1.0, 0.0, 3.0]))
            .unwrap();
        let d3 = p.place(3, &slot, None).unwrap();
        let kept = [d2.files()[0], d2.files()[2]];
        assert_eq!(&d3.files()[..2], &kept);
        assert!(!kept.contains(&d3.files()[2]));
        assert_eq!(d3.explored_count(), 1);

        p.learn(3, &d3, &feedback_with_hits(&[0.0, 0.0, 0.0]))
            .unwrap();
        let d4 = p.place(4, &slot, None).unwrap();
        assert_eq!(d4.len(), 3);
    }

    #[test]
    fn random_covers_library_and_is_seeded() {
        let mut p = RandomPolicy::new(5, 5, 1).unwrap();
        assert_eq!(
            sorted(&p.place(1, &SlotContext::default(), None).unwrap()),
            vec![0, 1, 2, 3, 4]
        );
        let seq = |seed| {
            let mut p = RandomPolicy::new(20, 4, seed).unwrap();
            (0..10)
                .map(|t| p.place(t, &SlotContext::default(), None).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(5), seq(5));
    }

    #[test]
    fn random_inclusion_frequency() {
        let mut p = RandomPolicy::new(10, 2, 11).unwrap();
        let mut hits = [0u32; 10];
        let slots = 10_000;
        for t in 0..slots {
            for f in p.place(t, &SlotContext::default(), None).unwrap().files() {
                hits[f.index()] += 1;
            }
        }
        for h in hits {
            let freq = h as f64 / slots as f64;
            assert!((freq - 0.2).abs() <= 0.02, "inclusion frequency {freq}");
        }
    }

    #[test]
    fn context_free_policies_ignore_context_permutation() {
        let a = SlotContext::new(vec![user(0.1, 0), user(0.9, 1)]);
        let b = SlotContext::new(vec![user(0.9, 1), user(0.1, 0)]);
        let mut g1 = MGreedy::new(10, 3, 0.3, WeightConfig::uniform(), 2).unwrap();
        let mut g2 = MGreedy::new(10, 3, 0.3, WeightConfig::uniform(), 2).unwrap();
        let mut u1 = MUcb::new(10, 3, 1.0, WeightConfig::uniform()).unwrap();
        let mut u2 = MUcb::new(10, 3, 1.0, WeightConfig::uniform()).unwrap();
        for t in 1..30 {
            let (d1, d2) = (
                g1.place(t, &a, None).unwrap(),
                g2.place(t, &b, None).unwrap(),
            );
            assert_eq!(d1, d2);
            let fb = feedback_with_hits(&[t as f64 % 2.0, 0.0, 1.0]);
            g1.learn(t, &d1, &fb).unwrap();
            g2.learn(t, &d2, &fb).unwrap();
            let (e1, e2) = (
                u1.place(t, &a, None).unwrap(),
                u2.place(t, &b, None).unwrap(),
            );
            assert_eq!(e1, e2);
            u1.learn(t, &e1, &fb).unwrap();
            u2.learn(t, &e2, &fb).unwrap();
        }
    }
}
