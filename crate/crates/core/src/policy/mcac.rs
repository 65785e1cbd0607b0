//! The context-aware proactive caching learner (m-CAC).
//!
//! Each slot the learner maps every connected user to a cell of a uniform
//! partition of the context space. Files whose observation counter in any of
//! those cells is at most `K(t)` are under-explored. If at least `m` files are
//! under-explored, `m` of them are cached uniformly at random; if fewer, all
//! of them are cached and the remaining room is filled by the highest
//! estimated weighted demand. With no under-explored file the cache holds the
//! `m` files of highest estimated weighted demand
//! `w_f * sum_i v_{s_i} * d̂(f, p_i)`.
//!
//! After the slot, every (user, cached file) observation that is not masked
//! updates the running mean of the user's cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_from, CachePolicy, Feedback};
use crate::context::{Partition, PartitionCell};
use crate::decision::{top_k, CacheDecision, Phase};
use crate::error::{Error, Result};
use crate::stats::{CellSlot, StatsStore};
use crate::types::{FileId, Request, SlotContext, UserContext};
use crate::weights::WeightConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McacConfig {
    pub library_size: usize,
    pub cache_size: usize,
    pub dim: usize,
    pub horizon: u64,
    /// Hölder exponent assumed for the demand functions.
    pub alpha: f64,
    /// Scale `c` of the control function.
    pub control_scale: f64,
    pub h_override: Option<u32>,
    /// Largest demand one user can produce in a slot.
    pub r_max: f64,
    pub seed: u64,
}

impl McacConfig {
    /// Control scale `1 / (|F| D)`, which trades fewer exploration slots
    /// against the theoretical schedule.
    pub fn reduced_control_scale(library_size: usize, dim: usize) -> f64 {
        1.0 / (library_size as f64 * dim as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.library_size == 0 || self.cache_size == 0 || self.dim == 0 || self.horizon == 0 {
            return Err(Error::Config(
                "library size, cache size, dimension and horizon must be positive".into(),
            ));
        }
        if self.cache_size > self.library_size {
            return Err(Error::Config(format!(
                "cache size {} exceeds library size {}",
                self.cache_size, self.library_size
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.control_scale > 0.0 && self.control_scale.is_finite()) {
            return Err(Error::Config(format!(
                "control scale must be positive, got {}",
                self.control_scale
            )));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::Config(format!(
                "r_max must be positive, got {}",
                self.r_max
            )));
        }
        if self.h_override == Some(0) {
            return Err(Error::Config("h override must be >= 1".into()));
        }
        Ok(())
    }

    /// `h_T = ceil(T^(1/(3α+D)))` unless overridden.
    pub fn partition_resolution(&self) -> u32 {
        self.h_override.unwrap_or_else(|| {
            let x = (self.horizon as f64).powf(1.0 / (3.0 * self.alpha + self.dim as f64));
            // Exact roots such as 100000^(1/5) come out a few ulps high.
            let r = x.round();
            let h = if (x - r).abs() <= 1e-9 * r {
                r
            } else {
                x.ceil()
            };
            (h as u32).max(1)
        })
    }
}

/// `K(t) = c * t^(2α/(3α+D)) * ln t`; zero at `t = 1`.
pub fn control_function(t: u64, cfg: &McacConfig) -> f64 {
    let t = t.max(1) as f64;
    let exponent = 2.0 * cfg.alpha / (3.0 * cfg.alpha + cfg.dim as f64);
    cfg.control_scale * t.powf(exponent) * t.ln()
}

/// Users of one slot grouped by cell.
struct CellGroups {
    /// (cell, store slot if visited, summed service weight of its users)
    groups: Vec<(PartitionCell, Option<CellSlot>, f64)>,
    /// group index per user
    of_user: Vec<usize>,
}

pub struct Mcac {
    cfg: McacConfig,
    partition: Partition,
    weights: WeightConfig,
    store: StatsStore,
    rng: ChaCha8Rng,
    name: String,
}

impl Mcac {
    pub fn new(cfg: McacConfig, weights: WeightConfig) -> Result<Self> {
        cfg.validate()?;
        let partition = Partition::new(cfg.dim, cfg.partition_resolution())?;
        let store = StatsStore::new(cfg.library_size, cfg.r_max);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            cfg,
            partition,
            weights,
            store,
            rng,
            name: "mcac".into(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn config(&self) -> &McacConfig {
        &self.cfg
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn store(&self) -> &StatsStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut StatsStore {
        &mut self.store
    }

    fn group(&self, users: &[UserContext]) -> Result<CellGroups> {
        let mut groups: Vec<(PartitionCell, Option<CellSlot>, f64)> = Vec::new();
        let mut of_user = Vec::with_capacity(users.len());
        for u in users {
            let cell = self.partition.quantize(&u.context)?;
            let v = self.weights.service(u.service);
            let g = match groups.iter().position(|(c, _, _)| *c == cell) {
                Some(g) => {
                    groups[g].2 += v;
                    g
                }
                None => {
                    let slot = self.store.slot_of(&cell);
                    groups.push((cell, slot, v));
                    groups.len() - 1
                }
            };
            of_user.push(g);
        }
        Ok(CellGroups { groups, of_user })
    }

    /// Files whose counter is at most `K(t)` in the cell of some connected
    /// user, in ascending id order.
    pub fn under_explored(&self, slot: &SlotContext, t: u64) -> Result<Vec<FileId>> {
        let groups = self.group(&slot.users)?;
        Ok(self.under_explored_in(&groups, t))
    }

    fn under_explored_in(&self, groups: &CellGroups, t: u64) -> Vec<FileId> {
        let all = || (0..self.cfg.library_size as u32).map(FileId).collect();
        if groups.groups.is_empty() {
            return Vec::new();
        }
        let k = control_function(t, &self.cfg);
        // An unvisited cell has every counter at 0 <= K(t).
        if groups.groups.iter().any(|(_, s, _)| s.is_none()) {
            return all();
        }
        let rows: Vec<_> = groups
            .groups
            .iter()
            .map(|(_, s, _)| self.store.row(s.expect("visited")))
            .collect();
        (0..self.cfg.library_size)
            .filter(|&f| rows.iter().any(|row| row[f].count as f64 <= k))
            .map(|f| FileId(f as u32))
            .collect()
    }

    fn scores(&self, groups: &CellGroups) -> Vec<f64> {
        let mut score = vec![0.0; self.cfg.library_size];
        for (_, slot, v) in &groups.groups {
            if let Some(s) = slot {
                for (acc, st) in score.iter_mut().zip(self.store.row(*s)) {
                    *acc += v * st.mean;
                }
            }
        }
        if self.weights.has_file_weights() {
            for (f, acc) in score.iter_mut().enumerate() {
                *acc *= self.weights.file(FileId(f as u32));
            }
        }
        score
    }

    /// Estimated weighted demand of every file for the users of `slot`.
    pub fn weighted_scores(&self, slot: &SlotContext) -> Result<Vec<f64>> {
        let groups = self.group(&slot.users)?;
        Ok(self.scores(&groups))
    }

    pub fn place_slot(&mut self, slot: &SlotContext, t: u64) -> Result<CacheDecision> {
        let m = self.cfg.cache_size;
        let groups = self.group(&slot.users)?;
        let under = self.under_explored_in(&groups, t);
        let u = under.len();
        if u >= m {
            let files = sample_from(&mut self.rng, &under, m);
            return CacheDecision::new(files, Phase::Exploration, m);
        }
        let score = self.scores(&groups);
        if u == 0 {
            let files = top_k((0..self.cfg.library_size as u32).map(FileId), &score, m);
            return CacheDecision::exploit(files);
        }
        let mut explored = vec![false; self.cfg.library_size];
        for f in &under {
            explored[f.index()] = true;
        }
        let rest = (0..self.cfg.library_size as u32)
            .map(FileId)
            .filter(|f| !explored[f.index()]);
        let mut files = under;
        files.extend(top_k(rest, &score, m - u));
        CacheDecision::new(files, Phase::Exploration, u)
    }

    /// Applies the slot's observations: `demands[i][j]` is user `i`'s demand
    /// for `decision.files()[j]`, learned only where `mask[i][j]` holds.
    pub fn learn_slot(
        &mut self,
        users: &[UserContext],
        decision: &CacheDecision,
        demands: &[Vec<f64>],
        mask: &[Vec<bool>],
    ) -> Result<()> {
        let m = decision.len();
        if demands.len() != users.len() || mask.len() != users.len() {
            return Err(Error::InvalidInput(format!(
                "{} users but {} demand rows and {} mask rows",
                users.len(),
                demands.len(),
                mask.len()
            )));
        }
        if let Some(i) = (0..users.len()).find(|&i| demands[i].len() != m || mask[i].len() != m) {
            return Err(Error::InvalidInput(format!(
                "row {i} does not match cache size {m}"
            )));
        }
        for f in decision.files() {
            self.store.check_file(*f)?;
        }
        for (row, mrow) in demands.iter().zip(mask) {
            for (&d, &keep) in row.iter().zip(mrow) {
                if keep {
                    self.store.check_demand(d)?;
                }
            }
        }

        let groups = self.group(users)?;
        // Per cell: observation count and sum per cached file.
        let mut counts = vec![vec![0u64; m]; groups.groups.len()];
        let mut sums = vec![vec![0.0f64; m]; groups.groups.len()];
        for (i, &g) in groups.of_user.iter().enumerate() {
            for j in 0..m {
                if mask[i][j] {
                    counts[g][j] += 1;
                    sums[g][j] += demands[i][j];
                }
            }
        }
        for (g, (cell, _, _)) in groups.groups.iter().enumerate() {
            if counts[g].iter().all(|&n| n == 0) {
                continue;
            }
            let slot = self.store.materialize(cell);
            let row = self.store.row_mut(slot);
            for (j, f) in decision.files().iter().enumerate() {
                row[f.index()].observe_batch(counts[g][j], sums[g][j]);
            }
        }
        Ok(())
    }

    /// Learns from a hit overheard at a neighbouring cache.
    pub fn absorb(&mut self, user: &UserContext, f: FileId, value: f64) -> Result<()> {
        let cell = self.partition.quantize(&user.context)?;
        self.store.update(f, &cell, value)
    }
}

impl CachePolicy for Mcac {
    fn name(&self) -> &str {
        &self.name
    }

    fn cache_size(&self) -> usize {
        self.cfg.cache_size
    }

    fn place(
        &mut self,
        t: u64,
        slot: &SlotContext,
        _lookahead: Option<&[Vec<Request>]>,
    ) -> Result<CacheDecision> {
        self.place_slot(slot, t)
    }

    fn learn(&mut self, _t: u64, decision: &CacheDecision, feedback: &Feedback) -> Result<()> {
        let users: Vec<UserContext> = feedback.rows.iter().map(|r| r.user.clone()).collect();
        let demands: Vec<Vec<f64>> = feedback.rows.iter().map(|r| r.values.clone()).collect();
        let mask: Vec<Vec<bool>> = feedback.rows.iter().map(|r| r.mask.clone()).collect();
        self.learn_slot(&users, decision, &demands, &mask)?;
        for o in &feedback.overheard {
            self.absorb(&o.user, o.file, o.value)?;
        }
        Ok(())
    }

    fn estimated_demand(&self, slot: &SlotContext, f: FileId) -> Option<f64> {
        let mut total = 0.0;
        for u in &slot.users {
            let cell = self.partition.quantize(&u.context).ok()?;
            total += self.store.get(f, &cell).mean;
        }
        Some(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ContextVector;
    use crate::types::ServiceType;

    fn cfg(library: usize, m: usize) -> McacConfig {
        McacConfig {
            library_size: library,
            cache_size: m,
            dim: 1,
            horizon: 1000,
            alpha: 1.0,
            control_scale: 1.0,
            h_override: Some(2),
            r_max: 10.0,
            seed: 7,
        }
    }

    fn user(x: f64) -> UserContext {
        UserContext {
            context: ContextVector::new(vec![x]).unwrap(),
            service: ServiceType(0),
        }
    }

    fn cell(x: f64, h: u32) -> PartitionCell {
        crate::context::quantize(&ContextVector::new(vec![x]).unwrap(), h)
    }

    #[test]
    fn control_function_examples() {
        let mut c = cfg(3, 1);
        assert_eq!(control_function(1, &c), 0.0);
        c.dim = 2;
        // Frozen from a 30-digit evaluation of 100^0.4 * ln 100.
        assert!((control_function(100, &c) - 29.056_659_514_304_04).abs() < 1e-9);
        c.library_size = 3952;
        c.control_scale = McacConfig::reduced_control_scale(3952, 2);
        assert!((control_function(8760, &c) - 0.043_365_319_844_352_78).abs() < 1e-12);
    }

    #[test]
    fn partition_resolution_follows_horizon() {
        let mut c = cfg(3, 1);
        c.h_override = None;
        c.dim = 2;
        c.horizon = 8760;
        assert_eq!(c.partition_resolution(), 7);
        c.horizon = 100_000;
        assert_eq!(c.partition_resolution(), 10);
    }

    #[test]
    fn cache_larger_than_library_is_config_error() {
        assert!(matches!(
            Mcac::new(cfg(2, 3), WeightConfig::uniform()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn first_slot_explores_whole_library() {
        let p = Mcac::new(cfg(5, 2), WeightConfig::uniform()).unwrap();
        let slot = SlotContext::new(vec![user(0.3)]);
        assert_eq!(p.under_explored(&slot, 1).unwrap().len(), 5);
    }

    #[test]
    fn under_explored_union_over_cells() {
        // K(t) = 1 exactly: c = 1 / (t^0.5 ln t) with alpha = 1, D = 1.
        let t = 9u64;
        let mut c = cfg(3, 1);
        c.control_scale = 1.0 / ((t as f64).powf(0.5) * (t as f64).ln());
        assert!((control_function(t, &c) - 1.0).abs() < 1e-12);
        let mut p = Mcac::new(c, WeightConfig::uniform()).unwrap();
        let (a, b) = (cell(0.1, 2), cell(0.9, 2));
        for _ in 0..5 {
            p.store.update(FileId(0), &a, 0.0).unwrap();
            p.store.update(FileId(1), &a, 0.0).unwrap();
            p.store.update(FileId(1), &b, 0.0).unwrap();
            p.store.update(FileId(2), &a, 0.0).unwrap();
            p.store.update(FileId(2), &b, 0.0).unwrap();
        }
        let slot = SlotContext::new(vec![user(0.1), user(0.9)]);
        // Brute force over the definition.
        let k = control_function(t, p.config());
        let mut brute = Vec::new();
        for f in 0..3 {
            if [&a, &b]
                .iter()
                .any(|p_| p.store.get(FileId(f), p_).count as f64 <= k)
            {
                brute.push(FileId(f));
            }
        }
        assert_eq!(brute, vec![FileId(0)]);
        assert_eq!(p.under_explored(&slot, t).unwrap(), brute);

        p.store.update(FileId(0), &b, 0.0).unwrap();
        p.store.update(FileId(0), &b, 0.0).unwrap();
        assert!(p.under_explored(&slot, t).unwrap().is_empty());
    }

    #[test]
    fn exploitation_picks_top_scores_with_id_ties() {
        let mut c = cfg(3, 2);
        c.control_scale = 1e-9;
        let mut p = Mcac::new(c, WeightConfig::uniform()).unwrap();
        let a = cell(0.1, 2);
        for (f, v) in [(0, 16.0 / 2.0), (1, 7.0 / 2.0), (2, 7.0 / 2.0)] {
            for _ in 0..3 {
                p.store.update(FileId(f), &a, v).unwrap();
            }
        }
        let slot = SlotContext::new(vec![user(0.1), user(0.2)]);
        let d = p.place_slot(&slot, 50).unwrap();
        assert_eq!(d.phase(), Phase::Exploitation);
        assert_eq!(d.files(), &[FileId(0), FileId(1)]);
    }

    #[test]
    fn mixed_slot_fills_with_ranked_files() {
        let mut c = cfg(4, 3);
        c.control_scale = 1e-9;
        let mut p = Mcac::new(c, WeightConfig::uniform()).unwrap();
        let a = cell(0.1, 2);
        p.store.update(FileId(0), &a, 1.0).unwrap();
        p.store.update(FileId(2), &a, 3.0).unwrap();
        p.store.update(FileId(3), &a, 2.0).unwrap();
        // File 1 has count 0 <= K and is the only under-explored file.
        let slot = SlotContext::new(vec![user(0.1)]);
        let d = p.place_slot(&slot, 10).unwrap();
        assert_eq!(d.phase(), Phase::Exploration);
        assert_eq!(d.explored_count(), 1);
        assert_eq!(d.files(), &[FileId(1), FileId(2), FileId(3)]);
    }

    #[test]
    fn exploration_draw_is_seeded() {
        let slot = SlotContext::new(vec![user(0.4)]);
        let a = Mcac::new(cfg(50, 4), WeightConfig::uniform())
            .unwrap()
            .place_slot(&slot, 1)
            .unwrap();
        let b = Mcac::new(cfg(50, 4), WeightConfig::uniform())
            .unwrap()
            .place_slot(&slot, 1)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.explored_count(), 4);
    }

    #[test]
    fn full_cache_holds_library() {
        let mut p = Mcac::new(cfg(4, 4), WeightConfig::uniform()).unwrap();
        let slot = SlotContext::new(vec![user(0.4)]);
        for t in 1..5 {
            let mut files = p.place_slot(&slot, t).unwrap().files().to_vec();
            files.sort();
            assert_eq!(files, (0..4).map(FileId).collect::<Vec<_>>());
        }
    }

    #[test]
    fn empty_slot_exploits_in_id_order() {
        let mut p = Mcac::new(cfg(5, 2), WeightConfig::uniform()).unwrap();
        let d = p.place_slot(&SlotContext::default(), 3).unwrap();
        assert_eq!(d.phase(), Phase::Exploitation);
        assert_eq!(d.files(), &[FileId(0), FileId(1)]);
        p.learn_slot(&[], &d, &[], &[]).unwrap();
        assert_eq!(p.store.visited_cells(), 0);
    }

    #[test]
    fn learn_examples() {
        let mut p = Mcac::new(cfg(3, 2), WeightConfig::uniform()).unwrap();
        let d = CacheDecision::exploit(vec![FileId(0), FileId(2)]).unwrap();
        let users = [user(0.1)];
        p.learn_slot(&users, &d, &[vec![2.0, 0.0]], &[vec![true, true]])
            .unwrap();
        let a = cell(0.1, 2);
        assert_eq!(p.store.get(FileId(0), &a).count, 1);
        assert_eq!(p.store.get(FileId(0), &a).mean, 2.0);
        assert_eq!(p.store.get(FileId(2), &a).count, 1);
        assert_eq!(p.store.get(FileId(2), &a).mean, 0.0);

        let before = p.store.clone();
        p.learn_slot(&users, &d, &[vec![5.0, 1.0]], &[vec![false, false]])
            .unwrap();
        assert_eq!(p.store, before);
    }

    #[test]
    fn mixed_mask_counts_match_replay() {
        let mut p = Mcac::new(cfg(3, 2), WeightConfig::uniform()).unwrap();
        let d = CacheDecision::exploit(vec![FileId(1), FileId(2)]).unwrap();
        let users = [user(0.1), user(0.8)];
        let mask = vec![vec![true, false], vec![true, true]];
        let demands = vec![vec![1.0, 4.0], vec![0.0, 2.0]];
        p.learn_slot(&users, &d, &demands, &mask).unwrap();
        let total: u64 = [cell(0.1, 2), cell(0.8, 2)]
            .iter()
            .flat_map(|c| {
                (0..3)
                    .map(|f| p.store.get(FileId(f), c).count)
                    .collect::<Vec<_>>()
            })
            .sum();
        let brute = mask.iter().flatten().filter(|&&b| b).count() as u64;
        assert_eq!(total, brute);
        assert_eq!(total, 3);
    }

    #[test]
    fn learn_rejects_bad_shapes_and_demands() {
        let mut p = Mcac::new(cfg(3, 2), WeightConfig::uniform()).unwrap();
        let d = CacheDecision::exploit(vec![FileId(1), FileId(2)]).unwrap();
        assert!(matches!(
            p.learn_slot(&[user(0.1)], &d, &[vec![1.0]], &[vec![true]]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            p.learn_slot(&[user(0.1)], &d, &[vec![11.0, 0.0]], &[vec![true, true]]),
            Err(Error::Contract(_))
        ));
        // A masked out-of-range value is never learned from.
        p.learn_slot(&[user(0.1)], &d, &[vec![11.0, 0.0]], &[vec![false, true]])
            .unwrap();
    }
}
