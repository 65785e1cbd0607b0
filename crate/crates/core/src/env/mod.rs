//! Slot-level simulation of a caching entity.
//!
//! Each slot runs in three steps. First the environment reveals the
//! connected users and the policy places `m` files. Then demands are
//! realized. Finally the policy sees only the requests for files it cached,
//! while misses go to the metrics alone.

mod metrics;
mod multicast;
mod overlap;
mod synthetic;
mod trace;

pub use metrics::{cumulative, efficiency, MetricsSeries};
pub use multicast::{
    multicast_aggregate, CachedRequest, MulticastConfig, MulticastOutcome, Transmission,
    TransmissionKind,
};
pub use overlap::{run_overlap, OverlapMode, OverlapOutcome, OverlapTopology, Placement};
pub use synthetic::{
    Bump, ChurnModel, DemandFunction, ExpectedOracle, SyntheticEnv, SyntheticModel, SyntheticParams,
};
pub use trace::{ServiceAssignment, TraceEnv, TraceModel, TraceRequest};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::ContextVector;
use crate::decision::{top_k, CacheDecision};
use crate::error::{Error, Result};
use crate::policy::{CachePolicy, Feedback, FeedbackRow};
use crate::types::{FileId, Request, SlotContext, UserContext};
use crate::weights::WeightConfig;

/// Everything the world produces for one slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotDraw {
    /// Users connected at placement time.
    pub slot: SlotContext,
    /// Realized requests per placed user.
    pub requests: Vec<Vec<Request>>,
    /// Placed users that disconnected before requesting anything.
    pub departed: Vec<bool>,
    /// Users that connected after placement, with their requests.
    pub late: Vec<(UserContext, Vec<Request>)>,
}

impl SlotDraw {
    pub fn new(slot: SlotContext, requests: Vec<Vec<Request>>) -> Self {
        let departed = vec![false; slot.len()];
        Self {
            slot,
            requests,
            departed,
            late: Vec::new(),
        }
    }
}

/// A source of per-slot users and demands.
pub trait Environment: Send {
    fn library_size(&self) -> usize;

    fn horizon(&self) -> u64;

    /// Upper bound of a single learning value (`R_max`, scaled by the
    /// largest rating when demands are rating-weighted).
    fn value_bound(&self) -> f64;

    fn draw(&mut self, t: u64) -> Result<SlotDraw>;

    /// Expected learning value of `f` for a user at `x`, when known.
    fn expected_value(&self, _f: FileId, _x: &ContextVector) -> Option<f64> {
        None
    }

    fn knows_expected_values(&self) -> bool {
        false
    }
}

/// Settings of the simulator that are independent of the environment.
#[derive(Debug, Clone, Default)]
pub struct SimConfig {
    pub weights: WeightConfig,
    /// Probability that an observation's rating is revealed; `None` reveals all.
    pub reveal_probability: Option<f64>,
    pub multicast: Option<MulticastConfig>,
    /// Seed of the stream deciding which ratings are withheld.
    pub mask_seed: u64,
    /// Keep the per-slot contexts and decisions in [`RunOutput::log`].
    pub record_log: bool,
}

/// Inputs and outcomes of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub t: u64,
    pub draw: SlotDraw,
    pub decision: CacheDecision,
    pub requests: f64,
    pub hits: f64,
    pub weighted_hits: f64,
    pub misses: f64,
    pub regret: Option<f64>,
    pub realized_regret: Option<f64>,
    pub multicast: Option<MulticastOutcome>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub metrics: MetricsSeries,
    pub log: Vec<(SlotContext, CacheDecision)>,
}

/// Learn mask for a slot with churn: rows of early leavers are all false,
/// and every late joiner appends an all-true learn-only row.
pub fn async_filter(cache_size: usize, departed: &[bool], late_joiners: usize) -> Vec<Vec<bool>> {
    departed
        .iter()
        .map(|&gone| vec![!gone; cache_size])
        .chain((0..late_joiners).map(|_| vec![true; cache_size]))
        .collect()
}

/// Drives one policy through an environment slot by slot.
pub struct Simulator {
    cfg: SimConfig,
    mask_rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        if let Some(q) = cfg.reveal_probability {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::Config(format!(
                    "rating reveal probability {q} outside (0, 1]"
                )));
            }
        }
        let mask_rng = ChaCha8Rng::seed_from_u64(cfg.mask_seed);
        Ok(Self { cfg, mask_rng })
    }

    pub fn run(
        &mut self,
        env: &mut dyn Environment,
        policy: &mut dyn CachePolicy,
    ) -> Result<RunOutput> {
        let horizon = env.horizon();
        let n = horizon as usize;
        let known_mu = env.knows_expected_values();
        let mut out = RunOutput {
            metrics: MetricsSeries {
                requests: Vec::with_capacity(n),
                hits: Vec::with_capacity(n),
                weighted_hits: Vec::with_capacity(n),
                misses: Vec::with_capacity(n),
                regret: known_mu.then(|| Vec::with_capacity(n)),
                realized_regret: known_mu.then(|| Vec::with_capacity(n)),
                multicast_saved: self.cfg.multicast.as_ref().map(|_| Vec::with_capacity(n)),
                explored: Vec::with_capacity(n),
            },
            log: Vec::new(),
        };
        for t in 1..=horizon {
            let rec = self.run_slot(env, policy, t)?;
            let m = &mut out.metrics;
            m.requests.push(rec.requests);
            m.hits.push(rec.hits);
            m.weighted_hits.push(rec.weighted_hits);
            m.misses.push(rec.misses);
            m.explored.push(rec.decision.explored_count() as u32);
            if let (Some(r), Some(v)) = (m.regret.as_mut(), rec.regret) {
                r.push(v);
            }
            if let (Some(r), Some(v)) = (m.realized_regret.as_mut(), rec.realized_regret) {
                r.push(v);
            }
            if let (Some(s), Some(mc)) = (m.multicast_saved.as_mut(), rec.multicast.as_ref()) {
                s.push(mc.savings as f64);
            }
            if self.cfg.record_log {
                out.log.push((rec.draw.slot, rec.decision));
            }
        }
        Ok(out)
    }

    pub fn run_slot(
        &mut self,
        env: &mut dyn Environment,
        policy: &mut dyn CachePolicy,
        t: u64,
    ) -> Result<SlotRecord> {
        let draw = env.draw(t)?;
        let lookahead = policy.needs_lookahead().then_some(draw.requests.as_slice());
        let decision = policy.place(t, &draw.slot, lookahead)?;
        check_decision(&decision, policy.cache_size(), env.library_size())?;

        let feedback = self.feedback(&draw, &decision);
        let weights = &self.cfg.weights;
        let (mut hits, mut weighted, mut misses) = (0.0, 0.0, 0.0);
        let active = draw
            .slot
            .users
            .iter()
            .zip(&draw.requests)
            .zip(&draw.departed)
            .filter(|(_, &gone)| !gone)
            .map(|(x, _)| x)
            .chain(draw.late.iter().map(|(u, r)| (u, r)));
        for (user, reqs) in active {
            for r in reqs {
                if decision.contains(r.file) {
                    hits += r.count;
                    weighted += weights.service(user.service) * weights.file(r.file) * r.count;
                } else {
                    misses += r.count;
                }
            }
        }

        let multicast = match &self.cfg.multicast {
            Some(mc) => Some(self.multicast(mc, &draw, &decision, &*policy)?),
            None => None,
        };
        policy.learn(t, &decision, &feedback)?;

        let (regret, realized_regret) = slot_regret(&*env, weights, &draw, &decision)
            .map_or((None, None), |(a, b)| (Some(a), Some(b)));

        Ok(SlotRecord {
            t,
            requests: hits + misses,
            hits,
            weighted_hits: weighted,
            misses,
            regret,
            realized_regret,
            multicast,
            decision,
            draw,
        })
    }

    fn feedback(&mut self, draw: &SlotDraw, decision: &CacheDecision) -> Feedback {
        let m = decision.len();
        let masks = async_filter(m, &draw.departed, draw.late.len());
        let users = draw
            .slot
            .users
            .iter()
            .zip(&draw.requests)
            .map(|(u, r)| (u, r, true))
            .chain(draw.late.iter().map(|(u, r)| (u, r, false)));
        let mut rows = Vec::with_capacity(masks.len());
        for ((user, reqs, placed), mut mask) in users.zip(masks) {
            let mut hits = vec![0.0; m];
            let mut values = vec![0.0; m];
            for r in reqs {
                if let Some(j) = decision.position(r.file) {
                    hits[j] += r.count;
                    values[j] += r.value;
                }
            }
            if let Some(q) = self.cfg.reveal_probability {
                for keep in mask.iter_mut() {
                    // Draw for every observation so the stream does not depend on churn.
                    let revealed = self.mask_rng.gen::<f64>() < q;
                    *keep &= revealed;
                }
            }
            rows.push(FeedbackRow {
                user: user.clone(),
                hits,
                values,
                mask,
                placed,
            });
        }
        Feedback {
            rows,
            overheard: Vec::new(),
        }
    }

    fn multicast(
        &self,
        cfg: &MulticastConfig,
        draw: &SlotDraw,
        decision: &CacheDecision,
        policy: &dyn CachePolicy,
    ) -> Result<MulticastOutcome> {
        let active = draw
            .slot
            .users
            .iter()
            .zip(&draw.requests)
            .zip(&draw.departed)
            .filter(|(_, &gone)| !gone)
            .map(|(x, _)| x)
            .chain(draw.late.iter().map(|(u, r)| (u, r)));
        let mut served = Vec::new();
        for (user, reqs) in active {
            for r in reqs.iter().filter(|r| decision.contains(r.file)) {
                served.push(CachedRequest {
                    file: r.file,
                    arrival: r.arrival,
                    service: user.service,
                    count: r.count.round() as u64,
                    estimated_demand: policy
                        .estimated_demand(&draw.slot, r.file)
                        .unwrap_or(f64::INFINITY),
                });
            }
        }
        multicast_aggregate(&served, cfg)
    }
}

fn check_decision(decision: &CacheDecision, m: usize, library_size: usize) -> Result<()> {
    if decision.len() != m {
        return Err(Error::Contract(format!(
            "policy cached {} files, cache size is {m}",
            decision.len()
        )));
    }
    if let Some(f) = decision.files().iter().find(|f| f.index() >= library_size) {
        return Err(Error::Contract(format!(
            "policy cached {f} outside library of {library_size} files"
        )));
    }
    Ok(())
}

/// Expected and realized regret of `decision` for the placed users, or
/// `None` when the environment does not know its demand functions.
fn slot_regret(
    env: &dyn Environment,
    weights: &WeightConfig,
    draw: &SlotDraw,
    decision: &CacheDecision,
) -> Option<(f64, f64)> {
    if !env.knows_expected_values() {
        return None;
    }
    let n = env.library_size();
    let m = decision.len();
    let mut score = vec![0.0; n];
    for user in &draw.slot.users {
        let v = weights.service(user.service);
        for (f, s) in score.iter_mut().enumerate() {
            *s += v * env.expected_value(FileId(f as u32), &user.context)?;
        }
    }
    for (f, s) in score.iter_mut().enumerate() {
        *s *= weights.file(FileId(f as u32));
    }
    let best = top_k((0..n as u32).map(FileId), &score, m);
    let expected = best.iter().map(|f| score[f.index()]).sum::<f64>()
        - decision
            .files()
            .iter()
            .map(|f| score[f.index()])
            .sum::<f64>();

    let mut realized = 0.0;
    for (user, reqs) in draw.slot.users.iter().zip(&draw.requests) {
        let v = weights.service(user.service);
        for r in reqs {
            let w = weights.file(r.file);
            if best.contains(&r.file) {
                realized += v * w * r.value;
            }
            if decision.contains(r.file) {
                realized -= v * w * r.value;
            }
        }
    }
    Some((expected.max(0.0), realized))
}

/// Expected regret of a logged run against the top-m of the true demand
/// functions. Fails on environments whose demand functions are unknown.
pub fn regret_series(
    env: &dyn Environment,
    weights: &WeightConfig,
    log: &[(SlotContext, CacheDecision)],
) -> Result<Vec<f64>> {
    log.iter()
        .map(|(slot, decision)| {
            let draw = SlotDraw::new(slot.clone(), vec![Vec::new(); slot.len()]);
            slot_regret(env, weights, &draw, decision)
                .map(|(expected, _)| expected)
                .ok_or_else(|| {
                    Error::Unsupported(
                        "regret needs known demand functions; report hits for traces".into(),
                    )
                })
        })
        .collect()
}
