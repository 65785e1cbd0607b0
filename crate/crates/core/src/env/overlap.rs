//! Two caching entities with partially overlapping coverage.
//!
//! A fraction `o` of the users sits in the intersection and is seen by both
//! caches at placement; the rest connect to one cache chosen uniformly.
//! Intersection requests hit when either cache holds the file. With
//! overhearing, each cache also learns from the hits its neighbour serves to
//! intersection users.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, MetricsSeries};
use crate::decision::CacheDecision;
use crate::error::{Error, Result};
use crate::policy::{CachePolicy, Feedback, FeedbackRow, Mcac, Overheard};
use crate::types::SlotContext;
use crate::weights::WeightConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapTopology {
    /// Fraction of users in the coverage intersection.
    pub overlap: f64,
    /// Seed of the user-to-cache assignment.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    First,
    Second,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Each cache runs m-CAC on its own hits.
    Independent,
    /// m-CACao: caches also learn from hits overheard at the neighbour.
    Overhearing,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverlapOutcome {
    pub per_cache: [MetricsSeries; 2],
    /// System-level series: every request counted once.
    pub summed: MetricsSeries,
}

struct SlotView {
    users: [Vec<usize>; 2],
}

pub fn run_overlap(
    env: &mut dyn Environment,
    topology: OverlapTopology,
    mode: OverlapMode,
    caches: [&mut Mcac; 2],
    weights: &WeightConfig,
) -> Result<OverlapOutcome> {
    if !(0.0..=1.0).contains(&topology.overlap) {
        return Err(Error::Config(format!(
            "overlap fraction {} outside [0, 1]",
            topology.overlap
        )));
    }
    let [first, second] = caches;
    let caches: [&mut Mcac; 2] = [first, second];
    let mut rng = ChaCha8Rng::seed_from_u64(topology.seed);
    let mut out = OverlapOutcome::default();

    for t in 1..=env.horizon() {
        let draw = env.draw(t)?;
        let n = draw.slot.len();
        // Two draws per user regardless of outcome keep assignments
        // identical across modes and overlap levels below the threshold.
        let placement: Vec<Placement> = (0..n)
            .map(|_| {
                let (a, b) = (rng.gen::<f64>(), rng.gen::<bool>());
                if a < topology.overlap {
                    Placement::Both
                } else if b {
                    Placement::First
                } else {
                    Placement::Second
                }
            })
            .collect();
        let mut view = SlotView {
            users: [Vec::new(), Vec::new()],
        };
        for (i, p) in placement.iter().enumerate() {
            if *p != Placement::Second {
                view.users[0].push(i);
            }
            if *p != Placement::First {
                view.users[1].push(i);
            }
        }
        let contexts: [SlotContext; 2] = [0, 1].map(|c| {
            SlotContext::new(
                view.users[c]
                    .iter()
                    .map(|&i| draw.slot.users[i].clone())
                    .collect(),
            )
        });
        let mut decisions = Vec::with_capacity(2);
        for c in 0..2 {
            let d = caches[c].place(t, &contexts[c], None)?;
            if d.len() != caches[c].cache_size() {
                return Err(Error::Contract(
                    "cache returned wrong number of files".into(),
                ));
            }
            decisions.push(d);
        }

        // Serve every request; `server[i][k]` is the cache serving request k of user i.
        let mut slot_metrics = [SlotTotals::default(), SlotTotals::default()];
        let mut system = SlotTotals::default();
        let mut server: Vec<Vec<Option<usize>>> = Vec::with_capacity(n);
        for (i, reqs) in draw.requests.iter().enumerate() {
            let user = &draw.slot.users[i];
            let mut row = Vec::with_capacity(reqs.len());
            for r in reqs {
                let tie = rng.gen::<bool>();
                let in_cache = [decisions[0].contains(r.file), decisions[1].contains(r.file)];
                let s = match placement[i] {
                    Placement::First => in_cache[0].then_some(0),
                    Placement::Second => in_cache[1].then_some(1),
                    Placement::Both => match in_cache {
                        [true, true] => Some(if tie { 0 } else { 1 }),
                        [true, false] => Some(0),
                        [false, true] => Some(1),
                        [false, false] => None,
                    },
                };
                let w = weights.service(user.service) * weights.file(r.file);
                match s {
                    Some(c) => {
                        slot_metrics[c].hit(r.count, w);
                        system.hit(r.count, w);
                    }
                    None => {
                        system.miss(r.count);
                        let c = match placement[i] {
                            Placement::Second => 1,
                            _ => 0,
                        };
                        slot_metrics[c].miss(r.count);
                    }
                }
                row.push(s);
            }
            server.push(row);
        }

        for c in 0..2 {
            let decision = &decisions[c];
            let m = decision.len();
            let mut fb = Feedback::default();
            for &i in &view.users[c] {
                let intersection = placement[i] == Placement::Both;
                let mut hits = vec![0.0; m];
                let mut values = vec![0.0; m];
                for (k, r) in draw.requests[i].iter().enumerate() {
                    let served_here = server[i][k] == Some(c);
                    let served_next = server[i][k] == Some(1 - c);
                    match decision.position(r.file) {
                        Some(j)
                            if served_here || (served_next && mode == OverlapMode::Overhearing) =>
                        {
                            hits[j] += r.count;
                            values[j] += r.value;
                        }
                        Some(_) => {}
                        None if served_next && intersection && mode == OverlapMode::Overhearing => {
                            fb.overheard.push(Overheard {
                                user: draw.slot.users[i].clone(),
                                file: r.file,
                                value: r.value,
                            });
                        }
                        None => {}
                    }
                }
                fb.rows.push(FeedbackRow {
                    user: draw.slot.users[i].clone(),
                    hits,
                    values,
                    mask: vec![true; m],
                    placed: true,
                });
            }
            caches[c].learn(t, decision, &fb)?;
            slot_metrics[c].push_into(&mut out.per_cache[c], decision);
        }
        system.push_into(&mut out.summed, &decisions[0]);
    }
    Ok(out)
}

#[derive(Default)]
struct SlotTotals {
    hits: f64,
    weighted: f64,
    misses: f64,
}

impl SlotTotals {
    fn hit(&mut self, count: f64, w: f64) {
        self.hits += count;
        self.weighted += w * count;
    }

    fn miss(&mut self, count: f64) {
        self.misses += count;
    }

    fn push_into(&self, series: &mut MetricsSeries, decision: &CacheDecision) {
        series.hits.push(self.hits);
        series.weighted_hits.push(self.weighted);
        series.misses.push(self.misses);
        series.requests.push(self.hits + self.misses);
        series.explored.push(decision.explored_count() as u32);
    }
}
