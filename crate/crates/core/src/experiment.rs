//! Seeded multi-run experiments: config, execution, aggregation, outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{
    efficiency, run_overlap, ChurnModel, Environment, ExpectedOracle, MetricsSeries,
    MulticastConfig, OverlapMode, OverlapTopology, ServiceAssignment, SimConfig, Simulator,
    SyntheticEnv, SyntheticModel, SyntheticParams, TraceEnv, TraceModel,
};
use crate::error::{Error, Result};
use crate::movielens::{self, ParseMode};
use crate::policy::{
    CachePolicy, MGreedy, MMyopic, MUcb, Mcac, McacConfig, Oracle, PolicyTag, RandomPolicy,
    DEFAULT_EPSILON,
};
use crate::seed::derive_seed;
use crate::types::ServiceType;
use crate::weights::WeightConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    Synthetic,
    Movielens,
}

/// Flat experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub environment: EnvironmentKind,
    pub policies: Vec<String>,
    pub cache_sizes: Vec<usize>,
    pub horizon: u64,
    pub runs: usize,
    pub seed: u64,

    pub epsilon: f64,
    pub alpha: f64,
    /// Scale of the exploration threshold; `1 / (|F| D)` when absent.
    pub control_scale: Option<f64>,
    pub partition_h: Option<u32>,

    /// Fraction of users of service type 1.
    pub priority_fraction: f64,
    /// Hit weight of service type 1; type 2 weighs 1.
    pub priority_weight: f64,

    /// Learn from rating-weighted demand.
    pub rated: bool,
    pub reveal_probability: Option<f64>,
    pub multicast: bool,
    pub multicast_intervals: u32,
    pub unicast_threshold: f64,
    /// Overlap fractions for the two-cache study; empty disables it.
    pub overlap: Vec<f64>,

    pub dim: usize,
    pub library_size: usize,
    pub users_max: usize,
    pub r_max: u32,
    pub bumps_per_file: usize,
    pub lipschitz: Option<f64>,
    pub churn_leave: f64,
    pub churn_late: f64,

    pub ratings_path: Option<PathBuf>,
    pub users_path: Option<PathBuf>,
    pub slot_seconds: u64,

    /// Re-run the first replication of every group and compare.
    pub verify: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            environment: EnvironmentKind::Synthetic,
            policies: [
                "oracle",
                "mcac",
                "m_epsilon_greedy",
                "m_ucb",
                "m_myopic",
                "random",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            cache_sizes: vec![3],
            horizon: 1000,
            runs: 100,
            seed: 1,
            epsilon: DEFAULT_EPSILON,
            alpha: 1.0,
            control_scale: None,
            partition_h: None,
            priority_fraction: 0.0,
            priority_weight: 1.0,
            rated: false,
            reveal_probability: None,
            multicast: false,
            multicast_intervals: 6,
            unicast_threshold: 0.5,
            overlap: Vec::new(),
            dim: 2,
            library_size: 20,
            users_max: 5,
            r_max: 1,
            bumps_per_file: 2,
            lipschitz: None,
            churn_leave: 0.0,
            churn_late: 0.0,
            ratings_path: None,
            users_path: None,
            slot_seconds: movielens::SLOT_SECONDS,
            verify: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses a config; relative data paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [&mut cfg.ratings_path, &mut cfg.users_path]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn policy_tags(&self) -> Result<Vec<PolicyTag>> {
        self.policies
            .iter()
            .map(|s| {
                let tag = PolicyTag::parse(s)
                    .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))?;
                match tag {
                    PolicyTag::Mcacao => Err(Error::Config(
                        "mcacao runs through the overlap list, not the policy list".into(),
                    )),
                    PolicyTag::ExpectedOracle if self.environment != EnvironmentKind::Synthetic => {
                        Err(Error::Config(
                            "expected_oracle needs a synthetic environment".into(),
                        ))
                    }
                    t => Ok(t),
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.policies.is_empty() && self.overlap.is_empty() {
            return bad("policies must not be empty");
        }
        self.policy_tags()?;
        if self.cache_sizes.is_empty() || self.cache_sizes.contains(&0) {
            return bad("cache_sizes must be a non-empty list of positive sizes");
        }
        if self.runs == 0 {
            return bad("runs must be >= 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.priority_fraction) {
            return bad("priority_fraction outside [0, 1]");
        }
        if !(self.priority_weight >= 1.0 && self.priority_weight.is_finite()) {
            return bad("priority_weight must be >= 1");
        }
        if let Some(q) = self.reveal_probability {
            if !(q > 0.0 && q <= 1.0) {
                return bad("reveal_probability outside (0, 1]");
            }
        }
        if self.overlap.iter().any(|o| !(0.0..=1.0).contains(o)) {
            return bad("overlap fractions must lie in [0, 1]");
        }
        if self.multicast && self.multicast_intervals == 0 {
            return bad("multicast_intervals must be >= 1");
        }
        match self.environment {
            EnvironmentKind::Synthetic => {
                if let Some(&m) = self.cache_sizes.iter().find(|&&m| m > self.library_size) {
                    return Err(Error::Config(format!(
                        "cache size {m} exceeds library_size {}",
                        self.library_size
                    )));
                }
                self.synthetic_params().validate()?;
            }
            EnvironmentKind::Movielens => {
                if self.ratings_path.is_none() || self.users_path.is_none() {
                    return bad("movielens needs ratings_path and users_path");
                }
                if self.slot_seconds == 0 {
                    return bad("slot_seconds must be >= 1");
                }
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> WeightConfig {
        WeightConfig::uniform()
            .with_service(ServiceType(1), self.priority_weight)
            .expect("validated priority weight")
    }

    pub fn synthetic_params(&self) -> SyntheticParams {
        let mut p = SyntheticParams::new(self.dim, self.library_size, self.users_max, self.horizon);
        p.r_max = self.r_max;
        p.alpha = self.alpha;
        p.lipschitz = self.lipschitz;
        p.bumps_per_file = self.bumps_per_file;
        p.priority_fraction = self.priority_fraction;
        p.rated = self.rated;
        p.churn = ChurnModel {
            leave_probability: self.churn_leave,
            late_rate: self.churn_late,
        };
        p
    }
}

/// Environment of one run, plus the model behind it when synthetic.
type RunWorld = (Box<dyn Environment>, Option<Arc<SyntheticModel>>);

/// Demand source shared by every job of an experiment.
pub enum World {
    Synthetic(SyntheticParams),
    Trace {
        trace: Arc<TraceModel>,
        total_events: usize,
        retained_events: usize,
    },
}

impl World {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        match cfg.environment {
            EnvironmentKind::Synthetic => Ok(World::Synthetic(cfg.synthetic_params())),
            EnvironmentKind::Movielens => {
                let (r, u) = (
                    cfg.ratings_path.as_deref().expect("validated"),
                    cfg.users_path.as_deref().expect("validated"),
                );
                let data = movielens::parse(r, u, ParseMode::Strict)?;
                let built = movielens::build_trace(
                    &data.events,
                    &data.profiles,
                    cfg.slot_seconds,
                    cfg.horizon,
                )?;
                if let Some(&m) = cfg
                    .cache_sizes
                    .iter()
                    .find(|&&m| m > built.trace.library_size)
                {
                    return Err(Error::Config(format!(
                        "cache size {m} exceeds the {} files of the trace",
                        built.trace.library_size
                    )));
                }
                Ok(World::Trace {
                    trace: Arc::new(built.trace),
                    total_events: built.total_events,
                    retained_events: built.retained_events,
                })
            }
        }
    }

    fn environment(&self, cfg: &ExperimentConfig, run: u64) -> Result<RunWorld> {
        match self {
            World::Synthetic(p) => {
                let model = Arc::new(SyntheticModel::generate(
                    p.clone(),
                    derive_seed(cfg.seed, "model", run),
                )?);
                let env = SyntheticEnv::new(model.clone(), derive_seed(cfg.seed, "env", run));
                Ok((Box::new(env), Some(model)))
            }
            World::Trace { trace, .. } => {
                let services = ServiceAssignment {
                    priority_fraction: cfg.priority_fraction,
                    seed: derive_seed(cfg.seed, "services", run),
                };
                Ok((
                    Box::new(TraceEnv::new(trace.clone(), services, cfg.rated)),
                    None,
                ))
            }
        }
    }
}

fn mcac_config(cfg: &ExperimentConfig, env: &dyn Environment, m: usize, seed: u64) -> McacConfig {
    let dim = match cfg.environment {
        EnvironmentKind::Synthetic => cfg.dim,
        EnvironmentKind::Movielens => 2,
    };
    let f = env.library_size();
    McacConfig {
        library_size: f,
        cache_size: m,
        dim,
        horizon: env.horizon(),
        alpha: cfg.alpha,
        control_scale: cfg
            .control_scale
            .unwrap_or_else(|| McacConfig::reduced_control_scale(f, dim)),
        h_override: cfg.partition_h,
        r_max: env.value_bound(),
        seed,
    }
}

fn build_policy(
    cfg: &ExperimentConfig,
    tag: PolicyTag,
    env: &dyn Environment,
    model: Option<&Arc<SyntheticModel>>,
    m: usize,
    seed: u64,
) -> Result<Box<dyn CachePolicy>> {
    let f = env.library_size();
    let w = cfg.weights();
    Ok(match tag {
        PolicyTag::Oracle => Box::new(Oracle::new(f, m, w)?),
        PolicyTag::Mcac | PolicyTag::Mcacao => {
            Box::new(Mcac::new(mcac_config(cfg, env, m, seed), w)?)
        }
        PolicyTag::MUcb => Box::new(MUcb::new(f, m, env.value_bound(), w)?),
        PolicyTag::MEpsilonGreedy => Box::new(MGreedy::new(f, m, cfg.epsilon, w, seed)?),
        PolicyTag::MMyopic => Box::new(MMyopic::new(f, m, seed)?),
        PolicyTag::Random => Box::new(RandomPolicy::new(f, m, seed)?),
        PolicyTag::ExpectedOracle => {
            let model = model.ok_or_else(|| {
                Error::Config("expected_oracle needs a synthetic environment".into())
            })?;
            Box::new(ExpectedOracle::new(model.clone(), m, w)?)
        }
    })
}

/// One (policy, cache size, overlap) cell of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupKey {
    pub policy: PolicyTag,
    pub m: usize,
    pub overlap: Option<f64>,
}

/// Executes replication `run` of `key`.
pub fn run_single(
    cfg: &ExperimentConfig,
    world: &World,
    key: GroupKey,
    run: u64,
) -> Result<MetricsSeries> {
    let (mut env, model) = world.environment(cfg, run)?;
    match key.overlap {
        None => {
            let seed = derive_seed(cfg.seed, key.policy.as_str(), run);
            let mut policy = build_policy(cfg, key.policy, &*env, model.as_ref(), key.m, seed)?;
            let multicast = cfg.multicast.then(|| MulticastConfig {
                intervals: cfg.multicast_intervals,
                unicast_threshold: cfg.unicast_threshold,
                priority_services: if cfg.priority_fraction > 0.0 {
                    [ServiceType(1)].into_iter().collect()
                } else {
                    Default::default()
                },
            });
            let mut sim = Simulator::new(SimConfig {
                weights: cfg.weights(),
                reveal_probability: cfg.reveal_probability,
                multicast,
                mask_seed: derive_seed(cfg.seed, "mask", run),
                record_log: false,
            })?;
            Ok(sim.run(&mut *env, &mut *policy)?.metrics)
        }
        Some(o) => {
            let mode = match key.policy {
                PolicyTag::Mcacao => OverlapMode::Overhearing,
                _ => OverlapMode::Independent,
            };
            let mk = |c: u64| {
                Mcac::new(
                    mcac_config(
                        cfg,
                        &*env,
                        key.m,
                        derive_seed(cfg.seed, "overlap_cache", 2 * run + c),
                    ),
                    cfg.weights(),
                )
            };
            let (mut a, mut b) = (mk(0)?, mk(1)?);
            let topology = OverlapTopology {
                overlap: o,
                seed: derive_seed(cfg.seed, "overlap", run),
            };
            Ok(run_overlap(&mut *env, topology, mode, [&mut a, &mut b], &cfg.weights())?.summed)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

/// Totals of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub hits: f64,
    pub weighted_hits: f64,
    pub misses: f64,
    pub regret: Option<f64>,
    pub multicast_saved: Option<f64>,
}

impl RunTotals {
    fn of(s: &MetricsSeries) -> Self {
        RunTotals {
            hits: s.total_hits(),
            weighted_hits: s.total_weighted_hits(),
            misses: s.total_misses(),
            regret: s.regret.as_ref().map(|r| r.iter().sum()),
            multicast_saved: s.multicast_saved.as_ref().map(|r| r.iter().sum()),
        }
    }

    pub fn efficiency(&self) -> f64 {
        efficiency(self.hits, self.misses)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub key: GroupKey,
    pub totals: Vec<RunTotals>,
    /// Across-run means per slot.
    pub hits: Vec<f64>,
    pub weighted_hits: Vec<f64>,
    pub cum_hits: Vec<f64>,
    pub cum_weighted_hits: Vec<f64>,
    pub cum_regret: Option<Vec<f64>>,
    /// Per-run cumulative regret, kept for slope fits.
    pub run_cum_regret: Option<Vec<Vec<f64>>>,
}

impl GroupResult {
    fn aggregate(key: GroupKey, runs: &[MetricsSeries]) -> Self {
        let n = runs.len() as f64;
        let mean_of = |series: Vec<Vec<f64>>| -> Vec<f64> {
            let len = series[0].len();
            (0..len)
                .map(|t| series.iter().map(|s| s[t]).sum::<f64>() / n)
                .collect()
        };
        let run_cum_regret: Option<Vec<Vec<f64>>> = runs
            .iter()
            .map(|s| s.cumulative_regret())
            .collect::<Option<Vec<_>>>();
        GroupResult {
            key,
            totals: runs.iter().map(RunTotals::of).collect(),
            hits: mean_of(runs.iter().map(|s| s.hits.clone()).collect()),
            weighted_hits: mean_of(runs.iter().map(|s| s.weighted_hits.clone()).collect()),
            cum_hits: mean_of(runs.iter().map(|s| s.cumulative_hits()).collect()),
            cum_weighted_hits: mean_of(runs.iter().map(|s| s.cumulative_weighted_hits()).collect()),
            cum_regret: run_cum_regret.clone().map(mean_of),
            run_cum_regret,
        }
    }

    pub fn hits(&self) -> Stat {
        Stat::of(&self.totals.iter().map(|t| t.hits).collect::<Vec<_>>())
    }

    pub fn weighted_hits(&self) -> Stat {
        Stat::of(
            &self
                .totals
                .iter()
                .map(|t| t.weighted_hits)
                .collect::<Vec<_>>(),
        )
    }

    pub fn efficiency(&self) -> Stat {
        Stat::of(
            &self
                .totals
                .iter()
                .map(|t| t.efficiency())
                .collect::<Vec<_>>(),
        )
    }

    pub fn regret(&self) -> Option<Stat> {
        let r: Option<Vec<f64>> = self.totals.iter().map(|t| t.regret).collect();
        r.map(|r| Stat::of(&r))
    }

    pub fn multicast_saved(&self) -> Option<Stat> {
        let r: Option<Vec<f64>> = self.totals.iter().map(|t| t.multicast_saved).collect();
        r.map(|r| Stat::of(&r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub groups: Vec<GroupResult>,
    /// Retained and total events when the world is a trace.
    pub trace_events: Option<(usize, usize)>,
}

impl ExperimentResult {
    pub fn group(&self, policy: PolicyTag, m: usize, overlap: Option<f64>) -> Option<&GroupResult> {
        self.groups
            .iter()
            .find(|g| g.key.policy == policy && g.key.m == m && g.key.overlap == overlap)
    }
}

pub fn grid(cfg: &ExperimentConfig) -> Result<Vec<GroupKey>> {
    let mut keys = Vec::new();
    for policy in cfg.policy_tags()? {
        for &m in &cfg.cache_sizes {
            keys.push(GroupKey {
                policy,
                m,
                overlap: None,
            });
        }
    }
    for &o in &cfg.overlap {
        for policy in [PolicyTag::Mcac, PolicyTag::Mcacao] {
            for &m in &cfg.cache_sizes {
                keys.push(GroupKey {
                    policy,
                    m,
                    overlap: Some(o),
                });
            }
        }
    }
    Ok(keys)
}

/// Runs every replication of every group on `workers` threads (0 picks
/// the number of cores). Results do not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let world = World::load(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let keys = grid(cfg)?;
    let groups = pool.install(|| -> Result<Vec<GroupResult>> {
        keys.iter()
            .map(|&key| {
                let runs: Vec<MetricsSeries> = (0..cfg.runs as u64)
                    .into_par_iter()
                    .map(|i| run_single(cfg, &world, key, i))
                    .collect::<Result<_>>()?;
                if cfg.verify && run_single(cfg, &world, key, 0)? != runs[0] {
                    return Err(Error::Nondeterminism(format!(
                        "replay of {} m={} differs",
                        key.policy, key.m
                    )));
                }
                Ok(GroupResult::aggregate(key, &runs))
            })
            .collect()
    })?;
    let trace_events = match &world {
        World::Trace {
            total_events,
            retained_events,
            ..
        } => Some((*retained_events, *total_events)),
        World::Synthetic(_) => None,
    };
    Ok(ExperimentResult {
        groups,
        trace_events,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub policy: PolicyTag,
    pub m: usize,
    pub overlap: Option<f64>,
    pub runs: usize,
    pub cum_hits: Stat,
    pub cum_weighted_hits: Stat,
    /// Hit ratio in percent.
    pub efficiency: Stat,
    pub cum_regret: Option<Stat>,
    pub multicast_saved: Option<Stat>,
    /// m-CAC cumulative hits over this policy's, at the same m and overlap.
    pub mcac_ratio: Option<f64>,
    pub mcac_weighted_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub groups: Vec<GroupSummary>,
    /// Per policy: (m, mean efficiency in percent), ascending m.
    pub efficiency_vs_m: BTreeMap<String, Vec<(usize, f64)>>,
    /// Per policy: mean of `efficiency_vs_m`.
    pub average_efficiency: BTreeMap<String, f64>,
    pub retained_fraction: Option<f64>,
}

pub fn summarize(result: &ExperimentResult) -> Summary {
    let reference = |g: &GroupResult| {
        result.groups.iter().find(|r| {
            r.key.policy == PolicyTag::Mcac && r.key.m == g.key.m && r.key.overlap == g.key.overlap
        })
    };
    let groups: Vec<GroupSummary> = result
        .groups
        .iter()
        .map(|g| {
            let ratio = |a: f64, b: f64| (b > 0.0).then(|| a / b);
            let r = reference(g);
            let pct = |s: Stat| Stat {
                mean: 100.0 * s.mean,
                std: 100.0 * s.std,
            };
            GroupSummary {
                policy: g.key.policy,
                m: g.key.m,
                overlap: g.key.overlap,
                runs: g.totals.len(),
                cum_hits: g.hits(),
                cum_weighted_hits: g.weighted_hits(),
                efficiency: pct(g.efficiency()),
                cum_regret: g.regret(),
                multicast_saved: g.multicast_saved(),
                mcac_ratio: r.and_then(|r| ratio(r.hits().mean, g.hits().mean)),
                mcac_weighted_ratio: r
                    .and_then(|r| ratio(r.weighted_hits().mean, g.weighted_hits().mean)),
            }
        })
        .collect();
    let mut efficiency_vs_m: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for g in groups.iter().filter(|g| g.overlap.is_none()) {
        efficiency_vs_m
            .entry(g.policy.to_string())
            .or_default()
            .push((g.m, g.efficiency.mean));
    }
    for curve in efficiency_vs_m.values_mut() {
        curve.sort_by_key(|p| p.0);
    }
    let average_efficiency = efficiency_vs_m
        .iter()
        .map(|(p, c)| {
            (
                p.clone(),
                c.iter().map(|x| x.1).sum::<f64>() / c.len() as f64,
            )
        })
        .collect();
    Summary {
        schema_version: SCHEMA_VERSION,
        groups,
        efficiency_vs_m,
        average_efficiency,
        retained_fraction: result.trace_events.map(|(kept, total)| {
            if total > 0 {
                kept as f64 / total as f64
            } else {
                0.0
            }
        }),
    }
}

pub const SERIES_HEADER: &str =
    "policy,m,overlap,slot,hits,weighted_hits,cum_hits,cum_weighted_hits,cum_regret";

pub fn series_csv(result: &ExperimentResult) -> String {
    let mut out = String::new();
    writeln!(out, "{SERIES_HEADER}").unwrap();
    for g in &result.groups {
        let o = g.key.overlap.map(|o| o.to_string()).unwrap_or_default();
        for t in 0..g.hits.len() {
            let regret = g
                .cum_regret
                .as_ref()
                .map(|r| r[t].to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                g.key.policy,
                g.key.m,
                o,
                t + 1,
                g.hits[t],
                g.weighted_hits[t],
                g.cum_hits[t],
                g.cum_weighted_hits[t],
                regret
            )
            .unwrap();
        }
    }
    out
}

pub fn summary_json(result: &ExperimentResult) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&summarize(result))?;
    s.push('\n');
    Ok(s)
}

/// Writes `series.csv` and `summary.json` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("series.csv", series_csv(result)),
        ("summary.json", summary_json(result)?),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            policies: vec![
                "oracle".into(),
                "mcac".into(),
                "random".into(),
                "expected_oracle".into(),
            ],
            cache_sizes: vec![2, 4],
            horizon: 50,
            runs: 3,
            library_size: 10,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "schema_version = 1\npolicies = [\"mcac\"]\ncache_sizes = [3]\nruns = 2\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.runs, 2);
        assert_eq!(cfg.epsilon, 0.09);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(
            ExperimentConfig::from_toml(&text, Path::new(".")).unwrap(),
            cfg
        );
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "schema_version = 2",
            "runs = 0",
            "cache_sizes = []",
            "policies = [\"lru\"]",
            "policies = [\"mcacao\"]",
            "unknown_key = 1",
            "cache_sizes = [30]",
            "environment = \"movielens\"",
        ];
        for text in bad {
            assert!(
                matches!(
                    ExperimentConfig::from_toml(text, Path::new(".")),
                    Err(Error::Config(_))
                ),
                "{text}"
            );
        }
    }

    #[test]
    fn efficiency_formula() {
        let t = RunTotals {
            hits: 3.0,
            weighted_hits: 3.0,
            misses: 1.0,
            regret: None,
            multicast_saved: None,
        };
        assert_eq!(t.efficiency(), 0.75);
    }

    #[test]
    fn means_match_brute_force() {
        let cfg = small();
        let world = World::load(&cfg).unwrap();
        let result = run_experiment(&cfg, 2).unwrap();
        for g in &result.groups {
            let runs: Vec<MetricsSeries> = (0..cfg.runs as u64)
                .map(|i| run_single(&cfg, &world, g.key, i).unwrap())
                .collect();
            for t in 0..cfg.horizon as usize {
                let cum: f64 = runs.iter().map(|r| r.cumulative_hits()[t]).sum::<f64>() / 3.0;
                assert!((cum - g.cum_hits[t]).abs() <= 1e-12);
            }
            let total = runs.iter().map(|r| r.total_hits()).sum::<f64>() / 3.0;
            assert!((g.hits().mean - total).abs() <= 1e-12);
        }
    }

    #[test]
    fn expected_oracle_regret_column_is_zero() {
        let result = run_experiment(&small(), 1).unwrap();
        let g = result.group(PolicyTag::ExpectedOracle, 2, None).unwrap();
        assert!(g.cum_regret.as_ref().unwrap().iter().all(|&r| r == 0.0));
        let csv = series_csv(&result);
        assert!(csv
            .lines()
            .filter(|l| l.starts_with("expected_oracle,"))
            .all(|l| l.ends_with(",0")));
    }

    #[test]
    fn oracle_has_the_best_efficiency() {
        let result = run_experiment(&small(), 1).unwrap();
        let s = summarize(&result);
        for m in [2, 4] {
            let of = |p| {
                s.groups
                    .iter()
                    .find(|g| g.policy == p && g.m == m)
                    .unwrap()
                    .efficiency
                    .mean
            };
            assert!(of(PolicyTag::Oracle) >= of(PolicyTag::Mcac));
            assert!(of(PolicyTag::Oracle) >= of(PolicyTag::Random));
        }
    }

    #[test]
    fn worker_count_does_not_change_outputs() {
        let a = run_experiment(&small(), 1).unwrap();
        let b = run_experiment(&small(), 4).unwrap();
        assert_eq!(series_csv(&a), series_csv(&b));
        assert_eq!(summary_json(&a).unwrap(), summary_json(&b).unwrap());
    }
}
