//! The acceptance suite: one check per criterion, each yielding a verdict
//! line. Checks that need the MovieLens 1M files are skipped without them.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::ContextVector;
use crate::decision::Phase;
use crate::error::Result;
use crate::experiment::{
    run_experiment, series_csv, summarize, summary_json, EnvironmentKind, ExperimentConfig,
    ExperimentResult,
};
use crate::movielens::{self, ParseMode};
use crate::policy::{CachePolicy, Mcac, McacConfig, PolicyTag};
use crate::types::{FileId, ServiceType, SlotContext, UserContext};
use crate::weights::WeightConfig;

/// Environment variable naming a directory with `ratings.dat` and `users.dat`.
pub const MOVIELENS_ENV: &str = "MCAC_MOVIELENS_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        };
        write!(
            f,
            "criterion {:>2} [{s}] {}: {}",
            self.id, self.name, self.detail
        )
    }
}

fn verdict(id: u8, name: &'static str, ok: bool, detail: String) -> Outcome {
    Outcome {
        id,
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn skipped(id: u8, name: &'static str) -> Outcome {
    Outcome {
        id,
        name,
        status: Status::Skipped,
        detail: format!("set {MOVIELENS_ENV} to a MovieLens 1M directory"),
    }
}

fn failed(id: u8, name: &'static str, e: crate::Error) -> Outcome {
    verdict(id, name, false, format!("error: {e}"))
}

#[derive(Debug, Clone, Default)]
pub struct AcceptanceOptions {
    pub movielens_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl AcceptanceOptions {
    pub fn from_env() -> Self {
        Self {
            movielens_dir: std::env::var_os(MOVIELENS_ENV).map(PathBuf::from),
            workers: 0,
        }
    }

    fn dataset(&self) -> Option<(PathBuf, PathBuf)> {
        let dir = self.movielens_dir.as_ref()?;
        let (r, u) = (dir.join("ratings.dat"), dir.join("users.dat"));
        (r.is_file() && u.is_file()).then_some((r, u))
    }
}

/// Least-squares slope of `ln y` against `ln t` over `t` in `[from, to]`
/// (1-based slots), sampled at 64 log-spaced points.
pub fn log_log_slope(cum: &[f64], from: usize, to: usize) -> f64 {
    let (a, b) = ((from as f64).ln(), (to as f64).ln());
    let pts: Vec<(f64, f64)> = (0..64)
        .map(|k| {
            let t = (a + (b - a) * k as f64 / 63.0).exp().round() as usize;
            let t = t.clamp(from, to);
            ((t as f64).ln(), cum[t - 1].max(f64::MIN_POSITIVE).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn criterion_1() -> Outcome {
    const NAME: &str = "exploitation matches exhaustive top-m";
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut mismatches = 0;
    let cases = 1000;
    for case in 0..cases {
        match exhaustive_case(&mut rng, case) {
            Ok(true) => {}
            Ok(false) => mismatches += 1,
            Err(e) => return failed(1, NAME, e),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        NAME,
        mismatches == 0 && secs < 10.0,
        format!("{mismatches} mismatches in {cases} cases, {secs:.2}s"),
    )
}

fn exhaustive_case(rng: &mut ChaCha8Rng, case: u64) -> Result<bool> {
    let f = rng.gen_range(1..=12usize);
    let m = rng.gen_range(1..=f.min(4));
    let mut weights = WeightConfig::uniform()
        .with_service(ServiceType(1), rng.gen_range(1.0..5.0))?
        .with_service(ServiceType(2), rng.gen_range(1.0..5.0))?;
    for i in 0..f {
        weights = weights.with_file(FileId(i as u32), rng.gen_range(1.0..3.0))?;
    }
    let cfg = McacConfig {
        library_size: f,
        cache_size: m,
        dim: 2,
        horizon: 100,
        alpha: 1.0,
        control_scale: 1.0,
        h_override: Some(2),
        r_max: 10.0,
        seed: case,
    };
    let mut mcac = Mcac::new(cfg, weights.clone())?;
    let users: Vec<UserContext> = (0..rng.gen_range(1..=4))
        .map(|_| UserContext {
            context: ContextVector::new(vec![rng.gen(), rng.gen()]).unwrap(),
            service: ServiceType(rng.gen_range(1..=2)),
        })
        .collect();
    let slot = SlotContext::new(users);
    // Two observations per (file, cell) put every file above K(2) < 1.
    for u in &slot.users {
        let cell = mcac.partition().quantize(&u.context)?;
        for i in 0..f {
            if mcac.store().get(FileId(i as u32), &cell).count == 0 {
                for _ in 0..2 {
                    mcac.store_mut()
                        .update(FileId(i as u32), &cell, rng.gen_range(0.0..10.0))?;
                }
            }
        }
    }
    let decision = mcac.place(2, &slot, None)?;
    if decision.phase() != Phase::Exploitation {
        return Ok(false);
    }
    let score: Vec<f64> = (0..f)
        .map(|i| {
            let file = FileId(i as u32);
            weights.file(file)
                * slot
                    .users
                    .iter()
                    .map(|u| {
                        let cell = mcac.partition().quantize(&u.context).unwrap();
                        weights.service(u.service) * mcac.store().get(file, &cell).mean
                    })
                    .sum::<f64>()
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, 0u32);
    for mask in 0u32..(1 << f) {
        if mask.count_ones() as usize == m {
            let s: f64 = (0..f)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| score[i])
                .sum();
            if s > best.0 {
                best = (s, mask);
            }
        }
    }
    let chosen: u32 = decision.files().iter().map(|x| 1 << x.0).sum();
    let chosen_score: f64 = decision.files().iter().map(|x| score[x.index()]).sum();
    Ok(chosen == best.1 || (chosen_score - best.0).abs() <= 1e-12 * best.0.abs())
}

fn regret_config() -> ExperimentConfig {
    ExperimentConfig {
        policies: vec!["mcac".into(), "random".into()],
        cache_sizes: vec![3],
        horizon: 100_000,
        runs: 20,
        seed: 2024,
        dim: 2,
        alpha: 1.0,
        library_size: 20,
        users_max: 5,
        ..ExperimentConfig::default()
    }
}

fn mean_regret_slope(result: &ExperimentResult, policy: PolicyTag, m: usize) -> Option<(f64, f64)> {
    let g = result.group(policy, m, None)?;
    let cum = g.cum_regret.as_ref()?;
    let t = cum.len();
    Some((log_log_slope(cum, t / 10, t), cum[t - 1]))
}

pub fn criterion_2(opts: &AcceptanceOptions) -> Outcome {
    const NAME: &str = "sublinear regret on synthetic demand";
    let start = Instant::now();
    let result = match run_experiment(&regret_config(), opts.workers) {
        Ok(r) => r,
        Err(e) => return failed(2, NAME, e),
    };
    let (Some((s_mcac, r_mcac)), Some((s_rand, r_rand))) = (
        mean_regret_slope(&result, PolicyTag::Mcac, 3),
        mean_regret_slope(&result, PolicyTag::Random, 3),
    ) else {
        return verdict(2, NAME, false, "regret series missing".into());
    };
    verdict(
        2,
        NAME,
        s_mcac <= 0.90 && s_rand >= 0.97,
        format!(
            "slope mcac {s_mcac:.3} (<= 0.90), random {s_rand:.3} (>= 0.97); R(T) {r_mcac:.1} vs {r_rand:.1}; {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

pub fn criterion_3(opts: &AcceptanceOptions) -> Outcome {
    const NAME: &str = "oracle on true demand has zero regret";
    let cfg = ExperimentConfig {
        policies: vec!["expected_oracle".into()],
        cache_sizes: vec![3],
        horizon: 200,
        runs: 1000,
        seed: 7,
        ..ExperimentConfig::default()
    };
    let result = match run_experiment(&cfg, opts.workers) {
        Ok(r) => r,
        Err(e) => return failed(3, NAME, e),
    };
    let Some(stat) = result
        .group(PolicyTag::ExpectedOracle, 3, None)
        .and_then(|g| g.regret())
    else {
        return verdict(3, NAME, false, "regret missing".into());
    };
    let se = stat.std / (cfg.runs as f64).sqrt();
    verdict(
        3,
        NAME,
        stat.mean.abs() <= 3.0 * se,
        format!(
            "mean {:.3e}, standard error {se:.3e} over {} runs",
            stat.mean, cfg.runs
        ),
    )
}

fn movielens_config(r: &Path, u: &Path) -> ExperimentConfig {
    ExperimentConfig {
        environment: EnvironmentKind::Movielens,
        ratings_path: Some(r.to_path_buf()),
        users_path: Some(u.to_path_buf()),
        horizon: movielens::HOURS_PER_YEAR,
        cache_sizes: vec![200],
        runs: 20,
        seed: 42,
        ..ExperimentConfig::default()
    }
}

const ORDER: [PolicyTag; 6] = [
    PolicyTag::Oracle,
    PolicyTag::Mcac,
    PolicyTag::MEpsilonGreedy,
    PolicyTag::MUcb,
    PolicyTag::MMyopic,
    PolicyTag::Random,
];

/// Strict ordering of `value` over [`ORDER`] and ratios of m-CAC against the
/// four baselines within `tolerance` of `targets`.
fn ordering_and_ratios(
    result: &ExperimentResult,
    m: usize,
    value: impl Fn(&crate::experiment::GroupResult) -> f64,
    targets: [f64; 4],
    tolerance: f64,
) -> (bool, String) {
    let vals: Vec<f64> = ORDER
        .iter()
        .map(|&p| result.group(p, m, None).map(&value).unwrap_or(f64::NAN))
        .collect();
    let ordered = vals.windows(2).all(|w| w[0] > w[1]);
    let ratios: Vec<f64> = vals[2..].iter().map(|v| vals[1] / v).collect();
    let within = ratios
        .iter()
        .zip(targets)
        .all(|(r, t)| (r / t - 1.0).abs() <= tolerance);
    let detail = format!(
        "ordered {ordered}; ratios {} vs targets {targets:?}",
        ratios
            .iter()
            .map(|r| format!("{r:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    (ordered && within, detail)
}

pub fn criterion_4(opts: &AcceptanceOptions) -> Outcome {
    const NAME: &str = "MovieLens headline ordering and ratios";
    let Some((r, u)) = opts.dataset() else {
        return skipped(4, NAME);
    };
    let result = match run_experiment(&movielens_config(&r, &u), opts.workers) {
        Ok(r) => r,
        Err(e) => return failed(4, NAME, e),
    };
    let (ok, detail) = ordering_and_ratios(
        &result,
        200,
        |g| g.hits().mean,
        [1.146, 1.377, 3.985, 5.506],
        0.15,
    );
    verdict(4, NAME, ok, detail)
}

pub fn criterion_5(opts: &AcceptanceOptions) -> Outcome {
    const NAME: &str = "efficiency grows with cache size";
    let Some((r, u)) = opts.dataset() else {
        return skipped(5, NAME);
    };
    let cfg = ExperimentConfig {
        cache_sizes: (1..=8).map(|k| 50 * k).collect(),
        runs: 5,
        ..movielens_config(&r, &u)
    };
    let result = match run_experiment(&cfg, opts.workers) {
        Ok(r) => r,
        Err(e) => return failed(5, NAME, e),
    };
    let s = summarize(&result);
    let monotone = s
        .efficiency_vs_m
        .values()
        .all(|c| c.windows(2).all(|w| w[1].1 >= w[0].1));
    let avg = s
        .average_efficiency
        .get("mcac")
        .copied()
        .unwrap_or(f64::NAN);
    verdict(
        5,
        NAME,
        monotone && (avg - 28.4).abs() <= 4.0,
        format!("non-decreasing {monotone}; m-CAC average efficiency {avg:.2}% (28.4 +- 4)"),
    )
}

pub fn criterion_6(opts: &AcceptanceOptions) -> Outcome {
    const NAME: &str = "service differentiation";
    let Some((r, u)) = opts.dataset() else {
        return skipped(6, NAME);
    };
    let cfg = ExperimentConfig {
        priority_fraction: 0.1,
        priority_weight: 5.0,
        ..movielens_config(&r, &u)
    };
    let result = match run_experiment(&cfg, opts.workers) {
        Ok(r) => r,
        Err(e) => return failed(6, NAME, e),
    };
    let (ok, detail) = ordering_and_ratios(
        &result,
        200,
        |g| g.weighted_hits().mean,
        [1.156, 1.219, 3.914, 5.362],
        0.15,
    );
    verdict(6, NAME, ok, detail)
}

pub fn criterion_7(opts: &AcceptanceOptions) -> Outcome {
    const NAME: &str = "overhearing helps under overlap";
    let Some((r, u)) = opts.dataset() else {
        return skipped(7, NAME);
    };
    let overlap: Vec<f64> = (0..=6).map(|k| k as f64 * 0.05).collect();
    let cfg = ExperimentConfig {
        policies: Vec::new(),
        overlap: overlap.clone(),
        runs: 5,
        ..movielens_config(&r, &u)
    };
    let result = match run_experiment(&cfg, opts.workers) {
        Ok(r) => r,
        Err(e) => return failed(7, NAME, e),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for &o in &overlap {
        let (Some(a), Some(b)) = (
            result.group(PolicyTag::Mcac, 200, Some(o)),
            result.group(PolicyTag::Mcacao, 200, Some(o)),
        ) else {
            return verdict(7, NAME, false, format!("missing group at o={o}"));
        };
        let (ha, hb) = (a.hits().mean, b.hits().mean);
        if o == 0.0 {
            ok &= a.cum_hits == b.cum_hits;
        } else if o <= 0.20 + 1e-12 {
            ok &= hb >= ha;
        }
        parts.push(format!("o={o:.2}: {:.4}", hb / ha));
    }
    verdict(
        7,
        NAME,
        ok,
        format!("mcacao/mcac hits {}", parts.join(", ")),
    )
}

pub fn criterion_8(opts: &AcceptanceOptions) -> Outcome {
    const NAME: &str = "missing ratings keep regret sublinear";
    let mut regrets = Vec::new();
    let mut slopes = Vec::new();
    for q in [1.0, 0.5, 0.25] {
        let cfg = ExperimentConfig {
            policies: vec!["mcac".into()],
            rated: true,
            reveal_probability: Some(q),
            runs: 10,
            seed: 99,
            ..regret_config()
        };
        let result = match run_experiment(&cfg, opts.workers) {
            Ok(r) => r,
            Err(e) => return failed(8, NAME, e),
        };
        match mean_regret_slope(&result, PolicyTag::Mcac, 3) {
            Some((s, r)) => {
                slopes.push(s);
                regrets.push(r);
            }
            None => return verdict(8, NAME, false, "regret missing".into()),
        }
    }
    let monotone = regrets.windows(2).all(|w| w[1] >= w[0]);
    let sublinear = slopes.iter().all(|&s| s < 1.0);
    verdict(
        8,
        NAME,
        monotone && sublinear,
        format!(
            "R(T) at q=1,0.5,0.25: {:.1}, {:.1}, {:.1}; slopes {:.3}, {:.3}, {:.3}",
            regrets[0], regrets[1], regrets[2], slopes[0], slopes[1], slopes[2]
        ),
    )
}

pub fn criterion_9(opts: &AcceptanceOptions) -> Outcome {
    const NAME: &str = "MovieLens ingestion golden values";
    let Some((r, u)) = opts.dataset() else {
        return skipped(9, NAME);
    };
    let data = match movielens::parse(&r, &u, ParseMode::Strict) {
        Ok(d) => d,
        Err(e) => return failed(9, NAME, e),
    };
    let built = match movielens::build_trace(
        &data.events,
        &data.profiles,
        movielens::SLOT_SECONDS,
        movielens::HOURS_PER_YEAR,
    ) {
        Ok(b) => b,
        Err(e) => return failed(9, NAME, e),
    };
    let frac = built.retained_fraction();
    verdict(
        9,
        NAME,
        data.events.len() == 1_000_209
            && data.profiles.len() == 6040
            && (frac - 0.94).abs() <= 0.01,
        format!(
            "{} events, {} users, first-year retention {frac:.4}",
            data.events.len(),
            data.profiles.len()
        ),
    )
}

pub fn criterion_10(opts: &AcceptanceOptions) -> Outcome {
    const NAME: &str = "byte-identical re-runs";
    let mut configs = vec![ExperimentConfig {
        policies: [
            "oracle",
            "mcac",
            "m_epsilon_greedy",
            "m_ucb",
            "m_myopic",
            "random",
            "expected_oracle",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        cache_sizes: vec![2, 4],
        horizon: 300,
        runs: 4,
        rated: true,
        reveal_probability: Some(0.5),
        multicast: true,
        priority_fraction: 0.2,
        priority_weight: 3.0,
        overlap: vec![0.0, 0.2],
        churn_leave: 0.1,
        churn_late: 0.5,
        ..ExperimentConfig::default()
    }];
    if let Some((r, u)) = opts.dataset() {
        configs.push(ExperimentConfig {
            runs: 2,
            horizon: 500,
            ..movielens_config(&r, &u)
        });
    }
    for cfg in &configs {
        let render = |workers| -> Result<(String, String)> {
            let r = run_experiment(cfg, workers)?;
            Ok((series_csv(&r), summary_json(&r)?))
        };
        match (render(opts.workers), render(1)) {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => {
                return verdict(10, NAME, false, "outputs differ between re-runs".into())
            }
            (Err(e), _) | (_, Err(e)) => return failed(10, NAME, e),
        }
    }
    verdict(
        10,
        NAME,
        true,
        format!("{} configurations reproduced", configs.len()),
    )
}

pub fn run_all(opts: &AcceptanceOptions) -> Vec<Outcome> {
    vec![
        criterion_1(),
        criterion_2(opts),
        criterion_3(opts),
        criterion_4(opts),
        criterion_5(opts),
        criterion_6(opts),
        criterion_7(opts),
        criterion_8(opts),
        criterion_9(opts),
        criterion_10(opts),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let cum: Vec<f64> = (1..=10_000).map(|t| (t as f64).powf(0.8)).collect();
        assert!((log_log_slope(&cum, 1000, 10_000) - 0.8).abs() < 1e-3);
    }

    #[test]
    fn skipped_without_dataset() {
        let opts = AcceptanceOptions::default();
        assert_eq!(criterion_9(&opts).status, Status::Skipped);
    }
}
