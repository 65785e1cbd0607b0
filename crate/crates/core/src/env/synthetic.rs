//! Stationary synthetic demand with known, Lipschitz expected-demand functions.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::{Environment, SlotDraw};
use crate::context::ContextVector;
use crate::decision::{top_k, CacheDecision};
use crate::error::{Error, Result};
use crate::policy::{CachePolicy, Feedback};
use crate::types::{FileId, Request, ServiceType, SlotContext, UserContext};
use crate::weights::WeightConfig;

/// Raised-cosine bell `a * (1 + cos(pi * |x - c| / r)) / 2` inside radius `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    fn eval(&self, x: &[f64]) -> f64 {
        let d = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if d >= self.radius {
            0.0
        } else {
            self.amplitude * 0.5 * (1.0 + (std::f64::consts::PI * d / self.radius).cos())
        }
    }

    /// Largest slope of the bell along any direction.
    fn lipschitz(&self) -> f64 {
        self.amplitude * std::f64::consts::PI / (2.0 * self.radius)
    }
}

/// `base + sum of bumps`, valued in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandFunction {
    pub base: f64,
    pub bumps: Vec<Bump>,
}

impl DemandFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.base + self.bumps.iter().map(|b| b.eval(x)).sum::<f64>()).clamp(0.0, 1.0)
    }

    pub fn lipschitz(&self) -> f64 {
        self.bumps.iter().map(Bump::lipschitz).sum()
    }

    fn random(rng: &mut impl Rng, dim: usize, bumps: usize, base_range: (f64, f64)) -> Self {
        let base = rng.gen_range(base_range.0..=base_range.1);
        let mut bumps: Vec<Bump> = (0..bumps)
            .map(|_| Bump {
                center: (0..dim).map(|_| rng.gen::<f64>()).collect(),
                radius: rng.gen_range(0.25..0.6),
                amplitude: rng.gen_range(0.2..0.8),
            })
            .collect();
        let total: f64 = bumps.iter().map(|b| b.amplitude).sum();
        let room = 1.0 - base;
        if total > room {
            for b in &mut bumps {
                b.amplitude *= room / total;
            }
        }
        Self { base, bumps }
    }

    fn scaled(mut self, factor: f64) -> Self {
        for b in &mut self.bumps {
            b.amplitude *= factor;
        }
        self
    }
}

/// Users joining or leaving around the placement instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChurnModel {
    /// Probability that a placed user disconnects before requesting.
    pub leave_probability: f64,
    /// Mean number of users connecting after placement.
    pub late_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub dim: usize,
    pub library_size: usize,
    pub users_max: usize,
    /// Largest number of requests one user makes for one file in a slot.
    pub r_max: u32,
    pub horizon: u64,
    /// Hölder exponent guaranteed for the demand functions, in `(0, 1]`.
    pub alpha: f64,
    /// Upper bound enforced on the Lipschitz constant of `mu_f`, if any.
    pub lipschitz: Option<f64>,
    pub bumps_per_file: usize,
    /// Fraction of users of the prioritized service type 1 (others are type 2).
    pub priority_fraction: f64,
    /// Demands are weighted by a 1..=5 star rating when set.
    pub rated: bool,
    pub churn: ChurnModel,
}

impl SyntheticParams {
    pub fn new(dim: usize, library_size: usize, users_max: usize, horizon: u64) -> Self {
        Self {
            dim,
            library_size,
            users_max,
            r_max: 1,
            horizon,
            alpha: 1.0,
            lipschitz: None,
            bumps_per_file: 2,
            priority_fraction: 0.0,
            rated: false,
            churn: ChurnModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.library_size == 0 || self.users_max == 0 || self.r_max == 0 {
            return Err(Error::Config(
                "synthetic dimension, library, users_max and r_max must be positive".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "synthetic demand functions support alpha in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.priority_fraction) {
            return Err(Error::Config("priority fraction outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.churn.leave_probability) || self.churn.late_rate < 0.0 {
            return Err(Error::Config("invalid churn parameters".into()));
        }
        Ok(())
    }
}

pub const MAX_RATING: f64 = 5.0;

/// Known expected demands `mu_f(x) = R_max * g_f(x)` and, when rated,
/// mean ratings `rho_f(x) = 1 + 4 * h_f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub params: SyntheticParams,
    pub demand: Vec<DemandFunction>,
    pub rating: Option<Vec<DemandFunction>>,
}

impl SyntheticModel {
    pub fn generate(params: SyntheticParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut demand: Vec<DemandFunction> = (0..params.library_size)
            .map(|_| {
                DemandFunction::random(&mut rng, params.dim, params.bumps_per_file, (0.0, 0.15))
            })
            .collect();
        if let Some(l) = params.lipschitz {
            if !(l > 0.0) {
                return Err(Error::Config("lipschitz bound must be positive".into()));
            }
            let r = params.r_max as f64;
            demand = demand
                .into_iter()
                .map(|g| {
                    let lf = r * g.lipschitz();
                    if lf > l {
                        g.scaled(l / lf)
                    } else {
                        g
                    }
                })
                .collect();
        }
        let rating = params.rated.then(|| {
            (0..params.library_size)
                .map(|_| {
                    DemandFunction::random(&mut rng, params.dim, params.bumps_per_file, (0.2, 0.5))
                })
                .collect()
        });
        Ok(Self {
            params,
            demand,
            rating,
        })
    }

    pub fn mu(&self, f: FileId, x: &[f64]) -> f64 {
        self.params.r_max as f64 * self.demand[f.index()].eval(x)
    }

    pub fn mean_rating(&self, f: FileId, x: &[f64]) -> Option<f64> {
        self.rating
            .as_ref()
            .map(|r| 1.0 + (MAX_RATING - 1.0) * r[f.index()].eval(x))
    }

    /// Expected learning value: `mu_f(x)`, times the mean rating when rated.
    pub fn expected(&self, f: FileId, x: &[f64]) -> f64 {
        self.mu(f, x) * self.mean_rating(f, x).unwrap_or(1.0)
    }

    pub fn value_bound(&self) -> f64 {
        self.params.r_max as f64 * if self.params.rated { MAX_RATING } else { 1.0 }
    }

    /// Lipschitz constant of the expected learning values.
    pub fn lipschitz_constant(&self) -> f64 {
        let r = self.params.r_max as f64;
        (0..self.params.library_size)
            .map(|f| {
                let g = &self.demand[f];
                match &self.rating {
                    None => r * g.lipschitz(),
                    // (g * rho)' = g' rho + g rho' with g <= 1, rho <= 5
                    Some(h) => {
                        r * (g.lipschitz() * MAX_RATING + (MAX_RATING - 1.0) * h[f].lipschitz())
                    }
                }
            })
            .fold(0.0, f64::max)
    }

    /// Constant `L` with `|mu(x) - mu(y)| <= L |x - y|^alpha` on `[0,1]^D`.
    pub fn holder_constant(&self) -> f64 {
        let lip = self.lipschitz_constant();
        if self.params.alpha >= 1.0 {
            lip
        } else {
            // Below distance 1 a Lipschitz bound implies the Hölder bound;
            // beyond it the range of the function does.
            lip.max(self.value_bound())
        }
    }
}

/// Environment drawing i.i.d. users and demands from a [`SyntheticModel`].
pub struct SyntheticEnv {
    model: Arc<SyntheticModel>,
    rng: ChaCha8Rng,
}

impl SyntheticEnv {
    pub fn new(model: Arc<SyntheticModel>, seed: u64) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn model(&self) -> &Arc<SyntheticModel> {
        &self.model
    }

    fn user(&mut self) -> UserContext {
        let p = &self.model.params;
        let coords = (0..p.dim).map(|_| self.rng.gen::<f64>()).collect();
        let service = if self.rng.gen::<f64>() < p.priority_fraction {
            ServiceType(1)
        } else {
            ServiceType(2)
        };
        UserContext {
            context: ContextVector::new(coords).expect("unit cube sample"),
            service,
        }
    }

    fn requests(&mut self, x: &[f64]) -> Vec<Request> {
        let model = Arc::clone(&self.model);
        let r_max = model.params.r_max as u64;
        let mut out = Vec::new();
        for f in 0..model.params.library_size {
            let f = FileId(f as u32);
            let p = model.demand[f.index()].eval(x);
            let count = Binomial::new(r_max, p)
                .expect("probability in [0, 1]")
                .sample(&mut self.rng);
            let rating = model.mean_rating(f, x).map(|rho| {
                let trials = Binomial::new(4, (rho - 1.0) / 4.0).expect("probability in [0, 1]");
                1.0 + trials.sample(&mut self.rng) as f64
            });
            let arrival = self.rng.gen::<f64>();
            if count > 0 {
                let count = count as f64;
                out.push(Request {
                    file: f,
                    count,
                    value: count * rating.unwrap_or(1.0),
                    arrival,
                });
            }
        }
        out
    }
}

impl Environment for SyntheticEnv {
    fn library_size(&self) -> usize {
        self.model.params.library_size
    }

    fn horizon(&self) -> u64 {
        self.model.params.horizon
    }

    fn value_bound(&self) -> f64 {
        self.model.value_bound()
    }

    fn draw(&mut self, _t: u64) -> Result<SlotDraw> {
        let p = self.model.params.clone();
        let u = self.rng.gen_range(1..=p.users_max);
        let users: Vec<UserContext> = (0..u).map(|_| self.user()).collect();
        let mut requests = Vec::with_capacity(u);
        let mut departed = Vec::with_capacity(u);
        for user in &users {
            let reqs = self.requests(user.context.coords());
            let gone = p.churn.leave_probability > 0.0
                && self.rng.gen::<f64>() < p.churn.leave_probability;
            departed.push(gone);
            requests.push(if gone { Vec::new() } else { reqs });
        }
        let mut late = Vec::new();
        if p.churn.late_rate > 0.0 {
            let n = rand_distr::Poisson::new(p.churn.late_rate)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(&mut self.rng) as usize;
            for _ in 0..n {
                let user = self.user();
                let reqs = self.requests(user.context.coords());
                late.push((user, reqs));
            }
        }
        Ok(SlotDraw {
            slot: SlotContext::new(users),
            requests,
            departed,
            late,
        })
    }

    fn expected_value(&self, f: FileId, x: &ContextVector) -> Option<f64> {
        Some(self.model.expected(f, x.coords()))
    }

    fn knows_expected_values(&self) -> bool {
        true
    }
}

/// Caches the top-m files by true expected weighted demand.
pub struct ExpectedOracle {
    model: Arc<SyntheticModel>,
    m: usize,
    weights: WeightConfig,
}

impl ExpectedOracle {
    pub fn new(model: Arc<SyntheticModel>, m: usize, weights: WeightConfig) -> Result<Self> {
        if m == 0 || m > model.params.library_size {
            return Err(Error::Config(format!("cache size {m} outside library")));
        }
        Ok(Self { model, m, weights })
    }
}

impl CachePolicy for ExpectedOracle {
    fn name(&self) -> &str {
        "expected_oracle"
    }

    fn cache_size(&self) -> usize {
        self.m
    }

    fn place(
        &mut self,
        _t: u64,
        slot: &SlotContext,
        _lookahead: Option<&[Vec<Request>]>,
    ) -> Result<CacheDecision> {
        let n = self.model.params.library_size;
        let score: Vec<f64> = (0..n as u32)
            .map(FileId)
            .map(|f| {
                self.weights.file(f)
                    * slot
                        .users
                        .iter()
                        .map(|u| {
                            self.weights.service(u.service)
                                * self.model.expected(f, u.context.coords())
                        })
                        .sum::<f64>()
            })
            .collect();
        CacheDecision::exploit(top_k((0..n as u32).map(FileId), &score, self.m))
    }

    fn learn(&mut self, _t: u64, _d: &CacheDecision, _f: &Feedback) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(rated: bool) -> SyntheticModel {
        let mut p = SyntheticParams::new(2, 8, 4, 100);
        p.r_max = 3;
        p.rated = rated;
        SyntheticModel::generate(p, 5).unwrap()
    }

    #[test]
    fn demands_stay_in_range() {
        let m = model(true);
        let mut env = SyntheticEnv::new(Arc::new(m.clone()), 1);
        for t in 1..200 {
            let d = env.draw(t).unwrap();
            assert!((1..=4).contains(&d.slot.len()));
            for r in d.requests.iter().flatten() {
                assert!(r.count >= 1.0 && r.count <= 3.0);
                assert!(r.value <= m.value_bound());
                assert!((0.0..1.0).contains(&r.arrival));
            }
        }
    }

    #[test]
    fn holder_condition_holds_on_samples() {
        for rated in [false, true] {
            for alpha in [1.0, 0.5] {
                let mut p = SyntheticParams::new(2, 6, 3, 100);
                p.rated = rated;
                p.alpha = alpha;
                p.r_max = 2;
                let m = SyntheticModel::generate(p, 17).unwrap();
                let l = m.holder_constant();
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                for _ in 0..20_000 {
                    let x: Vec<f64> = (0..2).map(|_| rng.gen()).collect();
                    let y: Vec<f64> = if rng.gen::<bool>() {
                        x.iter()
                            .map(|c| (c + rng.gen_range(-0.02..0.02f64)).clamp(0.0, 1.0))
                            .collect()
                    } else {
                        (0..2).map(|_| rng.gen()).collect()
                    };
                    let d = x
                        .iter()
                        .zip(&y)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    for f in 0..6 {
                        let f = FileId(f);
                        let diff = (m.expected(f, &x) - m.expected(f, &y)).abs();
                        assert!(
                            diff <= l * d.powf(alpha) + 1e-12,
                            "diff {diff} bound {}",
                            l * d.powf(alpha)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn lipschitz_bound_is_enforced() {
        let mut p = SyntheticParams::new(2, 10, 3, 100);
        p.lipschitz = Some(0.5);
        let m = SyntheticModel::generate(p, 2).unwrap();
        assert!(m.lipschitz_constant() <= 0.5 + 1e-12);
    }

    #[test]
    fn churn_marks_leavers_and_adds_joiners() {
        let mut p = SyntheticParams::new(1, 5, 5, 100);
        p.churn = ChurnModel {
            leave_probability: 0.5,
            late_rate: 2.0,
        };
        let mut env = SyntheticEnv::new(Arc::new(SyntheticModel::generate(p, 1).unwrap()), 4);
        let (mut left, mut joined) = (0, 0);
        for t in 1..300 {
            let d = env.draw(t).unwrap();
            for (gone, reqs) in d.departed.iter().zip(&d.requests) {
                if *gone {
                    left += 1;
                    assert!(reqs.is_empty());
                }
            }
            joined += d.late.len();
        }
        assert!(left > 0 && joined > 0);
    }

    #[test]
    fn rejects_alpha_above_one() {
        let mut p = SyntheticParams::new(2, 4, 2, 10);
        p.alpha = 1.5;
        assert!(SyntheticModel::generate(p, 0).is_err());
    }
}
