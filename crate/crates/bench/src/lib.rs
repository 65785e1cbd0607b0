//! Workloads shared by the benchmarks.

use mcac_core::{ContextVector, FileId, Request, ServiceType, SlotContext, UserContext};
use rand::Rng;

/// A slot of `users` users with uniform two-dimensional contexts.
pub fn random_slot(rng: &mut impl Rng, users: usize) -> SlotContext {
    SlotContext::new(
        (0..users)
            .map(|_| UserContext {
                context: ContextVector::new(vec![rng.gen(), rng.gen()]).unwrap(),
                service: ServiceType(rng.gen_range(1..=2)),
            })
            .collect(),
    )
}

/// One request per user for a file drawn from `0..library`.
pub fn random_requests(rng: &mut impl Rng, users: usize, library: usize) -> Vec<Vec<Request>> {
    (0..users)
        .map(|_| {
            vec![Request::plain(
                FileId(rng.gen_range(0..library as u32)),
                1.0,
            )]
        })
        .collect()
}
