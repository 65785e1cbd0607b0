use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mcac_bench::{random_requests, random_slot};
use mcac_core::decision::top_k;
use mcac_core::env::{ServiceAssignment, SimConfig, Simulator, TraceEnv, TraceModel, TraceRequest};
use mcac_core::{
    CacheDecision, CachePolicy, Feedback, FeedbackRow, FileId, Mcac, McacConfig, WeightConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LIBRARY: usize = 3952;

fn config(m: usize) -> McacConfig {
    McacConfig {
        library_size: LIBRARY,
        cache_size: m,
        dim: 2,
        horizon: 8760,
        alpha: 1.0,
        control_scale: McacConfig::reduced_control_scale(LIBRARY, 2),
        h_override: None,
        r_max: 1.0,
        seed: 1,
    }
}

/// An m-CAC instance that has seen every file in every cell.
fn trained(m: usize) -> Mcac {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mcac = Mcac::new(config(m), WeightConfig::uniform()).unwrap();
    for t in 1..=200u64 {
        let slot = random_slot(&mut rng, 100);
        let d = CacheDecision::exploit(
            (0..m as u32)
                .map(|i| FileId((i + t as u32 * m as u32) % LIBRARY as u32))
                .collect(),
        )
        .unwrap();
        let rows = slot
            .users
            .iter()
            .map(|u| FeedbackRow {
                user: u.clone(),
                hits: (0..m).map(|_| rng.gen_range(0..2) as f64).collect(),
                values: vec![0.0; m],
                mask: vec![true; m],
                placed: true,
            })
            .map(|mut r| {
                r.values = r.hits.clone();
                r
            })
            .collect();
        mcac.learn(
            t,
            &d,
            &Feedback {
                rows,
                overheard: Vec::new(),
            },
        )
        .unwrap();
    }
    mcac
}

fn bench_place(c: &mut Criterion) {
    let mut group = c.benchmark_group("mcac_place");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for users in [10, 100, 500] {
        let slot = random_slot(&mut rng, users);
        let mut mcac = trained(200);
        group.bench_with_input(BenchmarkId::from_parameter(users), &slot, |b, slot| {
            b.iter(|| mcac.place(5000, black_box(slot), None).unwrap())
        });
    }
    group.finish();
}

fn bench_top_k(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let score: Vec<f64> = (0..LIBRARY).map(|_| rng.gen()).collect();
    c.bench_function("top_k_200_of_3952", |b| {
        b.iter(|| top_k((0..LIBRARY as u32).map(FileId), black_box(&score), 200))
    });
}

fn bench_trace_run(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let slots = (0..500)
        .map(|_| {
            let slot = random_slot(&mut rng, 100);
            let reqs = random_requests(&mut rng, 100, LIBRARY);
            slot.users
                .into_iter()
                .zip(reqs)
                .enumerate()
                .map(|(i, (u, r))| TraceRequest {
                    user_id: i as u32,
                    context: u.context,
                    file: r[0].file,
                    rating: 3,
                    arrival: 0.5,
                })
                .collect()
        })
        .collect();
    let trace = std::sync::Arc::new(TraceModel {
        library_size: LIBRARY,
        slots,
    });
    c.bench_function("mcac_trace_500_slots", |b| {
        b.iter(|| {
            let mut env = TraceEnv::new(trace.clone(), ServiceAssignment::NONE, false);
            let mut mcac = Mcac::new(config(200), WeightConfig::uniform()).unwrap();
            Simulator::new(SimConfig::default())
                .unwrap()
                .run(&mut env, &mut mcac)
                .unwrap()
        })
    });
}

criterion_group!(benches, bench_place, bench_top_k, bench_trace_run);
criterion_main!(benches);
