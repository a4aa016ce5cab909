//! Compares the data-parallel search paths against sequential execution on
//! the same seeded workloads. With the default `parallel` feature the rayon
//! pool is pinned to one thread for the sequential baselines, so both sides
//! run identical code and produce identical results.
//!
//! Run with `cargo bench -p rgmm`, or
//! `cargo bench -p rgmm --no-default-features` for the purely sequential
//! build.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use rgmm::covariance::RegularizationMethod;
use rgmm::datagen::{generate, DatasetSpec};
use rgmm::exec;
use rgmm::gmm::FitConfig;
use rgmm::search::{hgs, multi_start, stream_rng, GmmDomain, SearchConfig, SearchDomain};

fn bench_dataset() -> nalgebra::DMatrix<f64> {
    let spec = DatasetSpec {
        k: 3,
        d: 5,
        c: 0.21,
        n: Some(300),
        eig_range: (1.0, 200.0),
        seed: 42,
    };
    generate(&spec).expect("benchmark dataset generates").0
}

fn restart_workload(c: &mut Criterion) {
    let data = bench_dataset();
    let domain = GmmDomain {
        data: &data,
        k: 3,
        method: RegularizationMethod::shrunk_default(),
        fit: FitConfig::default(),
    };
    let restarts = 8;
    let fit_one = |i: usize| {
        let mut rng = stream_rng(7, i as u64);
        let init = domain.init_random(&mut rng).expect("init");
        domain.local_search(init).expect("fit").fitness()
    };

    let mut group = c.benchmark_group("em_restarts");
    group.bench_function("map_indexed", |b| {
        b.iter(|| black_box(exec::map_indexed(restarts, fit_one)))
    });
    group.bench_function("map_indexed_seq", |b| {
        b.iter(|| black_box(exec::map_indexed_seq(restarts, fit_one)))
    });
    group.finish();
}

fn strategy_workload(c: &mut Criterion) {
    let data = bench_dataset();
    let domain = GmmDomain {
        data: &data,
        k: 3,
        method: RegularizationMethod::shrunk_default(),
        fit: FitConfig::default(),
    };
    let ms_config = SearchConfig {
        n_it: 8,
        seed: 11,
        ..SearchConfig::default()
    };
    let hgs_config = SearchConfig {
        n_it: 5,
        pi_min: 4,
        pi_max: 8,
        seed: 11,
    };

    let mut group = c.benchmark_group("strategies");

    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool");
        group.bench_function("multi_start/parallel", |b| {
            b.iter(|| black_box(multi_start(&domain, &ms_config).unwrap().fitness()))
        });
        group.bench_function("multi_start/single_thread", |b| {
            b.iter(|| {
                pool.install(|| black_box(multi_start(&domain, &ms_config).unwrap().fitness()))
            })
        });
        group.bench_function("hgs/parallel", |b| {
            b.iter(|| black_box(hgs(&domain, &hgs_config).unwrap().fitness()))
        });
        group.bench_function("hgs/single_thread", |b| {
            b.iter(|| pool.install(|| black_box(hgs(&domain, &hgs_config).unwrap().fitness())))
        });
    }

    #[cfg(not(feature = "parallel"))]
    {
        group.bench_function("multi_start/sequential", |b| {
            b.iter(|| black_box(multi_start(&domain, &ms_config).unwrap().fitness()))
        });
        group.bench_function("hgs/sequential", |b| {
            b.iter(|| black_box(hgs(&domain, &hgs_config).unwrap().fitness()))
        });
    }

    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default()
        .sample_size(10)
        .measurement_time(Duration::from_secs(5))
        .warm_up_time(Duration::from_secs(1));
    targets = restart_workload, strategy_workload
}
criterion_main!(benches);
