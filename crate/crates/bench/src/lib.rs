//! Criterion benchmarks for scoring and search.

use std::hint::black_box;

use bmdl_core::search::Scorer;
use bmdl_core::simulate::{simulate_series, Scenario};
use bmdl_core::{fit, ChangepointConfig, Hyperparams, Metadata, Objective, SearchOptions, SeriesData};
use criterion::{BenchmarkId, Criterion};

/// A draw from the monthly VAR(3) scenario with shift size 1.5 sigma.
pub fn monthly_series(n: usize) -> SeriesData {
    let mut s = Scenario::monthly_var3(1.5);
    s.n = n;
    s.metadata.clear();
    for c in &mut s.components {
        c.changepoints = c.changepoints.iter().map(|t| t * n / 600).collect();
    }
    simulate_series(&s, 42).expect("valid scenario")
}

fn truth(data: &SeriesData) -> ChangepointConfig {
    let n = data.len();
    let scale = |v: &[usize]| v.iter().map(|t| t * n / 600).collect::<Vec<_>>();
    let times = [scale(&[150, 300, 450]), scale(&[150, 300, 375])];
    ChangepointConfig::from_component_times(times[..data.components()].to_vec(), n, data.ar_order())
        .expect("valid times")
}

pub fn scoring(c: &mut Criterion) {
    let hp = Hyperparams::default();
    let meta = Metadata::none();
    let mut group = c.benchmark_group("score");
    for n in [300usize, 600, 1368] {
        let bi = monthly_series(n);
        let uni = bi.component(0).expect("component");
        for objective in Objective::ALL {
            let scorer = Scorer::new(&uni, &meta, &hp, objective).expect("scorer");
            let config = truth(&uni);
            group.bench_with_input(
                BenchmarkId::new(format!("univariate_{objective}"), n),
                &config,
                |b, cfg| b.iter(|| scorer.score(black_box(cfg)).expect("score")),
            );
        }
        let scorer = Scorer::new(&bi, &meta, &hp, Objective::Bmdl).expect("scorer");
        let config = truth(&bi);
        group.bench_with_input(BenchmarkId::new("bivariate_bmdl", n), &config, |b, cfg| {
            b.iter(|| scorer.score(black_box(cfg)).expect("score"))
        });
    }
    group.finish();
}

pub fn search(c: &mut Criterion) {
    let hp = Hyperparams::default();
    let meta = Metadata::new([75, 150, 250, 550], 600, 3).expect("metadata");
    let bi = monthly_series(600);
    let uni = bi.component(0).expect("component");
    let opts = SearchOptions {
        iterations: 2000,
        trace_every: 0,
        ..SearchOptions::default()
    };
    let mut group = c.benchmark_group("fit_2000_iterations");
    group.sample_size(10);
    group.bench_function("univariate", |b| {
        b.iter(|| fit(black_box(&uni), &meta, &hp, &opts).expect("fit"))
    });
    group.bench_function("bivariate", |b| {
        b.iter(|| fit(black_box(&bi), &meta, &hp, &opts).expect("fit"))
    });
    group.finish();
}
