//! Criterion benchmarks for the hot paths: assembling, simulation, static
//! bounding, closed-form solving, model fitting and exhaustive distribution
//! analysis.

use criterion::{criterion_group, criterion_main, Criterion};
use std::collections::BTreeMap;
use std::hint::black_box;
use std::path::PathBuf;
use wattlens_core::device::default_device;
use wattlens_core::hir;
use wattlens_core::machine::{build_cfg, parse_program};
use wattlens_core::model::load_model;
use wattlens_core::parametric::{extract_relations, solve};
use wattlens_core::probabilistic::{distribution_from_json, energy_distribution_exact};
use wattlens_core::profiler::{fit_model, ProfileConfig};
use wattlens_core::simulator::{run, run_stats_only, stats_of, RunConfig, SimInputs};
use wattlens_core::static_analysis::wcec;

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

fn bench_parse(c: &mut Criterion) {
    let text = fixture("fib.eir");
    c.bench_function("parse_fib", |b| {
        b.iter(|| parse_program(black_box(&text)).unwrap())
    });
}

fn bench_simulate(c: &mut Criterion) {
    let program = parse_program(&fixture("fib.eir")).unwrap();
    let inputs = SimInputs::default();
    let config = RunConfig::default();
    c.bench_function("simulate_fib_trace", |b| {
        b.iter(|| run(black_box(&program), &inputs, &config).unwrap())
    });
    c.bench_function("simulate_fib_stats_only", |b| {
        b.iter(|| run_stats_only(black_box(&program), &inputs, &config).unwrap())
    });
}

fn bench_energy(c: &mut Criterion) {
    let program = parse_program(&fixture("mt03_pipeline.eir")).unwrap();
    let model = load_model(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/model.json"
    ))
    .unwrap();
    let trace = run(&program, &SimInputs::default(), &RunConfig::default()).unwrap();
    c.bench_function("model_energy_pipeline", |b| {
        b.iter(|| model.energy(black_box(&stats_of(&trace))).unwrap())
    });
}

fn bench_wcec(c: &mut Criterion) {
    let program = parse_program(&fixture("nested.eir")).unwrap();
    let cfg = build_cfg(&program);
    let model = load_model(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/model.json"
    ))
    .unwrap();
    c.bench_function("wcec_nested", |b| {
        b.iter(|| wcec(black_box(&program), &cfg, &model, 1).unwrap())
    });
}

fn bench_parametric(c: &mut Criterion) {
    let model = load_model(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/model.json"
    ))
    .unwrap();
    let hir_prog = hir::parse_hir(&fixture("matmul.hir")).unwrap();
    let sizes: BTreeMap<String, u64> = [("n".to_string(), 8u64)].into_iter().collect();
    let (program, table) = hir::compile(&hir_prog, &sizes).unwrap();
    let costs = hir::lift_model(&model, &program, &table).unwrap();
    c.bench_function("solve_matmul_closed_form", |b| {
        b.iter(|| {
            let relations = extract_relations(black_box(&hir_prog), &costs).unwrap();
            solve(&relations).unwrap()
        })
    });
}

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("profiler");
    group.sample_size(10);
    group.bench_function("fit_model_stock_device", |b| {
        b.iter(|| {
            let mut dev = default_device(42);
            fit_model(&mut dev, &ProfileConfig::default()).unwrap()
        })
    });
    group.finish();
}

fn bench_distribution(c: &mut Criterion) {
    let program = parse_program(&fixture("absdiff.eir")).unwrap();
    let model = load_model(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/model.json"
    ))
    .unwrap();
    let dist = distribution_from_json(&fixture("dist_absdiff.json")).unwrap();
    let mut group = c.benchmark_group("probabilistic");
    group.sample_size(20);
    group.bench_function("exact_distribution_256_inputs", |b| {
        b.iter(|| {
            energy_distribution_exact(
                black_box(&program),
                &model,
                &dist,
                &RunConfig::default(),
                100_000,
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_parse,
    bench_simulate,
    bench_energy,
    bench_wcec,
    bench_parametric,
    bench_fit,
    bench_distribution
);
criterion_main!(benches);
