use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use portal_bench::{memories, registry, reply};
use portal_core::clock::SeededIds;
use portal_core::dialogue::parse_two_tier;
use portal_core::identity::{match_object, Threshold};
use portal_core::memory::rank_by_relevance;
use portal_core::providers::mock::hash_unit_vector;
use portal_core::ritual::light::LightScheme;
use portal_core::brightness_at;

const DIM: usize = 512;

fn bench_match_object(c: &mut Criterion) {
    let mut group = c.benchmark_group("match_object");
    let ids = SeededIds::new(7);
    let threshold = Threshold::new(0.85).unwrap();
    let query = hash_unit_vector("image", b"visitor", DIM);
    for n in [10, 100, 1000] {
        let objects = registry(n, DIM);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &objects, |b, objects| {
            b.iter(|| match_object(black_box(&query), objects, threshold, &ids).unwrap())
        });
    }
    group.finish();
}

fn bench_rank_by_relevance(c: &mut Criterion) {
    let mut group = c.benchmark_group("rank_by_relevance");
    let query = hash_unit_vector("text", b"do you remember me", DIM);
    for n in [50, 500, 5000] {
        let records = memories(n, DIM);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &records, |b, records| {
            b.iter(|| rank_by_relevance(black_box(&query), records, 4).unwrap())
        });
    }
    group.finish();
}

fn bench_parse_two_tier(c: &mut Criterion) {
    let mut group = c.benchmark_group("parse_two_tier");
    for words in [8, 200] {
        let raw = reply(words);
        group.throughput(Throughput::Bytes(raw.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(words), &raw, |b, raw| {
            b.iter(|| parse_two_tier(black_box(raw)).unwrap())
        });
    }
    group.finish();
}

fn bench_brightness(c: &mut Criterion) {
    let pattern = LightScheme::default().conversation;
    c.bench_function("brightness_at/30hz_second", |b| {
        b.iter(|| (0..30).map(|i| brightness_at(black_box(&pattern), f64::from(i) / 30.0)).sum::<f64>())
    });
}

criterion_group!(benches, bench_match_object, bench_rank_by_relevance, bench_parse_two_tier, bench_brightness);
criterion_main!(benches);
