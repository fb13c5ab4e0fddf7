use budgetrag_core::embedding::{embed_hashing, Embedding};
use budgetrag_core::metrics::{auroc, delong_test, ScoredCohort};
use budgetrag_core::vindex::{ChunkRef, VectorIndex};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if let Some(e) = Embedding::normalize(v) {
            return e;
        }
    }
}

fn bench_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("search_top64");
    for &n in &[1_000usize, 10_000, 50_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut index = VectorIndex::new(256, "bench");
        for i in 0..n {
            index.add(ChunkRef::new(format!("p{}", i / 40), (i % 40) as u32), &random_unit(&mut rng, 256)).unwrap();
        }
        let q = random_unit(&mut rng, 256);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| index.search(black_box(&q), 64, None).unwrap())
        });
    }
    group.finish();
}

fn bench_embed(c: &mut Criterion) {
    let text = "patient tolerated procedure well vitals stable afebrile ".repeat(73);
    c.bench_function("embed_hashing_512_words", |b| b.iter(|| embed_hashing(black_box(&text), 256)));
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 2_000;
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
    let a: Vec<f64> = labels.iter().map(|&l| f64::from(l) * 0.3 + rng.random::<f64>()).collect();
    let b: Vec<f64> = labels.iter().map(|&l| f64::from(l) * 0.2 + rng.random::<f64>()).collect();
    let ca = ScoredCohort::new(labels.clone(), a).unwrap();
    let cb = ScoredCohort::new(labels, b).unwrap();
    c.bench_function("auroc_2000", |bch| bch.iter(|| auroc(black_box(&ca)).unwrap()));
    c.bench_function("delong_2000", |bch| bch.iter(|| delong_test(black_box(&ca), black_box(&cb)).unwrap()));
}

criterion_group!(benches, bench_search, bench_embed, bench_metrics);
criterion_main!(benches);
