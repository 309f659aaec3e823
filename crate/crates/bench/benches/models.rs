use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use orsm_bench::{corpus, model};
use orsm_core::eval::{document_features, retrieval_eval};
use orsm_core::orsm::{self, DEFAULT_MF_ITERS, DEFAULT_MF_TOL};
use orsm_core::partition::ais_log_z;
use orsm_core::rng::seeded;
use orsm_core::rsm::cd_k_update;
use orsm_core::{AisConfig, Document, InferenceMode, TrainHyper};

fn inference(c: &mut Criterion) {
    let corpus = corpus(64, 2000);
    let m = model(&corpus, 128, 100);
    let v = corpus.documents[0].dense(2000);
    let n = corpus.documents[0].len() as f64;
    c.bench_function("fast_infer F=128 K=2000", |b| {
        b.iter(|| orsm::fast_infer(&m, black_box(&v), n).unwrap())
    });
    c.bench_function("mean_field F=128 K=2000", |b| {
        b.iter(|| orsm::mean_field_infer(&m, black_box(&v), DEFAULT_MF_ITERS, DEFAULT_MF_TOL).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let corpus = corpus(128, 2000);
    let m = model(&corpus, 128, 100);
    let batch: Vec<&Document> = corpus.documents.iter().collect();
    let hyper = TrainHyper::default();
    let mut rng = seeded(3);
    c.bench_function("cd1 minibatch 128 F=128 K=2000", |b| {
        b.iter_batched(
            || m.params.clone(),
            |mut p| cd_k_update(&mut p, &batch, 1, &hyper, 0, 100, &mut rng).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn partition(c: &mut Criterion) {
    let corpus = corpus(8, 200);
    let m = model(&corpus, 32, 20);
    let cfg = AisConfig::uniform(100, 16, 1);
    let mut rng = seeded(4);
    c.bench_function("ais 100 betas x 16 chains F=32 K=200", |b| {
        b.iter(|| ais_log_z(&m.params, m.softmaxes(), 50, &cfg, &mut rng).unwrap())
    });
}

fn retrieval(c: &mut Criterion) {
    let corpus = corpus(600, 500);
    let m = model(&corpus, 32, 0);
    let docs: Vec<&Document> = corpus.documents.iter().collect();
    let (db, q) = docs.split_at(500);
    let db_f = document_features(&m, db, InferenceMode::Fast).unwrap();
    let q_f = document_features(&m, q, InferenceMode::Fast).unwrap();
    let labels = |d: &[&Document]| d.iter().map(|x| x.labels.clone()).collect::<Vec<_>>();
    let (db_l, q_l) = (labels(db), labels(q));
    let lengths: Vec<u32> = q.iter().map(|d| d.len()).collect();
    c.bench_function("retrieval 100 queries x 500 docs", |b| {
        b.iter(|| retrieval_eval(&db_f, &db_l, &q_f, &q_l, &lengths).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = inference, training, partition, retrieval
}
criterion_main!(benches);
