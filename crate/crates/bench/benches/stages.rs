use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use forge_bench::{prepare, Prepared};
use forge_core::client::StubClient;
use forge_core::compress::{compress, CompressConfig};
use forge_core::cooc::build_cooc_graph;
use forge_core::filter::{run_filter, ShortlistConfig};
use forge_core::ids::{Granularity, Site};
use forge_core::mechanism::{
    build_dynamic_graph, compute_support_matrices, nnls, DynamicConfig, MechStores, NnlsOptions,
};
use forge_core::presence::{lift_presence, presence_from_scores, SentenceScores};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stores(p: &Prepared) -> MechStores<'_> {
    MechStores {
        src: p.data.target.store(Site::Src).unwrap(),
        tgt: p.data.target.store(Site::Tgt).unwrap(),
        latent: p.data.target.site("latent").unwrap(),
    }
}

fn benches(c: &mut Criterion) {
    let p = prepare();

    c.bench_function("filter/fixture", |b| {
        b.iter(|| run_filter(black_box(&p.data), &ShortlistConfig::default(), &StubClient).unwrap())
    });

    let corpus = &p.data.target.corpus;
    let scores = SentenceScores::compute(p.data.target.store(Site::Src).unwrap(), corpus).unwrap();
    let thresholds = forge_core::presence::calibrate_from_scores(
        &scores,
        &p.universe.site_features(Site::Src),
        &Default::default(),
    )
    .unwrap();
    let sentences = presence_from_scores(&scores, &thresholds);
    let paragraphs = lift_presence(&sentences, corpus, Granularity::Paragraph);
    for (name, x) in [("sentence", &sentences), ("paragraph", &paragraphs)] {
        c.bench_function(&format!("cooc/{name}"), |b| {
            b.iter(|| build_cooc_graph(black_box(x), 10).unwrap())
        });
    }

    let supports = compute_support_matrices(&p.data.stack, 0.0);
    let unit = p
        .fixture
        .units
        .iter()
        .find(|u| u.starts_with('p'))
        .unwrap()
        .clone();
    c.bench_function("mech/dynamic_paragraph", |b| {
        b.iter(|| {
            build_dynamic_graph(
                black_box(&unit),
                stores(&p),
                corpus,
                &supports,
                Some(&p.universe.features),
                None,
                &DynamicConfig::default(),
            )
            .unwrap()
        })
    });

    let payload = build_dynamic_graph(
        &unit,
        stores(&p),
        corpus,
        &supports,
        Some(&p.universe.features),
        None,
        &DynamicConfig::default(),
    )
    .unwrap();
    c.bench_function("compress/paragraph_cap64", |b| {
        b.iter(|| compress(black_box(&payload), &p.tree, &CompressConfig::default()).unwrap())
    });

    let mut r = ChaCha8Rng::seed_from_u64(1);
    let a = DMatrix::from_fn(64, 32, |_, _| r.random_range(-1.0..1.0));
    let y = DVector::from_fn(64, |_, _| r.random_range(-1.0..1.0));
    c.bench_function("nnls/64x32", |b| {
        b.iter(|| nnls(black_box(&a), black_box(&y), NnlsOptions::default()))
    });
}

criterion_group!(stages, benches);
criterion_main!(stages);
