mod common;

use std::collections::BTreeSet;

use common::*;
use forge_core::compress::{compress, CompressConfig};
use forge_core::cooc::build_cooc_graph;
use forge_core::hierarchy::{export_slice, mutual_knn, AbstractionTree};
use forge_core::ids::{FeatureId, Granularity};
use forge_core::mechanism::{
    build_dynamic_graph, compute_static_prior, compute_support_matrices, nnls, DynamicConfig,
    MechStores, NnlsOptions,
};
use forge_core::presence::{lift_presence, PresenceMatrix};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_presence(r: &mut ChaCha8Rng, units: usize, n: usize) -> Vec<Vec<bool>> {
    let p = r.random_range(0.05..0.6);
    (0..units)
        .map(|_| (0..n).map(|_| r.random_bool(p)).collect())
        .collect()
}

/// f32-representable activations, mostly zero.
fn random_acts(
    r: &mut ChaCha8Rng,
    tokens: usize,
    f: usize,
    density: f64,
    signed: bool,
) -> Vec<Vec<f64>> {
    (0..tokens)
        .map(|_| {
            (0..f)
                .map(|_| {
                    if r.random_bool(density) {
                        let v: f64 = if signed {
                            r.random_range(-1.0..2.0)
                        } else {
                            r.random_range(0.01..2.0)
                        };
                        v as f32 as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cooc_matches_oracle(seed in any::<u64>(), units in 1usize..=40, n in 1usize..=15, top_k in 1usize..=6) {
        let mut r = rng(seed);
        let dense = random_presence(&mut r, units, n);
        let features: Vec<FeatureId> = (0..n as u32).map(FeatureId::src).collect();
        let x = PresenceMatrix::from_dense(Granularity::Sentence, features.clone(), &dense);
        let g = build_cooc_graph(&x, top_k).unwrap();
        let o = cooc_oracle(&dense, n, top_k);
        prop_assert_eq!(g.edges.len(), o.edges.len());
        for e in &g.edges {
            let key = (e.source.index as usize, e.target.index as usize);
            let &(c, j, ra, rb) = o.edges.get(&key).expect("edge in oracle");
            prop_assert_eq!(e.count, c);
            prop_assert_eq!(e.jaccard, j);
            prop_assert_eq!((e.rank_source, e.rank_target), (ra, rb));
            prop_assert!((0.0..=1.0).contains(&e.jaccard));
            prop_assert!(e.source < e.target);
        }
        for node in &g.nodes {
            prop_assert_eq!(node.count, o.counts[node.id.index as usize][node.id.index as usize]);
        }
    }

    #[test]
    fn lift_is_monotone_or(seed in any::<u64>()) {
        let mut r = rng(seed);
        let shape = random_shape(&mut r, 3);
        let c = corpus(&shape, 2);
        let n = r.random_range(1..10);
        let dense = random_presence(&mut r, c.num_sentences(), n);
        let x = PresenceMatrix::from_dense(Granularity::Sentence, (0..n as u32).map(FeatureId::src).collect(), &dense);
        for g in Granularity::ALL {
            let lifted = lift_presence(&x, &c, g);
            for u in 0..c.num_units(g) {
                for col in 0..n {
                    let any = c.unit_sentences(g, u).into_iter().any(|s| dense[s][col]);
                    prop_assert_eq!(lifted.is_present(u, col), any);
                }
            }
            for s in 0..c.num_sentences() {
                let u = c.sentence_unit(s, g);
                for col in 0..n {
                    prop_assert!(!dense[s][col] || lifted.is_present(u, col));
                }
            }
        }
    }

    #[test]
    fn dynamic_graph_matches_five_loop_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (d, k, f) = (r.random_range(2..=32), r.random_range(1..=8), r.random_range(1..=16));
        let s = DenseStack::random(&mut r, d, f, k);
        let stack = s.sparse(&mut r);
        let shape = random_shape(&mut r, 2);
        let c = corpus(&shape, 3);
        let tokens = c.num_sentences() * 3;
        let src = random_acts(&mut r, tokens, f, 0.3, false);
        let tgt = random_acts(&mut r, tokens, f, 0.3, false);
        let lat = random_acts(&mut r, tokens, k, 0.5, true);
        let mask: Vec<bool> = (0..tokens).map(|t| t % 3 == 0 && r.random_bool(0.5)).collect();
        let (ss, ts, ls) = (
            dense_store("src", &src, mask.clone()),
            dense_store("tgt", &tgt, mask.clone()),
            dense_store("latent", &lat, mask.clone()),
        );
        let stores = MechStores { src: &ss, tgt: &ts, latent: &ls };
        let sup = compute_support_matrices(&stack, 0.0);
        let config = DynamicConfig { edge_cap: None, ..Default::default() };
        let g_level = [Granularity::Sentence, Granularity::Paragraph][r.random_range(0..2)];
        let unit = r.random_range(0..c.num_units(g_level));
        let unit_id = c.unit_id(g_level, unit).to_string();
        let g = build_dynamic_graph(&unit_id, stores, &c, &sup, None, None, &config).unwrap();
        let toks: Vec<usize> = c.unit_tokens(g_level, unit).into_iter().filter(|&t| !mask[t]).collect();
        let o = dynamic_oracle(&s, &src, &tgt, &lat, &toks);
        if let Err(msg) = check_dynamic(&g, &o, config.epsilon) {
            prop_assert!(false, "{}", msg);
        }
        // Static/dynamic consistency.
        let prior = compute_static_prior(&sup, 0.0);
        for e in &g.edges {
            prop_assert!(prior.get(e.source, e.target) > 0.0);
        }
    }

    #[test]
    fn nnls_matches_subset_enumeration(seed in any::<u64>(), m in 1usize..=8, n in 1usize..=5) {
        let mut r = rng(seed);
        let a = gaussian_matrix(&mut r, m, n);
        let b = DVector::from_fn(m, |_, _| r.random_range(-2.0..2.0));
        let sol = nnls(&a, &b, NnlsOptions::default());
        prop_assert!(sol.x.iter().all(|&v| v >= 0.0));
        let res = (&a * &sol.x - &b).norm();
        let best = nnls_bruteforce(&a, &b);
        prop_assert!((res - best).abs() <= 1e-8 * (1.0 + best), "{} vs {}", res, best);
    }

    #[test]
    fn compression_matches_projection_oracle(seed in any::<u64>(), cap in 2usize..=20, n in 2usize..=14) {
        let mut r = rng(seed);
        let mut leaves: Vec<FeatureId> =
            (0..n as u32).flat_map(|i| [FeatureId::src(i), FeatureId::tgt(i)]).collect();
        leaves.sort();
        let shape = random_tree_shape(&mut r, &leaves, 4);
        let tree = AbstractionTree::from_shape(&shape);
        let edges: Vec<_> = (0..r.random_range(0..12))
            .map(|_| {
                let key = (FeatureId::src(r.random_range(0..n as u32)), FeatureId::tgt(r.random_range(0..n as u32)));
                (key, r.random_range(0.01..3.0))
            })
            .collect::<std::collections::BTreeMap<_, _>>()
            .into_iter()
            .map(|((a, b), w)| (a, b, w))
            .collect();
        let p = payload("q", &edges);
        let internal: Vec<usize> = tree.internal_nodes().map(|n| n.id).collect();
        let exclude: BTreeSet<usize> = internal.iter().copied().filter(|_| r.random_bool(0.15)).collect();
        let g = compress(&p, &tree, &CompressConfig { cap, exclude: exclude.clone() }).unwrap();
        if let Err(msg) = check_compression(&p, &g) {
            prop_assert!(false, "{}", msg);
        }
        let o = compress_oracle(&p, &tree, cap, &exclude);
        prop_assert_eq!(g.edges.len(), o.len());
        for e in &g.edges {
            let w = o.get(&(e.source, e.target)).copied().unwrap_or(f64::NAN);
            prop_assert!(rel_close(e.weight, w, 1e-12), "{} vs {}", e.weight, w);
        }
        prop_assert!(g.nodes.iter().filter(|n| n.supernode).all(|n| !exclude.contains(&n.node)));
    }

    #[test]
    fn mutual_knn_matches_bruteforce(seed in any::<u64>(), n in 2usize..=200, k in 1usize..=15, dim in 1usize..=6) {
        let mut r = rng(seed);
        // Coarse grid coordinates so distance ties actually occur.
        let coords: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.random_range(0..6) as f64).collect()).collect();
        let adj = mutual_knn(&coords, k);
        let o = mutual_knn_bruteforce(&coords, k);
        for i in 0..n {
            let got: BTreeSet<usize> = adj[i].iter().copied().collect();
            prop_assert_eq!(&got, &o[i]);
            for &j in &adj[i] {
                prop_assert!(adj[j].contains(&i));
            }
        }
    }

    #[test]
    fn slice_is_monotone(seed in any::<u64>(), n in 2usize..=40) {
        let mut r = rng(seed);
        let leaves: Vec<FeatureId> = (0..n as u32).map(FeatureId::src).collect();
        let tree = AbstractionTree::from_shape(&random_tree_shape(&mut r, &leaves, 4));
        let internal: Vec<usize> = tree.internal_nodes().map(|n| n.id).collect();
        let u: Vec<usize> = internal.iter().copied().filter(|_| r.random_bool(0.3)).collect();
        let mut w = u.clone();
        w.extend(internal.iter().copied().filter(|_| r.random_bool(0.3)));
        let su = export_slice(&tree, &u).unwrap();
        let sw = export_slice(&tree, &w).unwrap();
        let lw: BTreeSet<_> = sw.leaves.iter().collect();
        prop_assert!(su.leaves.iter().all(|f| lw.contains(f)));
    }
}

#[test]
fn zeroing_any_factor_zeroes_the_edge() {
    let mut r = rng(11);
    let (d, k, f) = (12, 3, 6);
    let mut s = DenseStack::random(&mut r, d, f, k);
    let c = corpus(&[vec![vec![1]]], 4);
    let src = random_acts(&mut r, 4, f, 0.8, false);
    let tgt = random_acts(&mut r, 4, f, 0.8, false);
    let lat: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..k).map(|_| r.random_range(0.1f32..1.0) as f64).collect())
        .collect();
    let mask = vec![false; 4];
    let build = |s: &DenseStack,
                 src: &[Vec<f64>],
                 tgt: &[Vec<f64>],
                 lat: &[Vec<f64>],
                 r: &mut ChaCha8Rng| {
        let stack = s.sparse(r);
        let (a, b, l) = (
            dense_store("src", src, mask.clone()),
            dense_store("tgt", tgt, mask.clone()),
            dense_store("latent", lat, mask.clone()),
        );
        let sup = compute_support_matrices(&stack, 0.0);
        build_dynamic_graph(
            "s0",
            MechStores {
                src: &a,
                tgt: &b,
                latent: &l,
            },
            &c,
            &sup,
            None,
            None,
            &DynamicConfig {
                edge_cap: None,
                ..Default::default()
            },
        )
        .unwrap()
    };
    let g = build(&s, &src, &tgt, &lat, &mut r);
    let e = g.edges[0].clone();
    let (a, b, kk) = (
        e.source.index as usize,
        e.target.index as usize,
        e.strongest_latent,
    );

    let mut z = src.clone();
    z.iter_mut().for_each(|row| row[a] = 0.0);
    assert!(build(&s, &z, &tgt, &lat, &mut r)
        .edge(e.source, e.target)
        .is_none());
    let mut z = tgt.clone();
    z.iter_mut().for_each(|row| row[b] = 0.0);
    assert!(build(&s, &src, &z, &lat, &mut r)
        .edge(e.source, e.target)
        .is_none());
    let mut z = lat.clone();
    z.iter_mut().for_each(|row| row[kk] = 0.0);
    assert!(build(&s, &src, &tgt, &z, &mut r)
        .edge(e.source, e.target)
        .is_none_or(|x| x.evidence_for(kk) == 0.0));
    let read = s.read.clone();
    s.read.row_mut(kk).fill(0.0);
    assert!(build(&s, &src, &tgt, &lat, &mut r)
        .edge(e.source, e.target)
        .is_none_or(|x| x.evidence_for(kk) == 0.0));
    s.read = read;
    s.write.column_mut(kk).fill(0.0);
    assert!(build(&s, &src, &tgt, &lat, &mut r)
        .edge(e.source, e.target)
        .is_none_or(|x| x.evidence_for(kk) == 0.0));
}

#[test]
fn nnls_exact_single_column() {
    let mut r = rng(3);
    let a = gaussian_matrix(&mut r, 16, 8);
    let b: DVector<f64> = a.column(5).into_owned();
    let sol = nnls(&a, &b, NnlsOptions::default());
    for (i, &v) in sol.x.iter().enumerate() {
        if i == 5 {
            assert!((v - 1.0).abs() < 1e-6);
        } else {
            assert!(v.abs() < 1e-9);
        }
    }
}
