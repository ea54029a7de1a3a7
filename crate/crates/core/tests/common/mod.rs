//! Builders and brute-force oracles shared by the property and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use forge_core::compress::CompressedGraph;
use forge_core::hierarchy::{AbstractionTree, TreeShape};
use forge_core::ids::{FeatureId, Granularity};
use forge_core::ingest::{
    ActivationEntry, ChapterRecord, CorpusDocument, CorpusStructure, ParagraphRecord,
    SentenceRecord, SparseStack, SubchapterRecord, TokenActivationStore,
};
use forge_core::mechanism::{DynamicMechanismGraph, GateMode, MechEdge};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `shape[c][s][p]` = sentences in paragraph p of subchapter s of chapter c;
/// every sentence spans `tokens_per_sentence` tokens.
pub fn corpus(shape: &[Vec<Vec<usize>>], tokens_per_sentence: usize) -> CorpusStructure {
    let mut doc = CorpusDocument {
        title: "t".into(),
        chapters: vec![],
        subchapters: vec![],
        paragraphs: vec![],
        sentences: vec![],
    };
    let (mut token, mut sc_n, mut p_n) = (0, 0, 0);
    for (c, subs) in shape.iter().enumerate() {
        let ch = format!("ch{c}");
        doc.chapters.push(ChapterRecord {
            id: ch.clone(),
            title: ch.clone(),
        });
        for paras in subs {
            let sc = format!("sc{sc_n}");
            sc_n += 1;
            doc.subchapters.push(SubchapterRecord {
                id: sc.clone(),
                chapter_id: ch.clone(),
                title: sc.clone(),
            });
            for &n in paras {
                let p = format!("p{p_n}");
                p_n += 1;
                doc.paragraphs.push(ParagraphRecord {
                    id: p.clone(),
                    subchapter_id: sc.clone(),
                });
                for _ in 0..n {
                    let id = format!("s{}", doc.sentences.len());
                    doc.sentences.push(SentenceRecord {
                        id,
                        token_span: [token, token + tokens_per_sentence],
                        paragraph_id: p.clone(),
                        subchapter_id: sc.clone(),
                        chapter_id: ch.clone(),
                        text: "x".into(),
                    });
                    token += tokens_per_sentence;
                }
            }
        }
    }
    CorpusStructure::from_document(doc).unwrap()
}

/// A random book shape with 1..=max units at each level.
pub fn random_shape(rng: &mut ChaCha8Rng, max: usize) -> Vec<Vec<Vec<usize>>> {
    (0..rng.random_range(1..=max))
        .map(|_| {
            (0..rng.random_range(1..=max))
                .map(|_| {
                    (0..rng.random_range(1..=max))
                        .map(|_| rng.random_range(1..=max))
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn dense_store(site: &str, dense: &[Vec<f64>], mask: Vec<bool>) -> TokenActivationStore {
    let f = dense.first().map_or(0, Vec::len);
    let entries = dense
        .iter()
        .enumerate()
        .flat_map(|(t, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(move |(i, &v)| ActivationEntry {
                    token: t as u32,
                    feature: i as u32,
                    value: v as f32,
                })
        })
        .collect();
    TokenActivationStore::new(site, dense.len(), f, entries, mask).unwrap()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

// ---------------------------------------------------------------- cooc

pub struct CoocOracle {
    pub counts: Vec<Vec<u64>>,
    /// (a, b) with a < b -> (count, jaccard, rank of b in a's list, rank of a in b's list).
    pub edges: BTreeMap<(usize, usize), (u64, f64, Option<usize>, Option<usize>)>,
}

pub fn cooc_oracle(dense: &[Vec<bool>], n: usize, top_k: usize) -> CoocOracle {
    let mut counts = vec![vec![0u64; n]; n];
    for row in dense {
        for a in 0..n {
            for b in 0..n {
                if row[a] && row[b] {
                    counts[a][b] += 1;
                }
            }
        }
    }
    let j = |a: usize, b: usize| {
        counts[a][b] as f64 / (counts[a][a] + counts[b][b] - counts[a][b]) as f64
    };
    let mut edges = BTreeMap::new();
    for a in 0..n {
        let mut cands: Vec<usize> = (0..n).filter(|&b| b != a && counts[a][b] > 0).collect();
        cands.sort_by(|&x, &y| {
            j(a, y)
                .total_cmp(&j(a, x))
                .then(counts[a][y].cmp(&counts[a][x]))
                .then(x.cmp(&y))
        });
        for (r, &b) in cands.iter().take(top_k).enumerate() {
            let key = (a.min(b), a.max(b));
            let e = edges
                .entry(key)
                .or_insert((counts[a][b], j(a, b), None, None));
            if a < b {
                e.2 = Some(r + 1);
            } else {
                e.3 = Some(r + 1);
            }
        }
    }
    CoocOracle { counts, edges }
}

// ---------------------------------------------------------------- dynamic mechanism

pub struct DenseStack {
    pub d_src: DMatrix<f64>,
    pub e_tgt: DMatrix<f64>,
    pub read: DMatrix<f64>,
    pub write: DMatrix<f64>,
}

impl DenseStack {
    pub fn random(rng: &mut ChaCha8Rng, d: usize, f: usize, k: usize) -> Self {
        Self {
            d_src: gaussian_matrix(rng, d, f),
            e_tgt: gaussian_matrix(rng, f, d),
            read: gaussian_matrix(rng, k, d),
            write: gaussian_matrix(rng, d, k),
        }
    }

    pub fn sparse(&self, rng: &mut ChaCha8Rng) -> SparseStack {
        let (d, f) = self.d_src.shape();
        SparseStack::new(
            gaussian_matrix(rng, f, d),
            self.d_src.clone(),
            self.e_tgt.clone(),
            gaussian_matrix(rng, d, f),
            self.read.clone(),
            self.write.clone(),
        )
        .unwrap()
    }
}

pub type Evidence = BTreeMap<(usize, usize), BTreeMap<usize, f64>>;

/// E[a,b,k] = sum_i g_src(i,a) * max(0, sum_x D[x,a] R[k,x]) * max(0, t_ik) * max(0, sum_x E[b,x] W[x,k]) * g_tgt(i,b)
/// over the given non-special tokens, with positive gates.
pub fn dynamic_oracle(
    s: &DenseStack,
    src: &[Vec<f64>],
    tgt: &[Vec<f64>],
    lat: &[Vec<f64>],
    tokens: &[usize],
) -> Evidence {
    let (d, f) = s.d_src.shape();
    let k_n = s.read.nrows();
    let mut out: Evidence = BTreeMap::new();
    for &i in tokens {
        for a in 0..f {
            for b in 0..f {
                for k in 0..k_n {
                    let (mut av, mut gv) = (0.0, 0.0);
                    for x in 0..d {
                        av += s.d_src[(x, a)] * s.read[(k, x)];
                        gv += s.e_tgt[(b, x)] * s.write[(x, k)];
                    }
                    let gs = if src[i][a] > 0.0 { 1.0 } else { 0.0 };
                    let gt = if tgt[i][b] > 0.0 { 1.0 } else { 0.0 };
                    let e = gs * av.max(0.0) * lat[i][k].max(0.0) * gv.max(0.0) * gt;
                    if e > 0.0 {
                        *out.entry((a, b)).or_default().entry(k).or_insert(0.0) += e;
                    }
                }
            }
        }
    }
    out
}

pub fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * x.abs().max(y.abs())
}

/// Compares a dynamic graph against oracle evidence; returns a description of the first mismatch.
pub fn check_dynamic(g: &DynamicMechanismGraph, oracle: &Evidence, eps: f64) -> Result<(), String> {
    if g.edges.len() != oracle.len() {
        return Err(format!("{} edges, oracle {}", g.edges.len(), oracle.len()));
    }
    for e in &g.edges {
        let key = (e.source.index as usize, e.target.index as usize);
        let per_k = oracle
            .get(&key)
            .ok_or_else(|| format!("edge {key:?} not in oracle"))?;
        let f_or: f64 = per_k.values().sum();
        if !rel_close(e.weight, f_or, 1e-12) {
            return Err(format!("F{key:?} = {} vs {}", e.weight, f_or));
        }
        let sum: f64 = e.evidence.iter().map(|l| l.evidence).sum();
        if sum != e.weight {
            return Err(format!("F{key:?} != sum_k E"));
        }
        if e.evidence.len() != per_k.len() {
            return Err(format!("latent count {key:?}"));
        }
        for l in &e.evidence {
            let eo = per_k.get(&l.latent).copied().unwrap_or(0.0);
            if !rel_close(l.evidence, eo, 1e-12) {
                return Err(format!("E{key:?}[{}] = {} vs {}", l.latent, l.evidence, eo));
            }
            if !rel_close(l.rho, eo / (f_or + eps), 1e-12) {
                return Err(format!("rho{key:?}[{}]", l.latent));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- nnls

/// Minimum residual over every column subset whose unconstrained least-squares
/// solution is nonnegative.
pub fn nnls_bruteforce(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let n = a.ncols();
    let mut best = b.norm();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|&c| mask & (1 << c) != 0).collect();
        let sub = DMatrix::from_columns(
            &cols
                .iter()
                .map(|&c| a.column(c).into_owned())
                .collect::<Vec<_>>(),
        );
        let Ok(x) = sub.clone().svd(true, true).solve(b, 1e-12) else {
            continue;
        };
        if x.iter().all(|&v| v >= -1e-12) {
            best = best.min((&sub * &x - b).norm());
        }
    }
    best
}

// ---------------------------------------------------------------- trees and compression

/// A random tree over the given leaves; groups have 2..=max_branch children.
pub fn random_tree_shape(
    rng: &mut ChaCha8Rng,
    leaves: &[FeatureId],
    max_branch: usize,
) -> TreeShape {
    if leaves.len() == 1 {
        return TreeShape::Leaf(leaves[0]);
    }
    if leaves.len() <= max_branch && rng.random_bool(0.3) {
        return TreeShape::Group(leaves.iter().map(|&f| TreeShape::Leaf(f)).collect());
    }
    let b = rng.random_range(2..=max_branch.min(leaves.len()));
    let mut cuts: BTreeSet<usize> = BTreeSet::new();
    while cuts.len() < b - 1 {
        cuts.insert(rng.random_range(1..leaves.len()));
    }
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(leaves.len());
    TreeShape::Group(
        bounds
            .windows(2)
            .map(|w| random_tree_shape(rng, &leaves[w[0]..w[1]], max_branch))
            .collect(),
    )
}

pub fn payload(unit: &str, edges: &[(FeatureId, FeatureId, f64)]) -> DynamicMechanismGraph {
    DynamicMechanismGraph {
        kind: "mechanism".into(),
        unit: unit.into(),
        granularity: Granularity::Sentence,
        gate_mode: GateMode::Positive,
        gate_tol: 0.0,
        epsilon: 1e-9,
        restricted: false,
        num_tokens: 1,
        total_edges: edges.len(),
        truncated: false,
        edges: edges
            .iter()
            .map(|&(source, target, weight)| MechEdge {
                source,
                target,
                weight,
                strongest_latent: 0,
                strongest_caption: None,
                evidence: vec![],
            })
            .collect(),
    }
}

fn path_to_root(tree: &AbstractionTree, mut n: usize) -> Vec<usize> {
    let mut p = vec![n];
    while let Some(q) = tree.nodes[n].parent {
        p.push(q);
        n = q;
    }
    p
}

/// LCA as the deepest node common to both root paths.
pub fn lca_oracle(tree: &AbstractionTree, a: usize, b: usize) -> usize {
    let pb: BTreeSet<usize> = path_to_root(tree, b).into_iter().collect();
    path_to_root(tree, a)
        .into_iter()
        .find(|n| pb.contains(n))
        .unwrap()
}

/// Brute-force projection: blocked set by path intersection, eligibility,
/// highest eligible node per leaf, then per cover pair weight sums.
pub fn compress_oracle(
    p: &DynamicMechanismGraph,
    tree: &AbstractionTree,
    cap: usize,
    exclude: &BTreeSet<usize>,
) -> BTreeMap<(usize, usize), f64> {
    let leaf = tree.leaf_nodes();
    let mut blocked = BTreeSet::new();
    for e in &p.edges {
        blocked.extend(path_to_root(
            tree,
            lca_oracle(tree, leaf[&e.source], leaf[&e.target]),
        ));
    }
    let active: BTreeSet<FeatureId> = p.edges.iter().flat_map(|e| [e.source, e.target]).collect();
    let eligible = |n: usize| {
        let node = &tree.nodes[n];
        !node.is_leaf()
            && node.leaves.len() <= cap
            && !blocked.contains(&n)
            && !exclude.contains(&n)
            && node.leaves.iter().filter(|f| active.contains(f)).count() >= 2
    };
    let cover = |f: FeatureId| {
        let path = path_to_root(tree, leaf[&f]);
        path.iter()
            .rev()
            .copied()
            .find(|&n| eligible(n))
            .unwrap_or(leaf[&f])
    };
    let mut out = BTreeMap::new();
    for e in &p.edges {
        *out.entry((cover(e.source), cover(e.target))).or_insert(0.0) += e.weight;
    }
    out
}

/// Weight conservation, blocking soundness and cover validity.
pub fn check_compression(p: &DynamicMechanismGraph, g: &CompressedGraph) -> Result<(), String> {
    if !rel_close(g.displayed_weight, p.total_weight(), 1e-12) && p.total_weight() != 0.0 {
        return Err(format!(
            "displayed {} vs payload {}",
            g.displayed_weight,
            p.total_weight()
        ));
    }
    for n in g.nodes.iter().filter(|n| n.supernode) {
        for e in &p.edges {
            if n.members.contains(&e.source) && n.members.contains(&e.target) {
                return Err(format!(
                    "supernode {} holds both ends of {}->{}",
                    n.node, e.source, e.target
                ));
            }
        }
    }
    let active: BTreeSet<FeatureId> = p.edges.iter().flat_map(|e| [e.source, e.target]).collect();
    let mut covered = BTreeSet::new();
    for n in &g.nodes {
        for f in &n.members {
            if !covered.insert(*f) {
                return Err(format!("{f} covered twice"));
            }
        }
    }
    if covered != active {
        return Err("cover does not equal the active leaves".into());
    }
    Ok(())
}

// ---------------------------------------------------------------- geometry

pub fn mutual_knn_bruteforce(coords: &[Vec<f64>], k: usize) -> Vec<BTreeSet<usize>> {
    let n = coords.len();
    let dist = |i: usize, j: usize| {
        coords[i]
            .iter()
            .zip(&coords[j])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    // j is among i's k nearest iff fewer than k points beat it (ties by lower index).
    let in_knn = |i: usize, j: usize| {
        let dij = dist(i, j);
        let better = (0..n)
            .filter(|&m| m != i && m != j && (dist(i, m) < dij || (dist(i, m) == dij && m < j)))
            .count();
        better < k
    };
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && in_knn(i, j) && in_knn(j, i))
                .collect()
        })
        .collect()
}
