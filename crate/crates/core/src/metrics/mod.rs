//! Structure-recovery metrics and the shared layout behind density views.

mod community;
mod layout;

pub use community::{louvain, modularity};
pub use layout::{components, layout, BoundingBox, DEFAULT_ITERATIONS};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cooc::CoocGraph;
use crate::error::{Error, Result};
use crate::ids::{FeatureId, Granularity};
use crate::ingest::CorpusStructure;
use crate::presence::{PresenceMatrix, SentenceScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Euclidean distance in the shared layout.
    #[default]
    Layout,
    /// Unweighted hop count; disconnected pairs are skipped.
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub seed: u64,
    pub layout_iterations: usize,
    pub distance: DistanceKind,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            layout_iterations: DEFAULT_ITERATIONS,
            distance: DistanceKind::Layout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureMetricsRow {
    pub level: Granularity,
    pub nodes: usize,
    pub edges: usize,
    pub communities: usize,
    pub chapter_align: Option<f64>,
    pub subchapter_align: Option<f64>,
    pub same_chapter_mass: Option<f64>,
    pub within_between: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub level: Granularity,
    pub chapter_align: f64,
    pub subchapter_align: f64,
    pub same_chapter_mass: f64,
    pub within_between: f64,
}

/// Published values on the original corpus. Surfaced for comparison only;
/// they cannot be reproduced without that data.
pub fn reference_rows() -> Vec<ReferenceRow> {
    vec![
        ReferenceRow {
            level: Granularity::Sentence,
            chapter_align: 2.005,
            subchapter_align: 0.849,
            same_chapter_mass: 0.870,
            within_between: 0.828,
        },
        ReferenceRow {
            level: Granularity::Paragraph,
            chapter_align: 2.190,
            subchapter_align: 0.836,
            same_chapter_mass: 0.811,
            within_between: 0.781,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsMetadata {
    pub mi_units: String,
    pub mi_scaling: String,
    pub community_method: String,
    pub edge_weight: String,
    pub distance: DistanceKind,
    pub seed: u64,
    pub reference_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<StructureMetricsRow>,
    pub reference: Vec<ReferenceRow>,
    pub metadata: MetricsMetadata,
}

impl MetricsReport {
    pub fn new(rows: Vec<StructureMetricsRow>, config: &MetricsConfig) -> Self {
        Self {
            rows,
            reference: reference_rows(),
            metadata: MetricsMetadata {
                mi_units: "nats".into(),
                mi_scaling: "mutual information x |partition| / |labels|".into(),
                community_method: "louvain local moving + aggregation, seeded visiting order"
                    .into(),
                edge_weight: "jaccard".into(),
                distance: config.distance,
                seed: config.seed,
                reference_note:
                    "reference rows are published values on a different corpus; not reproduced"
                        .into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub id: FeatureId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterWeights {
    pub chapter: String,
    /// Aligned with `SharedLayout::nodes`.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedLayout {
    pub granularity: Granularity,
    pub seed: u64,
    pub iterations: usize,
    pub nodes: Vec<LayoutNode>,
    pub boxes: Vec<BoundingBox>,
    pub chapter_weights: Vec<ChapterWeights>,
}

fn indexed_edges(graph: &CoocGraph) -> Vec<(usize, usize, f64)> {
    let index: BTreeMap<FeatureId, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id, i))
        .collect();
    graph
        .edges
        .iter()
        .map(|e| (index[&e.source], index[&e.target], e.jaccard))
        .collect()
}

fn sentence_columns(graph: &CoocGraph, presence: &PresenceMatrix) -> Result<Vec<usize>> {
    if presence.granularity != Granularity::Sentence {
        return Err(Error::Precondition(
            "metrics need sentence-level presence".into(),
        ));
    }
    graph
        .nodes
        .iter()
        .map(|n| {
            presence
                .column_of(n.id)
                .ok_or_else(|| Error::NotFound(format!("presence column for {}", n.id)))
        })
        .collect()
}

/// Per-column sentence lists, built once.
fn supports(presence: &PresenceMatrix) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); presence.features.len()];
    for (s, row) in presence.rows.iter().enumerate() {
        for &c in row {
            out[c as usize].push(s);
        }
    }
    out
}

/// Dominant chapter and subchapter per node: argmax of present-sentence
/// counts, ties to the lower unit index.
pub fn dominant_units(
    graph: &CoocGraph,
    presence: &PresenceMatrix,
    corpus: &CorpusStructure,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let cols = sentence_columns(graph, presence)?;
    let sup = supports(presence);
    let argmax = |col: usize, g: Granularity| {
        let mut counts = vec![0usize; corpus.num_units(g)];
        for &s in &sup[col] {
            counts[corpus.sentence_unit(s, g)] += 1;
        }
        counts
            .iter()
            .enumerate()
            .fold(
                (0, 0),
                |best, (i, &c)| if c > best.1 { (i, c) } else { best },
            )
            .0
    };
    Ok((
        cols.iter()
            .map(|&c| argmax(c, Granularity::Chapter))
            .collect(),
        cols.iter()
            .map(|&c| argmax(c, Granularity::Subchapter))
            .collect(),
    ))
}

/// I(partition; labels) in nats times |partition| / |labels| (distinct values present).
pub fn scaled_mutual_information(partition: &[usize], labels: &[usize]) -> f64 {
    let n = partition.len();
    if n == 0 {
        return 0.0;
    }
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&p, &l) in partition.iter().zip(labels) {
        *joint.entry((p, l)).or_default() += 1.0 / n as f64;
        *pa.entry(p).or_default() += 1.0 / n as f64;
        *pb.entry(l).or_default() += 1.0 / n as f64;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(p, l), &pj)| pj * (pj / (pa[&p] * pb[&l])).ln())
        .sum();
    mi.max(0.0) * pa.len() as f64 / pb.len() as f64
}

/// Fraction of edge weight whose endpoints share a dominant chapter.
pub fn same_chapter_mass(edges: &[(usize, usize, f64)], chapters: &[usize]) -> Option<f64> {
    let total: f64 = edges.iter().map(|e| e.2).sum();
    if total <= 0.0 {
        return None;
    }
    let same: f64 = edges
        .iter()
        .filter(|e| chapters[e.0] == chapters[e.1])
        .map(|e| e.2)
        .sum();
    Some(same / total)
}

/// Mean within-label pair distance over mean between-label pair distance.
pub fn within_between(
    n: usize,
    distance: impl Fn(usize, usize) -> Option<f64>,
    labels: &[usize],
) -> Option<f64> {
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let Some(d) = distance(i, j) else { continue };
            if labels[i] == labels[j] {
                within += d;
                nw += 1;
            } else {
                between += d;
                nb += 1;
            }
        }
    }
    if nw == 0 || nb == 0 || between <= 0.0 {
        return None;
    }
    Some((within / nw as f64) / (between / nb as f64))
}

fn hop_distances(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<Option<usize>>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, _) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    (0..n)
        .map(|s| {
            let mut dist = vec![None; n];
            dist[s] = Some(0);
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &u in &adj[v] {
                    if dist[u].is_none() {
                        dist[u] = Some(dist[v].unwrap() + 1);
                        queue.push_back(u);
                    }
                }
            }
            dist
        })
        .collect()
}

/// Force-directed coordinates for the graph's nodes plus per-chapter activation mass.
pub fn compute_shared_layout(
    graph: &CoocGraph,
    presence: &PresenceMatrix,
    scores: &SentenceScores,
    corpus: &CorpusStructure,
    config: &MetricsConfig,
) -> Result<SharedLayout> {
    let edges = indexed_edges(graph);
    let (pos, boxes) = layout(
        graph.nodes.len(),
        &edges,
        config.seed,
        config.layout_iterations,
    );
    let cols = sentence_columns(graph, presence)?;
    let sup = supports(presence);
    let chapters = corpus.num_units(Granularity::Chapter);
    let mut weights = vec![vec![0.0; graph.nodes.len()]; chapters];
    for (i, (node, &col)) in graph.nodes.iter().zip(&cols).enumerate() {
        for &s in &sup[col] {
            weights[corpus.sentence_unit(s, Granularity::Chapter)][i] +=
                scores.score(s, node.id.index);
        }
    }
    Ok(SharedLayout {
        granularity: graph.granularity,
        seed: config.seed,
        iterations: config.layout_iterations,
        nodes: graph
            .nodes
            .iter()
            .zip(&pos)
            .map(|(n, p)| LayoutNode {
                id: n.id,
                x: p[0],
                y: p[1],
            })
            .collect(),
        boxes,
        chapter_weights: weights
            .into_iter()
            .enumerate()
            .map(|(c, weights)| ChapterWeights {
                chapter: corpus.unit_id(Granularity::Chapter, c).to_string(),
                weights,
            })
            .collect(),
    })
}

/// One metrics row. `layout` must come from the same graph; it is only read
/// when the distance kind is `Layout`.
pub fn compute_structure_metrics(
    graph: &CoocGraph,
    presence: &PresenceMatrix,
    corpus: &CorpusStructure,
    layout: &SharedLayout,
    config: &MetricsConfig,
) -> Result<StructureMetricsRow> {
    let n = graph.nodes.len();
    let edges = indexed_edges(graph);
    let empty = StructureMetricsRow {
        level: graph.granularity,
        nodes: n,
        edges: edges.len(),
        communities: 0,
        chapter_align: None,
        subchapter_align: None,
        same_chapter_mass: None,
        within_between: None,
    };
    if edges.is_empty() {
        return Ok(empty);
    }
    if layout.nodes.len() != n
        || layout
            .nodes
            .iter()
            .zip(&graph.nodes)
            .any(|(l, g)| l.id != g.id)
    {
        return Err(Error::Precondition(
            "layout does not match the graph's nodes".into(),
        ));
    }
    let (chapters, subchapters) = dominant_units(graph, presence, corpus)?;
    let partition = louvain(n, &edges, config.seed);
    let communities = partition.iter().max().map_or(0, |m| m + 1);
    let within_between = match config.distance {
        DistanceKind::Layout => {
            let p = &layout.nodes;
            within_between(
                n,
                |i, j| Some(((p[i].x - p[j].x).powi(2) + (p[i].y - p[j].y).powi(2)).sqrt()),
                &chapters,
            )
        }
        DistanceKind::Graph => {
            let hops = hop_distances(n, &edges);
            within_between(n, |i, j| hops[i][j].map(|h| h as f64), &chapters)
        }
    };
    Ok(StructureMetricsRow {
        communities,
        chapter_align: Some(scaled_mutual_information(&partition, &chapters)),
        subchapter_align: Some(scaled_mutual_information(&partition, &subchapters)),
        same_chapter_mass: same_chapter_mass(&edges, &chapters),
        within_between,
        ..empty
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_table_has_zero_information() {
        // Every (partition, label) pair appears equally often.
        let mut p = Vec::new();
        let mut l = Vec::new();
        for a in 0..3 {
            for b in 0..4 {
                for _ in 0..5 {
                    p.push(a);
                    l.push(b);
                }
            }
        }
        assert!(scaled_mutual_information(&p, &l).abs() < 1e-9);
    }

    #[test]
    fn identical_partition_gives_scaled_entropy() {
        let p: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let mi = scaled_mutual_information(&p, &p);
        assert!((mi - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mass_splits_exactly() {
        let edges = vec![(0, 1, 0.3), (1, 2, 0.7), (2, 3, 0.2)];
        let chapters = vec![0, 0, 1, 1];
        let same = same_chapter_mass(&edges, &chapters).unwrap();
        let cross: f64 = 0.7 / 1.2;
        assert!((same + cross - 1.0).abs() < 1e-15);
        assert_eq!(same_chapter_mass(&[], &chapters), None);
    }

    #[test]
    fn within_between_is_scale_invariant() {
        let pts = [[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]];
        let labels = [0, 0, 1, 1];
        let d = |s: f64| {
            move |i: usize, j: usize| {
                let (a, b): ([f64; 2], [f64; 2]) = (pts[i], pts[j]);
                Some(s * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
            }
        };
        let r1 = within_between(4, d(1.0), &labels).unwrap();
        let r2 = within_between(4, d(37.5), &labels).unwrap();
        assert!(r1 < 1.0);
        assert!((r1 - r2).abs() < 1e-12);
    }
}
