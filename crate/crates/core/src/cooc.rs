//! Jaccard-normalized co-occurrence graphs over a presence matrix.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{FeatureId, Granularity, Site};
use crate::presence::PresenceMatrix;

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoocNode {
    pub id: FeatureId,
    /// C_aa: number of units where the feature is present.
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoocEdge {
    pub source: FeatureId,
    pub target: FeatureId,
    pub count: u64,
    pub jaccard: f64,
    /// 1-based rank of `target` in `source`'s kept list, if kept there.
    pub rank_source: Option<usize>,
    pub rank_target: Option<usize>,
}

/// Undirected graph; every edge is stored once with `source < target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoocGraph {
    pub kind: String,
    /// Site of the presence columns; `None` when there were none.
    pub site: Option<Site>,
    pub granularity: Granularity,
    pub top_k: usize,
    pub nodes: Vec<CoocNode>,
    pub edges: Vec<CoocEdge>,
}

pub fn jaccard(c_ab: u64, c_aa: u64, c_bb: u64) -> f64 {
    c_ab as f64 / (c_aa + c_bb - c_ab) as f64
}

/// Pairwise counts C = X^T X over column indices, diagonal included.
pub fn cooccurrence_counts(x: &PresenceMatrix) -> HashMap<(u32, u32), u64> {
    x.rows
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<(u32, u32), u64>, row| {
            for (i, &a) in row.iter().enumerate() {
                for &b in &row[i..] {
                    *acc.entry((a, b)).or_default() += 1;
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        })
}

/// Keeps each node's `top_k` neighbors by Jaccard (ties: higher count, then
/// lower feature id) and symmetrizes by union.
pub fn build_cooc_graph(x: &PresenceMatrix, top_k: usize) -> Result<CoocGraph> {
    if top_k < 1 {
        return Err(Error::Config("top_k must be at least 1".into()));
    }
    let counts = cooccurrence_counts(x);
    let n = x.features.len();
    let mut diag = vec![0u64; n];
    let mut neighbors: Vec<Vec<(u32, u64, f64)>> = vec![Vec::new(); n];
    for (&(a, b), &c) in &counts {
        if a == b {
            diag[a as usize] = c;
        }
    }
    for (&(a, b), &c) in &counts {
        if a != b {
            let j = jaccard(c, diag[a as usize], diag[b as usize]);
            neighbors[a as usize].push((b, c, j));
            neighbors[b as usize].push((a, c, j));
        }
    }

    let mut kept: BTreeMap<(u32, u32), (u64, f64, Option<usize>, Option<usize>)> = BTreeMap::new();
    for (a, list) in neighbors.iter_mut().enumerate() {
        let a = a as u32;
        list.sort_by(|x, y| y.2.total_cmp(&x.2).then(y.1.cmp(&x.1)).then(x.0.cmp(&y.0)));
        for (rank, &(b, c, j)) in list.iter().take(top_k).enumerate() {
            let key = (a.min(b), a.max(b));
            let slot = kept.entry(key).or_insert((c, j, None, None));
            if a == key.0 {
                slot.2 = Some(rank + 1);
            } else {
                slot.3 = Some(rank + 1);
            }
        }
    }

    let nodes = (0..n)
        .filter(|&i| diag[i] > 0)
        .map(|i| CoocNode {
            id: x.features[i],
            count: diag[i],
        })
        .collect();
    // Columns are sorted by feature id, so (a, b) with a < b keeps source < target.
    let edges = kept
        .into_iter()
        .map(|((a, b), (count, jaccard, ra, rb))| CoocEdge {
            source: x.features[a as usize],
            target: x.features[b as usize],
            count,
            jaccard,
            rank_source: ra,
            rank_target: rb,
        })
        .collect();
    let site = x.features.first().map(|f| f.site);
    Ok(CoocGraph {
        kind: "cooc".into(),
        site,
        granularity: x.granularity,
        top_k,
        nodes,
        edges,
    })
}

impl CoocGraph {
    pub fn node_count(&self, id: FeatureId) -> Option<u64> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| self.nodes[i].count)
    }

    pub fn edge(&self, a: FeatureId, b: FeatureId) -> Option<&CoocEdge> {
        let (s, t) = if a < b { (a, b) } else { (b, a) };
        self.edges
            .binary_search_by(|e| (e.source, e.target).cmp(&(s, t)))
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.jaccard).sum()
    }
}
