use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::FeatureId;
use crate::ingest::FeatureCatalog;
use crate::util::euclidean;

/// PCA coordinates of the retained features and their mutual-kNN graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborGeometry {
    pub features: Vec<FeatureId>,
    pub coords: Vec<Vec<f64>>,
    pub dim: usize,
    pub k: usize,
    /// Sorted neighbor lists; symmetric.
    pub adjacency: Vec<Vec<usize>>,
}

impl NeighborGeometry {
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        euclidean(&self.coords[a], &self.coords[b])
    }

    pub fn index_of(&self, id: FeatureId) -> Option<usize> {
        self.features.binary_search(&id).ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Projects rows onto their top `p` principal axes. Axis signs are fixed so
/// the largest-magnitude loading of each axis is positive.
pub fn pca_project(rows: &[Vec<f64>], p: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    if n == 0 {
        return Vec::new();
    }
    let d = rows[0].len();
    let p = p.min(n.saturating_sub(1)).min(d);
    if p == 0 {
        return vec![Vec::new(); n];
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let axes: Vec<Vec<f64>> = order
        .into_iter()
        .take(p)
        .map(|i| {
            let mut axis: Vec<f64> = v_t.row(i).iter().copied().collect();
            let pivot = axis
                .iter()
                .copied()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(_, v)| v)
                .unwrap_or(0.0);
            if pivot < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            axis
        })
        .collect();
    (0..n)
        .map(|i| {
            axes.iter()
                .map(|a| (0..d).map(|j| centered[(i, j)] * a[j]).sum())
                .collect()
        })
        .collect()
}

/// k nearest neighbors of each point (Euclidean; ties by lower index).
pub fn knn_lists(coords: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..coords.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..coords.len())
                .filter(|&j| j != i)
                .map(|j| (euclidean(&coords[i], &coords[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Keeps a <-> b iff each is in the other's kNN list.
pub fn mutual_knn(coords: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    let lists = knn_lists(coords, k);
    (0..coords.len())
        .map(|i| {
            let mut adj: Vec<usize> = lists[i]
                .iter()
                .copied()
                .filter(|&j| lists[j].contains(&i))
                .collect();
            adj.sort_unstable();
            adj
        })
        .collect()
}

pub fn build_neighbor_geometry(
    catalog: &FeatureCatalog,
    universe: &[FeatureId],
    p: usize,
    k: usize,
) -> Result<NeighborGeometry> {
    let mut features = universe.to_vec();
    features.sort();
    features.dedup();
    let rows = features
        .iter()
        .map(|&f| {
            catalog.embedding(f).map(<[f64]>::to_vec).ok_or_else(|| {
                Error::NotFound(format!("retained feature {f} has no description embedding"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = rows.first() {
        if rows.iter().any(|r| r.len() != first.len()) {
            return Err(Error::Shape(
                "description embeddings differ in length".into(),
            ));
        }
    }
    let dim = p.min(features.len().saturating_sub(1));
    if dim < p {
        log::info!("PCA dimension clamped from {p} to {dim}");
    }
    let coords = pca_project(&rows, dim);
    let dim = coords.first().map_or(0, Vec::len);
    let adjacency = mutual_knn(&coords, k);
    Ok(NeighborGeometry {
        features,
        coords,
        dim,
        k,
        adjacency,
    })
}
