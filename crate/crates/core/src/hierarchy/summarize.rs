use rayon::prelude::*;
use serde_json::json;

use super::geometry::NeighborGeometry;
use super::tree::{AbstractionTree, Grounding, LeafAnchor, Summary};
use crate::client::{ClientRequest, ExternalClient, Task};
use crate::error::{Error, Result};
use crate::ids::FeatureId;
use crate::ingest::FeatureCatalog;
use crate::util::euclidean;

const REPRESENTATIVES: usize = 4;
const BOUNDARY_NEGATIVES: usize = 3;
const LEAF_ANCHORS: usize = 5;

fn centroid(geo: &NeighborGeometry, leaves: &[FeatureId]) -> Vec<f64> {
    let mut c = vec![0.0; geo.dim];
    let idx: Vec<usize> = leaves.iter().filter_map(|&f| geo.index_of(f)).collect();
    for &i in &idx {
        for (a, v) in c.iter_mut().zip(&geo.coords[i]) {
            *a += v / idx.len() as f64;
        }
    }
    c
}

fn anchor(catalog: &FeatureCatalog, f: FeatureId) -> LeafAnchor {
    LeafAnchor {
        feature: f,
        description: catalog.description(f).to_string(),
    }
}

/// Representatives, extremes, boundary negatives and leaf anchors for one internal node.
pub fn grounding_bundle(
    tree: &AbstractionTree,
    node: usize,
    geo: &NeighborGeometry,
    catalog: &FeatureCatalog,
) -> Result<Grounding> {
    let n = tree.node(node)?;
    if n.is_leaf() {
        return Err(Error::Precondition(format!("node {node} is a leaf")));
    }
    let center = centroid(geo, &n.leaves);
    let child_centers: Vec<(usize, Vec<f64>)> = n
        .children
        .iter()
        .map(|&c| (c, centroid(geo, &tree.nodes[c].leaves)))
        .collect();

    let mut reps: Vec<(f64, usize)> = child_centers
        .iter()
        .map(|(c, x)| (euclidean(x, &center), *c))
        .collect();
    reps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let representatives = reps
        .into_iter()
        .take(REPRESENTATIVES)
        .map(|(_, c)| c)
        .collect();

    let mut extremes = Vec::new();
    let mut best = -1.0;
    for (i, (a, xa)) in child_centers.iter().enumerate() {
        for (b, xb) in &child_centers[i + 1..] {
            let d = euclidean(xa, xb);
            if d > best {
                best = d;
                extremes = vec![*a, *b];
            }
        }
    }

    let mut outside: Vec<(f64, FeatureId)> = geo
        .features
        .iter()
        .enumerate()
        .filter(|(_, f)| n.leaves.binary_search(f).is_err())
        .map(|(i, &f)| (euclidean(&geo.coords[i], &center), f))
        .collect();
    outside.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let boundary_negatives = outside
        .into_iter()
        .take(BOUNDARY_NEGATIVES)
        .map(|(_, f)| anchor(catalog, f))
        .collect();

    let mut inside: Vec<(f64, FeatureId)> = n
        .leaves
        .iter()
        .filter_map(|&f| {
            geo.index_of(f)
                .map(|i| (euclidean(&geo.coords[i], &center), f))
        })
        .collect();
    inside.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let leaf_anchors = inside
        .into_iter()
        .take(LEAF_ANCHORS)
        .map(|(_, f)| anchor(catalog, f))
        .collect();

    Ok(Grounding {
        representatives,
        extremes,
        boundary_negatives,
        leaf_anchors,
    })
}

/// Asks the client for a label grounded in the node's bundle. Any failure or
/// an empty label yields the flagged `group:<id>` fallback.
pub fn summarize_node(
    tree: &AbstractionTree,
    node: usize,
    geo: &NeighborGeometry,
    catalog: &FeatureCatalog,
    client: &dyn ExternalClient,
) -> Result<Summary> {
    let grounding = grounding_bundle(tree, node, geo, catalog)?;
    let child_labels: Vec<String> = tree.nodes[node]
        .children
        .iter()
        .map(|&c| child_label(tree, c, catalog))
        .collect();
    let payload = json!({
        "node_id": node,
        "child_labels": child_labels,
        "representatives": grounding.representatives.iter().map(|&c| child_label(tree, c, catalog)).collect::<Vec<_>>(),
        "extremes": grounding.extremes.iter().map(|&c| child_label(tree, c, catalog)).collect::<Vec<_>>(),
        "boundary_negatives": grounding.boundary_negatives.iter().map(|a| a.description.as_str()).collect::<Vec<_>>(),
        "leaf_anchors": grounding.leaf_anchors.iter().map(|a| a.description.as_str()).collect::<Vec<_>>(),
    });
    let request = ClientRequest {
        task: Task::Summarize,
        payload,
        profile: serde_json::Value::Null,
    };
    let label = match client.call(&request) {
        Ok(reply) => reply["label"]
            .as_str()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned),
        Err(e) => {
            log::warn!("summary for node {node} failed: {e}");
            None
        }
    };
    let (label, fallback) = match label {
        Some(l) => (l, false),
        None => (format!("group:{node}"), true),
    };
    Ok(Summary {
        label,
        fallback,
        grounding,
        client: client.id().to_string(),
    })
}

fn child_label(tree: &AbstractionTree, id: usize, catalog: &FeatureCatalog) -> String {
    let n = &tree.nodes[id];
    match (n.feature, &n.summary) {
        (Some(f), _) => catalog.description(f).to_string(),
        (None, Some(s)) => s.label.clone(),
        (None, None) => format!("group:{id}"),
    }
}

/// Summarizes every internal node, deepest level first so child labels are available.
pub fn summarize_tree(
    tree: &mut AbstractionTree,
    geo: &NeighborGeometry,
    catalog: &FeatureCatalog,
    client: &dyn ExternalClient,
    max_in_flight: usize,
) -> Result<()> {
    let max_depth = tree.nodes.iter().map(|n| n.depth).max().unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    for depth in (0..=max_depth).rev() {
        let level: Vec<usize> = tree
            .nodes
            .iter()
            .filter(|n| n.depth == depth && !n.is_leaf())
            .map(|n| n.id)
            .collect();
        let snapshot = &*tree;
        let summaries = pool.install(|| {
            level
                .par_iter()
                .map(|&id| summarize_node(snapshot, id, geo, catalog, client))
                .collect::<Result<Vec<_>>>()
        })?;
        for (id, s) in level.into_iter().zip(summaries) {
            tree.nodes[id].summary = Some(s);
        }
    }
    Ok(())
}
