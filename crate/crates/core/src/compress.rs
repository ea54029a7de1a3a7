//! Hierarchy-respecting compression of dynamic mechanism graphs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::AbstractionTree;
use crate::ids::FeatureId;
use crate::mechanism::DynamicMechanismGraph;

pub const DEFAULT_CAP: usize = 64;

/// Internal node ids that may not collapse for one payload.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedSet {
    pub nodes: BTreeSet<usize>,
}

impl BlockedSet {
    pub fn contains(&self, node: usize) -> bool {
        self.nodes.contains(&node)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressConfig {
    /// Maximum descendant-leaf count of a supernode.
    pub cap: usize,
    /// Internal nodes the viewer has expanded; never collapsed.
    #[serde(default)]
    pub exclude: BTreeSet<usize>,
}

impl Default for CompressConfig {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            exclude: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayNode {
    /// Tree node id.
    pub node: usize,
    pub label: String,
    pub supernode: bool,
    /// Active leaves this display node covers, sorted.
    pub members: Vec<FeatureId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperEdge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
    /// Contributing payload edges, in payload order.
    pub leaf_edges: Vec<(FeatureId, FeatureId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedGraph {
    pub kind: String,
    pub unit: String,
    pub cap_kind: String,
    pub cap: usize,
    pub exclude: Vec<usize>,
    pub blocked: Vec<usize>,
    pub nodes: Vec<DisplayNode>,
    /// Sorted by weight desc, then (source, target) asc.
    pub edges: Vec<SuperEdge>,
    pub payload_weight: f64,
    pub displayed_weight: f64,
}

impl CompressedGraph {
    pub fn display_node(&self, node: usize) -> Option<&DisplayNode> {
        self.nodes.iter().find(|n| n.node == node)
    }
}

fn leaf_ids(
    payload: &DynamicMechanismGraph,
    tree: &AbstractionTree,
) -> Result<Vec<(usize, usize)>> {
    let leaves = tree.leaf_nodes();
    let lookup = |f: FeatureId| {
        leaves
            .get(&f)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("feature {f} is not a tree leaf")))
    };
    payload
        .edges
        .iter()
        .map(|e| Ok((lookup(e.source)?, lookup(e.target)?)))
        .collect()
}

/// Every edge blocks its endpoints' LCA and all of that node's ancestors.
pub fn compute_blocked_set(
    payload: &DynamicMechanismGraph,
    tree: &AbstractionTree,
) -> Result<BlockedSet> {
    let mut nodes = BTreeSet::new();
    for (a, b) in leaf_ids(payload, tree)? {
        let lca = tree.lca(a, b);
        for n in tree.ancestors(lca) {
            if !nodes.insert(n) {
                break;
            }
        }
    }
    Ok(BlockedSet { nodes })
}

pub fn compress_graph(
    payload: &DynamicMechanismGraph,
    tree: &AbstractionTree,
    blocked: &BlockedSet,
    config: &CompressConfig,
) -> Result<CompressedGraph> {
    let edge_leaves = leaf_ids(payload, tree)?;
    let active: BTreeSet<FeatureId> = payload
        .edges
        .iter()
        .flat_map(|e| [e.source, e.target])
        .collect();
    let active_count = |node: usize| {
        tree.nodes[node]
            .leaves
            .iter()
            .filter(|f| active.contains(f))
            .count()
    };

    let eligible = |node: usize| {
        let n = &tree.nodes[node];
        !n.is_leaf()
            && n.leaves.len() <= config.cap
            && !blocked.contains(node)
            && !config.exclude.contains(&node)
            && active_count(node) >= 2
    };

    // Greedy top-down: the highest eligible node on each root-to-leaf path.
    let mut cover: BTreeMap<usize, bool> = BTreeMap::new();
    let mut stack = vec![tree.root];
    while let Some(node) = stack.pop() {
        let n = &tree.nodes[node];
        if n.is_leaf() {
            if n.feature.is_some_and(|f| active.contains(&f)) {
                cover.insert(node, false);
            }
        } else if eligible(node) {
            cover.insert(node, true);
        } else {
            stack.extend(
                n.children
                    .iter()
                    .rev()
                    .copied()
                    .filter(|&c| active_count(c) > 0),
            );
        }
    }

    let leaf_of = tree.leaf_nodes();
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for (&node, &supernode) in &cover {
        if supernode {
            for f in &tree.nodes[node].leaves {
                if active.contains(f) {
                    owner.insert(leaf_of[f], node);
                }
            }
        } else {
            owner.insert(node, node);
        }
    }

    let mut agg: BTreeMap<(usize, usize), SuperEdge> = BTreeMap::new();
    for (edge, (a, b)) in payload.edges.iter().zip(&edge_leaves) {
        let key = (owner[a], owner[b]);
        let entry = agg.entry(key).or_insert_with(|| SuperEdge {
            source: key.0,
            target: key.1,
            weight: 0.0,
            leaf_edges: Vec::new(),
        });
        entry.weight += edge.weight;
        entry.leaf_edges.push((edge.source, edge.target));
    }
    let mut edges: Vec<SuperEdge> = agg.into_values().collect();
    edges.sort_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then((x.source, x.target).cmp(&(y.source, y.target)))
    });

    let nodes = cover
        .iter()
        .map(|(&node, &supernode)| DisplayNode {
            node,
            label: tree.label(node),
            supernode,
            members: tree.nodes[node]
                .leaves
                .iter()
                .filter(|f| active.contains(f))
                .copied()
                .collect(),
        })
        .collect();

    Ok(CompressedGraph {
        kind: "compressed".into(),
        unit: payload.unit.clone(),
        cap_kind: "max_descendant_leaves".into(),
        cap: config.cap,
        exclude: config.exclude.iter().copied().collect(),
        blocked: blocked.nodes.iter().copied().collect(),
        nodes,
        payload_weight: payload.total_weight(),
        displayed_weight: edges.iter().map(|e| e.weight).sum(),
        edges,
    })
}

/// Blocked set and compression in one call.
pub fn compress(
    payload: &DynamicMechanismGraph,
    tree: &AbstractionTree,
    config: &CompressConfig,
) -> Result<CompressedGraph> {
    let blocked = compute_blocked_set(payload, tree)?;
    compress_graph(payload, tree, &blocked, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::TreeShape;
    use crate::ids::Granularity;
    use crate::mechanism::{GateMode, MechEdge};

    fn leaf(f: FeatureId) -> TreeShape {
        TreeShape::Leaf(f)
    }

    fn payload(edges: &[(FeatureId, FeatureId, f64)]) -> DynamicMechanismGraph {
        DynamicMechanismGraph {
            kind: "mechanism".into(),
            unit: "q".into(),
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

    /// Root with groups A = {a1, a2}, B = {b1, b2}, C = {c1, c2}.
    fn figure_tree() -> (AbstractionTree, [FeatureId; 6]) {
        let f = [
            FeatureId::src(0),
            FeatureId::src(1),
            FeatureId::src(2),
            FeatureId::tgt(0),
            FeatureId::tgt(1),
            FeatureId::tgt(2),
        ];
        let [a1, a2, b1, b2, c1, c2] = f;
        let shape = TreeShape::Group(vec![
            TreeShape::Group(vec![leaf(a1), leaf(a2)]),
            TreeShape::Group(vec![leaf(b1), leaf(b2)]),
            TreeShape::Group(vec![leaf(c1), leaf(c2)]),
        ]);
        (AbstractionTree::from_shape(&shape), f)
    }

    #[test]
    fn figure_scenario() {
        let (tree, [a1, a2, b1, b2, c1, c2]) = figure_tree();
        let p = payload(&[(a1, c1, 1.0), (a2, c2, 2.0), (a1, c2, 0.5), (b1, b2, 0.25)]);
        let g = compress(&p, &tree, &CompressConfig::default()).unwrap();
        let group_a = tree.nodes[tree.root].children[0];
        let group_b = tree.nodes[tree.root].children[1];
        let group_c = tree.nodes[tree.root].children[2];
        assert!(g.blocked.contains(&group_b));
        assert!(g.display_node(group_a).unwrap().supernode);
        assert!(g.display_node(group_c).unwrap().supernode);
        assert!(g.display_node(group_b).is_none());
        let ac = g
            .edges
            .iter()
            .find(|e| e.source == group_a && e.target == group_c)
            .unwrap();
        assert_eq!(ac.weight, 3.5);
        assert_eq!(ac.leaf_edges.len(), 3);
        let leaves = tree.leaf_nodes();
        assert!(g
            .edges
            .iter()
            .any(|e| e.source == leaves[&b1] && e.target == leaves[&b2] && e.weight == 0.25));
        assert_eq!(g.payload_weight, g.displayed_weight);
    }

    #[test]
    fn root_crossing_edges_leave_leaf_view() {
        let (tree, [a1, _, b1, _, c1, _]) = figure_tree();
        let p = payload(&[(a1, b1, 1.0), (b1, c1, 1.0)]);
        let blocked = compute_blocked_set(&p, &tree).unwrap();
        assert_eq!(blocked.nodes, BTreeSet::from([tree.root]));
        let g = compress_graph(&p, &tree, &blocked, &CompressConfig::default()).unwrap();
        assert!(g.nodes.iter().all(|n| !n.supernode));
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn sibling_edge_blocks_parent_chain() {
        let (tree, [a1, a2, ..]) = figure_tree();
        let blocked = compute_blocked_set(&payload(&[(a1, a2, 1.0)]), &tree).unwrap();
        let group_a = tree.nodes[tree.root].children[0];
        assert_eq!(blocked.nodes, BTreeSet::from([tree.root, group_a]));
        assert!(compute_blocked_set(&payload(&[]), &tree)
            .unwrap()
            .nodes
            .is_empty());
    }

    #[test]
    fn unknown_endpoint_is_not_found() {
        let (tree, [a1, ..]) = figure_tree();
        let p = payload(&[(a1, FeatureId::tgt(99), 1.0)]);
        assert!(matches!(
            compute_blocked_set(&p, &tree),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn cap_and_exclusion_prevent_collapse() {
        let (tree, [a1, a2, _, _, c1, c2]) = figure_tree();
        let p = payload(&[(a1, c1, 1.0), (a2, c2, 2.0)]);
        let g = compress(
            &p,
            &tree,
            &CompressConfig {
                cap: 1,
                exclude: BTreeSet::new(),
            },
        )
        .unwrap();
        assert!(g.nodes.iter().all(|n| !n.supernode));
        let group_a = tree.nodes[tree.root].children[0];
        let g = compress(
            &p,
            &tree,
            &CompressConfig {
                cap: 64,
                exclude: BTreeSet::from([group_a]),
            },
        )
        .unwrap();
        assert!(g.display_node(group_a).is_none());
        assert_eq!(g.nodes.iter().filter(|n| n.supernode).count(), 1);
    }
}
