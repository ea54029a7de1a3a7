use serde::{Deserialize, Serialize};

use super::tree::AbstractionTree;
use crate::error::{Error, Result};
use crate::ids::FeatureId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupedSubview {
    pub nodes: Vec<usize>,
    pub leaves: Vec<FeatureId>,
}

/// Union of the descendant leaves of the selected internal nodes, sorted by feature id.
pub fn export_slice(tree: &AbstractionTree, selected: &[usize]) -> Result<GroupedSubview> {
    let mut leaves = Vec::new();
    for &id in selected {
        let node = tree
            .nodes
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("tree node {id}")))?;
        if node.is_leaf() {
            return Err(Error::Precondition(format!(
                "node {id} is a leaf, not an internal node"
            )));
        }
        leaves.extend(node.leaves.iter().copied());
    }
    leaves.sort();
    leaves.dedup();
    let mut nodes = selected.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    Ok(GroupedSubview { nodes, leaves })
}
