//! Grounded abstraction tree over the retained features, built from
//! description embeddings.

mod geometry;
mod slice;
mod summarize;
mod tree;

pub use geometry::{build_neighbor_geometry, knn_lists, mutual_knn, pca_project, NeighborGeometry};
pub use slice::{export_slice, GroupedSubview};
pub use summarize::{grounding_bundle, summarize_node, summarize_tree};
pub use tree::{
    grow_abstraction_tree, AbstractionTree, Grounding, LeafAnchor, Summary, TreeConfig, TreeNode,
    TreeShape,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    pub pca_dim: usize,
    pub k: usize,
    pub tree: TreeConfig,
    pub max_in_flight: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            pca_dim: 50,
            k: 15,
            tree: TreeConfig::default(),
            max_in_flight: 4,
        }
    }
}
