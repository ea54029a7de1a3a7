use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::NeighborGeometry;
use crate::error::{Error, Result};
use crate::ids::FeatureId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_leaf_group: usize,
    pub min_branching: usize,
    pub max_branching: usize,
    /// A child whose mean intra-child distance exceeds this multiple of the
    /// mean seed spacing is reseeded.
    pub diffuse_factor: f64,
    /// A child with more than ceil(|child| / divisor) mutual-kNN components is reseeded.
    pub component_divisor: usize,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_leaf_group: 8,
            min_branching: 2,
            max_branching: 12,
            diffuse_factor: 1.5,
            component_divisor: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafAnchor {
    pub feature: FeatureId,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub representatives: Vec<usize>,
    pub extremes: Vec<usize>,
    pub boundary_negatives: Vec<LeafAnchor>,
    pub leaf_anchors: Vec<LeafAnchor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    /// Set when the label is the `group:<id>` fallback.
    pub fallback: bool,
    pub grounding: Grounding,
    pub client: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    /// Descendant leaves, sorted.
    pub leaves: Vec<FeatureId>,
    /// Set on leaf nodes only.
    pub feature: Option<FeatureId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.feature.is_some()
    }
}

/// Recursive grouping whose leaves are exactly the retained features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionTree {
    pub root: usize,
    pub nodes: Vec<TreeNode>,
    #[serde(default)]
    pub config: TreeConfig,
}

/// Hand-specified tree shape.
#[derive(Debug, Clone)]
pub enum TreeShape {
    Leaf(FeatureId),
    Group(Vec<TreeShape>),
}

impl AbstractionTree {
    pub fn from_shape(shape: &TreeShape) -> Self {
        let mut tree = AbstractionTree {
            root: 0,
            nodes: Vec::new(),
            config: TreeConfig::default(),
        };
        fn add(
            tree: &mut AbstractionTree,
            shape: &TreeShape,
            parent: Option<usize>,
            depth: usize,
        ) -> usize {
            let id = tree.nodes.len();
            tree.nodes.push(TreeNode {
                id,
                parent,
                children: vec![],
                depth,
                leaves: vec![],
                feature: None,
                summary: None,
            });
            match shape {
                TreeShape::Leaf(f) => {
                    tree.nodes[id].feature = Some(*f);
                    tree.nodes[id].leaves = vec![*f];
                }
                TreeShape::Group(children) => {
                    for c in children {
                        let cid = add(tree, c, Some(id), depth + 1);
                        tree.nodes[id].children.push(cid);
                        let leaves = tree.nodes[cid].leaves.clone();
                        tree.nodes[id].leaves.extend(leaves);
                    }
                    tree.nodes[id].leaves.sort();
                }
            }
            id
        }
        add(&mut tree, shape, None, 0);
        tree
    }

    pub fn node(&self, id: usize) -> Result<&TreeNode> {
        self.nodes
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("tree node {id}")))
    }

    pub fn leaf_nodes(&self) -> BTreeMap<FeatureId, usize> {
        self.nodes
            .iter()
            .filter_map(|n| n.feature.map(|f| (f, n.id)))
            .collect()
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| !n.is_leaf())
    }

    /// Node ids from `id` up to the root, inclusive.
    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path
    }

    pub fn lca(&self, a: usize, b: usize) -> usize {
        let pa = self.ancestors(a);
        let mut cur = b;
        loop {
            if pa.contains(&cur) {
                return cur;
            }
            cur = self.nodes[cur].parent.expect("nodes share a root");
        }
    }

    pub fn label(&self, id: usize) -> String {
        let node = &self.nodes[id];
        match (&node.summary, node.feature) {
            (Some(s), _) => s.label.clone(),
            (None, Some(f)) => f.to_string(),
            (None, None) => format!("group:{id}"),
        }
    }

    /// Checks the structural invariants; used at load and export time.
    pub fn validate(&self, universe: &[FeatureId]) -> Result<()> {
        let mut expected = universe.to_vec();
        expected.sort();
        let mut seen: Vec<FeatureId> = self.nodes.iter().filter_map(|n| n.feature).collect();
        seen.sort();
        if seen != expected {
            return Err(Error::Integrity(
                "tree leaves do not partition the retained universe".into(),
            ));
        }
        for n in &self.nodes {
            if !n.is_leaf() && n.children.len() < 2 && n.id != self.root {
                return Err(Error::Integrity(format!(
                    "internal node {} has fewer than two children",
                    n.id
                )));
            }
            let mut union: Vec<FeatureId> = n
                .children
                .iter()
                .flat_map(|&c| self.nodes[c].leaves.iter().copied())
                .collect();
            let before = union.len();
            union.sort();
            union.dedup();
            if !n.is_leaf() && (union.len() != before || union != n.leaves) {
                return Err(Error::Integrity(format!(
                    "children of node {} overlap or miss leaves",
                    n.id
                )));
            }
        }
        Ok(())
    }
}

struct Grower<'a> {
    geo: &'a NeighborGeometry,
    config: &'a TreeConfig,
    priority: Vec<usize>,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn better(&self, a: (f64, usize), b: (f64, usize)) -> bool {
        // Larger value wins; ties go to the lower seeded priority.
        a.0 > b.0 || (a.0 == b.0 && self.priority[a.1] < self.priority[b.1])
    }

    fn farthest_first(&self, members: &[usize], b: usize) -> Vec<usize> {
        let dim = self.geo.dim;
        let mut centroid = vec![0.0; dim];
        for &m in members {
            for (c, v) in centroid.iter_mut().zip(&self.geo.coords[m]) {
                *c += v / members.len() as f64;
            }
        }
        let mut best = members[0];
        let mut best_d = crate::util::euclidean(&self.geo.coords[best], &centroid);
        for &m in &members[1..] {
            let d = crate::util::euclidean(&self.geo.coords[m], &centroid);
            if self.better((d, m), (best_d, best)) {
                best = m;
                best_d = d;
            }
        }
        let mut seeds = vec![best];
        let mut min_d: Vec<f64> = members
            .iter()
            .map(|&m| self.geo.distance(m, best))
            .collect();
        while seeds.len() < b {
            let mut pick: Option<(f64, usize)> = None;
            for (i, &m) in members.iter().enumerate() {
                if seeds.contains(&m) {
                    continue;
                }
                if pick.is_none_or(|p| self.better((min_d[i], m), p)) {
                    pick = Some((min_d[i], m));
                }
            }
            let Some((_, m)) = pick else { break };
            seeds.push(m);
            for (i, &x) in members.iter().enumerate() {
                min_d[i] = min_d[i].min(self.geo.distance(x, m));
            }
        }
        seeds
    }

    /// Component label per member of the mutual-kNN subgraph induced on `members`.
    fn components(&self, members: &[usize]) -> BTreeMap<usize, usize> {
        let mut label: BTreeMap<usize, usize> = BTreeMap::new();
        let mut next = 0;
        for &start in members {
            if label.contains_key(&start) {
                continue;
            }
            let mut stack = vec![start];
            label.insert(start, next);
            while let Some(x) = stack.pop() {
                for &y in &self.geo.adjacency[x] {
                    if members.binary_search(&y).is_ok() && !label.contains_key(&y) {
                        label.insert(y, next);
                        stack.push(y);
                    }
                }
            }
            next += 1;
        }
        label
    }

    fn assign(&self, members: &[usize], seeds: &[usize]) -> Vec<Vec<usize>> {
        let comp = self.components(members);
        let mut groups = vec![Vec::new(); seeds.len()];
        for &m in members {
            let reachable: Vec<usize> = (0..seeds.len())
                .filter(|&s| comp[&seeds[s]] == comp[&m])
                .collect();
            let pool: Vec<usize> = if reachable.is_empty() {
                (0..seeds.len()).collect()
            } else {
                reachable
            };
            let best = pool
                .into_iter()
                .min_by(|&a, &b| {
                    self.geo
                        .distance(m, seeds[a])
                        .total_cmp(&self.geo.distance(m, seeds[b]))
                        .then(a.cmp(&b))
                })
                .expect("at least one seed");
            groups[best].push(m);
        }
        groups
    }

    fn mean_pairwise(&self, pts: &[usize]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, &a) in pts.iter().enumerate() {
            for &b in &pts[i + 1..] {
                total += self.geo.distance(a, b);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    fn needs_reseed(&self, child: &[usize], seed_spacing: f64) -> bool {
        if child.len() < 2 {
            return false;
        }
        let diffuse = self.mean_pairwise(child) > self.config.diffuse_factor * seed_spacing;
        let n_comp = {
            let c = self.components(child);
            c.values().copied().max().map_or(0, |m| m + 1)
        };
        let fragmented = n_comp > child.len().div_ceil(self.config.component_divisor.max(1));
        diffuse || fragmented
    }

    fn medoid(&self, pts: &[usize]) -> usize {
        let mut best = pts[0];
        let mut best_cost = f64::INFINITY;
        for &p in pts {
            let cost: f64 = pts.iter().map(|&q| self.geo.distance(p, q)).sum();
            if cost < best_cost || (cost == best_cost && self.priority[p] < self.priority[best]) {
                best = p;
                best_cost = cost;
            }
        }
        best
    }

    fn split(&self, members: &[usize]) -> Vec<Vec<usize>> {
        let n = members.len();
        let b = ((n as f64).cbrt().ceil() as usize)
            .clamp(self.config.min_branching, self.config.max_branching)
            .min(n);
        let first = &self.geo.coords[members[0]];
        if members.iter().all(|&m| self.geo.coords[m] == *first) {
            return self.chunks(members, b);
        }
        let mut seeds = self.farthest_first(members, b);
        let mut groups = self.assign(members, &seeds);

        let spacing = self.mean_pairwise(&seeds);
        let mut reseeded = false;
        for (i, g) in groups.iter().enumerate() {
            if self.needs_reseed(g, spacing) {
                seeds[i] = self.medoid(g);
                reseeded = true;
            }
        }
        if reseeded {
            seeds.dedup();
            groups = self.assign(members, &seeds);
        }

        groups.retain(|g| !g.is_empty());
        if groups.len() < 2 {
            return self.chunks(members, b);
        }
        for g in &mut groups {
            g.sort_unstable();
        }
        groups
    }

    /// Equal-size groups in seeded priority order, for degenerate geometry.
    fn chunks(&self, members: &[usize], b: usize) -> Vec<Vec<usize>> {
        let mut ordered = members.to_vec();
        ordered.sort_by_key(|&m| self.priority[m]);
        ordered
            .chunks(members.len().div_ceil(b))
            .map(|c| {
                let mut c = c.to_vec();
                c.sort_unstable();
                c
            })
            .collect()
    }

    fn grow(&mut self, members: Vec<usize>, parent: Option<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mut leaves: Vec<FeatureId> = members.iter().map(|&m| self.geo.features[m]).collect();
        leaves.sort();
        self.nodes.push(TreeNode {
            id,
            parent,
            children: vec![],
            depth,
            leaves,
            feature: None,
            summary: None,
        });

        let children: Vec<Vec<usize>> = if members.len() <= self.config.max_leaf_group {
            members.iter().map(|&m| vec![m]).collect()
        } else {
            self.split(&members)
        };
        for child in children {
            let cid = if child.len() == 1 {
                let cid = self.nodes.len();
                let f = self.geo.features[child[0]];
                self.nodes.push(TreeNode {
                    id: cid,
                    parent: Some(id),
                    children: vec![],
                    depth: depth + 1,
                    leaves: vec![f],
                    feature: Some(f),
                    summary: None,
                });
                cid
            } else {
                self.grow(child, Some(id), depth + 1)
            };
            self.nodes[id].children.push(cid);
        }
        id
    }
}

/// Recursively splits the retained features into an abstraction tree.
pub fn grow_abstraction_tree(geometry: &NeighborGeometry, config: &TreeConfig) -> AbstractionTree {
    let n = geometry.features.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let mut priority = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        priority[i] = rank;
    }
    let mut grower = Grower {
        geo: geometry,
        config,
        priority,
        nodes: Vec::new(),
    };
    let root = grower.grow((0..n).collect(), None, 0);
    AbstractionTree {
        root,
        nodes: grower.nodes,
        config: config.clone(),
    }
}
