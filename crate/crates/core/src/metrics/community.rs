//! Deterministic Louvain-style modularity maximization.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Undirected weighted graph on `0..n`; each edge listed once.
fn one_level(n: usize, edges: &[(usize, usize, f64)], order: &[usize]) -> (Vec<usize>, bool) {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut degree = vec![0.0; n];
    let mut total = 0.0;
    for &(a, b, w) in edges {
        if a == b {
            adj[a].push((a, w));
            degree[a] += 2.0 * w;
        } else {
            adj[a].push((b, w));
            adj[b].push((a, w));
            degree[a] += w;
            degree[b] += w;
        }
        total += w;
    }
    let mut community: Vec<usize> = (0..n).collect();
    if total <= 0.0 {
        return (community, false);
    }
    let m2 = 2.0 * total;
    let mut comm_degree = degree.clone();
    let mut improved = false;
    loop {
        let mut moved = false;
        for &v in order {
            let current = community[v];
            let mut links: Vec<(usize, f64)> = Vec::new();
            for &(u, w) in &adj[v] {
                if u == v {
                    continue;
                }
                match links.iter_mut().find(|(c, _)| *c == community[u]) {
                    Some(e) => e.1 += w,
                    None => links.push((community[u], w)),
                }
            }
            comm_degree[current] -= degree[v];
            let gain = |c: usize, k_in: f64| k_in - comm_degree[c] * degree[v] / m2;
            let own_links = links
                .iter()
                .find(|(c, _)| *c == current)
                .map_or(0.0, |e| e.1);
            let mut best = (current, gain(current, own_links));
            links.sort_by_key(|&(c, _)| c);
            for &(c, k_in) in &links {
                let g = gain(c, k_in);
                if g > best.1 + 1e-12 {
                    best = (c, g);
                }
            }
            comm_degree[best.0] += degree[v];
            if best.0 != current {
                community[v] = best.0;
                moved = true;
                improved = true;
            }
        }
        if !moved {
            break;
        }
    }
    (community, improved)
}

fn relabel(labels: &mut [usize]) -> usize {
    let mut map = std::collections::BTreeMap::new();
    for l in labels.iter_mut() {
        let next = map.len();
        *l = *map.entry(*l).or_insert(next);
    }
    map.len()
}

/// Community id per node, numbered in order of first appearance.
pub fn louvain(n: usize, edges: &[(usize, usize, f64)], seed: u64) -> Vec<usize> {
    let mut membership: Vec<usize> = (0..n).collect();
    let mut level_edges = edges.to_vec();
    let mut level_n = n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut order: Vec<usize> = (0..level_n).collect();
        order.shuffle(&mut rng);
        let (mut comm, improved) = one_level(level_n, &level_edges, &order);
        if !improved {
            break;
        }
        let count = relabel(&mut comm);
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        let mut agg = std::collections::BTreeMap::new();
        for &(a, b, w) in &level_edges {
            let (x, y) = (comm[a].min(comm[b]), comm[a].max(comm[b]));
            *agg.entry((x, y)).or_insert(0.0) += w;
        }
        level_edges = agg.into_iter().map(|((a, b), w)| (a, b, w)).collect();
        level_n = count;
    }
    relabel(&mut membership);
    membership
}

/// Newman modularity of a partition.
pub fn modularity(n: usize, edges: &[(usize, usize, f64)], membership: &[usize]) -> f64 {
    let total: f64 = edges.iter().map(|e| e.2).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut degree = vec![0.0; n];
    let mut inside = std::collections::BTreeMap::<usize, f64>::new();
    let mut tot = std::collections::BTreeMap::<usize, f64>::new();
    for &(a, b, w) in edges {
        degree[a] += w;
        degree[b] += w;
        if membership[a] == membership[b] {
            *inside.entry(membership[a]).or_default() += w;
        }
    }
    for v in 0..n {
        *tot.entry(membership[v]).or_default() += degree[v];
    }
    tot.iter()
        .map(|(c, &d)| inside.get(c).copied().unwrap_or(0.0) / total - (d / (2.0 * total)).powi(2))
        .sum()
}
