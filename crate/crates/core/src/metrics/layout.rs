//! Seeded Fruchterman-Reingold layout, one component per disjoint box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_ITERATIONS: usize = 200;
const BOX_GAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Connected components, each sorted, ordered by size desc then smallest member.
pub fn components(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for &(a, b, _) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    out
}

fn fruchterman_reingold(
    nodes: &[usize],
    edges: &[(usize, usize, f64)],
    iterations: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<[f64; 2]> {
    let n = nodes.len();
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    if n < 2 {
        return vec![[0.0, 0.0]; n];
    }
    let local: std::collections::BTreeMap<usize, usize> =
        nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let local_edges: Vec<(usize, usize, f64)> = edges
        .iter()
        .filter_map(|&(a, b, w)| Some((*local.get(&a)?, *local.get(&b)?, w)))
        .collect();
    let k = (1.0 / n as f64).sqrt();
    let mut temp = 0.1;
    let cooling = temp / (iterations as f64 + 1.0);
    for _ in 0..iterations {
        let mut disp = vec![[0.0f64; 2]; n];
        for i in 0..n {
            for j in i + 1..n {
                let dx = pos[i][0] - pos[j][0];
                let dy = pos[i][1] - pos[j][1];
                let d = (dx * dx + dy * dy).sqrt().max(1e-9);
                let f = k * k / d;
                disp[i][0] += dx / d * f;
                disp[i][1] += dy / d * f;
                disp[j][0] -= dx / d * f;
                disp[j][1] -= dy / d * f;
            }
        }
        for &(a, b, w) in &local_edges {
            if a == b {
                continue;
            }
            let dx = pos[a][0] - pos[b][0];
            let dy = pos[a][1] - pos[b][1];
            let d = (dx * dx + dy * dy).sqrt().max(1e-9);
            let f = w * d * d / k;
            disp[a][0] -= dx / d * f;
            disp[a][1] -= dy / d * f;
            disp[b][0] += dx / d * f;
            disp[b][1] += dy / d * f;
        }
        for i in 0..n {
            let len = (disp[i][0].powi(2) + disp[i][1].powi(2)).sqrt();
            if len > 0.0 {
                let step = len.min(temp);
                pos[i][0] += disp[i][0] / len * step;
                pos[i][1] += disp[i][1] / len * step;
            }
        }
        temp -= cooling;
    }
    pos
}

/// Positions for nodes `0..n` and each component's bounding box.
pub fn layout(
    n: usize,
    edges: &[(usize, usize, f64)],
    seed: u64,
    iterations: usize,
) -> (Vec<[f64; 2]>, Vec<BoundingBox>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = vec![[0.0, 0.0]; n];
    let mut boxes = Vec::new();
    let comps = components(n, edges);
    let row_width = (n as f64).sqrt().ceil() * 2.0 + BOX_GAP;
    let (mut cx, mut cy, mut row_h) = (0.0, 0.0, 0.0f64);
    for comp in &comps {
        let local = fruchterman_reingold(comp, edges, iterations, &mut rng);
        let side = (comp.len() as f64).sqrt();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &local {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if cx > 0.0 && cx + side > row_width {
            cx = 0.0;
            cy += row_h + BOX_GAP;
            row_h = 0.0;
        }
        for (&v, p) in comp.iter().zip(&local) {
            for d in 0..2 {
                let span = hi[d] - lo[d];
                let unit = if span > 0.0 {
                    (p[d] - lo[d]) / span
                } else {
                    0.0
                };
                pos[v][d] = unit * side + if d == 0 { cx } else { cy };
            }
        }
        boxes.push(BoundingBox {
            x0: cx,
            y0: cy,
            x1: cx + side,
            y1: cy + side,
        });
        cx += side + BOX_GAP;
        row_h = row_h.max(side);
    }
    (pos, boxes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_at_origin() {
        let (pos, _) = layout(1, &[], 3, DEFAULT_ITERATIONS);
        assert_eq!(pos, vec![[0.0, 0.0]]);
    }

    #[test]
    fn disjoint_cliques_get_disjoint_boxes() {
        let mut e = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in i + 1..4 {
                    e.push((base + i, base + j, 1.0));
                }
            }
        }
        let (pos, boxes) = layout(8, &e, 1, DEFAULT_ITERATIONS);
        assert_eq!(boxes.len(), 2);
        let (a, b) = (boxes[0], boxes[1]);
        assert!(a.x1 < b.x0 || b.x1 < a.x0 || a.y1 < b.y0 || b.y1 < a.y0);
        for (v, p) in pos.iter().enumerate() {
            let bx = if v < 4 { a } else { b };
            assert!(p[0] >= bx.x0 && p[0] <= bx.x1 && p[1] >= bx.y0 && p[1] <= bx.y1);
            assert!(p[0].is_finite() && p[1].is_finite());
        }
    }

    #[test]
    fn seeded_runs_match() {
        let e = vec![(0, 1, 1.0), (1, 2, 0.5), (2, 3, 1.0), (3, 0, 0.2)];
        assert_eq!(layout(4, &e, 9, 50), layout(4, &e, 9, 50));
    }
}
