//! Independent reference implementations used to validate the parallel
//! algorithms: brute-force butterfly counting by pairwise neighborhood
//! intersection, and sequential one-element-at-a-time peeling.
//!
//! Nothing here shares code with the production paths; everything is
//! deliberately simple and meant for small graphs (roughly up to a few
//! hundred vertices).

use crate::graph::{BipartiteGraph, Side};

/// Exact butterfly counts produced by exhaustive pair enumeration.
pub struct OracleCounts {
    pub total: u64,
    pub per_u: Vec<u64>,
    pub per_v: Vec<u64>,
    pub per_edge: Vec<u64>,
}

fn intersect_sorted(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] < b[j] {
            i += 1;
        } else if a[i] > b[j] {
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
            j += 1;
        }
    }
}

fn choose2(c: u64) -> u64 {
    c * c.saturating_sub(1) / 2
}

/// Counts butterflies by enumerating all U-vertex pairs and intersecting
/// their neighborhoods. Each butterfly is a pair of common neighbors of a
/// U pair, so a pair with `c` common neighbors holds C(c, 2) butterflies.
pub fn brute_force_butterflies(g: &BipartiteGraph) -> OracleCounts {
    let mut total = 0u64;
    let mut per_u = vec![0u64; g.nu()];
    let mut per_v = vec![0u64; g.nv()];
    let mut per_edge = vec![0u64; g.m()];
    let mut common = Vec::new();

    for u1 in 0..g.nu() as u32 {
        for u2 in (u1 + 1)..g.nu() as u32 {
            intersect_sorted(g.nbrs_u(u1), g.nbrs_u(u2), &mut common);
            let c = common.len() as u64;
            if c < 1 {
                continue;
            }
            let b = choose2(c);
            total += b;
            per_u[u1 as usize] += b;
            per_u[u2 as usize] += b;
            for &v in &common {
                per_v[v as usize] += c - 1;
                per_edge[g.edge_id(u1, v).unwrap().0 as usize] += c - 1;
                per_edge[g.edge_id(u2, v).unwrap().0 as usize] += c - 1;
            }
        }
    }

    debug_assert_eq!(per_u.iter().sum::<u64>(), 2 * total);
    debug_assert_eq!(per_v.iter().sum::<u64>(), 2 * total);
    debug_assert_eq!(per_edge.iter().sum::<u64>(), 4 * total);
    OracleCounts {
        total,
        per_u,
        per_v,
        per_edge,
    }
}

/// Sequential tip decomposition: repeatedly remove the minimum-count
/// vertex of the peel side (ties by index). A vertex's tip number is the
/// running maximum of counts seen at removal time.
pub fn sequential_peel_vertices(g: &BipartiteGraph, side: Side) -> Vec<u64> {
    let n = match side {
        Side::U => g.nu(),
        Side::V => g.nv(),
    };
    let nbrs = |x: u32| -> &[u32] {
        match side {
            Side::U => g.nbrs_u(x),
            Side::V => g.nbrs_v(x),
        }
    };

    // Initial counts: butterflies per peel-side vertex. Common neighbors
    // live on the other side, which is never removed, so the pairwise
    // intersection sizes stay fixed for the whole peel.
    let mut counts = vec![0u64; n];
    let mut pair_common = vec![0u64; n * n];
    let mut common = Vec::new();
    for x1 in 0..n as u32 {
        for x2 in (x1 + 1)..n as u32 {
            intersect_sorted(nbrs(x1), nbrs(x2), &mut common);
            let c = common.len() as u64;
            pair_common[x1 as usize * n + x2 as usize] = c;
            pair_common[x2 as usize * n + x1 as usize] = c;
            let b = choose2(c);
            counts[x1 as usize] += b;
            counts[x2 as usize] += b;
        }
    }

    let mut removed = vec![false; n];
    let mut numbers = vec![0u64; n];
    let mut level = 0u64;
    for _ in 0..n {
        let x = (0..n)
            .filter(|&i| !removed[i])
            .min_by_key(|&i| (counts[i], i))
            .unwrap();
        level = level.max(counts[x]);
        numbers[x] = level;
        removed[x] = true;
        for y in 0..n {
            if !removed[y] {
                counts[y] -= choose2(pair_common[x * n + y]);
            }
        }
    }
    numbers
}

/// Sequential wing decomposition: repeatedly remove the minimum-count edge
/// (ties by EdgeId); wing number is the running maximum at removal time.
pub fn sequential_peel_edges(g: &BipartiteGraph) -> Vec<u64> {
    let m = g.m();
    let mut counts = brute_force_butterflies(g).per_edge;
    let mut removed = vec![false; m];
    let mut numbers = vec![0u64; m];
    let mut level = 0u64;

    for _ in 0..m {
        let e = (0..m)
            .filter(|&i| !removed[i])
            .min_by_key(|&i| (counts[i], i))
            .unwrap();
        level = level.max(counts[e]);
        numbers[e] = level;
        removed[e] = true;

        // Subtract every still-live butterfly containing edge e.
        let (u1, v1) = g.edge_endpoints(crate::graph::EdgeId(e as u32));
        for &u2 in g.nbrs_v(v1) {
            if u2 == u1 {
                continue;
            }
            let e2 = g.edge_id(u2, v1).unwrap().0 as usize;
            if removed[e2] {
                continue;
            }
            for &v2 in g.nbrs_u(u1) {
                if v2 == v1 {
                    continue;
                }
                let f1 = match g.edge_id(u1, v2) {
                    Some(id) => id.0 as usize,
                    None => continue,
                };
                let f2 = match g.edge_id(u2, v2) {
                    Some(id) => id.0 as usize,
                    None => continue,
                };
                if removed[f1] || removed[f2] {
                    continue;
                }
                counts[e2] -= 1;
                counts[f1] -= 1;
                counts[f2] -= 1;
            }
        }
    }
    numbers
}
