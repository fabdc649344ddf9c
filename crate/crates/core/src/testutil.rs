//! Shared fixtures for unit tests.

use rand::Rng;

use crate::graph::BipartiteGraph;

/// The 7-edge, 3-butterfly fixture used throughout: U vertices 0 and 1 are
/// adjacent to all of V; U vertex 2 only to V vertex 2.
pub fn fig1() -> BipartiteGraph {
    BipartiteGraph::from_edges(
        3,
        3,
        [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 2)],
    )
    .unwrap()
}

pub fn complete_bipartite(a: usize, b: usize) -> BipartiteGraph {
    let mut edges = Vec::new();
    for u in 0..a as u32 {
        for v in 0..b as u32 {
            edges.push((u, v));
        }
    }
    BipartiteGraph::from_edges(a, b, edges).unwrap()
}

/// Erdos-Renyi style bipartite graph with edge probability `p`.
pub fn random_bipartite(rng: &mut impl Rng, nu: usize, nv: usize, p: f64) -> BipartiteGraph {
    let mut edges = Vec::new();
    for u in 0..nu as u32 {
        for v in 0..nv as u32 {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    BipartiteGraph::from_edges(nu, nv, edges).unwrap()
}
