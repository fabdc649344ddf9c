//! Tip decomposition (vertex peeling) and wing decomposition (edge
//! peeling): rounds pop the minimum-count bucket, fix that key as the tip
//! or wing number of every member, subtract the butterflies destroyed by
//! the removal from the surviving elements, and move them to their new
//! buckets. New counts are clamped from below at the popped key, so popped
//! keys are nondecreasing.
//!
//! Each mode comes in two flavors: recomputing destroyed butterflies from
//! the graph (2-hop traversal / adjacency intersection), or looking them
//! up in wedge tables stored up front, which trades O(total wedges) space
//! for less traversal work.

use rayon::prelude::*;
use thiserror::Error;

use crate::buckets::{BucketBackend, BucketError, BucketQueue, UpdateTriple};
use crate::count::{ButterflyCounts, CountMode};
use crate::graph::{BipartiteGraph, EdgeId, Side};
use crate::ranking::{preprocess, Ranking};
use crate::wedge::{aggregate_pairs, visit_outer, AggKind, Retrieval, DEFAULT_MAX_WEDGES_IN_FLIGHT};

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum PeelSide {
    /// The partition whose vertices, taken as wedge endpoints, produce the
    /// fewest wedges.
    Auto,
    U,
    V,
}

#[derive(Clone, Debug)]
pub struct PeelConfig {
    pub agg: AggKind,
    pub buckets: BucketBackend,
    pub side: PeelSide,
    /// Cap on stored wedge records for the wedge-storing variants.
    pub max_stored_wedges: usize,
}

impl Default for PeelConfig {
    fn default() -> Self {
        PeelConfig {
            agg: AggKind::Hash,
            buckets: BucketBackend::Dense,
            side: PeelSide::Auto,
            max_stored_wedges: DEFAULT_MAX_WEDGES_IN_FLIGHT,
        }
    }
}

#[derive(Debug, Error)]
pub enum PeelError {
    #[error("butterfly counts are per-{found:?}, need per-{expected:?}")]
    ModeMismatch { expected: CountMode, found: CountMode },
    #[error(
        "storing wedges needs {needed} records but the cap is {cap}; \
         raise the cap or use the non-storing peel"
    )]
    WedgeStorage { needed: u64, cap: u64 },
    #[error(transparent)]
    Bucket(#[from] BucketError),
}

/// Tip or wing numbers plus peeling statistics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub mode: CountMode,
    /// Indexed by peel-side vertex (vertex mode) or EdgeId (edge mode).
    pub numbers: Vec<u64>,
    /// Peeling rounds (bucket pops).
    pub rounds: u64,
    /// Maximum initial butterfly count over the peeled elements.
    pub max_b: u64,
    /// Peeled partition; None in edge mode.
    pub peel_side: Option<Side>,
}

/// The partition whose vertices as wedge endpoints give the fewest wedges:
/// wedges with endpoints in X are centered on the other side, so pick the
/// side whose opposite has the smaller sum of C(deg, 2). Ties go to U.
pub fn choose_peel_side(g: &BipartiteGraph) -> Side {
    if g.wedge_end_sum(Side::V) <= g.wedge_end_sum(Side::U) {
        Side::U
    } else {
        Side::V
    }
}

fn resolve_side(g: &BipartiteGraph, side: PeelSide) -> Side {
    match side {
        PeelSide::Auto => choose_peel_side(g),
        PeelSide::U => Side::U,
        PeelSide::V => Side::V,
    }
}

fn choose2(d: u64) -> u64 {
    d * d.saturating_sub(1) / 2
}

const LIVE: u8 = 0;
const PEELING: u8 = 1;
const PEELED: u8 = 2;

/// Shared peeling driver: pops the minimum bucket, assigns its key as the
/// number of all members, asks `deltas` for the (element, count-drop)
/// pairs of the removal, and applies them clamped at the popped key.
/// `audit` sees the live counts and states at the end of every round.
fn drive_peel(
    initial: &[u64],
    cfg: &PeelConfig,
    mut deltas: impl FnMut(u64, &[u32], &[u8]) -> Vec<(u64, u64)>,
    mut audit: impl FnMut(&[u64], &[u8]),
) -> Result<(Vec<u64>, u64, u64), PeelError> {
    let n = initial.len();
    let max_b = initial.iter().copied().max().unwrap_or(0);
    let mut cnt = initial.to_vec();
    let mut bkey = initial.to_vec();
    let mut state = vec![LIVE; n];
    let mut numbers = vec![0u64; n];
    let mut queue = BucketQueue::make_buckets(initial, cfg.buckets);
    let mut rounds = 0u64;
    let mut last_key = 0u64;

    while let Some((key, members)) = queue.pop_min_bucket() {
        debug_assert!(
            rounds == 0 || key >= last_key,
            "popped keys must be nondecreasing under clamping"
        );
        last_key = key;
        rounds += 1;
        for &x in &members {
            numbers[x as usize] = key;
            state[x as usize] = PEELING;
        }
        let pairs = deltas(key, &members, &state);
        let grouped = aggregate_pairs(pairs, cfg.agg, n);
        let mut triples = Vec::with_capacity(grouped.len());
        for (elem, drop) in grouped {
            let e = elem as usize;
            debug_assert_eq!(state[e], LIVE, "deltas must target live elements");
            debug_assert!(drop <= cnt[e], "count drop exceeds live count");
            cnt[e] -= drop;
            let new_key = cnt[e].max(key);
            if new_key != bkey[e] {
                triples.push(UpdateTriple {
                    old_key: bkey[e],
                    elem: elem as u32,
                    new_key,
                });
                bkey[e] = new_key;
            }
        }
        queue.update_buckets(&triples)?;
        for &x in &members {
            state[x as usize] = PEELED;
        }
        audit(&cnt, &state);
    }
    Ok((numbers, rounds, max_b))
}

fn no_audit(_: &[u64], _: &[u8]) {}

fn check_mode(counts: &ButterflyCounts, expected: CountMode) -> Result<(), PeelError> {
    if counts.mode != expected {
        return Err(PeelError::ModeMismatch {
            expected,
            found: counts.mode,
        });
    }
    Ok(())
}

fn side_counts<'a>(g: &BipartiteGraph, counts: &'a ButterflyCounts, side: Side) -> &'a [u64] {
    let (slice, expect) = match side {
        Side::U => (&counts.per_u, g.nu()),
        Side::V => (&counts.per_v, g.nv()),
    };
    assert_eq!(slice.len(), expect, "counts cover the peel side");
    slice
}

fn chunked_pairs<T: Sync>(
    members: &[u32],
    ctx: &T,
    per_member: impl Fn(&T, u32, &mut Vec<(u64, u64)>) + Sync,
) -> Vec<(u64, u64)> {
    let chunk = members
        .len()
        .div_ceil((rayon::current_num_threads() * 4).max(1))
        .max(1);
    members
        .par_chunks(chunk)
        .flat_map_iter(|part| {
            let mut out = Vec::new();
            for &x in part {
                per_member(ctx, x, &mut out);
            }
            out
        })
        .collect()
}

/// Tip decomposition by 2-hop recount: removing x destroys, for every
/// still-live same-side vertex y, C(|N(x) ∩ N(y)|, 2) butterflies (the
/// opposite side is never peeled, so intersections need no filtering).
pub fn peel_vertices(
    g: &BipartiteGraph,
    counts: &ButterflyCounts,
    cfg: &PeelConfig,
) -> Result<Decomposition, PeelError> {
    peel_vertices_audited(g, counts, cfg, no_audit)
}

pub(crate) fn peel_vertices_audited(
    g: &BipartiteGraph,
    counts: &ButterflyCounts,
    cfg: &PeelConfig,
    audit: impl FnMut(&[u64], &[u8]),
) -> Result<Decomposition, PeelError> {
    check_mode(counts, CountMode::Vertex)?;
    let side = resolve_side(g, cfg.side);
    let initial = side_counts(g, counts, side);

    let nbrs_side = |x: u32| match side {
        Side::U => g.nbrs_u(x),
        Side::V => g.nbrs_v(x),
    };
    let nbrs_other = |v: u32| match side {
        Side::U => g.nbrs_v(v),
        Side::V => g.nbrs_u(v),
    };

    let deltas = |_key: u64, members: &[u32], state: &[u8]| {
        chunked_pairs(members, &state, |state, x, out| {
            // Count wedges (x, y) through every center, grouped by y.
            let mut seconds: Vec<u32> = Vec::new();
            for &c in nbrs_side(x) {
                for &y in nbrs_other(c) {
                    if y != x && state[y as usize] == LIVE {
                        seconds.push(y);
                    }
                }
            }
            seconds.sort_unstable();
            let mut i = 0;
            while i < seconds.len() {
                let y = seconds[i];
                let mut j = i + 1;
                while j < seconds.len() && seconds[j] == y {
                    j += 1;
                }
                let b = choose2((j - i) as u64);
                if b > 0 {
                    out.push((y as u64, b));
                }
                i = j;
            }
        })
    };
    let (numbers, rounds, max_b) = drive_peel(initial, cfg, deltas, audit)?;
    Ok(Decomposition {
        mode: CountMode::Vertex,
        numbers,
        rounds,
        max_b,
        peel_side: Some(side),
    })
}

/// Wing decomposition by adjacency intersection. For a peeled edge
/// (u1, v1) and each live co-edge (u2, v1), every common neighbor v2 with
/// both closing edges intact witnesses a destroyed butterfly; edges peeled
/// in the same round are handled by the lowest EdgeId among them (higher
/// ids are treated as still present for that edge's enumeration).
pub fn peel_edges(
    g: &BipartiteGraph,
    counts: &ButterflyCounts,
    cfg: &PeelConfig,
) -> Result<Decomposition, PeelError> {
    peel_edges_audited(g, counts, cfg, no_audit)
}

pub(crate) fn peel_edges_audited(
    g: &BipartiteGraph,
    counts: &ButterflyCounts,
    cfg: &PeelConfig,
    audit: impl FnMut(&[u64], &[u8]),
) -> Result<Decomposition, PeelError> {
    check_mode(counts, CountMode::Edge)?;
    let deltas = |_key: u64, members: &[u32], state: &[u8]| {
        let excl = |f: u32, a: u32, state: &[u8]| {
            state[f as usize] == PEELED || (state[f as usize] == PEELING && f < a)
        };
        let pairs = chunked_pairs(members, &state, |state, a, out| {
            let (u1, v1) = g.edge_endpoints(EdgeId(a));
            let slot_edges = g.v_slot_edges(v1);
            for (idx, &u2) in g.nbrs_v(v1).iter().enumerate() {
                if u2 == u1 {
                    continue;
                }
                let e2 = slot_edges[idx];
                if excl(e2, a, state) {
                    continue;
                }
                // Scan the smaller neighborhood; membership and EdgeIds in
                // the larger come from one binary search per candidate.
                let (small, big) = if g.deg_u(u1) <= g.deg_u(u2) {
                    (u1, u2)
                } else {
                    (u2, u1)
                };
                let first_small = g.first_edge_u(small);
                let mut in_common = 0u64;
                for (pos, &v2) in g.nbrs_u(small).iter().enumerate() {
                    let f_small = first_small + pos as u32;
                    let f_big = match g.edge_id(big, v2) {
                        Some(id) => id.0,
                        None => continue,
                    };
                    if excl(f_small, a, state) || excl(f_big, a, state) {
                        continue;
                    }
                    in_common += 1;
                    if v2 != v1 {
                        out.push((f_small as u64, 1));
                        out.push((f_big as u64, 1));
                    }
                }
                if in_common > 1 {
                    out.push((e2 as u64, in_common - 1));
                }
            }
        });
        // Only live edges take decrements; same-round peers' numbers are
        // already fixed.
        pairs
            .into_iter()
            .filter(|&(f, _)| state[f as usize] == LIVE)
            .collect()
    };
    let (numbers, rounds, max_b) = drive_peel(&counts.per_edge, cfg, deltas, audit)?;
    Ok(Decomposition {
        mode: CountMode::Edge,
        numbers,
        rounds,
        max_b,
        peel_side: None,
    })
}

/// All retrieved wedges, keyed for peeling lookups. Endpoint rows hold
/// (other endpoint, center) sorted pairs; center rows hold endpoint pairs.
struct VertexWedgeStore {
    we_offs: Vec<usize>,
    we: Vec<(u32, u32)>,
    wc_offs: Vec<usize>,
    wc: Vec<(u32, u32)>,
}

fn sorted_csr<T: Ord + Copy + Send>(n: usize, mut items: Vec<(u32, T)>) -> (Vec<usize>, Vec<T>) {
    items.par_sort_unstable();
    let mut offs = vec![0usize; n + 1];
    for &(k, _) in &items {
        offs[k as usize + 1] += 1;
    }
    for i in 0..n {
        offs[i + 1] += offs[i];
    }
    (offs, items.into_iter().map(|(_, v)| v).collect())
}

/// A stored wedge: (endpoint, endpoint, center, edge1, edge2) in global
/// vertex ids and original EdgeIds.
type WedgeRecord = (u32, u32, u32, u32, u32);

/// Collects every wedge once (in global-id space, with both EdgeIds) under
/// side ordering, enforcing the storage cap first.
fn collect_wedges(g: &BipartiteGraph, cap: usize) -> Result<Vec<WedgeRecord>, PeelError> {
    let rg = preprocess(g, &Ranking::side(g));
    let needed = rg.total_wedges();
    if needed > cap as u64 {
        return Err(PeelError::WedgeStorage {
            needed,
            cap: cap as u64,
        });
    }
    Ok((0..rg.n() as u32)
        .into_par_iter()
        .flat_map_iter(|x| {
            let mut out = Vec::new();
            visit_outer(&rg, Retrieval::Standard, x, &mut |w| {
                out.push((
                    rg.global_of_rank(w.e1),
                    rg.global_of_rank(w.e2),
                    rg.global_of_rank(w.center),
                    w.edge1.0,
                    w.edge2.0,
                ));
            });
            out
        })
        .collect())
}

impl VertexWedgeStore {
    fn build(g: &BipartiteGraph, cap: usize) -> Result<Self, PeelError> {
        let wedges = collect_wedges(g, cap)?;
        let n = g.n_total();
        let mut we_items = Vec::with_capacity(wedges.len() * 2);
        let mut wc_items = Vec::with_capacity(wedges.len());
        for &(e1, e2, c, _, _) in &wedges {
            we_items.push((e1, (e2, c)));
            we_items.push((e2, (e1, c)));
            wc_items.push((c, (e1, e2)));
        }
        let (we_offs, we) = sorted_csr(n, we_items);
        let (wc_offs, wc) = sorted_csr(n, wc_items);
        Ok(VertexWedgeStore {
            we_offs,
            we,
            wc_offs,
            wc,
        })
    }

    fn endpoint_row(&self, gid: u32) -> &[(u32, u32)] {
        &self.we[self.we_offs[gid as usize]..self.we_offs[gid as usize + 1]]
    }

    fn center_row(&self, gid: u32) -> &[(u32, u32)] {
        &self.wc[self.wc_offs[gid as usize]..self.wc_offs[gid as usize + 1]]
    }

    /// Centers shared by an endpoint pair: the contiguous run of `row`
    /// whose first component is `other`.
    fn centers_of<'a>(&self, row: &'a [(u32, u32)], other: u32) -> &'a [(u32, u32)] {
        let lo = row.partition_point(|&(y, _)| y < other);
        let hi = row.partition_point(|&(y, _)| y <= other);
        &row[lo..hi]
    }
}

/// Tip decomposition over stored wedges: butterflies lost to a peeled x
/// are read from the wedge tables instead of the graph. Wedges where x is
/// an endpoint charge C(run, 2) to the surviving second endpoint; wedges
/// where x is a center charge 1 to each surviving partner center.
pub fn wpeel_vertices(
    g: &BipartiteGraph,
    counts: &ButterflyCounts,
    cfg: &PeelConfig,
) -> Result<Decomposition, PeelError> {
    check_mode(counts, CountMode::Vertex)?;
    let side = resolve_side(g, cfg.side);
    let initial = side_counts(g, counts, side);
    let store = VertexWedgeStore::build(g, cfg.max_stored_wedges)?;
    let gid_of = |x: u32| match side {
        Side::U => g.gid_of_u(x),
        Side::V => g.gid_of_v(x),
    };

    let deltas = |_key: u64, members: &[u32], state: &[u8]| {
        chunked_pairs(members, &state, |state, x, out| {
            let gx = gid_of(x);
            // x as endpoint: runs grouped by the second endpoint.
            let row = store.endpoint_row(gx);
            let mut i = 0;
            while i < row.len() {
                let y = row[i].0;
                let mut j = i + 1;
                while j < row.len() && row[j].0 == y {
                    j += 1;
                }
                let y_local = g.local_of_gid(y);
                if state[y_local as usize] == LIVE {
                    let b = choose2((j - i) as u64);
                    if b > 0 {
                        out.push((y_local as u64, b));
                    }
                }
                i = j;
            }
            // x as center: each partner center of the same endpoint pair
            // loses one butterfly.
            for &(a, b) in store.center_row(gx) {
                for &(_, z) in store.centers_of(store.endpoint_row(a), b) {
                    if z == gx {
                        continue;
                    }
                    let z_local = g.local_of_gid(z);
                    if state[z_local as usize] == LIVE {
                        out.push((z_local as u64, 1));
                    }
                }
            }
        })
    };
    let (numbers, rounds, max_b) = drive_peel(initial, cfg, deltas, no_audit)?;
    Ok(Decomposition {
        mode: CountMode::Vertex,
        numbers,
        rounds,
        max_b,
        peel_side: Some(side),
    })
}

/// Stored wedges keyed for edge peeling: per edge, the second endpoints of
/// its wedges (with the co-edge id); per endpoint, the centers pairing it
/// with each second endpoint (with both EdgeIds).
struct EdgeWedgeStore {
    w_offs: Vec<usize>,
    w: Vec<(u32, u32)>,
    we_offs: Vec<usize>,
    we: Vec<(u32, u32, u32, u32)>,
}

impl EdgeWedgeStore {
    fn build(g: &BipartiteGraph, cap: usize) -> Result<Self, PeelError> {
        let wedges = collect_wedges(g, cap)?;
        let mut w_items = Vec::with_capacity(wedges.len() * 2);
        let mut we_items = Vec::with_capacity(wedges.len() * 2);
        for &(e1, e2, c, ed1, ed2) in &wedges {
            w_items.push((ed1, (e2, ed2)));
            w_items.push((ed2, (e1, ed1)));
            we_items.push((e1, (e2, c, ed1, ed2)));
            we_items.push((e2, (e1, c, ed2, ed1)));
        }
        let (w_offs, w) = sorted_csr(g.m(), w_items);
        let (we_offs, we) = sorted_csr(g.n_total(), we_items);
        Ok(EdgeWedgeStore {
            w_offs,
            w,
            we_offs,
            we,
        })
    }

    fn edge_row(&self, e: u32) -> &[(u32, u32)] {
        &self.w[self.w_offs[e as usize]..self.w_offs[e as usize + 1]]
    }

    fn endpoint_runs(&self, gid: u32, other: u32) -> &[(u32, u32, u32, u32)] {
        let row = &self.we[self.we_offs[gid as usize]..self.we_offs[gid as usize + 1]];
        let lo = row.partition_point(|&(y, ..)| y < other);
        let hi = row.partition_point(|&(y, ..)| y <= other);
        &row[lo..hi]
    }
}

/// Wing decomposition over stored wedges: for a peeled edge, wedges where
/// it plays endpoint-center are looked up by EdgeId, and each surviving
/// partner center closes one butterfly whose three other edges are
/// decremented. Same-round ties defer to the lowest EdgeId.
pub fn wpeel_edges(
    g: &BipartiteGraph,
    counts: &ButterflyCounts,
    cfg: &PeelConfig,
) -> Result<Decomposition, PeelError> {
    check_mode(counts, CountMode::Edge)?;
    let store = EdgeWedgeStore::build(g, cfg.max_stored_wedges)?;

    let deltas = |_key: u64, members: &[u32], state: &[u8]| {
        let excl = |f: u32, a: u32, state: &[u8]| {
            state[f as usize] == PEELED || (state[f as usize] == PEELING && f < a)
        };
        let pairs = chunked_pairs(members, &state, |state, a, out| {
            let (u1, v1) = g.edge_endpoints(EdgeId(a));
            let (gu, gv) = (g.gid_of_u(u1), g.gid_of_v(v1));
            for &(z, e_cz) in store.edge_row(a) {
                if excl(e_cz, a, state) {
                    continue;
                }
                // z sits on one endpoint's side; the other vertex of `a`
                // is the wedge's center.
                let (endpoint, center) = if g.side_of_gid(z) == g.side_of_gid(gu) {
                    (gu, gv)
                } else {
                    (gv, gu)
                };
                for &(_, w_center, e_ew, e_wz) in store.endpoint_runs(endpoint, z) {
                    if w_center == center {
                        continue;
                    }
                    if excl(e_ew, a, state) || excl(e_wz, a, state) {
                        continue;
                    }
                    out.push((e_ew as u64, 1));
                    out.push((e_wz as u64, 1));
                    out.push((e_cz as u64, 1));
                }
            }
        });
        pairs
            .into_iter()
            .filter(|&(f, _)| state[f as usize] == LIVE)
            .collect()
    };
    let (numbers, rounds, max_b) = drive_peel(&counts.per_edge, cfg, deltas, no_audit)?;
    Ok(Decomposition {
        mode: CountMode::Edge,
        numbers,
        rounds,
        max_b,
        peel_side: None,
    })
}
