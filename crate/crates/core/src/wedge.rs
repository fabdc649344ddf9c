//! Wedge retrieval over the rank-renamed graph and aggregation of wedges by
//! endpoint pair.
//!
//! Retrieval visits exactly the wedges whose center and second endpoint are
//! ranked after the first endpoint, either by iterating from the lowest
//! ranked endpoint (standard) or from the highest ranked endpoint (the
//! cache-friendly order); both visit the same wedge multiset. Aggregation
//! groups wedges by endpoint pair under five interchangeable backends:
//! sorting, hashing, histogramming, and simple / wedge-aware batching.

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::EdgeId;
use crate::ranking::RankedGraph;

pub const DEFAULT_MAX_WEDGES_IN_FLIGHT: usize = 1 << 27;

/// A wedge in rank space: endpoints `e1 < e2` (by rank), center on the
/// opposite partition, plus the original EdgeIds of its two edges.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Wedge {
    pub e1: u32,
    pub e2: u32,
    pub center: u32,
    /// Edge (e1, center).
    pub edge1: EdgeId,
    /// Edge (e2, center).
    pub edge2: EdgeId,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Retrieval {
    /// Iterate from the lowest-ranked endpoint.
    Standard,
    /// Iterate from the highest-ranked endpoint; same wedges, better
    /// locality on the accumulation side.
    CacheOpt,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum AggKind {
    Sort,
    Hash,
    Hist,
    BatchSimple,
    BatchWedgeAware,
}

impl AggKind {
    pub const ALL: [AggKind; 5] = [
        AggKind::Sort,
        AggKind::Hash,
        AggKind::Hist,
        AggKind::BatchSimple,
        AggKind::BatchWedgeAware,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggKind::Sort => "sort",
            AggKind::Hash => "hash",
            AggKind::Hist => "hist",
            AggKind::BatchSimple => "batchs",
            AggKind::BatchWedgeAware => "batchwa",
        }
    }

    pub fn is_batch(self) -> bool {
        matches!(self, AggKind::BatchSimple | AggKind::BatchWedgeAware)
    }
}

#[derive(Copy, Clone, Debug)]
pub struct AggConfig {
    pub kind: AggKind,
    pub max_wedges_in_flight: usize,
}

impl Default for AggConfig {
    fn default() -> Self {
        AggConfig {
            kind: AggKind::Sort,
            max_wedges_in_flight: DEFAULT_MAX_WEDGES_IN_FLIGHT,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggError {
    #[error("wedge budget {budget} cannot hold a single vertex's {needed} wedges")]
    BudgetTooSmall { budget: usize, needed: u64 },
    #[error("wedge budget must be positive")]
    ZeroBudget,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum BatchMode {
    Simple,
    WedgeAware,
}

/// Visits every wedge once, in parallel over outer vertices.
pub fn for_each_wedge<F>(rg: &RankedGraph, retrieval: Retrieval, f: F)
where
    F: Fn(Wedge) + Sync,
{
    (0..rg.n() as u32).into_par_iter().for_each(|x| {
        visit_outer(rg, retrieval, x, &mut |w| f(w));
    });
}

/// Parallel wedge retrieval from the lowest-ranked endpoint.
pub fn get_wedges<F>(rg: &RankedGraph, f: F)
where
    F: Fn(Wedge) + Sync,
{
    for_each_wedge(rg, Retrieval::Standard, f)
}

/// Parallel wedge retrieval iterating from the higher-ranked endpoint;
/// identical wedge multiset to [`get_wedges`], different emission order.
pub fn get_wedges_cacheopt<F>(rg: &RankedGraph, f: F)
where
    F: Fn(Wedge) + Sync,
{
    for_each_wedge(rg, Retrieval::CacheOpt, f)
}

/// Sequentially visits the wedges whose outer vertex is `x`. The outer
/// vertex is the lower endpoint under standard retrieval and the higher
/// endpoint under the cache-optimized order.
pub fn visit_outer(rg: &RankedGraph, retrieval: Retrieval, x: u32, f: &mut impl FnMut(Wedge)) {
    match retrieval {
        Retrieval::Standard => {
            let nbrs = rg.nbrs(x);
            let edges = rg.slot_edges(x);
            for i in 0..rg.self_deg(x) {
                let y = nbrs[i];
                let e1 = EdgeId(edges[i]);
                let dy = rg.deg_above(y, x);
                let ynbrs = rg.nbrs(y);
                let yedges = rg.slot_edges(y);
                for j in 0..dy {
                    f(Wedge {
                        e1: x,
                        e2: ynbrs[j],
                        center: y,
                        edge1: e1,
                        edge2: EdgeId(yedges[j]),
                    });
                }
            }
        }
        Retrieval::CacheOpt => {
            let nbrs = rg.nbrs(x);
            let edges = rg.slot_edges(x);
            for i in 0..nbrs.len() {
                let w = nbrs[i];
                let e2 = EdgeId(edges[i]);
                let start = suffix_start(rg, w, x);
                let wnbrs = rg.nbrs(w);
                let wedges = rg.slot_edges(w);
                for j in start..wnbrs.len() {
                    f(Wedge {
                        e1: wnbrs[j],
                        e2: x,
                        center: w,
                        edge1: EdgeId(wedges[j]),
                        edge2: e2,
                    });
                }
            }
        }
    }
}

/// First index of w's rank-sorted list whose entries rank strictly below
/// both w and the outer vertex u (skipping u itself when it sits in the
/// prefix boundary).
fn suffix_start(rg: &RankedGraph, w: u32, u: u32) -> usize {
    if u < w {
        rg.deg_above(w, u) + 1
    } else {
        rg.deg_above(w, w)
    }
}

/// Wedges visited per outer vertex under the given retrieval order.
pub fn wedge_counts_per_outer(rg: &RankedGraph, retrieval: Retrieval) -> Vec<u64> {
    (0..rg.n() as u32)
        .into_par_iter()
        .map(|x| match retrieval {
            Retrieval::Standard => rg.nbrs(x)[..rg.self_deg(x)]
                .iter()
                .map(|&y| rg.deg_above(y, x) as u64)
                .sum(),
            Retrieval::CacheOpt => rg
                .nbrs(x)
                .iter()
                .map(|&w| (rg.deg(w) - suffix_start(rg, w, x)) as u64)
                .sum(),
        })
        .collect()
}

/// Wedge frequencies keyed by endpoint pair. Entries are canonically
/// sorted by packed key `e1 * n + e2` (with `e1 < e2` by rank), so equal
/// inputs produce identical tables regardless of backend or thread count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WedgeCountTable {
    n: u64,
    entries: Vec<(u64, u64)>,
}

impl WedgeCountTable {
    fn new(n: usize, entries: Vec<(u64, u64)>) -> Self {
        WedgeCountTable {
            n: (n as u64).max(1),
            entries,
        }
    }

    pub fn pack(&self, e1: u32, e2: u32) -> u64 {
        debug_assert!(e1 < e2);
        e1 as u64 * self.n + e2 as u64
    }

    pub fn unpack(&self, key: u64) -> (u32, u32) {
        ((key / self.n) as u32, (key % self.n) as u32)
    }

    /// Wedge multiplicity of an endpoint pair (0 when absent).
    pub fn get(&self, e1: u32, e2: u32) -> u64 {
        let key = self.pack(e1, e2);
        match self.entries.binary_search_by_key(&key, |&(k, _)| k) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    pub fn entries(&self) -> &[(u64, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_wedges(&self) -> u64 {
        self.entries.iter().map(|&(_, d)| d).sum()
    }
}

/// Packs a wedge into its endpoint-pair key.
fn wedge_key(n: u64, w: &Wedge) -> u64 {
    w.e1 as u64 * n + w.e2 as u64
}

/// Splits the outer-vertex range into batches. Simple batches hold a fixed
/// number of vertices (the budget); wedge-aware batches are built greedily
/// over the per-vertex wedge counts so no batch exceeds the budget.
pub fn batch_plan(
    rg: &RankedGraph,
    retrieval: Retrieval,
    mode: BatchMode,
    budget: usize,
) -> Result<Vec<Range<u32>>, AggError> {
    if budget == 0 {
        return Err(AggError::ZeroBudget);
    }
    let n = rg.n() as u32;
    match mode {
        BatchMode::Simple => Ok((0..n)
            .step_by(budget)
            .map(|lo| lo..(lo + budget as u32).min(n))
            .collect()),
        BatchMode::WedgeAware => {
            let counts = wedge_counts_per_outer(rg, retrieval);
            let mut plan = Vec::new();
            let mut lo = 0u32;
            let mut acc = 0u64;
            for x in 0..n {
                let c = counts[x as usize];
                if c > budget as u64 {
                    return Err(AggError::BudgetTooSmall {
                        budget,
                        needed: c,
                    });
                }
                if acc + c > budget as u64 {
                    plan.push(lo..x);
                    lo = x;
                    acc = 0;
                }
                acc += c;
            }
            if n > 0 {
                plan.push(lo..n);
            }
            Ok(plan)
        }
    }
}

/// Aggregates all wedges by endpoint pair into an exact frequency table.
/// The fully parallel backends materialize at most `max_wedges_in_flight`
/// packed wedges at a time and merge per-chunk results, so a single
/// vertex's wedge stream may span chunks; the batching backends aggregate
/// each outer vertex serially in a dense scratch array and never
/// materialize wedges.
pub fn get_freq(
    rg: &RankedGraph,
    retrieval: Retrieval,
    cfg: &AggConfig,
) -> Result<WedgeCountTable, AggError> {
    if cfg.max_wedges_in_flight == 0 {
        return Err(AggError::ZeroBudget);
    }
    let entries = match cfg.kind {
        AggKind::Sort | AggKind::Hash | AggKind::Hist => {
            chunked_freq(rg, retrieval, cfg)
        }
        AggKind::BatchSimple | AggKind::BatchWedgeAware => batched_freq(rg, retrieval, cfg)?,
    };
    Ok(WedgeCountTable::new(rg.n(), merge_by_key(entries)))
}

/// Sorts and sums duplicate keys, producing the canonical entry order.
fn merge_by_key(mut entries: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    entries.par_sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(entries.len());
    for (k, d) in entries {
        match out.last_mut() {
            Some((lk, ld)) if *lk == k => *ld += d,
            _ => out.push((k, d)),
        }
    }
    out
}

/// One segment of an outer vertex's wedge stream: wedges [lo, hi).
struct Segment {
    outer: u32,
    lo: u64,
    hi: u64,
}

fn chunked_freq(rg: &RankedGraph, retrieval: Retrieval, cfg: &AggConfig) -> Vec<(u64, u64)> {
    let n = rg.n() as u64;
    let counts = wedge_counts_per_outer(rg, retrieval);
    let budget = cfg.max_wedges_in_flight as u64;

    // Greedy chunking; oversized vertices split across chunk boundaries.
    let mut chunks: Vec<Vec<Segment>> = Vec::new();
    let mut cur: Vec<Segment> = Vec::new();
    let mut left = budget;
    for (x, &c) in counts.iter().enumerate() {
        let mut off = 0u64;
        let mut rem = c;
        while rem > 0 {
            let take = rem.min(left);
            cur.push(Segment {
                outer: x as u32,
                lo: off,
                hi: off + take,
            });
            off += take;
            rem -= take;
            left -= take;
            if left == 0 {
                chunks.push(std::mem::take(&mut cur));
                left = budget;
            }
        }
    }
    if !cur.is_empty() {
        chunks.push(cur);
    }

    let mut all = Vec::new();
    for chunk in chunks {
        // Materialize the chunk's packed keys in parallel.
        let keys: Vec<u64> = chunk
            .par_iter()
            .flat_map_iter(|seg| {
                let mut buf = Vec::with_capacity((seg.hi - seg.lo) as usize);
                enumerate_slice(rg, retrieval, seg, &mut |w| buf.push(wedge_key(n, &w)));
                buf
            })
            .collect();
        match cfg.kind {
            AggKind::Sort => {
                let mut keys = keys;
                keys.par_sort_unstable();
                run_length(&keys, &mut all);
            }
            AggKind::Hash => {
                let table = AtomicCountTable::with_capacity(keys.len());
                keys.par_iter().for_each(|&k| table.add(k, 1));
                table.drain_into(&mut all);
            }
            AggKind::Hist => {
                histogram(&keys, &mut all);
            }
            _ => unreachable!(),
        }
    }
    all
}

/// Visits wedges [seg.lo, seg.hi) of an outer vertex, skipping whole
/// neighbor groups where possible.
fn enumerate_slice(
    rg: &RankedGraph,
    retrieval: Retrieval,
    seg: &Segment,
    f: &mut impl FnMut(Wedge),
) {
    let x = seg.outer;
    let mut idx = 0u64;
    let group_count = |y: u32| -> (u64, usize) {
        match retrieval {
            Retrieval::Standard => (rg.deg_above(y, x) as u64, 0),
            Retrieval::CacheOpt => {
                let start = suffix_start(rg, y, x);
                ((rg.deg(y) - start) as u64, start)
            }
        }
    };
    let nbrs = rg.nbrs(x);
    let edges = rg.slot_edges(x);
    let end = match retrieval {
        Retrieval::Standard => rg.self_deg(x),
        Retrieval::CacheOpt => nbrs.len(),
    };
    for i in 0..end {
        if idx >= seg.hi {
            break;
        }
        let y = nbrs[i];
        let (c, base) = group_count(y);
        if idx + c <= seg.lo {
            idx += c;
            continue;
        }
        let j_lo = seg.lo.saturating_sub(idx) as usize;
        let j_hi = ((seg.hi - idx) as usize).min(c as usize);
        let ynbrs = rg.nbrs(y);
        let yedges = rg.slot_edges(y);
        let ex = EdgeId(edges[i]);
        for j in j_lo..j_hi {
            let slot = base + j;
            let w = match retrieval {
                Retrieval::Standard => Wedge {
                    e1: x,
                    e2: ynbrs[slot],
                    center: y,
                    edge1: ex,
                    edge2: EdgeId(yedges[slot]),
                },
                Retrieval::CacheOpt => Wedge {
                    e1: ynbrs[slot],
                    e2: x,
                    center: y,
                    edge1: EdgeId(yedges[slot]),
                    edge2: ex,
                },
            };
            f(w);
        }
        idx += c;
    }
}

fn run_length(sorted: &[u64], out: &mut Vec<(u64, u64)>) {
    let mut i = 0;
    while i < sorted.len() {
        let k = sorted[i];
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == k {
            j += 1;
        }
        out.push((k, (j - i) as u64));
        i = j;
    }
}

/// Semisort-style grouping: scatter keys into 256 partitions by a hash of
/// the key, then sort and run-length encode each partition in parallel.
fn histogram(keys: &[u64], out: &mut Vec<(u64, u64)>) {
    const PARTS: usize = 256;
    let mut parts: Vec<Vec<u64>> = (0..PARTS).map(|_| Vec::new()).collect();
    for &k in keys {
        parts[(mix64(k) >> 56) as usize].push(k);
    }
    let results: Vec<Vec<(u64, u64)>> = parts
        .into_par_iter()
        .map(|mut part| {
            part.sort_unstable();
            let mut local = Vec::new();
            run_length(&part, &mut local);
            local
        })
        .collect();
    for mut r in results {
        out.append(&mut r);
    }
}

fn batched_freq(
    rg: &RankedGraph,
    retrieval: Retrieval,
    cfg: &AggConfig,
) -> Result<Vec<(u64, u64)>, AggError> {
    let n = rg.n();
    let mode = match cfg.kind {
        AggKind::BatchSimple => BatchMode::Simple,
        AggKind::BatchWedgeAware => BatchMode::WedgeAware,
        _ => unreachable!(),
    };
    let plan = batch_plan(rg, retrieval, mode, cfg.max_wedges_in_flight)?;
    let mut all: Vec<(u64, u64)> = Vec::new();
    for range in plan {
        let parts = split_range(range, rayon::current_num_threads() * 4);
        let outputs: Vec<Vec<(u64, u64)>> = parts
            .into_par_iter()
            .map(|part| {
                let mut dense = vec![0u64; n];
                let mut touched: Vec<u32> = Vec::new();
                let mut out = Vec::new();
                for x in part {
                    visit_outer(rg, retrieval, x, &mut |w| {
                        let other = match retrieval {
                            Retrieval::Standard => w.e2,
                            Retrieval::CacheOpt => w.e1,
                        };
                        if dense[other as usize] == 0 {
                            touched.push(other);
                        }
                        dense[other as usize] += 1;
                    });
                    for &t in &touched {
                        let key = match retrieval {
                            Retrieval::Standard => x as u64 * n as u64 + t as u64,
                            Retrieval::CacheOpt => t as u64 * n as u64 + x as u64,
                        };
                        out.push((key, dense[t as usize]));
                        dense[t as usize] = 0;
                    }
                    touched.clear();
                }
                out
            })
            .collect();
        for mut o in outputs {
            all.append(&mut o);
        }
    }
    Ok(all)
}

/// Splits a range into at most `parts` contiguous sub-ranges.
pub(crate) fn split_range(range: Range<u32>, parts: usize) -> Vec<Range<u32>> {
    let len = (range.end - range.start) as usize;
    if len == 0 {
        return Vec::new();
    }
    let parts = parts.clamp(1, len);
    let chunk = len.div_ceil(parts);
    (0..len)
        .step_by(chunk)
        .map(|off| {
            let lo = range.start + off as u32;
            lo..(lo + chunk as u32).min(range.end)
        })
        .collect()
}

/// Groups (key, value) pairs and sums values per key using the requested
/// backend; output is sorted by key. `key_bound` bounds the key domain for
/// the dense batching backends.
pub fn aggregate_pairs(pairs: Vec<(u64, u64)>, kind: AggKind, key_bound: usize) -> Vec<(u64, u64)> {
    match kind {
        AggKind::Sort => merge_by_key(pairs),
        AggKind::Hash => {
            let table = AtomicCountTable::with_capacity(pairs.len());
            pairs.par_iter().for_each(|&(k, v)| table.add(k, v));
            let mut out = Vec::new();
            table.drain_into(&mut out);
            merge_by_key(out)
        }
        AggKind::Hist => {
            const PARTS: usize = 256;
            let mut parts: Vec<Vec<(u64, u64)>> = (0..PARTS).map(|_| Vec::new()).collect();
            for &(k, v) in &pairs {
                parts[(mix64(k) >> 56) as usize].push((k, v));
            }
            let results: Vec<Vec<(u64, u64)>> =
                parts.into_par_iter().map(merge_by_key).collect();
            merge_by_key(results.into_iter().flatten().collect())
        }
        AggKind::BatchSimple | AggKind::BatchWedgeAware => {
            let dense: Vec<AtomicU64> = (0..key_bound).map(|_| AtomicU64::new(0)).collect();
            pairs.par_iter().for_each(|&(k, v)| {
                dense[k as usize].fetch_add(v, Ordering::Relaxed);
            });
            (0..key_bound as u64)
                .into_par_iter()
                .filter_map(|k| {
                    let v = dense[k as usize].load(Ordering::Relaxed);
                    (v > 0).then_some((k, v))
                })
                .collect()
        }
    }
}

pub(crate) fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Fixed-capacity concurrent count table: open addressing with linear
/// probing, CAS key claims, and atomic additions.
struct AtomicCountTable {
    keys: Vec<AtomicU64>,
    counts: Vec<AtomicU64>,
    mask: usize,
}

const EMPTY_KEY: u64 = u64::MAX;

impl AtomicCountTable {
    /// Capacity for up to `max_inserts` distinct keys at load factor <= 1/2.
    fn with_capacity(max_inserts: usize) -> Self {
        let cap = (max_inserts.max(4) * 2).next_power_of_two();
        AtomicCountTable {
            keys: (0..cap).map(|_| AtomicU64::new(EMPTY_KEY)).collect(),
            counts: (0..cap).map(|_| AtomicU64::new(0)).collect(),
            mask: cap - 1,
        }
    }

    fn add(&self, key: u64, v: u64) {
        debug_assert_ne!(key, EMPTY_KEY);
        let mut i = (mix64(key) as usize) & self.mask;
        loop {
            let k = self.keys[i].load(Ordering::Relaxed);
            if k == key {
                self.counts[i].fetch_add(v, Ordering::Relaxed);
                return;
            }
            if k == EMPTY_KEY {
                match self.keys[i].compare_exchange(
                    EMPTY_KEY,
                    key,
                    Ordering::Relaxed,
                    Ordering::Relaxed,
                ) {
                    Ok(_) => {
                        self.counts[i].fetch_add(v, Ordering::Relaxed);
                        return;
                    }
                    Err(existing) if existing == key => {
                        self.counts[i].fetch_add(v, Ordering::Relaxed);
                        return;
                    }
                    Err(_) => continue,
                }
            }
            i = (i + 1) & self.mask;
        }
    }

    fn drain_into(&self, out: &mut Vec<(u64, u64)>) {
        for (k, c) in self.keys.iter().zip(&self.counts) {
            let key = k.load(Ordering::Relaxed);
            if key != EMPTY_KEY {
                out.push((key, c.load(Ordering::Relaxed)));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::{preprocess, Ranking};
    use crate::testutil::{complete_bipartite, fig1, random_bipartite};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Mutex;

    fn collect_wedges(rg: &RankedGraph, retrieval: Retrieval) -> Vec<Wedge> {
        let out = Mutex::new(Vec::new());
        for_each_wedge(rg, retrieval, |w| out.lock().unwrap().push(w));
        let mut v = out.into_inner().unwrap();
        v.sort_unstable();
        v
    }

    #[test]
    fn fig1_degree_order_wedges() {
        let g = fig1();
        let rg = preprocess(&g, &Ranking::degree(&g));
        let wedges = collect_wedges(&rg, Retrieval::Standard);
        assert_eq!(wedges.len(), 6);
        // Ranks: v3=0, u1=1, u2=2, v1=3, v2=4, u3=5. Four wedges fan out of
        // v3 and two out of u1.
        assert_eq!(wedges.iter().filter(|w| w.e1 == 0).count(), 4);
        assert_eq!(wedges.iter().filter(|w| w.e1 == 1).count(), 2);
        for w in &wedges {
            assert!(w.e2 > w.e1 && w.center > w.e1);
        }
    }

    #[test]
    fn fig1_freq_groups() {
        let g = fig1();
        let rg = preprocess(&g, &Ranking::degree(&g));
        let table = get_freq(&rg, Retrieval::Standard, &AggConfig::default()).unwrap();
        // Groups (v3,v1), (v3,v2), (u1,u2), each holding two wedges.
        assert_eq!(table.len(), 3);
        assert_eq!(table.get(0, 3), 2);
        assert_eq!(table.get(0, 4), 2);
        assert_eq!(table.get(1, 2), 2);
        assert_eq!(table.total_wedges(), 6);
    }

    #[test]
    fn k22_single_group() {
        let g = complete_bipartite(2, 2);
        let rg = preprocess(&g, &Ranking::side(&g));
        let table = get_freq(&rg, Retrieval::Standard, &AggConfig::default()).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.entries()[0].1, 2);
    }

    #[test]
    fn edgeless_graph_no_wedges() {
        let g = crate::graph::BipartiteGraph::from_edges(3, 3, []).unwrap();
        let rg = preprocess(&g, &Ranking::side(&g));
        assert!(collect_wedges(&rg, Retrieval::Standard).is_empty());
        assert!(collect_wedges(&rg, Retrieval::CacheOpt).is_empty());
    }

    #[test]
    fn cacheopt_same_multiset_fig1() {
        let g = fig1();
        let rg = preprocess(&g, &Ranking::degree(&g));
        assert_eq!(
            collect_wedges(&rg, Retrieval::Standard),
            collect_wedges(&rg, Retrieval::CacheOpt)
        );
    }

    #[test]
    fn cacheopt_same_multiset_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let g = random_bipartite(&mut rng, 25, 20, 0.25);
            for kind in crate::ranking::RankKind::ALL {
                let rg = preprocess(&g, &Ranking::by_kind(&g, kind));
                assert_eq!(
                    collect_wedges(&rg, Retrieval::Standard),
                    collect_wedges(&rg, Retrieval::CacheOpt)
                );
            }
        }
    }

    #[test]
    fn retrieved_wedge_count_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_bipartite(&mut rng, 30, 30, 0.2);
        let rg = preprocess(&g, &Ranking::degree(&g));
        let total: u64 = wedge_counts_per_outer(&rg, Retrieval::Standard).iter().sum();
        assert_eq!(total, rg.total_wedges());
        assert_eq!(collect_wedges(&rg, Retrieval::Standard).len() as u64, total);
        let cache_total: u64 =
            wedge_counts_per_outer(&rg, Retrieval::CacheOpt).iter().sum();
        assert_eq!(cache_total, total);
    }

    #[test]
    fn all_backends_identical_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..8 {
            let g = random_bipartite(&mut rng, 20, 25, 0.3);
            let rg = preprocess(&g, &Ranking::degree(&g));
            let reference = get_freq(&rg, Retrieval::Standard, &AggConfig::default()).unwrap();
            for kind in AggKind::ALL {
                for retrieval in [Retrieval::Standard, Retrieval::CacheOpt] {
                    let cfg = AggConfig {
                        kind,
                        max_wedges_in_flight: DEFAULT_MAX_WEDGES_IN_FLIGHT,
                    };
                    let t = get_freq(&rg, retrieval, &cfg).unwrap();
                    assert_eq!(t, reference, "{kind:?} {retrieval:?}");
                }
            }
        }
    }

    #[test]
    fn chunking_is_exact_at_any_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let g = random_bipartite(&mut rng, 18, 18, 0.4);
        let rg = preprocess(&g, &Ranking::side(&g));
        let reference = get_freq(&rg, Retrieval::Standard, &AggConfig::default()).unwrap();
        for kind in [AggKind::Sort, AggKind::Hash, AggKind::Hist] {
            for budget in [1usize, 2, 7, 64, 1 << 20] {
                let cfg = AggConfig {
                    kind,
                    max_wedges_in_flight: budget,
                };
                let t = get_freq(&rg, Retrieval::Standard, &cfg).unwrap();
                assert_eq!(t, reference, "{kind:?} budget {budget}");
            }
        }
    }

    #[test]
    fn batch_plan_simple_one_batch() {
        let g = random_bipartite(&mut ChaCha8Rng::seed_from_u64(0), 50, 50, 0.1);
        let rg = preprocess(&g, &Ranking::side(&g));
        let plan = batch_plan(&rg, Retrieval::Standard, BatchMode::Simple, 512).unwrap();
        assert_eq!(plan, vec![0..100]);
    }

    #[test]
    fn batch_plan_wedge_aware_greedy() {
        // Wedge counts [5, 5, 90, 5] with budget 100 split as {0,1,2},{3}.
        let counts = [5u64, 5, 90, 5];
        let budget = 100u64;
        let mut plan = Vec::new();
        let mut lo = 0u32;
        let mut acc = 0u64;
        for (x, &c) in counts.iter().enumerate() {
            if acc + c > budget {
                plan.push(lo..x as u32);
                lo = x as u32;
                acc = 0;
            }
            acc += c;
        }
        plan.push(lo..counts.len() as u32);
        assert_eq!(plan, vec![0..3, 3..4]);
    }

    #[test]
    fn batch_plan_zero_wedges_single_batch() {
        let g = crate::graph::BipartiteGraph::from_edges(4, 4, [(0, 0)]).unwrap();
        let rg = preprocess(&g, &Ranking::side(&g));
        let plan =
            batch_plan(&rg, Retrieval::Standard, BatchMode::WedgeAware, 100).unwrap();
        assert_eq!(plan, vec![0..8]);
    }

    #[test]
    fn batch_budget_too_small_errors() {
        let g = complete_bipartite(3, 10);
        let rg = preprocess(&g, &Ranking::degree(&g));
        let cfg = AggConfig {
            kind: AggKind::BatchWedgeAware,
            max_wedges_in_flight: 1,
        };
        assert!(matches!(
            get_freq(&rg, Retrieval::Standard, &cfg),
            Err(AggError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn aggregate_pairs_backends_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let pairs: Vec<(u64, u64)> = (0..500)
            .map(|_| {
                (
                    rand::Rng::gen_range(&mut rng, 0..50u64),
                    rand::Rng::gen_range(&mut rng, 1..5u64),
                )
            })
            .collect();
        let reference = aggregate_pairs(pairs.clone(), AggKind::Sort, 50);
        for kind in AggKind::ALL {
            assert_eq!(aggregate_pairs(pairs.clone(), kind, 50), reference, "{kind:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn freq_table_invariants(edges in proptest::collection::vec((0u32..12, 0u32..12), 0..80)) {
            let g = crate::graph::BipartiteGraph::from_edges(12, 12, edges).unwrap();
            let rg = preprocess(&g, &Ranking::degree(&g));
            let t = get_freq(&rg, Retrieval::Standard, &AggConfig::default()).unwrap();
            // Table totals equal the retrieval formula, every key holds at
            // least one wedge, and keys are strictly increasing.
            proptest::prop_assert_eq!(t.total_wedges(), rg.total_wedges());
            proptest::prop_assert!(t.entries().iter().all(|&(_, d)| d >= 1));
            proptest::prop_assert!(t.entries().windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
