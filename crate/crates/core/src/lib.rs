//! Shared-memory parallel analytics for butterflies (2,2-bicliques) in
//! bipartite graphs: exact and approximate counting (global, per-vertex,
//! per-edge) and tip/wing decomposition via parallel peeling.
//!
//! The pipeline is: rank vertices ([`ranking`]), retrieve and aggregate
//! wedges ([`wedge`]), turn wedge counts into butterfly counts ([`count`]),
//! and optionally peel the graph by repeatedly removing minimum-count
//! vertices or edges ([`peel`]) using a bucketing structure ([`buckets`])
//! backed by either a dense bucket window or a batch-parallel Fibonacci
//! heap ([`fibheap`]).

pub mod buckets;
pub mod count;
pub mod fibheap;
pub mod graph;
pub mod oracle;
pub mod peel;
pub mod ranking;
#[cfg(test)]
pub(crate) mod testutil;
pub mod wedge;

pub use buckets::{BucketBackend, BucketQueue, UpdateTriple};
pub use count::{
    approx_count_total, count_per_edge, count_per_vertex, count_total, sparsify, ButterflyAgg,
    ButterflyCounts, CountConfig, CountMode, SparsifyConfig, SparsifyMethod,
};
pub use fibheap::FibHeap;
pub use graph::{BipartiteGraph, EdgeId, GraphError, LoadOptions, Side};
pub use peel::{
    choose_peel_side, peel_edges, peel_vertices, wpeel_edges, wpeel_vertices, Decomposition,
    PeelConfig, PeelSide,
};
pub use ranking::{
    auto_rank_kind, preprocess, wedge_metric_f, RankKind, RankedGraph, Ranking,
};
pub use wedge::{
    batch_plan, get_freq, get_wedges, get_wedges_cacheopt, AggConfig, AggKind, BatchMode,
    Retrieval, Wedge, WedgeCountTable, DEFAULT_MAX_WEDGES_IN_FLIGHT,
};
