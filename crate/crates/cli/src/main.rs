//! Command-line front end: butterfly counting, tip/wing peeling, edge-list
//! to binary conversion, and a scaling benchmark harness.
//!
//! Exit codes: 0 success, 2 usage / invalid flag combination, 3 resource
//! limits (wedge storage or batch budget), 1 anything else.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use bfly_core::{
    approx_count_total, auto_rank_kind, count_per_edge, count_per_vertex, count_total,
    peel_edges, peel_vertices, preprocess, wedge_metric_f, wpeel_edges, wpeel_vertices,
    AggKind, BipartiteGraph, BucketBackend, ButterflyAgg, ButterflyCounts, CountConfig,
    CountMode, Decomposition, LoadOptions, PeelConfig, PeelSide, RankKind, Ranking,
    SparsifyConfig, SparsifyMethod, DEFAULT_MAX_WEDGES_IN_FLIGHT,
};

#[derive(Parser)]
#[command(name = "bfly", version, about = "Butterfly analytics for bipartite graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count butterflies (total, per vertex, or per edge).
    Count(CountArgs),
    /// Tip (vertex) or wing (edge) decomposition by parallel peeling.
    Peel(PeelArgs),
    /// Convert an edge list to the binary CSR cache format.
    Convert(ConvertArgs),
    /// Run an operation across worker counts and emit a CSV report.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Input graph: edge-list text or binary cache (detected by magic).
    input: PathBuf,
    /// Worker threads (0 = all logical cores).
    #[arg(long, default_value_t = 0, env = "BFLY_THREADS")]
    threads: usize,
    /// Treat input vertex ids as 0-indexed instead of 1-indexed.
    #[arg(long)]
    zero_indexed: bool,
    /// Output format for results.
    #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
    format: FormatArg,
    /// Write results here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include elapsed_ms in JSON summaries (off keeps outputs
    /// byte-identical across runs).
    #[arg(long)]
    timing: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Tsv,
    Json,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum RankArg {
    Side,
    Degree,
    Adegree,
    Codegen,
    Acodegen,
    Auto,
}

impl RankArg {
    fn resolve(self, g: &BipartiteGraph) -> RankKind {
        match self {
            RankArg::Side => RankKind::Side,
            RankArg::Degree => RankKind::Degree,
            RankArg::Adegree => RankKind::ApproxDegree,
            RankArg::Codegen => RankKind::CoDegeneracy,
            RankArg::Acodegen => RankKind::ApproxCoDegeneracy,
            RankArg::Auto => auto_rank_kind(g),
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum AggArg {
    Sort,
    Hash,
    Hist,
    Batchs,
    Batchwa,
}

impl From<AggArg> for AggKind {
    fn from(a: AggArg) -> AggKind {
        match a {
            AggArg::Sort => AggKind::Sort,
            AggArg::Hash => AggKind::Hash,
            AggArg::Hist => AggKind::Hist,
            AggArg::Batchs => AggKind::BatchSimple,
            AggArg::Batchwa => AggKind::BatchWedgeAware,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CountModeArg {
    Total,
    Vertex,
    Edge,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ButterflyAggArg {
    Atomic,
    Reagg,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SparsifyArg {
    Edge,
    Color,
}

#[derive(Args, Clone)]
struct CountArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = CountModeArg::Total)]
    mode: CountModeArg,
    #[arg(long, value_enum, default_value_t = RankArg::Auto)]
    rank: RankArg,
    #[arg(long, value_enum, default_value_t = AggArg::Batchs)]
    agg: AggArg,
    #[arg(long = "butterfly-agg", value_enum, default_value_t = ButterflyAggArg::Atomic)]
    butterfly_agg: ButterflyAggArg,
    /// Retrieve wedges from the higher-ranked endpoint.
    #[arg(long)]
    cache_opt: bool,
    /// Wedge budget per aggregation chunk / batch.
    #[arg(long, default_value_t = DEFAULT_MAX_WEDGES_IN_FLIGHT)]
    max_wedges: usize,
    /// Approximate the total by sparsification (total mode only).
    #[arg(long, value_enum)]
    sparsify: Option<SparsifyArg>,
    /// Sparsification probability.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Sparsification seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PeelModeArg {
    Vertex,
    Edge,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SideArg {
    U,
    V,
    Auto,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BucketsArg {
    Dense,
    Fib,
}

#[derive(Args, Clone)]
struct PeelArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = PeelModeArg::Vertex)]
    mode: PeelModeArg,
    /// Partition to peel in vertex mode.
    #[arg(long, value_enum, default_value_t = SideArg::Auto)]
    side: SideArg,
    #[arg(long, value_enum, default_value_t = BucketsArg::Dense)]
    buckets: BucketsArg,
    /// Store all wedges up front instead of re-walking the graph.
    #[arg(long)]
    store_wedges: bool,
    /// Aggregation backend for counting and per-round updates.
    #[arg(long, value_enum, default_value_t = AggArg::Hash)]
    agg: AggArg,
    /// Ranking for the initial counting stage.
    #[arg(long, value_enum, default_value_t = RankArg::Auto)]
    rank: RankArg,
    #[arg(long)]
    cache_opt: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_WEDGES_IN_FLIGHT)]
    max_wedges: usize,
}

#[derive(Args, Clone)]
struct ConvertArgs {
    /// Edge-list input.
    input: PathBuf,
    /// Binary cache output.
    output: PathBuf,
    #[arg(long)]
    zero_indexed: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BenchOp {
    CountTotal,
    CountVertex,
    CountEdge,
    PeelVertex,
    PeelEdge,
}

#[derive(Args, Clone)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value_t = BenchOp::CountTotal)]
    op: BenchOp,
    #[arg(long, value_enum, default_value_t = RankArg::Auto)]
    rank: RankArg,
    #[arg(long, value_enum, default_value_t = AggArg::Batchs)]
    agg: AggArg,
    #[arg(long)]
    cache_opt: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_WEDGES_IN_FLIGHT)]
    max_wedges: usize,
    #[arg(long, value_enum, default_value_t = BucketsArg::Dense)]
    buckets: BucketsArg,
}

/// Errors that map to exit code 2 (bad flag combinations).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

/// Errors that map to exit code 3 (resource limits).
fn is_resource_error(err: &anyhow::Error) -> bool {
    use bfly_core::peel::PeelError;
    use bfly_core::wedge::AggError;
    if let Some(e) = err.downcast_ref::<PeelError>() {
        return matches!(e, PeelError::WedgeStorage { .. });
    }
    if let Some(e) = err.downcast_ref::<bfly_core::count::CountError>() {
        return matches!(e, bfly_core::count::CountError::Agg(AggError::BudgetTooSmall { .. }));
    }
    matches!(err.downcast_ref::<AggError>(), Some(AggError::BudgetTooSmall { .. }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Count(args) => run_in_pool(args.common.threads, || cmd_count(&args)),
        Command::Peel(args) => run_in_pool(args.common.threads, || cmd_peel(&args)),
        Command::Convert(args) => cmd_convert(&args),
        Command::Bench(args) => cmd_bench(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else if is_resource_error(&err) {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run_in_pool<T>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    if threads == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building thread pool")?
            .install(f)
    }
}

fn load_graph(path: &Path, zero_indexed: bool) -> Result<BipartiteGraph> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut magic = [0u8; 8];
    let n = file.read(&mut magic)?;
    let is_binary = n == 8 && &magic == b"BFLYCSRF";
    drop(file);
    let file = File::open(path)?;
    if is_binary {
        Ok(BipartiteGraph::read_binary(BufReader::new(file))?)
    } else {
        let opts = LoadOptions {
            zero_indexed,
            allow_comments: true,
        };
        Ok(BipartiteGraph::load_edge_list(BufReader::new(file), &opts)?)
    }
}

fn open_sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn cmd_count(args: &CountArgs) -> Result<()> {
    if args.sparsify.is_some() && args.mode != CountModeArg::Total {
        return Err(UsageError("--sparsify requires --mode total".into()).into());
    }
    if matches!(args.agg, AggArg::Batchs | AggArg::Batchwa)
        && args.butterfly_agg == ButterflyAggArg::Reagg
    {
        return Err(UsageError("--butterfly-agg reagg is unavailable with batching".into()).into());
    }
    let g = load_graph(&args.common.input, args.common.zero_indexed)?;
    let rank = args.rank.resolve(&g);
    let cfg = CountConfig {
        rank,
        agg: args.agg.into(),
        butterfly_agg: match args.butterfly_agg {
            ButterflyAggArg::Atomic => ButterflyAgg::Atomic,
            ButterflyAggArg::Reagg => ButterflyAgg::Reagg,
        },
        cache_opt: args.cache_opt,
        max_wedges: args.max_wedges,
    };
    let started = Instant::now();

    let mut sink = open_sink(&args.common.out)?;
    match args.mode {
        CountModeArg::Total => {
            let (total_exact, estimate) = match args.sparsify {
                None => (Some(count_total(&g, &cfg)?), None),
                Some(method) => {
                    let sp = SparsifyConfig {
                        method: match method {
                            SparsifyArg::Edge => SparsifyMethod::Edge,
                            SparsifyArg::Color => SparsifyMethod::Color,
                        },
                        p: args.p,
                        seed: args.seed,
                    };
                    (None, Some(approx_count_total(&g, &sp, &cfg)?))
                }
            };
            let elapsed = started.elapsed().as_millis() as u64;
            match args.common.format {
                FormatArg::Tsv => match (total_exact, estimate) {
                    (Some(t), _) => writeln!(sink, "{t}")?,
                    (_, Some(e)) => writeln!(sink, "{e}")?,
                    _ => unreachable!(),
                },
                FormatArg::Json => {
                    let mut doc = count_summary(args, &g, rank, elapsed);
                    if let Some(t) = total_exact {
                        doc["total"] = json!(t);
                    }
                    if let Some(e) = estimate {
                        doc["estimate"] = json!(e);
                    }
                    writeln!(sink, "{}", serde_json::to_string_pretty(&doc)?)?;
                }
            }
        }
        CountModeArg::Vertex => {
            let counts = count_per_vertex(&g, &cfg)?;
            let elapsed = started.elapsed().as_millis() as u64;
            match args.common.format {
                FormatArg::Tsv => write_vertex_tsv(&mut sink, &g, &counts)?,
                FormatArg::Json => {
                    let mut doc = count_summary(args, &g, rank, elapsed);
                    doc["total"] = json!(counts.total);
                    writeln!(sink, "{}", serde_json::to_string_pretty(&doc)?)?;
                }
            }
        }
        CountModeArg::Edge => {
            let counts = count_per_edge(&g, &cfg)?;
            let elapsed = started.elapsed().as_millis() as u64;
            match args.common.format {
                FormatArg::Tsv => write_edge_tsv(&mut sink, &g, &counts.per_edge)?,
                FormatArg::Json => {
                    let mut doc = count_summary(args, &g, rank, elapsed);
                    doc["total"] = json!(counts.total);
                    writeln!(sink, "{}", serde_json::to_string_pretty(&doc)?)?;
                }
            }
        }
    }
    sink.flush()?;
    Ok(())
}

fn count_summary(
    args: &CountArgs,
    g: &BipartiteGraph,
    rank: RankKind,
    elapsed_ms: u64,
) -> serde_json::Value {
    let mut doc = json!({
        "command": "count",
        "input": args.common.input.display().to_string(),
        "mode": match args.mode {
            CountModeArg::Total => "total",
            CountModeArg::Vertex => "vertex",
            CountModeArg::Edge => "edge",
        },
        "ranking": rank.name(),
        "backend": AggKind::from(args.agg).name(),
        "butterfly_agg": match args.butterfly_agg {
            ButterflyAggArg::Atomic => "atomic",
            ButterflyAggArg::Reagg => "reagg",
        },
        "cache_opt": args.cache_opt,
        "max_wedges": args.max_wedges,
        "threads": args.common.threads,
        "nu": g.nu(),
        "nv": g.nv(),
        "m": g.m(),
    });
    if let Some(sp) = args.sparsify {
        doc["sparsify"] = json!(match sp {
            SparsifyArg::Edge => "edge",
            SparsifyArg::Color => "color",
        });
        doc["p"] = json!(args.p);
        doc["seed"] = json!(args.seed);
    }
    if args.common.timing {
        doc["elapsed_ms"] = json!(elapsed_ms);
    }
    doc
}

fn write_vertex_tsv(
    sink: &mut dyn Write,
    g: &BipartiteGraph,
    counts: &ButterflyCounts,
) -> Result<()> {
    for (u, &c) in counts.per_u.iter().enumerate() {
        writeln!(sink, "u{}\t{}", g.label_u(u as u32), c)?;
    }
    for (v, &c) in counts.per_v.iter().enumerate() {
        writeln!(sink, "v{}\t{}", g.label_v(v as u32), c)?;
    }
    Ok(())
}

fn write_edge_tsv(sink: &mut dyn Write, g: &BipartiteGraph, per_edge: &[u64]) -> Result<()> {
    for (e, &c) in per_edge.iter().enumerate() {
        let (u, v) = g.edge_endpoints(bfly_core::EdgeId(e as u32));
        writeln!(sink, "u{}:v{}\t{}", g.label_u(u), g.label_v(v), c)?;
    }
    Ok(())
}

fn cmd_peel(args: &PeelArgs) -> Result<()> {
    let g = load_graph(&args.common.input, args.common.zero_indexed)?;
    let rank = args.rank.resolve(&g);
    let count_cfg = CountConfig {
        rank,
        agg: args.agg.into(),
        butterfly_agg: ButterflyAgg::Atomic,
        cache_opt: args.cache_opt,
        max_wedges: args.max_wedges,
    };
    let peel_cfg = PeelConfig {
        agg: args.agg.into(),
        buckets: match args.buckets {
            BucketsArg::Dense => BucketBackend::Dense,
            BucketsArg::Fib => BucketBackend::Fib,
        },
        side: match args.side {
            SideArg::U => PeelSide::U,
            SideArg::V => PeelSide::V,
            SideArg::Auto => PeelSide::Auto,
        },
        max_stored_wedges: args.max_wedges,
    };

    let started = Instant::now();
    let (counts, decomposition) = match args.mode {
        PeelModeArg::Vertex => {
            let counts = count_per_vertex(&g, &count_cfg)?;
            let d = if args.store_wedges {
                wpeel_vertices(&g, &counts, &peel_cfg)?
            } else {
                peel_vertices(&g, &counts, &peel_cfg)?
            };
            (counts, d)
        }
        PeelModeArg::Edge => {
            let counts = count_per_edge(&g, &count_cfg)?;
            let d = if args.store_wedges {
                wpeel_edges(&g, &counts, &peel_cfg)?
            } else {
                peel_edges(&g, &counts, &peel_cfg)?
            };
            (counts, d)
        }
    };
    let elapsed = started.elapsed().as_millis() as u64;

    let mut sink = open_sink(&args.common.out)?;
    match args.common.format {
        FormatArg::Tsv => write_decomposition_tsv(&mut sink, &g, &decomposition)?,
        FormatArg::Json => {
            let mut doc = json!({
                "command": "peel",
                "input": args.common.input.display().to_string(),
                "mode": match decomposition.mode {
                    CountMode::Vertex => "vertex",
                    _ => "edge",
                },
                "rounds": decomposition.rounds,
                "max_b": decomposition.max_b,
                "total_butterflies": counts.total,
                "ranking": rank.name(),
                "backend": AggKind::from(args.agg).name(),
                "buckets": match args.buckets {
                    BucketsArg::Dense => "dense",
                    BucketsArg::Fib => "fib",
                },
                "store_wedges": args.store_wedges,
                "threads": args.common.threads,
            });
            if let Some(side) = decomposition.peel_side {
                doc["peel_side"] = json!(match side {
                    bfly_core::Side::U => "u",
                    bfly_core::Side::V => "v",
                });
            }
            if args.common.timing {
                doc["elapsed_ms"] = json!(elapsed);
            }
            writeln!(sink, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn write_decomposition_tsv(
    sink: &mut dyn Write,
    g: &BipartiteGraph,
    d: &Decomposition,
) -> Result<()> {
    match (d.mode, d.peel_side) {
        (CountMode::Vertex, Some(side)) => {
            for (x, &num) in d.numbers.iter().enumerate() {
                match side {
                    bfly_core::Side::U => {
                        writeln!(sink, "u{}\t{}", g.label_u(x as u32), num)?
                    }
                    bfly_core::Side::V => {
                        writeln!(sink, "v{}\t{}", g.label_v(x as u32), num)?
                    }
                }
            }
        }
        _ => {
            for (e, &num) in d.numbers.iter().enumerate() {
                let (u, v) = g.edge_endpoints(bfly_core::EdgeId(e as u32));
                writeln!(sink, "u{}:v{}\t{}", g.label_u(u), g.label_v(v), num)?;
            }
        }
    }
    Ok(())
}

fn cmd_convert(args: &ConvertArgs) -> Result<()> {
    let g = load_graph(&args.input, args.zero_indexed)?;
    let file = File::create(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    g.write_binary(BufWriter::new(file))?;
    eprintln!(
        "wrote {} ({} U, {} V, {} edges)",
        args.output.display(),
        g.nu(),
        g.nv(),
        g.m()
    );
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let g = load_graph(&args.common.input, args.common.zero_indexed)?;
    let rank = args.rank.resolve(&g);
    let count_cfg = CountConfig {
        rank,
        agg: args.agg.into(),
        butterfly_agg: ButterflyAgg::Atomic,
        cache_opt: args.cache_opt,
        max_wedges: args.max_wedges,
    };
    let peel_cfg = PeelConfig {
        agg: args.agg.into(),
        buckets: match args.buckets {
            BucketsArg::Dense => BucketBackend::Dense,
            BucketsArg::Fib => BucketBackend::Fib,
        },
        side: PeelSide::Auto,
        max_stored_wedges: args.max_wedges,
    };

    let max_threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut counts = vec![1usize];
    while counts.last().unwrap() * 2 <= max_threads {
        counts.push(counts.last().unwrap() * 2);
    }
    if *counts.last().unwrap() != max_threads {
        counts.push(max_threads);
    }

    let mut sink = open_sink(&args.common.out)?;
    writeln!(sink, "record,rank,threads,wall_ms,speedup,wedges,f")?;

    // Wedge work and the f metric per ranking, relative to side ordering.
    for kind in RankKind::ALL {
        let ranking = Ranking::by_kind(&g, kind);
        let wedges = preprocess(&g, &ranking).total_wedges();
        let f = wedge_metric_f(&g, &ranking);
        writeln!(sink, "fmetric,{},,,,{},{}", kind.name(), wedges, f)?;
    }

    let processed = preprocess(&g, &Ranking::by_kind(&g, rank)).total_wedges();
    let mut t1_ms = 0.0f64;
    for &threads in &counts {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building thread pool")?;
        let started = Instant::now();
        pool.install(|| -> Result<()> {
            match args.op {
                BenchOp::CountTotal => {
                    count_total(&g, &count_cfg)?;
                }
                BenchOp::CountVertex => {
                    count_per_vertex(&g, &count_cfg)?;
                }
                BenchOp::CountEdge => {
                    count_per_edge(&g, &count_cfg)?;
                }
                BenchOp::PeelVertex => {
                    let c = count_per_vertex(&g, &count_cfg)?;
                    peel_vertices(&g, &c, &peel_cfg)?;
                }
                BenchOp::PeelEdge => {
                    let c = count_per_edge(&g, &count_cfg)?;
                    peel_edges(&g, &c, &peel_cfg)?;
                }
            }
            Ok(())
        })?;
        let ms = started.elapsed().as_secs_f64() * 1e3;
        if threads == 1 {
            t1_ms = ms;
        }
        let speedup = if ms > 0.0 && t1_ms > 0.0 { t1_ms / ms } else { 1.0 };
        writeln!(
            sink,
            "timing,{},{},{:.3},{:.3},{},",
            rank.name(),
            threads,
            ms,
            speedup,
            processed
        )?;
    }
    sink.flush()?;
    Ok(())
}
