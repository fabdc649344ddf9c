//! Immutable CSR bipartite graph, edge-list ingestion, and a binary cache
//! format for fast reload.

use std::collections::HashMap;
use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

/// Dense edge identifier: the position of the edge in the U-side CSR
/// (adjacency lists sorted ascending by neighbor). Bijective with the edge
/// set and stable for a fixed graph.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EdgeId(pub u32);

#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub enum Side {
    U,
    V,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::U => Side::V,
            Side::V => Side::U,
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid binary graph file: {0}")]
    Format(String),
    #[error("graph too large: {0}")]
    TooLarge(String),
}

/// Options for [`BipartiteGraph::load_edge_list`].
#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    /// Input vertex ids start at 0 instead of 1.
    pub zero_indexed: bool,
    /// Permit comment lines starting with `%` or `#`.
    pub allow_comments: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            zero_indexed: false,
            allow_comments: true,
        }
    }
}

const MAGIC: [u8; 8] = *b"BFLYCSRF";
const FORMAT_VERSION: u64 = 1;

/// Simple undirected bipartite graph in CSR form over both partitions.
///
/// Every edge appears in both adjacency structures, lists are sorted
/// ascending, and there are no duplicate edges. The graph is immutable
/// after construction and safe to share across worker threads.
///
/// A single "global id" space covers both partitions for orderings that mix
/// sides: V vertices occupy `[0, nv)` and U vertices `[nv, nv + nu)`.
#[derive(Clone, Debug)]
pub struct BipartiteGraph {
    nu: usize,
    nv: usize,
    offs_u: Vec<usize>,
    nbrs_u: Vec<u32>,
    offs_v: Vec<usize>,
    nbrs_v: Vec<u32>,
    /// EdgeId for each V-side CSR slot.
    edge_of_v_slot: Vec<u32>,
    /// Source U vertex for each EdgeId.
    edge_src: Vec<u32>,
    /// Original input label per compacted U / V index.
    labels_u: Vec<u64>,
    labels_v: Vec<u64>,
}

impl BipartiteGraph {
    /// Builds a graph from an explicit edge list. Duplicate edges are
    /// collapsed. Labels default to 1-based indices.
    pub fn from_edges(
        nu: usize,
        nv: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, GraphError> {
        let labels_u = (1..=nu as u64).collect();
        let labels_v = (1..=nv as u64).collect();
        Self::build(nu, nv, edges.into_iter().collect(), labels_u, labels_v)
    }

    fn build(
        nu: usize,
        nv: usize,
        mut edges: Vec<(u32, u32)>,
        labels_u: Vec<u64>,
        labels_v: Vec<u64>,
    ) -> Result<Self, GraphError> {
        let total = nu + nv;
        if total >= (1usize << 31) {
            return Err(GraphError::TooLarge(format!(
                "{} vertices exceeds the 2^31 vertex limit",
                total
            )));
        }
        for &(u, v) in &edges {
            assert!((u as usize) < nu && (v as usize) < nv, "edge out of range");
        }
        edges.sort_unstable();
        edges.dedup();
        if edges.len() > u32::MAX as usize {
            return Err(GraphError::TooLarge(format!(
                "{} edges exceeds the 2^32 edge limit",
                edges.len()
            )));
        }
        let m = edges.len();

        let mut offs_u = vec![0usize; nu + 1];
        for &(u, _) in &edges {
            offs_u[u as usize + 1] += 1;
        }
        for i in 0..nu {
            offs_u[i + 1] += offs_u[i];
        }
        let mut nbrs_u = vec![0u32; m];
        let mut edge_src = vec![0u32; m];
        for (e, &(u, v)) in edges.iter().enumerate() {
            nbrs_u[e] = v;
            edge_src[e] = u;
        }

        let mut offs_v = vec![0usize; nv + 1];
        for &(_, v) in &edges {
            offs_v[v as usize + 1] += 1;
        }
        for i in 0..nv {
            offs_v[i + 1] += offs_v[i];
        }
        let mut nbrs_v = vec![0u32; m];
        let mut edge_of_v_slot = vec![0u32; m];
        let mut cursor = offs_v.clone();
        for (e, &(u, v)) in edges.iter().enumerate() {
            let slot = cursor[v as usize];
            nbrs_v[slot] = u;
            edge_of_v_slot[slot] = e as u32;
            cursor[v as usize] += 1;
        }

        Ok(BipartiteGraph {
            nu,
            nv,
            offs_u,
            nbrs_u,
            offs_v,
            nbrs_v,
            edge_of_v_slot,
            edge_src,
            labels_u,
            labels_v,
        })
    }

    /// Parses a whitespace-separated edge list (`u v` per line). Comment
    /// lines start with `%` or `#`. Ids are compacted to dense ranges in
    /// first-appearance order; original ids are kept as labels. Extra
    /// trailing tokens (weights, timestamps) are ignored; duplicate edges
    /// collapse to a single edge.
    pub fn load_edge_list(
        reader: impl BufRead,
        opts: &LoadOptions,
    ) -> Result<Self, GraphError> {
        let mut map_u: HashMap<u64, u32> = HashMap::new();
        let mut map_v: HashMap<u64, u32> = HashMap::new();
        let mut labels_u = Vec::new();
        let mut labels_v = Vec::new();
        let mut edges = Vec::new();

        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.starts_with('%') || trimmed.starts_with('#') {
                if opts.allow_comments {
                    continue;
                }
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: "comment line not permitted".into(),
                });
            }
            let mut tokens = trimmed.split_whitespace();
            let (tu, tv) = match (tokens.next(), tokens.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(GraphError::Parse {
                        line: lineno,
                        msg: "expected two integer tokens".into(),
                    })
                }
            };
            let parse = |tok: &str| -> Result<u64, GraphError> {
                tok.parse::<u64>().map_err(|e| GraphError::Parse {
                    line: lineno,
                    msg: format!("bad vertex id {:?}: {}", tok, e),
                })
            };
            let (raw_u, raw_v) = (parse(tu)?, parse(tv)?);
            if !opts.zero_indexed && (raw_u == 0 || raw_v == 0) {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: "vertex id 0 in 1-indexed input (use zero-indexed mode)".into(),
                });
            }
            let next_u = labels_u.len() as u32;
            let cu = *map_u.entry(raw_u).or_insert_with(|| {
                labels_u.push(raw_u);
                next_u
            });
            let next_v = labels_v.len() as u32;
            let cv = *map_v.entry(raw_v).or_insert_with(|| {
                labels_v.push(raw_v);
                next_v
            });
            edges.push((cu, cv));
        }

        let (nu, nv) = (labels_u.len(), labels_v.len());
        Self::build(nu, nv, edges, labels_u, labels_v)
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    /// Total vertices across both partitions.
    pub fn n_total(&self) -> usize {
        self.nu + self.nv
    }

    pub fn m(&self) -> usize {
        self.nbrs_u.len()
    }

    pub fn deg_u(&self, u: u32) -> usize {
        self.offs_u[u as usize + 1] - self.offs_u[u as usize]
    }

    pub fn deg_v(&self, v: u32) -> usize {
        self.offs_v[v as usize + 1] - self.offs_v[v as usize]
    }

    /// Neighbors of a U vertex (V indices, ascending).
    pub fn nbrs_u(&self, u: u32) -> &[u32] {
        &self.nbrs_u[self.offs_u[u as usize]..self.offs_u[u as usize + 1]]
    }

    /// Neighbors of a V vertex (U indices, ascending).
    pub fn nbrs_v(&self, v: u32) -> &[u32] {
        &self.nbrs_v[self.offs_v[v as usize]..self.offs_v[v as usize + 1]]
    }

    /// EdgeIds aligned with [`Self::nbrs_v`].
    pub fn v_slot_edges(&self, v: u32) -> &[u32] {
        &self.edge_of_v_slot[self.offs_v[v as usize]..self.offs_v[v as usize + 1]]
    }

    /// EdgeId of the first edge of `u`; `u`'s edges are the contiguous
    /// range starting there, aligned with [`Self::nbrs_u`].
    pub fn first_edge_u(&self, u: u32) -> u32 {
        self.offs_u[u as usize] as u32
    }

    pub fn edge_id(&self, u: u32, v: u32) -> Option<EdgeId> {
        let list = self.nbrs_u(u);
        list.binary_search(&v)
            .ok()
            .map(|pos| EdgeId((self.offs_u[u as usize] + pos) as u32))
    }

    pub fn edge_endpoints(&self, e: EdgeId) -> (u32, u32) {
        (self.edge_src[e.0 as usize], self.nbrs_u[e.0 as usize])
    }

    pub fn label_u(&self, u: u32) -> u64 {
        self.labels_u[u as usize]
    }

    pub fn label_v(&self, v: u32) -> u64 {
        self.labels_v[v as usize]
    }

    // Global-id helpers. V vertices come first so that id-based tie-breaks
    // are well defined across partitions.

    pub fn gid_of_u(&self, u: u32) -> u32 {
        (self.nv + u as usize) as u32
    }

    pub fn gid_of_v(&self, v: u32) -> u32 {
        v
    }

    pub fn side_of_gid(&self, gid: u32) -> Side {
        if (gid as usize) < self.nv {
            Side::V
        } else {
            Side::U
        }
    }

    /// Partition-local index of a global id.
    pub fn local_of_gid(&self, gid: u32) -> u32 {
        match self.side_of_gid(gid) {
            Side::V => gid,
            Side::U => (gid as usize - self.nv) as u32,
        }
    }

    pub fn deg_of_gid(&self, gid: u32) -> usize {
        match self.side_of_gid(gid) {
            Side::V => self.deg_v(gid),
            Side::U => self.deg_u(self.local_of_gid(gid)),
        }
    }

    /// Neighbors of a global id, themselves as global ids.
    pub fn nbr_gids<'a>(&'a self, gid: u32) -> impl Iterator<Item = u32> + 'a {
        let (side, local) = (self.side_of_gid(gid), self.local_of_gid(gid));
        let (list, off): (&[u32], usize) = match side {
            Side::V => (self.nbrs_v(local), self.nv),
            Side::U => (self.nbrs_u(local), 0),
        };
        list.iter().map(move |&x| (x as usize + off) as u32)
    }

    /// Sum over one partition of C(deg, 2).
    pub fn wedge_end_sum(&self, side: Side) -> u64 {
        let degs: Box<dyn Iterator<Item = usize>> = match side {
            Side::U => Box::new((0..self.nu as u32).map(|u| self.deg_u(u))),
            Side::V => Box::new((0..self.nv as u32).map(|v| self.deg_v(v))),
        };
        degs.map(|d| (d as u64) * (d as u64).saturating_sub(1) / 2)
            .sum()
    }

    /// Serializes the graph as little-endian u64 fields: magic, version,
    /// nU, nV, m, U offsets, U neighbors, V offsets, V neighbors, U labels,
    /// V labels.
    pub fn write_binary(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&MAGIC)?;
        let mut put = |x: u64| w.write_all(&x.to_le_bytes());
        put(FORMAT_VERSION)?;
        put(self.nu as u64)?;
        put(self.nv as u64)?;
        put(self.m() as u64)?;
        for &o in &self.offs_u {
            put(o as u64)?;
        }
        for &x in &self.nbrs_u {
            put(x as u64)?;
        }
        for &o in &self.offs_v {
            put(o as u64)?;
        }
        for &x in &self.nbrs_v {
            put(x as u64)?;
        }
        for &l in &self.labels_u {
            put(l)?;
        }
        for &l in &self.labels_v {
            put(l)?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self, GraphError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(GraphError::Format("bad magic".into()));
        }
        let get = |r: &mut dyn Read| -> Result<u64, GraphError> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let version = get(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(GraphError::Format(format!("unsupported version {}", version)));
        }
        let nu = get(&mut r)? as usize;
        let nv = get(&mut r)? as usize;
        let m = get(&mut r)? as usize;
        let read_vec_usize = |r: &mut dyn Read, len: usize| -> Result<Vec<usize>, GraphError> {
            let mut out = Vec::with_capacity(len);
            let mut b = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut b)?;
                out.push(u64::from_le_bytes(b) as usize);
            }
            Ok(out)
        };
        let read_vec_u32 = |r: &mut dyn Read, len: usize| -> Result<Vec<u32>, GraphError> {
            let mut out = Vec::with_capacity(len);
            let mut b = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut b)?;
                let x = u64::from_le_bytes(b);
                if x > u32::MAX as u64 {
                    return Err(GraphError::Format("vertex index overflow".into()));
                }
                out.push(x as u32);
            }
            Ok(out)
        };
        let read_vec_u64 = |r: &mut dyn Read, len: usize| -> Result<Vec<u64>, GraphError> {
            let mut out = Vec::with_capacity(len);
            let mut b = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut b)?;
                out.push(u64::from_le_bytes(b));
            }
            Ok(out)
        };
        let offs_u = read_vec_usize(&mut r, nu + 1)?;
        let nbrs_u = read_vec_u32(&mut r, m)?;
        let offs_v = read_vec_usize(&mut r, nv + 1)?;
        let nbrs_v = read_vec_u32(&mut r, m)?;
        let labels_u = read_vec_u64(&mut r, nu)?;
        let labels_v = read_vec_u64(&mut r, nv)?;

        if offs_u[0] != 0 || offs_u[nu] != m || offs_v[0] != 0 || offs_v[nv] != m {
            return Err(GraphError::Format("inconsistent offsets".into()));
        }
        for w in offs_u.windows(2).chain(offs_v.windows(2)) {
            if w[0] > w[1] {
                return Err(GraphError::Format("offsets not monotone".into()));
            }
        }
        if nbrs_u.iter().any(|&v| v as usize >= nv) || nbrs_v.iter().any(|&u| u as usize >= nu) {
            return Err(GraphError::Format("neighbor index out of range".into()));
        }

        // Rebuild the derived edge maps from the U-side CSR.
        let mut edge_src = vec![0u32; m];
        for u in 0..nu {
            edge_src[offs_u[u]..offs_u[u + 1]].fill(u as u32);
        }
        let mut edge_of_v_slot = vec![0u32; m];
        let mut cursor = offs_v.clone();
        for e in 0..m {
            let v = nbrs_u[e] as usize;
            let slot = cursor[v];
            if slot >= offs_v[v + 1] {
                return Err(GraphError::Format("adjacency mirror mismatch".into()));
            }
            if nbrs_v[slot] != edge_src[e] {
                return Err(GraphError::Format("adjacency mirror mismatch".into()));
            }
            edge_of_v_slot[slot] = e as u32;
            cursor[v] += 1;
        }

        let g = BipartiteGraph {
            nu,
            nv,
            offs_u,
            nbrs_u,
            offs_v,
            nbrs_v,
            edge_of_v_slot,
            edge_src,
            labels_u,
            labels_v,
        };
        g.check_invariants().map_err(GraphError::Format)?;
        Ok(g)
    }

    /// Structural self-check: sorted duplicate-free lists and a consistent
    /// mirror. Returns a description of the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let m = self.m();
        let sum_u: usize = (0..self.nu as u32).map(|u| self.deg_u(u)).sum();
        let sum_v: usize = (0..self.nv as u32).map(|v| self.deg_v(v)).sum();
        if sum_u != m || sum_v != m {
            return Err(format!("degree sums {} / {} != m {}", sum_u, sum_v, m));
        }
        for u in 0..self.nu as u32 {
            let list = self.nbrs_u(u);
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(format!("U adjacency of {} not strictly sorted", u));
            }
        }
        for v in 0..self.nv as u32 {
            let list = self.nbrs_v(v);
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(format!("V adjacency of {} not strictly sorted", v));
            }
            for (&u, &e) in list.iter().zip(self.v_slot_edges(v)) {
                if self.edge_endpoints(EdgeId(e)) != (u, v) {
                    return Err(format!("edge map mismatch at ({}, {})", u, v));
                }
            }
        }
        Ok(())
    }

    /// Keeps the vertex set but only the edges for which `keep` is true.
    pub(crate) fn filter_edges(&self, keep: impl Fn(EdgeId, u32, u32) -> bool) -> Self {
        let mut edges = Vec::new();
        for e in 0..self.m() as u32 {
            let (u, v) = self.edge_endpoints(EdgeId(e));
            if keep(EdgeId(e), u, v) {
                edges.push((u, v));
            }
        }
        Self::build(
            self.nu,
            self.nv,
            edges,
            self.labels_u.clone(),
            self.labels_v.clone(),
        )
        .expect("filtered graph is within bounds")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    /// The 7-edge fixture with three butterflies used throughout the tests:
    /// u1 and u2 are adjacent to v1,v2,v3 and u3 only to v3 (1-indexed).
    pub fn fig1() -> BipartiteGraph {
        let text = "1 1\n1 2\n1 3\n2 1\n2 2\n2 3\n3 3\n";
        BipartiteGraph::load_edge_list(Cursor::new(text), &LoadOptions::default()).unwrap()
    }

    #[test]
    fn loads_smallest_butterfly() {
        let text = "1 1\n1 2\n2 1\n2 2\n";
        let g =
            BipartiteGraph::load_edge_list(Cursor::new(text), &LoadOptions::default()).unwrap();
        assert_eq!((g.nu(), g.nv(), g.m()), (2, 2, 4));
        g.check_invariants().unwrap();
    }

    #[test]
    fn loads_fig1() {
        let g = fig1();
        assert_eq!((g.nu(), g.nv(), g.m()), (3, 3, 7));
        assert_eq!(g.nbrs_u(0), &[0, 1, 2]);
        assert_eq!(g.nbrs_u(2), &[2]);
        assert_eq!(g.label_u(2), 3);
        g.check_invariants().unwrap();
    }

    #[test]
    fn collapses_duplicates() {
        let g = BipartiteGraph::load_edge_list(
            Cursor::new("1 2\n1 2\n"),
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(g.m(), 1);
    }

    #[test]
    fn rejects_malformed_line() {
        let err = BipartiteGraph::load_edge_list(
            Cursor::new("1 1\nbogus x\n"),
            &LoadOptions::default(),
        )
        .unwrap_err();
        match err {
            GraphError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_token_overflow() {
        let err = BipartiteGraph::load_edge_list(
            Cursor::new("99999999999999999999999999 1\n"),
            &LoadOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
    }

    #[test]
    fn rejects_zero_id_in_one_indexed_input() {
        let err = BipartiteGraph::load_edge_list(
            Cursor::new("0 1\n"),
            &LoadOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
        let opts = LoadOptions {
            zero_indexed: true,
            ..Default::default()
        };
        BipartiteGraph::load_edge_list(Cursor::new("0 1\n"), &opts).unwrap();
    }

    #[test]
    fn comments_rejected_when_disallowed() {
        let opts = LoadOptions {
            allow_comments: false,
            ..Default::default()
        };
        let err =
            BipartiteGraph::load_edge_list(Cursor::new("% header\n1 1\n"), &opts).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
    }

    #[test]
    fn compaction_preserves_first_appearance_order() {
        let g = BipartiteGraph::load_edge_list(
            Cursor::new("7 9\n3 9\n7 2\n"),
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(g.labels_u, vec![7, 3]);
        assert_eq!(g.labels_v, vec![9, 2]);
    }

    #[test]
    fn ignores_trailing_tokens() {
        let g = BipartiteGraph::load_edge_list(
            Cursor::new("1 1 1 1234567\n2 1 1 9999\n"),
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(g.m(), 2);
    }

    #[test]
    fn edge_ids_are_dense_and_stable() {
        let g = fig1();
        assert_eq!(g.edge_id(0, 0), Some(EdgeId(0)));
        assert_eq!(g.edge_id(2, 2), Some(EdgeId(6)));
        assert_eq!(g.edge_id(2, 0), None);
        for e in 0..g.m() as u32 {
            let (u, v) = g.edge_endpoints(EdgeId(e));
            assert_eq!(g.edge_id(u, v), Some(EdgeId(e)));
        }
    }

    #[test]
    fn gid_space_puts_v_first() {
        let g = fig1();
        assert_eq!(g.gid_of_v(2), 2);
        assert_eq!(g.gid_of_u(0), 3);
        assert_eq!(g.side_of_gid(2), Side::V);
        assert_eq!(g.side_of_gid(3), Side::U);
        assert_eq!(g.local_of_gid(5), 2);
        let nbrs: Vec<u32> = g.nbr_gids(g.gid_of_u(0)).collect();
        assert_eq!(nbrs, vec![0, 1, 2]);
    }

    #[test]
    fn binary_roundtrip() {
        let g = fig1();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"BFLYCSRF");
        let h = BipartiteGraph::read_binary(Cursor::new(&buf)).unwrap();
        assert_eq!((h.nu(), h.nv(), h.m()), (3, 3, 7));
        assert_eq!(h.nbrs_u(0), g.nbrs_u(0));
        assert_eq!(h.label_u(2), 3);
        h.check_invariants().unwrap();
    }

    #[test]
    fn binary_rejects_corruption() {
        let g = fig1();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        buf[0] ^= 0xff;
        assert!(BipartiteGraph::read_binary(Cursor::new(&buf)).is_err());
    }
}
