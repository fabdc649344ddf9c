//! Batch-oriented Fibonacci heap with integer marks.
//!
//! The structure departs from the textbook heap in two ways. Delete-min
//! consolidates trees in rounds: roots are grouped by rank and same-rank
//! trees are merged pairwise per round until all root ranks are distinct.
//! Decrease-key applies a whole batch at once: order-violating nodes are
//! cut to the root list, each cut adds one integer mark to the former
//! parent, and parents that accumulate more than one mark are themselves
//! cut in rounds (resetting their marks to 0 if even, 1 if odd) until no
//! parent exceeds one mark.
//!
//! Batch operations are externally serialized: one operation runs at a
//! time. Keys are unsigned integers (butterfly counts).

use std::collections::BTreeMap;

use thiserror::Error;

/// Handle to a heap node, valid until the node is removed by delete-min.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(pub u32);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeapError {
    #[error("delete-min on empty heap")]
    Empty,
    #[error("node {0:?} is not live")]
    DeadNode(NodeId),
    #[error("node {node:?}: new key {new} exceeds current key {current}")]
    KeyIncrease { node: NodeId, new: u64, current: u64 },
    #[error("node {0:?} appears twice in one decrease-key batch")]
    DuplicateInBatch(NodeId),
}

struct Node<V> {
    key: u64,
    value: Option<V>,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    marks: u64,
    live: bool,
    /// Index into the root list, or usize::MAX for non-roots.
    root_pos: usize,
}

const NOT_ROOT: usize = usize::MAX;

pub struct FibHeap<V> {
    nodes: Vec<Node<V>>,
    roots: Vec<NodeId>,
    min: Option<NodeId>,
    len: usize,
}

impl<V> Default for FibHeap<V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V> FibHeap<V> {
    pub fn new() -> Self {
        FibHeap {
            nodes: Vec::new(),
            roots: Vec::new(),
            min: None,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn key(&self, id: NodeId) -> u64 {
        self.node(id).key
    }

    pub fn value(&self, id: NodeId) -> &V {
        self.node(id).value.as_ref().expect("live node has a value")
    }

    pub fn value_mut(&mut self, id: NodeId) -> &mut V {
        self.nodes[id.0 as usize]
            .value
            .as_mut()
            .expect("live node has a value")
    }

    pub fn is_live(&self, id: NodeId) -> bool {
        (id.0 as usize) < self.nodes.len() && self.node(id).live
    }

    /// Number of trees in the root list, t(H).
    pub fn root_count(&self) -> usize {
        self.roots.len()
    }

    /// Sum of marks over all live nodes.
    pub fn total_marks(&self) -> u64 {
        self.nodes.iter().filter(|n| n.live).map(|n| n.marks).sum()
    }

    pub fn peek_min(&self) -> Option<(u64, NodeId)> {
        self.min.map(|id| (self.node(id).key, id))
    }

    fn node(&self, id: NodeId) -> &Node<V> {
        &self.nodes[id.0 as usize]
    }

    fn push_root(&mut self, id: NodeId) {
        self.nodes[id.0 as usize].root_pos = self.roots.len();
        self.roots.push(id);
    }

    fn remove_root(&mut self, id: NodeId) {
        let pos = self.nodes[id.0 as usize].root_pos;
        debug_assert_ne!(pos, NOT_ROOT);
        self.roots.swap_remove(pos);
        if pos < self.roots.len() {
            let moved = self.roots[pos];
            self.nodes[moved.0 as usize].root_pos = pos;
        }
        self.nodes[id.0 as usize].root_pos = NOT_ROOT;
    }

    /// Adds every pair as a singleton root, then refreshes the minimum
    /// pointer by reducing over the new keys and the previous minimum.
    pub fn batch_insert(&mut self, items: impl IntoIterator<Item = (u64, V)>) -> Vec<NodeId> {
        let mut ids = Vec::new();
        for (key, value) in items {
            let id = NodeId(self.nodes.len() as u32);
            self.nodes.push(Node {
                key,
                value: Some(value),
                parent: None,
                children: Vec::new(),
                marks: 0,
                live: true,
                root_pos: NOT_ROOT,
            });
            self.push_root(id);
            ids.push(id);
            self.len += 1;
        }
        let candidates = self.min.into_iter().chain(ids.iter().copied());
        self.min = candidates.min_by_key(|&id| (self.node(id).key, id));
        ids
    }

    /// Removes the minimum node, promotes its children to roots, then
    /// consolidates in rounds: per round every rank group is partitioned
    /// into pairs (in NodeId order) and each pair is merged, the larger key
    /// becoming a child of the smaller; leftovers stay. Rounds repeat until
    /// all root ranks are distinct.
    pub fn par_delete_min(&mut self) -> Result<(u64, V), HeapError> {
        let min_id = self.min.ok_or(HeapError::Empty)?;
        let key = self.node(min_id).key;
        self.remove_root(min_id);
        let children = std::mem::take(&mut self.nodes[min_id.0 as usize].children);
        for c in children {
            self.nodes[c.0 as usize].parent = None;
            self.push_root(c);
        }
        let value = self.nodes[min_id.0 as usize]
            .value
            .take()
            .expect("live node has a value");
        self.nodes[min_id.0 as usize].live = false;
        self.len -= 1;

        // Group roots by rank (child count).
        let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
        for &r in &self.roots {
            groups.entry(self.node(r).children.len()).or_default().push(r);
        }
        while groups.values().any(|g| g.len() > 1) {
            let mut next: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
            for (rank, mut group) in groups {
                group.sort_unstable();
                let mut it = group.chunks_exact(2);
                for pair in &mut it {
                    let (a, b) = (pair[0], pair[1]);
                    let (winner, loser) =
                        if (self.node(a).key, a) <= (self.node(b).key, b) {
                            (a, b)
                        } else {
                            (b, a)
                        };
                    self.remove_root(loser);
                    self.nodes[loser.0 as usize].parent = Some(winner);
                    self.nodes[loser.0 as usize].marks = 0;
                    self.nodes[winner.0 as usize].children.push(loser);
                    next.entry(rank + 1).or_default().push(winner);
                }
                if let [leftover] = it.remainder() {
                    next.entry(rank).or_default().push(*leftover);
                }
            }
            groups = next;
        }

        self.min = self
            .roots
            .iter()
            .copied()
            .min_by_key(|&id| (self.node(id).key, id));
        Ok((key, value))
    }

    /// Applies a batch of key decreases. Heap-order checks read the keys as
    /// they were before the batch, so the result does not depend on the
    /// order of the updates. At most one update per node is permitted.
    pub fn batch_decrease_key(&mut self, updates: &[(NodeId, u64)]) -> Result<(), HeapError> {
        let mut seen = std::collections::HashSet::with_capacity(updates.len());
        for &(id, new_key) in updates {
            if !self.is_live(id) {
                return Err(HeapError::DeadNode(id));
            }
            if !seen.insert(id) {
                return Err(HeapError::DuplicateInBatch(id));
            }
            let current = self.node(id).key;
            if new_key > current {
                return Err(HeapError::KeyIncrease {
                    node: id,
                    new: new_key,
                    current,
                });
            }
        }

        // Decide violations against pre-batch keys, then apply.
        let mut to_cut = Vec::new();
        for &(id, new_key) in updates {
            if let Some(p) = self.node(id).parent {
                if new_key < self.node(p).key {
                    to_cut.push(id);
                }
            }
        }
        for &(id, new_key) in updates {
            self.nodes[id.0 as usize].key = new_key;
        }

        // First cut round: order-violating nodes go to the root list and
        // each adds one mark to its former parent.
        let mut mark_adds: BTreeMap<NodeId, u64> = BTreeMap::new();
        for &id in &to_cut {
            let p = self.cut(id);
            *mark_adds.entry(p).or_default() += 1;
        }
        let mut frontier = self.apply_marks(mark_adds);

        // Cascade rounds: cut every parent holding more than one mark,
        // resetting its marks to parity at cut time.
        while !frontier.is_empty() {
            let mut mark_adds: BTreeMap<NodeId, u64> = BTreeMap::new();
            for &p in &frontier {
                let marks = self.node(p).marks;
                let gp = self.cut(p);
                self.nodes[p.0 as usize].marks = marks % 2;
                *mark_adds.entry(gp).or_default() += 1;
            }
            frontier = self.apply_marks(mark_adds);
        }

        let candidates = self
            .min
            .into_iter()
            .chain(updates.iter().map(|&(id, _)| id))
            .filter(|&id| self.node(id).root_pos != NOT_ROOT);
        self.min = candidates.min_by_key(|&id| (self.node(id).key, id));
        Ok(())
    }

    /// Detaches `id` from its parent and appends it to the root list.
    /// Returns the former parent.
    fn cut(&mut self, id: NodeId) -> NodeId {
        let p = self.nodes[id.0 as usize].parent.take().expect("cut of a root");
        let children = &mut self.nodes[p.0 as usize].children;
        let pos = children.iter().position(|&c| c == id).expect("child link");
        children.swap_remove(pos);
        self.push_root(id);
        p
    }

    /// Adds accumulated marks, returning the non-root nodes that now hold
    /// more than one mark (sorted, deduplicated).
    fn apply_marks(&mut self, mark_adds: BTreeMap<NodeId, u64>) -> Vec<NodeId> {
        let mut next = Vec::new();
        for (p, add) in mark_adds {
            self.nodes[p.0 as usize].marks += add;
            if self.node(p).marks > 1 && self.node(p).parent.is_some() {
                next.push(p);
            }
        }
        next
    }

    /// Textual tree dump (keys and marks) for test assertions. Roots and
    /// children are printed in NodeId order.
    pub fn dump(&self) -> String {
        fn rec<V>(h: &FibHeap<V>, id: NodeId, depth: usize, out: &mut String) {
            let n = h.node(id);
            out.push_str(&"  ".repeat(depth));
            out.push_str(&format!("#{} key={} marks={}\n", id.0, n.key, n.marks));
            let mut kids = n.children.clone();
            kids.sort_unstable();
            for c in kids {
                rec(h, c, depth + 1, out);
            }
        }
        let mut roots = self.roots.clone();
        roots.sort_unstable();
        let mut out = String::new();
        for r in roots {
            rec(self, r, 0, &mut out);
        }
        out
    }

    /// Full structural check: heap order on every tree, consistent parent
    /// and root bookkeeping, and the size accounting.
    pub fn check_invariants(&self) -> Result<(), String> {
        let live = self.nodes.iter().filter(|n| n.live).count();
        if live != self.len {
            return Err(format!("len {} != live nodes {}", self.len, live));
        }
        for (pos, &r) in self.roots.iter().enumerate() {
            let n = self.node(r);
            if !n.live {
                return Err(format!("dead node #{} in root list", r.0));
            }
            if n.parent.is_some() {
                return Err(format!("root #{} has a parent", r.0));
            }
            if n.root_pos != pos {
                return Err(format!("root #{} position mismatch", r.0));
            }
        }
        let mut reached = 0usize;
        for &r in &self.roots {
            let mut stack = vec![r];
            while let Some(id) = stack.pop() {
                reached += 1;
                let n = self.node(id);
                for &c in &n.children {
                    let cn = self.node(c);
                    if !cn.live {
                        return Err(format!("dead child #{}", c.0));
                    }
                    if cn.parent != Some(id) {
                        return Err(format!("child #{} parent link broken", c.0));
                    }
                    if cn.key < n.key {
                        return Err(format!(
                            "heap order violated: child #{} key {} < parent #{} key {}",
                            c.0, cn.key, id.0, n.key
                        ));
                    }
                    stack.push(c);
                }
            }
        }
        if reached != self.len {
            return Err(format!("{} nodes reachable, len {}", reached, self.len));
        }
        if let Some(m) = self.min {
            let mk = self.node(m).key;
            if self.node(m).root_pos == NOT_ROOT {
                return Err("min pointer is not a root".into());
            }
            if self.roots.iter().any(|&r| self.node(r).key < mk) {
                return Err("min pointer does not hold the minimum key".into());
            }
        } else if self.len != 0 {
            return Err("empty min pointer on non-empty heap".into());
        }
        Ok(())
    }

    /// Ranks (child counts) of the current roots.
    pub fn root_ranks(&self) -> Vec<usize> {
        self.roots.iter().map(|&r| self.node(r).children.len()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_insert_tracks_min() {
        let mut h = FibHeap::new();
        h.batch_insert([(3u64, 'a'), (1, 'b'), (2, 'c')]);
        assert_eq!(h.peek_min().unwrap().0, 1);
        let mut h2 = FibHeap::new();
        h2.batch_insert([(0u64, 'z')]);
        h2.batch_insert([(5u64, 'x')]);
        assert_eq!(h2.peek_min().unwrap().0, 0);
    }

    #[test]
    fn delete_min_consolidates_ranks() {
        let mut h = FibHeap::new();
        h.batch_insert((1..=3u64).map(|k| (k, k)));
        let (k, v) = h.par_delete_min().unwrap();
        assert_eq!((k, v), (1, 1));
        let mut ranks = h.root_ranks();
        ranks.sort_unstable();
        ranks.dedup();
        assert_eq!(ranks.len(), h.root_count(), "root ranks must be distinct");
        h.check_invariants().unwrap();
    }

    #[test]
    fn single_element_heap() {
        let mut h = FibHeap::new();
        h.batch_insert([(7u64, "x")]);
        assert_eq!(h.par_delete_min().unwrap(), (7, "x"));
        assert!(h.is_empty());
        assert_eq!(h.par_delete_min().unwrap_err(), HeapError::Empty);
    }

    #[test]
    fn decrease_root_key_updates_min() {
        let mut h = FibHeap::new();
        let ids = h.batch_insert([(10u64, ()), (20, ())]);
        h.batch_decrease_key(&[(ids[1], 5)]).unwrap();
        assert_eq!(h.peek_min().unwrap(), (5, ids[1]));
        h.check_invariants().unwrap();
    }

    #[test]
    fn single_cut_adds_one_mark_without_cascade() {
        let mut h = FibHeap::new();
        let ids = h.batch_insert((0..=4u64).map(|k| (k, k)));
        h.par_delete_min().unwrap();
        // Consolidation of {1,2,3,4}: node 1 is a root with children 2 and
        // 3, and 4 hangs under 3.
        let (n3, n4) = (ids[3], ids[4]);
        assert_eq!(h.parent_of(n4), Some(n3));
        h.batch_decrease_key(&[(n4, 0)]).unwrap();
        assert_eq!(h.parent_of(n4), None);
        assert_eq!(h.node_marks(n3), 1);
        assert_eq!(h.parent_of(n3), Some(ids[1]), "no cascade after one mark");
        assert_eq!(h.peek_min().unwrap().0, 0);
        h.check_invariants().unwrap();
    }

    #[test]
    fn double_mark_triggers_parent_cut_with_parity_reset() {
        let mut h = FibHeap::new();
        let ids = h.batch_insert((0..=8u64).map(|k| (k, k)));
        h.par_delete_min().unwrap();
        // Rounds of pairing build: 1 -> [2, 3 -> [4], 5 -> [6, 7 -> [8]]].
        let (n1, n5, n6, n7) = (ids[1], ids[5], ids[6], ids[7]);
        assert_eq!(h.parent_of(n6), Some(n5));
        assert_eq!(h.parent_of(n7), Some(n5));
        h.batch_decrease_key(&[(n6, 0), (n7, 1)]).unwrap();
        // Both children cut; 5 got two marks, so it was cut in the next
        // round with marks reset to 0 (even), marking its parent once.
        assert_eq!(h.parent_of(n5), None);
        assert_eq!(h.node_marks(n5), 0);
        assert_eq!(h.node_marks(n1), 1);
        assert_eq!(h.total_marks(), 1);
        assert_eq!(h.root_count(), 4);
        assert!(h.dump().contains("key=0"));
        h.check_invariants().unwrap();
    }

    #[test]
    fn fuzz_against_sorted_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xb1ff);
        for _ in 0..60 {
            let mut h: FibHeap<u64> = FibHeap::new();
            // (key, unique payload, handle)
            let mut reference: Vec<(u64, u64, NodeId)> = Vec::new();
            let mut counter = 0u64;
            for _ in 0..120 {
                match rng.gen_range(0..3) {
                    0 => {
                        let batch: Vec<(u64, u64)> = (0..rng.gen_range(1..5))
                            .map(|_| {
                                counter += 1;
                                (rng.gen_range(0..1000u64), counter)
                            })
                            .collect();
                        let ids = h.batch_insert(batch.clone());
                        for ((k, payload), id) in batch.into_iter().zip(ids) {
                            reference.push((k, payload, id));
                        }
                    }
                    1 => {
                        if reference.is_empty() {
                            continue;
                        }
                        let i = rng.gen_range(0..reference.len());
                        let (k, _, id) = reference[i];
                        let new = rng.gen_range(0..=k);
                        h.batch_decrease_key(&[(id, new)]).unwrap();
                        reference[i].0 = new;
                    }
                    _ => {
                        if reference.is_empty() {
                            assert!(h.par_delete_min().is_err());
                            continue;
                        }
                        let (k, payload) = h.par_delete_min().unwrap();
                        let min = reference.iter().map(|&(k, _, _)| k).min().unwrap();
                        assert_eq!(k, min, "delete-min must return the minimum key");
                        let pos = reference
                            .iter()
                            .position(|&(_, p, _)| p == payload)
                            .expect("deleted payload tracked");
                        assert_eq!(reference[pos].0, k);
                        reference.swap_remove(pos);
                    }
                }
                h.check_invariants().unwrap();
                assert_eq!(h.len(), reference.len());
            }
        }
    }

    impl<V> FibHeap<V> {
        fn parent_of(&self, id: NodeId) -> Option<NodeId> {
            self.node(id).parent
        }
        fn node_marks(&self, id: NodeId) -> u64 {
            self.node(id).marks
        }
    }
}
