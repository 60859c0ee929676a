//! Binary relations over transactions, stored as predecessor bitsets.

use std::ops::ControlFlow;

use fixedbitset::FixedBitSet;

use crate::history::TxnIdx;

/// Anything that can answer "does `a` come before `b`".
pub trait Precedes {
    fn precedes(&self, a: TxnIdx, b: TxnIdx) -> bool;

    /// Reflexive closure of [`Precedes::precedes`].
    fn precedes_or_eq(&self, a: TxnIdx, b: TxnIdx) -> bool {
        a == b || self.precedes(a, b)
    }
}

/// A binary relation over `n` transactions. Row `b` holds every `a` with
/// `(a, b)` in the relation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CommitRelation {
    preds: Vec<FixedBitSet>,
}

impl CommitRelation {
    pub fn empty(n: usize) -> Self {
        CommitRelation { preds: vec![FixedBitSet::with_capacity(n); n] }
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (TxnIdx, TxnIdx)>) -> Self {
        let mut rel = Self::empty(n);
        for (a, b) in pairs {
            rel.insert(a, b);
        }
        rel
    }

    /// The strict total order listing `order` from first to last.
    pub fn from_total_order(order: &[TxnIdx]) -> Self {
        let mut rel = Self::empty(order.len());
        let mut seen = FixedBitSet::with_capacity(order.len());
        for &t in order {
            rel.preds[t].union_with(&seen);
            seen.insert(t);
        }
        rel
    }

    pub fn size(&self) -> usize {
        self.preds.len()
    }

    pub fn contains(&self, a: TxnIdx, b: TxnIdx) -> bool {
        self.preds[b].contains(a)
    }

    /// Adds `(a, b)`; returns whether it was new.
    pub fn insert(&mut self, a: TxnIdx, b: TxnIdx) -> bool {
        !self.preds[b].put(a)
    }

    pub fn predecessors(&self, b: TxnIdx) -> &FixedBitSet {
        &self.preds[b]
    }

    pub fn successors(&self, a: TxnIdx) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.size());
        for (b, row) in self.preds.iter().enumerate() {
            if row.contains(a) {
                out.insert(b);
            }
        }
        out
    }

    /// All successor rows at once (the transposed matrix).
    pub fn successor_rows(&self) -> Vec<FixedBitSet> {
        let n = self.size();
        let mut out = vec![FixedBitSet::with_capacity(n); n];
        for (b, row) in self.preds.iter().enumerate() {
            for a in row.ones() {
                out[a].insert(b);
            }
        }
        out
    }

    /// Number of pairs in the relation.
    pub fn len(&self) -> usize {
        self.preds.iter().map(|r| r.count_ones(..)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.iter().all(|r| r.is_clear())
    }

    pub fn pairs(&self) -> Vec<(TxnIdx, TxnIdx)> {
        let mut out: Vec<_> = self
            .preds
            .iter()
            .enumerate()
            .flat_map(|(b, row)| row.ones().map(move |a| (a, b)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn union_with(&mut self, other: &CommitRelation) {
        for (mine, theirs) in self.preds.iter_mut().zip(&other.preds) {
            mine.union_with(theirs);
        }
    }

    pub fn is_subset(&self, other: &CommitRelation) -> bool {
        self.preds.iter().zip(&other.preds).all(|(a, b)| a.is_subset(b))
    }

    /// Replaces the relation by its transitive closure.
    pub fn close(&mut self) {
        let n = self.size();
        for k in 0..n {
            let row_k = self.preds[k].clone();
            for i in 0..n {
                if self.preds[i].contains(k) {
                    self.preds[i].union_with(&row_k);
                }
            }
        }
    }

    pub fn closed(mut self) -> Self {
        self.close();
        self
    }

    pub fn is_transitive(&self) -> bool {
        (0..self.size()).all(|b| self.preds[b].ones().all(|a| self.preds[a].is_subset(&self.preds[b])))
    }

    /// A cycle of the relation, listed in order, if one exists.
    pub fn find_cycle(&self) -> Option<Vec<TxnIdx>> {
        let succ = self.successor_rows();
        let adj: Vec<Vec<usize>> = succ.iter().map(|r| r.ones().collect()).collect();
        find_cycle(&adj)
    }

    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    /// Whether this is a strict total order.
    pub fn is_strict_total_order(&self) -> bool {
        let n = self.size();
        self.is_transitive()
            && (0..n).all(|a| {
                !self.contains(a, a)
                    && (0..n).all(|b| a == b || self.contains(a, b) != self.contains(b, a))
            })
    }
}

impl Precedes for CommitRelation {
    fn precedes(&self, a: TxnIdx, b: TxnIdx) -> bool {
        self.contains(a, b)
    }
}

/// A strict total order given by positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TotalOrder {
    order: Vec<TxnIdx>,
    position: Vec<usize>,
}

impl TotalOrder {
    /// `order` must be a permutation of `0..order.len()`.
    pub fn new(order: Vec<TxnIdx>) -> Self {
        let mut position = vec![usize::MAX; order.len()];
        for (i, &t) in order.iter().enumerate() {
            assert!(position[t] == usize::MAX, "transaction {t} listed twice");
            position[t] = i;
        }
        TotalOrder { order, position }
    }

    pub fn order(&self) -> &[TxnIdx] {
        &self.order
    }

    pub fn position(&self, t: TxnIdx) -> usize {
        self.position[t]
    }

    pub fn to_relation(&self) -> CommitRelation {
        CommitRelation::from_total_order(&self.order)
    }

    /// Whether the order contains every pair of `rel`.
    pub fn extends(&self, rel: &CommitRelation) -> bool {
        rel.pairs().into_iter().all(|(a, b)| self.precedes(a, b))
    }
}

impl Precedes for TotalOrder {
    fn precedes(&self, a: TxnIdx, b: TxnIdx) -> bool {
        self.position[a] < self.position[b]
    }
}

/// Finds a cycle in a directed graph given as adjacency lists.
pub fn find_cycle(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = adj.len();
    let mut mark = vec![Mark::New; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Active;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(&w) = adj[v].get(*next) {
                *next += 1;
                match mark[w] {
                    Mark::New => {
                        mark[w] = Mark::Active;
                        parent[w] = v;
                        stack.push((w, 0));
                    }
                    Mark::Active => {
                        let mut cycle = vec![v];
                        let mut u = v;
                        while u != w {
                            u = parent[u];
                            cycle.push(u);
                        }
                        cycle.reverse();
                        return Some(cycle);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

/// Calls `visit` on every linear extension of the partial order whose
/// predecessor sets are `preds`, in lexicographic order of indices.
/// Stops early when `visit` breaks; returns whether it did.
pub fn for_each_linear_extension(
    preds: &[FixedBitSet],
    mut visit: impl FnMut(&[usize]) -> ControlFlow<()>,
) -> bool {
    let n = preds.len();
    let mut placed = FixedBitSet::with_capacity(n);
    let mut order = Vec::with_capacity(n);
    fn go(
        preds: &[FixedBitSet],
        placed: &mut FixedBitSet,
        order: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]) -> ControlFlow<()>,
    ) -> bool {
        let n = preds.len();
        if order.len() == n {
            return visit(order).is_break();
        }
        for t in 0..n {
            if !placed.contains(t) && preds[t].is_subset(placed) {
                placed.insert(t);
                order.push(t);
                let stop = go(preds, placed, order, visit);
                order.pop();
                placed.set(t, false);
                if stop {
                    return true;
                }
            }
        }
        false
    }
    go(preds, &mut placed, &mut order, &mut visit)
}
