//! Depth-first search for a commit order, one transaction at a time.
//!
//! A prefix is a set of transactions closed under session order (and under
//! the saturated partial order `pco`), plus the last writer of every key.
//! Adding a transaction `t` is allowed when all its `pco` predecessors are
//! in the prefix and committing `t` next cannot break an axiom of a read
//! that is still outside the prefix.

use std::collections::HashSet;

use fixedbitset::FixedBitSet;

use crate::axioms::{vis_set, VisibilityRelation};
use crate::history::{History, IsolationLevel, KeyIdx, ReadIdx, TxnIdx, INIT};
use crate::relation::{CommitRelation, Precedes};

/// A prefix of the commit order under construction.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Prefix {
    txns: FixedBitSet,
    last_writer: Vec<TxnIdx>,
    /// Number of transactions of each session in the prefix.
    counts: Vec<usize>,
}

impl Prefix {
    /// The prefix holding only `init`, which writes every key.
    pub fn initial(h: &History) -> Prefix {
        let mut txns = FixedBitSet::with_capacity(h.txn_count());
        txns.insert(INIT);
        Prefix { txns, last_writer: vec![INIT; h.key_count()], counts: vec![0; h.sessions().len()] }
    }

    pub fn contains(&self, t: TxnIdx) -> bool {
        self.txns.contains(t)
    }

    pub fn txns(&self) -> &FixedBitSet {
        &self.txns
    }

    pub fn len(&self) -> usize {
        self.txns.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.txns.is_clear()
    }

    pub fn last_writer(&self, x: KeyIdx) -> TxnIdx {
        self.last_writer[x]
    }

    /// The prefix with `t` committed next.
    pub fn extended(&self, h: &History, t: TxnIdx) -> Prefix {
        let mut next = self.clone();
        next.txns.insert(t);
        for x in h.write_keys(t).ones() {
            next.last_writer[x] = t;
        }
        if let Some((s, _)) = h.session_position(t) {
            next.counts[s] += 1;
        }
        next
    }

    /// The next transaction of every session that still has one, in
    /// session order.
    pub fn session_heads<'a>(&'a self, h: &'a History) -> impl Iterator<Item = TxnIdx> + 'a {
        h.sessions().iter().enumerate().filter_map(|(s, sess)| sess.txns.get(self.counts[s]).copied())
    }

    pub fn is_so_downward_closed(&self, h: &History) -> bool {
        self.txns.ones().all(|t| h.so_predecessors(t).is_subset(&self.txns))
    }

    fn key(&self, track_writers: bool) -> Vec<u32> {
        let mut key: Vec<u32> = self.counts.iter().map(|&c| c as u32).collect();
        if track_writers {
            key.extend(self.last_writer.iter().map(|&t| t as u32));
        }
        key
    }
}

/// Whether two prefixes lead to the same search outcome. Last writers only
/// matter when some transaction runs at SI.
pub fn prefix_equivalent(p: &Prefix, q: &Prefix, h: &History) -> bool {
    p.txns == q.txns && (!h.uses_level(IsolationLevel::Si) || p.last_writer == q.last_writer)
}

/// `pco` extended so that the prefix comes first, then `t`, then the rest.
#[derive(Clone, Copy)]
pub struct PrefixView<'a> {
    pub pco: &'a CommitRelation,
    pub prefix: &'a Prefix,
    pub next: TxnIdx,
}

impl PrefixView<'_> {
    fn block(&self, a: TxnIdx) -> u8 {
        if self.prefix.contains(a) {
            0
        } else if a == self.next {
            1
        } else {
            2
        }
    }
}

impl Precedes for PrefixView<'_> {
    fn precedes(&self, a: TxnIdx, b: TxnIdx) -> bool {
        self.pco.contains(a, b) || self.block(a) < self.block(b)
    }
}

/// Data shared by every step of one search.
pub struct SearchContext<'a> {
    h: &'a History,
    pco: &'a CommitRelation,
    pco_succ: Vec<FixedBitSet>,
    track_writers: bool,
    /// Per transaction, the transactions writing a key it also writes.
    overlap: Vec<FixedBitSet>,
    reads_of: Vec<Vec<ReadIdx>>,
}

impl<'a> SearchContext<'a> {
    /// `pco` must be a transitive, acyclic relation containing so ∪ wr.
    pub fn new(h: &'a History, pco: &'a CommitRelation) -> Self {
        let n = h.txn_count();
        let mut overlap = vec![FixedBitSet::with_capacity(n); n];
        for (t, row) in overlap.iter_mut().enumerate() {
            for y in h.write_keys(t).ones() {
                row.union_with(h.writers(y));
            }
        }
        let mut reads_of = vec![Vec::new(); n];
        for (r, e) in h.reads().iter().enumerate() {
            reads_of[e.txn].push(r);
        }
        SearchContext {
            h,
            pco,
            pco_succ: pco.successor_rows(),
            track_writers: h.uses_level(IsolationLevel::Si),
            overlap,
            reads_of,
        }
    }

    pub fn history(&self) -> &History {
        self.h
    }

    pub fn pco(&self) -> &CommitRelation {
        self.pco
    }

    /// Whether committing `t` right after `prefix` keeps the prefix
    /// consistent: every `pco` predecessor of `t` is already in, and no
    /// read outside the extended prefix loses its source to a visible
    /// later write.
    pub fn is_consistent_extension(&self, prefix: &Prefix, t: TxnIdx) -> bool {
        let h = self.h;
        if prefix.contains(t) || !self.pco.predecessors(t).is_subset(prefix.txns()) {
            return false;
        }
        let t_keys = h.write_keys(t);
        for reader in 0..h.txn_count() {
            if reader == t || prefix.contains(reader) {
                continue;
            }
            let levels = vis_set(h.iso(reader));
            for &r in &self.reads_of[reader] {
                for &v in levels {
                    let visible = match v {
                        VisibilityRelation::Ser => true,
                        VisibilityRelation::Prefix => {
                            !h.so_wr_predecessors(reader).is_subset(prefix.txns())
                        }
                        VisibilityRelation::Ra => h.so_wr_predecessors(reader).contains(t),
                        VisibilityRelation::Rc => h.rc_visible(r).contains(t),
                        VisibilityRelation::Conflict => {
                            if !self.conflict_allows(prefix, t, reader, r) {
                                return false;
                            }
                            continue;
                        }
                    };
                    if visible
                        && t_keys.ones().any(|x| h.wr_source_txn(r, x).is_some_and(|t1| prefix.contains(t1)))
                    {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Checks the Conflict axiom of read `r` (of `reader`) once `t` joins
    /// the prefix: for every key whose source is committed, the last writer
    /// of that key must be the source or must stay invisible.
    fn conflict_allows(&self, prefix: &Prefix, t: TxnIdx, reader: TxnIdx, r: ReadIdx) -> bool {
        let h = self.h;
        let overlap = &self.overlap[reader];
        // Some writer of a shared key that commits after the prefix and
        // before the reader makes every member of the extended prefix
        // visible, and so does t itself.
        let all_visible = overlap.contains(t)
            || overlap
                .intersection(self.pco.predecessors(reader))
                .any(|t4| t4 != t && !prefix.contains(t4));
        for x in 0..h.key_count() {
            let Some(t1) = h.wr_source_txn(r, x) else { continue };
            if !(prefix.contains(t1) || t1 == t) {
                continue;
            }
            let last = if h.writes(t, x) { t } else { prefix.last_writer(x) };
            if last == t1 {
                continue;
            }
            if all_visible {
                return false;
            }
            if last != t
                && overlap
                    .intersection(prefix.txns())
                    .any(|t4| t4 == last || self.pco_succ[last].contains(t4))
            {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SearchOptions {
    /// Remember failed prefixes and skip equivalent ones.
    pub use_seen: bool,
    /// Give up after exploring this many prefixes.
    pub max_prefixes: Option<u64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { use_seen: true, max_prefixes: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchResult {
    /// A full commit order, `init` first.
    Found(Vec<TxnIdx>),
    Exhausted,
    BudgetExceeded,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub result: SearchResult,
    pub prefixes_explored: u64,
}

/// Searches for a total commit order whose every step is a consistent
/// extension. Candidates are tried in session order, so the search is
/// deterministic.
pub fn explore_consistent_prefixes(ctx: &SearchContext<'_>, options: SearchOptions) -> SearchOutcome {
    let h = ctx.h;
    let n = h.txn_count();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut stack = vec![(Prefix::initial(h), 0usize)];
    let mut order = vec![INIT];
    let mut explored = 1u64;
    while let Some((prefix, next)) = stack.last_mut() {
        debug_assert!(prefix.is_so_downward_closed(h));
        if prefix.len() == n {
            return SearchOutcome { result: SearchResult::Found(order), prefixes_explored: explored };
        }
        let sessions = h.sessions();
        let mut chosen = None;
        while *next < sessions.len() {
            let s = *next;
            *next += 1;
            let Some(&t) = sessions[s].txns.get(prefix.counts[s]) else { continue };
            if !ctx.is_consistent_extension(prefix, t) {
                continue;
            }
            let extended = prefix.extended(h, t);
            if options.use_seen && seen.contains(&extended.key(ctx.track_writers)) {
                continue;
            }
            chosen = Some((extended, t));
            break;
        }
        match chosen {
            Some((extended, t)) => {
                explored += 1;
                if options.max_prefixes.is_some_and(|m| explored > m) {
                    return SearchOutcome { result: SearchResult::BudgetExceeded, prefixes_explored: explored };
                }
                order.push(t);
                stack.push((extended, 0));
            }
            None => {
                let (failed, _) = stack.pop().expect("stack is non-empty");
                order.pop();
                if options.use_seen {
                    seen.insert(failed.key(ctx.track_writers));
                }
            }
        }
    }
    SearchOutcome { result: SearchResult::Exhausted, prefixes_explored: explored }
}

/// `pco` with the transactions of `sequence` committed first, in that order.
struct SequenceView<'a> {
    pco: &'a CommitRelation,
    position: Vec<Option<usize>>,
}

impl Precedes for SequenceView<'_> {
    fn precedes(&self, a: TxnIdx, b: TxnIdx) -> bool {
        match (self.position[a], self.position[b]) {
            (Some(pa), Some(pb)) => pa < pb,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => self.pco.contains(a, b),
        }
    }
}

/// Slow counterpart of [`SearchContext::is_consistent_extension`] that
/// evaluates the axioms directly. `sequence` is the commit order so far,
/// `init` first, and must itself have been built from consistent steps.
pub fn is_consistent_extension_slow(h: &History, pco: &CommitRelation, sequence: &[TxnIdx], t: TxnIdx) -> bool {
    let mut position = vec![None; h.txn_count()];
    for (i, &u) in sequence.iter().enumerate() {
        position[u] = Some(i);
    }
    if position[t].is_some() || pco.predecessors(t).ones().any(|u| position[u].is_none()) {
        return false;
    }
    position[t] = Some(sequence.len());
    let view = SequenceView { pco, position };
    let committed = |u: TxnIdx| view.position[u].is_some();
    for (r, read) in h.reads().iter().enumerate() {
        if committed(read.txn) {
            continue;
        }
        for x in 0..h.key_count() {
            let Some(t1) = h.wr_source_txn(r, x) else { continue };
            if !committed(t1) {
                continue;
            }
            for t2 in h.writers(x).ones() {
                if t2 == t1 || !committed(t2) || !view.precedes(t1, t2) {
                    continue;
                }
                if vis_set(h.iso(read.txn)).iter().any(|&v| crate::axioms::vis_holds(h, &view, v, t2, r)) {
                    return false;
                }
            }
        }
    }
    true
}
