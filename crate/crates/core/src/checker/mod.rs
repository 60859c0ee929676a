//! Consistency of client histories.
//!
//! A client history may leave reads without a source for keys the read's
//! predicate did not match. The history is consistent when those reads can
//! be given sources (writes the predicate rejects) such that the resulting
//! full history has a commit order satisfying every axiom.
//!
//! The checker saturates a partial commit order, enumerates sources only
//! for *conflicts* (missing reads that some write not ordered after the
//! reader could have satisfied), and runs a prefix search on each choice.

mod search;
mod witness;

use std::ops::ControlFlow;
use std::time::Instant;

use crate::axioms::{all_axioms_hold, vis_set, VisibilityRelation};
use crate::history::{is_witness, History, KeyIdx, ReadIdx, TxnIdx, WrEdge};
use crate::relation::{CommitRelation, TotalOrder};
use crate::saturation::{saturate_fixpoint, saturate_fixpoint_from};

pub use search::{
    explore_consistent_prefixes, is_consistent_extension_slow, prefix_equivalent, Prefix, PrefixView, SearchContext, SearchOptions,
    SearchOutcome, SearchResult,
};
pub use witness::extract_witness;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Consistent,
    Inconsistent,
    /// A budget ran out before the answer was known.
    Unknown,
}

/// A read/key pair without a wr source that some write, not committed
/// after the reader, would have satisfied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Conflict {
    pub read: ReadIdx,
    pub key: KeyIdx,
}

/// Candidate sources of a missing read, split by whether the read's
/// predicate accepts the value they write.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZeroOneSets {
    pub zero: Vec<TxnIdx>,
    pub one: Vec<TxnIdx>,
}

/// Writers of `x` other than the reader that `pco` does not place after the
/// reader, split by the predicate of read `r` on the value they write.
pub fn zero_one_sets(h: &History, pco: &CommitRelation, r: ReadIdx, x: KeyIdx) -> ZeroOneSets {
    let read = h.reads()[r];
    let pred = h.op(read).predicate().expect("reads carry a predicate");
    let mut sets = ZeroOneSets::default();
    for t in h.writers(x).ones() {
        if t == read.txn || pco.contains(read.txn, t) {
            continue;
        }
        let value = h.txn_value(t, x).expect("writers have a value");
        if pred.eval(h.key_name(x), value) {
            sets.one.push(t);
        } else {
            sets.zero.push(t);
        }
    }
    sets
}

/// Missing, non-local read/key pairs whose one-set is non-empty.
pub fn conflicts(h: &History, pco: &CommitRelation) -> Vec<Conflict> {
    h.missing_pairs()
        .into_iter()
        .filter(|&(r, x)| !zero_one_sets(h, pco, r, x).one.is_empty())
        .map(|(read, key)| Conflict { read, key })
        .collect()
}

/// Every way of giving each conflict a source from its zero set, as lists
/// of wr edges, in lexicographic order (first conflict varies slowest).
pub fn enumerate_extensions<'a>(
    h: &'a History,
    conflicts: &'a [Conflict],
    zero_sets: &'a [Vec<TxnIdx>],
) -> impl Iterator<Item = Vec<WrEdge>> + 'a {
    assert_eq!(conflicts.len(), zero_sets.len());
    let mut digits = vec![0usize; conflicts.len()];
    let mut done = conflicts.is_empty() || zero_sets.iter().any(Vec::is_empty);
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let edges = conflicts
            .iter()
            .zip(&digits)
            .zip(zero_sets)
            .map(|((c, &d), zero)| WrEdge {
                key: c.key,
                from: h.writer_event(zero[d], c.key).expect("zero-set members write the key"),
                to: h.reads()[c.read],
            })
            .collect();
        done = true;
        for i in (0..digits.len()).rev() {
            digits[i] += 1;
            if digits[i] < zero_sets[i].len() {
                done = false;
                break;
            }
            digits[i] = 0;
        }
        Some(edges)
    })
}

/// Why a history is inconsistent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// The forced commit-order constraints are cyclic.
    Cycle(Vec<TxnIdx>),
    /// A conflict has no source that its predicate rejects.
    EmptyZeroSet(Conflict),
    /// No choice of sources admits a commit order.
    Exhausted,
}

/// A full extension of the input with a commit order satisfying every axiom.
#[derive(Clone, Debug)]
pub struct Witness {
    pub history: History,
    pub commit_order: Vec<TxnIdx>,
    /// Edges added to the input, ordered by reader then key.
    pub added: Vec<WrEdge>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub prefixes_explored: u64,
    pub extensions_tried: u64,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub status: Status,
    pub witness: Option<Witness>,
    pub violation: Option<Violation>,
    pub conflicts: Vec<Conflict>,
    pub stats: Stats,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    /// Stop with [`Status::Unknown`] after trying this many extensions.
    pub max_extensions: Option<u64>,
    pub search: SearchOptions,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { max_extensions: None, search: SearchOptions::default() }
    }
}

/// Decides whether `h` is consistent, with default options.
pub fn check_consistency(h: &History) -> Verdict {
    check_consistency_with(h, &CheckOptions::default())
}

pub fn check_consistency_with(h: &History, options: &CheckOptions) -> Verdict {
    let started = Instant::now();
    let mut stats = Stats::default();
    let finish = |status, witness, violation, conflicts, mut stats: Stats| {
        stats.elapsed_ms = started.elapsed().as_millis() as u64;
        Verdict { status, witness, violation, conflicts, stats }
    };

    let fix = saturate_fixpoint(h);
    if let Some(cycle) = fix.cycle_witness {
        return finish(Status::Inconsistent, None, Some(Violation::Cycle(cycle)), Vec::new(), stats);
    }
    let found = conflicts(h, &fix.pco);
    let mut zero_sets = Vec::with_capacity(found.len());
    for &c in &found {
        let zero = zero_one_sets(h, &fix.pco, c.read, c.key).zero;
        if zero.is_empty() {
            return finish(Status::Inconsistent, None, Some(Violation::EmptyZeroSet(c)), found, stats);
        }
        zero_sets.push(zero);
    }
    log::debug!("{} conflicts, {} extensions", found.len(), zero_sets.iter().map(Vec::len).product::<usize>());

    if found.is_empty() {
        let ctx = SearchContext::new(h, &fix.pco);
        let outcome = explore_consistent_prefixes(&ctx, options.search);
        stats.prefixes_explored = outcome.prefixes_explored;
        return match outcome.result {
            SearchResult::Found(order) => {
                let witness = build_witness(h, h, order, Vec::new());
                finish(Status::Consistent, Some(witness), None, found, stats)
            }
            SearchResult::Exhausted => finish(Status::Inconsistent, None, Some(Violation::Exhausted), found, stats),
            SearchResult::BudgetExceeded => finish(Status::Unknown, None, None, found, stats),
        };
    }

    let mut walk = ExtensionWalk { conflicts: &found, zero_sets: &zero_sets, options, stats, budget_hit: false };
    let result = walk.descend(h, &fix.pco, &mut Vec::with_capacity(found.len()));
    let (budget_hit, stats) = (walk.budget_hit, walk.stats);
    match result {
        ControlFlow::Break(Some(witness_parts)) => {
            let (extended, order, edges) = witness_parts;
            let witness = build_witness(h, &extended, order, edges);
            finish(Status::Consistent, Some(witness), None, found, stats)
        }
        ControlFlow::Break(None) => finish(Status::Unknown, None, None, found, stats),
        ControlFlow::Continue(()) if budget_hit => finish(Status::Unknown, None, None, found, stats),
        ControlFlow::Continue(()) => finish(Status::Inconsistent, None, Some(Violation::Exhausted), found, stats),
    }
}

/// Depth-first walk over conflict extensions in lexicographic order.
///
/// Saturation only grows when wr edges are added, so a partial choice whose
/// fixpoint is cyclic rules out all of its completions and is cut there.
struct ExtensionWalk<'a> {
    conflicts: &'a [Conflict],
    zero_sets: &'a [Vec<TxnIdx>],
    options: &'a CheckOptions,
    stats: Stats,
    budget_hit: bool,
}

/// An extended history, its accepted order and the edges that were added.
type Found = (History, Vec<TxnIdx>, Vec<WrEdge>);

impl ExtensionWalk<'_> {
    /// `Break(Some)` on a witness, `Break(None)` when the extension budget
    /// runs out.
    fn descend(&mut self, h: &History, pco: &CommitRelation, edges: &mut Vec<WrEdge>) -> ControlFlow<Option<Found>> {
        let depth = edges.len();
        if depth == self.conflicts.len() {
            if self.options.max_extensions.is_some_and(|m| self.stats.extensions_tried >= m) {
                return ControlFlow::Break(None);
            }
            self.stats.extensions_tried += 1;
            let ctx = SearchContext::new(h, pco);
            let outcome = explore_consistent_prefixes(&ctx, self.options.search);
            self.stats.prefixes_explored += outcome.prefixes_explored;
            return match outcome.result {
                SearchResult::Found(order) => ControlFlow::Break(Some((h.clone(), order, edges.clone()))),
                SearchResult::Exhausted => ControlFlow::Continue(()),
                SearchResult::BudgetExceeded => {
                    self.budget_hit = true;
                    ControlFlow::Continue(())
                }
            };
        }
        let c = self.conflicts[depth];
        for &t in &self.zero_sets[depth] {
            let edge = WrEdge {
                key: c.key,
                from: h.writer_event(t, c.key).expect("zero-set members write the key"),
                to: h.reads()[c.read],
            };
            let Ok(extended) = h.with_added_wr(&[edge]) else { continue };
            let mut start = pco.clone();
            start.insert(edge.from.txn, edge.to.txn);
            start.close();
            let fix = saturate_fixpoint_from(&extended, start);
            if !fix.acyclic {
                continue;
            }
            edges.push(edge);
            let flow = self.descend(&extended, &fix.pco, edges);
            edges.pop();
            flow?;
        }
        ControlFlow::Continue(())
    }
}

/// Completes `extended` along `order` and checks the result against the
/// original input.
fn build_witness(input: &History, extended: &History, order: Vec<TxnIdx>, mut added: Vec<WrEdge>) -> Witness {
    let co = TotalOrder::new(order);
    let (full, more) = extract_witness(extended, &co);
    added.extend(more);
    added.sort_by_key(|e| (e.to, e.key));
    assert!(is_witness(&full, input), "extracted history is not a witness of the input");
    assert!(all_axioms_hold(&full, &co), "extracted witness violates an axiom");
    Witness { history: full, commit_order: co.order().to_vec(), added }
}

/// Whether any read is checked with a relation that mentions the commit
/// order through another writer (SI's conflict axiom).
pub fn uses_conflict_axiom(h: &History) -> bool {
    h.txns().iter().any(|t| vis_set(t.iso).contains(&VisibilityRelation::Conflict))
}
