//! Visibility relations and the consistency axioms they define.
//!
//! Every axiom has the same shape: if read `r` of transaction `R` reads `x`
//! from `t1`, and another transaction `t2` writing `x` is *visible* to `r`,
//! then `t2` must commit before `t1`. The isolation level of `R` selects
//! which visibility relations apply.

use std::fmt;

use crate::history::{History, IsolationLevel, KeyIdx, ReadIdx, TxnIdx};
use crate::relation::{CommitRelation, Precedes, TotalOrder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VisibilityRelation {
    /// `t2` commits before `R`.
    Ser,
    /// `t2` commits before (or is) some so/wr predecessor of `R`.
    Prefix,
    /// `t2` commits before (or is) some transaction that commits before `R`
    /// and writes a key that `R` also writes.
    Conflict,
    /// `t2` is an so/wr predecessor of `R`.
    Ra,
    /// `t2` is an so predecessor of `R`, or a read of `R` up to `r` reads
    /// from `t2`.
    Rc,
}

impl VisibilityRelation {
    /// Whether the relation is defined without the commit order.
    pub fn is_saturable(self) -> bool {
        matches!(self, VisibilityRelation::Ra | VisibilityRelation::Rc)
    }
}

impl fmt::Display for VisibilityRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            VisibilityRelation::Ser => "Serializability",
            VisibilityRelation::Prefix => "Prefix",
            VisibilityRelation::Conflict => "Conflict",
            VisibilityRelation::Ra => "ReadAtomic",
            VisibilityRelation::Rc => "ReadCommitted",
        };
        f.write_str(name)
    }
}

/// The visibility relations whose axioms define `iso`.
pub fn vis_set(iso: IsolationLevel) -> &'static [VisibilityRelation] {
    use VisibilityRelation as V;
    match iso {
        IsolationLevel::Ser => &[V::Ser],
        IsolationLevel::Si => &[V::Prefix, V::Conflict],
        IsolationLevel::Pc => &[V::Prefix],
        IsolationLevel::Ra => &[V::Ra],
        IsolationLevel::Rc => &[V::Rc],
    }
}

/// Whether `t2` is visible to read `r` under `v`, reading every commit-order
/// occurrence as `rel`.
///
/// The key read by `r` plays no role in any of the five relations; callers
/// are responsible for `t2` writing it.
pub fn vis_holds(
    h: &History,
    rel: &impl Precedes,
    v: VisibilityRelation,
    t2: TxnIdx,
    r: ReadIdx,
) -> bool {
    let reader = h.reads()[r].txn;
    match v {
        VisibilityRelation::Ser => rel.precedes(t2, reader),
        VisibilityRelation::Ra => h.so_wr_predecessors(reader).contains(t2),
        VisibilityRelation::Rc => h.rc_visible(r).contains(t2),
        VisibilityRelation::Prefix => {
            h.so_wr_predecessors(reader).ones().any(|t4| rel.precedes_or_eq(t2, t4))
        }
        VisibilityRelation::Conflict => {
            let mine = h.write_keys(reader);
            (0..h.txn_count()).any(|t4| {
                rel.precedes(t4, reader)
                    && rel.precedes_or_eq(t2, t4)
                    && !h.write_keys(t4).is_disjoint(mine)
            })
        }
    }
}

/// A failed axiom instance: `writer` is visible to `read` under `relation`
/// and writes `key`, yet does not commit before `source`, which `read`
/// reads `key` from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AxiomViolation {
    pub read: ReadIdx,
    pub key: KeyIdx,
    pub source: TxnIdx,
    pub writer: TxnIdx,
    pub relation: VisibilityRelation,
}

/// Violations of the axioms of read `r` under commit order `co`.
pub fn read_violations(h: &History, co: &impl Precedes, r: ReadIdx) -> Vec<AxiomViolation> {
    let reader = h.reads()[r].txn;
    let mut out = Vec::new();
    for x in 0..h.key_count() {
        let Some(t1) = h.wr_source_txn(r, x) else { continue };
        for t2 in h.writers(x).ones() {
            if t2 == t1 || t2 == reader || co.precedes(t2, t1) {
                continue;
            }
            for &v in vis_set(h.iso(reader)) {
                if vis_holds(h, co, v, t2, r) {
                    out.push(AxiomViolation { read: r, key: x, source: t1, writer: t2, relation: v });
                }
            }
        }
    }
    out
}

/// Whether every axiom of read `r` holds under `co`.
pub fn axiom_holds(h: &History, co: &impl Precedes, r: ReadIdx) -> bool {
    read_violations(h, co, r).is_empty()
}

/// Whether every axiom of every read holds under `co`.
pub fn all_axioms_hold(h: &History, co: &impl Precedes) -> bool {
    (0..h.reads().len()).all(|r| axiom_holds(h, co, r))
}

/// Whether no transaction needs the commit order to state its axioms.
pub fn is_saturable_config(h: &History) -> bool {
    h.txns().iter().skip(1).all(|t| t.iso.is_saturable())
}

/// A history together with a total commit order extending so ∪ wr.
#[derive(Clone, Debug)]
pub struct Execution {
    history: History,
    co: TotalOrder,
}

impl Execution {
    /// Returns `None` unless `order` lists every transaction once and
    /// extends so ∪ wr.
    pub fn new(history: History, order: Vec<TxnIdx>) -> Option<Execution> {
        let n = history.txn_count();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return None;
        }
        let co = TotalOrder::new(order);
        let base = CommitRelation::from_pairs(n, history.so_wr_pairs());
        co.extends(&base).then_some(Execution { history, co })
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn commit_order(&self) -> &TotalOrder {
        &self.co
    }

    /// Whether every axiom of every read holds.
    pub fn is_consistent(&self) -> bool {
        all_axioms_hold(&self.history, &self.co)
    }

    pub fn violations(&self) -> Vec<AxiomViolation> {
        (0..self.history.reads().len())
            .flat_map(|r| read_violations(&self.history, &self.co, r))
            .collect()
    }
}
