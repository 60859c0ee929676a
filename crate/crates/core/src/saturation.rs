//! Commit-order constraints forced by the axioms.
//!
//! [`saturate`] adds, for every read, the orderings that the axioms demand
//! given a partial commit order. Iterating it from (so ∪ wr)⁺ reaches a
//! least fixpoint that every consistent commit order contains. For
//! histories whose transactions all run at RA or RC one pass suffices, and
//! acyclicity of the result decides consistency of full histories.

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::axioms::{is_saturable_config, vis_set, VisibilityRelation};
use crate::history::{History, ReadIdx, TxnIdx};
use crate::relation::CommitRelation;

/// The transitive closure of so ∪ wr.
pub fn base_relation(h: &History) -> CommitRelation {
    CommitRelation::from_pairs(h.txn_count(), h.so_wr_pairs()).closed()
}

/// Every transaction visible to read `r` under some visibility relation of
/// its transaction's level, reading the commit order as `pco`.
///
/// Agrees pointwise with [`crate::axioms::vis_holds`]; computed with set
/// operations instead of per-pair queries.
pub fn visible_set(h: &History, pco: &CommitRelation, r: ReadIdx) -> FixedBitSet {
    let reader = h.reads()[r].txn;
    let n = h.txn_count();
    let mut out = FixedBitSet::with_capacity(n);
    for &v in vis_set(h.iso(reader)) {
        match v {
            VisibilityRelation::Ser => out.union_with(pco.predecessors(reader)),
            VisibilityRelation::Ra => out.union_with(h.so_wr_predecessors(reader)),
            VisibilityRelation::Rc => out.union_with(h.rc_visible(r)),
            VisibilityRelation::Prefix => {
                for t4 in h.so_wr_predecessors(reader).ones() {
                    out.insert(t4);
                    out.union_with(pco.predecessors(t4));
                }
            }
            VisibilityRelation::Conflict => {
                let mut overlap = FixedBitSet::with_capacity(n);
                for y in h.write_keys(reader).ones() {
                    overlap.union_with(h.writers(y));
                }
                overlap.intersect_with(pco.predecessors(reader));
                for t4 in overlap.ones() {
                    out.insert(t4);
                    out.union_with(pco.predecessors(t4));
                }
            }
        }
    }
    out
}

/// One saturation pass: `pco` plus every ordering `(t2, t1)` such that a
/// read reads some key from `t1` while `t2` also writes it and is visible
/// to the read under `pco`. The result is transitively closed.
///
/// Reads without a wr source for a key are skipped for that key.
pub fn saturate(h: &History, pco: &CommitRelation) -> CommitRelation {
    let mut out = pco.clone();
    for (r, read) in h.reads().iter().enumerate() {
        let visible = visible_set(h, pco, r);
        for x in 0..h.key_count() {
            let Some(t1) = h.wr_source_txn(r, x) else { continue };
            let mut forced = visible.clone();
            forced.intersect_with(h.writers(x));
            for t2 in forced.ones() {
                if t2 != t1 && t2 != read.txn {
                    out.insert(t2, t1);
                }
            }
        }
    }
    out.close();
    out
}

#[derive(Clone, Debug)]
pub struct SaturationResult {
    pub pco: CommitRelation,
    pub acyclic: bool,
    /// A cycle of `pco`, present exactly when it is cyclic.
    pub cycle_witness: Option<Vec<TxnIdx>>,
    /// Number of saturation passes run.
    pub passes: usize,
}

/// Least fixpoint of [`saturate`] above (so ∪ wr)⁺.
pub fn saturate_fixpoint(h: &History) -> SaturationResult {
    saturate_fixpoint_from(h, base_relation(h))
}

/// Least fixpoint of [`saturate`] above the transitive relation `start`.
pub fn saturate_fixpoint_from(h: &History, start: CommitRelation) -> SaturationResult {
    let mut pco = start;
    let mut size = pco.len();
    let mut passes = 0;
    loop {
        passes += 1;
        let next = saturate(h, &pco);
        let next_size = next.len();
        pco = next;
        if next_size == size {
            break;
        }
        size = next_size;
    }
    log::debug!("saturation reached a fixpoint of {size} pairs after {passes} passes");
    let cycle_witness = pco.find_cycle();
    SaturationResult { acyclic: cycle_witness.is_none(), pco, cycle_witness, passes }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum SaturableError {
    #[error("the saturation check needs a full history")]
    NotFull,
    #[error("the saturation check needs every transaction to run at RA or RC")]
    NotSaturable,
}

/// Decides consistency of a full history whose transactions all run at RA
/// or RC, in polynomial time.
pub fn check_saturable(h: &History) -> Result<bool, SaturableError> {
    if !h.is_full() {
        return Err(SaturableError::NotFull);
    }
    if !is_saturable_config(h) {
        return Err(SaturableError::NotSaturable);
    }
    let base = base_relation(h);
    if (0..h.txn_count()).any(|t| base.contains(t, t)) {
        return Ok(false);
    }
    Ok(saturate(h, &base).is_acyclic())
}
