//! Turning an accepted commit order into a full witness history.

use crate::axioms::{vis_holds, vis_set};
use crate::history::{History, WrEdge};
use crate::relation::{Precedes, TotalOrder};

/// Fills every missing read of `h` with the latest (in `co`) writer of the
/// key that is visible to the read. Returns the full history and the edges
/// that were added.
///
/// `co` must be an order accepted by the prefix search on `h`; then every
/// chosen write is rejected by the read's predicate and all axioms hold.
pub fn extract_witness(h: &History, co: &TotalOrder) -> (History, Vec<WrEdge>) {
    let mut added = Vec::new();
    for (r, x) in h.missing_pairs() {
        let read = h.reads()[r];
        let mut best = None;
        for &v in vis_set(h.iso(read.txn)) {
            for t in h.writers(x).ones() {
                if t != read.txn
                    && vis_holds(h, co, v, t, r)
                    && best.is_none_or(|b| co.precedes(b, t))
                {
                    best = Some(t);
                }
            }
        }
        let source = best.expect("init is visible to every read");
        let from = h.writer_event(source, x).expect("visible writers write the key");
        added.push(WrEdge { key: x, from, to: read });
    }
    let full = h.with_added_wr(&added).expect("witness edges follow the commit order");
    (full, added)
}
