//! Brute-force consistency check used as ground truth in tests.
//!
//! Every full extension of the input is enumerated (each read/key pair
//! without a source gets every committed writer whose value the read's
//! predicate rejects), and for each one every total order extending
//! so ∪ wr. An order is accepted when one saturation pass adds nothing to
//! it, which holds exactly when every axiom holds under it.

use std::ops::ControlFlow;

use thiserror::Error;

use crate::checker::{Status, Witness};
use crate::history::{History, KeyIdx, ReadIdx, TxnIdx, WrEdge};
use crate::relation::{for_each_linear_extension, CommitRelation};
use crate::saturation::{base_relation, saturate};

/// Limits on the size of the search space the oracle accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleBudget {
    /// Transactions other than `init`.
    pub max_transactions: usize,
    /// Read/key pairs without a source.
    pub max_missing_pairs: usize,
    /// Full extensions of the input.
    pub max_witnesses: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_transactions: 8, max_missing_pairs: 16, max_witnesses: 4096 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("history too large for the oracle: {0}")]
    TooLarge(String),
}

#[derive(Clone, Debug)]
pub struct OracleVerdict {
    /// Either consistent or inconsistent.
    pub status: Status,
    /// The first accepted full extension and order.
    pub witness: Option<Witness>,
    pub witnesses_tried: u64,
    pub orders_tried: u64,
}

/// Whether one saturation pass over the total order `order` leaves it
/// unchanged.
pub fn accepts_order(h: &History, order: &[TxnIdx]) -> bool {
    let co = CommitRelation::from_total_order(order);
    saturate(h, &co) == co
}

/// The candidate sources of every missing read/key pair.
fn candidate_sources(h: &History) -> Vec<((ReadIdx, KeyIdx), Vec<TxnIdx>)> {
    h.missing_pairs()
        .into_iter()
        .map(|(r, x)| {
            let read = h.reads()[r];
            let pred = h.op(read).predicate().expect("reads carry a predicate");
            let sources = h
                .writers(x)
                .ones()
                .filter(|&t| t != read.txn)
                .filter(|&t| !pred.eval(h.key_name(x), h.txn_value(t, x).expect("writers have a value")))
                .collect();
            ((r, x), sources)
        })
        .collect()
}

fn check_size(h: &History, budget: &OracleBudget) -> Result<Vec<((ReadIdx, KeyIdx), Vec<TxnIdx>)>, OracleError> {
    let txns = h.txn_count() - 1;
    if txns > budget.max_transactions {
        return Err(OracleError::TooLarge(format!(
            "{txns} transactions, at most {} allowed",
            budget.max_transactions
        )));
    }
    let candidates = candidate_sources(h);
    if candidates.len() > budget.max_missing_pairs {
        return Err(OracleError::TooLarge(format!(
            "{} reads without a source, at most {} allowed",
            candidates.len(),
            budget.max_missing_pairs
        )));
    }
    let witnesses = candidates.iter().try_fold(1u64, |acc, (_, c)| acc.checked_mul(c.len() as u64));
    if witnesses.is_none_or(|w| w > budget.max_witnesses) {
        return Err(OracleError::TooLarge(format!(
            "more than {} full extensions",
            budget.max_witnesses
        )));
    }
    Ok(candidates)
}

/// Calls `visit` on every total order of the full history `h` that extends
/// so ∪ wr and satisfies every axiom, in lexicographic order. Stops when
/// `visit` breaks; returns the number of orders examined.
pub fn enumerate_consistent_orders(
    h: &History,
    budget: &OracleBudget,
    mut visit: impl FnMut(&[TxnIdx]) -> ControlFlow<()>,
) -> Result<u64, OracleError> {
    if h.txn_count() - 1 > budget.max_transactions {
        return Err(OracleError::TooLarge(format!("{} transactions", h.txn_count() - 1)));
    }
    let base = base_relation(h);
    let preds: Vec<_> = (0..h.txn_count()).map(|t| base.predecessors(t).clone()).collect();
    let mut tried = 0u64;
    for_each_linear_extension(&preds, |order| {
        tried += 1;
        if accepts_order(h, order) {
            visit(order)
        } else {
            ControlFlow::Continue(())
        }
    });
    Ok(tried)
}

/// Calls `visit` on every full extension of `h` satisfying the witness
/// condition, with the edges added, in lexicographic order of the choices.
/// Extensions that are not valid histories (cyclic so ∪ wr) are skipped.
pub fn for_each_full_extension(
    h: &History,
    budget: &OracleBudget,
    mut visit: impl FnMut(History, Vec<WrEdge>) -> ControlFlow<()>,
) -> Result<(), OracleError> {
    let candidates = check_size(h, budget)?;
    if candidates.iter().any(|(_, c)| c.is_empty()) {
        return Ok(());
    }
    let mut digits = vec![0usize; candidates.len()];
    loop {
        let edges: Vec<WrEdge> = candidates
            .iter()
            .zip(&digits)
            .map(|(&((r, x), ref c), &d)| WrEdge {
                key: x,
                from: h.writer_event(c[d], x).expect("candidates write the key"),
                to: h.reads()[r],
            })
            .collect();
        if let Ok(full) = h.with_added_wr(&edges) {
            if visit(full, edges).is_break() {
                return Ok(());
            }
        }
        let mut i = digits.len();
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < candidates[i].1.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Decides consistency of `h` by exhaustive search.
pub fn brute_force_check(h: &History, budget: &OracleBudget) -> Result<OracleVerdict, OracleError> {
    let mut verdict =
        OracleVerdict { status: Status::Inconsistent, witness: None, witnesses_tried: 0, orders_tried: 0 };
    let mut failure = None;
    for_each_full_extension(h, budget, |full, added| {
        verdict.witnesses_tried += 1;
        let mut accepted = None;
        match enumerate_consistent_orders(&full, budget, |order| {
            accepted = Some(order.to_vec());
            ControlFlow::Break(())
        }) {
            Ok(tried) => verdict.orders_tried += tried,
            Err(e) => {
                failure = Some(e);
                return ControlFlow::Break(());
            }
        }
        match accepted {
            Some(order) => {
                verdict.status = Status::Consistent;
                verdict.witness = Some(Witness { history: full, commit_order: order, added });
                ControlFlow::Break(())
            }
            None => ControlFlow::Continue(()),
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(verdict),
    }
}
