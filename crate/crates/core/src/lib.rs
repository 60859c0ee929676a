//! Consistency checking for transactional histories where every transaction
//! carries its own isolation level (SER, SI, PC, RA or RC).
//!
//! * [`history`]: the data model and the value semantics of reads and writes.
//! * [`axioms`]: visibility relations and the per-read consistency axioms.
//! * [`saturation`]: commit-order constraints forced by the axioms, and the
//!   polynomial check for full histories using only RA and RC.
//! * [`checker`]: the general decision procedure for client histories.
//! * [`oracle`]: exhaustive reference checker for small histories.
//! * [`opsem`]: an interleaving semantics that generates consistent histories.
//! * [`io`]: file formats and reports used by the `isocheck` binary.

pub mod axioms;
pub mod checker;
pub mod corpus;
pub mod history;
pub mod io;
pub mod opsem;
pub mod oracle;
pub mod relation;
pub mod sample;
pub mod saturation;

pub use checker::{check_consistency, CheckOptions, Status, Verdict};
pub use history::{History, IsolationLevel, RawHistory};
