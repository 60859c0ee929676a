//! Hand-written histories bundled with the crate.

use crate::history::{History, RawHistory};

/// `(name, JSON text)` for every bundled history.
pub const ENTRIES: &[(&str, &str)] = &[
    ("update_delete_chain", include_str!("../corpus/update_delete_chain.json")),
    ("client_missing_reads", include_str!("../corpus/client_missing_reads.json")),
    ("client_bad_extension", include_str!("../corpus/client_bad_extension.json")),
    ("client_witness_ser", include_str!("../corpus/client_witness_ser.json")),
    ("client_witness_rc", include_str!("../corpus/client_witness_rc.json")),
    ("mixed_levels_conflict", include_str!("../corpus/mixed_levels_conflict.json")),
    ("write_skew", include_str!("../corpus/write_skew.json")),
    ("fractured_read", include_str!("../corpus/fractured_read.json")),
    ("long_fork", include_str!("../corpus/long_fork.json")),
];

pub fn raw(name: &str) -> RawHistory {
    let (_, text) = ENTRIES
        .iter()
        .find(|(n, _)| *n == name)
        .unwrap_or_else(|| panic!("no bundled history named `{name}`"));
    serde_json::from_str(text).unwrap_or_else(|e| panic!("bundled history `{name}`: {e}"))
}

/// Loads a bundled history; panics if `name` is unknown.
pub fn load(name: &str) -> History {
    History::from_raw(&raw(name)).unwrap_or_else(|e| panic!("bundled history `{name}`: {e}"))
}
