use alloc::collections::BTreeSet;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::types::{Provenance, RankedEntry, RankedList};

/// Turns a model-proposed order into an exact permutation of `original`.
///
/// The first occurrence of each known id keeps its place; duplicates and ids
/// not in `original` are dropped; ids the model omitted are appended in their
/// original order and tagged [`Provenance::Repaired`].
pub fn repair_permutation<A: AsRef<str>, B: AsRef<str>>(model_order: &[A], original: &[B]) -> RankedList {
    let known: BTreeSet<&str> = original.iter().map(AsRef::as_ref).collect();
    let mut placed: BTreeSet<&str> = BTreeSet::new();
    let mut entries = Vec::with_capacity(original.len());
    for id in model_order {
        let id = id.as_ref();
        if known.contains(id) && placed.insert(id) {
            entries.push(RankedEntry {
                id: id.to_string(),
                provenance: Provenance::Model,
            });
        }
    }
    for id in original {
        let id = id.as_ref();
        if placed.insert(id) {
            entries.push(RankedEntry {
                id: id.to_string(),
                provenance: Provenance::Repaired,
            });
        }
    }
    RankedList(entries)
}

/// Whether `ranked` is a permutation of `original` (as multisets).
pub fn is_permutation<A: AsRef<str>, B: AsRef<str>>(ranked: &[A], original: &[B]) -> bool {
    if ranked.len() != original.len() {
        return false;
    }
    let mut a: Vec<&str> = ranked.iter().map(AsRef::as_ref).collect();
    let mut b: Vec<&str> = original.iter().map(AsRef::as_ref).collect();
    a.sort_unstable();
    b.sort_unstable();
    a == b
}
