//! Brute-force reference implementations of the key relations.
//!
//! These follow the definitions literally: they enumerate every instance of a
//! key over a finite constant alphabet and test the defining condition. They
//! are exponential and only meant for cross-checking the closed-form decision
//! procedures in [`crate::keys`] on small keys.
//!
//! The alphabet for a pair of keys is the set of constants occurring in them
//! plus one constant that occurs in neither. One fresh symbol is enough to
//! witness that two variables may be bound independently.

use std::collections::{BTreeSet, HashSet};

use crate::keys::{Key, KeyElement};

/// Packed instance: 8 bits per position, `0xff` is the variable, length in
/// the top byte.
type Packed = u128;

const VAR_CODE: u128 = 0xff;
const MAX_LEN: usize = 15;

/// Constants occurring in the keys plus the smallest constant absent from them.
pub fn alphabet(keys: &[&Key]) -> Vec<u32> {
    let mut consts: BTreeSet<u32> = keys
        .iter()
        .flat_map(|k| k.elements())
        .filter_map(|e| match e {
            KeyElement::Const(n) => Some(*n),
            KeyElement::Var => None,
        })
        .collect();
    let fresh = (0..).find(|n| !consts.contains(n)).expect("finite set");
    consts.insert(fresh);
    consts.into_iter().collect()
}

fn code(e: KeyElement) -> u128 {
    match e {
        KeyElement::Const(n) => {
            assert!(n < 0xff, "oracle constants must be below 255");
            n as u128
        }
        KeyElement::Var => VAR_CODE,
    }
}

fn pack(elements: &[KeyElement]) -> Packed {
    let body = elements.iter().fold(0, |acc, e| (acc << 8) | code(*e));
    body | (elements.len() as u128) << 120
}

/// Every instance of `k` over `alphabet`, variables optionally left in place.
pub fn instances(k: &Key, alphabet: &[u32]) -> Vec<Vec<KeyElement>> {
    let mut out = vec![Vec::with_capacity(k.len())];
    for e in k.elements() {
        out = match e {
            KeyElement::Const(_) => out
                .into_iter()
                .map(|mut v| {
                    v.push(*e);
                    v
                })
                .collect(),
            KeyElement::Var => out
                .into_iter()
                .flat_map(|v| {
                    std::iter::once(KeyElement::Var)
                        .chain(alphabet.iter().map(|c| KeyElement::Const(*c)))
                        .map(move |choice| {
                            let mut w = v.clone();
                            w.push(choice);
                            w
                        })
                })
                .collect(),
        };
    }
    out
}

fn packed_instances(k: &Key, alphabet: &[u32]) -> HashSet<Packed> {
    assert!(k.len() <= MAX_LEN, "oracle keys are limited to {MAX_LEN} positions");
    instances(k, alphabet).iter().map(|v| pack(v)).collect()
}

/// `k1 ∈ inst(k2)`.
pub fn is_instance(k1: &Key, k2: &Key) -> bool {
    let alpha = alphabet(&[k1, k2]);
    instances(k2, &alpha).iter().any(|i| i.as_slice() == k1.elements())
}

/// Some instance of `k1` is an initial key of some instance of `k2`.
pub fn partially_unifiable(k1: &Key, k2: &Key) -> bool {
    let alpha = alphabet(&[k1, k2]);
    let firsts = packed_instances(k1, &alpha);
    let m = k1.len();
    instances(k2, &alpha)
        .iter()
        .filter(|i| i.len() >= m)
        .any(|i| firsts.contains(&pack(&i[..m])))
}

/// `inst(k1) ∩ inst(k2) ≠ ∅`.
pub fn instances_overlap(k1: &Key, k2: &Key) -> bool {
    let alpha = alphabet(&[k1, k2]);
    let a = packed_instances(k1, &alpha);
    instances(k2, &alpha).iter().any(|i| a.contains(&pack(i)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(s: &str) -> Key {
        s.parse().unwrap()
    }

    #[test]
    fn alphabet_adds_one_fresh_constant() {
        assert_eq!(alphabet(&[&k("[0,2]"), &k("[x,1]")]), vec![0, 1, 2, 3]);
        assert_eq!(alphabet(&[&k("[1,x]")]), vec![0, 1]);
    }

    #[test]
    fn instance_enumeration_counts() {
        // two variables, alphabet {0,1}: each position has three choices
        assert_eq!(instances(&k("[x,0,x]"), &[0, 1]).len(), 9);
        assert_eq!(instances(&k("[3,0]"), &[0, 1]).len(), 1);
    }

    #[test]
    fn reference_examples() {
        assert!(partially_unifiable(&k("[0,x,2,x,5]"), &k("[0,3,x,x,5,x,1]")));
        assert!(!partially_unifiable(&k("[0,1]"), &k("[0,2,5]")));
        assert!(instances_overlap(&k("[0,x]"), &k("[0,1]")));
        assert!(!instances_overlap(&k("[0,1,1]"), &k("[0,x,0]")));
        assert!(is_instance(&k("[0,0,2,x,8]"), &k("[0,x,x,x,8]")));
        assert!(!is_instance(&k("[0,1]"), &k("[0,x,0]")));
    }

    #[test]
    fn leading_zeros_keep_lengths_apart() {
        assert!(!instances_overlap(&k("[0,1,0,3]"), &k("[x,x,3]")));
        assert!(!instances_overlap(&k("[0,0]"), &k("[0]")));
    }
}
