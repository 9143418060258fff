//! Semantic keys and the key algebra.
//!
//! A key is a non-empty list whose elements are natural-number constants or
//! the variable `x`. Every occurrence of `x` is an independent variable. Keys
//! encode the inheritance path of a node: a more general key is (an instance
//! of) an initial segment of a more specific one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("a key needs at least one element")]
    Empty,
    #[error("initial key length {m} out of range 1..={len}")]
    PrefixOutOfRange { m: usize, len: usize },
    #[error("cannot expand a key of length {from} towards a shorter key of length {to}")]
    ExpandShorter { from: usize, to: usize },
}

/// One position of a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyElement {
    Const(u32),
    Var,
}

impl KeyElement {
    pub fn is_var(self) -> bool {
        matches!(self, KeyElement::Var)
    }

    /// Two positions are compatible when some substitution makes them equal.
    pub fn compatible(self, other: KeyElement) -> bool {
        match (self, other) {
            (KeyElement::Const(a), KeyElement::Const(b)) => a == b,
            _ => true,
        }
    }
}

impl fmt::Display for KeyElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyElement::Const(n) => write!(f, "{n}"),
            KeyElement::Var => f.write_str("x"),
        }
    }
}

/// An immutable semantic key such as `[0,x,0,1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key(Vec<KeyElement>);

impl Key {
    pub fn new(elements: Vec<KeyElement>) -> Result<Self, KeyError> {
        if elements.is_empty() {
            return Err(KeyError::Empty);
        }
        Ok(Key(elements))
    }

    /// The key `[0]` given to every root.
    pub fn root() -> Self {
        Key(vec![KeyElement::Const(0)])
    }

    pub fn elements(&self) -> &[KeyElement] {
        &self.0
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, pos: usize) -> Option<KeyElement> {
        self.0.get(pos).copied()
    }

    pub fn has_variables(&self) -> bool {
        self.0.iter().any(|e| e.is_var())
    }

    /// Returns a new key with `element` appended.
    pub fn child(&self, element: KeyElement) -> Key {
        let mut v = self.0.clone();
        v.push(element);
        Key(v)
    }

    /// The initial key of length `m` (1-based, `1 <= m <= len`).
    pub fn initial(&self, m: usize) -> Result<Key, KeyError> {
        initial_key(self, m)
    }

    /// True when `self` is a strict or non-strict structural prefix of `other`.
    pub fn is_initial_key_of(&self, other: &Key) -> bool {
        self.len() <= other.len() && other.0[..self.len()] == self.0[..]
    }

    /// Length of the longest structurally equal initial segment.
    pub fn common_prefix_len(&self, other: &Key) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for Key {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_key(s)
    }
}

impl Serialize for Key {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Key {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_key(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses the canonical text form `[e1,...,en]`, tolerating whitespace
/// around elements and brackets.
pub fn parse_key(text: &str) -> Result<Key, KeyError> {
    let (key, rest) = parse_key_prefix(text)?;
    let trailing = rest.len() - rest.trim_start().len();
    if !rest.trim().is_empty() {
        return Err(KeyError::Syntax {
            pos: text.len() - rest.len() + trailing,
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(key)
}

/// Parses one key at the start of `text` (after optional whitespace) and
/// returns the remaining input. Used by the other text formats that embed
/// keys.
pub fn parse_key_prefix(text: &str) -> Result<(Key, &str), KeyError> {
    let bytes = text.as_bytes();
    let mut pos = skip_ws(bytes, 0);
    if bytes.get(pos) != Some(&b'[') {
        return Err(KeyError::Syntax { pos, msg: "expected '['".into() });
    }
    pos += 1;
    let mut elements = Vec::new();
    loop {
        pos = skip_ws(bytes, pos);
        match bytes.get(pos) {
            Some(b']') if elements.is_empty() => return Err(KeyError::Empty),
            Some(b'x') => {
                elements.push(KeyElement::Var);
                pos += 1;
            }
            Some(c) if c.is_ascii_digit() => {
                let start = pos;
                while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                    pos += 1;
                }
                let value = text[start..pos].parse::<u32>().map_err(|_| KeyError::Syntax {
                    pos: start,
                    msg: "constant out of range".into(),
                })?;
                elements.push(KeyElement::Const(value));
            }
            Some(_) => {
                return Err(KeyError::Syntax { pos, msg: "expected a natural number or 'x'".into() })
            }
            None => return Err(KeyError::Syntax { pos, msg: "unterminated key".into() }),
        }
        pos = skip_ws(bytes, pos);
        match bytes.get(pos) {
            Some(b',') => pos += 1,
            Some(b']') => {
                pos += 1;
                break;
            }
            Some(_) => return Err(KeyError::Syntax { pos, msg: "expected ',' or ']'".into() }),
            None => return Err(KeyError::Syntax { pos, msg: "unterminated key".into() }),
        }
    }
    Ok((Key(elements), &text[pos..]))
}

fn skip_ws(bytes: &[u8], mut pos: usize) -> usize {
    while bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        pos += 1;
    }
    pos
}

pub fn initial_key(k: &Key, m: usize) -> Result<Key, KeyError> {
    if m == 0 || m > k.len() {
        return Err(KeyError::PrefixOutOfRange { m, len: k.len() });
    }
    Ok(Key(k.0[..m].to_vec()))
}

/// `k1` is an instance of `k2`: same length, and `k1` arises from `k2` by
/// substituting some (not necessarily all) variables with constants.
pub fn is_instance(k1: &Key, k2: &Key) -> bool {
    k1.len() == k2.len()
        && k1.0.iter().zip(&k2.0).all(|(a, b)| match (a, b) {
            (_, KeyElement::Var) => true,
            (KeyElement::Const(x), KeyElement::Const(y)) => x == y,
            (KeyElement::Var, KeyElement::Const(_)) => false,
        })
}

/// At least one variable of `k1` faces a constant of `k2` and no aligned
/// constants disagree, over the common prefix.
pub fn is_partial_instance(k1: &Key, k2: &Key) -> bool {
    let mut substituted = false;
    for (a, b) in k1.0.iter().zip(&k2.0) {
        match (a, b) {
            (KeyElement::Const(x), KeyElement::Const(y)) if x != y => return false,
            (KeyElement::Var, KeyElement::Const(_)) => substituted = true,
            _ => {}
        }
    }
    substituted
}

/// Some instance of `k1` is an initial key of some instance of `k2`.
pub fn partially_unifiable(k1: &Key, k2: &Key) -> bool {
    k1.len() <= k2.len() && k1.0.iter().zip(&k2.0).all(|(a, b)| a.compatible(*b))
}

/// `inst(k1) ∩ inst(k2) ≠ ∅`.
pub fn instances_overlap(k1: &Key, k2: &Key) -> bool {
    k1.len() == k2.len() && k1.0.iter().zip(&k2.0).all(|(a, b)| a.compatible(*b))
}

/// Positionwise generalization to the length of the longest key: a position
/// keeps constant `n` only if every key long enough to reach it has `n`
/// there.
///
/// # Panics
/// Panics on an empty slice.
pub fn generalize(keys: &[Key]) -> Key {
    assert!(!keys.is_empty(), "generalize needs at least one key");
    let len = keys.iter().map(Key::len).max().unwrap_or(0);
    let elements = (0..len)
        .map(|i| {
            let mut column = keys.iter().filter_map(|k| k.get(i));
            let first = column.next().expect("longest key reaches every position");
            match first {
                KeyElement::Const(n) if column.all(|e| e == KeyElement::Const(n)) => first,
                _ => KeyElement::Var,
            }
        })
        .collect();
    Key(elements)
}

/// Fills `k1` up to the length of `k2` with the trailing elements of `k2`.
pub fn expand(k1: &Key, k2: &Key) -> Result<Key, KeyError> {
    if k1.len() > k2.len() {
        return Err(KeyError::ExpandShorter { from: k1.len(), to: k2.len() });
    }
    let mut v = k1.0.clone();
    v.extend_from_slice(&k2.0[k1.len()..]);
    Ok(Key(v))
}
