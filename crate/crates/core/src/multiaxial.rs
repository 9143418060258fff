//! Multiaxial descriptors: conjunctions of keys from independently indexed
//! axes, written `[(Q[0,0]),(L[0,1])]`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::keys::{parse_key_prefix, partially_unifiable, Key};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MultiaxialError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("axis `{0}` bound twice in one descriptor")]
    DuplicateAxis(String),
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AxisBinding {
    pub axis: String,
    pub key: Key,
}

impl AxisBinding {
    pub fn new(axis: &str, key: Key) -> Self {
        AxisBinding { axis: axis.to_string(), key }
    }
}

impl fmt::Display for AxisBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}{})", self.axis, self.key)
    }
}

/// Whether `s` is a usable axis name: an ASCII letter followed by letters,
/// digits or underscores.
pub fn is_axis_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiaxialDescriptor {
    bindings: Vec<AxisBinding>,
}

impl MultiaxialDescriptor {
    pub fn new(bindings: Vec<AxisBinding>) -> Result<Self, MultiaxialError> {
        let mut seen = BTreeSet::new();
        for b in &bindings {
            if !seen.insert(b.axis.as_str()) {
                return Err(MultiaxialError::DuplicateAxis(b.axis.clone()));
            }
        }
        if bindings.is_empty() {
            return Err(MultiaxialError::Syntax { pos: 0, msg: "descriptor without bindings".into() });
        }
        Ok(MultiaxialDescriptor { bindings })
    }

    pub fn bindings(&self) -> &[AxisBinding] {
        &self.bindings
    }

    pub fn key_on(&self, axis: &str) -> Option<&Key> {
        self.bindings.iter().find(|b| b.axis == axis).map(|b| &b.key)
    }
}

impl fmt::Display for MultiaxialDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, b) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{b}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiaxialExpression {
    pub descriptors: Vec<MultiaxialDescriptor>,
}

impl fmt::Display for MultiaxialExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.descriptors.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// A tuple of node keys describing one moment, possibly several per axis.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct Situation {
    pub bindings: BTreeSet<AxisBinding>,
}

impl Situation {
    pub fn new(bindings: impl IntoIterator<Item = AxisBinding>) -> Self {
        Situation { bindings: bindings.into_iter().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn on_axis<'a>(&'a self, axis: &'a str) -> impl Iterator<Item = &'a Key> + 'a {
        self.bindings.iter().filter(move |b| b.axis == axis).map(|b| &b.key)
    }

    pub fn axes(&self) -> BTreeSet<&str> {
        self.bindings.iter().map(|b| b.axis.as_str()).collect()
    }
}

impl fmt::Display for Situation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: &str) -> Result<T, MultiaxialError> {
        Err(MultiaxialError::Syntax { pos: self.pos, msg: msg.to_string() })
    }

    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.text[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.text[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), MultiaxialError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&format!("expected '{c}'"))
        }
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn binding(&mut self) -> Result<AxisBinding, MultiaxialError> {
        self.expect('(')?;
        self.skip_ws();
        let start = self.pos;
        let len = self.text[start..]
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.text.len() - start);
        let axis = &self.text[start..start + len];
        if !is_axis_name(axis) {
            return self.err("expected axis name");
        }
        self.pos += len;
        let (key, rest) = parse_key_prefix(&self.text[self.pos..])
            .map_err(|e| MultiaxialError::Syntax { pos: self.pos, msg: e.to_string() })?;
        self.pos = self.text.len() - rest.len();
        self.expect(')')?;
        Ok(AxisBinding::new(axis, key))
    }

    fn bindings(&mut self) -> Result<Vec<AxisBinding>, MultiaxialError> {
        let mut out = vec![self.binding()?];
        while self.peek() == Some(',') && self.text[self.pos + 1..].trim_start().starts_with('(') {
            self.pos += 1;
            out.push(self.binding()?);
        }
        Ok(out)
    }

    fn descriptor(&mut self) -> Result<MultiaxialDescriptor, MultiaxialError> {
        let start = self.pos;
        self.expect('[')?;
        let bindings = self.bindings()?;
        self.expect(']')?;
        MultiaxialDescriptor::new(bindings).map_err(|e| match e {
            MultiaxialError::Syntax { msg, .. } => MultiaxialError::Syntax { pos: start, msg },
            other => other,
        })
    }
}

/// Parses `[(A[..]),...],[(...)]`.
pub fn parse_multiaxial(text: &str) -> Result<MultiaxialExpression, MultiaxialError> {
    let mut p = Parser { text, pos: 0 };
    let mut descriptors = vec![p.descriptor()?];
    while !p.at_end() {
        p.expect(',')?;
        descriptors.push(p.descriptor()?);
    }
    Ok(MultiaxialExpression { descriptors })
}

/// Like [`parse_multiaxial`] but rejects axes for which `known` is false.
pub fn parse_multiaxial_checked(
    text: &str,
    known: impl Fn(&str) -> bool,
) -> Result<MultiaxialExpression, MultiaxialError> {
    let expr = parse_multiaxial(text)?;
    for d in &expr.descriptors {
        for b in &d.bindings {
            if !known(&b.axis) {
                return Err(MultiaxialError::UnknownAxis(b.axis.clone()));
            }
        }
    }
    Ok(expr)
}

/// Parses a situation written as bindings `(A[..]),(B[..])`, optionally
/// wrapped in brackets. The empty string is the empty situation.
pub fn parse_situation(text: &str) -> Result<Situation, MultiaxialError> {
    let mut p = Parser { text, pos: 0 };
    if p.at_end() {
        return Ok(Situation::default());
    }
    let bracketed = p.peek() == Some('[');
    if bracketed {
        p.pos += 1;
    }
    let bindings = p.bindings()?;
    if bracketed {
        p.expect(']')?;
    }
    if !p.at_end() {
        return p.err("trailing input");
    }
    Ok(Situation::new(bindings))
}

impl FromStr for MultiaxialExpression {
    type Err = MultiaxialError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_multiaxial(s)
    }
}

impl FromStr for MultiaxialDescriptor {
    type Err = MultiaxialError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser { text: s, pos: 0 };
        let d = p.descriptor()?;
        if !p.at_end() {
            return p.err("trailing input");
        }
        Ok(d)
    }
}

impl FromStr for Situation {
    type Err = MultiaxialError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_situation(s)
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(MultiaxialDescriptor);
string_serde!(MultiaxialExpression);
string_serde!(Situation);

/// Which side of a binding pair acts as the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// The descriptor key must unify into the situation key.
    #[default]
    DescriptorAsQuery,
    /// The situation key must unify into the descriptor key.
    SituationAsQuery,
}

pub fn descriptor_matches(d: &MultiaxialDescriptor, s: &Situation) -> bool {
    descriptor_matches_with(d, s, MatchMode::DescriptorAsQuery)
}

pub fn descriptor_matches_with(d: &MultiaxialDescriptor, s: &Situation, mode: MatchMode) -> bool {
    d.bindings.iter().all(|b| {
        s.on_axis(&b.axis).any(|k| match mode {
            MatchMode::DescriptorAsQuery => partially_unifiable(&b.key, k),
            MatchMode::SituationAsQuery => partially_unifiable(k, &b.key),
        })
    })
}

/// Any descriptor of the expression matches.
pub fn expression_matches(e: &MultiaxialExpression, s: &Situation) -> bool {
    e.descriptors.iter().any(|d| descriptor_matches(d, s))
}

/// Every axis of `d1` is bound in `d2` and `d1`'s key unifies into `d2`'s.
pub fn descriptor_subsumes(d1: &MultiaxialDescriptor, d2: &MultiaxialDescriptor) -> bool {
    d1.bindings
        .iter()
        .all(|b| d2.key_on(&b.axis).is_some_and(|k| partially_unifiable(&b.key, k)))
}
