//! Deduced concepts: named conditions over situations, organised in a
//! hierarchy whose children inherit every condition of their ancestors.
//!
//! ```text
//! dconcept "pain condition":
//!   requires [(A[0,0])]
//! dconcept "headache" parent "pain condition":
//!   requires [(L[0,1])]
//!   excludes [(A[0,1])]
//!   requires dconcept "fever"
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::hierarchy::{ConceptHierarchy, ConceptName};
use crate::indexer::{index_hierarchy, IndexError, IndexedHierarchy};
use crate::keys::Key;
use crate::multiaxial::{descriptor_matches, parse_multiaxial, MultiaxialDescriptor, MultiaxialError, Situation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DConceptError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Expression { line: usize, source: MultiaxialError },
    #[error("d-concept `{0}` defined twice")]
    Duplicate(String),
    #[error("`{concept}` refers to unknown d-concept `{missing}`")]
    Unknown { concept: String, missing: String },
    #[error("cyclic definition {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("no root d-concept (one without a parent)")]
    NoRoot,
    #[error("two root d-concepts `{0}` and `{1}`")]
    MultipleRoots(String, String),
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DConceptDescription {
    pub requires: Vec<MultiaxialDescriptor>,
    pub excludes: Vec<MultiaxialDescriptor>,
    /// Other d-concepts that must hold.
    pub requires_concepts: Vec<String>,
    /// Other d-concepts that must not hold.
    pub excludes_concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DConcept {
    pub name: String,
    pub parent: Option<String>,
    pub description: DConceptDescription,
}

impl DConcept {
    pub fn new(name: &str, parent: Option<&str>) -> Self {
        DConcept { name: name.to_string(), parent: parent.map(str::to_string), description: Default::default() }
    }
}

/// An indexed d-concept hierarchy.
#[derive(Debug, Clone)]
pub struct DConceptHierarchy {
    concepts: Vec<DConcept>,
    slot: HashMap<String, usize>,
    children: Vec<Vec<usize>>,
    root: usize,
    index: IndexedHierarchy,
}

impl DConceptHierarchy {
    /// Builds and indexes the hierarchy. Concepts may appear in any order;
    /// children keep their relative order.
    pub fn new(concepts: Vec<DConcept>) -> Result<Self, DConceptError> {
        let mut slot = HashMap::new();
        for (i, c) in concepts.iter().enumerate() {
            if slot.insert(c.name.clone(), i).is_some() {
                return Err(DConceptError::Duplicate(c.name.clone()));
            }
        }
        let lookup = |concept: &str, name: &str| {
            slot.get(name).copied().ok_or_else(|| DConceptError::Unknown {
                concept: concept.to_string(),
                missing: name.to_string(),
            })
        };
        let mut children = vec![Vec::new(); concepts.len()];
        let mut roots = Vec::new();
        // parent and reference edges, for the cycle check
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); concepts.len()];
        for (i, c) in concepts.iter().enumerate() {
            match &c.parent {
                Some(p) => {
                    let p = lookup(&c.name, p)?;
                    children[p].push(i);
                    edges[i].push(p);
                }
                None => roots.push(i),
            }
            for r in c.description.requires_concepts.iter().chain(&c.description.excludes_concepts) {
                edges[i].push(lookup(&c.name, r)?);
            }
        }
        if let Some(cycle) = find_cycle(&edges) {
            return Err(DConceptError::Cycle(cycle.into_iter().map(|i| concepts[i].name.clone()).collect()));
        }
        let root = match roots.as_slice() {
            [] => return Err(DConceptError::NoRoot),
            [r] => *r,
            [a, b, ..] => return Err(DConceptError::MultipleRoots(concepts[*a].name.clone(), concepts[*b].name.clone())),
        };

        let tree = build_tree(&concepts, &children, root);
        let index = index_hierarchy(&tree)?;
        Ok(DConceptHierarchy { concepts, slot, children, root, index })
    }

    pub fn concepts(&self) -> &[DConcept] {
        &self.concepts
    }

    pub fn get(&self, name: &str) -> Option<&DConcept> {
        self.slot.get(name).map(|i| &self.concepts[*i])
    }

    pub fn root(&self) -> &DConcept {
        &self.concepts[self.root]
    }

    pub fn children(&self, name: &str) -> Vec<&DConcept> {
        self.slot
            .get(name)
            .map(|i| self.children[*i].iter().map(|c| &self.concepts[*c]).collect())
            .unwrap_or_default()
    }

    pub fn key(&self, name: &str) -> Option<&Key> {
        self.index.concept_key(&ConceptName::from(name))
    }

    pub fn index(&self) -> &IndexedHierarchy {
        &self.index
    }

    /// The concept and its ancestors, root last.
    pub fn lineage(&self, name: &str) -> Vec<&DConcept> {
        let mut out = Vec::new();
        let mut cur = self.get(name);
        while let Some(c) = cur {
            out.push(c);
            cur = c.parent.as_deref().and_then(|p| self.get(p));
        }
        out
    }

    /// Own conditions together with every ancestor's.
    pub fn effective_description(&self, name: &str) -> DConceptDescription {
        let mut out = DConceptDescription::default();
        for c in self.lineage(name).into_iter().rev() {
            let d = &c.description;
            out.requires.extend(d.requires.iter().cloned());
            out.excludes.extend(d.excludes.iter().cloned());
            out.requires_concepts.extend(d.requires_concepts.iter().cloned());
            out.excludes_concepts.extend(d.excludes_concepts.iter().cloned());
        }
        out
    }

    /// Axes mentioned anywhere in the conditions.
    pub fn axes(&self) -> BTreeSet<String> {
        self.concepts
            .iter()
            .flat_map(|c| c.description.requires.iter().chain(&c.description.excludes))
            .flat_map(|d| d.bindings().iter().map(|b| b.axis.clone()))
            .collect()
    }
}

fn build_tree(concepts: &[DConcept], children: &[Vec<usize>], root: usize) -> ConceptHierarchy {
    let mut out = ConceptHierarchy::new(ConceptName::from(concepts[root].name.as_str()));
    let mut queue = std::collections::VecDeque::from([(root, out.root())]);
    while let Some((c, node)) = queue.pop_front() {
        for &ch in &children[c] {
            let id = out.add_child(node, ConceptName::from(concepts[ch].name.as_str())).expect("node exists");
            queue.push_back((ch, id));
        }
    }
    out
}

fn find_cycle(edges: &[Vec<usize>]) -> Option<Vec<usize>> {
    // 0 unvisited, 1 on stack, 2 done
    let mut state = vec![0u8; edges.len()];
    let mut path = Vec::new();
    fn visit(v: usize, edges: &[Vec<usize>], state: &mut [u8], path: &mut Vec<usize>) -> Option<Vec<usize>> {
        state[v] = 1;
        path.push(v);
        for &w in &edges[v] {
            if state[w] == 1 {
                let start = path.iter().position(|x| *x == w).expect("on stack");
                let mut cycle = path[start..].to_vec();
                cycle.push(w);
                return Some(cycle);
            }
            if state[w] == 0 {
                if let Some(c) = visit(w, edges, state, path) {
                    return Some(c);
                }
            }
        }
        path.pop();
        state[v] = 2;
        None
    }
    (0..edges.len()).find_map(|v| if state[v] == 0 { visit(v, edges, &mut state, &mut path) } else { None })
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl fmt::Display for DConceptHierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.concepts {
            write!(f, "dconcept {}", quote(&c.name))?;
            if let Some(p) = &c.parent {
                write!(f, " parent {}", quote(p))?;
            }
            writeln!(f, ":")?;
            let d = &c.description;
            for r in &d.requires {
                writeln!(f, "  requires {r}")?;
            }
            for r in &d.requires_concepts {
                writeln!(f, "  requires dconcept {}", quote(r))?;
            }
            for e in &d.excludes {
                writeln!(f, "  excludes {e}")?;
            }
            for e in &d.excludes_concepts {
                writeln!(f, "  excludes dconcept {}", quote(e))?;
            }
        }
        Ok(())
    }
}

/// Reads a quoted string at the start of `s`, returning it and the rest.
fn quoted(s: &str) -> Option<(String, &str)> {
    let body = s.strip_prefix('"')?;
    let mut out = String::new();
    let mut chars = body.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => out.push(chars.next()?.1),
            '"' => return Some((out, &body[i + 1..])),
            _ => out.push(c),
        }
    }
    None
}

/// Parses the d-concept DSL and indexes the resulting hierarchy.
pub fn parse_dconcepts(text: &str) -> Result<DConceptHierarchy, DConceptError> {
    let mut concepts: Vec<DConcept> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let syntax = |msg: &str| DConceptError::Syntax { line, msg: msg.to_string() };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let indented = raw.starts_with(char::is_whitespace);
        if !indented {
            let rest = trimmed.strip_prefix("dconcept").ok_or_else(|| syntax("expected `dconcept`"))?.trim_start();
            let (name, rest) = quoted(rest).ok_or_else(|| syntax("expected quoted name"))?;
            let mut rest = rest.trim();
            let mut parent = None;
            if let Some(p) = rest.strip_prefix("parent") {
                let (p, r) = quoted(p.trim_start()).ok_or_else(|| syntax("expected quoted parent name"))?;
                parent = Some(p);
                rest = r.trim();
            }
            if rest != ":" {
                return Err(syntax("expected `:` after the header"));
            }
            if name.trim().is_empty() {
                return Err(syntax("empty name"));
            }
            concepts.push(DConcept { name, parent, description: Default::default() });
            continue;
        }
        let current = concepts.last_mut().ok_or_else(|| syntax("condition outside a d-concept block"))?;
        let (word, rest) = trimmed.split_once(char::is_whitespace).ok_or_else(|| syntax("expected a condition"))?;
        let rest = rest.trim();
        let reference = rest.strip_prefix("dconcept").map(str::trim_start);
        let d = &mut current.description;
        match (word, reference) {
            ("requires", Some(r)) | ("excludes", Some(r)) => {
                let (name, tail) = quoted(r).ok_or_else(|| syntax("expected quoted d-concept name"))?;
                if !tail.trim().is_empty() {
                    return Err(syntax("trailing input"));
                }
                if word == "requires" { &mut d.requires_concepts } else { &mut d.excludes_concepts }.push(name);
            }
            ("requires", None) | ("excludes", None) => {
                let expr = parse_multiaxial(rest).map_err(|source| DConceptError::Expression { line, source })?;
                if word == "requires" { &mut d.requires } else { &mut d.excludes }.extend(expr.descriptors);
            }
            _ => return Err(syntax("expected `requires` or `excludes`")),
        }
    }
    DConceptHierarchy::new(concepts)
}

/// Parses and rejects conditions over axes for which `known` is false.
pub fn parse_dconcepts_checked(text: &str, known: impl Fn(&str) -> bool) -> Result<DConceptHierarchy, DConceptError> {
    let h = parse_dconcepts(text)?;
    if let Some(axis) = h.axes().into_iter().find(|a| !known(a)) {
        return Err(DConceptError::UnknownAxis(axis));
    }
    Ok(h)
}

/// Decides required conditions whose axis the situation does not mention
/// at all. The dialog service can ask the user; batch evaluation says no.
pub trait ConditionResolver {
    fn resolve(&mut self, concept: &str, descriptor: &MultiaxialDescriptor) -> bool;
}

/// Treats every unresolved condition as not holding.
#[derive(Debug, Clone, Copy, Default)]
pub struct Batch;

impl ConditionResolver for Batch {
    fn resolve(&mut self, _: &str, _: &MultiaxialDescriptor) -> bool {
        false
    }
}

/// Evaluates validity with memoisation of referenced concepts and resolver
/// answers, so one inference asks the resolver at most once per descriptor.
pub struct Evaluator<'a, R: ConditionResolver> {
    h: &'a DConceptHierarchy,
    s: &'a Situation,
    resolver: R,
    memo: HashMap<String, bool>,
    answers: HashMap<MultiaxialDescriptor, bool>,
    evaluated: Vec<String>,
}

impl<'a, R: ConditionResolver> Evaluator<'a, R> {
    pub fn new(h: &'a DConceptHierarchy, s: &'a Situation, resolver: R) -> Self {
        Evaluator { h, s, resolver, memo: HashMap::new(), answers: HashMap::new(), evaluated: Vec::new() }
    }

    /// Concepts evaluated so far, in order.
    pub fn evaluated(&self) -> &[String] {
        &self.evaluated
    }

    pub fn is_valid(&mut self, name: &str) -> bool {
        if let Some(v) = self.memo.get(name) {
            return *v;
        }
        self.evaluated.push(name.to_string());
        let d = self.h.effective_description(name);
        let axes = self.s.axes();
        let mut ok = true;
        for r in &d.requires {
            let holds = if descriptor_matches(r, self.s) {
                true
            } else if r.bindings().iter().any(|b| !axes.contains(b.axis.as_str())) {
                match self.answers.get(r) {
                    Some(a) => *a,
                    None => {
                        let a = self.resolver.resolve(name, r);
                        self.answers.insert(r.clone(), a);
                        a
                    }
                }
            } else {
                false
            };
            if !holds {
                ok = false;
                break;
            }
        }
        ok = ok && !d.excludes.iter().any(|e| descriptor_matches(e, self.s));
        ok = ok && d.requires_concepts.iter().all(|c| self.is_valid(c));
        ok = ok && !d.excludes_concepts.iter().any(|c| self.is_valid(c));
        self.memo.insert(name.to_string(), ok);
        ok
    }
}

pub fn is_valid(h: &DConceptHierarchy, name: &str, s: &Situation) -> bool {
    Evaluator::new(h, s, Batch).is_valid(name)
}

/// Root-down search: children are only examined below valid concepts, and
/// the valid concepts without a valid child are returned in hierarchy order.
pub fn infer_most_specific(h: &DConceptHierarchy, s: &Situation) -> Vec<String> {
    infer_most_specific_with(&mut Evaluator::new(h, s, Batch))
}

pub fn infer_most_specific_with<R: ConditionResolver>(ev: &mut Evaluator<'_, R>) -> Vec<String> {
    let h = ev.h;
    let root = h.root().name.clone();
    if !ev.is_valid(&root) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(c) = queue.pop_front() {
        let valid: Vec<String> = h
            .children(&c)
            .into_iter()
            .map(|ch| ch.name.clone())
            .filter(|ch| ev.is_valid(ch))
            .collect();
        if valid.is_empty() {
            out.push(c);
        }
        queue.extend(valid);
    }
    let order: BTreeMap<&str, usize> =
        h.index.indexing_order().iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    out.sort_by_key(|c| order[c.as_str()]);
    out.dedup();
    out
}

/// Reference filter: every valid concept none of whose children is valid.
pub fn most_specific_by_filter(h: &DConceptHierarchy, s: &Situation) -> Vec<String> {
    let mut ev = Evaluator::new(h, s, Batch);
    let mut out: Vec<String> = h
        .index
        .indexing_order()
        .iter()
        .map(|c| c.to_string())
        .filter(|c| ev.is_valid(c))
        .collect();
    out.retain(|c| !h.children(c).iter().any(|ch| is_valid(h, &ch.name, s)));
    out
}

/// `ci` is valid on every situation of `base` on which `cj` is.
pub fn more_general_than(h: &DConceptHierarchy, ci: &str, cj: &str, base: &[Situation]) -> bool {
    base.iter().all(|s| !is_valid(h, cj, s) || is_valid(h, ci, s))
}

/// `c` covers no negative, and dominates every peer that covers no negative.
pub fn check_maximally_general(
    h: &DConceptHierarchy,
    c: &str,
    positives: &[Situation],
    negatives: &[Situation],
    peers: &[&str],
) -> bool {
    let clean = |x: &str| !negatives.iter().any(|s| is_valid(h, x, s));
    if !clean(c) {
        return false;
    }
    let base: Vec<Situation> = positives.iter().chain(negatives).cloned().collect();
    peers.iter().filter(|p| clean(p)).all(|p| more_general_than(h, c, p, &base))
}
