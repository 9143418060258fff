//! The semantic indexing algorithm and its maintenance operations.
//!
//! Starting from the root (`[0]`), the indexer repeatedly picks a concept all
//! of whose parent nodes already carry node keys, derives one candidate key
//! per parent node by appending that node's counter, generalizes the
//! candidates into the concept key (appending further positions while it
//! shares instances with an existing concept key) and finally expands every
//! candidate towards the concept key to obtain the node keys.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{ConceptHierarchy, ConceptName, HierarchyError, NodeId, ValidationReport};
use crate::keys::{expand, generalize, instances_overlap, partially_unifiable, Key, KeyElement};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("hierarchy is not valid:\n{0}")]
    Invalid(ValidationReport),
    #[error("no selectable concept among {0:?}; the dependency graph must contain a cycle")]
    Stalled(Vec<ConceptName>),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("`{parent}` already has a child `{concept}`")]
    SiblingRule { parent: ConceptName, concept: ConceptName },
    #[error("insertion induces the dependency cycle {}", fmt_path(.0))]
    Cycle(Vec<ConceptName>),
    #[error("the root node cannot be deleted")]
    RootDeletion,
}

fn fmt_path(path: &[ConceptName]) -> String {
    path.iter().map(ConceptName::as_str).collect::<Vec<_>>().join(" -> ")
}

/// A hierarchy together with its node keys and concept keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedHierarchy {
    hierarchy: ConceptHierarchy,
    concept_keys: BTreeMap<ConceptName, Key>,
    node_keys: BTreeMap<NodeId, Key>,
    counters: BTreeMap<NodeId, u32>,
    indexing_order: Vec<ConceptName>,
    /// Bumped by every maintenance operation.
    version: u64,
    /// Number of times a generalized key had to be extended because it
    /// shared instances with an existing concept key.
    repairs: u32,
}

impl IndexedHierarchy {
    pub fn hierarchy(&self) -> &ConceptHierarchy {
        &self.hierarchy
    }

    pub fn concept_key(&self, concept: &ConceptName) -> Option<&Key> {
        self.concept_keys.get(concept)
    }

    pub fn node_key(&self, node: NodeId) -> Option<&Key> {
        self.node_keys.get(&node)
    }

    pub fn concept_keys(&self) -> &BTreeMap<ConceptName, Key> {
        &self.concept_keys
    }

    pub fn node_keys(&self) -> &BTreeMap<NodeId, Key> {
        &self.node_keys
    }

    pub fn indexing_order(&self) -> &[ConceptName] {
        &self.indexing_order
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn repairs(&self) -> u32 {
        self.repairs
    }

    pub fn axis(&self) -> Option<&str> {
        self.hierarchy.axis.as_deref()
    }

    /// True when every node key is its parent's key plus one constant. Only
    /// then does partial unification of a concept key with a node key coincide
    /// with the concept occurring on the node's root path: expansion pads
    /// shorter candidates and repairs lengthen keys, and both let unrelated
    /// paths unify.
    pub fn is_layered(&self) -> bool {
        self.hierarchy.preorder().into_iter().all(|n| {
            let depth = self.hierarchy.root_path(n).len();
            self.node_keys.get(&n).is_some_and(|k| k.len() == depth && !k.has_variables())
        })
    }

    /// The node carrying exactly `key`, if any.
    pub fn node_with_key(&self, key: &Key) -> Option<NodeId> {
        self.node_keys.iter().find(|(_, k)| *k == key).map(|(n, _)| *n)
    }

    /// The concept whose concept key is exactly `key`, if any.
    pub fn concept_with_key(&self, key: &Key) -> Option<&ConceptName> {
        self.concept_keys.iter().find(|(_, k)| *k == key).map(|(c, _)| c)
    }

    /// Node keys of the concept in document order.
    pub fn node_keys_of(&self, concept: &ConceptName) -> Vec<&Key> {
        self.hierarchy
            .occurrences(concept)
            .into_iter()
            .filter_map(|n| self.node_keys.get(&n))
            .collect()
    }

    fn initialise(hierarchy: ConceptHierarchy) -> Self {
        let root = hierarchy.root();
        let root_concept = hierarchy.concept_of(root).clone();
        let counters = hierarchy.preorder().into_iter().map(|n| (n, 0)).collect();
        IndexedHierarchy {
            concept_keys: BTreeMap::from([(root_concept.clone(), Key::root())]),
            node_keys: BTreeMap::from([(root, Key::root())]),
            counters,
            indexing_order: vec![root_concept],
            version: 0,
            repairs: 0,
            hierarchy,
        }
    }

    /// Runs selection/derivation/generalization/expansion/addition until every
    /// concept carries a key. Resumes from whatever is already keyed.
    fn run(&mut self) -> Result<(), IndexError> {
        let h = &self.hierarchy;
        let preorder = h.preorder();
        // concepts in order of first occurrence, with their parent nodes
        let mut parents: Vec<(ConceptName, Vec<(NodeId, NodeId)>)> = Vec::new();
        let mut slot: HashMap<&ConceptName, usize> = HashMap::new();
        for &n in &preorder {
            let c = h.concept_of(n);
            let i = *slot.entry(c).or_insert_with(|| {
                parents.push((c.clone(), Vec::new()));
                parents.len() - 1
            });
            if let Some(p) = h.node(n).and_then(|node| node.parent) {
                parents[i].1.push((p, n));
            }
        }
        // derivation order: parent nodes in document order
        let position: HashMap<NodeId, usize> = preorder.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        for (_, links) in &mut parents {
            links.sort_by_key(|(p, _)| position[p]);
        }

        loop {
            let mut pending = parents.iter().filter(|(c, _)| !self.concept_keys.contains_key(c)).peekable();
            if pending.peek().is_none() {
                return Ok(());
            }
            let Some((concept, links)) = parents
                .iter()
                .filter(|(c, _)| !self.concept_keys.contains_key(c))
                .find(|(_, links)| links.iter().all(|(p, _)| self.node_keys.contains_key(p)))
            else {
                return Err(IndexError::Stalled(pending.map(|(c, _)| c.clone()).collect()));
            };

            let candidates: Vec<(NodeId, Key)> = links
                .iter()
                .map(|(p, child)| {
                    let counter = self.counters.entry(*p).or_insert(0);
                    let key = self.node_keys[p].child(KeyElement::Const(*counter));
                    *counter += 1;
                    (*child, key)
                })
                .collect();
            let keys: Vec<Key> = candidates.iter().map(|(_, k)| k.clone()).collect();
            let (concept_key, repaired) = separate(generalize(&keys), self.concept_keys.values());
            if repaired {
                self.repairs += 1;
            }
            for (node, key) in candidates {
                let node_key = expand(&key, &concept_key).expect("candidates never exceed their generalization");
                self.node_keys.insert(node, node_key);
                self.counters.insert(node, 0);
            }
            self.concept_keys.insert(concept.clone(), concept_key);
            self.indexing_order.push(concept.clone());
        }
    }
}

/// Appends positions to `key` until it shares no instance with any of
/// `existing`: first the smallest constant up to `existing.len()` that works
/// at the new position, otherwise a `0` followed by another position.
fn separate<'a>(key: Key, existing: impl Iterator<Item = &'a Key> + Clone) -> (Key, bool) {
    let clash = |k: &Key| existing.clone().any(|e| instances_overlap(k, e));
    if !clash(&key) {
        return (key, false);
    }
    let limit = existing.clone().count() as u32;
    let mut key = key;
    loop {
        if let Some(c) = (0..=limit).find(|c| !clash(&key.child(KeyElement::Const(*c)))) {
            return (key.child(KeyElement::Const(c)), true);
        }
        key = key.child(KeyElement::Const(0));
        if !clash(&key) {
            return (key, true);
        }
    }
}

/// Validates and indexes `h`.
pub fn index_hierarchy(h: &ConceptHierarchy) -> Result<IndexedHierarchy, IndexError> {
    let report = h.validate();
    if !report.is_valid() {
        return Err(IndexError::Invalid(report));
    }
    let mut ix = IndexedHierarchy::initialise(h.clone());
    ix.run()?;
    Ok(ix)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    MissingConceptKey(ConceptName),
    MissingNodeKey(NodeId),
    /// Two concept keys share an instance.
    ConceptOverlap(ConceptName, ConceptName),
    /// A node key is not an instance of its concept key.
    NotInstance { node: NodeId, concept: ConceptName },
    /// A node key does not properly extend its parent's node key.
    NotExtendingParent { node: NodeId, parent: NodeId },
    /// An initial key of a node key is the key of a node off its root path.
    ForeignPrefix { node: NodeId, length: usize, other: NodeId },
    /// Two node keys share an instance.
    NodeOverlap(NodeId, NodeId),
    /// A parent node key does not partially unify with a child node key.
    NodeNotUnifiable { parent: NodeId, child: NodeId },
    /// A parent concept key does not partially unify with a child concept key.
    ConceptNotUnifiable { parent: ConceptName, child: ConceptName },
}

impl Violation {
    /// Short clause label used in reports.
    pub fn clause(&self) -> &'static str {
        match self {
            Violation::MissingConceptKey(_) | Violation::MissingNodeKey(_) => "keys",
            Violation::ConceptOverlap(..) => "1",
            Violation::NotInstance { .. } => "2a",
            Violation::NotExtendingParent { .. } => "2b",
            Violation::ForeignPrefix { .. } => "2c",
            Violation::NodeOverlap(..) => "S1",
            Violation::NodeNotUnifiable { .. } => "S2",
            Violation::ConceptNotUnifiable { .. } => "S3",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] ", self.clause())?;
        match self {
            Violation::MissingConceptKey(c) => write!(f, "concept `{c}` has no key"),
            Violation::MissingNodeKey(n) => write!(f, "node {n} has no key"),
            Violation::ConceptOverlap(a, b) => write!(f, "concept keys of `{a}` and `{b}` share instances"),
            Violation::NotInstance { node, concept } => {
                write!(f, "node {node} key is not an instance of the key of `{concept}`")
            }
            Violation::NotExtendingParent { node, parent } => {
                write!(f, "node {node} key does not extend the key of its parent {parent}")
            }
            Violation::ForeignPrefix { node, length, other } => {
                write!(f, "initial key of length {length} of node {node} is the key of node {other} off its path")
            }
            Violation::NodeOverlap(a, b) => write!(f, "node keys of {a} and {b} share instances"),
            Violation::NodeNotUnifiable { parent, child } => {
                write!(f, "node {parent} key does not unify with child node {child}")
            }
            Violation::ConceptNotUnifiable { parent, child } => {
                write!(f, "concept `{parent}` key does not unify with child concept `{child}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CorrectnessReport {
    pub violations: Vec<Violation>,
}

impl CorrectnessReport {
    pub fn is_correct(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for CorrectnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every correctness clause plus the derived properties on node keys
/// and parent/child unifiability.
pub fn check_correctness(ix: &IndexedHierarchy) -> CorrectnessReport {
    let h = &ix.hierarchy;
    let mut out = Vec::new();
    let nodes = h.preorder();

    for c in h.concepts() {
        if !ix.concept_keys.contains_key(&c) {
            out.push(Violation::MissingConceptKey(c));
        }
    }
    for &n in &nodes {
        if !ix.node_keys.contains_key(&n) {
            out.push(Violation::MissingNodeKey(n));
        }
    }

    // 1: concept keys pairwise inst-disjoint
    let concepts: Vec<(&ConceptName, &Key)> = ix.concept_keys.iter().collect();
    for (i, (a, ka)) in concepts.iter().enumerate() {
        for (b, kb) in &concepts[i + 1..] {
            if instances_overlap(ka, kb) {
                out.push(Violation::ConceptOverlap((*a).clone(), (*b).clone()));
            }
        }
    }

    let mut by_key: HashMap<&Key, Vec<NodeId>> = HashMap::new();
    for (n, k) in &ix.node_keys {
        by_key.entry(k).or_default().push(*n);
    }

    for &n in &nodes {
        let Some(key) = ix.node_keys.get(&n) else { continue };
        let concept = h.concept_of(n);
        // 2a
        if let Some(ck) = ix.concept_keys.get(concept) {
            if !crate::keys::is_instance(key, ck) {
                out.push(Violation::NotInstance { node: n, concept: concept.clone() });
            }
        }
        // 2b and node-level unifiability
        if let Some(parent) = h.node(n).and_then(|node| node.parent) {
            if let Some(pk) = ix.node_keys.get(&parent) {
                if !(pk.len() < key.len() && pk.is_initial_key_of(key)) {
                    out.push(Violation::NotExtendingParent { node: n, parent });
                }
                if !partially_unifiable(pk, key) {
                    out.push(Violation::NodeNotUnifiable { parent, child: n });
                }
            }
        }
        // 2c
        let path: BTreeSet<NodeId> = h.root_path(n).into_iter().collect();
        for j in 1..=key.len() {
            let prefix = key.initial(j).expect("in range");
            if let Some(holders) = by_key.get(&prefix) {
                for other in holders.iter().filter(|o| !path.contains(o)) {
                    out.push(Violation::ForeignPrefix { node: n, length: j, other: *other });
                }
            }
        }
    }

    // S1: node keys pairwise inst-disjoint (only equal lengths can overlap)
    let mut by_len: BTreeMap<usize, Vec<(NodeId, &Key)>> = BTreeMap::new();
    for (n, k) in &ix.node_keys {
        by_len.entry(k.len()).or_default().push((*n, k));
    }
    for group in by_len.values() {
        for (i, (a, ka)) in group.iter().enumerate() {
            for (b, kb) in &group[i + 1..] {
                if instances_overlap(ka, kb) {
                    out.push(Violation::NodeOverlap(*a, *b));
                }
            }
        }
    }

    // S3: concept level
    let mut seen = BTreeSet::new();
    for &n in &nodes {
        let Some(parent) = h.node(n).and_then(|node| node.parent) else { continue };
        let (pc, cc) = (h.concept_of(parent), h.concept_of(n));
        if !seen.insert((pc.clone(), cc.clone())) {
            continue;
        }
        if let (Some(pk), Some(ck)) = (ix.concept_keys.get(pc), ix.concept_keys.get(cc)) {
            if !partially_unifiable(pk, ck) {
                out.push(Violation::ConceptNotUnifiable { parent: pc.clone(), child: cc.clone() });
            }
        }
    }

    CorrectnessReport { violations: out }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChangeEntry {
    Add { concept: ConceptName, key: Key },
    Mod { concept: ConceptName, old: Key, new: Key },
    Del { concept: ConceptName, key: Key },
}

impl fmt::Display for ChangeEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChangeEntry::Add { concept, key } => write!(f, "ADD {} {key}", quote(concept.as_str())),
            ChangeEntry::Mod { concept, old, new } => write!(f, "MOD {} {old} {new}", quote(concept.as_str())),
            ChangeEntry::Del { concept, key } => write!(f, "DEL {} {key}", quote(concept.as_str())),
        }
    }
}

/// Key changes produced by one maintenance operation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChangeSet {
    pub from_version: u64,
    pub to_version: u64,
    pub entries: Vec<ChangeEntry>,
    /// Node and concept keys that no longer denote what they denoted before.
    pub retired_keys: BTreeSet<Key>,
}

impl ChangeSet {
    pub fn modifications(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, ChangeEntry::Mod { .. })).count()
    }

    pub fn additions(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, ChangeEntry::Add { .. })).count()
    }

    pub fn deletions(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e, ChangeEntry::Del { .. })).count()
    }
}

impl fmt::Display for ChangeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Inserts a node labelled `concept` as last child of `parent`.
///
/// A brand-new concept only keys the new node. For an existing concept, all
/// concepts more general than it keep their keys and the concept itself plus
/// everything more specific is reindexed by resuming the algorithm. Counters
/// of untouched nodes keep counting up, so reissued keys never collide with
/// keys handed out before.
pub fn insert_node(
    ix: &IndexedHierarchy,
    parent: NodeId,
    concept: ConceptName,
) -> Result<(IndexedHierarchy, ChangeSet), IndexError> {
    let h = &ix.hierarchy;
    if h.node(parent).is_none() {
        return Err(HierarchyError::UnknownNode(parent).into());
    }
    if h.children(parent).iter().any(|c| h.concept_of(*c) == &concept) {
        return Err(IndexError::SiblingRule { parent: h.concept_of(parent).clone(), concept });
    }
    let existing = h.contains_concept(&concept);
    let mut next = ix.clone();
    let new_node = next.hierarchy.add_child(parent, concept.clone())?;
    if let Some(cycle) = next.hierarchy.dependency_graph().cycles().into_iter().next() {
        return Err(IndexError::Cycle(cycle));
    }
    next.version += 1;
    next.counters.insert(new_node, 0);

    let mut change = ChangeSet {
        from_version: ix.version,
        to_version: next.version,
        entries: Vec::new(),
        retired_keys: BTreeSet::new(),
    };

    if !existing {
        let counter = next.counters.entry(parent).or_insert(0);
        let candidate = ix.node_keys[&parent].child(KeyElement::Const(*counter));
        *counter += 1;
        let (key, repaired) = separate(candidate, next.concept_keys.values());
        if repaired {
            next.repairs += 1;
        }
        next.node_keys.insert(new_node, key.clone());
        next.concept_keys.insert(concept.clone(), key.clone());
        next.indexing_order.push(concept.clone());
        change.entries.push(ChangeEntry::Add { concept, key });
        return Ok((next, change));
    }

    let graph = next.hierarchy.dependency_graph();
    let mut affected = graph.more_specific_than_set(&concept);
    affected.insert(concept);
    for c in &affected {
        if let Some(old) = next.concept_keys.remove(c) {
            change.retired_keys.insert(old);
        }
    }
    for n in next.hierarchy.preorder() {
        if affected.contains(next.hierarchy.concept_of(n)) {
            if let Some(old) = next.node_keys.remove(&n) {
                change.retired_keys.insert(old);
            }
            next.counters.insert(n, 0);
        }
    }
    next.indexing_order.retain(|c| !affected.contains(c));
    next.run()?;

    for c in &affected {
        let old = ix.concept_keys.get(c).expect("affected concepts existed");
        let new = &next.concept_keys[c];
        if old != new {
            change.entries.push(ChangeEntry::Mod { concept: c.clone(), old: old.clone(), new: new.clone() });
        }
    }
    // keys that survived with the same meaning are not retired
    for n in next.hierarchy.preorder() {
        if let (Some(old), Some(new)) = (ix.node_keys.get(&n), next.node_keys.get(&n)) {
            if old == new && next.node_with_key(old) == Some(n) {
                change.retired_keys.remove(old);
            }
        }
    }
    for (c, k) in &next.concept_keys {
        if ix.concept_keys.get(c) == Some(k) {
            change.retired_keys.remove(k);
        }
    }
    change.entries.sort_by(|a, b| entry_concept(a).cmp(entry_concept(b)));
    Ok((next, change))
}

fn entry_concept(e: &ChangeEntry) -> &ConceptName {
    match e {
        ChangeEntry::Add { concept, .. } | ChangeEntry::Mod { concept, .. } | ChangeEntry::Del { concept, .. } => concept,
    }
}

/// Deletes `node` and its subtree. Surviving keys never change; concepts
/// left without any node are dropped.
pub fn delete_node(ix: &IndexedHierarchy, node: NodeId) -> Result<(IndexedHierarchy, ChangeSet), IndexError> {
    if node == ix.hierarchy.root() {
        return Err(IndexError::RootDeletion);
    }
    let mut next = ix.clone();
    let removed = next.hierarchy.remove_subtree(node)?;
    next.version += 1;
    let mut change = ChangeSet {
        from_version: ix.version,
        to_version: next.version,
        entries: Vec::new(),
        retired_keys: BTreeSet::new(),
    };
    for n in &removed {
        if let Some(k) = next.node_keys.remove(n) {
            change.retired_keys.insert(k);
        }
        next.counters.remove(n);
    }
    let remaining: BTreeSet<ConceptName> = next.hierarchy.concepts().into_iter().collect();
    let gone: Vec<ConceptName> = next.concept_keys.keys().filter(|c| !remaining.contains(*c)).cloned().collect();
    for c in gone {
        let key = next.concept_keys.remove(&c).expect("listed above");
        change.retired_keys.insert(key.clone());
        change.entries.push(ChangeEntry::Del { concept: c, key });
    }
    next.indexing_order.retain(|c| remaining.contains(c));
    Ok((next, change))
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// One line of the rendered index: a concept key, the concept name and the
/// concept keys of its child concepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedConcept {
    pub key: Key,
    pub name: String,
    pub children: Vec<Key>,
}

impl fmt::Display for RenderedConcept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {}", self.key, quote(&self.name))?;
        if !self.children.is_empty() {
            let keys: Vec<String> = self.children.iter().map(Key::to_string).collect();
            write!(f, " ({})", keys.join(" "))?;
        }
        f.write_str(")")
    }
}

pub fn rendered_concepts(ix: &IndexedHierarchy) -> Vec<RenderedConcept> {
    let h = &ix.hierarchy;
    ix.indexing_order
        .iter()
        .map(|c| {
            let mut seen = BTreeSet::new();
            let children = h
                .occurrences(c)
                .into_iter()
                .flat_map(|n| h.children(n).iter().map(|ch| h.concept_of(*ch)))
                .collect::<Vec<_>>();
            // child concepts in order of first occurrence
            let mut ordered: Vec<&ConceptName> = h.concepts().iter().filter_map(|x| children.iter().find(|y| **y == x).copied()).collect();
            ordered.retain(|x| seen.insert((*x).clone()));
            RenderedConcept {
                key: ix.concept_keys[c].clone(),
                name: c.to_string(),
                children: ordered.into_iter().map(|x| ix.concept_keys[x].clone()).collect(),
            }
        })
        .collect()
}

/// Parenthesized listing, one concept per line in indexing order.
pub fn render_indexed(ix: &IndexedHierarchy) -> String {
    render_entries(&rendered_concepts(ix))
}

pub fn render_entries(entries: &[RenderedConcept]) -> String {
    entries.iter().map(|e| format!("{e}\n")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rendered index line {line}: {msg}")]
pub struct RenderParseError {
    pub line: usize,
    pub msg: String,
}

/// Parses the output of [`render_indexed`].
pub fn parse_rendered(text: &str) -> Result<Vec<RenderedConcept>, RenderParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: &str| RenderParseError { line, msg: msg.to_string() };
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        let s = s.strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or_else(|| err("expected (...)"))?;
        let (key, rest) = crate::keys::parse_key_prefix(s).map_err(|e| err(&e.to_string()))?;
        let rest = rest.trim_start();
        let rest = rest.strip_prefix('"').ok_or_else(|| err("expected quoted name"))?;
        let mut name = String::new();
        let mut chars = rest.char_indices();
        let mut end = None;
        while let Some((idx, ch)) = chars.next() {
            match ch {
                '\\' => name.push(chars.next().ok_or_else(|| err("dangling escape"))?.1),
                '"' => {
                    end = Some(idx + 1);
                    break;
                }
                _ => name.push(ch),
            }
        }
        let mut rest = rest[end.ok_or_else(|| err("unterminated name"))?..].trim();
        let mut children = Vec::new();
        if !rest.is_empty() {
            rest = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).ok_or_else(|| err("expected child list"))?;
            while !rest.trim().is_empty() {
                let (k, r) = crate::keys::parse_key_prefix(rest).map_err(|e| err(&e.to_string()))?;
                children.push(k);
                rest = r;
            }
        }
        out.push(RenderedConcept { key, name, children });
    }
    Ok(out)
}
