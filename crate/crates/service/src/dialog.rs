//! Depth-first questioning over an indexed axis with backtracking.
//!
//! Every node with children asks one question: which of its children apply.
//! Affirmed children are descended into in document order, negated children
//! are pruned with their subtrees. `back` undoes exactly the last answer.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use semindex_core::hierarchy::{Annotations, QuestionType};
use semindex_core::{ConceptName, IndexedHierarchy, Key, NodeId};
use semindex_store::{Episode, EpisodeMeta, InstanceRecord, InstancePath};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DialogError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("the current question is about node {expected}, not {got}")]
    WrongNode { expected: NodeId, got: NodeId },
    #[error("node {node} lies below negated node {negated}")]
    Consistency { node: NodeId, negated: NodeId },
    #[error("no open question")]
    NoQuestion,
    #[error("{0}")]
    Selection(String),
    #[error("nothing to go back to")]
    AtStart,
    #[error("the dialog is not complete")]
    Incomplete,
    #[error("the session has been committed")]
    Frozen,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    #[serde(default)]
    pub affirmed: Vec<NodeId>,
    #[serde(default)]
    pub negated: Vec<NodeId>,
    #[serde(default)]
    pub skip: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

/// An accepted answer, with defaults applied and children in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub node: NodeId,
    pub affirmed: Vec<NodeId>,
    pub negated: Vec<NodeId>,
    pub skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Complete,
    Committed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub node: NodeId,
    pub concept: ConceptName,
    pub key: Key,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub node: NodeId,
    pub concept: ConceptName,
    pub key: Key,
    pub kind: QuestionType,
    pub optional: bool,
    pub negatable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ConceptName>,
    pub options: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
struct Step {
    answer: Answer,
    pending: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct DialogSession {
    id: String,
    axis: String,
    index: Arc<IndexedHierarchy>,
    trail: Vec<Step>,
    /// Questions still to ask; the next one is on top.
    pending: Vec<NodeId>,
    cursor: Option<NodeId>,
    affirmed: BTreeSet<NodeId>,
    negated: BTreeSet<NodeId>,
    status: Status,
}

impl DialogSession {
    pub fn new(id: &str, axis: &str, index: Arc<IndexedHierarchy>) -> Self {
        let root = index.hierarchy().root();
        let mut s = DialogSession {
            id: id.to_string(),
            axis: axis.to_string(),
            index,
            trail: Vec::new(),
            pending: Vec::new(),
            cursor: None,
            affirmed: BTreeSet::from([root]),
            negated: BTreeSet::new(),
            status: Status::Active,
        };
        s.push_questions(&[root]);
        s.advance();
        s
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn axis(&self) -> &str {
        &self.axis
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn cursor(&self) -> Option<NodeId> {
        self.cursor
    }

    pub fn answers(&self) -> Vec<Answer> {
        self.trail.iter().map(|s| s.answer.clone()).collect()
    }

    pub fn affirmed(&self) -> &BTreeSet<NodeId> {
        &self.affirmed
    }

    pub fn negated(&self) -> &BTreeSet<NodeId> {
        &self.negated
    }

    pub fn index(&self) -> &IndexedHierarchy {
        &self.index
    }

    fn annotations(&self, n: NodeId) -> &Annotations {
        &self.index.hierarchy().node(n).expect("node of this hierarchy").annotations
    }

    fn choice(&self, n: NodeId) -> Choice {
        Choice {
            node: n,
            concept: self.index.hierarchy().concept_of(n).clone(),
            key: self.index.node_key(n).expect("indexed").clone(),
        }
    }

    pub fn question(&self) -> Option<Question> {
        let n = self.cursor?;
        let a = self.annotations(n);
        let c = self.choice(n);
        Some(Question {
            node: n,
            concept: c.concept,
            key: c.key,
            kind: a.question_type(),
            optional: a.optional,
            negatable: a.negatable,
            default: a.default.clone(),
            options: self.index.hierarchy().children(n).iter().map(|ch| self.choice(*ch)).collect(),
            extra: a.extra.clone(),
        })
    }

    /// Pushes the nodes among `nodes` that ask a question so that the first
    /// in document order is popped first.
    fn push_questions(&mut self, nodes: &[NodeId]) {
        let h = self.index.hierarchy();
        self.pending.extend(nodes.iter().rev().filter(|n| !h.children(**n).is_empty()));
    }

    fn advance(&mut self) {
        self.cursor = self.pending.pop();
        if self.cursor.is_none() {
            self.status = Status::Complete;
        }
    }

    fn negated_ancestor(&self, n: NodeId) -> Option<NodeId> {
        self.index.hierarchy().root_path(n).into_iter().find(|m| self.negated.contains(m))
    }

    fn resolve(&self, node: NodeId, sel: &Selection) -> Result<Answer, DialogError> {
        let h = self.index.hierarchy();
        let a = self.annotations(node);
        let children = h.children(node);
        let mut seen = BTreeSet::new();
        for n in sel.affirmed.iter().chain(&sel.negated) {
            if !children.contains(n) {
                return Err(DialogError::Selection(format!("{n} is not an option of {node}")));
            }
            if !seen.insert(*n) {
                return Err(DialogError::Selection(format!("{n} selected twice")));
            }
        }
        if !sel.negated.is_empty() && !a.negatable {
            return Err(DialogError::Selection(format!("question {node} does not allow negation")));
        }
        let mut affirmed = sel.affirmed.clone();
        if sel.skip {
            if !a.optional {
                return Err(DialogError::Selection(format!("question {node} cannot be skipped")));
            }
            if !sel.affirmed.is_empty() || !sel.negated.is_empty() {
                return Err(DialogError::Selection("a skipped question takes no selection".into()));
            }
            if let Some(d) = &a.default {
                affirmed.extend(children.iter().filter(|c| h.concept_of(**c) == d));
            }
        } else if a.question_type() == QuestionType::Single && affirmed.len() != 1 {
            return Err(DialogError::Selection(format!("question {node} takes exactly one option")));
        }
        let order = |v: &[NodeId]| children.iter().copied().filter(|c| v.contains(c)).collect::<Vec<_>>();
        Ok(Answer {
            node,
            affirmed: order(&affirmed),
            negated: order(&sel.negated),
            skipped: sel.skip,
            value: sel.value.clone(),
        })
    }

    pub fn answer(&mut self, node: NodeId, sel: &Selection) -> Result<Option<Question>, DialogError> {
        if self.status == Status::Committed {
            return Err(DialogError::Frozen);
        }
        if self.index.hierarchy().node(node).is_none() {
            return Err(DialogError::UnknownNode(node));
        }
        for n in std::iter::once(&node).chain(&sel.affirmed) {
            if self.index.hierarchy().node(*n).is_some() {
                if let Some(negated) = self.negated_ancestor(*n) {
                    return Err(DialogError::Consistency { node: *n, negated });
                }
            }
        }
        let expected = self.cursor.ok_or(DialogError::NoQuestion)?;
        if expected != node {
            return Err(DialogError::WrongNode { expected, got: node });
        }
        let answer = self.resolve(node, sel)?;
        self.trail.push(Step { answer: answer.clone(), pending: self.pending.clone() });
        self.affirmed.extend(&answer.affirmed);
        self.negated.extend(&answer.negated);
        self.push_questions(&answer.affirmed);
        self.advance();
        Ok(self.question())
    }

    pub fn back(&mut self) -> Result<Option<Question>, DialogError> {
        if self.status == Status::Committed {
            return Err(DialogError::Frozen);
        }
        let step = self.trail.pop().ok_or(DialogError::AtStart)?;
        for n in &step.answer.affirmed {
            self.affirmed.remove(n);
        }
        for n in &step.answer.negated {
            self.negated.remove(n);
        }
        self.pending = step.pending;
        self.cursor = Some(step.answer.node);
        self.status = Status::Active;
        Ok(self.question())
    }

    /// The most specific affirmed nodes, nodes that carry a value, and the
    /// explicit negations, in document order.
    pub fn records(&self) -> Vec<InstanceRecord> {
        let h = self.index.hierarchy();
        let values: std::collections::HashMap<NodeId, &String> =
            self.trail.iter().filter_map(|s| s.answer.value.as_ref().map(|v| (s.answer.node, v))).collect();
        let mut out = Vec::new();
        for n in h.preorder() {
            let key = self.index.node_key(n).expect("indexed").clone();
            let path = Some(InstancePath::Node(h.concept_path(n)));
            if self.affirmed.contains(&n) {
                let leaf = !h.children(n).iter().any(|c| self.affirmed.contains(c));
                if leaf || values.contains_key(&n) {
                    let mut r = InstanceRecord::affirmed(&self.axis, key);
                    r.value = values.get(&n).map(|v| v.to_string());
                    r.path = path;
                    out.push(r);
                }
            } else if self.negated.contains(&n) {
                out.push(InstanceRecord { path, ..InstanceRecord::negated(&self.axis, key) });
            }
        }
        out
    }

    pub fn episode(&self, id: &str, timestamp: chrono::DateTime<chrono::Utc>, subject: &str) -> Result<Episode, DialogError> {
        match self.status {
            Status::Active => Err(DialogError::Incomplete),
            Status::Committed => Err(DialogError::Frozen),
            Status::Complete => Ok(Episode {
                id: id.to_string(),
                timestamp,
                subject: subject.to_string(),
                instances: self.records(),
                meta: EpisodeMeta::default(),
            }),
        }
    }

    pub fn freeze(&mut self) -> Result<(), DialogError> {
        match self.status {
            Status::Complete => {
                self.status = Status::Committed;
                Ok(())
            }
            Status::Active => Err(DialogError::Incomplete),
            Status::Committed => Err(DialogError::Frozen),
        }
    }

    /// A fresh session with `answers` applied in order.
    pub fn replay(id: &str, axis: &str, index: Arc<IndexedHierarchy>, answers: &[Answer]) -> Result<Self, DialogError> {
        let mut s = DialogSession::new(id, axis, index);
        for a in answers {
            let sel = Selection {
                affirmed: if a.skipped { Vec::new() } else { a.affirmed.clone() },
                negated: a.negated.clone(),
                skip: a.skipped,
                value: a.value.clone(),
            };
            s.answer(a.node, &sel)?;
        }
        Ok(s)
    }

    /// Recomputes the question order from the answers by recursive descent
    /// and compares it with the state machine. Returns a description of the
    /// first problem found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let h = self.index.hierarchy();
        for n in &self.affirmed {
            if let Some(m) = self.negated_ancestor(*n) {
                return Err(format!("affirmed {n} below negated {m}"));
            }
            if let Some(p) = h.node(*n).and_then(|x| x.parent) {
                if !self.affirmed.contains(&p) {
                    return Err(format!("affirmed {n} under unaffirmed {p}"));
                }
            }
        }
        let answered: std::collections::HashMap<NodeId, &Answer> =
            self.trail.iter().map(|s| (s.answer.node, &s.answer)).collect();
        if answered.len() != self.trail.len() {
            return Err("a node was answered twice".into());
        }
        let mut order = Vec::new();
        fn walk(
            h: &semindex_core::ConceptHierarchy,
            answered: &std::collections::HashMap<NodeId, &Answer>,
            n: NodeId,
            order: &mut Vec<NodeId>,
        ) {
            if h.children(n).is_empty() {
                return;
            }
            order.push(n);
            if let Some(a) = answered.get(&n) {
                for c in &a.affirmed {
                    walk(h, answered, *c, order);
                }
            }
        }
        walk(h, &answered, h.root(), &mut order);
        let trail: Vec<NodeId> = self.trail.iter().map(|s| s.answer.node).collect();
        let t = trail.len();
        if order.len() < t || order[..t] != trail[..] {
            return Err(format!("trail {trail:?} is not a prefix of the traversal {order:?}"));
        }
        if self.cursor != order.get(t).copied() {
            return Err(format!("cursor {:?}, traversal expects {:?}", self.cursor, order.get(t)));
        }
        let mut rest: Vec<NodeId> = order[(t + 1).min(order.len())..].to_vec();
        rest.reverse();
        if rest != self.pending {
            return Err(format!("pending {:?}, traversal expects {rest:?}", self.pending));
        }
        let complete = order.len() == t;
        if complete != (self.status != Status::Active) {
            return Err(format!("status {:?} with {} of {} questions answered", self.status, t, order.len()));
        }
        Ok(())
    }
}

/// A random selection for the current question, valid with probability
/// about `valid`. Invalid ones exercise the error paths.
pub fn random_selection<R: Rng>(rng: &mut R, s: &DialogSession, valid: f64) -> Option<(NodeId, Selection)> {
    let q = s.question()?;
    let ids: Vec<NodeId> = q.options.iter().map(|o| o.node).collect();
    if !rng.gen_bool(valid) {
        let mut sel = Selection::default();
        match rng.gen_range(0..4) {
            0 => sel.skip = true,
            1 => sel.negated = ids.clone(),
            2 => sel.affirmed = ids.iter().chain(&ids).copied().collect(),
            _ => return Some((NodeId(u32::MAX), sel)),
        }
        return Some((q.node, sel));
    }
    let mut shuffled = ids.clone();
    shuffled.shuffle(rng);
    if q.optional && rng.gen_bool(0.2) {
        return Some((q.node, Selection { skip: true, ..Default::default() }));
    }
    let mut sel = Selection::default();
    match q.kind {
        QuestionType::Single => sel.affirmed.push(shuffled.pop().expect("questions have options")),
        QuestionType::Multi => {
            let k = rng.gen_range(0..=shuffled.len());
            sel.affirmed = shuffled.split_off(shuffled.len() - k);
        }
    }
    if q.negatable {
        let k = rng.gen_range(0..=shuffled.len());
        sel.negated = shuffled.split_off(shuffled.len() - k);
    }
    if rng.gen_bool(0.1) {
        sel.value = Some(format!("v{}", rng.gen_range(0..10)));
    }
    Some((q.node, sel))
}
