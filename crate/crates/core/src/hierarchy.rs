//! Concept hierarchies: trees of concept-labelled nodes.
//!
//! A concept may label many nodes, but no node may have two children with the
//! same concept, and the dependency graph (child concept → parent concept)
//! must be acyclic.
//!
//! Input format, one node per line, two spaces of indentation per level:
//!
//! ```text
//! axis A "anamnesis"
//! anamnesis
//!   pain pattern
//!     localization ?single
//!       head
//! ```
//!
//! Suffix tokens introduced by ` ?` annotate the question a node asks about
//! its children in a dialog.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HierarchyError {
    #[error("empty hierarchy document")]
    Empty,
    #[error("line {line}: {msg}")]
    Indentation { line: usize, msg: String },
    #[error("line {line}: duplicate axis header")]
    DuplicateAxisHeader { line: usize },
    #[error("line {line}: malformed axis header, expected `axis <NAME> \"<title>\"`")]
    BadHeader { line: usize },
    #[error("line {line}: second root node `{concept}`")]
    MultipleRoots { line: usize, concept: String },
    #[error("line {line}: empty concept name")]
    EmptyConcept { line: usize },
    #[error("line {line}: unknown annotation `?{annotation}`")]
    UnknownAnnotation { line: usize, annotation: String },
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptName(String);

impl ConceptName {
    /// Trims surrounding whitespace; `None` if nothing is left.
    pub fn new(text: &str) -> Option<Self> {
        let t = text.trim();
        (!t.is_empty()).then(|| ConceptName(t.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ConceptName {
    fn from(s: &str) -> Self {
        ConceptName::new(s).expect("concept names are non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Single,
    /// Unannotated questions accept any subset of the children.
    #[default]
    Multi,
}

/// Dialog annotations of a node. They describe the question the node asks
/// about its children.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Annotations {
    pub question: Option<QuestionType>,
    pub optional: bool,
    pub negatable: bool,
    /// Child concept applied when the question is explicitly skipped.
    pub default: Option<ConceptName>,
    /// `key=value` payloads (question text, alternative text, notes) carried
    /// through without interpretation.
    pub extra: Vec<(String, String)>,
}

impl Annotations {
    pub fn question_type(&self) -> QuestionType {
        self.question.unwrap_or_default()
    }

    fn parse_token(&mut self, token: &str, line: usize) -> Result<(), HierarchyError> {
        match token {
            "single" => self.question = Some(QuestionType::Single),
            "multi" => self.question = Some(QuestionType::Multi),
            "optional" => self.optional = true,
            "negatable" => self.negatable = true,
            _ => match token.split_once('=') {
                Some(("default", child)) => {
                    self.default = Some(ConceptName::new(child).ok_or(
                        HierarchyError::UnknownAnnotation { line, annotation: token.into() },
                    )?)
                }
                Some((k, v)) if !k.trim().is_empty() && !k.contains(' ') => {
                    self.extra.push((k.trim().to_string(), v.trim().to_string()))
                }
                _ => {
                    return Err(HierarchyError::UnknownAnnotation {
                        line,
                        annotation: token.to_string(),
                    })
                }
            },
        }
        Ok(())
    }

    fn render(&self, out: &mut String) {
        match self.question {
            Some(QuestionType::Single) => out.push_str(" ?single"),
            Some(QuestionType::Multi) => out.push_str(" ?multi"),
            None => {}
        }
        if self.optional {
            out.push_str(" ?optional");
        }
        if self.negatable {
            out.push_str(" ?negatable");
        }
        if let Some(d) = &self.default {
            out.push_str(" ?default=");
            out.push_str(d.as_str());
        }
        for (k, v) in &self.extra {
            out.push_str(&format!(" ?{k}={v}"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: NodeId,
    pub concept: ConceptName,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub annotations: Annotations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptHierarchy {
    pub axis: Option<String>,
    pub title: Option<String>,
    root: NodeId,
    nodes: BTreeMap<NodeId, HierarchyNode>,
    next_id: u32,
}

impl ConceptHierarchy {
    pub fn new(root_concept: ConceptName) -> Self {
        let root = NodeId(0);
        let mut nodes = BTreeMap::new();
        nodes.insert(
            root,
            HierarchyNode {
                id: root,
                concept: root_concept,
                parent: None,
                children: Vec::new(),
                annotations: Annotations::default(),
            },
        );
        ConceptHierarchy { axis: None, title: None, root, nodes, next_id: 1 }
    }

    pub fn with_axis(mut self, axis: &str, title: &str) -> Self {
        self.axis = Some(axis.to_string());
        self.title = Some(title.to_string());
        self
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> Option<&HierarchyNode> {
        self.nodes.get(&id)
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Option<&mut HierarchyNode> {
        self.nodes.get_mut(&id)
    }

    pub fn concept_of(&self, id: NodeId) -> &ConceptName {
        &self.nodes[&id].concept
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.nodes.get(&id).map(|n| n.children.as_slice()).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Appends a child at the end of `parent`'s children. No validation.
    pub fn add_child(&mut self, parent: NodeId, concept: ConceptName) -> Result<NodeId, HierarchyError> {
        if !self.nodes.contains_key(&parent) {
            return Err(HierarchyError::UnknownNode(parent));
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(
            id,
            HierarchyNode {
                id,
                concept,
                parent: Some(parent),
                children: Vec::new(),
                annotations: Annotations::default(),
            },
        );
        self.nodes.get_mut(&parent).expect("checked").children.push(id);
        Ok(id)
    }

    /// Removes `id` and its subtree, returning the removed node ids in
    /// document order. The root cannot be removed.
    pub(crate) fn remove_subtree(&mut self, id: NodeId) -> Result<Vec<NodeId>, HierarchyError> {
        let parent = self
            .nodes
            .get(&id)
            .ok_or(HierarchyError::UnknownNode(id))?
            .parent
            .ok_or(HierarchyError::UnknownNode(id))?;
        let removed = self.subtree(id);
        self.nodes.get_mut(&parent).expect("parent exists").children.retain(|c| *c != id);
        for n in &removed {
            self.nodes.remove(n);
        }
        Ok(removed)
    }

    /// Node ids of the subtree rooted at `id`, in document order.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.children(n).iter().rev());
        }
        out
    }

    /// All nodes in document (pre-)order.
    pub fn preorder(&self) -> Vec<NodeId> {
        self.subtree(self.root)
    }

    /// Distinct concepts in order of first occurrence.
    pub fn concepts(&self) -> Vec<ConceptName> {
        let mut seen = BTreeSet::new();
        self.preorder()
            .into_iter()
            .map(|n| self.concept_of(n))
            .filter(|c| seen.insert((*c).clone()))
            .cloned()
            .collect()
    }

    pub fn contains_concept(&self, concept: &ConceptName) -> bool {
        self.nodes.values().any(|n| &n.concept == concept)
    }

    /// Nodes labelled with `concept`, in document order.
    pub fn occurrences(&self, concept: &ConceptName) -> Vec<NodeId> {
        self.preorder().into_iter().filter(|n| self.concept_of(*n) == concept).collect()
    }

    /// Nodes from the root down to `id`, inclusive.
    pub fn root_path(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes.get(&cur).and_then(|n| n.parent) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Concept names from the root down to `id`. Because siblings carry
    /// distinct concepts this path identifies the node.
    pub fn concept_path(&self, id: NodeId) -> Vec<ConceptName> {
        self.root_path(id).into_iter().map(|n| self.concept_of(n).clone()).collect()
    }

    pub fn resolve_path(&self, path: &[ConceptName]) -> Option<NodeId> {
        let (first, rest) = path.split_first()?;
        if self.concept_of(self.root) != first {
            return None;
        }
        rest.iter().try_fold(self.root, |cur, name| {
            self.children(cur).iter().copied().find(|c| self.concept_of(*c) == name)
        })
    }

    /// `parents(B)`: every node that has a child labelled `concept`.
    pub fn parents(&self, concept: &ConceptName) -> Result<Vec<NodeId>, HierarchyError> {
        if !self.contains_concept(concept) {
            return Err(HierarchyError::UnknownConcept(concept.to_string()));
        }
        Ok(self
            .preorder()
            .into_iter()
            .filter(|n| self.children(*n).iter().any(|c| self.concept_of(*c) == concept))
            .collect())
    }

    pub fn dependency_graph(&self) -> DependencyGraph {
        let mut g = DependencyGraph::default();
        for node in self.nodes.values() {
            g.nodes.insert(node.concept.clone());
            if let Some(p) = node.parent {
                g.edges.insert((node.concept.clone(), self.concept_of(p).clone()));
            }
        }
        g
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for id in self.preorder() {
            let mut seen = BTreeSet::new();
            for c in self.children(id) {
                let concept = self.concept_of(*c);
                if !seen.insert(concept) {
                    report.sibling_duplicates.push(SiblingViolation {
                        parent: id,
                        parent_concept: self.concept_of(id).clone(),
                        concept: concept.clone(),
                    });
                }
            }
        }
        report.cycles = self.dependency_graph().cycles();
        report
    }

    /// Renders the hierarchy back into the indented input format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(axis) = &self.axis {
            out.push_str(&format!("axis {axis} \"{}\"\n", self.title.as_deref().unwrap_or("")));
        }
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let node = &self.nodes[&id];
            out.push_str(&"  ".repeat(depth));
            out.push_str(node.concept.as_str());
            node.annotations.render(&mut out);
            out.push('\n');
            stack.extend(node.children.iter().rev().map(|c| (*c, depth + 1)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SiblingViolation {
    pub parent: NodeId,
    pub parent_concept: ConceptName,
    pub concept: ConceptName,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub sibling_duplicates: Vec<SiblingViolation>,
    /// Each cycle as a closed concept path `C1 → ... → C1`.
    pub cycles: Vec<Vec<ConceptName>>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.sibling_duplicates.is_empty() && self.cycles.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.sibling_duplicates {
            writeln!(f, "sibling duplicate: `{}` twice below `{}` ({})", v.concept, v.parent_concept, v.parent)?;
        }
        for c in &self.cycles {
            let names: Vec<&str> = c.iter().map(ConceptName::as_str).collect();
            writeln!(f, "dependency cycle: {}", names.join(" -> "))?;
        }
        Ok(())
    }
}

/// Directed graph over concepts with an edge child → parent for every direct
/// subordination in the tree.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DependencyGraph {
    pub nodes: BTreeSet<ConceptName>,
    pub edges: BTreeSet<(ConceptName, ConceptName)>,
}

impl DependencyGraph {
    fn successors(&self) -> BTreeMap<&ConceptName, Vec<&ConceptName>> {
        let mut adj: BTreeMap<&ConceptName, Vec<&ConceptName>> =
            self.nodes.iter().map(|n| (n, Vec::new())).collect();
        for (a, b) in &self.edges {
            adj.entry(a).or_default().push(b);
        }
        adj
    }

    /// `a` is more specific than `b`: a directed path of length ≥ 1 leads
    /// from `a` to `b`.
    pub fn is_more_specific(&self, a: &ConceptName, b: &ConceptName) -> Result<bool, HierarchyError> {
        for c in [a, b] {
            if !self.nodes.contains(c) {
                return Err(HierarchyError::UnknownConcept(c.to_string()));
            }
        }
        Ok(self.more_general_than_set(a).contains(b))
    }

    /// Concepts reachable from `a` by paths of length ≥ 1.
    pub fn more_general_than_set(&self, a: &ConceptName) -> BTreeSet<ConceptName> {
        let adj = self.successors();
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&ConceptName> = adj.get(a).into_iter().flatten().copied().collect();
        while let Some(c) = queue.pop_front() {
            if seen.insert(c.clone()) {
                queue.extend(adj.get(c).into_iter().flatten().copied());
            }
        }
        seen
    }

    /// Concepts with a path of length ≥ 1 into `b`.
    pub fn more_specific_than_set(&self, b: &ConceptName) -> BTreeSet<ConceptName> {
        let mut preds: BTreeMap<&ConceptName, Vec<&ConceptName>> = BTreeMap::new();
        for (x, y) in &self.edges {
            preds.entry(y).or_default().push(x);
        }
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&ConceptName> = preds.get(b).into_iter().flatten().copied().collect();
        while let Some(c) = queue.pop_front() {
            if seen.insert(c.clone()) {
                queue.extend(preds.get(c).into_iter().flatten().copied());
            }
        }
        seen
    }

    /// One witness cycle per non-trivial strongly connected component.
    pub fn cycles(&self) -> Vec<Vec<ConceptName>> {
        let adj = self.successors();
        let index_of: HashMap<&ConceptName, usize> =
            adj.keys().enumerate().map(|(i, c)| (*c, i)).collect();
        let names: Vec<&ConceptName> = adj.keys().copied().collect();
        let succ: Vec<Vec<usize>> =
            names.iter().map(|n| adj[n].iter().map(|m| index_of[m]).collect()).collect();

        let mut out = Vec::new();
        for comp in strongly_connected(&succ) {
            let members: BTreeSet<usize> = comp.iter().copied().collect();
            let start = *members.iter().next().expect("non-empty component");
            let self_loop = succ[start].contains(&start);
            if members.len() == 1 && !self_loop {
                continue;
            }
            let path = if self_loop {
                vec![start, start]
            } else {
                cycle_through(start, &succ, &members)
            };
            out.push(path.into_iter().map(|i| names[i].clone()).collect());
        }
        out.sort();
        out
    }
}

/// Iterative Tarjan.
fn strongly_connected(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0;
    let mut out = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if *next < succ[v].len() {
                let w = succ[v][*next];
                *next += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    out.push(comp);
                }
            }
        }
    }
    out
}

/// Shortest cycle from `start` back to itself inside one component.
fn cycle_through(start: usize, succ: &[Vec<usize>], members: &BTreeSet<usize>) -> Vec<usize> {
    let mut prev: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &w in &succ[v] {
            if !members.contains(&w) {
                continue;
            }
            if w == start {
                let mut walk = vec![v];
                let mut cur = v;
                while cur != start {
                    cur = prev[&cur];
                    walk.push(cur);
                }
                walk.reverse();
                walk.push(start);
                return walk;
            }
            if let std::collections::hash_map::Entry::Vacant(e) = prev.entry(w) {
                e.insert(v);
                queue.push_back(w);
            }
        }
    }
    unreachable!("every member of a non-trivial component lies on a cycle")
}

/// Parses the indented hierarchy format. Validation is a separate step.
pub fn parse_hierarchy(text: &str) -> Result<ConceptHierarchy, HierarchyError> {
    let mut axis: Option<(String, String)> = None;
    let mut hierarchy: Option<ConceptHierarchy> = None;
    // stack of (depth, node id) along the current path
    let mut path: Vec<NodeId> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim_end();
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        if raw.starts_with("axis ") || raw == "axis" {
            if hierarchy.is_some() {
                return Err(HierarchyError::Indentation {
                    line,
                    msg: "axis header must precede the nodes".into(),
                });
            }
            if axis.is_some() {
                return Err(HierarchyError::DuplicateAxisHeader { line });
            }
            axis = Some(parse_header(raw, line)?);
            continue;
        }
        let indent = raw.len() - raw.trim_start_matches(' ').len();
        if raw[indent..].starts_with('\t') {
            return Err(HierarchyError::Indentation { line, msg: "tabs are not allowed".into() });
        }
        if indent % 2 != 0 {
            return Err(HierarchyError::Indentation {
                line,
                msg: format!("indentation of {indent} spaces is not a multiple of two"),
            });
        }
        let depth = indent / 2;
        let mut parts = raw[indent..].split(" ?");
        let name = parts.next().unwrap_or("");
        let concept = ConceptName::new(name).ok_or(HierarchyError::EmptyConcept { line })?;
        let mut annotations = Annotations::default();
        for token in parts {
            annotations.parse_token(token.trim(), line)?;
        }

        let id = match hierarchy.as_mut() {
            None => {
                if depth != 0 {
                    return Err(HierarchyError::Indentation {
                        line,
                        msg: "the root node must not be indented".into(),
                    });
                }
                let h = ConceptHierarchy::new(concept);
                let root = h.root();
                hierarchy = Some(h);
                root
            }
            Some(h) => {
                if depth == 0 {
                    return Err(HierarchyError::MultipleRoots { line, concept: concept.to_string() });
                }
                if depth > path.len() {
                    return Err(HierarchyError::Indentation {
                        line,
                        msg: format!("jumps to depth {depth} below a node at depth {}", path.len() - 1),
                    });
                }
                path.truncate(depth);
                h.add_child(*path.last().expect("depth >= 1"), concept)?
            }
        };
        let h = hierarchy.as_mut().expect("set above");
        h.node_mut(id).expect("just added").annotations = annotations;
        path.push(id);
    }

    let mut h = hierarchy.ok_or(HierarchyError::Empty)?;
    if let Some((name, title)) = axis {
        h.axis = Some(name);
        h.title = Some(title);
    }
    Ok(h)
}

fn parse_header(raw: &str, line: usize) -> Result<(String, String), HierarchyError> {
    let rest = raw["axis".len()..].trim();
    let (name, title) = rest.split_once(char::is_whitespace).ok_or(HierarchyError::BadHeader { line })?;
    let title = title.trim();
    let valid_name = !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !valid_name || title.len() < 2 || !title.starts_with('"') || !title.ends_with('"') {
        return Err(HierarchyError::BadHeader { line });
    }
    Ok((name.to_string(), title[1..title.len() - 1].to_string()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const ANAMNESIS: &str = "axis A \"anamnesis\"
anamnesis
  pain pattern
    localization ?single
      spine
      head
      shoulder/arm/hand
    quality
    intensity ?single
      strong
      very strong
  feeling
";

    fn c(s: &str) -> ConceptName {
        ConceptName::from(s)
    }

    /// Concept 1 with children 2 and 3; 4 below both.
    fn fig1() -> ConceptHierarchy {
        parse_hierarchy("concept 1\n  concept 2\n    concept 4\n  concept 3\n    concept 4\n").unwrap()
    }

    #[test]
    fn parses_anamnesis() {
        let h = parse_hierarchy(ANAMNESIS).unwrap();
        assert_eq!(h.len(), 11);
        assert_eq!(h.axis.as_deref(), Some("A"));
        assert_eq!(h.title.as_deref(), Some("anamnesis"));
        assert_eq!(h.concept_of(h.root()), &c("anamnesis"));
        let loc = h.occurrences(&c("localization"))[0];
        assert_eq!(h.node(loc).unwrap().annotations.question, Some(QuestionType::Single));
        let names: Vec<String> = h.children(h.root()).iter().map(|n| h.concept_of(*n).to_string()).collect();
        assert_eq!(names, ["pain pattern", "feeling"]);
        assert!(h.validate().is_valid());
        assert_eq!(parse_hierarchy(&h.to_text()).unwrap(), h);
    }

    #[test]
    fn single_line() {
        let h = parse_hierarchy("root").unwrap();
        assert_eq!(h.len(), 1);
        assert!(h.axis.is_none());
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_hierarchy(""), Err(HierarchyError::Empty));
        assert_eq!(parse_hierarchy("\n# only a comment\n"), Err(HierarchyError::Empty));
        assert!(matches!(parse_hierarchy("a\n    b\n"), Err(HierarchyError::Indentation { line: 2, .. })));
        assert!(matches!(parse_hierarchy("a\n   b\n"), Err(HierarchyError::Indentation { line: 2, .. })));
        assert!(matches!(parse_hierarchy("  a\n"), Err(HierarchyError::Indentation { line: 1, .. })));
        assert!(matches!(
            parse_hierarchy("axis A \"x\"\naxis B \"y\"\na\n"),
            Err(HierarchyError::DuplicateAxisHeader { line: 2 })
        ));
        assert!(matches!(parse_hierarchy("axis A x\na\n"), Err(HierarchyError::BadHeader { line: 1 })));
        assert!(matches!(parse_hierarchy("a\nb\n"), Err(HierarchyError::MultipleRoots { line: 2, .. })));
        assert!(matches!(
            parse_hierarchy("a ?sideways\n"),
            Err(HierarchyError::UnknownAnnotation { line: 1, .. })
        ));
    }

    #[test]
    fn annotations_roundtrip() {
        let h = parse_hierarchy("q ?multi ?optional ?negatable ?default=very strong ?text=Where does it hurt?\n  very strong\n").unwrap();
        let a = &h.node(h.root()).unwrap().annotations;
        assert_eq!(a.question, Some(QuestionType::Multi));
        assert!(a.optional && a.negatable);
        assert_eq!(a.default, Some(c("very strong")));
        assert_eq!(a.extra, vec![("text".to_string(), "Where does it hurt?".to_string())]);
        assert_eq!(parse_hierarchy(&h.to_text()).unwrap(), h);
    }

    #[test]
    fn fig1_dependency_graph() {
        let h = fig1();
        assert!(h.validate().is_valid());
        let g = h.dependency_graph();
        assert_eq!(g.nodes.len(), 4);
        let edges: Vec<(&str, &str)> = g.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(
            edges,
            [
                ("concept 2", "concept 1"),
                ("concept 3", "concept 1"),
                ("concept 4", "concept 2"),
                ("concept 4", "concept 3")
            ]
        );
        let single = parse_hierarchy("root").unwrap().dependency_graph();
        assert_eq!((single.nodes.len(), single.edges.len()), (1, 0));
    }

    #[test]
    fn sibling_violation_reported() {
        let h = parse_hierarchy("r\n  K\n  K\n").unwrap();
        let report = h.validate();
        assert_eq!(report.sibling_duplicates.len(), 1);
        assert_eq!(report.sibling_duplicates[0].concept, c("K"));
        assert!(report.cycles.is_empty());
    }

    #[test]
    fn cycle_reported_as_closed_path() {
        let h = parse_hierarchy("r\n  P\n    Q\n  Q\n    P\n").unwrap();
        let report = h.validate();
        assert_eq!(report.cycles, vec![vec![c("P"), c("Q"), c("P")]]);
        let self_loop = parse_hierarchy("r\n  P\n    P\n").unwrap().validate();
        assert_eq!(self_loop.cycles, vec![vec![c("P"), c("P")]]);
    }

    #[test]
    fn longer_cycle_walks_edges() {
        let h = parse_hierarchy("r\n  A\n    B\n  B\n    C\n  C\n    A\n").unwrap();
        let cycles = h.validate().cycles;
        assert_eq!(cycles.len(), 1);
        let cyc = &cycles[0];
        assert_eq!(cyc.first(), cyc.last());
        let g = h.dependency_graph();
        for w in cyc.windows(2) {
            assert!(g.edges.contains(&(w[0].clone(), w[1].clone())), "{:?}", cyc);
        }
    }

    #[test]
    fn parents_of_concepts() {
        let h = parse_hierarchy(
            "pain pattern\n  cardinal symptom\n    localization\n  radiating pain\n    localization\n    intensity\n      strong\n",
        )
        .unwrap();
        let p: Vec<&str> = h.parents(&c("localization")).unwrap().iter().map(|n| h.concept_of(*n).as_str()).collect();
        assert_eq!(p, ["cardinal symptom", "radiating pain"]);
        assert!(h.parents(&c("pain pattern")).unwrap().is_empty());
        let p: Vec<&str> = h.parents(&c("strong")).unwrap().iter().map(|n| h.concept_of(*n).as_str()).collect();
        assert_eq!(p, ["intensity"]);
        assert!(matches!(h.parents(&c("nope")), Err(HierarchyError::UnknownConcept(_))));
    }

    #[test]
    fn more_specific_queries() {
        let h = parse_hierarchy(
            "anamnesis\n  pain pattern\n    localization\n      head\n  feeling\n",
        )
        .unwrap();
        let g = h.dependency_graph();
        assert!(g.is_more_specific(&c("head"), &c("pain pattern")).unwrap());
        assert!(!g.is_more_specific(&c("pain pattern"), &c("head")).unwrap());
        assert!(!g.is_more_specific(&c("head"), &c("head")).unwrap());
        assert!(!g.is_more_specific(&c("feeling"), &c("pain pattern")).unwrap());
        assert!(g.is_more_specific(&c("x"), &c("head")).is_err());
    }

    #[test]
    fn paths_resolve_uniquely() {
        let h = fig1();
        for id in h.preorder() {
            assert_eq!(h.resolve_path(&h.concept_path(id)), Some(id));
        }
        assert_eq!(h.resolve_path(&[c("concept 1"), c("concept 4")]), None);
    }
}
