//! Random generators for hierarchies and maintenance operations, used by the
//! property and acceptance suites of this and the downstream crates.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dconcepts::{DConcept, DConceptHierarchy};
use crate::hierarchy::{ConceptHierarchy, ConceptName, NodeId, QuestionType};
use crate::keys::{Key, KeyElement};
use crate::multiaxial::{AxisBinding, MultiaxialDescriptor, Situation};

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_nodes: usize,
    pub max_concepts: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Shape { max_nodes: 200, max_concepts: 40 }
    }
}

/// A valid hierarchy. Concepts carry a hidden rank and children always have
/// a higher rank than their parent, so the dependency graph is acyclic.
pub fn valid_hierarchy<R: Rng>(rng: &mut R, shape: Shape) -> ConceptHierarchy {
    let concepts = rng.gen_range(1..=shape.max_concepts.max(1));
    let target = rng.gen_range(1..=shape.max_nodes.max(1));
    let mut names: Vec<ConceptName> = (0..concepts).map(|i| ConceptName::from(format!("c{i}").as_str())).collect();
    names[1..].shuffle(rng);
    let rank_of = |c: &ConceptName, names: &[ConceptName]| names.iter().position(|n| n == c).expect("known");

    let mut h = ConceptHierarchy::new(names[0].clone());
    let mut open = vec![h.root()];
    let mut attempts = 0;
    while h.len() < target && !open.is_empty() && attempts < target * 20 {
        attempts += 1;
        let slot = rng.gen_range(0..open.len());
        let parent = open[slot];
        let rank = rank_of(h.concept_of(parent), &names);
        if rank + 1 >= concepts {
            open.swap_remove(slot);
            continue;
        }
        // favour nearby ranks so concepts recur under several parents
        let span = (concepts - rank - 1).min(rng.gen_range(1..=8));
        let child = names[rank + 1 + rng.gen_range(0..span)].clone();
        if h.children(parent).iter().any(|c| h.concept_of(*c) == &child) {
            continue;
        }
        let id = h.add_child(parent, child).expect("parent exists");
        open.push(id);
    }
    h
}

/// A valid hierarchy in which every concept only ever occurs at one depth.
pub fn layered_hierarchy<R: Rng>(rng: &mut R, shape: Shape) -> ConceptHierarchy {
    let concepts = rng.gen_range(1..=shape.max_concepts.max(1));
    let target = rng.gen_range(1..=shape.max_nodes.max(1));
    let mut levels: Vec<Vec<ConceptName>> = vec![vec![ConceptName::from("c0")]];
    for i in 1..concepts {
        let name = ConceptName::from(format!("c{i}").as_str());
        if levels.len() == 1 || rng.gen_bool(0.3) {
            levels.push(vec![name]);
        } else {
            let l = rng.gen_range(1..levels.len());
            levels[l].push(name);
        }
    }
    let mut h = ConceptHierarchy::new(levels[0][0].clone());
    let mut open = vec![(h.root(), 0usize)];
    let mut attempts = 0;
    while h.len() < target && !open.is_empty() && attempts < target * 20 {
        attempts += 1;
        let slot = rng.gen_range(0..open.len());
        let (parent, depth) = open[slot];
        let Some(next) = levels.get(depth + 1) else {
            open.swap_remove(slot);
            continue;
        };
        let child = next.choose(rng).expect("levels are non-empty").clone();
        if h.children(parent).iter().any(|c| h.concept_of(*c) == &child) {
            continue;
        }
        let id = h.add_child(parent, child).expect("parent exists");
        open.push((id, depth + 1));
    }
    h
}

/// A copy of `h` with one extra node that closes a dependency cycle, or
/// `None` when `h` has no pair of comparable concepts to exploit.
pub fn with_injected_cycle<R: Rng>(rng: &mut R, h: &ConceptHierarchy) -> Option<ConceptHierarchy> {
    let nodes = h.preorder();
    // any node with a proper ancestor can receive the ancestor's concept
    let candidates: Vec<(NodeId, ConceptName)> = nodes
        .iter()
        .flat_map(|n| {
            let path = h.root_path(*n);
            let own = h.concept_of(*n).clone();
            path[..path.len() - 1]
                .iter()
                .map(|a| h.concept_of(*a).clone())
                .filter(move |c| *c != own)
                .map(move |c| (*n, c))
                .collect::<Vec<_>>()
        })
        .filter(|(n, c)| !h.children(*n).iter().any(|ch| h.concept_of(*ch) == c))
        .collect();
    let (node, concept) = candidates.choose(rng)?.clone();
    let mut out = h.clone();
    out.add_child(node, concept).expect("node exists");
    Some(out)
}

/// A copy of `h` where some node receives a second child with a concept it
/// already has below it.
pub fn with_sibling_duplicate<R: Rng>(rng: &mut R, h: &ConceptHierarchy) -> Option<ConceptHierarchy> {
    let parents: Vec<NodeId> = h.preorder().into_iter().filter(|n| !h.children(*n).is_empty()).collect();
    let parent = *parents.choose(rng)?;
    let child = *h.children(parent).choose(rng)?;
    let mut out = h.clone();
    out.add_child(parent, h.concept_of(child).clone()).expect("node exists");
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Edit {
    Insert { parent: NodeId, concept: ConceptName },
    Delete { node: NodeId },
}

/// One maintenance step that keeps `h` valid: either a delete of a non-root
/// node, an insert of an existing concept that respects the sibling rule and
/// acyclicity, or an insert of a fresh concept.
pub fn valid_edit<R: Rng>(rng: &mut R, h: &ConceptHierarchy, fresh: &mut u32) -> Option<Edit> {
    let nodes = h.preorder();
    let roll = rng.gen_range(0..10);
    if roll < 3 && nodes.len() > 1 {
        return Some(Edit::Delete { node: nodes[rng.gen_range(1..nodes.len())] });
    }
    let parent = *nodes.choose(rng)?;
    if roll < 5 {
        *fresh += 1;
        return Some(Edit::Insert { parent, concept: ConceptName::from(format!("n{fresh}").as_str()) });
    }
    let graph = h.dependency_graph();
    let parent_concept = h.concept_of(parent).clone();
    let above = graph.more_general_than_set(&parent_concept);
    let options: Vec<ConceptName> = h
        .concepts()
        .into_iter()
        .filter(|c| *c != parent_concept && !above.contains(c))
        .filter(|c| !h.children(parent).iter().any(|ch| h.concept_of(*ch) == c))
        .collect();
    let concept = options.choose(rng)?.clone();
    Some(Edit::Insert { parent, concept })
}

/// A key starting with the root constant, `len` positions long, with
/// constants below `width` and an occasional variable.
pub fn key<R: Rng>(rng: &mut R, len: usize, width: u32, var_ratio: f64) -> Key {
    let mut elements = vec![KeyElement::Const(0)];
    for _ in 1..len.max(1) {
        elements.push(if rng.gen_bool(var_ratio) { KeyElement::Var } else { KeyElement::Const(rng.gen_range(0..width)) });
    }
    Key::new(elements).expect("non-empty")
}

fn descriptor<R: Rng>(rng: &mut R, axes: &[&str]) -> MultiaxialDescriptor {
    let count = rng.gen_range(1..=2.min(axes.len()));
    let mut chosen: Vec<&str> = axes.choose_multiple(rng, count).copied().collect();
    chosen.sort();
    let bindings = chosen
        .into_iter()
        .map(|a| {
            let len = rng.gen_range(1..=3);
            AxisBinding::new(a, key(rng, len, 3, 0.1))
        })
        .collect();
    MultiaxialDescriptor::new(bindings).expect("distinct axes")
}

/// A d-concept hierarchy of at most `max` concepts over `axes`.
pub fn dconcepts<R: Rng>(rng: &mut R, max: usize, axes: &[&str]) -> DConceptHierarchy {
    let n = rng.gen_range(1..=max.max(1));
    let mut concepts: Vec<DConcept> = Vec::with_capacity(n);
    for i in 0..n {
        let parent = (i > 0).then(|| format!("d{}", rng.gen_range(0..i)));
        let mut c = DConcept::new(&format!("d{i}"), parent.as_deref());
        let requires = if i == 0 { rng.gen_range(0..=1) } else { rng.gen_range(0..=2) };
        for _ in 0..requires {
            c.description.requires.push(descriptor(rng, axes));
        }
        if rng.gen_bool(0.2) {
            c.description.excludes.push(descriptor(rng, axes));
        }
        concepts.push(c);
    }
    DConceptHierarchy::new(concepts).expect("tree by construction")
}

/// A situation with up to `max` bindings over `axes`.
pub fn situation<R: Rng>(rng: &mut R, max: usize, axes: &[&str]) -> Situation {
    let n = rng.gen_range(0..=max);
    Situation::new((0..n).map(|_| {
        let len = rng.gen_range(1..=4);
        AxisBinding::new(axes.choose(rng).expect("axes"), key(rng, len, 3, 0.0))
    }))
}

/// `h` with random dialog annotations on its question nodes. Indexing
/// ignores annotations, so keys are unaffected.
pub fn with_random_annotations<R: Rng>(rng: &mut R, h: &ConceptHierarchy) -> ConceptHierarchy {
    let mut out = h.clone();
    for n in h.preorder() {
        let children: Vec<ConceptName> = h.children(n).iter().map(|c| h.concept_of(*c).clone()).collect();
        if children.is_empty() {
            continue;
        }
        let a = &mut out.node_mut(n).expect("same nodes").annotations;
        a.question = match rng.gen_range(0..3) {
            0 => Some(QuestionType::Single),
            1 => Some(QuestionType::Multi),
            _ => None,
        };
        a.optional = rng.gen_bool(0.3);
        a.negatable = rng.gen_bool(0.4);
        if a.optional && rng.gen_bool(0.5) {
            a.default = children.choose(rng).cloned();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_hierarchies_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut shared = 0;
        for _ in 0..200 {
            let h = valid_hierarchy(&mut rng, Shape::default());
            assert!(h.validate().is_valid());
            assert!(h.len() <= 200);
            assert!(h.concepts().len() <= 40);
            if h.concepts().iter().any(|c| h.occurrences(c).len() > 1) {
                shared += 1;
            }
        }
        assert!(shared > 100, "only {shared} hierarchies reuse a concept");
    }

    #[test]
    fn injected_defects_are_invalid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let h = valid_hierarchy(&mut rng, Shape::default());
            if let Some(bad) = with_injected_cycle(&mut rng, &h) {
                assert!(!bad.validate().cycles.is_empty());
            }
            if let Some(bad) = with_sibling_duplicate(&mut rng, &h) {
                assert!(!bad.validate().sibling_duplicates.is_empty());
            }
        }
    }
}
