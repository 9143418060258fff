//! Semantic indexing of concept hierarchies.
//!
//! Concepts and tree nodes receive keys such as `[0,x,0,1]`. A general
//! concept's key partially unifies with the keys of all its more specific
//! concepts, so terminological queries reduce to positionwise key matching.

pub mod cbr;
pub mod dconcepts;
pub mod hierarchy;
pub mod indexer;
pub mod keys;
pub mod multiaxial;
pub mod oracle;
pub mod random;

pub use hierarchy::{parse_hierarchy, ConceptHierarchy, ConceptName, DependencyGraph, NodeId};
pub use keys::{Key, KeyElement, KeyError};
pub use multiaxial::{AxisBinding, MultiaxialDescriptor, MultiaxialExpression, Situation};
pub use dconcepts::{infer_most_specific, parse_dconcepts, DConceptHierarchy};
pub use indexer::{
    check_correctness, delete_node, index_hierarchy, insert_node, render_indexed, ChangeEntry, ChangeSet, CorrectnessReport,
    IndexError, IndexedHierarchy, Violation,
};
