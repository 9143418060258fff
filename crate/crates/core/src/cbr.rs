//! Similarity of situations and top-k ranking of cases.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::keys::Key;
use crate::multiaxial::Situation;

pub trait SimilarityMeasure {
    fn name(&self) -> &str;
    /// Symmetric, within `[0, 1]`.
    fn similarity(&self, a: &Situation, b: &Situation) -> f64;
}

/// Prefix-overlap measure, see [`default_similarity`].
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultSimilarity;

impl SimilarityMeasure for DefaultSimilarity {
    fn name(&self) -> &str {
        "prefix"
    }

    fn similarity(&self, a: &Situation, b: &Situation) -> f64 {
        default_similarity(a, b)
    }
}

fn prefix_score(a: &Key, b: &Key) -> f64 {
    a.common_prefix_len(b) as f64 / a.len().max(b.len()) as f64
}

/// Mean over the bindings of `a` of the best prefix score against a binding
/// of `b` on the same axis (0 if the axis is absent from `b`).
fn directed(a: &Situation, b: &Situation) -> f64 {
    let total: f64 = a
        .bindings
        .iter()
        .map(|x| b.on_axis(&x.axis).map(|k| prefix_score(&x.key, k)).fold(0.0, f64::max))
        .sum();
    total / a.bindings.len() as f64
}

/// Longest common initial segment over the longer length, best match per
/// binding, averaged and symmetrized. Two empty situations are identical;
/// an empty and a non-empty one share nothing.
pub fn default_similarity(a: &Situation, b: &Situation) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (directed(a, b) + directed(b, a)) / 2.0,
    }
}

/// How a query is compared with a problem made of several episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    /// Only the most recent episode counts.
    #[default]
    Latest,
    /// Mean over all episodes.
    Mean,
}

/// `problem` is ordered oldest first.
pub fn problem_similarity(
    measure: &dyn SimilarityMeasure,
    query: &Situation,
    problem: &[Situation],
    mode: SequenceMode,
) -> f64 {
    match (mode, problem) {
        (_, []) => 0.0,
        (SequenceMode::Latest, [.., last]) => measure.similarity(query, last),
        (SequenceMode::Mean, all) => all.iter().map(|s| measure.similarity(query, s)).sum::<f64>() / all.len() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: i64,
    pub score: f64,
}

impl Eq for Scored {}

/// Better first: higher score, then lower id.
impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` best entries, best first, keeping at most `k` in memory.
pub fn top_k(scores: impl IntoIterator<Item = Scored>, k: usize) -> Vec<Scored> {
    if k == 0 {
        return Vec::new();
    }
    // max-heap on the ordering above keeps the worst retained entry on top
    let mut heap: BinaryHeap<Scored> = BinaryHeap::with_capacity(k + 1);
    for s in scores {
        if heap.len() < k {
            heap.push(s);
        } else if s < *heap.peek().expect("k > 0") {
            heap.pop();
            heap.push(s);
        }
    }
    heap.into_sorted_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiaxial::parse_situation;
    use proptest::prelude::*;

    fn sit(s: &str) -> Situation {
        parse_situation(s).unwrap()
    }

    #[test]
    fn regression_value() {
        assert_eq!(default_similarity(&sit("(A[0,0,1,1])"), &sit("(A[0,0,1,0])")), 0.75);
    }

    #[test]
    fn identities() {
        let a = sit("(A[0,0,1]),(B[0,2])");
        assert_eq!(default_similarity(&a, &a), 1.0);
        assert_eq!(default_similarity(&sit("(A[0,1])"), &sit("(B[0,1])")), 0.0);
        assert_eq!(default_similarity(&sit(""), &sit("")), 1.0);
        assert_eq!(default_similarity(&sit(""), &a), 0.0);
        // one side has an extra axis: A scores 1 both ways, B scores 0 one way
        assert_eq!(default_similarity(&sit("(A[0,1])"), &sit("(A[0,1]),(B[0])")), 0.75);
    }

    #[test]
    fn sequence_modes() {
        let q = sit("(A[0,1])");
        let problem = [sit("(A[0,1])"), sit("(A[0,2])")];
        assert_eq!(problem_similarity(&DefaultSimilarity, &q, &problem, SequenceMode::Latest), 0.5);
        assert_eq!(problem_similarity(&DefaultSimilarity, &q, &problem, SequenceMode::Mean), 0.75);
        assert_eq!(problem_similarity(&DefaultSimilarity, &q, &[], SequenceMode::Mean), 0.0);
    }

    #[test]
    fn top_k_breaks_ties_by_id() {
        let scores = [(5, 0.5), (2, 0.9), (9, 0.5), (1, 0.5), (3, 0.1)].map(|(id, score)| Scored { id, score });
        let ids: Vec<i64> = top_k(scores, 3).iter().map(|s| s.id).collect();
        assert_eq!(ids, [2, 1, 5]);
        assert!(top_k(scores, 0).is_empty());
        assert_eq!(top_k(scores, 10).len(), 5);
    }

    fn arb_situation() -> impl Strategy<Value = Situation> {
        let binding = (prop::sample::select(vec!["A", "B"]), prop::collection::vec(0u32..3, 0..4)).prop_map(|(a, tail)| {
            let mut v = vec![crate::keys::KeyElement::Const(0)];
            v.extend(tail.into_iter().map(crate::keys::KeyElement::Const));
            crate::multiaxial::AxisBinding::new(a, Key::new(v).unwrap())
        });
        prop::collection::vec(binding, 0..5).prop_map(Situation::new)
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in arb_situation(), b in arb_situation()) {
            let ab = default_similarity(&a, &b);
            prop_assert_eq!(ab, default_similarity(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
        }

        #[test]
        fn top_k_equals_full_sort(scores in prop::collection::vec((0i64..50, 0u8..5), 0..40), k in 0usize..45) {
            let scored: Vec<Scored> = scores.iter().enumerate()
                .map(|(i, (_, s))| Scored { id: i as i64 * 7 % 53, score: f64::from(*s) / 4.0 })
                .collect();
            let mut all = scored.clone();
            all.sort_by(|x, y| y.score.partial_cmp(&x.score).unwrap().then(x.id.cmp(&y.id)));
            all.truncate(k);
            prop_assert_eq!(top_k(scored, k), all);
        }
    }
}
