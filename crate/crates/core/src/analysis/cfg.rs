//! Concept formation graphs: how tokens flow between concepts of consecutive layers.

use std::collections::{BTreeSet, VecDeque};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::repr::SoftClustering;

pub const DEFAULT_ASSIGNMENT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CONTRIBUTION_THRESHOLD: f64 = 0.1;

/// Thresholded concept sets per token. An empty set marks noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenAssignment {
    pub k: usize,
    pub sets: Vec<Vec<usize>>,
}

/// Token `i` belongs to every concept `α` with `P^α(φ_i) ≥ threshold`.
pub fn assign_tokens(c: &SoftClustering, threshold: f64) -> Result<TokenAssignment> {
    ensure!(
        threshold > 0.0 && threshold < 1.0,
        "assignment threshold {threshold} must be in (0, 1)"
    );
    let sets = c
        .memberships
        .outer_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &v)| v >= threshold)
                .map(|(a, _)| a)
                .collect()
        })
        .collect();
    Ok(TokenAssignment { k: c.k(), sets })
}

/// Counts of tokens in concept `α` at one layer and `β` at the next.
pub fn transition_matrix(from: &TokenAssignment, to: &TokenAssignment) -> Result<Array2<u64>> {
    if from.sets.len() != to.sets.len() {
        return Err(Error::SizeMismatch(format!(
            "assignments cover {} and {} tokens",
            from.sets.len(),
            to.sets.len()
        )));
    }
    let mut m = Array2::zeros((from.k, to.k));
    for (a, b) in from.sets.iter().zip(&to.sets) {
        for &alpha in a {
            for &beta in b {
                m[[alpha, beta]] += 1;
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptNode {
    /// 1-based layer number.
    pub layer: usize,
    pub concept: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptEdge {
    pub from: ConceptNode,
    pub to: ConceptNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptGraph {
    pub target: ConceptNode,
    pub nodes: Vec<ConceptNode>,
    pub edges: Vec<ConceptEdge>,
    pub assignment_threshold: Option<f64>,
    pub contribution_threshold: f64,
}

/// Builds the graph of concepts feeding `target`, walking backwards.
///
/// `transitions[l - 1]` holds counts from layer `l` to layer `l + 1`. A
/// predecessor `α` of node `β` is added when its share of all tokens entering
/// `β` is at least `contribution_threshold` and its count is non-zero.
pub fn build_cfg(
    target: ConceptNode,
    transitions: &[Array2<u64>],
    contribution_threshold: f64,
) -> Result<ConceptGraph> {
    let layers = transitions.len() + 1;
    ensure!(
        (1..=layers).contains(&target.layer),
        "target layer {} outside 1..={layers}",
        target.layer
    );
    for (l, pair) in transitions.windows(2).enumerate() {
        ensure!(
            pair[0].ncols() == pair[1].nrows(),
            "transition matrices {} and {} disagree on concept count",
            l + 1,
            l + 2
        );
    }
    let k_target = if target.layer == 1 {
        transitions.first().map(|t| t.nrows())
    } else {
        Some(transitions[target.layer - 2].ncols())
    };
    if let Some(k) = k_target {
        ensure!(
            target.concept < k,
            "target concept {} out of range for {k} concepts",
            target.concept
        );
    }
    ensure!(
        (0.0..=1.0).contains(&contribution_threshold),
        "contribution threshold must be in [0, 1]"
    );

    let mut nodes = BTreeSet::from([target]);
    let mut edges = BTreeSet::new();
    let mut queue = VecDeque::from([target]);
    while let Some(node) = queue.pop_front() {
        if node.layer == 1 {
            continue;
        }
        let t = &transitions[node.layer - 2];
        let col = t.column(node.concept);
        let total: u64 = col.sum();
        if total == 0 {
            continue;
        }
        for (alpha, &count) in col.iter().enumerate() {
            if count > 0 && count as f64 / total as f64 >= contribution_threshold {
                let pred = ConceptNode {
                    layer: node.layer - 1,
                    concept: alpha,
                };
                edges.insert(ConceptEdge { from: pred, to: node });
                if nodes.insert(pred) {
                    queue.push_back(pred);
                }
            }
        }
    }
    Ok(ConceptGraph {
        target,
        nodes: nodes.into_iter().collect(),
        edges: edges.into_iter().collect(),
        assignment_threshold: None,
        contribution_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn assignment(k: usize, sets: &[&[usize]]) -> TokenAssignment {
        TokenAssignment {
            k,
            sets: sets.iter().map(|s| s.to_vec()).collect(),
        }
    }

    #[test]
    fn thresholding() {
        let c = SoftClustering::from_memberships(array![[0.6, 0.3], [0.2, 0.1]], 0, "t").unwrap();
        assert_eq!(assign_tokens(&c, 0.5).unwrap().sets, vec![vec![0], vec![]]);
        let c = SoftClustering::from_memberships(array![[0.1, 0.1]], 0, "t").unwrap();
        assert_eq!(assign_tokens(&c, 0.05).unwrap().sets, vec![vec![0, 1]]);
        assert!(assign_tokens(&c, 1.0).is_err());
    }

    #[test]
    fn all_tokens_one_transition() {
        let a = assignment(2, &[&[1usize][..]; 10]);
        let b = assignment(3, &[&[2usize][..]; 10]);
        let m = transition_matrix(&a, &b).unwrap();
        assert_eq!(m[[1, 2]], 10);
        assert_eq!(m.sum(), 10);
    }

    #[test]
    fn hand_enumeration() {
        let a = assignment(2, &[&[0], &[0, 1], &[], &[1], &[0]]);
        let b = assignment(2, &[&[1], &[0], &[0], &[0, 1], &[]]);
        let m = transition_matrix(&a, &b).unwrap();
        // token 1: (0,0),(1,0); token 0: (0,1); token 3: (1,0),(1,1)
        assert_eq!(m, array![[1, 1], [2, 1]]);
        let disjoint = assignment(2, &[&[], &[], &[], &[], &[]]);
        assert_eq!(transition_matrix(&a, &disjoint).unwrap().sum(), 0);
        assert!(transition_matrix(&a, &assignment(2, &[&[0]])).is_err());
    }

    #[test]
    fn conservation_of_outgoing_counts() {
        let a = assignment(2, &[&[0], &[0, 1], &[1], &[1]]);
        let b = assignment(3, &[&[2], &[0], &[1], &[0]]);
        let m = transition_matrix(&a, &b).unwrap();
        for alpha in 0..2 {
            let out: u64 = m.row(alpha).sum();
            let tokens = a.sets.iter().zip(&b.sets).filter(|(s, t)| s.contains(&alpha) && !t.is_empty()).count();
            assert_eq!(out, tokens as u64);
        }
    }

    #[test]
    fn contribution_threshold_prunes() {
        let t = array![[8u64], [2]];
        let target = ConceptNode { layer: 2, concept: 0 };
        let g = build_cfg(target, std::slice::from_ref(&t), 0.3).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].from, ConceptNode { layer: 1, concept: 0 });
        let g = build_cfg(target, &[t], 1e-9).unwrap();
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn first_layer_target_is_alone() {
        let t = array![[3u64, 1], [0, 5]];
        let g = build_cfg(ConceptNode { layer: 1, concept: 1 }, std::slice::from_ref(&t), 0.1).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
        assert!(build_cfg(ConceptNode { layer: 2, concept: 2 }, std::slice::from_ref(&t), 0.1).is_err());
        assert!(build_cfg(ConceptNode { layer: 3, concept: 0 }, &[t], 0.1).is_err());
    }

    #[test]
    fn recursion_over_layers_and_relabeling() {
        let t1 = array![[5u64, 0], [0, 5], [1, 0]];
        let t2 = array![[4u64], [6]];
        let target = ConceptNode { layer: 3, concept: 0 };
        let g = build_cfg(target, &[t1.clone(), t2.clone()], 0.1).unwrap();
        assert_eq!(g.nodes.len(), 6);
        assert_eq!(g.edges.len(), 5);
        // Swap the two layer-2 concepts: same graph up to renaming.
        let t1s = array![[0u64, 5], [5, 0], [0, 1]];
        let t2s = array![[6u64], [4]];
        let h = build_cfg(target, &[t1s, t2s], 0.1).unwrap();
        assert_eq!(h.nodes.len(), g.nodes.len());
        assert_eq!(h.edges.len(), g.edges.len());
        for e in &g.edges {
            let rename = |n: ConceptNode| if n.layer == 2 { ConceptNode { concept: 1 - n.concept, ..n } } else { n };
            assert!(h.edges.contains(&ConceptEdge { from: rename(e.from), to: rename(e.to) }));
        }
    }
}
