//! Partitions of clustered sets, dissections of linearly ordered sets,
//! compositions, and the signed Möbius coefficients weighting them.
//!
//! A clustered set is an ordered list of elements in which at most one
//! element is a cluster {Y} standing for a whole block of particle labels;
//! partitioning treats the cluster as a single element, and the
//! declusterization map θ flattens it back into its labels.
//!
//! Enumerations are cached per ground-set size: the same index sets recur
//! for every evaluation time and expansion order.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use parking_lot::RwLock;
use thiserror::Error;

use crate::op::Label;

#[derive(Debug, Error)]
pub enum CombError {
    #[error("cannot partition an empty set")]
    EmptySet,
    #[error("clustered set must have distinct labels and at most one cluster")]
    BadClusteredSet,
}

/// Element of a clustered set: either one particle label or a cluster of
/// labels treated as a single element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Element {
    Single(Label),
    Cluster(Vec<Label>),
}

impl Element {
    pub fn labels(&self) -> Vec<Label> {
        match self {
            Element::Single(l) => vec![*l],
            Element::Cluster(ls) => ls.clone(),
        }
    }
}

/// Ordered set of elements, at most one of which is a cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusteredSet {
    elements: Vec<Element>,
}

impl ClusteredSet {
    pub fn new(elements: Vec<Element>) -> Result<Self, CombError> {
        let clusters = elements
            .iter()
            .filter(|e| matches!(e, Element::Cluster(_)))
            .count();
        if clusters > 1 {
            return Err(CombError::BadClusteredSet);
        }
        let mut seen = Vec::new();
        for e in &elements {
            for l in e.labels() {
                if seen.contains(&l) {
                    return Err(CombError::BadClusteredSet);
                }
                seen.push(l);
            }
        }
        Ok(Self { elements })
    }

    /// The clustered set ({Y}, a, b, …) with cluster Y and trailing singles.
    pub fn cluster_with_singles(cluster: Vec<Label>, singles: &[Label]) -> Result<Self, CombError> {
        let mut elements = vec![Element::Cluster(cluster)];
        elements.extend(singles.iter().map(|&l| Element::Single(l)));
        Self::new(elements)
    }

    /// A plain set of single labels.
    pub fn singles(labels: &[Label]) -> Result<Self, CombError> {
        Self::new(labels.iter().map(|&l| Element::Single(l)).collect())
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Declusterization map θ: flatten to the underlying labels, preserving
    /// element order and intra-cluster order.
    pub fn declusterize(&self) -> Vec<Label> {
        self.elements.iter().flat_map(|e| e.labels()).collect()
    }
}

/// Partition of a clustered set; each block is a list of elements in the
/// order they appear in the ground set, blocks ordered by least position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub blocks: Vec<Vec<Element>>,
}

impl Partition {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Möbius coefficient (−1)^(|P|−1) (|P|−1)! attached to a partition with the
/// given block count.
pub fn mobius_coefficient(num_blocks: usize) -> i64 {
    assert!(num_blocks >= 1);
    let sign = if (num_blocks - 1) % 2 == 0 { 1 } else { -1 };
    sign * factorial(num_blocks - 1) as i64
}

pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

pub fn bell_number(n: usize) -> u64 {
    raw_partitions(n).len() as u64
}

/// All set partitions of {0, …, n−1} as index blocks, blocks ordered by
/// least element and elements increasing inside each block.
pub fn raw_partitions(n: usize) -> Arc<Vec<Vec<Vec<usize>>>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Vec<Vec<Vec<usize>>>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(hit) = cache.read().get(&n) {
        return Arc::clone(hit);
    }
    let computed = Arc::new(enumerate_partitions(n));
    let mut w = cache.write();
    Arc::clone(w.entry(n).or_insert(computed))
}

/// Restricted-growth-string enumeration.
fn enumerate_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut assignment = vec![0usize; n];
    loop {
        let num_blocks = assignment.iter().copied().max().unwrap() + 1;
        let mut blocks = vec![Vec::new(); num_blocks];
        for (i, &b) in assignment.iter().enumerate() {
            blocks[b].push(i);
        }
        out.push(blocks);
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            let max_prefix = assignment[..i].iter().copied().max().unwrap();
            if assignment[i] <= max_prefix {
                assignment[i] += 1;
                for a in assignment[i + 1..].iter_mut() {
                    *a = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Exhaustive, duplicate-free enumeration of the partitions of a clustered
/// set; the count is the Bell number of the element count.
pub fn partitions(set: &ClusteredSet) -> Result<Vec<Partition>, CombError> {
    if set.is_empty() {
        return Err(CombError::EmptySet);
    }
    let raw = raw_partitions(set.len());
    Ok(raw
        .iter()
        .map(|blocks| Partition {
            blocks: blocks
                .iter()
                .map(|block| block.iter().map(|&i| set.elements[i].clone()).collect())
                .collect(),
        })
        .collect())
}

/// Dissection of a linearly ordered label list: disjoint blocks covering it,
/// each carrying its induced order, listed by least element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dissection {
    pub blocks: Vec<Vec<Label>>,
}

impl Dissection {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// All dissections of `z` into at most `max_blocks` blocks. The empty list
/// has exactly one dissection with no blocks (the neutral element of the
/// expansion sums).
pub fn dissections(z: &[Label], max_blocks: usize) -> Vec<Dissection> {
    assert!(max_blocks >= 1);
    raw_partitions(z.len())
        .iter()
        .filter(|blocks| blocks.len() <= max_blocks || z.is_empty())
        .map(|blocks| Dissection {
            blocks: blocks
                .iter()
                .map(|block| block.iter().map(|&i| z[i]).collect())
                .collect(),
        })
        .collect()
}

/// Ordered tuple of positive parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composition {
    pub parts: Vec<usize>,
}

impl Composition {
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn sum(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Sign (−1)^k attached to a length-k composition in alternating sums.
    pub fn sign(&self) -> i64 {
        if self.parts.len() % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

/// All compositions with positive parts, total sum ≤ `n`, and length
/// ≤ `k_max`, in length-then-lexicographic order. Includes the empty
/// composition (k = 0).
pub fn compositions(n: usize, k_max: usize) -> Vec<Composition> {
    let mut out = vec![Composition { parts: Vec::new() }];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..k_max {
        let mut next = Vec::new();
        for prefix in &frontier {
            let used: usize = prefix.iter().sum();
            for part in 1..=(n.saturating_sub(used)) {
                let mut tuple = prefix.clone();
                tuple.push(part);
                next.push(tuple);
            }
        }
        out.extend(next.iter().cloned().map(|parts| Composition { parts }));
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    out
}
