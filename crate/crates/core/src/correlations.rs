//! Initial correlation families and their cluster correlation operators.
//!
//! A scenario supplies bounded, permutation-symmetric operators g_n for
//! 2 ≤ n ≤ some maximum (g₁ ≡ I by convention). Möbius inversion over set
//! partitions produces the connected family ĝ with ĝ₁ = I and
//!
//!   g_n = Σ_{partitions P of (1…n)} Π_{B ∈ P} ĝ_{|B|}(B),
//!
//! which extends the family consistently to any order by taking ĝ_m = 0
//! beyond the supplied maximum. The cluster correlation attached to a
//! clustered index set is the extended operator on its declusterized
//! labels; with this convention the solution series at t = 0 reproduces
//! the initial data g_s · ΠF₁⁰ and the chaos family stays ≡ I at every
//! order.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::comb::{self, ClusteredSet};
use crate::op::{Label, LabeledOperator, OpError};

#[derive(Debug, Error)]
pub enum CorrError {
    #[error(transparent)]
    Op(#[from] OpError),
    #[error("correlation orders must be contiguous from 2; missing g_{0}")]
    MissingOrder(usize),
    #[error("g_{order} must live on canonical labels 1..={order}")]
    BadLabels { order: usize },
    #[error("g_{order} is not permutation-symmetric: deviation {deviation:.3e}")]
    NotSymmetric { order: usize, deviation: f64 },
    #[error("requested order {requested} exceeds precomputed maximum {max}")]
    OrderTooLarge { requested: usize, max: usize },
}

const SYMMETRY_TOL: f64 = 1e-10;

/// Initial correlations g_n, their connected components ĝ_n, and the
/// extended family used as cluster correlations. Immutable after
/// construction; all orders up to `max_order` are precomputed.
#[derive(Debug, Clone)]
pub struct CorrelationFamily {
    dim: usize,
    supplied_max: usize,
    /// ĝ_n for n = 1..=supplied_max, canonical labels 1..n; ĝ₁ = I.
    connected: Vec<LabeledOperator>,
    /// Extended g_n for n = 1..=max_order, canonical labels 1..n.
    full: Vec<LabeledOperator>,
    /// max_n ‖g_n‖ over the supplied operators, recorded for diagnostics.
    op_norm_bound: f64,
}

impl CorrelationFamily {
    /// Build from supplied g_n for contiguous orders 2..=k (possibly none),
    /// precomputing the extension up to `max_order` particles.
    pub fn new(
        dim: usize,
        supplied: &BTreeMap<usize, LabeledOperator>,
        max_order: usize,
    ) -> Result<Self, CorrError> {
        let supplied_max = supplied.keys().copied().max().unwrap_or(1);
        for n in 2..=supplied_max {
            let g = supplied.get(&n).ok_or(CorrError::MissingOrder(n))?;
            let canonical: Vec<Label> = (1..=n as Label).collect();
            if g.labels() != canonical.as_slice() || g.dim() != dim {
                return Err(CorrError::BadLabels { order: n });
            }
            let deviation = g.symmetry_report().max_deviation;
            if deviation > SYMMETRY_TOL * g.trace_norm().max(1.0) {
                return Err(CorrError::NotSymmetric {
                    order: n,
                    deviation,
                });
            }
        }
        let op_norm_bound = supplied
            .values()
            .map(|g| g.operator_norm())
            .fold(1.0, f64::max);

        // Möbius inversion: ĝ_n = g_n − Σ_{|P| ≥ 2} Π ĝ_{|B|}(B), triangular
        // in n because proper partitions only use smaller blocks.
        let mut connected: Vec<LabeledOperator> =
            vec![LabeledOperator::identity(dim, &[1])];
        for n in 2..=supplied_max {
            let g_n = supplied.get(&n).unwrap().clone();
            let labels: Vec<Label> = (1..=n as Label).collect();
            let mut ghat = g_n;
            for partition in comb::raw_partitions(n).iter() {
                if partition.len() == 1 {
                    continue;
                }
                let term = partition_product(dim, &labels, partition, &connected, usize::MAX)?;
                if let Some(term) = term {
                    ghat = ghat.sub(&term)?;
                }
            }
            connected.push(ghat);
        }

        let max_order = max_order.max(supplied_max).max(1);
        let mut full = Vec::with_capacity(max_order);
        for n in 1..=max_order {
            let labels: Vec<Label> = (1..=n as Label).collect();
            let mut acc = LabeledOperator::identity(dim, &labels).zeros_like();
            for partition in comb::raw_partitions(n).iter() {
                if let Some(term) =
                    partition_product(dim, &labels, partition, &connected, supplied_max)?
                {
                    acc = acc.add(&term)?;
                }
            }
            full.push(acc);
        }

        Ok(Self {
            dim,
            supplied_max,
            connected,
            full,
            op_norm_bound,
        })
    }

    /// The chaos family: every g_n ≡ I, every ĝ_n = 0 for n ≥ 2.
    pub fn chaos(dim: usize, max_order: usize) -> Self {
        Self::new(dim, &BTreeMap::new(), max_order).expect("chaos family is well formed")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn supplied_max(&self) -> usize {
        self.supplied_max
    }

    pub fn max_order(&self) -> usize {
        self.full.len()
    }

    pub fn op_norm_bound(&self) -> f64 {
        self.op_norm_bound
    }

    /// True when every supplied correlation is the identity.
    pub fn is_chaos(&self) -> bool {
        self.connected
            .iter()
            .skip(1)
            .all(|ghat| ghat.trace_norm() < 1e-12)
    }

    /// Connected operator ĝ_n on canonical labels; zero beyond the supplied
    /// maximum, identity for n = 1.
    pub fn connected(&self, n: usize) -> Result<LabeledOperator, CorrError> {
        assert!(n >= 1);
        if n <= self.supplied_max {
            Ok(self.connected[n - 1].clone())
        } else {
            let labels: Vec<Label> = (1..=n as Label).collect();
            Ok(LabeledOperator::identity(self.dim, &labels).zeros_like())
        }
    }

    /// Extended correlation operator on canonical labels 1..n.
    pub fn full(&self, n: usize) -> Result<&LabeledOperator, CorrError> {
        if n == 0 || n > self.full.len() {
            return Err(CorrError::OrderTooLarge {
                requested: n,
                max: self.full.len(),
            });
        }
        Ok(&self.full[n - 1])
    }

    /// Extended correlation operator placed on an arbitrary label set.
    pub fn full_on(&self, labels: &[Label]) -> Result<LabeledOperator, CorrError> {
        let mut sorted = labels.to_vec();
        sorted.sort_unstable();
        Ok(self.full(sorted.len())?.relabeled(&sorted)?)
    }

    /// Cluster correlation g_{1+n}({Y}, X∖Y): the extended family evaluated
    /// on the declusterized labels.
    pub fn cluster_correlation(&self, set: &ClusteredSet) -> Result<LabeledOperator, CorrError> {
        self.full_on(&set.declusterize())
    }
}

/// Π_{B ∈ P} ĝ_{|B|} placed on the block labels and embedded into `labels`.
/// Returns `None` when some block exceeds `zero_beyond` (that product is 0);
/// identity factors (singletons) are skipped.
fn partition_product(
    dim: usize,
    labels: &[Label],
    partition: &[Vec<usize>],
    connected: &[LabeledOperator],
    zero_beyond: usize,
) -> Result<Option<LabeledOperator>, CorrError> {
    let mut acc = LabeledOperator::identity(dim, labels);
    for block in partition {
        if block.len() > zero_beyond || block.len() > connected.len() {
            return Ok(None);
        }
        if block.len() == 1 {
            continue;
        }
        let block_labels: Vec<Label> = block.iter().map(|&i| labels[i]).collect();
        let ghat = connected[block.len() - 1]
            .relabeled(&block_labels)?
            .embed(labels)?;
        acc = acc.matmul(&ghat)?;
    }
    Ok(Some(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn symmetric_probe(dim: usize, labels: &[Label], rng: &mut ChaCha12Rng) -> LabeledOperator {
        probe::random_hermitian(dim, labels, rng).symmetrize()
    }

    #[test]
    fn chaos_family_inverts_to_zero() {
        let fam = CorrelationFamily::chaos(2, 4);
        assert!(fam.is_chaos());
        assert!(fam.connected(2).unwrap().trace_norm() < 1e-14);
        for n in 1..=4 {
            let id = LabeledOperator::identity(2, fam.full(n).unwrap().labels());
            assert!(fam.full(n).unwrap().sub(&id).unwrap().trace_norm() < 1e-13);
        }
    }

    #[test]
    fn pair_inversion_subtracts_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let g2 = symmetric_probe(2, &[1, 2], &mut rng);
        let mut supplied = BTreeMap::new();
        supplied.insert(2, g2.clone());
        let fam = CorrelationFamily::new(2, &supplied, 3).unwrap();
        let expect = g2
            .sub(&LabeledOperator::identity(2, &[1, 2]))
            .unwrap();
        assert!(fam.connected(2).unwrap().sub(&expect).unwrap().trace_norm() < 1e-13);
    }

    #[test]
    fn inversion_round_trips_supplied_orders() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let mut supplied = BTreeMap::new();
        supplied.insert(2, symmetric_probe(2, &[1, 2], &mut rng));
        supplied.insert(3, symmetric_probe(2, &[1, 2, 3], &mut rng));
        supplied.insert(4, symmetric_probe(2, &[1, 2, 3, 4], &mut rng));
        let fam = CorrelationFamily::new(2, &supplied, 4).unwrap();
        for n in 2..=4 {
            let residual = fam
                .full(n)
                .unwrap()
                .sub(supplied.get(&n).unwrap())
                .unwrap()
                .trace_norm();
            assert!(residual < 1e-12, "order {n}: residual {residual:.3e}");
        }
    }

    #[test]
    fn extension_beyond_supplied_uses_connected_embeddings() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let g2 = symmetric_probe(2, &[1, 2], &mut rng);
        let mut supplied = BTreeMap::new();
        supplied.insert(2, g2.clone());
        let fam = CorrelationFamily::new(2, &supplied, 3).unwrap();
        // oracle: g₃ = I + Σ_{pairs} embed(ĝ₂) with ĝ₂ = g₂ − I
        let labels = [1u32, 2, 3];
        let ghat2 = g2.sub(&LabeledOperator::identity(2, &[1, 2])).unwrap();
        let mut expect = LabeledOperator::identity(2, &labels);
        for pair in [[1u32, 2], [1, 3], [2, 3]] {
            expect = expect
                .add(&ghat2.relabeled(&pair).unwrap().embed(&labels).unwrap())
                .unwrap();
        }
        assert!(fam.full(3).unwrap().sub(&expect).unwrap().trace_norm() < 1e-12);
    }

    #[test]
    fn cluster_correlation_of_pure_cluster_is_full_correlation() {
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let g2 = symmetric_probe(2, &[1, 2], &mut rng);
        let mut supplied = BTreeMap::new();
        supplied.insert(2, g2.clone());
        let fam = CorrelationFamily::new(2, &supplied, 3).unwrap();
        let set = ClusteredSet::cluster_with_singles(vec![1, 2], &[]).unwrap();
        let g = fam.cluster_correlation(&set).unwrap();
        assert!(g.sub(&g2).unwrap().trace_norm() < 1e-13);
    }

    #[test]
    fn missing_order_is_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        let mut supplied = BTreeMap::new();
        supplied.insert(3, symmetric_probe(2, &[1, 2, 3], &mut rng));
        assert!(matches!(
            CorrelationFamily::new(2, &supplied, 3),
            Err(CorrError::MissingOrder(2))
        ));
    }

    #[test]
    fn asymmetric_correlation_is_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(36);
        let g2 = probe::random_hermitian(2, &[1, 2], &mut rng);
        let mut supplied = BTreeMap::new();
        supplied.insert(2, g2);
        assert!(matches!(
            CorrelationFamily::new(2, &supplied, 2),
            Err(CorrError::NotSymmetric { .. })
        ));
    }
}
