//! Hamiltonians, von Neumann evolution groups, and their generators.
//!
//! The n-particle Hamiltonian is H_n = Σ_i K(i) + ε Σ_{i<j} Φ(i,j) with a
//! one-particle kinetic operator K, a swap-symmetric pair potential Φ, and
//! an interaction scaling ε ≥ 0. Evolution acts on operators by
//! conjugation, G_n(−t) f = e^{−itH_n} f e^{itH_n}; `System::evolve(t, …)`
//! implements exactly that map, so positive `t` is forward evolution of
//! states.
//!
//! Eigendecompositions are cached per particle count and shared across
//! threads; repeated propagation at many times dominates runtime, and each
//! extra time only costs small matrix products.

pub mod expansion;

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use thiserror::Error;

use crate::comb::CombError;
use crate::correlations::CorrError;
use crate::op::{Label, LabeledOperator, OpError, Propagator};

#[derive(Debug, Error)]
pub enum DynError {
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Comb(#[from] CombError),
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error("kinetic operator must be a one-particle Hermitian matrix")]
    BadKinetic,
    #[error("pair potential must be a two-particle Hermitian matrix")]
    BadPotential,
    #[error("pair potential is not swap-symmetric: deviation {0:.3e}")]
    PotentialNotSwapSymmetric(f64),
    #[error("interaction scaling must be nonnegative, got {0}")]
    BadEpsilon(f64),
    #[error("order not supported: n = {n} exceeds configured maximum {n_max}")]
    OrderNotSupported { n: usize, n_max: usize },
    #[error("operator labels {f_labels:?} do not contain {required:?}")]
    MissingLabels {
        f_labels: Vec<Label>,
        required: Vec<Label>,
    },
}

const HERMITICITY_TOL: f64 = 1e-10;

/// Kinetic operator, pair potential, and interaction scaling.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    kinetic: LabeledOperator,
    potential: LabeledOperator,
    epsilon: f64,
}

impl HamiltonianSpec {
    /// `kinetic` on canonical label 1, `potential` on canonical labels 1, 2.
    pub fn new(
        kinetic: LabeledOperator,
        potential: LabeledOperator,
        epsilon: f64,
    ) -> Result<Self, DynError> {
        if kinetic.labels() != [1] || kinetic.hermiticity_deviation() > HERMITICITY_TOL {
            return Err(DynError::BadKinetic);
        }
        if potential.labels() != [1, 2]
            || potential.dim() != kinetic.dim()
            || potential.hermiticity_deviation() > HERMITICITY_TOL
        {
            return Err(DynError::BadPotential);
        }
        let swap_dev = potential.symmetry_report().max_deviation;
        if swap_dev > HERMITICITY_TOL * potential.trace_norm().max(1.0) {
            return Err(DynError::PotentialNotSwapSymmetric(swap_dev));
        }
        if !(epsilon >= 0.0) {
            return Err(DynError::BadEpsilon(epsilon));
        }
        Ok(Self {
            kinetic,
            potential,
            epsilon,
        })
    }

    pub fn kinetic(&self) -> &LabeledOperator {
        &self.kinetic
    }

    pub fn potential(&self) -> &LabeledOperator {
        &self.potential
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.kinetic.dim()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, DynError> {
        Self::new(self.kinetic.clone(), self.potential.clone(), epsilon)
    }
}

/// A Hamiltonian spec plus shared caches of n-particle Hamiltonians and
/// their eigendecompositions. Cache fills are idempotent; concurrent reads
/// are cheap.
pub struct System {
    spec: HamiltonianSpec,
    hamiltonians: RwLock<HashMap<usize, Arc<LabeledOperator>>>,
    propagators: RwLock<HashMap<usize, Arc<Propagator>>>,
    free_propagator: Arc<Propagator>,
}

/// Which commutator generator −i[·, f] to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// −N(j): kinetic generator of particle j.
    Free(Label),
    /// −N_int(j₁, j₂): interaction generator of the pair.
    Interaction(Label, Label),
    /// −N_n: full generator on every label of the operand.
    Full,
}

impl System {
    pub fn new(spec: HamiltonianSpec) -> Result<Self, DynError> {
        let free_propagator = Arc::new(Propagator::new(spec.kinetic())?);
        Ok(Self {
            spec,
            hamiltonians: RwLock::new(HashMap::new()),
            propagators: RwLock::new(HashMap::new()),
            free_propagator,
        })
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn epsilon(&self) -> f64 {
        self.spec.epsilon
    }

    /// H_n on canonical labels 1..n.
    pub fn hamiltonian(&self, n: usize) -> Arc<LabeledOperator> {
        assert!(n >= 1);
        if let Some(hit) = self.hamiltonians.read().get(&n) {
            return Arc::clone(hit);
        }
        let labels: Vec<Label> = (1..=n as Label).collect();
        let built = Arc::new(self.hamiltonian_on(&labels).expect("canonical labels"));
        let mut w = self.hamiltonians.write();
        Arc::clone(w.entry(n).or_insert(built))
    }

    /// H over an arbitrary sorted label set: Σ K(i) + ε Σ_{i<j} Φ(i,j).
    pub fn hamiltonian_on(&self, labels: &[Label]) -> Result<LabeledOperator, DynError> {
        let mut h = LabeledOperator::identity(self.dim(), labels).zeros_like();
        for &i in labels {
            h = h.add(&self.spec.kinetic.relabeled(&[i])?.embed(labels)?)?;
        }
        if self.spec.epsilon != 0.0 {
            for (a, &i) in labels.iter().enumerate() {
                for &j in labels.iter().skip(a + 1) {
                    let phi = self.spec.potential.relabeled(&[i, j])?.embed(labels)?;
                    h = h.add(&phi.scale_re(self.spec.epsilon))?;
                }
            }
        }
        Ok(h)
    }

    /// Cached eigendecomposition of H_n.
    pub fn propagator(&self, n: usize) -> Arc<Propagator> {
        if let Some(hit) = self.propagators.read().get(&n) {
            return Arc::clone(hit);
        }
        let h = self.hamiltonian(n);
        let built = Arc::new(Propagator::new(&h).expect("H_n is Hermitian"));
        let mut w = self.propagators.write();
        Arc::clone(w.entry(n).or_insert(built))
    }

    /// G_{|block|}(−t, block) f: conjugation by exp(−i t H_block) embedded
    /// at the block labels inside f. The block evolves under the
    /// Hamiltonian built on its own labels only.
    pub fn evolve(
        &self,
        t: f64,
        block: &[Label],
        f: &LabeledOperator,
    ) -> Result<LabeledOperator, DynError> {
        let missing: Vec<Label> = block
            .iter()
            .copied()
            .filter(|l| !f.labels().contains(l))
            .collect();
        if !missing.is_empty() {
            return Err(DynError::MissingLabels {
                f_labels: f.labels().to_vec(),
                required: missing,
            });
        }
        let mut sorted = block.to_vec();
        sorted.sort_unstable();
        let u = self
            .propagator(sorted.len())
            .unitary(t)
            .relabeled(&sorted)?;
        Ok(f.conjugated_by(&u)?)
    }

    /// One-particle free group G₁(−t, label) f, generated by K alone.
    pub fn free_evolve(
        &self,
        t: f64,
        label: Label,
        f: &LabeledOperator,
    ) -> Result<LabeledOperator, DynError> {
        if !f.labels().contains(&label) {
            return Err(DynError::MissingLabels {
                f_labels: f.labels().to_vec(),
                required: vec![label],
            });
        }
        let u = self.free_propagator.unitary(t).relabeled(&[label])?;
        Ok(f.conjugated_by(&u)?)
    }

    /// exp(−i t K) placed on the given label.
    pub fn free_unitary(&self, t: f64, label: Label) -> LabeledOperator {
        self.free_propagator
            .unitary(t)
            .relabeled(&[label])
            .expect("single label")
    }

    /// Generator action −i[H_part, f].
    pub fn generator(
        &self,
        kind: GeneratorKind,
        f: &LabeledOperator,
    ) -> Result<LabeledOperator, DynError> {
        let h_part = match kind {
            GeneratorKind::Free(j) => self.spec.kinetic.relabeled(&[j])?.embed(f.labels())?,
            GeneratorKind::Interaction(j1, j2) => {
                let mut pair = [j1, j2];
                pair.sort_unstable();
                self.spec
                    .potential
                    .relabeled(&pair)?
                    .embed(f.labels())?
            }
            GeneratorKind::Full => self.hamiltonian_on(f.labels())?,
        };
        Ok(f.minus_i_commutator_with(&h_part)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::op::C64;
    use crate::probe;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub(crate) fn test_spec(epsilon: f64, seed: u64) -> HamiltonianSpec {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let kinetic = LabeledOperator::new(
            2,
            vec![1],
            array![[c(0., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
        )
        .unwrap();
        let potential = probe::random_hermitian(2, &[1, 2], &mut rng).symmetrize();
        HamiltonianSpec::new(kinetic, potential, epsilon).unwrap()
    }

    #[test]
    fn hamiltonian_of_one_particle_is_kinetic() {
        let sys = System::new(test_spec(0.3, 40)).unwrap();
        let h1 = sys.hamiltonian(1);
        assert!(h1.sub(sys.spec().kinetic()).unwrap().trace_norm() < 1e-14);
    }

    #[test]
    fn free_two_particle_hamiltonian_is_kronecker_sum() {
        let sys = System::new(test_spec(0.0, 41)).unwrap();
        let h2 = sys.hamiltonian(2);
        let k = sys.spec().kinetic();
        let expect = k
            .embed(&[1, 2])
            .unwrap()
            .add(&k.relabeled(&[2]).unwrap().embed(&[1, 2]).unwrap())
            .unwrap();
        assert!(h2.sub(&expect).unwrap().trace_norm() < 1e-14);
    }

    #[test]
    fn three_particle_hamiltonian_matches_index_oracle() {
        let sys = System::new(test_spec(0.7, 42)).unwrap();
        let h3 = sys.hamiltonian(3);
        // brute-force oracle: H[(i1 i2 i3),(j1 j2 j3)] assembled by explicit
        // delta bookkeeping over the three kinetic and three pair terms.
        let k = sys.spec().kinetic().mat().clone();
        let phi = sys.spec().potential().mat().clone();
        let eps = sys.epsilon();
        let d = 2usize;
        for row in 0..8 {
            for col in 0..8 {
                let (i1, i2, i3) = (row / 4, (row / 2) % d, row % d);
                let (j1, j2, j3) = (col / 4, (col / 2) % d, col % d);
                let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                let mut expect = c(0., 0.);
                expect += k[(i1, j1)] * delta(i2, j2) * delta(i3, j3);
                expect += k[(i2, j2)] * delta(i1, j1) * delta(i3, j3);
                expect += k[(i3, j3)] * delta(i1, j1) * delta(i2, j2);
                expect += phi[(d * i1 + i2, d * j1 + j2)] * delta(i3, j3) * eps;
                expect += phi[(d * i1 + i3, d * j1 + j3)] * delta(i2, j2) * eps;
                expect += phi[(d * i2 + i3, d * j2 + j3)] * delta(i1, j1) * eps;
                assert!((h3.mat()[(row, col)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn evolution_at_zero_time_is_identity() {
        let sys = System::new(test_spec(0.4, 43)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let f = probe::random_hermitian(2, &[1, 2], &mut rng);
        let evolved = sys.evolve(0.0, &[1, 2], &f).unwrap();
        assert!(evolved.sub(&f).unwrap().trace_norm() < 1e-13);
    }

    #[test]
    fn evolution_preserves_trace_norm_and_semigroup_law() {
        let sys = System::new(test_spec(0.4, 45)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(46);
        let f = probe::random_operator(2, &[1, 2], &mut rng);
        let evolved = sys.evolve(0.8, &[1, 2], &f).unwrap();
        assert!((evolved.trace_norm() - f.trace_norm()).abs() < 1e-11);
        let two_step = sys
            .evolve(0.5, &[1, 2], &sys.evolve(0.3, &[1, 2], &f).unwrap())
            .unwrap();
        assert!(two_step.sub(&evolved).unwrap().trace_norm() < 1e-11);
        // forward then backward is the identity; guards the sign convention
        let back = sys.evolve(-0.8, &[1, 2], &evolved).unwrap();
        assert!(back.sub(&f).unwrap().trace_norm() < 1e-11);
    }

    #[test]
    fn free_evolution_factorizes_over_particles() {
        let sys = System::new(test_spec(0.0, 47)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(48);
        let a = probe::random_hermitian(2, &[1], &mut rng);
        let b = probe::random_hermitian(2, &[2], &mut rng);
        let full = sys.evolve(0.9, &[1, 2], &a.tensor(&b).unwrap()).unwrap();
        let fa = sys.evolve(0.9, &[1], &a).unwrap();
        let fb = sys.evolve(0.9, &[2], &b).unwrap();
        assert!(full.sub(&fa.tensor(&fb).unwrap()).unwrap().trace_norm() < 1e-11);
    }

    #[test]
    fn generator_of_commuting_pair_vanishes() {
        let sys = System::new(test_spec(0.4, 49)).unwrap();
        // K is diagonal; a diagonal f commutes with it
        let f = LabeledOperator::new(
            2,
            vec![1],
            array![[c(0.2, 0.), c(0., 0.)], [c(0., 0.), c(0.9, 0.)]],
        )
        .unwrap();
        let g = sys.generator(GeneratorKind::Free(1), &f).unwrap();
        assert!(g.trace_norm() < 1e-14);
    }

    #[test]
    fn generator_is_time_derivative_of_group() {
        let sys = System::new(test_spec(0.4, 50)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        let f = probe::random_hermitian(2, &[1, 2], &mut rng);
        let gen = sys.generator(GeneratorKind::Full, &f).unwrap();
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&t| {
                let fd = sys
                    .evolve(t, &[1, 2], &f)
                    .unwrap()
                    .sub(&f)
                    .unwrap()
                    .scale_re(1.0 / t);
                fd.sub(&gen).unwrap().trace_norm()
            })
            .collect();
        // O(t) Richardson error: halving t roughly halves the defect
        assert!(errs[0] / errs[1] > 1.7 && errs[0] / errs[1] < 2.3);
        assert!(errs[1] / errs[2] > 1.7 && errs[1] / errs[2] < 2.3);
    }

    #[test]
    fn full_generator_is_sum_of_parts() {
        let sys = System::new(test_spec(0.7, 52)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        let f = probe::random_hermitian(2, &[1, 2, 3], &mut rng);
        let full = sys.generator(GeneratorKind::Full, &f).unwrap();
        let mut acc = f.zeros_like();
        for j in 1..=3 {
            acc = acc
                .add(&sys.generator(GeneratorKind::Free(j), &f).unwrap())
                .unwrap();
        }
        for (j1, j2) in [(1, 2), (1, 3), (2, 3)] {
            let int = sys
                .generator(GeneratorKind::Interaction(j1, j2), &f)
                .unwrap();
            acc = acc.add(&int.scale_re(sys.epsilon())).unwrap();
        }
        assert!(full.sub(&acc).unwrap().trace_norm() < 1e-12);
    }

    #[test]
    fn generator_rejects_missing_labels() {
        let sys = System::new(test_spec(0.4, 54)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let f = probe::random_hermitian(2, &[1, 2], &mut rng);
        assert!(sys.generator(GeneratorKind::Free(5), &f).is_err());
        assert!(sys.evolve(0.1, &[3], &f).is_err());
    }

    #[test]
    fn asymmetric_potential_is_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(56);
        let kinetic = probe::random_hermitian(2, &[1], &mut rng);
        let potential = probe::random_hermitian(2, &[1, 2], &mut rng);
        assert!(matches!(
            HamiltonianSpec::new(kinetic, potential, 0.1),
            Err(DynError::PotentialNotSwapSymmetric(_))
        ));
    }
}
