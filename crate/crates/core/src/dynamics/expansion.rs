//! Cumulants of evolution groups, scattering cumulants, and the generated
//! evolution operators of the kinetic cluster expansions.
//!
//! The (1+n)-th order cumulant over a clustered set ({Y}, s+1, …, s+n) is
//! the Möbius-weighted alternating sum over partitions of blockwise group
//! conjugations; the scattering cumulant composes a forward cumulant with
//! multiplication by a cluster correlation and per-particle backward free
//! evolutions. Generated evolution operators are represented symbolically
//! as expansions — lists of (rational coefficient, ordered product of
//! scattering-cumulant atoms) — obtained by solving the kinetic cluster
//! expansion recurrence triangularly. A direct evaluator of the closed-form
//! alternating sum exists for n ≤ 2 as a cross-check.
//!
//! Dissection blocks are assigned to strictly increasing particle indices
//! in the recurrence sums, and to distinct indices with a 1/|D|! weight in
//! the closed form; both reproduce the same traced functionals of
//! identical-slot products, which is the only way they are consumed
//! downstream.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use itertools::Itertools;
use num_rational::Rational64;
use parking_lot::RwLock;

use crate::comb::{self, ClusteredSet};
use crate::correlations::CorrelationFamily;
use crate::dynamics::{DynError, System};
use crate::op::{Label, LabeledOperator};

/// Order descriptor of a cumulant: cluster size s, added particles n,
/// evaluation time t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantOrder {
    pub s: usize,
    pub n: usize,
    pub t: f64,
}

/// Default cap on the order of generated evolution operators; 3 is allowed
/// for small one-particle dimensions.
pub const DEFAULT_GENERATED_ORDER_MAX: usize = 2;

/// Scattering cumulant Ă_{1+|added|}(t, cluster, added) as an atomic factor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScatteringAtom {
    pub cluster: Vec<Label>,
    pub added: Vec<Label>,
}

impl ScatteringAtom {
    pub fn support(&self) -> Vec<Label> {
        let mut all = self.cluster.clone();
        all.extend_from_slice(&self.added);
        all
    }

    fn commutes_with(&self, other: &Self) -> bool {
        let mine = self.support();
        !other.support().iter().any(|l| mine.contains(l))
    }
}

/// One product term: coefficient times an ordered factor product; the first
/// factor acts last (leftmost in operator notation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub coeff: Rational64,
    pub factors: Vec<ScatteringAtom>,
}

/// Finite linear combination of scattering-cumulant products.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Expansion {
    pub terms: Vec<Term>,
}

impl Expansion {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The single atom Ă(cluster, added) with coefficient one.
    pub fn atom(cluster: &[Label], added: &[Label]) -> Self {
        Self {
            terms: vec![Term {
                coeff: Rational64::from_integer(1),
                factors: vec![ScatteringAtom {
                    cluster: cluster.to_vec(),
                    added: added.to_vec(),
                }],
            }],
        }
    }

    /// The empty product (identity map) with coefficient one.
    pub fn one() -> Self {
        Self {
            terms: vec![Term {
                coeff: Rational64::from_integer(1),
                factors: Vec::new(),
            }],
        }
    }

    pub fn scaled(&self, c: Rational64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff * c,
                    factors: t.factors.clone(),
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { terms }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(Rational64::from_integer(-1)))
    }

    /// Term-by-term operator product: (Σ aᵢ Aᵢ)(Σ bⱼ Bⱼ) = Σ aᵢbⱼ AᵢBⱼ.
    pub fn product(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut factors = a.factors.clone();
                factors.extend(b.factors.iter().cloned());
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    factors,
                });
            }
        }
        Self { terms }
    }

    /// Normal form under the commutation of disjoint-support factors:
    /// adjacent commuting factors are sorted, equal factor products merged,
    /// zero terms dropped, terms ordered. Two expansions that are equal as
    /// formal sums of (possibly commuted) products canonicalize identically.
    pub fn canonical(&self) -> Self {
        let mut terms: Vec<Term> = self
            .terms
            .iter()
            .map(|t| {
                let mut factors = t.factors.clone();
                loop {
                    let mut swapped = false;
                    for i in 1..factors.len() {
                        if factors[i - 1].commutes_with(&factors[i])
                            && factors[i] < factors[i - 1]
                        {
                            factors.swap(i - 1, i);
                            swapped = true;
                        }
                    }
                    if !swapped {
                        break;
                    }
                }
                Term {
                    coeff: t.coeff,
                    factors,
                }
            })
            .collect();
        terms.sort_by(|a, b| a.factors.cmp(&b.factors));
        let mut merged: Vec<Term> = Vec::new();
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.factors == t.factors => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != Rational64::from_integer(0));
        Self { terms: merged }
    }

    /// Evaluate the expansion on an operator: factors act right to left.
    pub fn apply(
        &self,
        sys: &System,
        corr: &CorrelationFamily,
        t: f64,
        f: &LabeledOperator,
    ) -> Result<LabeledOperator, DynError> {
        let mut acc = f.zeros_like();
        for term in &self.terms {
            let mut x = f.clone();
            for atom in term.factors.iter().rev() {
                x = scattering_apply(sys, corr, t, &atom.cluster, &atom.added, &x)?;
            }
            let c = *term.coeff.numer() as f64 / *term.coeff.denom() as f64;
            acc = acc.add(&x.scale_re(c))?;
        }
        Ok(acc)
    }
}

impl fmt::Display for Expansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, term) in self.terms.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "({}) ", term.coeff)?;
            if term.factors.is_empty() {
                write!(f, "1")?;
            }
            for atom in &term.factors {
                write!(
                    f,
                    "S({};{})",
                    atom.cluster.iter().join(","),
                    atom.added.iter().join(",")
                )?;
            }
        }
        Ok(())
    }
}

/// Cumulant 𝔄_{1+n}(−t, set) applied to `f`: the Möbius-weighted sum over
/// partitions of blockwise evolutions, each block under the Hamiltonian
/// built on its own declusterized labels.
pub fn cumulant_apply_on(
    sys: &System,
    t: f64,
    set: &ClusteredSet,
    f: &LabeledOperator,
) -> Result<LabeledOperator, DynError> {
    let mut acc = f.zeros_like();
    for partition in comb::partitions(set)? {
        let coeff = comb::mobius_coefficient(partition.num_blocks()) as f64;
        let mut x = f.clone();
        for block in &partition.blocks {
            let mut labels: Vec<Label> = block.iter().flat_map(|e| e.labels()).collect();
            labels.sort_unstable();
            x = sys.evolve(t, &labels, &x)?;
        }
        acc = acc.add(&x.scale_re(coeff))?;
    }
    Ok(acc)
}

/// Cumulant on the canonical clustered set ({1…s}, s+1, …, s+n).
pub fn cumulant_apply(
    sys: &System,
    order: &CumulantOrder,
    f: &LabeledOperator,
) -> Result<LabeledOperator, DynError> {
    let cluster: Vec<Label> = (1..=order.s as Label).collect();
    let added: Vec<Label> = ((order.s + 1) as Label..=(order.s + order.n) as Label).collect();
    let set = ClusteredSet::cluster_with_singles(cluster, &added)?;
    cumulant_apply_on(sys, order.t, &set, f)
}

/// Scattering cumulant Ă_{1+n}(t, cluster, added) applied to `f`:
/// per-particle backward free evolutions, multiplication by the cluster
/// correlation, then the forward cumulant.
pub fn scattering_apply(
    sys: &System,
    corr: &CorrelationFamily,
    t: f64,
    cluster: &[Label],
    added: &[Label],
    f: &LabeledOperator,
) -> Result<LabeledOperator, DynError> {
    let set = ClusteredSet::cluster_with_singles(cluster.to_vec(), added)?;
    let support = set.declusterize();
    let mut x = f.clone();
    for &i in &support {
        x = sys.free_evolve(-t, i, &x)?;
    }
    let g = corr.full_on(&support)?;
    x = x.left_mul_embedded(&g)?;
    cumulant_apply_on(sys, t, &set, &x)
}

/// Scattering cumulant on the canonical clustered set.
pub fn scattering_cumulant(
    sys: &System,
    corr: &CorrelationFamily,
    order: &CumulantOrder,
    f: &LabeledOperator,
) -> Result<LabeledOperator, DynError> {
    let cluster: Vec<Label> = (1..=order.s as Label).collect();
    let added: Vec<Label> = ((order.s + 1) as Label..=(order.s + order.n) as Label).collect();
    scattering_apply(sys, corr, order.t, &cluster, &added, f)
}

fn rational(num: i64, den: i64) -> Rational64 {
    Rational64::new(num, den)
}

/// The dissection sums multiplying 𝔊_{1+n−n₁} in the cluster-expansion
/// recurrence: dissections of the last n₁ labels into at most s+n−n₁
/// blocks, blocks paired with strictly increasing particle indices, each
/// block weighted by 1/|X|!.
fn index_sum_expansion(s: usize, n: usize, n1: usize) -> Expansion {
    let cap = s + n - n1;
    let z: Vec<Label> = ((s + n - n1 + 1) as Label..=(s + n) as Label).collect();
    let mut out = Expansion::zero();
    for d in comb::dissections(&z, cap) {
        let m = d.num_blocks();
        if m == 0 {
            out.terms.push(Term {
                coeff: rational(1, 1),
                factors: Vec::new(),
            });
            continue;
        }
        let mut weight = rational(1, 1);
        for block in &d.blocks {
            weight /= Rational64::from_integer(comb::factorial(block.len()) as i64);
        }
        for combo in (1..=cap as Label).combinations(m) {
            let factors = combo
                .iter()
                .zip(d.blocks.iter())
                .map(|(&i, block)| ScatteringAtom {
                    cluster: vec![i],
                    added: block.clone(),
                })
                .collect();
            out.terms.push(Term {
                coeff: weight,
                factors,
            });
        }
    }
    out
}

/// Generated evolution operator 𝔊_{1+n}(t, {1…s}, s+1…s+n) as an expansion
/// in scattering cumulants, obtained by solving the kinetic cluster
/// expansion recurrence triangularly in n. Cached per (s, n).
pub fn generated_expansion(s: usize, n: usize) -> Arc<Expansion> {
    static CACHE: OnceLock<RwLock<HashMap<(usize, usize), Arc<Expansion>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(hit) = cache.read().get(&(s, n)) {
        return Arc::clone(hit);
    }
    let cluster: Vec<Label> = (1..=s as Label).collect();
    let added: Vec<Label> = ((s + 1) as Label..=(s + n) as Label).collect();
    let mut exp = Expansion::atom(&cluster, &added);
    for n1 in 1..=n {
        let sub = generated_expansion(s, n - n1);
        let w = index_sum_expansion(s, n, n1);
        let coeff = rational(
            (comb::factorial(n) / comb::factorial(n - n1)) as i64,
            1,
        );
        exp = exp.sub(&sub.product(&w).scaled(coeff));
    }
    let built = Arc::new(exp);
    let mut w = cache.write();
    Arc::clone(w.entry((s, n)).or_insert(built))
}

/// Generated evolution operator with the configured order cap; errors above.
pub fn generated_evolution(order: &CumulantOrder, n_max: usize) -> Result<Arc<Expansion>, DynError> {
    if order.n > n_max {
        return Err(DynError::OrderNotSupported {
            n: order.n,
            n_max,
        });
    }
    Ok(generated_expansion(order.s, order.n))
}

/// Direct evaluation of the closed-form alternating sum for 𝔊_{1+n},
/// n ≤ 2: for every composition (n₁,…,n_k) a leading scattering cumulant
/// times k dissection factors with distinct-index sums weighted by 1/|D|!,
/// later-chopped chunks composed leftward.
pub fn generated_expansion_closed(s: usize, n: usize) -> Result<Expansion, DynError> {
    if n > 2 {
        return Err(DynError::OrderNotSupported { n, n_max: 2 });
    }
    let cluster: Vec<Label> = (1..=s as Label).collect();
    let mut total = Expansion::zero();
    for comp in comb::compositions(n, n) {
        let k = comp.len();
        let consumed = comp.sum();
        let r = n - consumed;
        let leading_added: Vec<Label> = ((s + 1) as Label..=(s + r) as Label).collect();
        let lead_coeff = rational(
            comp.sign() * comb::factorial(n) as i64,
            comb::factorial(r) as i64,
        );
        let mut term_exp = Expansion::atom(&cluster, &leading_added).scaled(lead_coeff);
        let mut factor_blocks: Vec<Expansion> = Vec::with_capacity(k);
        for j in 1..=k {
            let prefix_j: usize = comp.parts[..j].iter().sum();
            let prefix_prev: usize = comp.parts[..j - 1].iter().sum();
            let cap = s + n - prefix_j;
            let z: Vec<Label> =
                ((s + n - prefix_j + 1) as Label..=(s + n - prefix_prev) as Label).collect();
            let mut fj = Expansion::zero();
            for d in comb::dissections(&z, cap) {
                let m = d.num_blocks();
                let mut weight = rational(1, comb::factorial(m) as i64);
                for block in &d.blocks {
                    weight /= Rational64::from_integer(comb::factorial(block.len()) as i64);
                }
                for idx in (1..=cap as Label).permutations(m) {
                    let factors = idx
                        .iter()
                        .zip(d.blocks.iter())
                        .map(|(&i, block)| ScatteringAtom {
                            cluster: vec![i],
                            added: block.clone(),
                        })
                        .collect();
                    fj.terms.push(Term {
                        coeff: weight,
                        factors,
                    });
                }
            }
            factor_blocks.push(fj);
        }
        for fj in factor_blocks.into_iter().rev() {
            term_exp = term_exp.product(&fj);
        }
        total = total.add(&term_exp);
    }
    Ok(total)
}

/// Right-hand side of the kinetic cluster expansion for Ă_{1+n}: the sum
/// over n₁ of (n!/(n−n₁)!) 𝔊_{1+n−n₁} times the dissection index sums.
pub fn kce_rhs_expansion(s: usize, n: usize) -> Expansion {
    let mut rhs = Expansion::zero();
    for n1 in 0..=n {
        let coeff = rational(
            (comb::factorial(n) / comb::factorial(n - n1)) as i64,
            1,
        );
        let g = generated_expansion(s, n - n1);
        let w = index_sum_expansion(s, n, n1);
        rhs = rhs.add(&g.product(&w).scaled(coeff));
    }
    rhs
}

/// Max trace-norm residual of (LHS − RHS) of the kinetic cluster expansion
/// applied to the given probes on labels 1..s+n.
pub fn kce_residual(
    sys: &System,
    corr: &CorrelationFamily,
    t: f64,
    s: usize,
    n: usize,
    probes: &[LabeledOperator],
) -> Result<f64, DynError> {
    let cluster: Vec<Label> = (1..=s as Label).collect();
    let added: Vec<Label> = ((s + 1) as Label..=(s + n) as Label).collect();
    let rhs = kce_rhs_expansion(s, n);
    let mut worst: f64 = 0.0;
    for probe in probes {
        let lhs_val = scattering_apply(sys, corr, t, &cluster, &added, probe)?;
        let rhs_val = rhs.apply(sys, corr, t, probe)?;
        worst = worst.max(lhs_val.sub(&rhs_val)?.trace_norm());
    }
    Ok(worst)
}

/// Max residual of the inverse cluster identity Σ_P Π_B 𝔄_{|B|}(−t, B) =
/// G(−t) over the whole declusterized label set, on the given probes.
pub fn cumulant_inverse_residual(
    sys: &System,
    t: f64,
    set: &ClusteredSet,
    probes: &[LabeledOperator],
) -> Result<f64, DynError> {
    let mut all_labels = set.declusterize();
    all_labels.sort_unstable();
    let mut worst: f64 = 0.0;
    for probe in probes {
        let mut lhs = probe.zeros_like();
        for partition in comb::partitions(set)? {
            let mut x = probe.clone();
            for block in &partition.blocks {
                let block_set = ClusteredSet::new(block.clone())?;
                x = cumulant_apply_on(sys, t, &block_set, &x)?;
            }
            lhs = lhs.add(&x)?;
        }
        let rhs = sys.evolve(t, &all_labels, probe)?;
        worst = worst.max(lhs.sub(&rhs)?.trace_norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::HamiltonianSpec;
    use crate::op::C64;
    use crate::probe;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::collections::BTreeMap;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn test_system(epsilon: f64, seed: u64) -> System {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let kinetic = LabeledOperator::new(
            2,
            vec![1],
            array![[c(0., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
        )
        .unwrap();
        let potential = probe::random_hermitian(2, &[1, 2], &mut rng).symmetrize();
        System::new(HamiltonianSpec::new(kinetic, potential, epsilon).unwrap()).unwrap()
    }

    fn correlated_family(dim: usize, max_order: usize, seed: u64) -> CorrelationFamily {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let g2 = LabeledOperator::identity(dim, &[1, 2])
            .add(
                &probe::random_hermitian(dim, &[1, 2], &mut rng)
                    .symmetrize()
                    .scale_re(0.2),
            )
            .unwrap();
        let mut supplied = BTreeMap::new();
        supplied.insert(2, g2);
        CorrelationFamily::new(dim, &supplied, max_order).unwrap()
    }

    #[test]
    fn first_cumulant_is_the_full_group() {
        let sys = test_system(0.4, 60);
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        let f = probe::random_hermitian(2, &[1, 2], &mut rng);
        let order = CumulantOrder { s: 2, n: 0, t: 0.7 };
        let cum = cumulant_apply(&sys, &order, &f).unwrap();
        let group = sys.evolve(0.7, &[1, 2], &f).unwrap();
        assert!(cum.sub(&group).unwrap().trace_norm() < 1e-12);
    }

    #[test]
    fn cumulants_vanish_at_zero_time() {
        let sys = test_system(0.4, 62);
        let mut rng = ChaCha12Rng::seed_from_u64(63);
        for (s, n) in [(1, 1), (1, 2), (2, 1)] {
            let labels: Vec<Label> = (1..=(s + n) as Label).collect();
            let f = probe::random_hermitian(2, &labels, &mut rng);
            let cum = cumulant_apply(&sys, &CumulantOrder { s, n, t: 0.0 }, &f).unwrap();
            assert!(cum.trace_norm() < 1e-12, "s={s} n={n}");
        }
    }

    #[test]
    fn cumulants_of_free_groups_vanish() {
        let sys = test_system(0.0, 64);
        let mut rng = ChaCha12Rng::seed_from_u64(65);
        let f = probe::random_hermitian(2, &[1, 2, 3], &mut rng);
        let cum = cumulant_apply(&sys, &CumulantOrder { s: 1, n: 2, t: 0.6 }, &f).unwrap();
        assert!(cum.trace_norm() < 1e-11);
    }

    #[test]
    fn cumulant_norm_shrinks_with_interaction_scale() {
        let mut rng = ChaCha12Rng::seed_from_u64(66);
        let f = probe::random_hermitian(2, &[1, 2], &mut rng);
        let mut norms = Vec::new();
        for eps in [1e-1, 1e-2, 1e-3] {
            let sys = test_system(eps, 66);
            let cum = cumulant_apply(&sys, &CumulantOrder { s: 1, n: 1, t: 0.5 }, &f).unwrap();
            norms.push(cum.trace_norm());
        }
        assert!(norms[0] > norms[1] && norms[1] > norms[2]);
        // roughly first order in ε
        assert!(norms[0] / norms[1] > 5.0 && norms[1] / norms[2] > 5.0);
    }

    #[test]
    fn inverse_cluster_identity_reconstructs_the_group() {
        let sys = test_system(0.5, 67);
        let probes = probe::probe_set(2, &[1, 2, 3], 68);
        let set = ClusteredSet::cluster_with_singles(vec![1, 2], &[3]).unwrap();
        let res = cumulant_inverse_residual(&sys, 0.4, &set, &probes[..4]).unwrap();
        assert!(res < 1e-10, "residual {res:.3e}");
    }

    #[test]
    fn scattering_cumulant_at_zero_multiplies_by_correlation() {
        let sys = test_system(0.4, 69);
        let corr = correlated_family(2, 3, 70);
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let f = probe::random_hermitian(2, &[1, 2], &mut rng);
        let got = scattering_cumulant(&sys, &corr, &CumulantOrder { s: 2, n: 0, t: 0.0 }, &f)
            .unwrap();
        let expect = f.left_mul_embedded(corr.full(2).unwrap()).unwrap();
        assert!(got.sub(&expect).unwrap().trace_norm() < 1e-12);
    }

    #[test]
    fn scattering_cumulant_vanishes_for_chaos_free_case() {
        let sys = test_system(0.0, 72);
        let corr = CorrelationFamily::chaos(2, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(73);
        let f = probe::random_hermitian(2, &[1, 2], &mut rng);
        let got = scattering_cumulant(&sys, &corr, &CumulantOrder { s: 1, n: 1, t: 0.8 }, &f)
            .unwrap();
        assert!(got.trace_norm() < 1e-11);
    }

    #[test]
    fn scattering_cumulant_matches_three_factor_composition() {
        // compose the three factors independently: cumulant of the pair set
        // expanded by hand, correlation multiplication, free backward turns
        let sys = test_system(0.3, 74);
        let corr = correlated_family(2, 3, 75);
        let mut rng = ChaCha12Rng::seed_from_u64(76);
        let f = probe::random_hermitian(2, &[1, 2], &mut rng);
        let t = 0.2;
        let got = scattering_cumulant(&sys, &corr, &CumulantOrder { s: 1, n: 1, t }, &f).unwrap();

        let mut x = f.clone();
        x = sys.free_evolve(-t, 1, &x).unwrap();
        x = sys.free_evolve(-t, 2, &x).unwrap();
        x = x.left_mul_embedded(corr.full(2).unwrap()).unwrap();
        // 𝔄₂(−t, 1, 2) = G₂(−t) − G₁(−t,1)G₁(−t,2) by direct expansion
        let joint = sys.evolve(t, &[1, 2], &x).unwrap();
        let split = sys
            .evolve(t, &[2], &sys.evolve(t, &[1], &x).unwrap())
            .unwrap();
        let expect = joint.sub(&split).unwrap();
        assert!(got.sub(&expect).unwrap().trace_norm() < 1e-12);
    }

    #[test]
    fn first_generated_operator_is_the_first_scattering_cumulant() {
        let g = generated_expansion(2, 0);
        let expect = Expansion::atom(&[1, 2], &[]);
        assert_eq!(g.canonical(), expect.canonical());
    }

    #[test]
    fn second_generated_operator_matches_unfolded_recurrence() {
        // 𝔊₂ = Ă₂({Y}, s+1) − Ă₁({Y}) Σ_{i≤s} Ă₂(i, s+1), here s = 2
        let g = generated_expansion(2, 1);
        let mut expect = Expansion::atom(&[1, 2], &[3]);
        for i in 1..=2 {
            let t = Expansion::atom(&[1, 2], &[]).product(&Expansion::atom(&[i], &[3]));
            expect = expect.sub(&t);
        }
        assert_eq!(g.canonical(), expect.canonical());
    }

    #[test]
    fn closed_form_agrees_with_recurrence_on_single_cluster() {
        let sys = test_system(0.4, 77);
        let corr = correlated_family(2, 4, 78);
        for n in 0..=2 {
            let labels: Vec<Label> = (1..=(1 + n) as Label).collect();
            let probes = probe::probe_set(2, &labels, 79 + n as u64);
            let rec = generated_expansion(1, n);
            let closed = generated_expansion_closed(1, n).unwrap();
            for p in probes.iter().take(4) {
                let a = rec.apply(&sys, &corr, 0.5, p).unwrap();
                let b = closed.apply(&sys, &corr, 0.5, p).unwrap();
                assert!(a.sub(&b).unwrap().trace_norm() < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn closed_form_agrees_with_recurrence_as_traced_functional() {
        // for s = 2, n = 2 the two index conventions differ as raw maps but
        // agree traced against identical-slot products
        let sys = test_system(0.4, 80);
        let corr = correlated_family(2, 4, 81);
        let mut rng = ChaCha12Rng::seed_from_u64(82);
        let f1 = probe::random_density(2, &[1], &mut rng).scale_re(0.3);
        let mut prod = f1.clone();
        for i in 2..=4 {
            prod = prod.tensor(&f1.relabeled(&[i]).unwrap()).unwrap();
        }
        let rec = generated_expansion(2, 2)
            .apply(&sys, &corr, 0.6, &prod)
            .unwrap()
            .partial_trace(&[1, 2])
            .unwrap();
        let closed = generated_expansion_closed(2, 2)
            .unwrap()
            .apply(&sys, &corr, 0.6, &prod)
            .unwrap()
            .partial_trace(&[1, 2])
            .unwrap();
        assert!(rec.sub(&closed).unwrap().trace_norm() < 1e-10);
    }

    #[test]
    fn generated_evolution_enforces_order_cap() {
        let order = CumulantOrder { s: 1, n: 3, t: 0.1 };
        assert!(matches!(
            generated_evolution(&order, 2),
            Err(DynError::OrderNotSupported { n: 3, n_max: 2 })
        ));
        assert!(generated_evolution(&order, 3).is_ok());
    }

    #[test]
    fn kce_residual_is_zero_at_lowest_order_and_small_beyond() {
        let sys = test_system(0.5, 83);
        let corr = correlated_family(2, 4, 84);
        let probes0 = probe::probe_set(2, &[1], 85);
        let r0 = kce_residual(&sys, &corr, 0.4, 1, 0, &probes0[..3]).unwrap();
        assert!(r0 < 1e-14);
        let probes1 = probe::probe_set(2, &[1, 2], 86);
        let r1 = kce_residual(&sys, &corr, 0.4, 1, 1, &probes1[..3]).unwrap();
        assert!(r1 < 1e-10, "r1 = {r1:.3e}");
        let probes2 = probe::probe_set(2, &[1, 2, 3], 87);
        let r2 = kce_residual(&sys, &corr, 0.4, 1, 2, &probes2[..3]).unwrap();
        assert!(r2 < 1e-9, "r2 = {r2:.3e}");
    }

    #[test]
    fn expansion_dump_lists_terms() {
        let g = generated_expansion(1, 1);
        let dump = format!("{}", g.canonical());
        assert!(dump.contains("S(1;2)"));
        assert!(dump.lines().count() >= 2);
    }
}
