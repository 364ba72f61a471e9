//! Seeded probe operators for residual checks.
//!
//! All randomized identity checks draw from one explicitly seeded generator
//! so that every run of a scenario is bit-for-bit reproducible.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::op::{C64, Label, LabeledOperator};

/// Uniform complex entries in the unit square, centered.
pub fn random_operator(dim: usize, labels: &[Label], rng: &mut ChaCha12Rng) -> LabeledOperator {
    let side = dim.pow(labels.len() as u32);
    let mat = Array2::from_shape_fn((side, side), |_| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    LabeledOperator::new(dim, labels.to_vec(), mat).expect("probe shape")
}

/// Random Hermitian operator, entries O(1).
pub fn random_hermitian(dim: usize, labels: &[Label], rng: &mut ChaCha12Rng) -> LabeledOperator {
    let a = random_operator(dim, labels, rng);
    a.add(&a.dagger()).unwrap().scale_re(0.5)
}

/// Random positive trace-one operator (a density operator).
pub fn random_density(dim: usize, labels: &[Label], rng: &mut ChaCha12Rng) -> LabeledOperator {
    let a = random_operator(dim, labels, rng);
    let pos = a.matmul(&a.dagger()).unwrap();
    let tr = pos.trace().re;
    pos.scale_re(1.0 / tr)
}

/// The fixed probe set used by operator-identity residuals: 8 seeded
/// Hermitian probes, plus all elementary matrix units when the total space
/// is small (d = 2, up to 3 particles).
pub fn probe_set(dim: usize, labels: &[Label], seed: u64) -> Vec<LabeledOperator> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut probes: Vec<LabeledOperator> = (0..8)
        .map(|_| random_hermitian(dim, labels, &mut rng))
        .collect();
    let side = dim.pow(labels.len() as u32);
    if dim == 2 && labels.len() <= 3 {
        for i in 0..side {
            for j in 0..side {
                let mut mat = Array2::zeros((side, side));
                mat[(i, j)] = C64::new(1.0, 0.0);
                probes.push(LabeledOperator::new(dim, labels.to_vec(), mat).unwrap());
            }
        }
    }
    probes
}

use rand::SeedableRng;

/// Generator seeded from the scenario's explicit 64-bit seed.
pub fn seeded(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
