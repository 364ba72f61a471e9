//! Labeled operator algebra on finite tensor products.
//!
//! An operator here is a dense complex matrix acting on H^⊗k for a single
//! one-particle space H of dimension `dim`, tagged with an ordered set of
//! distinct particle labels. Canonical storage keeps labels strictly
//! increasing; the slot holding the smallest label is the most significant
//! index digit, so for labels (1,2) the matrix of A(1)⊗B(2) is kron(A, B).
//!
//! Everything is immutable after construction and all operations are pure,
//! so values can be shared freely across threads.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, SVD, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
/// Particle label. Labels are arbitrary distinct positive integers; slots
/// are always ordered by increasing label.
pub type Label = u32;

#[derive(Debug, Error)]
pub enum OpError {
    #[error("label collision: operands share labels")]
    LabelCollision,
    #[error("labels {missing:?} not contained in target label set")]
    LabelsNotContained { missing: Vec<Label> },
    #[error("label sets do not match: {left:?} vs {right:?}")]
    LabelMismatch { left: Vec<Label>, right: Vec<Label> },
    #[error("labels must be distinct and nonzero: {0:?}")]
    BadLabels(Vec<Label>),
    #[error("matrix side {side} does not equal dim^labels = {expected}")]
    BadShape { side: usize, expected: usize },
    #[error("one-particle dimension must be ≥ 1")]
    BadDimension,
    #[error("operator is not Hermitian: relative deviation {deviation:.3e} exceeds {tolerance:.3e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("partial trace must keep a subset of the operator's labels")]
    BadKeepSet,
}

/// The one-particle Hilbert space H; every operator in a run shares one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneParticleSpace {
    dim: usize,
}

impl OneParticleSpace {
    pub fn new(dim: usize) -> Result<Self, OpError> {
        if dim < 1 {
            return Err(OpError::BadDimension);
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Trace-norm distance between an operator and its label-permuted copies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationSymmetryReport {
    pub max_deviation: f64,
}

/// Dense operator on H^⊗k tagged with its particle labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledOperator {
    dim: usize,
    labels: Vec<Label>,
    mat: Array2<C64>,
}

fn check_labels(labels: &[Label]) -> Result<(), OpError> {
    for w in labels.windows(2) {
        if w[0] >= w[1] {
            return Err(OpError::BadLabels(labels.to_vec()));
        }
    }
    if labels.iter().any(|&l| l == 0) {
        return Err(OpError::BadLabels(labels.to_vec()));
    }
    Ok(())
}

impl LabeledOperator {
    /// Build an operator from canonical (strictly increasing) labels.
    pub fn new(dim: usize, labels: Vec<Label>, mat: Array2<C64>) -> Result<Self, OpError> {
        if dim < 1 {
            return Err(OpError::BadDimension);
        }
        check_labels(&labels)?;
        let expected = dim.pow(labels.len() as u32);
        if mat.nrows() != expected || mat.ncols() != expected {
            return Err(OpError::BadShape {
                side: mat.nrows(),
                expected,
            });
        }
        Ok(Self { dim, labels, mat })
    }

    /// Identity on the given labels.
    pub fn identity(dim: usize, labels: &[Label]) -> Self {
        let side = dim.pow(labels.len() as u32);
        Self::new(dim, labels.to_vec(), Array2::eye(side)).expect("identity is well formed")
    }

    /// Zero-label operator holding a single scalar (the image of a full trace).
    pub fn scalar(dim: usize, value: C64) -> Self {
        let mut mat = Array2::zeros((1, 1));
        mat[(0, 0)] = value;
        Self { dim, labels: Vec::new(), mat }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn num_particles(&self) -> usize {
        self.labels.len()
    }

    pub fn side(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_mat(self) -> Array2<C64> {
        self.mat
    }

    fn same_labels(&self, other: &Self) -> Result<(), OpError> {
        if self.labels != other.labels || self.dim != other.dim {
            return Err(OpError::LabelMismatch {
                left: self.labels.clone(),
                right: other.labels.clone(),
            });
        }
        Ok(())
    }

    /// Strides of each slot (slot 0 = smallest label = most significant digit).
    fn strides(&self) -> Vec<usize> {
        slot_strides(self.dim, self.labels.len())
    }

    /// Tensor product with an operator on disjoint labels, reordered to
    /// canonical increasing-label slot order.
    pub fn tensor(&self, other: &Self) -> Result<Self, OpError> {
        if self.labels.iter().any(|l| other.labels.contains(l)) {
            return Err(OpError::LabelCollision);
        }
        if self.dim != other.dim {
            return Err(OpError::BadDimension);
        }
        let mut labels: Vec<Label> = self
            .labels
            .iter()
            .chain(other.labels.iter())
            .copied()
            .collect();
        labels.sort_unstable();
        let k = labels.len();
        let side = self.dim.pow(k as u32);
        let out_strides = slot_strides(self.dim, k);
        let a_str = self.strides();
        let b_str = other.strides();

        // For every index of the result, the corresponding row indices of the
        // two factors; identity of the map depends only on digit routing.
        let mut ia = vec![0usize; side];
        let mut ib = vec![0usize; side];
        for (idx, (va, vb)) in ia.iter_mut().zip(ib.iter_mut()).enumerate() {
            let (mut a_idx, mut b_idx) = (0usize, 0usize);
            for (slot, &label) in labels.iter().enumerate() {
                let digit = (idx / out_strides[slot]) % self.dim;
                if let Some(p) = self.labels.iter().position(|&l| l == label) {
                    a_idx += digit * a_str[p];
                } else {
                    let p = other.labels.iter().position(|&l| l == label).unwrap();
                    b_idx += digit * b_str[p];
                }
            }
            *va = a_idx;
            *vb = b_idx;
        }

        let mut mat = Array2::zeros((side, side));
        for i in 0..side {
            for j in 0..side {
                mat[(i, j)] = self.mat[(ia[i], ia[j])] * other.mat[(ib[i], ib[j])];
            }
        }
        Ok(Self { dim: self.dim, labels, mat })
    }

    /// Tensor with identity on the missing labels of `full_labels`.
    pub fn embed(&self, full_labels: &[Label]) -> Result<Self, OpError> {
        check_labels(full_labels)?;
        let missing: Vec<Label> = self
            .labels
            .iter()
            .copied()
            .filter(|l| !full_labels.contains(l))
            .collect();
        if !missing.is_empty() {
            return Err(OpError::LabelsNotContained { missing });
        }
        if full_labels == self.labels.as_slice() {
            return Ok(self.clone());
        }
        let k = full_labels.len();
        let side = self.dim.pow(k as u32);
        let out_strides = slot_strides(self.dim, k);
        let own_str = self.strides();

        // own‑part index and rest‑part index of every full index
        let mut own = vec![0usize; side];
        let mut rest = vec![0usize; side];
        for (idx, (vo, vr)) in own.iter_mut().zip(rest.iter_mut()).enumerate() {
            let (mut o, mut r) = (0usize, 0usize);
            for (slot, &label) in full_labels.iter().enumerate() {
                let digit = (idx / out_strides[slot]) % self.dim;
                if let Some(p) = self.labels.iter().position(|&l| l == label) {
                    o += digit * own_str[p];
                } else {
                    r = r * self.dim + digit;
                }
            }
            *vo = o;
            *vr = r;
        }

        let mut mat = Array2::zeros((side, side));
        for i in 0..side {
            for j in 0..side {
                if rest[i] == rest[j] {
                    mat[(i, j)] = self.mat[(own[i], own[j])];
                }
            }
        }
        Ok(Self { dim: self.dim, labels: full_labels.to_vec(), mat })
    }

    /// Partial trace onto `keep`. An empty `keep` yields the zero-label
    /// scalar operator holding the full trace.
    pub fn partial_trace(&self, keep: &[Label]) -> Result<Self, OpError> {
        if keep.iter().any(|l| !self.labels.contains(l)) {
            return Err(OpError::BadKeepSet);
        }
        check_labels(keep)?;
        if keep == self.labels.as_slice() {
            return Ok(self.clone());
        }
        if keep.is_empty() {
            return Ok(Self::scalar(self.dim, self.trace()));
        }
        let traced: Vec<Label> = self
            .labels
            .iter()
            .copied()
            .filter(|l| !keep.contains(l))
            .collect();
        let in_strides = self.strides();
        let keep_side = self.dim.pow(keep.len() as u32);
        let tr_side = self.dim.pow(traced.len() as u32);
        let keep_strides_out = slot_strides(self.dim, keep.len());
        let tr_strides_out = slot_strides(self.dim, traced.len());

        // base offsets of kept / traced digit patterns inside the full index
        let mut base_keep = vec![0usize; keep_side];
        for (idx, v) in base_keep.iter_mut().enumerate() {
            let mut full = 0usize;
            for (slot, label) in keep.iter().enumerate() {
                let digit = (idx / keep_strides_out[slot]) % self.dim;
                let p = self.labels.iter().position(|l| l == label).unwrap();
                full += digit * in_strides[p];
            }
            *v = full;
        }
        let mut base_tr = vec![0usize; tr_side];
        for (idx, v) in base_tr.iter_mut().enumerate() {
            let mut full = 0usize;
            for (slot, label) in traced.iter().enumerate() {
                let digit = (idx / tr_strides_out[slot]) % self.dim;
                let p = self.labels.iter().position(|l| l == label).unwrap();
                full += digit * in_strides[p];
            }
            *v = full;
        }

        let mut mat = Array2::zeros((keep_side, keep_side));
        for i in 0..keep_side {
            for j in 0..keep_side {
                let mut acc = C64::new(0.0, 0.0);
                for &r in &base_tr {
                    acc += self.mat[(base_keep[i] + r, base_keep[j] + r)];
                }
                mat[(i, j)] = acc;
            }
        }
        Ok(Self { dim: self.dim, labels: keep.to_vec(), mat })
    }

    pub fn trace(&self) -> C64 {
        self.mat.diag().sum()
    }

    /// Trace norm ‖f‖ = Tr |f|, the sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        let (_, s, _) = self.mat.svd(false, false).expect("svd of finite matrix");
        s.sum()
    }

    /// Operator norm, the largest singular value.
    pub fn operator_norm(&self) -> f64 {
        let (_, s, _) = self.mat.svd(false, false).expect("svd of finite matrix");
        s.iter().copied().fold(0.0, f64::max)
    }

    /// Frobenius norm, used for cheap relative deviation checks.
    pub fn fro_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn dagger(&self) -> Self {
        let mat = self.mat.t().mapv(|z| z.conj());
        Self { dim: self.dim, labels: self.labels.clone(), mat }
    }

    /// Relative deviation from Hermiticity, ‖A − A†‖_F / max(1, ‖A‖_F).
    pub fn hermiticity_deviation(&self) -> f64 {
        let diff = (&self.mat - &self.dagger().mat)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        diff / self.fro_norm().max(1.0)
    }

    /// Eigenvalues of a Hermitian operator, ascending.
    pub fn eigenvalues(&self) -> Array1<f64> {
        let (vals, _) = self.mat.eigh(UPLO::Lower).expect("eigh of finite matrix");
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Matrix product with an operator on the same labels.
    pub fn matmul(&self, other: &Self) -> Result<Self, OpError> {
        self.same_labels(other)?;
        Ok(Self {
            dim: self.dim,
            labels: self.labels.clone(),
            mat: self.mat.dot(&other.mat),
        })
    }

    /// Left multiplication by `g` embedded into this operator's label set.
    pub fn left_mul_embedded(&self, g: &Self) -> Result<Self, OpError> {
        let g_full = g.embed(&self.labels)?;
        g_full.matmul(self)
    }

    pub fn add(&self, other: &Self) -> Result<Self, OpError> {
        self.same_labels(other)?;
        Ok(Self {
            dim: self.dim,
            labels: self.labels.clone(),
            mat: &self.mat + &other.mat,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, OpError> {
        self.same_labels(other)?;
        Ok(Self {
            dim: self.dim,
            labels: self.labels.clone(),
            mat: &self.mat - &other.mat,
        })
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            dim: self.dim,
            labels: self.labels.clone(),
            mat: self.mat.mapv(|z| z * c),
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dim: self.dim,
            labels: self.labels.clone(),
            mat: Array2::zeros(self.mat.raw_dim()),
        }
    }

    /// Commutator scaled by −i: the generator action −i[h, f].
    pub fn minus_i_commutator_with(&self, h: &Self) -> Result<Self, OpError> {
        self.same_labels(h)?;
        let comm = h.mat.dot(&self.mat) - self.mat.dot(&h.mat);
        Ok(Self {
            dim: self.dim,
            labels: self.labels.clone(),
            mat: comm.mapv(|z| z * C64::new(0.0, -1.0)),
        })
    }

    /// Rename slot `i`'s label to `new_labels[i]`, then restore canonical
    /// (increasing) slot order. `new_labels` must be distinct.
    pub fn relabeled(&self, new_labels: &[Label]) -> Result<Self, OpError> {
        assert_eq!(new_labels.len(), self.labels.len());
        let mut sorted: Vec<Label> = new_labels.to_vec();
        sorted.sort_unstable();
        check_labels(&sorted)?;
        let k = sorted.len();
        // perm[target slot] = source slot
        let perm: Vec<usize> = sorted
            .iter()
            .map(|l| new_labels.iter().position(|m| m == l).unwrap())
            .collect();
        let mat = permute_slots(&self.mat, self.dim, k, &perm);
        Ok(Self { dim: self.dim, labels: sorted, mat })
    }

    /// Average over all label permutations.
    pub fn symmetrize(&self) -> Self {
        let k = self.labels.len();
        if k <= 1 {
            return self.clone();
        }
        let side = self.side();
        let mut acc: Array2<C64> = Array2::zeros((side, side));
        let mut count = 0usize;
        for perm in permutations(k) {
            acc += &permute_slots(&self.mat, self.dim, k, &perm);
            count += 1;
        }
        let mat = acc.mapv(|z| z / count as f64);
        Self { dim: self.dim, labels: self.labels.clone(), mat }
    }

    /// Max trace-norm distance between the operator and each permuted copy.
    pub fn symmetry_report(&self) -> PermutationSymmetryReport {
        let k = self.labels.len();
        let mut max_deviation: f64 = 0.0;
        if k > 1 {
            for perm in permutations(k) {
                let permuted = Self {
                    dim: self.dim,
                    labels: self.labels.clone(),
                    mat: permute_slots(&self.mat, self.dim, k, &perm),
                };
                max_deviation = max_deviation.max(self.sub(&permuted).unwrap().trace_norm());
            }
        }
        PermutationSymmetryReport { max_deviation }
    }

    /// Conjugation f ↦ u f u† by an operator on a subset of the labels.
    pub fn conjugated_by(&self, u: &Self) -> Result<Self, OpError> {
        let u_full = if u.labels == self.labels {
            u.clone()
        } else {
            u.embed(&self.labels)?
        };
        let mat = u_full.mat.dot(&self.mat).dot(&u_full.dagger().mat);
        Ok(Self { dim: self.dim, labels: self.labels.clone(), mat })
    }
}

/// Strides for `k` slots over dimension `dim`, slot 0 most significant.
fn slot_strides(dim: usize, k: usize) -> Vec<usize> {
    (0..k).map(|s| dim.pow((k - 1 - s) as u32)).collect()
}

/// All permutations of 0..k as vectors `perm` with `perm[target] = source`.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    heap_permute(&mut cur, k, &mut out);
    out
}

fn heap_permute(cur: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(cur.clone());
        return;
    }
    for i in 0..k {
        heap_permute(cur, k - 1, out);
        if k % 2 == 0 {
            cur.swap(i, k - 1);
        } else {
            cur.swap(0, k - 1);
        }
    }
}

/// Apply a slot permutation to both indices: out[I, J] = in[σ(I), σ(J)] where
/// σ routes the digit of target slot `s` from source slot `perm[s]`.
fn permute_slots(mat: &Array2<C64>, dim: usize, k: usize, perm: &[usize]) -> Array2<C64> {
    let side = mat.nrows();
    let strides = slot_strides(dim, k);
    let mut src_of = vec![0usize; side];
    for (idx, v) in src_of.iter_mut().enumerate() {
        let mut src = 0usize;
        for (slot, &stride) in strides.iter().enumerate() {
            let digit = (idx / stride) % dim;
            src += digit * strides[perm[slot]];
        }
        *v = src;
    }
    let mut out = Array2::zeros((side, side));
    for i in 0..side {
        for j in 0..side {
            out[(i, j)] = mat[(src_of[i], src_of[j])];
        }
    }
    out
}

/// Unitary propagation by a fixed Hermitian generator, via its cached
/// eigendecomposition. The decomposition is computed once; each time `t`
/// only costs two small matrix products.
#[derive(Debug, Clone)]
pub struct Propagator {
    dim: usize,
    labels: Vec<Label>,
    evals: Array1<f64>,
    evecs: Array2<C64>,
}

/// Relative Hermiticity tolerance accepted by [`Propagator::new`];
/// accumulated round-off from repeated conjugations stays well below this.
pub const HERMITICITY_TOL: f64 = 1e-10;

impl Propagator {
    pub fn new(h: &LabeledOperator) -> Result<Self, OpError> {
        let deviation = h.hermiticity_deviation();
        if deviation > HERMITICITY_TOL {
            return Err(OpError::NotHermitian {
                deviation,
                tolerance: HERMITICITY_TOL,
            });
        }
        let (evals, evecs) = h.mat().eigh(UPLO::Lower).expect("eigh of Hermitian matrix");
        // The LAPACK binding sees the row-major buffer as column-major and
        // hands back eigenvectors of Hᵀ = H̄; conjugating restores
        // h = V diag(λ) V†.
        let evecs = evecs.mapv(|z| z.conj());
        Ok(Self {
            dim: h.dim(),
            labels: h.labels().to_vec(),
            evals,
            evecs,
        })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// U(t) = exp(−i t h).
    pub fn unitary(&self, t: f64) -> LabeledOperator {
        let phases: Array1<C64> = self
            .evals
            .iter()
            .map(|&l| C64::from_polar(1.0, -t * l))
            .collect();
        let side = self.evecs.nrows();
        let mut vd = self.evecs.clone();
        for j in 0..side {
            let p = phases[j];
            for i in 0..side {
                vd[(i, j)] *= p;
            }
        }
        let mat = vd.dot(&self.evecs.t().mapv(|z| z.conj()));
        LabeledOperator::new(self.dim, self.labels.clone(), mat).expect("unitary is well formed")
    }

    /// f ↦ U(t) f U(t)†, with `f` on any label set containing this
    /// propagator's labels.
    pub fn conjugate(&self, t: f64, f: &LabeledOperator) -> Result<LabeledOperator, OpError> {
        f.conjugated_by(&self.unitary(t))
    }
}

/// Wire format for matrices: header (labels, dim) plus the row-major
/// (re, im) pairs. Used in JSON reports and test fixtures.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub labels: Vec<Label>,
    pub dim: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&LabeledOperator> for MatrixJson {
    fn from(op: &LabeledOperator) -> Self {
        MatrixJson {
            labels: op.labels().to_vec(),
            dim: op.dim(),
            data: op.mat().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<&MatrixJson> for LabeledOperator {
    type Error = OpError;

    fn try_from(m: &MatrixJson) -> Result<Self, OpError> {
        let side = m.dim.pow(m.labels.len() as u32);
        if m.data.len() != side * side {
            return Err(OpError::BadShape {
                side: (m.data.len() as f64).sqrt() as usize,
                expected: side,
            });
        }
        let mat = Array2::from_shape_vec(
            (side, side),
            m.data.iter().map(|p| C64::new(p[0], p[1])).collect(),
        )
        .expect("shape checked above");
        LabeledOperator::new(m.dim, m.labels.clone(), mat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pauli_x() -> Array2<C64> {
        array![[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]]
    }

    fn pauli_z() -> Array2<C64> {
        array![[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]]
    }

    #[test]
    fn tensor_of_scalars_multiplies() {
        let a = LabeledOperator::new(1, vec![1], array![[c(2., 0.)]]).unwrap();
        let b = LabeledOperator::new(1, vec![2], array![[c(3., 0.)]]).unwrap();
        let t = a.tensor(&b).unwrap();
        assert_eq!(t.mat()[(0, 0)], c(6., 0.));
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        let a = LabeledOperator::identity(2, &[1]);
        let b = LabeledOperator::identity(2, &[2]);
        let t = a.tensor(&b).unwrap();
        assert_eq!(t.labels(), &[1, 2]);
        assert_eq!(t.mat(), &Array2::<C64>::eye(4));
    }

    #[test]
    fn tensor_reorders_to_increasing_labels() {
        // (Z on label 2) ⊗ (X on label 1) must equal X⊗Z in slot order (1,2).
        let z2 = LabeledOperator::new(2, vec![2], pauli_z()).unwrap();
        let x1 = LabeledOperator::new(2, vec![1], pauli_x()).unwrap();
        let t = z2.tensor(&x1).unwrap();
        // brute-force index bookkeeping oracle: out[(i1 i2),(j1 j2)] = X[i1,j1] Z[i2,j2]
        let (x, z) = (pauli_x(), pauli_z());
        for i1 in 0..2 {
            for i2 in 0..2 {
                for j1 in 0..2 {
                    for j2 in 0..2 {
                        let expect = x[(i1, j1)] * z[(i2, j2)];
                        assert_eq!(t.mat()[(2 * i1 + i2, 2 * j1 + j2)], expect);
                    }
                }
            }
        }
    }

    #[test]
    fn tensor_rejects_label_collision() {
        let a = LabeledOperator::identity(2, &[1, 2]);
        let b = LabeledOperator::identity(2, &[2]);
        assert!(matches!(a.tensor(&b), Err(OpError::LabelCollision)));
    }

    #[test]
    fn embed_is_identity_on_same_labels() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let a = probe::random_operator(2, &[1], &mut rng);
        let e = a.embed(&[1]).unwrap();
        assert_eq!(a, e);
    }

    #[test]
    fn embed_scales_trace_by_dim_per_missing_label() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let a = probe::random_operator(2, &[1], &mut rng);
        let e = a.embed(&[1, 2]).unwrap();
        let diff = (e.trace() - a.trace() * 2.0).norm();
        assert!(diff < 1e-13);
    }

    #[test]
    fn embed_matches_three_slot_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let phi = probe::random_operator(2, &[1, 3], &mut rng);
        let e = phi.embed(&[1, 2, 3]).unwrap();
        // oracle: explicit 3-slot loop, slot order (1,2,3), phi on slots (1,3)
        let d = 2usize;
        for i1 in 0..d {
            for i2 in 0..d {
                for i3 in 0..d {
                    for j1 in 0..d {
                        for j2 in 0..d {
                            for j3 in 0..d {
                                let row = i1 * 4 + i2 * 2 + i3;
                                let col = j1 * 4 + j2 * 2 + j3;
                                let expect = if i2 == j2 {
                                    phi.mat()[(i1 * 2 + i3, j1 * 2 + j3)]
                                } else {
                                    c(0., 0.)
                                };
                                assert!((e.mat()[(row, col)] - expect).norm() < 1e-15);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn embed_rejects_uncontained_labels() {
        let a = LabeledOperator::identity(2, &[1, 4]);
        assert!(matches!(
            a.embed(&[1, 2, 3]),
            Err(OpError::LabelsNotContained { .. })
        ));
    }

    #[test]
    fn partial_trace_of_product_factorizes() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let a = probe::random_operator(2, &[1], &mut rng);
        let b = probe::random_operator(2, &[2], &mut rng);
        let ab = a.tensor(&b).unwrap();
        let reduced = ab.partial_trace(&[1]).unwrap();
        let expect = a.scale(b.trace());
        assert!(reduced.sub(&expect).unwrap().trace_norm() < 1e-13);
    }

    #[test]
    fn partial_trace_preserves_trace_and_positivity() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let rho = probe::random_density(2, &[1, 2], &mut rng);
        let reduced = rho.partial_trace(&[2]).unwrap();
        assert!((reduced.trace() - c(1., 0.)).norm() < 1e-12);
        assert!(reduced.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn partial_trace_matches_double_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let f = probe::random_hermitian(2, &[1, 2], &mut rng);
        let reduced = f.partial_trace(&[1]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = c(0., 0.);
                for r in 0..2 {
                    acc += f.mat()[(2 * i + r, 2 * j + r)];
                }
                assert!((reduced.mat()[(i, j)] - acc).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn partial_trace_rejects_foreign_labels() {
        let a = LabeledOperator::identity(2, &[1, 2]);
        assert!(matches!(a.partial_trace(&[3]), Err(OpError::BadKeepSet)));
    }

    #[test]
    fn full_trace_gives_scalar_operator() {
        let a = LabeledOperator::identity(2, &[1, 2]);
        let s = a.partial_trace(&[]).unwrap();
        assert_eq!(s.num_particles(), 0);
        assert_eq!(s.mat()[(0, 0)], c(4., 0.));
    }

    #[test]
    fn trace_norm_of_diagonal() {
        let a = LabeledOperator::new(
            2,
            vec![1],
            array![[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-2., 0.)]],
        )
        .unwrap();
        assert!((a.trace_norm() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn trace_norm_is_unitarily_invariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let f = probe::random_operator(2, &[1, 2], &mut rng);
        let h = probe::random_hermitian(2, &[1, 2], &mut rng);
        let u = Propagator::new(&h).unwrap().unitary(0.7);
        let conj = f.conjugated_by(&u).unwrap();
        assert!((conj.trace_norm() - f.trace_norm()).abs() < 1e-10);
    }

    #[test]
    fn trace_norm_matches_singular_value_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let f = probe::random_operator(2, &[1, 2], &mut rng);
        // independent oracle: singular values via eigenvalues of A†A
        let ata = f.dagger().matmul(&f).unwrap();
        let oracle: f64 = ata.eigenvalues().iter().map(|l| l.max(0.0).sqrt()).sum();
        assert!((f.trace_norm() - oracle).abs() < 1e-10);
    }

    #[test]
    fn symmetrize_fixes_symmetric_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let a = probe::random_hermitian(2, &[1], &mut rng);
        let sym = a
            .relabeled(&[1])
            .unwrap()
            .tensor(&a.relabeled(&[2]).unwrap())
            .unwrap();
        let report = sym.symmetry_report();
        assert!(report.max_deviation < 1e-13);
        assert!(sym.symmetrize().sub(&sym).unwrap().trace_norm() < 1e-13);
    }

    #[test]
    fn symmetrize_two_labels_averages_swap() {
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let a = probe::random_operator(2, &[1], &mut rng);
        let b = probe::random_operator(2, &[2], &mut rng);
        let ab = a.tensor(&b).unwrap();
        let ba = a
            .relabeled(&[2])
            .unwrap()
            .tensor(&b.relabeled(&[1]).unwrap())
            .unwrap();
        let expect = ab.add(&ba).unwrap().scale_re(0.5);
        assert!(ab.symmetrize().sub(&expect).unwrap().trace_norm() < 1e-13);
    }

    #[test]
    fn symmetrize_three_labels_matches_six_term_average() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let f = probe::random_operator(2, &[1, 2, 3], &mut rng);
        // oracle: enumerate S3 explicitly on relabelings
        let perms: [[Label; 3]; 6] = [
            [1, 2, 3],
            [1, 3, 2],
            [2, 1, 3],
            [2, 3, 1],
            [3, 1, 2],
            [3, 2, 1],
        ];
        let mut acc = f.zeros_like();
        for p in &perms {
            acc = acc.add(&f.relabeled(p).unwrap()).unwrap();
        }
        let expect = acc.scale_re(1.0 / 6.0);
        assert!(f.symmetrize().sub(&expect).unwrap().trace_norm() < 1e-12);
    }

    #[test]
    fn propagator_at_zero_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        let h = probe::random_hermitian(2, &[1, 2], &mut rng);
        let u = Propagator::new(&h).unwrap().unitary(0.0);
        let dev = u
            .sub(&LabeledOperator::identity(2, &[1, 2]))
            .unwrap()
            .trace_norm();
        assert!(dev < 1e-13);
    }

    #[test]
    fn propagator_diagonalizes_diagonal_generator() {
        let h = LabeledOperator::new(
            2,
            vec![1],
            array![[c(0.3, 0.), c(0., 0.)], [c(0., 0.), c(-1.1, 0.)]],
        )
        .unwrap();
        let u = Propagator::new(&h).unwrap().unitary(0.5);
        assert!((u.mat()[(0, 0)] - C64::from_polar(1.0, -0.5 * 0.3)).norm() < 1e-13);
        assert!((u.mat()[(1, 1)] - C64::from_polar(1.0, 0.5 * 1.1)).norm() < 1e-13);
        assert!(u.mat()[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn propagator_matches_taylor_series_for_complex_generator() {
        // pins the eigenvector layout: U(t) must be exp(−ith) for h with
        // genuinely complex off-diagonal entries, not exp(−ith̄)
        let mut rng = ChaCha12Rng::seed_from_u64(90);
        let h = probe::random_hermitian(2, &[1, 2], &mut rng);
        let t = 1e-3;
        let u = Propagator::new(&h).unwrap().unitary(t);
        let mut series = LabeledOperator::identity(2, &[1, 2]);
        let mut power = LabeledOperator::identity(2, &[1, 2]);
        let mut coeff = C64::new(1.0, 0.0);
        for k in 1..=4 {
            power = power.matmul(&h).unwrap();
            coeff *= C64::new(0.0, -t) / k as f64;
            series = series.add(&power.scale(coeff)).unwrap();
        }
        assert!(u.sub(&series).unwrap().trace_norm() < 1e-12);
    }

    #[test]
    fn propagator_satisfies_group_law() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let h = probe::random_hermitian(2, &[1, 2], &mut rng);
        let p = Propagator::new(&h).unwrap();
        let u12 = p.unitary(0.4).matmul(&p.unitary(0.9)).unwrap();
        let u3 = p.unitary(1.3);
        assert!(u12.sub(&u3).unwrap().trace_norm() < 1e-12);
    }

    #[test]
    fn propagator_rejects_non_hermitian() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let a = probe::random_operator(2, &[1], &mut rng);
        assert!(matches!(
            Propagator::new(&a),
            Err(OpError::NotHermitian { .. })
        ));
    }

    #[test]
    fn propagator_is_unitary_and_preserves_positivity() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let h = probe::random_hermitian(2, &[1, 2], &mut rng);
        let u = Propagator::new(&h).unwrap().unitary(1.7);
        let udu = u.dagger().matmul(&u).unwrap();
        assert!(
            udu.sub(&LabeledOperator::identity(2, &[1, 2]))
                .unwrap()
                .operator_norm()
                < 1e-11
        );
        let rho = probe::random_density(2, &[1, 2], &mut rng);
        let evolved = rho.conjugated_by(&u).unwrap();
        assert!(evolved.min_eigenvalue() >= rho.min_eigenvalue() - 1e-11);
    }

    #[test]
    fn embed_partial_trace_adjointness() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let g = probe::random_operator(2, &[2], &mut rng);
        let f = probe::random_operator(2, &[1, 2], &mut rng);
        let lhs = g.embed(&[1, 2]).unwrap().matmul(&f).unwrap().trace();
        let rhs = g
            .matmul(&f.partial_trace(&[2]).unwrap())
            .unwrap()
            .trace();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn matrix_json_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let f = probe::random_operator(2, &[1, 3], &mut rng);
        let json = MatrixJson::from(&f);
        let back = LabeledOperator::try_from(&json).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn relabel_round_trip_and_reorder() {
        let mut rng = ChaCha12Rng::seed_from_u64(24);
        let f = probe::random_operator(2, &[1, 2], &mut rng);
        let swapped = f.relabeled(&[2, 1]).unwrap();
        assert_eq!(swapped.labels(), &[1, 2]);
        let back = swapped.relabeled(&[2, 1]).unwrap();
        assert!(back.sub(&f).unwrap().trace_norm() < 1e-15);
    }
}
