//! Dense Hermitian kernels.
//!
//! Truncated-Fock density operators of phase-covariant families are mostly
//! exact zeros: only entries connecting basis states with the same
//! "charge" are populated. [`HermitianEigen`] splits a matrix into the
//! connected components of its nonzero pattern and diagonalises each
//! component separately. No structure is assumed; a fully coupled matrix is
//! a single component.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

#[allow(unused_imports)]
use num_traits::Float;
use crate::{Error, Result, C64};

/// Negative eigenvalues above `-NEGATIVE_EIGENVALUE_TOL` are treated as
/// roundoff and clipped to zero.
pub const NEGATIVE_EIGENVALUE_TOL: f64 = 1e-10;

/// Connected components of the union of the nonzero patterns of `mats`.
///
/// Components are returned in order of their smallest index, each sorted.
pub fn coupled_components(dim: usize, mats: &[&DMatrix<C64>]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for m in mats {
        debug_assert_eq!(m.nrows(), dim);
        for j in 0..dim {
            let col = m.column(j);
            for (i, v) in col.iter().enumerate() {
                if i != j && (v.re != 0.0 || v.im != 0.0) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut label = vec![usize::MAX; dim];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for i in 0..dim {
        let root = find(&mut parent, i);
        if label[root] == usize::MAX {
            label[root] = comps.len();
            comps.push(Vec::new());
        }
        comps[label[root]].push(i);
    }
    comps
}

pub(crate) fn submatrix(m: &DMatrix<C64>, rows: &[usize], cols: &[usize]) -> DMatrix<C64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn dense_eigh(m: DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let n = m.nrows();
    if n == 1 {
        return Ok((vec![m[(0, 0)].re], DMatrix::from_element(1, 1, C64::new(1.0, 0.0))));
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 1000 * n.max(10))
        .ok_or(Error::EigenNonConvergence)?;
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// One diagonal block of a [`HermitianEigen`].
#[derive(Debug, Clone)]
pub struct EigenBlock {
    /// Basis indices spanned by this block.
    pub indices: Vec<usize>,
    /// Columns are eigenvectors, rows follow `indices`.
    pub vectors: DMatrix<C64>,
    /// Position of this block's eigenvalues in [`HermitianEigen::values`].
    pub offset: usize,
}

/// Eigendecomposition of a Hermitian matrix, computed block by block.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    dim: usize,
    values: Vec<f64>,
    blocks: Vec<EigenBlock>,
}

impl HermitianEigen {
    /// Diagonalises `m`, which must be Hermitian (only its pattern and lower
    /// triangle per block are read).
    pub fn new(m: &DMatrix<C64>) -> Result<Self> {
        let comps = coupled_components(m.nrows(), &[m]);
        Self::with_components(m, comps)
    }

    /// Diagonalises `m` block-wise over a caller-supplied partition, which
    /// must be at least as coarse as the nonzero pattern of `m`.
    pub fn with_components(m: &DMatrix<C64>, comps: Vec<Vec<usize>>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let mut values = Vec::with_capacity(m.nrows());
        let mut blocks = Vec::with_capacity(comps.len());
        for indices in comps {
            let (vals, vectors) = dense_eigh(submatrix(m, &indices, &indices))?;
            let offset = values.len();
            values.extend_from_slice(&vals);
            blocks.push(EigenBlock {
                indices,
                vectors,
                offset,
            });
        }
        Ok(Self {
            dim: m.nrows(),
            values,
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn blocks(&self) -> &[EigenBlock] {
        &self.blocks
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Clips roundoff negativity; fails if any eigenvalue is below
    /// `-NEGATIVE_EIGENVALUE_TOL`.
    pub fn clip_psd(&mut self) -> Result<()> {
        for v in &mut self.values {
            if *v < -NEGATIVE_EIGENVALUE_TOL {
                return Err(Error::NegativeEigenvalue { value: *v });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(())
    }

    /// `f(A) = V f(Λ) V†`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for b in &self.blocks {
            let n = b.indices.len();
            let mut scaled = b.vectors.clone();
            for k in 0..n {
                let s = f(self.values[b.offset + k]);
                scaled.column_mut(k).scale_mut(s);
            }
            let local = &scaled * b.vectors.adjoint();
            for (i, &gi) in b.indices.iter().enumerate() {
                for (j, &gj) in b.indices.iter().enumerate() {
                    out[(gi, gj)] = local[(i, j)];
                }
            }
        }
        out
    }

    /// Block index of every basis index.
    pub fn block_of(&self) -> Vec<usize> {
        let mut owner = vec![0; self.dim];
        for (p, b) in self.blocks.iter().enumerate() {
            for &i in &b.indices {
                owner[i] = p;
            }
        }
        owner
    }

    /// Expresses `a` in the eigenbasis, one block pair at a time. Pairs on
    /// which `a` vanishes identically are not stored.
    pub fn to_eigenbasis(&self, a: &DMatrix<C64>) -> BlockPairs {
        let owner = self.block_of();
        let mut touched = BTreeSet::new();
        for j in 0..self.dim {
            for (i, z) in a.column(j).iter().enumerate() {
                if z.re != 0.0 || z.im != 0.0 {
                    touched.insert((owner[i], owner[j]));
                }
            }
        }
        let pairs = touched
            .into_iter()
            .map(|(p, q)| {
                let (bi, bj) = (&self.blocks[p], &self.blocks[q]);
                let sub = submatrix(a, &bi.indices, &bj.indices);
                ((p, q), bi.vectors.adjoint() * sub * &bj.vectors)
            })
            .collect();
        BlockPairs { pairs }
    }

    /// Inverse of [`Self::to_eigenbasis`]: `V X V†` as a dense matrix.
    pub fn from_eigenbasis(&self, x: &BlockPairs) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (&(p, q), local) in &x.pairs {
            let (bi, bj) = (&self.blocks[p], &self.blocks[q]);
            let back = &bi.vectors * local * bj.vectors.adjoint();
            for (i, &gi) in bi.indices.iter().enumerate() {
                for (j, &gj) in bj.indices.iter().enumerate() {
                    out[(gi, gj)] = back[(i, j)];
                }
            }
        }
        out
    }
}

/// A matrix expressed in a blocked eigenbasis; entry `(p, q)` holds the
/// rows of block `p` against the columns of block `q`. Missing pairs are
/// zero.
#[derive(Debug, Clone, Default)]
pub struct BlockPairs {
    pairs: BTreeMap<(usize, usize), DMatrix<C64>>,
}

impl BlockPairs {
    pub fn get(&self, p: usize, q: usize) -> Option<&DMatrix<C64>> {
        self.pairs.get(&(p, q))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &DMatrix<C64>)> {
        self.pairs.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&(usize, usize), &mut DMatrix<C64>)> {
        self.pairs.iter_mut()
    }
}

/// Splits `m` into its Hermitian part and the Frobenius norm of the
/// anti-Hermitian remainder.
pub fn hermitian_part(m: &DMatrix<C64>) -> (DMatrix<C64>, f64) {
    let adj = m.adjoint();
    let herm = (m + &adj).scale(0.5);
    let anti = (m - &adj).scale(0.5);
    (herm, anti.norm())
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &DMatrix<C64>) -> Result<f64> {
    let eig = HermitianEigen::new(m)?;
    Ok(eig.values().iter().map(|v| v.abs()).sum())
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 1000 * m.nrows().max(10))
        .ok_or(Error::EigenNonConvergence)?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Binomial coefficient as a float; exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    if acc < 9.0e15 {
        acc.round()
    } else {
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        (&a + a.adjoint()).scale(0.5)
    }

    #[test]
    fn dense_decomposition_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_hermitian(12, &mut rng);
        let eig = HermitianEigen::new(&m).unwrap();
        assert_eq!(eig.blocks().len(), 1);
        let back = eig.map_values(|x| x);
        assert!(max_abs(&(back - &m)) < 1e-13);
    }

    #[test]
    fn block_structure_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_hermitian(3, &mut rng);
        let b = random_hermitian(2, &mut rng);
        // interleave: block a on {0, 2, 4}, block b on {1, 3}
        let ia = [0usize, 2, 4];
        let ib = [1usize, 3];
        let mut m = DMatrix::zeros(5, 5);
        for i in 0..3 {
            for j in 0..3 {
                m[(ia[i], ia[j])] = a[(i, j)];
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                m[(ib[i], ib[j])] = b[(i, j)];
            }
        }
        let eig = HermitianEigen::new(&m).unwrap();
        assert_eq!(eig.blocks().len(), 2);
        assert_eq!(eig.blocks()[0].indices, ia.to_vec());
        let back = eig.map_values(|x| x);
        assert!(max_abs(&(back - &m)) < 1e-13);

        let x = random_hermitian(5, &mut rng);
        let roundtrip = eig.from_eigenbasis(&eig.to_eigenbasis(&x));
        assert!(max_abs(&(roundtrip - &x)) < 1e-13);
    }

    #[test]
    fn negative_eigenvalues_are_rejected_beyond_tolerance() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(-1e-12, 0.0),
        ]));
        let mut eig = HermitianEigen::new(&m).unwrap();
        eig.clip_psd().unwrap();
        assert!(eig.values().iter().all(|&v| v >= 0.0));

        let bad = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(-1e-6, 0.0)]));
        let mut eig = HermitianEigen::new(&bad).unwrap();
        assert!(matches!(eig.clip_psd(), Err(Error::NegativeEigenvalue { .. })));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(0, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert_eq!(binomial(40, 20), 137846528820.0);
    }
}
