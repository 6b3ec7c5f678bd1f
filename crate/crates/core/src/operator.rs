//! Sparse complex operators on the occupation basis (CSR layout).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::fock::spin_counts;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseOperator {
    pub fn zeros(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Duplicate coordinates are summed; entries that cancel to exactly zero
    /// are dropped.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Self {
        let mut rows: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); dim];
        for (i, j, v) in triplets {
            assert!(i < dim && j < dim, "triplet ({i}, {j}) outside dimension {dim}");
            *rows[i].entry(j).or_insert(Complex64::new(0.0, 0.0)) += v;
        }
        let mut op = SparseOperator::zeros(dim);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row {
                if v != Complex64::new(0.0, 0.0) {
                    op.cols.push(j);
                    op.vals.push(v);
                }
            }
            op.row_ptr[i + 1] = op.cols.len();
        }
        op
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let dim = m.nrows();
        Self::from_triplets(
            dim,
            (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j, m[(i, j)]))),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map_or(Complex64::new(0.0, 0.0), |(_, v)| v)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.iter().map(|(i, j, v)| (j, i, v.conj())))
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Largest absolute row sum, an upper bound on the spectral norm of a
    /// Hermitian operator.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &SparseOperator) -> f64 {
        assert_eq!(self.dim, other.dim);
        let a = self.iter().map(|(i, j, v)| (v - other.get(i, j)).norm());
        let b = other.iter().map(|(i, j, v)| (v - self.get(i, j)).norm());
        a.chain(b).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    /// Diagonal entries, for operators known to be diagonal.
    pub fn is_diagonal(&self) -> bool {
        self.iter().all(|(i, j, _)| i == j)
    }

    /// Invariant blocks of basis indices. When every nonzero entry connects two
    /// masks with equal `(n_up, n_down)` the blocks are those sectors; otherwise
    /// the whole space is one block.
    pub fn invariant_blocks(&self) -> Vec<Vec<usize>> {
        let conserving = self.iter().all(|(i, j, _)| spin_counts(i) == spin_counts(j));
        if !conserving {
            return vec![(0..self.dim).collect()];
        }
        let mut sectors: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
        for mask in 0..self.dim {
            sectors.entry(spin_counts(mask)).or_default().push(mask);
        }
        sectors.into_values().collect()
    }
}
