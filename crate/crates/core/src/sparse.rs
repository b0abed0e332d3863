//! Compressed-sparse-row complex operators.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::num::{abs2, cabs, Real, C};

/// Rows above this count are multiplied in parallel.
const PAR_ROWS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T: Real> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C<T>>,
}

impl<T: Real> SparseOperator<T> {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// entries that cancel to exactly zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C<T>)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<C<T>> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if rows.last() == Some(&r) && col_idx.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        let zero = C::new(T::zero(), T::zero());
        let mut keep_cols = Vec::with_capacity(col_idx.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(col_idx).zip(values) {
            if v != zero {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx: keep_cols,
            values: keep_vals,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![C::new(T::one(), T::zero()); n])
    }

    pub fn from_diagonal(diag: &[C<T>]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C<T>)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C<T>)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    /// Entry `(r, c)`, zero if not stored.
    pub fn get(&self, r: usize, c: usize) -> C<T> {
        self.row(r)
            .find(|&(col, _)| col == c)
            .map(|(_, v)| v)
            .unwrap_or_else(|| C::new(T::zero(), T::zero()))
    }

    /// `out = self * x`.
    pub fn matvec_into(&self, x: &[C<T>], out: &mut [C<T>]) {
        assert_eq!(x.len(), self.ncols, "matvec: vector length");
        assert_eq!(out.len(), self.nrows, "matvec: output length");
        let row = |r: usize| {
            let mut acc = C::new(T::zero(), T::zero());
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            acc
        };
        if self.nrows >= PAR_ROWS {
            out.par_iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
        } else {
            out.iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
        }
    }

    pub fn matvec(&self, x: &[C<T>]) -> Vec<C<T>> {
        let mut out = vec![C::new(T::zero(), T::zero()); self.nrows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `<x|self|x>`.
    pub fn expectation(&self, x: &[C<T>]) -> C<T> {
        crate::num::inner(x, &self.matvec(x))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect(),
        )
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: C<T>) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch");
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(r, c, v)| (r, c, v * s)));
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(other, C::new(T::one(), T::zero()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(other, C::new(-T::one(), T::zero()))
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul: inner dimension");
        let rows: Vec<Vec<(usize, usize, C<T>)>> = (0..self.nrows)
            .into_par_iter()
            .map(|r| {
                let mut acc: std::collections::BTreeMap<usize, C<T>> = Default::default();
                for (k, a) in self.row(r) {
                    for (c, b) in other.row(k) {
                        *acc.entry(c).or_insert_with(|| C::new(T::zero(), T::zero())) += a * b;
                    }
                }
                acc.into_iter().map(|(c, v)| (r, c, v)).collect()
            })
            .collect();
        Self::from_triplets(self.nrows, other.ncols, rows.into_iter().flatten().collect())
    }

    /// `[self, other] = self*other - other*self`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    /// Largest entry modulus (zero for an empty operator).
    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(cabs(*v)))
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> T {
        self.values.iter().fold(T::zero(), |s, v| s + abs2(*v)).sqrt()
    }

    /// `max |M - M^dagger|` elementwise.
    pub fn hermiticity_error(&self) -> T {
        self.sub(&self.adjoint()).max_abs()
    }

    /// Whether every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == T::zero())
    }

    pub fn diagonal(&self) -> Vec<C<T>> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<C<T>> {
        let mut m = DMatrix::from_element(self.nrows, self.ncols, C::new(T::zero(), T::zero()));
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Coordinate-list dump, one `row col re im` line per entry.
    pub fn to_coo_text(&self) -> String {
        let mut s = format!("% {} {} {}\n", self.nrows, self.ncols, self.nnz());
        for (r, c, v) in self.triplets() {
            s.push_str(&format!("{r} {c} {:.16e} {:.16e}\n", v.re, v.im));
        }
        s
    }
}

/// A parametrized Hamiltonian `H(c) = sum_k c_k P_k` with fixed parts.
///
/// The sparsity pattern of the sum is merged once, so assembling `H(c)` for a
/// new coefficient vector is a single pass over the stored entries.
#[derive(Debug, Clone)]
pub struct LinearHamiltonian<T: Real> {
    names: Vec<String>,
    pattern: SparseOperator<T>,
    /// For each part, `(slot in pattern, value)`.
    slots: Vec<Vec<(usize, C<T>)>>,
}

impl<T: Real> LinearHamiltonian<T> {
    pub fn new(parts: Vec<(String, SparseOperator<T>)>) -> Self {
        assert!(!parts.is_empty(), "linear Hamiltonian needs at least one part");
        let (nr, nc) = (parts[0].1.nrows, parts[0].1.ncols);
        let one = C::new(T::one(), T::zero());
        let mut union: Vec<(usize, usize, C<T>)> = Vec::new();
        for (_, p) in &parts {
            assert_eq!((p.nrows, p.ncols), (nr, nc), "all parts must share a shape");
            union.extend(p.triplets().map(|(r, c, _)| (r, c, one)));
        }
        let mut pattern = SparseOperator::from_triplets(nr, nc, union);
        pattern.values.iter_mut().for_each(|v| *v = one);
        let slots = parts
            .iter()
            .map(|(_, p)| {
                p.triplets()
                    .map(|(r, c, v)| {
                        let lo = pattern.row_ptr[r];
                        let hi = pattern.row_ptr[r + 1];
                        let k = pattern.col_idx[lo..hi]
                            .binary_search(&c)
                            .expect("entry present in merged pattern");
                        (lo + k, v)
                    })
                    .collect()
            })
            .collect();
        Self {
            names: parts.into_iter().map(|(n, _)| n).collect(),
            pattern,
            slots,
        }
    }

    pub fn n_parts(&self) -> usize {
        self.slots.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn part_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn dim(&self) -> usize {
        self.pattern.nrows
    }

    /// `sum_k coeffs[k] * P_k` as a sparse operator (pattern kept, zeros included).
    pub fn assemble(&self, coeffs: &[T]) -> SparseOperator<T> {
        assert_eq!(coeffs.len(), self.slots.len(), "one coefficient per part");
        let mut out = self.pattern.clone();
        out.values.iter_mut().for_each(|v| *v = C::new(T::zero(), T::zero()));
        for (slots, &c) in self.slots.iter().zip(coeffs) {
            if c == T::zero() {
                continue;
            }
            for &(k, v) in slots {
                out.values[k] += v.scale(c);
            }
        }
        out
    }
}
