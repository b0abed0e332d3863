//! Dense Hermitian diagonalization and Krylov propagation.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::num::{cabs, cis, inner, norm, Real, C};
use crate::sparse::SparseOperator;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigh<T: Real> {
    pub values: Vec<T>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: DMatrix<C<T>>,
}

impl<T: Real> Eigh<T> {
    pub fn vector(&self, k: usize) -> Vec<C<T>> {
        self.vectors.column(k).iter().copied().collect()
    }

    /// `exp(-i H t) psi` through the eigenbasis.
    pub fn evolve(&self, psi: &[C<T>], t: T) -> Vec<C<T>> {
        let n = self.values.len();
        let mut coeffs = vec![C::new(T::zero(), T::zero()); n];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let v = self.vectors.column(k);
            let overlap = v.iter().zip(psi).fold(C::new(T::zero(), T::zero()), |a, (x, y)| a + x.conj() * y);
            *c = overlap * cis(-self.values[k] * t);
        }
        let mut out = vec![C::new(T::zero(), T::zero()); psi.len()];
        for (k, c) in coeffs.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.vectors.column(k).iter()) {
                *o += *x * c;
            }
        }
        out
    }
}

/// Diagonalizes a Hermitian matrix. Real input takes the real symmetric path.
pub fn eigh<T: Real>(m: &DMatrix<C<T>>) -> Eigh<T> {
    assert!(m.is_square(), "eigh needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return Eigh {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let (values, vectors) = if m.iter().all(|z| z.im == T::zero()) {
        let re = m.map(|z| z.re);
        let e = SymmetricEigen::new(re);
        (e.eigenvalues.iter().copied().collect::<Vec<T>>(), e.eigenvectors.map(|x| C::new(x, T::zero())))
    } else {
        let e = SymmetricEigen::new(m.clone());
        (e.eigenvalues.iter().copied().collect::<Vec<T>>(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite eigenvalues"));
    let sorted = order.iter().map(|&k| values[k]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    Eigh {
        values: sorted,
        vectors: vecs,
    }
}

pub fn eigh_sparse<T: Real>(op: &SparseOperator<T>) -> Eigh<T> {
    eigh(&op.to_dense())
}

pub fn eigvalsh<T: Real>(m: &DMatrix<C<T>>) -> Vec<T> {
    eigh(m).values
}

/// Size of the ground manifold: eigenvalues within `tol` of the lowest one.
pub fn ground_degeneracy<T: Real>(sorted: &[T], tol: T) -> usize {
    match sorted.first() {
        None => 0,
        Some(&e0) => sorted.iter().take_while(|&&e| e - e0 <= tol).count(),
    }
}

/// Energy of the first level outside the ground manifold minus the ground energy.
/// `None` when every level is degenerate with the ground state.
pub fn spectral_gap<T: Real>(sorted: &[T], tol: T) -> Option<T> {
    let e0 = *sorted.first()?;
    sorted.iter().find(|&&e| e - e0 > tol).map(|&e| e - e0)
}

/// Options of the Lanczos propagator.
#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    pub max_dim: usize,
    /// Absolute error bound on the propagated (unit) vector.
    pub tol: f64,
    /// Maximum number of time-step halvings before giving up.
    pub max_splits: u32,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            max_dim: 40,
            tol: 1e-13,
            max_splits: 20,
        }
    }
}

/// `exp(-i H dt) psi` with a Lanczos projection. The step is halved
/// recursively when the Krylov space is too small for the requested accuracy.
pub fn expm_krylov<T: Real>(h: &SparseOperator<T>, psi: &[C<T>], dt: T, opts: KrylovOptions) -> Result<Vec<C<T>>> {
    expm_split(h, psi, dt, opts, 0)
}

fn expm_split<T: Real>(h: &SparseOperator<T>, psi: &[C<T>], dt: T, opts: KrylovOptions, depth: u32) -> Result<Vec<C<T>>> {
    match lanczos_step(h, psi, dt, opts)? {
        Some(v) => Ok(v),
        None if depth < opts.max_splits => {
            let half = dt / T::of(2.0);
            let mid = expm_split(h, psi, half, opts, depth + 1)?;
            expm_split(h, &mid, half, opts, depth + 1)
        }
        None => Err(Error::Convergence(format!(
            "Krylov propagation did not reach {:e} after {} step halvings",
            opts.tol, opts.max_splits
        ))),
    }
}

fn lanczos_step<T: Real>(h: &SparseOperator<T>, psi: &[C<T>], dt: T, opts: KrylovOptions) -> Result<Option<Vec<C<T>>>> {
    let zero = C::new(T::zero(), T::zero());
    let beta0 = norm(psi);
    if beta0 == T::zero() {
        return Ok(Some(psi.to_vec()));
    }
    let tol = T::of(opts.tol);
    let mut basis: Vec<Vec<C<T>>> = vec![psi.iter().map(|z| z.unscale(beta0)).collect()];
    let mut alpha: Vec<T> = Vec::new();
    let mut beta: Vec<T> = Vec::new();
    let m_max = opts.max_dim.min(psi.len()).max(1);
    let breakdown = T::of(1e-14);
    for j in 0..m_max {
        let mut w = h.matvec(&basis[j]);
        let a = inner(&basis[j], &w).re;
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= vi.scale(a);
        }
        if j > 0 {
            let b = beta[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= vi.scale(b);
            }
        }
        // Full reorthogonalization keeps the small Krylov space orthonormal.
        for v in &basis {
            let c = inner(v, &w);
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= *vi * c;
            }
        }
        alpha.push(a);
        let b = norm(&w);
        let coeffs = tridiagonal_expm(&alpha, &beta, dt);
        let exhausted = b < breakdown || j + 1 == psi.len();
        let err = b * coeffs.last().map(|c| cabs(*c)).unwrap_or(T::zero());
        if exhausted || err < tol {
            let mut out = vec![zero; psi.len()];
            for (c, v) in coeffs.iter().zip(&basis) {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += *x * *c;
                }
            }
            out.iter_mut().for_each(|z| *z = z.scale(beta0));
            return Ok(Some(out));
        }
        if j + 1 == m_max {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|z| z.unscale(b)).collect());
    }
    Ok(None)
}

/// `exp(-i T dt) e_1` for the real symmetric tridiagonal matrix `T`.
fn tridiagonal_expm<T: Real>(alpha: &[T], beta: &[T], dt: T) -> Vec<C<T>> {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            T::zero()
        }
    });
    let e = SymmetricEigen::new(t);
    (0..m)
        .map(|k| {
            (0..m).fold(C::new(T::zero(), T::zero()), |acc, j| {
                let q = e.eigenvectors[(k, j)] * e.eigenvectors[(0, j)];
                acc + cis(-e.eigenvalues[j] * dt).scale(q)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::cr;

    fn random_hermitian(n: usize, seed: u64) -> SparseOperator<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for r in 0..n {
            t.push((r, r, cr(rng.random_range(-2.0..2.0))));
            for _ in 0..3 {
                let c = rng.random_range(0..n);
                if c != r {
                    let v = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    t.push((r, c, v));
                    t.push((c, r, v.conj()));
                }
            }
        }
        SparseOperator::from_triplets(n, n, t)
    }

    #[test]
    fn eigh_reconstructs_matrix() {
        let h = random_hermitian(20, 1);
        let e = eigh_sparse(&h);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(20, e.values.iter().map(|&x| cr(x))));
        let back = &e.vectors * d * e.vectors.adjoint();
        assert!((back - h.to_dense()).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn gap_with_degenerate_ground_manifold() {
        let v = [-2.0, -2.0 + 1e-12, -1.0, 0.5];
        assert_eq!(ground_degeneracy(&v, 1e-9), 2);
        assert_eq!(spectral_gap(&v, 1e-9), Some(1.0));
        assert_eq!(spectral_gap(&[1.0, 1.0], 1e-9), None);
    }

    #[test]
    fn krylov_matches_dense_exponential() {
        let h = random_hermitian(200, 2);
        let e = eigh_sparse(&h);
        let mut psi: Vec<C<f64>> = (0..200).map(|k| C::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        crate::num::normalize(&mut psi);
        for dt in [0.01, 0.5, 3.0] {
            let a = expm_krylov(&h, &psi, dt, KrylovOptions::default()).unwrap();
            let b = e.evolve(&psi, dt);
            let err = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(err < 1e-11, "dt={dt} err={err}");
            assert!((norm(&a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn krylov_invariant_subspace() {
        let h = SparseOperator::from_diagonal(&[cr(1.0), cr(2.0), cr(3.0)]);
        let psi = vec![cr(1.0), cr(0.0), cr(0.0)];
        let out = expm_krylov(&h, &psi, 0.7, KrylovOptions::default()).unwrap();
        assert!((out[0] - cis(-0.7)).norm() < 1e-15);
    }
}
