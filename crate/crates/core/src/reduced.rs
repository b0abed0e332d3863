//! Reduced model of one growing step: a boundary plaquette attached to a
//! bulk that is already in its toric-code ground state.
//!
//! The plaquette keeps one bulk link (hopping `t`, no field) and two edge
//! links (hopping `t_tilde`, field `h`). Its boson and three link spins,
//! constrained by two independent Gauss laws, span six states. The bulk
//! contributes only an energy offset: the block appears once on top of the
//! bulk ground state and once shifted by the bulk excitation gap.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::GrowingPlan;
use crate::effective::{build_lgt_hamiltonian, default_gauss_eigenvalues, gauss_sector_basis, EffectiveParams};
use crate::error::{Error, Result};
use crate::hilbert::BasisSet;
use crate::lattice::{preset, LatticeGeometry};
use crate::linalg::{eigh, eigh_sparse, spectral_gap};
use crate::num::{Real, C};

/// Gauss eigenvalues of the plaquette: both bulk-link ends and the apex at
/// `-1`. The alternative with `+1` on both bulk ends is unitarily equivalent
/// (a `tau^z` on the field-free bulk link maps one onto the other).
const SECTOR: [i8; 3] = [-1, -1, -1];

/// The six-dimensional block Hamiltonian.
#[derive(Debug, Clone)]
pub struct ReducedBlock<T: Real> {
    pub t: T,
    pub t_tilde: T,
    pub h: T,
    /// Energy of the second copy of the block relative to the first.
    pub offset: T,
    pub matrix: DMatrix<C<T>>,
    /// Product-state label of each basis vector (`n=` occupations, `x=` link `tau^x` values).
    pub labels: Vec<String>,
}

struct Layout {
    geom: LatticeGeometry,
    basis: BasisSet,
    bulk: usize,
}

fn layout() -> Layout {
    let geom = preset("tri1").expect("single-plaquette preset");
    let bulk = geom
        .links
        .iter()
        .position(|l| l.ends == [0, 1])
        .expect("triangle has a link between vertices 0 and 1");
    let basis = gauss_sector_basis(&geom, &SECTOR).expect("six-state sector");
    Layout { geom, basis, bulk }
}

impl<T: Real> ReducedBlock<T> {
    pub fn new(t: T, t_tilde: T, h: T) -> Result<Self> {
        if !(t > T::zero()) {
            return Err(Error::param("t", "hopping must be positive"));
        }
        let lay = layout();
        let mut p = EffectiveParams::new(t);
        for l in 0..lay.geom.n_links() {
            let edge = l != lay.bulk;
            p.t_tilde.insert(l, if edge { t_tilde } else { t });
            p.h.insert(l, if edge { h } else { T::zero() });
        }
        let matrix = build_lgt_hamiltonian(&lay.geom, &lay.basis, &p)?.to_dense();
        let labels = lay
            .basis
            .states()
            .iter()
            .map(|s| {
                let n: String = s.occupations.iter().map(|o| o.to_string()).collect();
                let x: String = (0..lay.basis.n_links())
                    .map(|k| if s.link_value(k) > 0 { '+' } else { '-' })
                    .collect();
                format!("n={n} x={x}")
            })
            .collect();
        Ok(Self {
            t,
            t_tilde,
            h,
            offset: t,
            matrix,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        eigh(&self.matrix).values
    }

    /// Levels of both copies of the block, ascending.
    pub fn spectrum(&self) -> Vec<T> {
        let e = self.eigenvalues();
        let mut all: Vec<T> = e.iter().copied().chain(e.iter().map(|&x| x + self.offset)).collect();
        all.sort_by(|a, b| a.partial_cmp(b).expect("finite levels"));
        all
    }
}

/// Gap of the reduced model: first level more than `1e-9 t` above the ground
/// energy, measured from it.
pub fn reduced_gap<T: Real>(t: T, t_tilde: T, h: T) -> Result<T> {
    let block = ReducedBlock::new(t, t_tilde, h)?;
    Ok(spectral_gap(&block.spectrum(), T::of(1e-9) * t).unwrap_or(T::zero()))
}

/// One grid point of [`reduced_vs_full`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapComparison {
    pub t_tilde: f64,
    pub h: f64,
    pub reduced: f64,
    pub full: f64,
}

impl GapComparison {
    pub fn deviation(&self) -> f64 {
        (self.reduced - self.full).abs()
    }
}

/// Compares the reduced gap with full diagonalization of the second growing
/// step on a two-plaquette geometry: the first plaquette fully grown, the
/// second one's fresh links at `(t_tilde, h)`.
pub fn reduced_vs_full<T: Real>(geom: &LatticeGeometry, t: T, t_tilde_grid: &[T], h_grid: &[T]) -> Result<Vec<GapComparison>> {
    if geom.n_plaquettes() != 2 {
        return Err(Error::param("geometry", "the comparison needs exactly two plaquettes"));
    }
    let plan = GrowingPlan::new(geom, t)?;
    let sector = gauss_sector_basis(geom, &default_gauss_eigenvalues(geom))?;
    let points: Vec<(T, T)> = t_tilde_grid
        .iter()
        .flat_map(|&a| h_grid.iter().map(move |&b| (a, b)))
        .collect();
    points
        .par_iter()
        .map(|&(tt, h)| {
            let p = plan.step_params(geom, 1, tt, h)?;
            let e = eigh_sparse(&build_lgt_hamiltonian(geom, &sector, &p)?);
            let full = spectral_gap(&e.values, T::of(1e-9) * t).unwrap_or(T::zero());
            Ok(GapComparison {
                t_tilde: tt.to_f64_lossy(),
                h: h.to_f64_lossy(),
                reduced: reduced_gap(t, tt, h)?.to_f64_lossy(),
                full: full.to_f64_lossy(),
            })
        })
        .collect()
}

/// Largest `|reduced - full|` over a comparison.
pub fn max_deviation(points: &[GapComparison]) -> f64 {
    points.iter().map(GapComparison::deviation).fold(0.0, f64::max)
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * T::of(k as f64 / (n - 1) as f64)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::plaquette_operator;
    use crate::lattice::preset;

    #[test]
    fn block_is_six_dimensional_and_hermitian() {
        let b = ReducedBlock::new(1.0, 0.4, 0.3).unwrap();
        assert_eq!(b.dim(), 6);
        assert_eq!(b.labels.len(), 6);
        assert!((&b.matrix - b.matrix.adjoint()).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn grown_corner_gap_is_t() {
        for t in [0.5f64, 1.0, 2.0] {
            assert!((reduced_gap(t, t, 0.0).unwrap() - t).abs() < 1e-12);
        }
    }

    #[test]
    fn trivial_corner_has_degenerate_ground_manifold() {
        // Edge hoppings and fields off: the boson splits into two degenerate
        // bulk-link modes, the gap is set by the bulk hopping.
        let b = ReducedBlock::new(1.0f64, 0.0, 0.0).unwrap();
        let e = b.eigenvalues();
        assert!((e[0] - e[1]).abs() < 1e-12);
        assert!((reduced_gap(1.0f64, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_spectrum_is_symmetric() {
        // The bipartite-like structure of the block gives E -> -E.
        let e = ReducedBlock::new(1.0f64, 0.37, 0.81).unwrap().eigenvalues();
        for k in 0..3 {
            assert!((e[k] + e[5 - k]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_full_ed_on_interior_points() {
        let g = preset("tri2").unwrap();
        let pts = reduced_vs_full(&g, 1.0, &[0.13, 0.62, 1.0], &[0.0, 0.29, 0.9]).unwrap();
        assert!(max_deviation(&pts) < 1e-10, "{pts:?}");
    }

    #[test]
    fn bulk_plaquette_decouples() {
        let g = preset("tri2").unwrap();
        let plan = GrowingPlan::new(&g, 1.0).unwrap();
        let sector = gauss_sector_basis(&g, &default_gauss_eigenvalues(&g)).unwrap();
        let h = build_lgt_hamiltonian(&g, &sector, &plan.step_params(&g, 1, 0.4, 0.6).unwrap()).unwrap();
        let b = plaquette_operator::<f64>(&g, &sector, 0).unwrap();
        assert!(h.commutator(&b).max_abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_t() {
        assert!(ReducedBlock::<f64>::new(0.0, 0.1, 0.1).is_err());
    }
}
