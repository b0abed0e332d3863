//! Effective Z2 gauge theory with one boson per plaquette: Hamiltonians, Gauss
//! generators, plaquette and vertex operators, the gauge transformation `U`
//! and toric-code reference states.
//!
//! Conventions:
//! * the electric term is `-h tau^x`, so a positive field favours `tau^x = +1`;
//! * hopping amplitudes are attached to links: a double link hops with the
//!   same amplitude in both plaquettes that share it.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{
    build_operator, build_operator_audited, hadamard_all, transfer_state, BasisSet, GaussGenerator, LinkBasis, Op,
    ProductState, SectorConstraint, Term,
};
use crate::lattice::LatticeGeometry;
use crate::linalg::{eigh_sparse, ground_degeneracy};
use crate::num::{cabs, cr, Real, C};
use crate::sparse::{LinearHamiltonian, SparseOperator};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveParams<T: Real> {
    pub t: T,
    /// Hopping overrides per link; links not listed hop with `t`.
    pub t_tilde: BTreeMap<usize, T>,
    /// Electric field per link; links not listed have `h = 0`.
    pub h: BTreeMap<usize, T>,
}

impl<T: Real> EffectiveParams<T> {
    pub fn new(t: T) -> Self {
        Self {
            t,
            t_tilde: BTreeMap::new(),
            h: BTreeMap::new(),
        }
    }

    pub fn hopping(&self, link: usize) -> T {
        self.t_tilde.get(&link).copied().unwrap_or(self.t)
    }

    pub fn field(&self, link: usize) -> T {
        self.h.get(&link).copied().unwrap_or(T::zero())
    }

    /// Same field on every link of `geom`.
    pub fn with_uniform_field(mut self, geom: &LatticeGeometry, h: T) -> Self {
        for l in &geom.links {
            self.h.insert(l.id, h);
        }
        self
    }

    pub fn validate(&self, geom: &LatticeGeometry) -> Result<()> {
        for &l in self.t_tilde.keys().chain(self.h.keys()) {
            if l >= geom.n_links() {
                return Err(Error::UnknownId {
                    kind: "link",
                    id: l,
                    available: geom.n_links(),
                });
            }
        }
        Ok(())
    }

    /// Coefficients matching the parts of [`lgt_parts`]: hoppings, then fields.
    pub fn coefficients(&self, geom: &LatticeGeometry) -> Vec<T> {
        let hop = geom.links.iter().map(|l| self.hopping(l.id));
        let field = geom.links.iter().map(|l| self.field(l.id));
        hop.chain(field).collect()
    }
}

pub fn one_boson_constraint(geom: &LatticeGeometry) -> SectorConstraint {
    SectorConstraint::OneBosonPerPlaquette {
        groups: geom.plaquettes.iter().map(|p| p.sites.to_vec()).collect(),
    }
}

/// `(-1)^(N^P_i)` for every super-site: the sector reached from the trivial
/// product state with one boson placed on each odd super-site.
pub fn default_gauss_eigenvalues(geom: &LatticeGeometry) -> Vec<i8> {
    geom.super_sites
        .iter()
        .map(|s| if s.n_plaquettes % 2 == 1 { -1 } else { 1 })
        .collect()
}

/// Gauss generators `(-1)^(N_i) prod tau^x` for every super-site.
pub fn gauss_generators(geom: &LatticeGeometry, eigenvalues: &[i8]) -> Result<Vec<GaussGenerator>> {
    if eigenvalues.len() != geom.n_super_sites() {
        return Err(Error::param(
            "gauss_sector",
            format!(
                "assignments must cover all {} super-sites, got {}",
                geom.n_super_sites(),
                eigenvalues.len()
            ),
        ));
    }
    Ok(geom
        .super_sites
        .iter()
        .zip(eigenvalues)
        .map(|(s, &ev)| GaussGenerator {
            vertex: s.id,
            sites: s.member_matter_sites.clone(),
            links: s.incident_links.clone(),
            eigenvalue: ev,
        })
        .collect())
}

/// One-boson-per-plaquette basis on every matter site and link.
pub fn effective_basis(geom: &LatticeGeometry, link_basis: LinkBasis) -> Result<BasisSet> {
    BasisSet::for_geometry(geom, link_basis, one_boson_constraint(geom), 1)
}

/// One-boson basis restricted to a Gauss sector (tau^x link basis).
pub fn gauss_sector_basis(geom: &LatticeGeometry, eigenvalues: &[i8]) -> Result<BasisSet> {
    let constraint = SectorConstraint::All(vec![
        one_boson_constraint(geom),
        SectorConstraint::GaussSector {
            generators: gauss_generators(geom, eigenvalues)?,
        },
    ]);
    BasisSet::for_geometry(geom, LinkBasis::TauX, constraint, 1)
}

/// `-amp * sum (a_i^dag tau^z a_j + h.c.)` over every plaquette bond on `link`.
pub fn hopping_terms<T: Real>(geom: &LatticeGeometry, link: usize, amp: T) -> Vec<Term<T>> {
    let mut terms = Vec::new();
    for &p in &geom.links[link].plaquettes {
        let plaq = &geom.plaquettes[p];
        let k = plaq.edge_of(link).expect("link bounds its plaquette");
        let (i, j) = (plaq.sites[k], plaq.sites[(k + 1) % 3]);
        terms.push(Term::new(-amp, vec![Op::Create(i), Op::TauZ(link), Op::Annihilate(j)]));
        terms.push(Term::new(-amp, vec![Op::Create(j), Op::TauZ(link), Op::Annihilate(i)]));
    }
    terms
}

pub fn field_terms<T: Real>(link: usize, h: T) -> Vec<Term<T>> {
    vec![Term::new(-h, vec![Op::TauX(link)])]
}

pub fn lgt_terms<T: Real>(geom: &LatticeGeometry, params: &EffectiveParams<T>) -> Vec<Term<T>> {
    let mut terms = Vec::new();
    for l in &geom.links {
        terms.extend(hopping_terms(geom, l.id, params.hopping(l.id)));
        let h = params.field(l.id);
        if h != T::zero() {
            terms.extend(field_terms(l.id, h));
        }
    }
    terms
}

/// `-sum t~ (a^dag tau^z a + h.c.) - sum h tau^x` in `basis`.
pub fn build_lgt_hamiltonian<T: Real>(
    geom: &LatticeGeometry,
    basis: &BasisSet,
    params: &EffectiveParams<T>,
) -> Result<SparseOperator<T>> {
    params.validate(geom)?;
    let (op, dropped) = build_operator_audited(basis, &lgt_terms(geom, params))?;
    if dropped > T::zero() {
        return Err(Error::BasisMismatch(format!(
            "Hamiltonian leaves the basis sector (dropped norm {dropped:e})"
        )));
    }
    Ok(op)
}

/// Unit hopping and field operators per link, in the order of
/// [`EffectiveParams::coefficients`].
pub fn lgt_parts<T: Real>(geom: &LatticeGeometry, basis: &BasisSet) -> Result<LinearHamiltonian<T>> {
    let mut parts = Vec::with_capacity(2 * geom.n_links());
    for l in &geom.links {
        parts.push((format!("hop:{}", l.id), build_operator(basis, &hopping_terms(geom, l.id, T::one()))?));
    }
    for l in &geom.links {
        parts.push((format!("field:{}", l.id), build_operator(basis, &field_terms(l.id, T::one()))?));
    }
    Ok(LinearHamiltonian::new(parts))
}

/// `G_i = (-1)^(N_i) prod tau^x` at super-site `vertex`.
pub fn gauss_operator<T: Real>(geom: &LatticeGeometry, basis: &BasisSet, vertex: usize) -> Result<SparseOperator<T>> {
    let s = geom.super_sites.get(vertex).ok_or(Error::UnknownId {
        kind: "super-site",
        id: vertex,
        available: geom.n_super_sites(),
    })?;
    let mut ops: Vec<Op> = s.member_matter_sites.iter().map(|&m| Op::Parity(m)).collect();
    ops.extend(s.incident_links.iter().map(|&l| Op::TauX(l)));
    build_operator(basis, &[Term::new(T::one(), ops)])
}

/// Vertex operator `G_V = prod tau^x` over links incident to super-site `vertex`.
pub fn vertex_operator<T: Real>(geom: &LatticeGeometry, basis: &BasisSet, vertex: usize) -> Result<SparseOperator<T>> {
    let s = geom.super_sites.get(vertex).ok_or(Error::UnknownId {
        kind: "super-site",
        id: vertex,
        available: geom.n_super_sites(),
    })?;
    let ops = s.incident_links.iter().map(|&l| Op::TauX(l)).collect();
    build_operator(basis, &[Term::new(T::one(), ops)])
}

/// Plaquette operator `B_P = prod tau^z` around plaquette `n`.
pub fn plaquette_operator<T: Real>(geom: &LatticeGeometry, basis: &BasisSet, n: usize) -> Result<SparseOperator<T>> {
    let p = geom.plaquettes.get(n).ok_or(Error::UnknownId {
        kind: "plaquette",
        id: n,
        available: geom.n_plaquettes(),
    })?;
    let ops = p.links.iter().map(|&l| Op::TauZ(l)).collect();
    build_operator(basis, &[Term::new(T::one(), ops)])
}

/// `(-1)^(Delta n) tau^x`: the image of `tau^x` under the gauge transformation,
/// with `Delta n` counting the matter sites directly attached to the link.
pub fn transformed_tau_x<T: Real>(geom: &LatticeGeometry, basis: &BasisSet, link: usize) -> Result<SparseOperator<T>> {
    let [a, b] = geom.attached_sites(link);
    let mut ops: Vec<Op> = a.iter().chain(&b).map(|&s| Op::Parity(s)).collect();
    ops.push(Op::TauX(link));
    build_operator(basis, &[Term::new(T::one(), ops)])
}

/// Diagonal gauge transformation `U = exp(i sum_j theta_j n_j)` with
/// `theta_j = (pi/2)(tau^z_(j,j+1) - tau^z_(j-1,j))` in each plaquette's cyclic order.
///
/// Since `theta_j` takes only the values `0` and `+-pi`, every phase is `+-1`
/// and `U` is its own inverse.
#[derive(Debug, Clone)]
pub struct GaugeTransform<T: Real> {
    basis: BasisSet,
    phases: Vec<C<T>>,
}

impl<T: Real> GaugeTransform<T> {
    /// Builds `U` on the tau^z version of `basis`'s modes.
    pub fn new(geom: &LatticeGeometry, basis: &BasisSet) -> Result<Self> {
        let z_basis = if basis.link_basis == LinkBasis::TauZ {
            basis.clone()
        } else {
            basis.with(LinkBasis::TauZ, SectorConstraint::None)?
        };
        let mut corners = Vec::new();
        for p in &geom.plaquettes {
            for k in 0..3 {
                corners.push((
                    z_basis.site_position(p.sites[k])?,
                    z_basis.link_position(p.links[k])?,
                    z_basis.link_position(p.links[(k + 2) % 3])?,
                ));
            }
        }
        let phases = z_basis
            .states()
            .iter()
            .map(|s| {
                let theta = corners.iter().fold(0.0f64, |acc, &(site, next, prev)| {
                    let th = PI / 2.0 * f64::from(s.link_value(next) - s.link_value(prev));
                    acc + th * f64::from(s.occupations[site])
                });
                let half_turns = (theta / PI).round() as i64;
                debug_assert!((theta - half_turns as f64 * PI).abs() < 1e-9);
                cr(if half_turns.rem_euclid(2) == 0 { T::one() } else { -T::one() })
            })
            .collect();
        Ok(Self { basis: z_basis, phases })
    }

    /// The tau^z basis in which `U` is diagonal.
    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn phases(&self) -> &[C<T>] {
        &self.phases
    }

    pub fn as_operator(&self) -> SparseOperator<T> {
        SparseOperator::from_diagonal(&self.phases)
    }

    /// `U psi` for a state given in `basis` (either link basis), returned in the same basis.
    pub fn apply(&self, basis: &BasisSet, psi: &[C<T>]) -> Result<Vec<C<T>>> {
        let (mut z, lost) = transfer_state(basis, psi, &self.basis)?;
        if lost > crate::hilbert::norm_tolerance::<T>() {
            return Err(Error::BasisMismatch("state outside the transform's basis".into()));
        }
        z.iter_mut().zip(&self.phases).for_each(|(a, p)| *a *= p);
        let (out, _) = transfer_state(&self.basis, &z, basis)?;
        Ok(out)
    }

    /// `U^dagger psi`; equal to `U psi` because the phases are real.
    pub fn apply_adjoint(&self, basis: &BasisSet, psi: &[C<T>]) -> Result<Vec<C<T>>> {
        let (mut z, _) = transfer_state(basis, psi, &self.basis)?;
        z.iter_mut().zip(&self.phases).for_each(|(a, p)| *a *= p.conj());
        let (out, _) = transfer_state(&self.basis, &z, basis)?;
        Ok(out)
    }
}

/// Link-only toric-code state in the vertex sector `G_V = +1`, with
/// `B_P = plaquette_signs[P]`. Returned as a dense vector over link masks
/// (bit `l` set means eigenvalue `-1`) in the requested link basis.
pub fn toric_code_state<T: Real>(
    geom: &LatticeGeometry,
    plaquette_signs: &[i8],
    link_basis: LinkBasis,
) -> Result<Vec<C<T>>> {
    if plaquette_signs.len() != geom.n_plaquettes() || plaquette_signs.iter().any(|s| s.abs() != 1) {
        return Err(Error::param("plaquette_signs", "one sign (+1 or -1) per plaquette"));
    }
    let generators = geom
        .super_sites
        .iter()
        .map(|s| GaussGenerator {
            vertex: s.id,
            sites: vec![],
            links: s.incident_links.clone(),
            eigenvalue: 1,
        })
        .collect();
    let basis = BasisSet::new(
        vec![],
        geom.links.iter().map(|l| l.id).collect(),
        LinkBasis::TauX,
        SectorConstraint::GaussSector { generators },
    )?;
    let mut h = SparseOperator::zeros(basis.dim(), basis.dim());
    for (n, &s) in plaquette_signs.iter().enumerate() {
        h = h.add_scaled(&plaquette_operator(geom, &basis, n)?, cr(-T::of(f64::from(s))));
    }
    let e = eigh_sparse(&h);
    let tol = T::of(1e-9);
    if ground_degeneracy(&e.values, tol) != 1 {
        return Err(Error::Domain("toric-code state is not unique in this sector".into()));
    }
    let target = -T::of(geom.n_plaquettes() as f64);
    if (e.values[0] - target).abs() > tol {
        return Err(Error::Domain("requested plaquette signs are not realizable".into()));
    }
    let mut out = vec![C::new(T::zero(), T::zero()); 1 << geom.n_links()];
    for (k, s) in basis.states().iter().enumerate() {
        out[s.links as usize] = e.vectors[(k, 0)];
    }
    fix_global_phase(&mut out);
    if link_basis == LinkBasis::TauZ {
        hadamard_all(&mut out);
    }
    Ok(out)
}

/// Rotates `v` so its largest component is real and positive.
pub fn fix_global_phase<T: Real>(v: &mut [C<T>]) {
    let pivot = v
        .iter()
        .copied()
        .fold(C::new(T::zero(), T::zero()), |best, z| if cabs(z) > cabs(best) + T::of(1e-12) { z } else { best });
    if cabs(pivot) > T::zero() {
        let phase = pivot.conj().unscale(cabs(pivot));
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

/// Exact eigenstate `U^dagger (matter (x) toric)` of the `h = 0` Hamiltonian:
/// each plaquette's boson is in the uniform superposition of its three sites and
/// the links carry the toric-code state with the given plaquette signs.
/// The result is expressed in `basis` (one boson per plaquette, any link basis).
pub fn exact_eigenstate<T: Real>(
    geom: &LatticeGeometry,
    basis: &BasisSet,
    plaquette_signs: &[i8],
) -> Result<Vec<C<T>>> {
    let links = toric_code_state::<T>(geom, plaquette_signs, LinkBasis::TauZ)?;
    let z_basis = effective_basis(geom, LinkBasis::TauZ)?;
    let u = GaugeTransform::<T>::new(geom, &z_basis)?;
    let amp = T::one() / T::of(3f64.powi(geom.n_plaquettes() as i32)).sqrt();
    let psi: Vec<C<T>> = z_basis
        .states()
        .iter()
        .zip(u.phases())
        .map(|(s, p)| links[s.links as usize].scale(amp) * p.conj())
        .collect();
    let (out, lost) = transfer_state(&z_basis, &psi, basis)?;
    if lost > crate::hilbert::norm_tolerance::<T>() {
        return Err(Error::BasisMismatch(format!(
            "eigenstate has weight {:e} outside the target basis",
            lost.to_f64_lossy()
        )));
    }
    Ok(out)
}

/// Single-plaquette band `-2t cos(k + Phi)` for `k in {0, +-2pi/3}`,
/// `Phi = 0` for `B_P = +1` and `pi` for `B_P = -1`, sorted ascending.
pub fn single_triangle_spectrum<T: Real>(t: T, plaquette_sign: i8) -> Vec<T> {
    let phi = if plaquette_sign < 0 { PI } else { 0.0 };
    let mut e: Vec<T> = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0]
        .iter()
        .map(|k| t * T::of(-2.0 * (k + phi).cos()))
        .collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

/// Trivial product state: all `tau^x = +1`, the boson of plaquette `p` on the
/// corner given by `corners[p]` (an index into `plaquette.sites`).
pub fn product_state<T: Real>(geom: &LatticeGeometry, basis: &BasisSet, corners: &[usize]) -> Result<Vec<C<T>>> {
    if basis.link_basis != LinkBasis::TauX {
        return Err(Error::param("link_basis", "product states are built in the tau^x basis"));
    }
    let mut occ = vec![0u8; basis.matter_modes.len()];
    for (p, &k) in geom.plaquettes.iter().zip(corners) {
        occ[basis.site_position(p.sites[k % 3])?] = 1;
    }
    let idx = basis
        .index_of(&ProductState {
            occupations: occ,
            links: 0,
        })
        .ok_or_else(|| Error::BasisMismatch("product state outside the basis sector".into()))?;
    Ok(crate::hilbert::unit_vector(basis.dim(), idx))
}

/// One eigenlevel with its plaquette and vertex expectation values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelledLevel {
    pub energy: f64,
    pub plaquettes: Vec<f64>,
    pub vertices: Vec<f64>,
}

/// Lowest `n_levels` eigenlevels in the Gauss sector `gauss`. Inside each
/// degenerate cluster the eigenvectors are rotated onto eigenvectors of a
/// weighted sum of plaquette operators, so fluxes come out sharp whenever
/// they are conserved (zero field).
pub fn labelled_spectrum<T: Real>(
    geom: &LatticeGeometry,
    params: &EffectiveParams<T>,
    gauss: &[i8],
    n_levels: usize,
) -> Result<Vec<LabelledLevel>> {
    let basis = gauss_sector_basis(geom, gauss)?;
    let e = eigh_sparse(&build_lgt_hamiltonian(geom, &basis, params)?);
    let bs: Vec<SparseOperator<T>> = (0..geom.n_plaquettes())
        .map(|n| plaquette_operator(geom, &basis, n))
        .collect::<Result<_>>()?;
    let vs: Vec<SparseOperator<T>> = (0..geom.n_super_sites())
        .map(|v| vertex_operator(geom, &basis, v))
        .collect::<Result<_>>()?;
    let mut weighted = SparseOperator::zeros(basis.dim(), basis.dim());
    for (k, b) in bs.iter().enumerate() {
        weighted = weighted.add_scaled(b, cr(T::of(3f64.powi(k as i32))));
    }
    let tol = T::of(1e-9) * params.t.abs().max(T::one());
    let n = n_levels.min(basis.dim());
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < e.values.len() && e.values[end] - e.values[start] < tol {
            end += 1;
        }
        let cluster = e.vectors.columns(start, end - start).into_owned();
        let proj = cluster.adjoint() * weighted.to_dense() * &cluster;
        let rot = crate::linalg::eigh(&proj);
        let vecs = &cluster * &rot.vectors;
        for k in 0..(end - start).min(n - start) {
            let v: Vec<C<T>> = vecs.column(k).iter().copied().collect();
            let ev = |ops: &[SparseOperator<T>]| ops.iter().map(|o| o.expectation(&v).re.to_f64_lossy()).collect();
            out.push(LabelledLevel {
                energy: e.values[start + k].to_f64_lossy(),
                plaquettes: ev(&bs),
                vertices: ev(&vs),
            });
        }
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::preset;
    use crate::linalg::eigvalsh;
    use crate::num::{inner, norm};
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn single_triangle_bands_per_plaquette_sector() {
        assert!(close(&single_triangle_spectrum(1.0, 1), &[-2.0, 1.0, 1.0], 1e-14));
        assert!(close(&single_triangle_spectrum(1.0, -1), &[-1.0, -1.0, 2.0], 1e-14));

        let g = preset("tri1").unwrap();
        let t = 0.7;
        for ev in [[-1i8, -1, -1], [-1, 1, 1], [1, -1, 1], [1, 1, -1]] {
            let basis = gauss_sector_basis(&g, &ev).unwrap();
            assert_eq!(basis.dim(), 6);
            let h = build_lgt_hamiltonian(&g, &basis, &EffectiveParams::new(t)).unwrap();
            let mut expect: Vec<f64> = single_triangle_spectrum(t, 1);
            expect.extend(single_triangle_spectrum(t, -1));
            expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!(close(&eigvalsh(&h.to_dense()), &expect, 1e-12));
        }
    }

    #[test]
    fn pure_field_spectrum() {
        let g = preset("tri1").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauX).unwrap();
        let h0: f64 = 0.4;
        let params = EffectiveParams::new(0.0).with_uniform_field(&g, h0);
        let e = crate::linalg::eigh_sparse(&build_lgt_hamiltonian(&g, &basis, &params).unwrap());
        assert!((e.values[0] + 3.0 * h0).abs() < TOL);
        assert!((e.values.last().unwrap() - 3.0 * h0).abs() < TOL);
        // Ground manifold: the three boson positions, all links tau^x = +1.
        assert_eq!(ground_degeneracy(&e.values, 1e-9), 3);
        for k in 0..3 {
            let v = e.vector(k);
            let w: f64 = basis
                .states()
                .iter()
                .zip(&v)
                .filter(|(s, _)| s.links == 0)
                .map(|(_, a)| a.norm_sqr())
                .sum();
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plaquette_and_vertex_operators() {
        let g = preset("tri3").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauZ).unwrap();
        let id = SparseOperator::<f64>::identity(basis.dim());
        let bs: Vec<_> = (0..3).map(|n| plaquette_operator::<f64>(&g, &basis, n).unwrap()).collect();
        let vs: Vec<_> = (0..5).map(|i| vertex_operator::<f64>(&g, &basis, i).unwrap()).collect();
        for b in &bs {
            assert_eq!(b.matmul(b).sub(&id).max_abs(), 0.0);
            for v in &vs {
                assert!(b.commutator(v).max_abs() < 1e-14);
            }
        }
        for v in &vs {
            assert_eq!(v.matmul(v).sub(&id).max_abs(), 0.0);
        }
        // All tau^z = +1 gives B = +1; flipping one link of P gives -1.
        let up = basis.index_of(&ProductState { occupations: basis.state(0).occupations.clone(), links: 0 }).unwrap();
        assert_eq!(bs[0].get(up, up).re, 1.0);
        let l = g.plaquettes[0].links[1];
        let down = basis
            .index_of(&ProductState { occupations: basis.state(0).occupations.clone(), links: 1 << l })
            .unwrap();
        assert_eq!(bs[0].get(down, down).re, -1.0);
        assert!(plaquette_operator::<f64>(&g, &basis, 5).is_err());
    }

    #[test]
    fn sector_dimensions() {
        let g1 = preset("tri1").unwrap();
        assert_eq!(gauss_sector_basis(&g1, &default_gauss_eigenvalues(&g1)).unwrap().dim(), 6);
        let g2 = preset("tri2").unwrap();
        assert_eq!(gauss_sector_basis(&g2, &default_gauss_eigenvalues(&g2)).unwrap().dim(), 36);
        let g3 = preset("tri3").unwrap();
        assert_eq!(gauss_sector_basis(&g3, &default_gauss_eigenvalues(&g3)).unwrap().dim(), 216);
        // Odd total parity cannot be realized with an even product of eigenvalues.
        let mut bad = default_gauss_eigenvalues(&g1);
        bad[0] = -bad[0];
        assert!(matches!(gauss_sector_basis(&g1, &bad), Err(Error::EmptyBasis(_))));
        assert!(gauss_sector_basis(&g1, &[1]).is_err());
    }

    #[test]
    fn gauge_transform_laws_single_plaquette() {
        check_transform_laws(&preset("tri1").unwrap());
    }

    fn check_transform_laws(g: &LatticeGeometry) {
        let basis = effective_basis(g, LinkBasis::TauZ).unwrap();
        let u = GaugeTransform::<f64>::new(g, &basis).unwrap().as_operator();
        let ud = u.adjoint();
        let id = SparseOperator::identity(basis.dim());
        assert!(ud.matmul(&u).sub(&id).max_abs() < 1e-14);

        for l in &g.links {
            let tx = build_operator::<f64>(&basis, &field_terms(l.id, -1.0)).unwrap();
            let lhs = ud.matmul(&tx).matmul(&u);
            let rhs = transformed_tau_x::<f64>(g, &basis, l.id).unwrap();
            assert!(lhs.sub(&rhs).max_abs() < TOL);
        }

        let h0 = build_lgt_hamiltonian(g, &basis, &EffectiveParams::new(1.3)).unwrap();
        let ht = ud.matmul(&h0).matmul(&u);
        for n in 0..g.n_plaquettes() {
            let b = plaquette_operator(g, &basis, n).unwrap();
            assert!(ht.commutator(&b).max_abs() < TOL);
        }

        for s in &g.super_sites {
            let gi = gauss_operator::<f64>(g, &basis, s.id).unwrap();
            let gt = ud.matmul(&gi).matmul(&u);
            let sign = if s.n_plaquettes % 2 == 1 { -1.0 } else { 1.0 };
            let gv = vertex_operator::<f64>(g, &basis, s.id).unwrap().scale(cr(sign));
            assert!(gt.sub(&gv).max_abs() < TOL);
        }
    }

    #[test]
    fn transformed_hamiltonian_has_cosine_bands() {
        let g = preset("tri2").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauZ).unwrap();
        let t = 0.9;
        let u = GaugeTransform::<f64>::new(&g, &basis).unwrap().as_operator();
        let h = build_lgt_hamiltonian(&g, &basis, &EffectiveParams::new(t)).unwrap();
        let ht = u.adjoint().matmul(&h).matmul(&u);
        let e1 = eigvalsh(&h.to_dense());
        let e2 = eigvalsh(&ht.to_dense());
        assert!(close(&e1, &e2, 1e-12));
        // Each link configuration contributes sum of one band energy per plaquette.
        let mut expect = Vec::new();
        for mask in 0..(1u64 << g.n_links()) {
            let signs: Vec<i8> = g
                .plaquettes
                .iter()
                .map(|p| if p.links.iter().map(|&l| mask >> l & 1).sum::<u64>() % 2 == 1 { -1 } else { 1 })
                .collect();
            let b0 = single_triangle_spectrum(t, signs[0]);
            let b1 = single_triangle_spectrum(t, signs[1]);
            for x in &b0 {
                for y in &b1 {
                    expect.push(x + y);
                }
            }
        }
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(close(&e1, &expect, 1e-12));
    }

    #[test]
    fn transformed_field_respects_transformed_sectors() {
        let g = preset("tri1").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauZ).unwrap();
        for l in &g.links {
            let e = transformed_tau_x::<f64>(&g, &basis, l.id).unwrap();
            for s in &g.super_sites {
                let gv = vertex_operator::<f64>(&g, &basis, s.id).unwrap();
                assert!(e.commutator(&gv).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn toric_state_single_plaquette() {
        let g = preset("tri1").unwrap();
        let psi = toric_code_state::<f64>(&g, &[1], LinkBasis::TauX).unwrap();
        let s = 0.5f64.sqrt();
        assert!((psi[0].re - s).abs() < 1e-14);
        assert!((psi[7].re - s).abs() < 1e-14);
        assert!(psi[1..7].iter().all(|z| z.norm() < 1e-14));
        let vison = toric_code_state::<f64>(&g, &[-1], LinkBasis::TauX).unwrap();
        assert!((vison[0].re + vison[7].re).abs() < 1e-14);
    }

    #[test]
    fn toric_state_three_plaquettes() {
        let g = preset("tri3").unwrap();
        let links: Vec<usize> = g.links.iter().map(|l| l.id).collect();
        let lb = BasisSet::new(vec![], links, LinkBasis::TauZ, SectorConstraint::None).unwrap();
        for signs in [[1i8, 1, 1], [1, -1, 1]] {
            let masked = toric_code_state::<f64>(&g, &signs, LinkBasis::TauZ).unwrap();
            let psi: Vec<C<f64>> = lb.states().iter().map(|s| masked[s.links as usize]).collect();
            assert!((norm(&psi) - 1.0).abs() < 1e-12);
            for (n, &s) in signs.iter().enumerate() {
                let b = plaquette_operator::<f64>(&g, &lb, n).unwrap();
                assert!((b.expectation(&psi).re - f64::from(s)).abs() < 1e-12);
            }
            for v in &g.super_sites {
                let gv = vertex_operator::<f64>(&g, &lb, v.id).unwrap();
                assert!((gv.expectation(&psi).re - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_eigenstate_is_eigenvector() {
        let g = preset("tri3").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauX).unwrap();
        let t = 1.0;
        let h = build_lgt_hamiltonian(&g, &basis, &EffectiveParams::new(t)).unwrap();
        for signs in [[1i8, 1, 1], [1, -1, 1]] {
            let psi = exact_eigenstate::<f64>(&g, &basis, &signs).unwrap();
            let e = h.expectation(&psi).re;
            let expect: f64 = signs.iter().map(|&s| -2.0 * t * f64::from(s)).sum();
            assert!((e - expect).abs() < 1e-12);
            let hpsi = h.matvec(&psi);
            let resid: Vec<C<f64>> = hpsi.iter().zip(&psi).map(|(a, b)| a - b.scale(e)).collect();
            assert!(norm(&resid) < 1e-12);
            assert!((inner(&psi, &psi).re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_override_link_is_rejected() {
        let g = preset("tri1").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauZ).unwrap();
        let mut p = EffectiveParams::new(1.0);
        p.h.insert(9, 0.1);
        assert!(matches!(build_lgt_hamiltonian(&g, &basis, &p), Err(Error::UnknownId { .. })));
    }

    #[test]
    fn parts_reassemble_hamiltonian() {
        let g = preset("tri2").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauX).unwrap();
        let mut p = EffectiveParams::new(1.0).with_uniform_field(&g, 0.3);
        p.t_tilde.insert(3, 0.25);
        let lin = lgt_parts::<f64>(&g, &basis).unwrap();
        let a = lin.assemble(&p.coefficients(&g));
        let b = build_lgt_hamiltonian(&g, &basis, &p).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-15);
    }

    #[test]
    fn labelled_spectrum_has_sharp_fluxes() {
        let g = preset("tri3").unwrap();
        let levels = labelled_spectrum(&g, &EffectiveParams::new(1.0), &default_gauss_eigenvalues(&g), 20).unwrap();
        assert_eq!(levels.len(), 20);
        assert!((levels[0].energy + 6.0).abs() < 1e-12);
        for l in &levels {
            // Flux and energy agree: each plaquette carries one band level.
            assert!(l.plaquettes.iter().all(|b| (b.abs() - 1.0).abs() < 1e-10));
            // Bare vertex operators miss the matter parity and are not sharp.
            assert!(l.vertices.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
        assert_eq!(levels[0].plaquettes.iter().map(|b| b.round() as i32).collect::<Vec<_>>(), vec![1, 1, 1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn gauss_generators_commute_with_hamiltonian(
            tt in prop::collection::vec(0.0f64..1.0, 7),
            hh in prop::collection::vec(-1.0f64..1.0, 7),
        ) {
            let g = preset("tri3").unwrap();
            let basis = effective_basis(&g, LinkBasis::TauX).unwrap();
            let mut p = EffectiveParams::new(1.0);
            for l in 0..7 {
                p.t_tilde.insert(l, tt[l]);
                p.h.insert(l, hh[l]);
            }
            let h = build_lgt_hamiltonian(&g, &basis, &p).unwrap();
            prop_assert!(h.hermiticity_error() < 1e-12);
            for s in &g.super_sites {
                let gi = gauss_operator::<f64>(&g, &basis, s.id).unwrap();
                prop_assert!(gi.commutator(&h).max_abs() < 1e-12);
            }
        }
    }
}
