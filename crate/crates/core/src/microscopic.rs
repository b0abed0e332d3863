//! Oscillator model underlying the effective gauge theory.
//!
//! Matter sites are harmonic modes at the rotating-frame frequency (zero);
//! every link is a pair of anharmonic couplers `c`, `d` detuned by `Delta`
//! and holding one photon, with `tau^z = n_c - n_d` and
//! `tau^x = c^dag d + d^dag c`. The couplers tunnel to the matter sites of
//! the link with amplitude `-g`, except one `d` leg which carries `+g`. In
//! second order this produces the gauge-invariant hopping
//! `-t_eff (a_i^dag tau^z a_j + h.c.)` with
//! `t_eff = 2 g^2 (1 / (Delta - beta) - 1 / Delta)`, where the couplers carry
//! `-beta/2 n (n - 1)`. Energies are in units of `g`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::effective::{build_lgt_hamiltonian, product_state, EffectiveParams};
use crate::error::{Error, Result};
use crate::hilbert::{build_operator, BasisSet, LinkBasis, Op, ProductState, SectorConstraint, Term};
use crate::lattice::preset;
use crate::linalg::{eigh_sparse, Eigh};
use crate::num::{abs2, cr, inner, Real, C};
use crate::sparse::SparseOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Matter,
    Coupler,
}

/// One oscillator: `frequency * n - anharmonicity / 2 * n (n - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillatorSpec<T: Real> {
    pub site_id: usize,
    pub label: String,
    pub role: Role,
    pub frequency: T,
    pub anharmonicity: T,
}

/// Tunneling `amplitude * (a^dag b + b^dag a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingSpec<T: Real> {
    pub a: usize,
    pub b: usize,
    pub amplitude: T,
}

/// The coupler pair realizing one gauge link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkCouplers {
    pub c: usize,
    pub d: usize,
    /// Super-sites joined by the link.
    pub ends: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LayoutKind {
    SingleBlock,
    MergedChain,
    DoubleLink,
    FullTriangle,
}

/// Oscillators, tunnelings and their gauge-theory interpretation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicroscopicLayout<T: Real> {
    pub kind: LayoutKind,
    pub oscillators: Vec<OscillatorSpec<T>>,
    pub couplings: Vec<CouplingSpec<T>>,
    pub links: Vec<LinkCouplers>,
    /// Matter oscillators grouped by super-site.
    pub super_sites: Vec<Vec<usize>>,
}

/// Parameters of one link: coupler detuning, anharmonicity, tunneling and
/// the `c`-`d` exchange `h` that acts as the electric field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkParams<T: Real> {
    pub delta: T,
    pub beta: T,
    pub g: T,
    pub h: T,
}

impl<T: Real> LinkParams<T> {
    pub fn new(delta: T, beta: T, g: T) -> Self {
        Self {
            delta,
            beta,
            g,
            h: T::zero(),
        }
    }
}

struct Builder<T: Real> {
    layout: MicroscopicLayout<T>,
}

impl<T: Real> Builder<T> {
    fn new(kind: LayoutKind) -> Self {
        Self {
            layout: MicroscopicLayout {
                kind,
                oscillators: Vec::new(),
                couplings: Vec::new(),
                links: Vec::new(),
                super_sites: Vec::new(),
            },
        }
    }

    fn matter(&mut self, label: String) -> usize {
        let id = self.layout.oscillators.len();
        self.layout.oscillators.push(OscillatorSpec {
            site_id: id,
            label,
            role: Role::Matter,
            frequency: T::zero(),
            anharmonicity: T::zero(),
        });
        id
    }

    fn coupler(&mut self, label: String, p: &LinkParams<T>) -> usize {
        let id = self.layout.oscillators.len();
        self.layout.oscillators.push(OscillatorSpec {
            site_id: id,
            label,
            role: Role::Coupler,
            frequency: p.delta,
            anharmonicity: p.beta,
        });
        id
    }

    fn couple(&mut self, a: usize, b: usize, amplitude: T) {
        self.layout.couplings.push(CouplingSpec { a, b, amplitude });
    }

    /// Adds the coupler pair of a link serving the matter bonds `bonds` (each
    /// `(i, j, g)`), with the sign-reversed `d -> j` leg.
    fn link(&mut self, name: &str, p: &LinkParams<T>, bonds: &[(usize, usize, T)], ends: [usize; 2]) {
        let c = self.coupler(format!("c{name}"), p);
        let d = self.coupler(format!("d{name}"), p);
        for &(i, j, g) in bonds {
            self.couple(i, c, -g);
            self.couple(j, c, -g);
            self.couple(i, d, -g);
            self.couple(j, d, g);
        }
        if p.h != T::zero() {
            self.couple(c, d, p.h);
        }
        self.layout.links.push(LinkCouplers { c, d, ends });
    }
}

/// Two matter sites `A`, `B` joined by one link.
pub fn single_block<T: Real>(p: LinkParams<T>) -> MicroscopicLayout<T> {
    let mut b = Builder::new(LayoutKind::SingleBlock);
    let a = b.matter("A".into());
    let bb = b.matter("B".into());
    b.link("", &p, &[(a, bb, p.g)], [0, 1]);
    b.layout.super_sites = vec![vec![a], vec![bb]];
    b.layout
}

/// Open chain of matter sites with one building block per bond.
pub fn merged_chain<T: Real>(links: &[LinkParams<T>]) -> Result<MicroscopicLayout<T>> {
    if links.is_empty() {
        return Err(Error::param("links", "a chain needs at least one link"));
    }
    let mut b = Builder::new(LayoutKind::MergedChain);
    let sites: Vec<usize> = (0..=links.len()).map(|k| b.matter(format!("A{}", k + 1))).collect();
    for (k, p) in links.iter().enumerate() {
        b.link(&(k + 1).to_string(), p, &[(sites[k], sites[k + 1], p.g)], [k, k + 1]);
    }
    b.layout.super_sites = sites.iter().map(|&s| vec![s]).collect();
    Ok(b.layout)
}

/// One link shared by the bonds `a1-a2` (tunneling `g`) and `b1-b2` of two
/// adjacent plaquettes. The `b` sites sit `delta_tilde` above the `a` sites,
/// which detunes hopping between the bonds, and their tunneling is chosen
/// so that both bonds hop with the same `t_eff`. Super-sites are `{a1, b1}`
/// and `{a2, b2}`.
pub fn double_link<T: Real>(p: LinkParams<T>, delta_tilde: T) -> Result<MicroscopicLayout<T>> {
    let g_tilde = double_link_tunneling(&p, delta_tilde)?;
    let mut b = Builder::new(LayoutKind::DoubleLink);
    let a1 = b.matter("a1".into());
    let a2 = b.matter("a2".into());
    let b1 = b.matter("b1".into());
    let b2 = b.matter("b2".into());
    for s in [b1, b2] {
        b.layout.oscillators[s].frequency = delta_tilde;
    }
    b.link("", &p, &[(a1, a2, p.g), (b1, b2, g_tilde)], [0, 1]);
    b.layout.super_sites = vec![vec![a1, b1], vec![a2, b2]];
    Ok(b.layout)
}

/// Tunneling of the offset bond of a double link that restores the hopping
/// of the unshifted bond.
pub fn double_link_tunneling<T: Real>(p: &LinkParams<T>, delta_tilde: T) -> Result<T> {
    if delta_tilde == T::zero() {
        return Err(Error::Domain("double link needs a nonzero matter offset to separate the bonds".into()));
    }
    let target = effective_coupling(p.g, p.delta, p.beta)?;
    let unit = effective_coupling(T::one(), p.delta - delta_tilde, p.beta)?;
    let g2 = target / unit;
    if !(g2 > T::zero()) {
        return Err(Error::Infeasible(format!("offset bond needs g^2 = {g2}")));
    }
    Ok(g2.sqrt())
}

/// Three matter sites on a triangle; link `k` joins sites `k` and `k + 1`.
pub fn full_triangle<T: Real>(links: &[LinkParams<T>; 3]) -> MicroscopicLayout<T> {
    let mut b = Builder::new(LayoutKind::FullTriangle);
    let sites: Vec<usize> = (0..3).map(|k| b.matter(format!("A{}", k + 1))).collect();
    for (k, p) in links.iter().enumerate() {
        let (i, j) = (k, (k + 1) % 3);
        b.link(&(k + 1).to_string(), p, &[(sites[i], sites[j], p.g)], [i, j]);
    }
    b.layout.super_sites = sites.iter().map(|&s| vec![s]).collect();
    b.layout
}

impl<T: Real> MicroscopicLayout<T> {
    pub fn matter_sites(&self) -> Vec<usize> {
        self.oscillators
            .iter()
            .filter(|o| o.role == Role::Matter)
            .map(|o| o.site_id)
            .collect()
    }

    /// Matter sites must be harmonic, and every link's `d` coupler has exactly
    /// one sign-reversed leg per bond.
    pub fn validate(&self) -> Result<()> {
        for o in &self.oscillators {
            if o.role == Role::Matter && o.anharmonicity != T::zero() {
                return Err(Error::param(
                    "anharmonicity",
                    format!("matter site {} must be harmonic", o.label),
                ));
            }
        }
        for l in &self.links {
            let leg = |x: usize, m: usize| {
                self.couplings
                    .iter()
                    .find(|c| c.b == x && c.a == m)
                    .map(|c| c.amplitude)
                    .unwrap_or(T::zero())
            };
            let sites: Vec<usize> = self
                .couplings
                .iter()
                .filter(|c| c.b == l.c && self.is_matter(c.a))
                .map(|c| c.a)
                .collect();
            let mut reversed = 0;
            for &m in &sites {
                let (ac, ad) = (leg(l.c, m), leg(l.d, m));
                if ad.abs() != ac.abs() {
                    return Err(Error::param("couplings", "c and d legs of a site must have equal strength"));
                }
                if ac != T::zero() && ad == -ac {
                    reversed += 1;
                }
            }
            let active = sites.iter().filter(|&&m| leg(l.c, m) != T::zero()).count();
            if 2 * reversed != active {
                return Err(Error::param("couplings", "each bond needs exactly one sign-reversed d leg"));
            }
        }
        Ok(())
    }

    fn is_matter(&self, id: usize) -> bool {
        self.oscillators.get(id).map(|o| o.role == Role::Matter).unwrap_or(false)
    }

    /// Number-conserving basis with `d_max` levels per oscillator and
    /// `excitations` quanta in total.
    pub fn basis(&self, d_max: u8, excitations: usize) -> Result<BasisSet> {
        if d_max < 3 {
            return Err(Error::param(
                "d_max",
                "at least three levels per oscillator are needed for doubly excited virtual states",
            ));
        }
        BasisSet::new(
            self.oscillators.iter().map(|o| (o.site_id, d_max - 1)).collect(),
            vec![],
            LinkBasis::TauZ,
            SectorConstraint::TotalExcitationNumber(excitations),
        )
    }

    /// Excitations of a gauge-theory state: one boson plus one photon per link.
    pub fn gauge_excitations(&self, bosons: usize) -> usize {
        bosons + self.links.len()
    }
}

/// `H = sum omega n - sum alpha/2 n (n - 1) + sum J (a^dag b + h.c.)`.
pub fn build_microscopic_hamiltonian<T: Real>(layout: &MicroscopicLayout<T>, basis: &BasisSet) -> Result<SparseOperator<T>> {
    layout.validate()?;
    let mut terms = Vec::new();
    for o in &layout.oscillators {
        let s = o.site_id;
        if o.frequency != T::zero() {
            terms.push(Term::new(o.frequency, vec![Op::Number(s)]));
        }
        if o.anharmonicity != T::zero() {
            let half = -o.anharmonicity / T::of(2.0);
            terms.push(Term::new(half, vec![Op::Create(s), Op::Create(s), Op::Annihilate(s), Op::Annihilate(s)]));
        }
    }
    for c in &layout.couplings {
        let t = Term::new(c.amplitude, vec![Op::Create(c.a), Op::Annihilate(c.b)]);
        terms.push(t.adjoint());
        terms.push(t);
    }
    build_operator(basis, &terms)
}

/// `2 g^2 (1 / (Delta - beta) - 1 / Delta)`.
pub fn effective_coupling<T: Real>(g: T, delta: T, beta: T) -> Result<T> {
    if delta == T::zero() || delta == beta {
        return Err(Error::Domain(format!(
            "effective coupling has a pole at Delta = {delta}, beta = {beta}"
        )));
    }
    Ok(T::of(2.0) * g * g * (T::one() / (delta - beta) - T::one() / delta))
}

/// The coupling for couplers detuned *below* the matter by `Delta`:
/// `2 g^2 beta / (Delta^2 + Delta beta)`, i.e. [`effective_coupling`] at `-Delta`.
pub fn effective_coupling_below<T: Real>(g: T, delta: T, beta: T) -> Result<T> {
    effective_coupling(g, -delta, beta)
}

/// Fine-tuned links of a triangle: all three share `t_eff` and the same
/// dispersive shift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FineTuneSolution<T: Real> {
    pub t_eff: T,
    pub g: [T; 3],
    pub beta: [T; 3],
    pub delta: [T; 3],
}

impl<T: Real> FineTuneSolution<T> {
    pub fn links(&self) -> [LinkParams<T>; 3] {
        [0, 1, 2].map(|k| LinkParams::new(self.delta[k], self.beta[k], self.g[k]))
    }

    /// Largest relative deviation of a link's coupling from `t_eff`.
    pub fn closure_error(&self) -> Result<T> {
        let mut worst = T::zero();
        for k in 0..3 {
            let t = effective_coupling(self.g[k], self.delta[k], self.beta[k])?;
            worst = worst.max(((t - self.t_eff) / self.t_eff).abs());
        }
        Ok(worst)
    }
}

/// Solves for `beta_1` at tunneling `g` and scales the other links:
/// `beta_k = Delta_k beta_1 / Delta_1`, `g_k^2 = g^2 beta_k / beta_1`.
pub fn fine_tune_triangle<T: Real>(t_eff: T, delta: [T; 3], g: T) -> Result<FineTuneSolution<T>> {
    let two = T::of(2.0);
    let denom = two * g * g + t_eff * delta[0];
    if denom == T::zero() || delta[0] == T::zero() {
        return Err(Error::Domain("fine-tuning denominator vanishes".into()));
    }
    let beta1 = t_eff * delta[0] * delta[0] / denom;
    if beta1 == T::zero() {
        return Err(Error::Infeasible("beta_1 vanishes; no coupling can be generated".into()));
    }
    let mut sol = FineTuneSolution {
        t_eff,
        g: [g; 3],
        beta: [beta1; 3],
        delta,
    };
    for k in 1..3 {
        sol.beta[k] = delta[k] * beta1 / delta[0];
        let g2 = g * g * sol.beta[k] / beta1;
        if g2 < T::zero() {
            return Err(Error::Infeasible(format!("link {} needs g^2 = {g2} < 0", k + 1)));
        }
        sol.g[k] = g2.sqrt();
    }
    Ok(sol)
}

/// Residual second-order exchange between detuned coupler pairs,
/// `|g^4 / (Delta^2 delta)|`. A resonant pair (`delta = 0`) is an error; it
/// would exchange at the rate `2 g^2 / Delta`.
pub fn coupler_leakage<T: Real>(delta_big: T, delta_small: T, g: T) -> Result<T> {
    if delta_small == T::zero() {
        let rate = if delta_big == T::zero() {
            "infinite".to_string()
        } else {
            format!("{}", T::of(2.0) * g * g / delta_big)
        };
        return Err(Error::Domain(format!("resonant coupler pairs exchange at rate 2 g^2 / Delta = {rate}")));
    }
    if delta_big == T::zero() {
        return Err(Error::Domain("coupler detuning Delta must be nonzero".into()));
    }
    Ok((g * g * g * g / (delta_big * delta_big * delta_small)).abs())
}

/// Projects an operator onto states where every listed coupler pair holds
/// exactly one photon.
fn restrict_single_photon<T: Real>(op: SparseOperator<T>, basis: &BasisSet, pairs: &[(usize, usize)]) -> SparseOperator<T> {
    let ok: Vec<bool> = basis
        .states()
        .iter()
        .map(|s| pairs.iter().all(|&(c, d)| s.occupations[c] + s.occupations[d] == 1))
        .collect();
    let kept = op.triplets().filter(|&(r, c, _)| ok[r] && ok[c]).collect();
    SparseOperator::from_triplets(op.nrows(), op.ncols(), kept)
}

/// Per-oscillator position in `basis`; identical to the id for layouts.
fn pos(basis: &BasisSet, id: usize) -> usize {
    basis.site_position(id).expect("layout oscillator in basis")
}

/// `tau^x = c^dag d + d^dag c` on the single-photon manifold of each link.
pub fn tau_x_observables<T: Real>(layout: &MicroscopicLayout<T>, basis: &BasisSet) -> Result<Vec<SparseOperator<T>>> {
    layout
        .links
        .iter()
        .map(|l| {
            let t = Term::new(T::one(), vec![Op::Create(l.c), Op::Annihilate(l.d)]);
            let op = build_operator(basis, &[t.adjoint(), t])?;
            Ok(restrict_single_photon(op, basis, &[(pos(basis, l.c), pos(basis, l.d))]))
        })
        .collect()
}

/// `tau^z = n_c - n_d` per link.
pub fn tau_z_observables<T: Real>(layout: &MicroscopicLayout<T>, basis: &BasisSet) -> Result<Vec<SparseOperator<T>>> {
    layout
        .links
        .iter()
        .map(|l| {
            build_operator(
                basis,
                &[Term::new(T::one(), vec![Op::Number(l.c)]), Term::new(-T::one(), vec![Op::Number(l.d)])],
            )
        })
        .collect()
}

/// `G_i = (-1)^(N_i) prod tau^x` for every super-site, with `tau^x`
/// restricted to the single-photon manifold of the links involved.
pub fn gauss_law_observables<T: Real>(layout: &MicroscopicLayout<T>, basis: &BasisSet) -> Result<Vec<SparseOperator<T>>> {
    let taus = tau_x_observables(layout, basis)?;
    layout
        .super_sites
        .iter()
        .enumerate()
        .map(|(s, members)| {
            let parity_terms: Vec<Term<T>> = vec![Term::new(T::one(), members.iter().map(|&m| Op::Parity(m)).collect())];
            let mut g = build_operator(basis, &parity_terms)?;
            for (l, tau) in layout.links.iter().zip(&taus) {
                if l.ends.contains(&s) {
                    g = g.matmul(tau);
                }
            }
            Ok(g)
        })
        .collect()
}

/// Product state with one boson on `site`, every coupler pair in
/// `(c + sign d) / sqrt 2` (`tau^x = sign`), all other oscillators empty.
pub fn initial_state<T: Real>(layout: &MicroscopicLayout<T>, basis: &BasisSet, site: usize, tau_x: &[i8]) -> Result<Vec<C<T>>> {
    if !layout.is_matter(site) {
        return Err(Error::UnknownId {
            kind: "matter site",
            id: site,
            available: layout.oscillators.len(),
        });
    }
    if tau_x.len() != layout.links.len() {
        return Err(Error::param("tau_x", "one value per link"));
    }
    let n = layout.oscillators.len();
    let mut psi = vec![C::new(T::zero(), T::zero()); basis.dim()];
    let amp = T::of((0.5f64).powi(layout.links.len() as i32).sqrt());
    for choice in 0..(1usize << layout.links.len()) {
        let mut occ = vec![0u8; n];
        occ[pos(basis, site)] = 1;
        let mut sign = T::one();
        for (k, l) in layout.links.iter().enumerate() {
            if choice >> k & 1 == 0 {
                occ[pos(basis, l.c)] = 1;
            } else {
                occ[pos(basis, l.d)] = 1;
                if tau_x[k] < 0 {
                    sign = -sign;
                }
            }
        }
        let k = basis
            .index_of(&ProductState { occupations: occ, links: 0 })
            .ok_or_else(|| Error::BasisMismatch("initial state outside the excitation sector".into()))?;
        psi[k] = cr(amp * sign);
    }
    Ok(psi)
}

/// Product state with one boson on `site` and every link in a `tau^z`
/// eigenstate (`+1`: photon in `c`).
pub fn tau_z_state<T: Real>(layout: &MicroscopicLayout<T>, basis: &BasisSet, site: usize, tau_z: &[i8]) -> Result<Vec<C<T>>> {
    if tau_z.len() != layout.links.len() {
        return Err(Error::param("tau_z", "one value per link"));
    }
    let mut occ = vec![0u8; layout.oscillators.len()];
    occ[pos(basis, site)] = 1;
    for (l, &z) in layout.links.iter().zip(tau_z) {
        occ[pos(basis, if z > 0 { l.c } else { l.d })] = 1;
    }
    let k = basis
        .index_of(&ProductState { occupations: occ, links: 0 })
        .ok_or_else(|| Error::BasisMismatch("state outside the excitation sector".into()))?;
    Ok(crate::hilbert::unit_vector(basis.dim(), k))
}

/// Observables at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicroSample {
    pub time: f64,
    pub populations: Vec<f64>,
    pub gauss: Vec<f64>,
    pub tau_x: Vec<f64>,
}

/// Time-independent evolution through the eigenbasis of the dense
/// Hamiltonian, sampled at `times`.
pub struct MicroscopicRun<T: Real> {
    pub basis: BasisSet,
    pub eigen: Eigh<T>,
    pub layout: MicroscopicLayout<T>,
}

impl<T: Real> MicroscopicRun<T> {
    pub fn new(layout: MicroscopicLayout<T>, d_max: u8, excitations: usize) -> Result<Self> {
        let basis = layout.basis(d_max, excitations)?;
        let h = build_microscopic_hamiltonian(&layout, &basis)?;
        Ok(Self {
            eigen: eigh_sparse(&h),
            basis,
            layout,
        })
    }

    pub fn sample(&self, psi0: &[C<T>], times: &[T]) -> Result<Vec<MicroSample>> {
        let matter = self.layout.matter_sites();
        let numbers: Vec<SparseOperator<T>> = matter
            .iter()
            .map(|&s| build_operator(&self.basis, &[Term::new(T::one(), vec![Op::Number(s)])]))
            .collect::<Result<_>>()?;
        let gauss = gauss_law_observables(&self.layout, &self.basis)?;
        let taus = tau_x_observables(&self.layout, &self.basis)?;
        // Expand once in the eigenbasis, then each time is a phase rotation.
        let v = &self.eigen.vectors;
        let coeffs: Vec<C<T>> = (0..v.ncols())
            .map(|k| v.column(k).iter().zip(psi0).fold(cr(T::zero()), |a, (x, y)| a + x.conj() * y))
            .collect();
        let ev = |ops: &[SparseOperator<T>], psi: &[C<T>]| -> Vec<f64> {
            ops.iter().map(|o| o.expectation(psi).re.to_f64_lossy()).collect()
        };
        times
            .par_iter()
            .map(|&t| {
                let phased: Vec<C<T>> = coeffs
                    .iter()
                    .zip(&self.eigen.values)
                    .map(|(c, &e)| *c * crate::num::cis(-e * t))
                    .collect();
                let psi: Vec<C<T>> = (v * nalgebra::DVector::from_vec(phased)).iter().copied().collect();
                Ok(MicroSample {
                    time: t.to_f64_lossy(),
                    populations: ev(&numbers, &psi),
                    gauss: ev(&gauss, &psi),
                    tau_x: ev(&taus, &psi),
                })
            })
            .collect()
    }
}

impl<T: Real> MicroscopicRun<T> {
    /// `<op>(t)` at each time, averaged over a window of length `window`
    /// centred on `t` (zero gives the instantaneous value). Evaluated in the
    /// eigenbasis, where the window multiplies each Bohr frequency by a sinc.
    pub fn expectation_trace(&self, op: &SparseOperator<T>, psi0: &[C<T>], times: &[T], window: T) -> Vec<f64> {
        let v = &self.eigen.vectors;
        let o = v.adjoint() * op.to_dense() * v;
        let c: Vec<C<T>> = (0..v.ncols())
            .map(|k| v.column(k).iter().zip(psi0).fold(cr(T::zero()), |a, (x, y)| a + x.conj() * y))
            .collect();
        let e = &self.eigen.values;
        let n = e.len();
        // Weighted matrix elements are time independent; keep only the pairs that carry weight.
        let tol = T::of(1e-14);
        let mut pairs = Vec::new();
        for j in 0..n {
            if crate::num::cabs(c[j]) < tol {
                continue;
            }
            for k in 0..n {
                let w = c[j].conj() * c[k] * o[(j, k)];
                if crate::num::cabs(w) < tol {
                    continue;
                }
                let omega = e[j] - e[k];
                let x = omega * window * T::of(0.5);
                let sinc = if x.abs() < T::of(1e-12) { T::one() } else { x.sin() / x };
                pairs.push((w * sinc, omega));
            }
        }
        times
            .par_iter()
            .map(|&t| {
                pairs
                    .iter()
                    .fold(T::zero(), |a, &(w, om)| a + (w * crate::num::cis(om * t)).re)
                    .to_f64_lossy()
            })
            .collect()
    }

    /// Largest change of each window-averaged Gauss law from its value at
    /// the first time, together with the largest instantaneous deviation.
    pub fn gauss_drift(&self, psi0: &[C<T>], times: &[T], window: T) -> Result<GaussDrift> {
        let gauss = gauss_law_observables(&self.layout, &self.basis)?;
        let mut secular = Vec::new();
        let mut raw = Vec::new();
        for g in &gauss {
            let dev = |tr: Vec<f64>, reference: f64| tr.iter().map(|x| (x - reference).abs()).fold(0.0, f64::max);
            let avg = self.expectation_trace(g, psi0, times, window);
            secular.push(dev(avg.clone(), avg[0]));
            let g0 = g.expectation(psi0).re.to_f64_lossy();
            raw.push(dev(self.expectation_trace(g, psi0, times, T::zero()), g0));
        }
        Ok(GaussDrift { secular, raw })
    }
}

/// Output of [`MicroscopicRun::gauss_drift`], one entry per super site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussDrift {
    /// Change of the window-averaged value.
    pub secular: Vec<f64>,
    /// Instantaneous deviation from the initial value, including the fast
    /// dressing by virtual coupler excitations.
    pub raw: Vec<f64>,
}

impl GaussDrift {
    pub fn max_secular(&self) -> f64 {
        self.secular.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_raw(&self) -> f64 {
        self.raw.iter().copied().fold(0.0, f64::max)
    }
}

/// Site populations of the effective single-plaquette model with hopping
/// `t_eff`, starting from the boson on `site` and all `tau^x = +1`. Site
/// `k` and link `k` follow the conventions of [`full_triangle`].
pub fn effective_triangle_populations<T: Real>(t_eff: T, site: usize, times: &[T]) -> Result<Vec<Vec<f64>>> {
    let geom = preset("tri1")?;
    let p = &geom.plaquettes[0];
    let basis = BasisSet::for_geometry(&geom, LinkBasis::TauX, crate::effective::one_boson_constraint(&geom), 1)?;
    let h = build_lgt_hamiltonian(&geom, &basis, &EffectiveParams::new(t_eff))?;
    let psi0 = product_state::<T>(&geom, &basis, &[site])?;
    let e = eigh_sparse(&h);
    let numbers: Vec<SparseOperator<T>> = p
        .sites
        .iter()
        .map(|&s| build_operator(&basis, &[Term::new(T::one(), vec![Op::Number(s)])]))
        .collect::<Result<_>>()?;
    Ok(times
        .iter()
        .map(|&t| {
            let psi = e.evolve(&psi0, t);
            numbers.iter().map(|n| n.expectation(&psi).re.to_f64_lossy()).collect()
        })
        .collect())
}

/// Result of a spectroscopic coupling measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spectroscopy {
    pub g: f64,
    pub delta: f64,
    pub beta: f64,
    pub predicted: f64,
    pub fitted: f64,
    /// Half the splitting of the two lowest one-boson, one-photon levels with the photon in `c`.
    pub splitting: f64,
}

impl Spectroscopy {
    pub fn relative_error(&self) -> f64 {
        ((self.fitted - self.predicted) / self.predicted).abs()
    }
}

/// Measures `t_eff` of one building block: the boson starts on `A` with the
/// photon in `c`, and `<n_B>(t)` is fitted to `sin^2(t_eff t)` over
/// `0 <= t <= 3 pi / (2 t_eff)` (window from the predicted value).
pub fn spectroscopic_coupling(g: f64, delta: f64, beta: f64, d_max: u8, n_samples: usize) -> Result<Spectroscopy> {
    let predicted = effective_coupling(g, delta, beta)?;
    let layout = single_block(LinkParams::new(delta, beta, g));
    let run = MicroscopicRun::<f64>::new(layout.clone(), d_max, 2)?;
    let psi0 = tau_z_state(&layout, &run.basis, 0, &[1])?;
    let t_end = 1.5 * std::f64::consts::PI / predicted.abs();
    let times: Vec<f64> = (0..n_samples.max(8))
        .map(|k| t_end * k as f64 / (n_samples.max(8) - 1) as f64)
        .collect();
    let data: Vec<(f64, f64)> = run
        .sample(&psi0, &times)?
        .iter()
        .map(|s| (s.time, s.populations[1]))
        .collect();
    let cost = |x: f64| data.iter().map(|&(t, n)| (n - (x * t).sin().powi(2)).powi(2)).sum::<f64>();
    // Coarse scan, then golden-section refinement around the best point.
    let (lo, hi) = (0.5 * predicted.abs(), 1.5 * predicted.abs());
    let n_scan = 400;
    let step = (hi - lo) / n_scan as f64;
    let best = (0..=n_scan)
        .map(|k| lo + step * k as f64)
        .min_by(|a, b| cost(*a).partial_cmp(&cost(*b)).expect("finite cost"))
        .expect("non-empty scan");
    let fitted = golden_min(cost, best - step, best + step, 1e-12);

    // Splitting of the boson-on-one-site, photon-in-c states.
    let a = tau_z_state(&layout, &run.basis, 0, &[1])?;
    let b = tau_z_state(&layout, &run.basis, 1, &[1])?;
    let weight = |k: usize| -> f64 {
        let v = run.eigen.vector(k);
        abs2(inner(&v, &a)) + abs2(inner(&v, &b))
    };
    let mut levels: Vec<(f64, f64)> = (0..run.basis.dim()).map(|k| (run.eigen.values[k], weight(k))).collect();
    levels.sort_by(|x, y| y.1.partial_cmp(&x.1).expect("finite weights"));
    let splitting = (levels[0].0 - levels[1].0).abs() / 2.0;
    Ok(Spectroscopy {
        g,
        delta,
        beta,
        predicted,
        fitted: fitted.copysign(predicted),
        splitting,
    })
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while (b - a).abs() > tol {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    (a + b) / 2.0
}

/// Dense representation for debugging and small comparisons.
pub fn dense<T: Real>(op: &SparseOperator<T>) -> DMatrix<C<T>> {
    op.to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::build_operator;

    fn block(g: f64, delta: f64, beta: f64) -> MicroscopicLayout<f64> {
        single_block(LinkParams::new(delta, beta, g))
    }

    #[test]
    fn coupling_formula_values() {
        assert!((effective_coupling(1.0f64, 2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((effective_coupling(1.0f64, 10.0, 2.0).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(effective_coupling(1.0, 3.0, 0.0).unwrap(), 0.0);
        assert!(effective_coupling(1.0, 0.0, 1.0).is_err());
        assert!(effective_coupling(1.0, 2.0, 2.0).is_err());
        let (g, d, b) = (0.7f64, 5.0, 1.3);
        let direct = 2.0 * g * g * b / (d * d + d * b);
        assert!((effective_coupling_below(g, d, b).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn fine_tune_values_and_closure() {
        let s = fine_tune_triangle(0.02f64, [10.0, 11.0, 12.0], 1.0).unwrap();
        assert!((s.beta[0] - 2.0 / 2.2).abs() < 1e-14);
        assert!(s.closure_error().unwrap() < 1e-12);
        let sym = fine_tune_triangle(0.02f64, [7.0; 3], 1.0).unwrap();
        assert!(sym.g.iter().all(|&g| (g - 1.0).abs() < 1e-15));
        assert!(sym.beta.iter().all(|&b| (b - sym.beta[0]).abs() < 1e-15));
        assert!(matches!(
            fine_tune_triangle(0.02, [10.0, -11.0, 12.0], 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn leakage_values() {
        assert!((coupler_leakage(10.0f64, 1.0, 1.0).unwrap() - 0.01).abs() < 1e-15);
        assert!(coupler_leakage(10.0, 1e12, 1.0).unwrap() < 1e-13);
        let err = coupler_leakage(10.0, 0.0, 1.0).unwrap_err().to_string();
        assert!(err.contains("0.2"), "{err}");
    }

    #[test]
    fn rejects_small_cutoff_and_harmonic_violation() {
        let l = block(1.0, 10.0, 2.0);
        assert!(l.basis(2, 2).is_err());
        let mut bad = l.clone();
        bad.oscillators[0].anharmonicity = 0.1;
        let b = l.basis(3, 2).unwrap();
        assert!(build_microscopic_hamiltonian(&bad, &b).is_err());
        let mut flipped = l.clone();
        flipped.couplings[3].amplitude = -1.0;
        assert!(flipped.validate().is_err());
    }

    #[test]
    fn uncoupled_spectrum_is_bare_levels() {
        let l = block(0.0, 3.0, 0.5);
        let b = l.basis(3, 2).unwrap();
        let e = eigh_sparse(&build_microscopic_hamiltonian(&l, &b).unwrap()).values;
        // Oracle: enumerate occupations with at most two quanta per mode.
        let mut bare = Vec::new();
        for s in b.states() {
            let o = &s.occupations;
            let coupler = |n: u8| 3.0 * n as f64 - 0.25 * (n as f64) * (n as f64 - 1.0);
            bare.push(coupler(o[2]) + coupler(o[3]));
        }
        bare.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in e.iter().zip(&bare) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn hermitian_and_number_conserving() {
        let sol = fine_tune_triangle(0.02, [10.0, 11.0, 12.0], 1.0).unwrap();
        let l = full_triangle(&sol.links());
        let b = l.basis(3, 4).unwrap();
        let h = build_microscopic_hamiltonian(&l, &b).unwrap();
        assert!(h.hermiticity_error() < 1e-15);
        assert_eq!(b.dim(), 414);
        let total = build_operator::<f64>(
            &b,
            &(0..9).map(|s| Term::new(1.0, vec![Op::Number(s)])).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!(total.diagonal().iter().all(|z| (z.re - 4.0).abs() < 1e-15));
    }

    #[test]
    fn splitting_matches_second_order_coupling() {
        // Fourth-order corrections shrink with g/Delta.
        let mut last = f64::INFINITY;
        for gd in [0.1, 0.05, 0.02] {
            let delta = 1.0 / gd;
            let s = spectroscopic_coupling(1.0, delta, delta / 2.0, 3, 200).unwrap();
            let rel = (s.splitting - s.predicted).abs() / s.predicted;
            assert!(rel < last, "g/Delta={gd}: {s:?}");
            assert!((s.fitted - s.splitting).abs() < 0.01 * s.predicted, "{s:?}");
            last = rel;
        }
    }

    #[test]
    fn hopping_sign_follows_tau_z() {
        // The symmetric boson state is lowest with the photon in c and the
        // antisymmetric one with the photon in d: -t_eff tau^z hopping.
        let (g, delta, beta) = (1.0, 40.0, 20.0);
        let l = block(g, delta, beta);
        let b = l.basis(3, 2).unwrap();
        let e = eigh_sparse(&build_microscopic_hamiltonian(&l, &b).unwrap());
        let s = 0.5f64.sqrt();
        let combo = |site_sign: f64, z: i8| -> Vec<C<f64>> {
            let a = tau_z_state(&l, &b, 0, &[z]).unwrap();
            let bb = tau_z_state(&l, &b, 1, &[z]).unwrap();
            a.iter().zip(&bb).map(|(x, y)| (x + y * site_sign) * s).collect()
        };
        let energy_of = |v: &[C<f64>]| -> f64 {
            let (k, _) = (0..b.dim())
                .map(|k| (k, abs2(inner(&e.vector(k), v))))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            e.values[k]
        };
        let t = effective_coupling(g, delta, beta).unwrap();
        let split_c = energy_of(&combo(-1.0, 1)) - energy_of(&combo(1.0, 1));
        let split_d = energy_of(&combo(1.0, -1)) - energy_of(&combo(-1.0, -1));
        assert!((split_c - 2.0 * t).abs() < 0.05 * t, "{split_c} vs {t}");
        assert!((split_d - 2.0 * t).abs() < 0.05 * t, "{split_d} vs {t}");
    }

    #[test]
    fn no_link_flips_without_matter_anharmonicity() {
        let (g, delta, beta) = (1.0, 200.0, 100.0);
        let drift = |alpha: f64| -> f64 {
            let mut l = block(g, delta, beta);
            l.oscillators[0].anharmonicity = alpha;
            let b = l.basis(3, 2).unwrap();
            let h = build_microscopic_hamiltonian_unchecked(&l, &b);
            let e = eigh_sparse(&h);
            let psi0 = tau_z_state(&l, &b, 0, &[1]).unwrap();
            let tz = &tau_z_observables(&l, &b).unwrap()[0];
            let t_end = 10.0 * std::f64::consts::PI / effective_coupling(g, delta, beta).unwrap();
            (0..200)
                .map(|k| 1.0 - tz.expectation(&e.evolve(&psi0, t_end * k as f64 / 199.0)).re)
                .fold(0.0, f64::max)
        };
        // Residual drift is static dressing of order (g / Delta)^2.
        assert!(drift(0.0) < 1e-3, "{}", drift(0.0));
        assert!(drift(5.0) > 1e-2, "{}", drift(5.0));
    }

    fn build_microscopic_hamiltonian_unchecked(l: &MicroscopicLayout<f64>, b: &BasisSet) -> SparseOperator<f64> {
        let mut relaxed = l.clone();
        let alphas: Vec<f64> = relaxed.oscillators.iter().map(|o| o.anharmonicity).collect();
        relaxed.oscillators.iter_mut().for_each(|o| {
            if o.role == Role::Matter {
                o.anharmonicity = 0.0
            }
        });
        let mut h = build_microscopic_hamiltonian(&relaxed, b).unwrap();
        for (o, a) in l.oscillators.iter().zip(alphas) {
            if o.role == Role::Matter && a != 0.0 {
                let t = Term::new(-a / 2.0, vec![Op::Create(o.site_id), Op::Create(o.site_id), Op::Annihilate(o.site_id), Op::Annihilate(o.site_id)]);
                h = h.add(&build_operator(b, &[t]).unwrap());
            }
        }
        h
    }

    #[test]
    fn gauss_values_of_initial_triangle_state() {
        let sol = fine_tune_triangle(0.02, [10.0, 11.0, 12.0], 1.0).unwrap();
        let l = full_triangle(&sol.links());
        let b = l.basis(3, 4).unwrap();
        let psi = initial_state(&l, &b, 0, &[1, 1, 1]).unwrap();
        let g = gauss_law_observables(&l, &b).unwrap();
        let vals: Vec<f64> = g.iter().map(|o| o.expectation(&psi).re).collect();
        assert!((vals[0] + 1.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14 && (vals[2] - 1.0).abs() < 1e-14);
        // G^2 is the identity on the single-photon manifold.
        let one = g[1].matmul(&g[1]);
        assert!((one.expectation(&psi).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn double_link_and_chain_layouts() {
        let p = LinkParams::new(10.0, 5.0, 1.0);
        let d = double_link(p, 2.0).unwrap();
        assert!(d.validate().is_ok());
        assert!(double_link(p, 0.0).is_err());
        assert_eq!(d.links.len(), 1);
        assert_eq!(d.couplings.len(), 8);
        let c = merged_chain(&[p, p]).unwrap();
        assert_eq!(c.matter_sites().len(), 3);
        assert_eq!(c.links.len(), 2);
        assert!(merged_chain::<f64>(&[]).is_err());
    }

    #[test]
    fn double_link_hopping_on_both_bonds() {
        // Both bonds hop with the same t_eff; the offset keeps the boson on its bond.
        let p = LinkParams::new(40.0f64, 20.0, 1.0);
        let l = double_link(p, 4.0).unwrap();
        let gt = double_link_tunneling(&p, 4.0).unwrap();
        let unit = effective_coupling(1.0f64, 36.0, 20.0).unwrap();
        let t = effective_coupling(1.0f64, 40.0, 20.0).unwrap();
        assert!((gt * gt * unit - t).abs() < 1e-15);
        let run = MicroscopicRun::new(l.clone(), 3, 2).unwrap();
        for (site, partner) in [(0usize, 1usize), (2, 3)] {
            let psi0 = tau_z_state(&l, &run.basis, site, &[1]).unwrap();
            let tq = std::f64::consts::FRAC_PI_2 / t;
            let s = run.sample(&psi0, &[tq]).unwrap();
            assert!(s[0].populations[partner] > 0.95, "{:?}", s[0]);
        }
    }

    #[test]
    fn couplers_below_matter_follow_the_alternative_formula() {
        let (g, delta, beta) = (1.0, 40.0, 20.0);
        let l = single_block(LinkParams::new(-delta, beta, g));
        let b = l.basis(3, 2).unwrap();
        let e = eigh_sparse(&build_microscopic_hamiltonian(&l, &b).unwrap());
        let a = tau_z_state(&l, &b, 0, &[1]).unwrap();
        let bb = tau_z_state(&l, &b, 1, &[1]).unwrap();
        let mut levels: Vec<(f64, f64)> = (0..b.dim())
            .map(|k| (e.values[k], abs2(inner(&e.vector(k), &a)) + abs2(inner(&e.vector(k), &bb))))
            .collect();
        levels.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap());
        let half_split = (levels[0].0 - levels[1].0).abs() / 2.0;
        let below = effective_coupling_below(g, delta, beta).unwrap();
        let above = effective_coupling(g, delta, beta).unwrap();
        assert!((half_split - below.abs()).abs() < 0.05 * below.abs(), "{half_split} vs {below}");
        assert!((half_split - above.abs()).abs() > 0.2 * above.abs());
    }
}
