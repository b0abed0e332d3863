//! Product bases of bosonic occupations and spin-1/2 links, sector
//! constraints, and operator construction from term lists.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use crate::num::{norm, Real, C};
use crate::sparse::SparseOperator;

/// Eigenbasis in which link spins are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LinkBasis {
    TauZ,
    TauX,
}

impl LinkBasis {
    pub fn name(self) -> &'static str {
        match self {
            LinkBasis::TauZ => "tau_z",
            LinkBasis::TauX => "tau_x",
        }
    }
}

/// `(-1)^(sum of occupations on sites) * prod tau^x(links)` with a target eigenvalue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GaussGenerator {
    pub vertex: usize,
    pub sites: Vec<usize>,
    pub links: Vec<usize>,
    pub eigenvalue: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SectorConstraint {
    None,
    /// Each group of sites holds exactly one boson.
    OneBosonPerPlaquette { groups: Vec<Vec<usize>> },
    TotalExcitationNumber(usize),
    /// Simultaneous eigenspace of the given generators; needs the tau^x link basis.
    GaussSector { generators: Vec<GaussGenerator> },
    All(Vec<SectorConstraint>),
}

impl SectorConstraint {
    fn describe(&self) -> String {
        match self {
            SectorConstraint::None => "none".into(),
            SectorConstraint::OneBosonPerPlaquette { .. } => "one-boson-per-plaquette".into(),
            SectorConstraint::TotalExcitationNumber(n) => format!("total-excitation-number={n}"),
            SectorConstraint::GaussSector { .. } => "gauss-sector".into(),
            SectorConstraint::All(cs) => cs.iter().map(|c| c.describe()).collect::<Vec<_>>().join(" & "),
        }
    }

    fn needs_tau_x(&self) -> bool {
        match self {
            SectorConstraint::GaussSector { .. } => true,
            SectorConstraint::All(cs) => cs.iter().any(|c| c.needs_tau_x()),
            _ => false,
        }
    }
}

/// One basis state. Bit `l` of `links` is set when link mode `l` has eigenvalue -1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ProductState {
    pub occupations: Vec<u8>,
    pub links: u64,
}

impl ProductState {
    /// Eigenvalue (+1 or -1) of link mode `l` in the basis' link basis.
    pub fn link_value(&self, l: usize) -> i8 {
        if self.links >> l & 1 == 1 {
            -1
        } else {
            1
        }
    }
}

#[derive(Debug, Clone)]
pub struct BasisSet {
    /// `(site id, max occupation)` per matter mode.
    pub matter_modes: Vec<(usize, u8)>,
    pub link_modes: Vec<usize>,
    pub link_basis: LinkBasis,
    pub constraint: SectorConstraint,
    states: Vec<ProductState>,
    index: HashMap<ProductState, usize>,
    site_pos: HashMap<usize, usize>,
    link_pos: HashMap<usize, usize>,
}

impl BasisSet {
    /// Enumerates all product states satisfying `constraint`, ordered
    /// lexicographically by occupations and then link values (+1 before -1,
    /// first mode most significant).
    pub fn new(
        matter_modes: Vec<(usize, u8)>,
        link_modes: Vec<usize>,
        link_basis: LinkBasis,
        constraint: SectorConstraint,
    ) -> Result<Self> {
        if matter_modes.iter().any(|&(_, m)| m == 0) {
            return Err(Error::param("max_occupation", "must be at least 1"));
        }
        if link_modes.len() > 63 {
            return Err(Error::param("link_modes", "at most 63 links supported"));
        }
        if constraint.needs_tau_x() && link_basis != LinkBasis::TauX {
            return Err(Error::param("link_basis", "Gauss sectors are diagonal only in the tau^x basis"));
        }
        let site_pos: HashMap<usize, usize> = matter_modes.iter().enumerate().map(|(k, &(s, _))| (s, k)).collect();
        let link_pos: HashMap<usize, usize> = link_modes.iter().enumerate().map(|(k, &l)| (l, k)).collect();
        if site_pos.len() != matter_modes.len() || link_pos.len() != link_modes.len() {
            return Err(Error::param("modes", "duplicate site or link id"));
        }
        let resolved = Resolved::new(&constraint, &site_pos, &link_pos)?;

        let n_links = link_modes.len();
        let mut states = Vec::new();
        let mut occ: Vec<u8> = vec![0; matter_modes.len()];
        loop {
            if resolved.occupation_ok(&occ) {
                for m in 0..(1u64 << n_links) {
                    // Reverse bit order so link 0 is the most significant digit.
                    let mask = (0..n_links).fold(0u64, |acc, l| acc | ((m >> (n_links - 1 - l) & 1) << l));
                    if resolved.links_ok(&occ, mask) {
                        states.push(ProductState {
                            occupations: occ.clone(),
                            links: mask,
                        });
                    }
                }
            }
            if !odometer(&mut occ, &matter_modes) {
                break;
            }
        }
        if states.is_empty() {
            return Err(Error::EmptyBasis(constraint.describe()));
        }
        let index = states.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        Ok(Self {
            matter_modes,
            link_modes,
            link_basis,
            constraint,
            states,
            index,
            site_pos,
            link_pos,
        })
    }

    /// Basis over every matter site and link of `geom`.
    pub fn for_geometry(
        geom: &LatticeGeometry,
        link_basis: LinkBasis,
        constraint: SectorConstraint,
        max_occupation: u8,
    ) -> Result<Self> {
        Self::new(
            geom.matter_sites.iter().map(|s| (s.id, max_occupation)).collect(),
            geom.links.iter().map(|l| l.id).collect(),
            link_basis,
            constraint,
        )
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[ProductState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &ProductState {
        &self.states[k]
    }

    pub fn index_of(&self, s: &ProductState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn n_links(&self) -> usize {
        self.link_modes.len()
    }

    /// Position of site id `site` among the matter modes.
    pub fn site_position(&self, site: usize) -> Result<usize> {
        self.site_pos.get(&site).copied().ok_or(Error::UnknownId {
            kind: "site",
            id: site,
            available: self.matter_modes.len(),
        })
    }

    pub fn link_position(&self, link: usize) -> Result<usize> {
        self.link_pos.get(&link).copied().ok_or(Error::UnknownId {
            kind: "link",
            id: link,
            available: self.link_modes.len(),
        })
    }

    /// Same modes, different link basis or constraint.
    pub fn with(&self, link_basis: LinkBasis, constraint: SectorConstraint) -> Result<Self> {
        Self::new(self.matter_modes.clone(), self.link_modes.clone(), link_basis, constraint)
    }

    fn same_modes(&self, other: &Self) -> bool {
        self.matter_modes == other.matter_modes && self.link_modes == other.link_modes
    }

    /// Occupation of site id `site` in state `k`.
    pub fn occupation(&self, k: usize, site: usize) -> Result<u8> {
        Ok(self.states[k].occupations[self.site_position(site)?])
    }
}

/// Advances `occ` to the next occupation vector; false after the last one.
fn odometer(occ: &mut [u8], modes: &[(usize, u8)]) -> bool {
    for k in (0..occ.len()).rev() {
        if occ[k] < modes[k].1 {
            occ[k] += 1;
            return true;
        }
        occ[k] = 0;
    }
    false
}

/// Constraint with ids translated into mode positions.
struct Resolved {
    groups: Vec<Vec<usize>>,
    total: Option<usize>,
    /// `(site positions, link mask, eigenvalue)`.
    gauss: Vec<(Vec<usize>, u64, i8)>,
}

impl Resolved {
    fn new(c: &SectorConstraint, sites: &HashMap<usize, usize>, links: &HashMap<usize, usize>) -> Result<Self> {
        let mut r = Resolved {
            groups: Vec::new(),
            total: None,
            gauss: Vec::new(),
        };
        r.add(c, sites, links)?;
        Ok(r)
    }

    fn add(&mut self, c: &SectorConstraint, sites: &HashMap<usize, usize>, links: &HashMap<usize, usize>) -> Result<()> {
        let site = |s: &usize| {
            sites.get(s).copied().ok_or(Error::UnknownId {
                kind: "site",
                id: *s,
                available: sites.len(),
            })
        };
        match c {
            SectorConstraint::None => {}
            SectorConstraint::OneBosonPerPlaquette { groups } => {
                for g in groups {
                    self.groups.push(g.iter().map(site).collect::<Result<_>>()?);
                }
            }
            SectorConstraint::TotalExcitationNumber(n) => {
                if self.total.is_some_and(|t| t != *n) {
                    return Err(Error::EmptyBasis(c.describe()));
                }
                self.total = Some(*n);
            }
            SectorConstraint::GaussSector { generators } => {
                for g in generators {
                    if g.eigenvalue.abs() != 1 {
                        return Err(Error::param("eigenvalue", "Gauss eigenvalues are +1 or -1"));
                    }
                    let mut mask = 0u64;
                    for l in &g.links {
                        let p = links.get(l).copied().ok_or(Error::UnknownId {
                            kind: "link",
                            id: *l,
                            available: links.len(),
                        })?;
                        mask ^= 1 << p;
                    }
                    self.gauss
                        .push((g.sites.iter().map(site).collect::<Result<_>>()?, mask, g.eigenvalue));
                }
            }
            SectorConstraint::All(cs) => {
                for c in cs {
                    self.add(c, sites, links)?;
                }
            }
        }
        Ok(())
    }

    fn occupation_ok(&self, occ: &[u8]) -> bool {
        if let Some(n) = self.total {
            if occ.iter().map(|&o| o as usize).sum::<usize>() != n {
                return false;
            }
        }
        self.groups
            .iter()
            .all(|g| g.iter().map(|&p| occ[p] as usize).sum::<usize>() == 1)
    }

    fn links_ok(&self, occ: &[u8], mask: u64) -> bool {
        self.gauss.iter().all(|(sites, lmask, ev)| {
            let n: u32 = sites.iter().map(|&p| occ[p] as u32).sum();
            let odd = (n + (mask & lmask).count_ones()) % 2 == 1;
            (if odd { -1 } else { 1 }) == *ev
        })
    }
}

/// Elementary factor of a term. Factors act right to left, like operator products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Op {
    Create(usize),
    Annihilate(usize),
    Number(usize),
    /// `(-1)^n` on a site.
    Parity(usize),
    TauX(usize),
    TauZ(usize),
}

impl Op {
    fn adjoint(self) -> Self {
        match self {
            Op::Create(s) => Op::Annihilate(s),
            Op::Annihilate(s) => Op::Create(s),
            other => other,
        }
    }
}

/// `coeff * ops[0] * ops[1] * ... `.
#[derive(Debug, Clone, PartialEq)]
pub struct Term<T: Real> {
    pub coeff: C<T>,
    pub ops: Vec<Op>,
}

impl<T: Real> Term<T> {
    pub fn new(coeff: T, ops: Vec<Op>) -> Self {
        Self {
            coeff: C::new(coeff, T::zero()),
            ops,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            coeff: self.coeff.conj(),
            ops: self.ops.iter().rev().map(|o| o.adjoint()).collect(),
        }
    }
}

/// Positions of the ops of a term, resolved against a basis.
enum Pos {
    Create(usize),
    Annihilate(usize),
    Number(usize),
    Parity(usize),
    TauX(usize),
    TauZ(usize),
}

fn resolve_ops<T: Real>(basis: &BasisSet, term: &Term<T>) -> Result<Vec<Pos>> {
    term.ops
        .iter()
        .map(|op| {
            Ok(match *op {
                Op::Create(s) => Pos::Create(basis.site_position(s)?),
                Op::Annihilate(s) => Pos::Annihilate(basis.site_position(s)?),
                Op::Number(s) => Pos::Number(basis.site_position(s)?),
                Op::Parity(s) => Pos::Parity(basis.site_position(s)?),
                Op::TauX(l) => Pos::TauX(basis.link_position(l)?),
                Op::TauZ(l) => Pos::TauZ(basis.link_position(l)?),
            })
        })
        .collect()
}

/// Applies resolved factors to a product state; `None` if annihilated or the
/// cutoff is exceeded.
fn apply_ops(basis: &BasisSet, ops: &[Pos], state: &ProductState) -> Option<(ProductState, f64)> {
    let mut s = state.clone();
    // Squared magnitude kept as an integer so sqrt(n) factors combine exactly.
    let mut amp_sq = 1u64;
    let mut negative = false;
    let diag_x = basis.link_basis == LinkBasis::TauX;
    for op in ops.iter().rev() {
        match *op {
            Pos::Create(p) => {
                let n = s.occupations[p];
                if n >= basis.matter_modes[p].1 {
                    return None;
                }
                s.occupations[p] = n + 1;
                amp_sq *= u64::from(n) + 1;
            }
            Pos::Annihilate(p) => {
                let n = s.occupations[p];
                if n == 0 {
                    return None;
                }
                s.occupations[p] = n - 1;
                amp_sq *= u64::from(n);
            }
            Pos::Number(p) => {
                let n = s.occupations[p];
                if n == 0 {
                    return None;
                }
                amp_sq *= u64::from(n) * u64::from(n);
            }
            Pos::Parity(p) => {
                if s.occupations[p] % 2 == 1 {
                    negative = !negative;
                }
            }
            Pos::TauX(l) | Pos::TauZ(l) => {
                let diagonal = matches!(op, Pos::TauX(_)) == diag_x;
                if diagonal {
                    if s.links >> l & 1 == 1 {
                        negative = !negative;
                    }
                } else {
                    s.links ^= 1 << l;
                }
            }
        }
    }
    let amp = (amp_sq as f64).sqrt();
    Some((s, if negative { -amp } else { amp }))
}

/// Builds `sum terms` in `basis`. Contributions that leave the constrained
/// sector are dropped (the operator is sandwiched between sector projectors).
pub fn build_operator<T: Real>(basis: &BasisSet, terms: &[Term<T>]) -> Result<SparseOperator<T>> {
    build_operator_audited(basis, terms).map(|(op, _)| op)
}

/// Like [`build_operator`], also returning the Frobenius norm of the dropped
/// out-of-sector part.
pub fn build_operator_audited<T: Real>(basis: &BasisSet, terms: &[Term<T>]) -> Result<(SparseOperator<T>, T)> {
    let resolved: Vec<(C<T>, Vec<Pos>)> = terms
        .iter()
        .map(|t| Ok((t.coeff, resolve_ops(basis, t)?)))
        .collect::<Result<_>>()?;
    let per_col: Vec<(Vec<(usize, usize, C<T>)>, T)> = (0..basis.dim())
        .into_par_iter()
        .map(|col| {
            let src = &basis.states[col];
            let mut out = Vec::new();
            let mut dropped = T::zero();
            for (coeff, ops) in &resolved {
                if let Some((dst, amp)) = apply_ops(basis, ops, src) {
                    let v = coeff.scale(T::of(amp));
                    match basis.index.get(&dst) {
                        Some(&row) => out.push((row, col, v)),
                        None => dropped += v.norm_sqr(),
                    }
                }
            }
            (out, dropped)
        })
        .collect();
    let mut triplets = Vec::new();
    let mut dropped = T::zero();
    for (t, d) in per_col {
        triplets.extend(t);
        dropped += d;
    }
    Ok((SparseOperator::from_triplets(basis.dim(), basis.dim(), triplets), dropped.sqrt()))
}

/// Product of single-factor operators, e.g. `prod tau^z` over a set of links.
pub fn product_term<T: Real>(ops: Vec<Op>) -> Vec<Term<T>> {
    vec![Term::new(T::one(), ops)]
}

/// Re-expresses `psi` (in basis `from`) in basis `to`. Both bases must share
/// their modes; link amplitudes are rotated with per-link Hadamards when the
/// link bases differ. Returns the state and the weight that fell outside `to`.
pub fn transfer_state<T: Real>(from: &BasisSet, psi: &[C<T>], to: &BasisSet) -> Result<(Vec<C<T>>, T)> {
    if !from.same_modes(to) {
        return Err(Error::BasisMismatch("bases have different modes".into()));
    }
    if psi.len() != from.dim() {
        return Err(Error::BasisMismatch(format!(
            "state length {} does not match basis dimension {}",
            psi.len(),
            from.dim()
        )));
    }
    let rotate = from.link_basis != to.link_basis;
    let blocks = link_blocks(from, psi);
    let mut out = vec![C::new(T::zero(), T::zero()); to.dim()];
    let mut kept = T::zero();
    let mut total = T::zero();
    for (occ, mut block) in blocks {
        if rotate {
            hadamard_all(&mut block);
        }
        for (mask, amp) in block.iter().enumerate() {
            total += amp.norm_sqr();
            if let Some(k) = to.index_of(&ProductState {
                occupations: occ.clone(),
                links: mask as u64,
            }) {
                out[k] = *amp;
                kept += amp.norm_sqr();
            }
        }
    }
    Ok((out, (total - kept).max(T::zero())))
}

/// Groups amplitudes by matter configuration into dense link vectors indexed by mask.
pub fn link_blocks<T: Real>(basis: &BasisSet, psi: &[C<T>]) -> BTreeMap<Vec<u8>, Vec<C<T>>> {
    let size = 1usize << basis.n_links();
    let mut blocks: BTreeMap<Vec<u8>, Vec<C<T>>> = BTreeMap::new();
    for (s, amp) in basis.states.iter().zip(psi) {
        blocks
            .entry(s.occupations.clone())
            .or_insert_with(|| vec![C::new(T::zero(), T::zero()); size])[s.links as usize] = *amp;
    }
    blocks
}

/// In-place Hadamard on every link bit of a mask-indexed vector.
pub fn hadamard_all<T: Real>(v: &mut [C<T>]) {
    let inv = T::one() / T::of(2.0).sqrt();
    let n = v.len();
    let mut bit = 1;
    while bit < n {
        for i in 0..n {
            if i & bit == 0 {
                let (x, y) = (v[i], v[i | bit]);
                v[i] = (x + y).scale(inv);
                v[i | bit] = (x - y).scale(inv);
            }
        }
        bit <<= 1;
    }
}

/// Reduced density matrix of the links, `rho[m, m'] = sum_occ psi(occ, m) psi(occ, m')*`,
/// indexed by link masks in the basis' link basis.
pub fn partial_trace_matter<T: Real>(basis: &BasisSet, psi: &[C<T>]) -> Result<DMatrix<C<T>>> {
    check_normalized(psi)?;
    let size = 1usize << basis.n_links();
    let mut rho = DMatrix::from_element(size, size, C::new(T::zero(), T::zero()));
    for block in link_blocks(basis, psi).values() {
        let nz: Vec<usize> = (0..size).filter(|&m| block[m] != C::new(T::zero(), T::zero())).collect();
        for &a in &nz {
            for &b in &nz {
                rho[(a, b)] += block[a] * block[b].conj();
            }
        }
    }
    Ok(rho)
}

/// Normalization tolerance scaled to the scalar precision.
pub fn norm_tolerance<T: Real>() -> T {
    T::of(1e-10).max(T::of(1e4) * <T as Real>::epsilon())
}

pub fn check_normalized<T: Real>(psi: &[C<T>]) -> Result<()> {
    let n = norm(psi);
    if (n - T::one()).abs() > norm_tolerance::<T>() {
        return Err(Error::NotNormalized(n.to_f64_lossy()));
    }
    Ok(())
}

/// Basis vector `k` of dimension `dim`.
pub fn unit_vector<T: Real>(dim: usize, k: usize) -> Vec<C<T>> {
    let mut v = vec![C::new(T::zero(), T::zero()); dim];
    v[k] = C::new(T::one(), T::zero());
    v
}
