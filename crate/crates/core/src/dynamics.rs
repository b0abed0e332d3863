//! Time evolution under piecewise-linear parameter ramps, the plaquette
//! growing scheme and gap landscapes.
//!
//! States are propagated with a fourth-order commutator-free Magnus step:
//! two exponentials per step, each evaluated with a Lanczos projection. For a
//! Hamiltonian linear in its parameters and a linear ramp this is exact up to
//! `O(dt^5)` per step.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::effective::{
    default_gauss_eigenvalues, effective_basis, gauss_sector_basis, lgt_parts, toric_code_state, EffectiveParams,
    GaugeTransform,
};
use crate::error::{Error, Result};
use crate::hilbert::{check_normalized, link_blocks, transfer_state, BasisSet, LinkBasis, ProductState};
use crate::lattice::LatticeGeometry;
use crate::linalg::{eigh_sparse, expm_krylov, spectral_gap, KrylovOptions};
use crate::num::{abs2, inner, norm, Real, C};
use crate::sparse::LinearHamiltonian;

/// One linear ramp: parameters move from the previous segment's end values to
/// `end` over `duration`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment<T: Real> {
    pub label: String,
    pub duration: T,
    pub end: Vec<T>,
}

/// Piecewise-linear schedule of named parameters. Continuity across segment
/// boundaries holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RampSchedule<T: Real> {
    pub names: Vec<String>,
    pub initial: Vec<T>,
    pub segments: Vec<Segment<T>>,
}

impl<T: Real> RampSchedule<T> {
    pub fn new(names: Vec<String>, initial: Vec<T>) -> Result<Self> {
        if names.len() != initial.len() {
            return Err(Error::Schedule("one initial value per parameter".into()));
        }
        Ok(Self {
            names,
            initial,
            segments: Vec::new(),
        })
    }

    pub fn push(&mut self, label: impl Into<String>, duration: T, end: Vec<T>) -> Result<()> {
        if !(duration > T::zero()) {
            return Err(Error::Schedule(format!("segment duration must be positive, got {duration}")));
        }
        if end.len() != self.names.len() {
            return Err(Error::Schedule("one end value per parameter".into()));
        }
        self.segments.push(Segment {
            label: label.into(),
            duration,
            end,
        });
        Ok(())
    }

    /// Appends a segment that changes only the listed parameters.
    pub fn push_changes(&mut self, label: impl Into<String>, duration: T, changes: &[(usize, T)]) -> Result<()> {
        let mut end = self.end_values().to_vec();
        for &(k, v) in changes {
            *end.get_mut(k).ok_or_else(|| Error::Schedule(format!("no parameter {k}")))? = v;
        }
        self.push(label, duration, end)
    }

    pub fn end_values(&self) -> &[T] {
        self.segments.last().map(|s| s.end.as_slice()).unwrap_or(&self.initial)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn total_duration(&self) -> T {
        self.segments.iter().fold(T::zero(), |a, s| a + s.duration)
    }

    /// Start time of each segment, plus the final time.
    pub fn boundaries(&self) -> Vec<T> {
        let mut out = vec![T::zero()];
        for s in &self.segments {
            let last = *out.last().unwrap();
            out.push(last + s.duration);
        }
        out
    }

    /// Parameter values at time `t` (clamped to the schedule's range).
    pub fn values_at(&self, t: T) -> Vec<T> {
        let mut start = T::zero();
        let mut from = self.initial.as_slice();
        for s in &self.segments {
            if t <= start + s.duration {
                let x = ((t - start) / s.duration).max(T::zero());
                return from.iter().zip(&s.end).map(|(&a, &b)| a + (b - a) * x).collect();
            }
            start += s.duration;
            from = &s.end;
        }
        from.to_vec()
    }
}

/// Integrator settings.
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Largest step; segments are split into equal steps not exceeding it.
    pub dt: f64,
    pub krylov: KrylovOptions,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: 0.1,
            krylov: KrylovOptions::default(),
        }
    }
}

/// Maps schedule parameters onto Hamiltonian parts by name.
fn part_map<T: Real>(ham: &LinearHamiltonian<T>, schedule: &RampSchedule<T>) -> Result<Vec<usize>> {
    ham.names()
        .iter()
        .map(|n| {
            schedule
                .index_of(n)
                .ok_or_else(|| Error::Schedule(format!("schedule has no parameter for Hamiltonian part `{n}`")))
        })
        .collect()
}

/// Propagates `psi0` through `schedule`. `observe(time, state)` is called at
/// the start, at every segment boundary and `samples_per_segment` times inside
/// each segment. Returns the final state.
pub fn evolve<T: Real>(
    psi0: &[C<T>],
    ham: &LinearHamiltonian<T>,
    schedule: &RampSchedule<T>,
    samples_per_segment: usize,
    opts: EvolveOptions,
    mut observe: impl FnMut(T, &[C<T>]) -> Result<()>,
) -> Result<Vec<C<T>>> {
    check_normalized(psi0)?;
    if psi0.len() != ham.dim() {
        return Err(Error::BasisMismatch("state and Hamiltonian dimensions differ".into()));
    }
    let map = part_map(ham, schedule)?;
    let coeffs_at = |t: T| -> Vec<T> {
        let v = schedule.values_at(t);
        map.iter().map(|&k| v[k]).collect()
    };
    let sq3 = 3f64.sqrt();
    let (c1, c2) = (T::of(0.5 - sq3 / 6.0), T::of(0.5 + sq3 / 6.0));
    let (a1, a2) = (T::of(0.25 + sq3 / 6.0), T::of(0.25 - sq3 / 6.0));
    let dt_max = T::of(opts.dt);

    let mut psi = psi0.to_vec();
    let mut time = T::zero();
    observe(time, &psi)?;
    let samples = samples_per_segment.max(1);
    for seg in &schedule.segments {
        let seg_start = time;
        let per_sample = (seg.duration / T::of(samples as f64) / dt_max).ceil().to_f64_lossy().max(1.0) as usize;
        let n_steps = per_sample * samples;
        let dt = seg.duration / T::of(n_steps as f64);
        for step in 0..n_steps {
            let t0 = seg_start + dt * T::of(step as f64);
            let h1 = coeffs_at(t0 + c1 * dt);
            let h2 = coeffs_at(t0 + c2 * dt);
            // Earlier node dominates the first exponential.
            let first: Vec<T> = h1.iter().zip(&h2).map(|(&x, &y)| a1 * x + a2 * y).collect();
            let second: Vec<T> = h1.iter().zip(&h2).map(|(&x, &y)| a2 * x + a1 * y).collect();
            psi = expm_krylov(&ham.assemble(&first), &psi, dt, opts.krylov)?;
            psi = expm_krylov(&ham.assemble(&second), &psi, dt, opts.krylov)?;
            if (step + 1) % per_sample == 0 {
                let t = if step + 1 == n_steps {
                    seg_start + seg.duration
                } else {
                    t0 + dt
                };
                observe(t, &psi)?;
            }
        }
        time = seg_start + seg.duration;
    }
    let drift = (norm(&psi) - T::one()).abs();
    if drift > T::of(1e-10).max(T::of(1e4) * <T as Real>::epsilon()) {
        return Err(Error::Convergence(format!("norm drifted by {drift:e}")));
    }
    Ok(psi)
}

/// Fidelity with a (possibly degenerate) link-space target after tracing out
/// matter: `sum_m sum_k |<target_k | psi_m>|^2`, where `psi_m` is the link
/// block of matter configuration `m`. Targets are mask-indexed vectors in the
/// basis' link basis.
pub fn traced_fidelity<T: Real>(basis: &BasisSet, psi: &[C<T>], targets: &[Vec<C<T>>]) -> T {
    link_blocks(basis, psi)
        .values()
        .map(|block| targets.iter().fold(T::zero(), |acc, t| acc + abs2(inner(t, block))))
        .fold(T::zero(), |a, b| a + b)
}

/// Which state the growing scheme aims for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GrowingVariant {
    Ground,
    /// Field sign flipped on one boundary link of `plaquette`, which ends in
    /// the state with a single vison (`B_P = -1`) on that plaquette.
    Vison { plaquette: usize },
}

/// Plaquette-by-plaquette growing: for each plaquette in `order`, its new
/// links first ramp their hopping `0 -> t`, then their field `h0 -> 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowingPlan<T: Real> {
    pub order: Vec<usize>,
    pub t: T,
    pub h0: T,
    /// Duration of every linear segment.
    pub segment_duration: T,
    /// Links whose field starts at `-h0` instead of `h0`.
    pub flipped_links: Vec<usize>,
    /// Initial boson corner per plaquette (index into `Plaquette::sites`).
    pub initial_corners: Vec<usize>,
    pub variant: GrowingVariant,
}

impl<T: Real> GrowingPlan<T> {
    /// Default plan: plaquettes in id order, `h0 = t`, segments of `20 / t`.
    pub fn new(geom: &LatticeGeometry, t: T) -> Result<Self> {
        if !(t > T::zero()) {
            return Err(Error::param("t", "hopping must be positive"));
        }
        Ok(Self {
            order: (0..geom.n_plaquettes()).collect(),
            t,
            h0: t,
            segment_duration: T::of(20.0) / t,
            flipped_links: Vec::new(),
            initial_corners: initial_corners(geom)?,
            variant: GrowingVariant::Ground,
        })
    }

    /// Switches to the vison variant on `plaquette`: the field on its boundary
    /// link (belonging to no other plaquette) is flipped.
    pub fn with_vison(mut self, geom: &LatticeGeometry, plaquette: usize) -> Result<Self> {
        let p = geom.plaquettes.get(plaquette).ok_or(Error::UnknownId {
            kind: "plaquette",
            id: plaquette,
            available: geom.n_plaquettes(),
        })?;
        let boundary = p
            .links
            .iter()
            .copied()
            .find(|&l| !geom.links[l].is_double())
            .ok_or_else(|| Error::param("vison_plaquette", "plaquette has no boundary link"))?;
        self.flipped_links = vec![boundary];
        self.variant = GrowingVariant::Vison { plaquette };
        Ok(self)
    }

    pub fn validate(&self, geom: &LatticeGeometry) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &p in &self.order {
            if p >= geom.n_plaquettes() || !seen.insert(p) {
                return Err(Error::param("order", format!("invalid or repeated plaquette {p}")));
            }
        }
        if seen.len() != geom.n_plaquettes() {
            return Err(Error::param("order", "every plaquette must be grown once"));
        }
        if self.initial_corners.len() != geom.n_plaquettes() || self.initial_corners.iter().any(|&k| k > 2) {
            return Err(Error::param("initial_corners", "one corner (0, 1 or 2) per plaquette"));
        }
        if !(self.segment_duration > T::zero()) {
            return Err(Error::Schedule("segment duration must be positive".into()));
        }
        for &l in &self.flipped_links {
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

    /// Links switched on in each growing step.
    pub fn new_links(&self, geom: &LatticeGeometry) -> Vec<Vec<usize>> {
        let mut done = BTreeSet::new();
        self.order
            .iter()
            .map(|&p| {
                let fresh: Vec<usize> = geom.plaquettes[p].links.iter().copied().filter(|l| !done.contains(l)).collect();
                done.extend(fresh.iter().copied());
                fresh
            })
            .collect()
    }

    fn field_sign(&self, link: usize) -> T {
        if self.flipped_links.contains(&link) {
            -T::one()
        } else {
            T::one()
        }
    }

    /// The full ramp over parameters named like the parts of [`lgt_parts`].
    pub fn schedule(&self, geom: &LatticeGeometry) -> Result<RampSchedule<T>> {
        self.validate(geom)?;
        let nl = geom.n_links();
        let names: Vec<String> = (0..nl)
            .map(|l| format!("hop:{l}"))
            .chain((0..nl).map(|l| format!("field:{l}")))
            .collect();
        let initial: Vec<T> = (0..nl)
            .map(|_| T::zero())
            .chain((0..nl).map(|l| self.h0 * self.field_sign(l)))
            .collect();
        let mut s = RampSchedule::new(names, initial)?;
        for (k, links) in self.new_links(geom).iter().enumerate() {
            let raise: Vec<(usize, T)> = links.iter().map(|&l| (l, self.t)).collect();
            let lower: Vec<(usize, T)> = links.iter().map(|&l| (nl + l, T::zero())).collect();
            s.push_changes(format!("step{}-hopping", k + 1), self.segment_duration, &raise)?;
            s.push_changes(format!("step{}-field", k + 1), self.segment_duration, &lower)?;
        }
        Ok(s)
    }

    /// Plaquette signs of the target toric-code state.
    pub fn target_signs(&self, geom: &LatticeGeometry) -> Vec<i8> {
        (0..geom.n_plaquettes())
            .map(|p| match self.variant {
                GrowingVariant::Vison { plaquette } if plaquette == p => -1,
                _ => 1,
            })
            .collect()
    }

    /// Effective parameters of the growing step `step` (0-based) at a point
    /// `(t_tilde, h)` of its own links, with earlier steps complete and later
    /// ones untouched.
    pub fn step_params(&self, geom: &LatticeGeometry, step: usize, t_tilde: T, h: T) -> Result<EffectiveParams<T>> {
        let steps = self.new_links(geom);
        if step >= steps.len() {
            return Err(Error::UnknownId {
                kind: "growing step",
                id: step,
                available: steps.len(),
            });
        }
        let mut p = EffectiveParams::new(self.t);
        for (k, links) in steps.iter().enumerate() {
            for &l in links {
                let (hop, field) = match k.cmp(&step) {
                    std::cmp::Ordering::Less => (self.t, T::zero()),
                    std::cmp::Ordering::Equal => (t_tilde, h),
                    std::cmp::Ordering::Greater => (T::zero(), self.h0),
                };
                p.t_tilde.insert(l, hop);
                p.h.insert(l, field * self.field_sign(l));
            }
        }
        Ok(p)
    }
}

/// Boson corners with `N_i = N^P_i (mod 2)` at every super-site, so that the
/// all-`tau^x = +1` product state lies in the sector `G_i = (-1)^(N^P_i)`.
/// The first valid assignment in lexicographic order is returned.
pub fn initial_corners(geom: &LatticeGeometry) -> Result<Vec<usize>> {
    let n = geom.n_plaquettes();
    if n > 12 {
        return Err(Error::param("geometry", "corner search limited to 12 plaquettes"));
    }
    let mut corners = vec![0usize; n];
    loop {
        let mut count = vec![0usize; geom.n_super_sites()];
        for (p, &k) in geom.plaquettes.iter().zip(&corners) {
            count[p.vertices[k]] += 1;
        }
        if geom.super_sites.iter().all(|s| (count[s.id] + s.n_plaquettes).is_multiple_of(2)) {
            return Ok(corners);
        }
        let mut k = n;
        loop {
            if k == 0 {
                return Err(Error::Domain("no boson placement realizes the default Gauss sector".into()));
            }
            k -= 1;
            corners[k] += 1;
            if corners[k] < 3 {
                break;
            }
            corners[k] = 0;
        }
    }
}

/// One sampled point of a growing run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowingSample {
    pub time: f64,
    pub segment: String,
    pub fidelity: f64,
    pub energy: f64,
    pub gap: f64,
    pub sector_leakage: f64,
}

#[derive(Debug, Clone)]
pub struct GrowingResult<T: Real> {
    /// Final state in the full one-boson tau^x basis.
    pub state: Vec<C<T>>,
    pub basis: BasisSet,
    pub trace: Vec<GrowingSample>,
    pub final_fidelity: T,
    /// Step used for the last (converged) run.
    pub dt: f64,
}

/// Settings of [`run_growing`].
#[derive(Debug, Clone, Copy)]
pub struct GrowingOptions {
    pub samples_per_segment: usize,
    /// Initial step; halved until the final fidelity moves by less than `convergence`.
    pub dt: f64,
    pub convergence: f64,
    pub max_halvings: u32,
    /// Largest tolerated weight outside the initial Gauss sector.
    pub leakage_threshold: f64,
    /// Compute the instantaneous sector gap at every sample.
    pub track_gap: bool,
}

impl Default for GrowingOptions {
    fn default() -> Self {
        Self {
            samples_per_segment: 10,
            dt: 0.2,
            convergence: 1e-8,
            max_halvings: 6,
            leakage_threshold: 1e-8,
            track_gap: true,
        }
    }
}

/// Runs the growing scheme in the full one-boson basis (so that leakage out of
/// the Gauss sector is observable) and tracks the fidelity with the target
/// toric-code state after undoing the gauge transformation.
pub fn run_growing<T: Real>(geom: &LatticeGeometry, plan: &GrowingPlan<T>, opts: GrowingOptions) -> Result<GrowingResult<T>> {
    let schedule = plan.schedule(geom)?;
    let basis = effective_basis(geom, LinkBasis::TauX)?;
    let ham = lgt_parts::<T>(geom, &basis)?;
    let sector = gauss_sector_basis(geom, &default_gauss_eigenvalues(geom))?;
    let sector_ham = lgt_parts::<T>(geom, &sector)?;
    let gauge = GaugeTransform::<T>::new(geom, &basis)?;
    let target = toric_code_state::<T>(geom, &plan.target_signs(geom), LinkBasis::TauZ)?;

    let mut occ = vec![0u8; basis.matter_modes.len()];
    for (p, &k) in geom.plaquettes.iter().zip(&plan.initial_corners) {
        occ[basis.site_position(p.sites[k])?] = 1;
    }
    let start = basis
        .index_of(&ProductState {
            occupations: occ,
            links: 0,
        })
        .expect("one-boson product state");
    let psi0 = crate::hilbert::unit_vector::<T>(basis.dim(), start);
    if transfer_state(&basis, &psi0, &sector)?.1 > T::zero() {
        return Err(Error::param("initial_corners", "initial state is not in the default Gauss sector"));
    }

    let fidelity = |psi: &[C<T>]| -> Result<T> {
        let (z, _) = transfer_state(&basis, psi, gauge.basis())?;
        let tilde: Vec<C<T>> = z.iter().zip(gauge.phases()).map(|(a, p)| *a * p).collect();
        Ok(traced_fidelity(gauge.basis(), &tilde, std::slice::from_ref(&target)))
    };
    let boundaries = schedule.boundaries();
    let segment_at = |t: T| -> String {
        let k = boundaries.iter().rposition(|&b| b < t).unwrap_or(0);
        schedule.segments.get(k).map(|s| s.label.clone()).unwrap_or_default()
    };

    let mut dt = opts.dt;
    let mut previous: Option<T> = None;
    for _ in 0..=opts.max_halvings {
        let mut trace = Vec::new();
        let evolve_opts = EvolveOptions {
            dt,
            ..Default::default()
        };
        let state = evolve(&psi0, &ham, &schedule, opts.samples_per_segment, evolve_opts, |t, psi| {
            let coeffs = ham_coeffs(&ham, &schedule, t)?;
            let energy = ham.assemble(&coeffs).expectation(psi).re;
            let (in_sector, leak) = transfer_state(&basis, psi, &sector)?;
            if leak > T::of(opts.leakage_threshold) {
                return Err(Error::SectorLeakage {
                    leakage: leak.to_f64_lossy(),
                    threshold: opts.leakage_threshold,
                });
            }
            let gap = if opts.track_gap {
                let e = eigh_sparse(&sector_ham.assemble(&coeffs));
                spectral_gap(&e.values, T::of(1e-9) * plan.t).unwrap_or(T::zero())
            } else {
                T::zero()
            };
            let _ = in_sector;
            trace.push(GrowingSample {
                time: t.to_f64_lossy(),
                segment: segment_at(t),
                fidelity: fidelity(psi)?.to_f64_lossy(),
                energy: energy.to_f64_lossy(),
                gap: gap.to_f64_lossy(),
                sector_leakage: leak.to_f64_lossy(),
            });
            Ok(())
        })?;
        let f = fidelity(&state)?;
        if let Some(prev) = previous {
            if (f - prev).abs() < T::of(opts.convergence) {
                return Ok(GrowingResult {
                    state,
                    basis,
                    trace,
                    final_fidelity: f,
                    dt,
                });
            }
        }
        previous = Some(f);
        dt /= 2.0;
    }
    Err(Error::Convergence(format!(
        "final fidelity did not settle to {:e} after {} step halvings",
        opts.convergence, opts.max_halvings
    )))
}

fn ham_coeffs<T: Real>(ham: &LinearHamiltonian<T>, schedule: &RampSchedule<T>, t: T) -> Result<Vec<T>> {
    let map = part_map(ham, schedule)?;
    let v = schedule.values_at(t);
    Ok(map.iter().map(|&k| v[k]).collect())
}

/// One point of a gap landscape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint {
    pub t_tilde: f64,
    pub h: f64,
    pub gap: f64,
}

/// Many-body gap in the default Gauss sector for growing step `step` over a
/// grid of `(t_tilde, h)` values of that step's links. Levels within
/// `1e-9 t` of the ground energy count as ground manifold.
pub fn gap_scan<T: Real>(
    geom: &LatticeGeometry,
    plan: &GrowingPlan<T>,
    step: usize,
    t_tilde_grid: &[T],
    h_grid: &[T],
) -> Result<Vec<GapPoint>> {
    plan.validate(geom)?;
    let sector = gauss_sector_basis(geom, &default_gauss_eigenvalues(geom))?;
    let ham = lgt_parts::<T>(geom, &sector)?;
    let points: Vec<(T, T)> = t_tilde_grid
        .iter()
        .flat_map(|&a| h_grid.iter().map(move |&b| (a, b)))
        .collect();
    points
        .par_iter()
        .map(|&(tt, h)| {
            let p = plan.step_params(geom, step, tt, h)?;
            let e = eigh_sparse(&ham.assemble(&p.coefficients(geom)));
            let gap = spectral_gap(&e.values, T::of(1e-9) * plan.t).unwrap_or(T::zero());
            Ok(GapPoint {
                t_tilde: tt.to_f64_lossy(),
                h: h.to_f64_lossy(),
                gap: gap.to_f64_lossy(),
            })
        })
        .collect()
}

/// Points along the suggested path of one growing step: hopping raised at
/// `h = h0`, then field lowered at `t_tilde = t`; `n` samples per leg.
pub fn suggested_path<T: Real>(plan: &GrowingPlan<T>, n: usize) -> Vec<(T, T)> {
    let n = n.max(2);
    let frac = |k: usize| T::of(k as f64 / (n - 1) as f64);
    let raise = (0..n).map(|k| (plan.t * frac(k), plan.h0));
    let lower = (1..n).map(|k| (plan.t, plan.h0 * (T::one() - frac(k))));
    raise.chain(lower).collect()
}

/// Gap along an explicit list of `(t_tilde, h)` points of one step.
pub fn gap_along<T: Real>(geom: &LatticeGeometry, plan: &GrowingPlan<T>, step: usize, path: &[(T, T)]) -> Result<Vec<GapPoint>> {
    let sector = gauss_sector_basis(geom, &default_gauss_eigenvalues(geom))?;
    let ham = lgt_parts::<T>(geom, &sector)?;
    path.par_iter()
        .map(|&(tt, h)| {
            let p = plan.step_params(geom, step, tt, h)?;
            let e = eigh_sparse(&ham.assemble(&p.coefficients(geom)));
            Ok(GapPoint {
                t_tilde: tt.to_f64_lossy(),
                h: h.to_f64_lossy(),
                gap: spectral_gap(&e.values, T::of(1e-9) * plan.t).unwrap_or(T::zero()).to_f64_lossy(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::{build_lgt_hamiltonian, plaquette_operator};
    use crate::hilbert::{build_operator, SectorConstraint, Term};
    use crate::lattice::preset;
    use crate::num::{cis, cr};
    use crate::sparse::SparseOperator;

    #[test]
    fn schedule_interpolates_and_validates() {
        let mut s = RampSchedule::new(vec!["a".into(), "b".into()], vec![0.0, 1.0]).unwrap();
        s.push_changes("up", 2.0, &[(0, 1.0)]).unwrap();
        s.push_changes("down", 1.0, &[(1, 0.0)]).unwrap();
        assert_eq!(s.values_at(1.0), vec![0.5, 1.0]);
        assert_eq!(s.values_at(2.5), vec![1.0, 0.5]);
        assert_eq!(s.values_at(9.0), vec![1.0, 0.0]);
        assert_eq!(s.boundaries(), vec![0.0, 2.0, 3.0]);
        assert!(s.push("bad", 0.0, vec![0.0, 0.0]).is_err());
        assert!(s.push("bad", 1.0, vec![0.0]).is_err());
    }

    #[test]
    fn tri3_plan_structure() {
        let g = preset("tri3").unwrap();
        let plan = GrowingPlan::<f64>::new(&g, 1.0).unwrap();
        let steps = plan.new_links(&g);
        assert_eq!(steps.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![3, 2, 2]);
        // Bosons sit on the vertices shared by an odd number of plaquettes.
        let verts: Vec<usize> = g
            .plaquettes
            .iter()
            .zip(&plan.initial_corners)
            .map(|(p, &k)| p.vertices[k])
            .collect();
        assert_eq!(verts, vec![0, 2, 4]);
        let s = plan.schedule(&g).unwrap();
        assert_eq!(s.segments.len(), 6);
        assert!((s.total_duration() - 120.0).abs() < 1e-12);
        let vison = plan.clone().with_vison(&g, 1).unwrap();
        assert_eq!(vison.target_signs(&g), vec![1, -1, 1]);
        let e = vison.flipped_links[0];
        assert!(!g.links[e].is_double() && g.plaquettes[1].links.contains(&e));
    }

    #[test]
    fn static_eigenstate_only_gains_phase() {
        let g = preset("tri1").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauX).unwrap();
        let ham = lgt_parts::<f64>(&g, &basis).unwrap();
        let params = EffectiveParams::new(1.0).with_uniform_field(&g, 0.3);
        let h = build_lgt_hamiltonian(&g, &basis, &params).unwrap();
        let e = eigh_sparse(&h);
        let psi0 = e.vector(0);
        let mut s = RampSchedule::new(ham.names().to_vec(), params.coefficients(&g)).unwrap();
        s.push_changes("hold", 5.0, &[]).unwrap();
        let out = evolve(&psi0, &ham, &s, 1, EvolveOptions::default(), |_, _| Ok(())).unwrap();
        let ov = inner(&psi0, &out);
        assert!((ov.norm() - 1.0).abs() < 1e-12);
        assert!((ov - cis(-e.values[0] * 5.0)).norm() < 1e-10);
    }

    #[test]
    fn plaquette_toy_phases() {
        // H = -t B_P on the links of one plaquette: each B sector picks up exp(+-i t T).
        let g = preset("tri1").unwrap();
        let basis = BasisSet::new(vec![], vec![0, 1, 2], LinkBasis::TauZ, SectorConstraint::None).unwrap();
        let b = plaquette_operator::<f64>(&g, &basis, 0).unwrap();
        let t = 0.8;
        let ham = LinearHamiltonian::new(vec![("b".into(), b.scale(cr(-1.0)))]);
        let mut s = RampSchedule::new(vec!["b".into()], vec![t]).unwrap();
        s.push_changes("hold", 2.0, &[]).unwrap();
        let psi0: Vec<C<f64>> = vec![cr(0.5f64.sqrt()), cr(0.5f64.sqrt()), cr(0.0), cr(0.0), cr(0.0), cr(0.0), cr(0.0), cr(0.0)];
        // basis states 0 (+++) has B = +1, state 1 (++-) has B = -1.
        let out = evolve(&psi0, &ham, &s, 1, EvolveOptions::default(), |_, _| Ok(())).unwrap();
        assert!((out[0] - psi0[0] * cis(t * 2.0)).norm() < 1e-12);
        assert!((out[1] - psi0[1] * cis(-t * 2.0)).norm() < 1e-12);
    }

    #[test]
    fn magnus_step_is_fourth_order() {
        // Driven two-level system with a linear ramp; error ratio under dt/2 ~ 16.
        let basis = BasisSet::new(vec![], vec![0], LinkBasis::TauZ, SectorConstraint::None).unwrap();
        let x = build_operator::<f64>(&basis, &[Term::new(1.0, vec![crate::hilbert::Op::TauX(0)])]).unwrap();
        let z = build_operator::<f64>(&basis, &[Term::new(1.0, vec![crate::hilbert::Op::TauZ(0)])]).unwrap();
        let ham = LinearHamiltonian::new(vec![("x".into(), x), ("z".into(), z)]);
        let mut s = RampSchedule::new(vec!["x".into(), "z".into()], vec![1.0, -2.0]).unwrap();
        s.push("ramp", 3.0, vec![0.2, 2.0]).unwrap();
        let psi0 = vec![cr(1.0), cr(0.0)];
        let run = |dt: f64| {
            let opts = EvolveOptions { dt, ..Default::default() };
            evolve(&psi0, &ham, &s, 1, opts, |_, _| Ok(())).unwrap()
        };
        let reference = run(0.0005);
        let err = |dt: f64| {
            let v = run(dt);
            v.iter().zip(&reference).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.2), err(0.1));
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn two_plaquette_growing_improves_with_duration() {
        let g = preset("tri2").unwrap();
        let opts = GrowingOptions {
            samples_per_segment: 2,
            track_gap: false,
            ..Default::default()
        };
        let mut last = 0.0;
        for d in [1.0, 5.0, 40.0] {
            let mut plan = GrowingPlan::new(&g, 1.0).unwrap();
            plan.segment_duration = d;
            let r = run_growing(&g, &plan, opts).unwrap();
            let f = r.final_fidelity;
            assert!(f > last, "duration {d}: {f} <= {last}");
            last = f;
            for s in &r.trace {
                assert!(s.sector_leakage < 1e-12);
            }
        }
        assert!(last > 0.99);
    }

    #[test]
    fn gap_at_grown_corner_equals_t() {
        let g = preset("tri2").unwrap();
        let plan = GrowingPlan::new(&g, 1.0).unwrap();
        let pts = gap_scan(&g, &plan, 1, &[1.0], &[0.0]).unwrap();
        assert!((pts[0].gap - 1.0).abs() < 1e-10);
    }

    #[test]
    fn traced_fidelity_of_product_state() {
        let basis = BasisSet::new(vec![(0, 1)], vec![0], LinkBasis::TauZ, SectorConstraint::None).unwrap();
        let s = 0.5f64.sqrt();
        let psi = vec![cr(s), cr(0.0), cr(0.0), cr(s)];
        let target = vec![cr(1.0), cr(0.0)];
        assert!((traced_fidelity(&basis, &psi, &[target]) - 0.5).abs() < 1e-15);
        let _ = SparseOperator::<f64>::identity(1);
    }
}
