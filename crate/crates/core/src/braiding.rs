//! Minimal braiding experiment: an electric charge is moved around a
//! plaquette along one of two paths selected by a control qubit, and the
//! relative phase is read out with a Ramsey sequence on the control.
//!
//! A pulse of area `A` on link `l` applies `exp(-i A/2 tau^z_l)`, so an
//! area of `pi` flips the link (`-i tau^z`).

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{run_growing, GrowingOptions, GrowingPlan};
use crate::effective::{build_lgt_hamiltonian, effective_basis, exact_eigenstate, EffectiveParams};
use crate::error::{Error, Result};
use crate::hilbert::{build_operator, check_normalized, BasisSet, LinkBasis, Op, Term};
use crate::lattice::LatticeGeometry;
use crate::linalg::{expm_krylov, KrylovOptions};
use crate::num::{cis, cr, inner, Real, C};
use crate::sparse::SparseOperator;

/// Largest tolerated deviation of a Ramsey pulse area from `pi`.
pub const PULSE_AREA_TOLERANCE: f64 = 1e-9;

/// Settings of the Ramsey sequence.
#[derive(Debug, Clone)]
pub struct RamseyConfig<T: Real> {
    /// Links pulsed (in order) when the control is `|0>`.
    pub path0: [usize; 2],
    /// Links pulsed when the control is `|1>`.
    pub path1: [usize; 2],
    /// Areas of `lambda_1 .. lambda_4` (`path0[0], path0[1], path1[0], path1[1]`).
    pub pulse_areas: [T; 4],
    /// Length of each rectangular pulse; only matters with free evolution.
    pub pulse_duration: T,
    pub phis: Vec<T>,
    /// Link flipped before the sequence to create the charge pair.
    pub e_pair_link: Option<usize>,
    /// Hamiltonian acting alongside the pulses; `None` evolves under the
    /// pulses alone.
    pub free_evolution: Option<EffectiveParams<T>>,
}

fn link_between(geom: &LatticeGeometry, a: usize, b: usize) -> Result<usize> {
    geom.links
        .iter()
        .position(|l| l.ends == [a, b] || l.ends == [b, a])
        .ok_or_else(|| Error::Domain(format!("no link between vertices {a} and {b}")))
}

/// `(start, end)` vertices of a two-link path.
fn path_ends(geom: &LatticeGeometry, path: [usize; 2]) -> Result<(usize, usize)> {
    for &l in &path {
        if l >= geom.n_links() {
            return Err(Error::UnknownId {
                kind: "link",
                id: l,
                available: geom.n_links(),
            });
        }
    }
    let [a, b] = path.map(|l| geom.links[l].ends);
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            if x == y && a[1 - i] != b[1 - j] {
                return Ok((a[1 - i], b[1 - j]));
            }
        }
    }
    Err(Error::param("path", format!("links {} and {} do not form a path", path[0], path[1])))
}

impl<T: Real> RamseyConfig<T> {
    /// Loop around the middle plaquette of the three-plaquette strip: the
    /// charge created on the link between vertices 0 and 1 moves from vertex
    /// 1 to vertex 4 through vertex 3 (control `|0>`) or vertex 2 (`|1>`).
    pub fn around_center(geom: &LatticeGeometry, n_phi: usize) -> Result<Self> {
        let cfg = Self {
            path0: [link_between(geom, 1, 3)?, link_between(geom, 3, 4)?],
            path1: [link_between(geom, 1, 2)?, link_between(geom, 2, 4)?],
            pulse_areas: [T::of(PI); 4],
            pulse_duration: T::one(),
            phis: crate::reduced::linspace(T::zero(), T::of(2.0 * PI), n_phi),
            e_pair_link: Some(link_between(geom, 0, 1)?),
            free_evolution: None,
        };
        cfg.validate(geom)?;
        Ok(cfg)
    }

    /// Both paths must join the same two vertices; the charge pair, when
    /// created, must have one end at their start.
    pub fn validate(&self, geom: &LatticeGeometry) -> Result<()> {
        let e0 = path_ends(geom, self.path0)?;
        let e1 = path_ends(geom, self.path1)?;
        let (start, end) = if e0 == e1 {
            e0
        } else if e0 == (e1.1, e1.0) {
            return Err(Error::param("path1", "both paths must run in the same direction"));
        } else {
            return Err(Error::param("path1", "paths do not share their end points"));
        };
        if start == end {
            return Err(Error::param("path0", "path is closed"));
        }
        if let Some(l) = self.e_pair_link {
            let ends = geom
                .links
                .get(l)
                .ok_or(Error::UnknownId {
                    kind: "link",
                    id: l,
                    available: geom.n_links(),
                })?
                .ends;
            if !ends.contains(&start) {
                return Err(Error::param("e_pair_link", "charge pair does not touch the start of the paths"));
            }
        }
        if !(self.pulse_duration > T::zero()) {
            return Err(Error::param("pulse_duration", "must be positive"));
        }
        Ok(())
    }

    fn check_areas(&self) -> Result<()> {
        for a in self.pulse_areas {
            let a = a.to_f64_lossy();
            if !((a - PI).abs() <= PULSE_AREA_TOLERANCE) {
                return Err(Error::PulseArea {
                    area: a,
                    tolerance: PULSE_AREA_TOLERANCE,
                });
            }
        }
        Ok(())
    }
}

fn tau_z<T: Real>(basis: &BasisSet, link: usize) -> Result<SparseOperator<T>> {
    build_operator(basis, &[Term::new(T::one(), vec![Op::TauZ(link)])])
}

/// Applies `tau^z` on `link`: flips the vertex charges at both of its ends.
pub fn create_e_pair<T: Real>(basis: &BasisSet, psi: &[C<T>], link: usize) -> Result<Vec<C<T>>> {
    basis.link_position(link)?;
    Ok(tau_z::<T>(basis, link)?.matvec(psi))
}

/// Evolution of one control branch through its two pulses.
struct Branch<'a, T: Real> {
    basis: &'a BasisSet,
    free: Option<&'a SparseOperator<T>>,
    duration: T,
}

impl<T: Real> Branch<'_, T> {
    fn pulse(&self, psi: &[C<T>], link: usize, area: T) -> Result<Vec<C<T>>> {
        let z = tau_z::<T>(self.basis, link)?;
        match self.free {
            None => {
                let half = area / T::of(2.0);
                let zpsi = z.matvec(psi);
                Ok(psi
                    .iter()
                    .zip(&zpsi)
                    .map(|(a, b)| a.scale(half.cos()) - C::new(T::zero(), half.sin()) * b)
                    .collect())
            }
            Some(h) => {
                let lambda = area / self.duration;
                let gen = h.add_scaled(&z, cr(lambda / T::of(2.0)));
                expm_krylov(&gen, psi, self.duration, KrylovOptions::default())
            }
        }
    }

    fn run(&self, psi: &[C<T>], path: [usize; 2], areas: [T; 2]) -> Result<Vec<C<T>>> {
        let mid = self.pulse(psi, path[0], areas[0])?;
        self.pulse(&mid, path[1], areas[1])
    }
}

/// Reduced density matrix of the control after the pulses, bulk traced out.
/// The control starts in `|0>` and is rotated by `R_y(pi/2)` first.
pub fn control_density<T: Real>(
    cfg: &RamseyConfig<T>,
    geom: &LatticeGeometry,
    basis: &BasisSet,
    psi: &[C<T>],
) -> Result<Matrix2<C<T>>> {
    cfg.validate(geom)?;
    check_normalized(psi)?;
    let start = match cfg.e_pair_link {
        Some(l) => create_e_pair(basis, psi, l)?,
        None => psi.to_vec(),
    };
    let free = cfg
        .free_evolution
        .as_ref()
        .map(|p| build_lgt_hamiltonian(geom, basis, p))
        .transpose()?;
    let branch = Branch {
        basis,
        free: free.as_ref(),
        duration: cfg.pulse_duration,
    };
    let [a1, a2, a3, a4] = cfg.pulse_areas;
    // Both branches carry amplitude 1/sqrt 2 after the opening rotation.
    let half = T::of(0.5);
    let p0 = branch.run(&start, cfg.path0, [a1, a2])?;
    let p1 = branch.run(&start, cfg.path1, [a3, a4])?;
    let c01 = inner(&p1, &p0).scale(half);
    Ok(Matrix2::new(
        inner(&p0, &p0).scale(half),
        c01,
        c01.conj(),
        inner(&p1, &p1).scale(half),
    ))
}

fn r_y<T: Real>(theta: T) -> Matrix2<C<T>> {
    let (s, c) = (theta / T::of(2.0)).sin_cos();
    Matrix2::new(cr(c), cr(-s), cr(s), cr(c))
}

fn r_z<T: Real>(phi: T) -> Matrix2<C<T>> {
    let h = phi / T::of(2.0);
    Matrix2::new(cis(-h), cr(T::zero()), cr(T::zero()), cis(h))
}

/// `P(|1>)` after `R_z(phi)` and the closing `R_y(pi/2)`.
pub fn measure_one<T: Real>(rho: &Matrix2<C<T>>, phi: T) -> T {
    let u = r_y(T::of(PI / 2.0)) * r_z(phi);
    (u * rho * u.adjoint())[(1, 1)].re
}

/// Fringe of one Ramsey run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RamseyFringe {
    pub phi: Vec<f64>,
    pub p1: Vec<f64>,
    /// `<0|rho|1>` of the control before the readout rotations.
    pub coherence: [f64; 2],
}

impl RamseyFringe {
    /// Least-squares fit `p1 = a + b cos(phi - phi0)`; returns `(a, b, phi0)`
    /// with `b >= 0` and `phi0` in `(-pi, pi]`.
    pub fn fit(&self) -> (f64, f64, f64) {
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = Vector3::<f64>::zeros();
        for (&x, &y) in self.phi.iter().zip(&self.p1) {
            let row = Vector3::new(1.0, x.cos(), x.sin());
            ata += row * row.transpose();
            atb += row * y;
        }
        let sol = ata.lu().solve(&atb).unwrap_or_else(Vector3::zeros);
        (sol[0], sol[1].hypot(sol[2]), sol[2].atan2(sol[1]))
    }

    /// Fringe visibility `b / a`.
    pub fn contrast(&self) -> f64 {
        let (a, b, _) = self.fit();
        if a > 0.0 {
            b / a
        } else {
            0.0
        }
    }
}

/// Runs the Ramsey sequence at every `phi` of the configuration. All four
/// pulse areas must equal `pi`.
pub fn run_ramsey<T: Real>(
    cfg: &RamseyConfig<T>,
    geom: &LatticeGeometry,
    basis: &BasisSet,
    psi: &[C<T>],
) -> Result<RamseyFringe> {
    cfg.check_areas()?;
    let rho = control_density(cfg, geom, basis, psi)?;
    Ok(RamseyFringe {
        phi: cfg.phis.iter().map(|p| p.to_f64_lossy()).collect(),
        p1: cfg.phis.par_iter().map(|&p| measure_one(&rho, p).to_f64_lossy()).collect(),
        coherence: [rho[(0, 1)].re.to_f64_lossy(), rho[(0, 1)].im.to_f64_lossy()],
    })
}

/// One point of a pulse-area calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationPoint {
    /// Area of every pulse.
    pub area: f64,
    /// `2 <0|rho|1>` (real part), 1 for perfect coherence.
    pub coherence: f64,
    /// `P(|1>)` at `phi = 0`.
    pub p1: f64,
}

/// Repeats the sequence with every pulse area set to each value of `areas`
/// and reads out at `phi = 0`.
pub fn pi_time_calibration<T: Real>(
    cfg: &RamseyConfig<T>,
    geom: &LatticeGeometry,
    basis: &BasisSet,
    psi: &[C<T>],
    areas: &[T],
) -> Result<Vec<CalibrationPoint>> {
    areas
        .par_iter()
        .map(|&a| {
            let mut c = cfg.clone();
            c.pulse_areas = [a; 4];
            let rho = control_density(&c, geom, basis, psi)?;
            Ok(CalibrationPoint {
                area: a.to_f64_lossy(),
                coherence: (rho[(0, 1)].re * T::of(2.0)).to_f64_lossy(),
                p1: measure_one(&rho, T::zero()).to_f64_lossy(),
            })
        })
        .collect()
}

/// Position of the first interior maximum of `p1` (refined by a parabola
/// through the neighbouring grid points), i.e. the oscillation period of a
/// trace that starts at a maximum.
pub fn calibration_period(points: &[CalibrationPoint]) -> Option<f64> {
    let k = (1..points.len().saturating_sub(1)).find(|&k| {
        let (a, b, c) = (points[k - 1].p1, points[k].p1, points[k + 1].p1);
        b > a && b >= c
    })?;
    let (x0, x1, x2) = (points[k - 1].area, points[k].area, points[k + 1].area);
    let (y0, y1, y2) = (points[k - 1].p1, points[k].p1, points[k + 1].p1);
    let denom = y0 - 2.0 * y1 + y2;
    if denom.abs() < 1e-300 || ((x1 - x0) - (x2 - x1)).abs() > 1e-9 * x2.abs().max(1.0) {
        return Some(x1);
    }
    Some(x1 + 0.5 * (x1 - x0) * (y0 - y2) / denom)
}

/// Where the system state of a braiding run comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StateSource {
    ExactEigenstate,
    GrownState,
}

/// Input state for the braiding loop, with or without a vison on the middle
/// plaquette, in the one-boson `tau^x` basis. Returns the basis, the state
/// and its fidelity with the target (1 for exact eigenstates).
pub fn braiding_input<T: Real>(
    geom: &LatticeGeometry,
    source: StateSource,
    vison: bool,
    t: T,
) -> Result<(BasisSet, Vec<C<T>>, f64)> {
    if geom.n_plaquettes() != 3 {
        return Err(Error::param("geometry", "the braiding loop needs the three-plaquette strip"));
    }
    match source {
        StateSource::ExactEigenstate => {
            let basis = effective_basis(geom, LinkBasis::TauX)?;
            let signs: Vec<i8> = (0..3).map(|p| if vison && p == 1 { -1 } else { 1 }).collect();
            let psi = exact_eigenstate(geom, &basis, &signs)?;
            Ok((basis, psi, 1.0))
        }
        StateSource::GrownState => {
            let mut plan = GrowingPlan::new(geom, t)?;
            if vison {
                plan = plan.with_vison(geom, 1)?;
            }
            let opts = GrowingOptions {
                track_gap: false,
                ..GrowingOptions::default()
            };
            let r = run_growing(geom, &plan, opts)?;
            Ok((r.basis, r.state, r.final_fidelity.to_f64_lossy()))
        }
    }
}
