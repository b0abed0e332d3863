//! Projective measurements of link spins and matter occupations, the string
//! flip that reveals hidden closed loops, and string classification on the
//! primal and dual lattices.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{check_normalized, hadamard_all, link_blocks, BasisSet, LinkBasis};
use crate::lattice::LatticeGeometry;
use crate::num::{Real, C};

/// Shots drawn from one RNG stream.
const CHUNK: usize = 256;

/// One measurement outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Snapshot {
    pub shot: usize,
    pub basis: LinkBasis,
    /// Measured eigenvalue (`+1`/`-1`) per link id.
    pub link_values: BTreeMap<usize, i8>,
    pub matter_occupations: BTreeMap<usize, u8>,
    pub seed: u64,
}

impl Snapshot {
    pub fn link(&self, id: usize) -> i8 {
        self.link_values[&id]
    }

    pub fn occupation(&self, site: usize) -> u8 {
        self.matter_occupations.get(&site).copied().unwrap_or(0)
    }
}

/// Outcome distribution of `psi` in the product basis with links in `measure`.
struct Distribution {
    outcomes: Vec<(Vec<u8>, usize)>,
    cumulative: Vec<f64>,
}

impl Distribution {
    fn new<T: Real>(basis: &BasisSet, psi: &[C<T>], measure: LinkBasis) -> Self {
        let mut outcomes = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (occ, mut block) in link_blocks(basis, psi) {
            if basis.link_basis != measure {
                hadamard_all(&mut block);
            }
            for (mask, amp) in block.iter().enumerate() {
                let p = amp.norm_sqr().to_f64_lossy();
                if p > 0.0 {
                    acc += p;
                    outcomes.push((occ.clone(), mask));
                    cumulative.push(acc);
                }
            }
        }
        Self { outcomes, cumulative }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> &(Vec<u8>, usize) {
        let total = *self.cumulative.last().expect("normalized state has support");
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.outcomes.len() - 1);
        &self.outcomes[k]
    }
}

/// Draws `n_shots` independent snapshots of `psi` with links measured in
/// `measure`. Shots are split into chunks of 256, each drawn from its own
/// ChaCha8 stream of `seed`, so the result does not depend on the thread count.
pub fn sample<T: Real>(
    basis: &BasisSet,
    psi: &[C<T>],
    measure: LinkBasis,
    n_shots: usize,
    seed: u64,
) -> Result<Vec<Snapshot>> {
    if psi.len() != basis.dim() {
        return Err(Error::BasisMismatch(format!(
            "state length {} does not match basis dimension {}",
            psi.len(),
            basis.dim()
        )));
    }
    check_normalized(psi)?;
    let dist = Distribution::new(basis, psi, measure);
    let n_chunks = n_shots.div_ceil(CHUNK);
    let chunks: Vec<Vec<Snapshot>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let lo = chunk * CHUNK;
            (lo..n_shots.min(lo + CHUNK))
                .map(|shot| {
                    let (occ, mask) = dist.draw(&mut rng);
                    Snapshot {
                        shot,
                        basis: measure,
                        link_values: basis
                            .link_modes
                            .iter()
                            .enumerate()
                            .map(|(k, &l)| (l, if mask >> k & 1 == 1 { -1 } else { 1 }))
                            .collect(),
                        matter_occupations: basis.matter_modes.iter().zip(occ).map(|(&(s, _), &n)| (s, n)).collect(),
                        seed,
                    }
                })
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Undoes the gauge transformation on a `tau^x` snapshot: a link flips sign
/// when the bosons on the matter sites attached to it add up to an odd number.
pub fn apply_string_flip(snap: &Snapshot, geom: &LatticeGeometry) -> Result<Snapshot> {
    if snap.basis != LinkBasis::TauX {
        return Err(Error::param("basis", "the string flip acts on tau^x snapshots"));
    }
    let mut out = snap.clone();
    for (&l, x) in out.link_values.iter_mut() {
        if l >= geom.n_links() {
            return Err(Error::UnknownId {
                kind: "link",
                id: l,
                available: geom.n_links(),
            });
        }
        let n: u32 = geom.attached_sites(l).iter().flatten().map(|&s| u32::from(snap.occupation(s))).sum();
        if n % 2 == 1 {
            *x = -*x;
        }
    }
    Ok(out)
}

/// Strings are links with value `-1`; their ends are counted on super sites
/// (`tau^x` snapshots) or on dual sites (`tau^z` snapshots).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StringReport {
    pub basis: LinkBasis,
    /// Number of strings ending at each super site or dual site, mod 2.
    pub parities: Vec<u8>,
    pub open_ends: Vec<usize>,
    pub all_closed: bool,
}

/// Classifies the strings of a snapshot. `tau^x` snapshots should already be
/// flipped with [`apply_string_flip`]; an odd super site then carries an
/// electric charge. In `tau^z` snapshots an odd dual site is a plaquette with
/// `B_P = -1`; strings may leave through the open boundary without counting.
pub fn classify_strings(snap: &Snapshot, geom: &LatticeGeometry) -> StringReport {
    let odd = |links: &[usize]| -> u8 {
        (links
            .iter()
            .filter(|l| snap.link_values.get(l).copied().unwrap_or(1) < 0)
            .count()
            % 2) as u8
    };
    let parities: Vec<u8> = match snap.basis {
        LinkBasis::TauX => geom.super_sites.iter().map(|s| odd(&s.incident_links)).collect(),
        LinkBasis::TauZ => geom.plaquettes.iter().map(|p| odd(&p.links)).collect(),
    };
    let open_ends: Vec<usize> = parities.iter().enumerate().filter(|(_, &p)| p == 1).map(|(k, _)| k).collect();
    StringReport {
        basis: snap.basis,
        all_closed: open_ends.is_empty(),
        parities,
        open_ends,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::{effective_basis, exact_eigenstate};
    use crate::hilbert::unit_vector;
    use crate::lattice::preset;
    use crate::num::cr;

    fn toric(name: &str, signs: &[i8], measure: LinkBasis) -> (LatticeGeometry, BasisSet, Vec<C<f64>>) {
        let g = preset(name).unwrap();
        let b = effective_basis(&g, measure).unwrap();
        let psi = exact_eigenstate(&g, &b, signs).unwrap();
        (g, b, psi)
    }

    #[test]
    fn basis_state_gives_identical_shots() {
        let g = preset("tri1").unwrap();
        let b = effective_basis(&g, LinkBasis::TauX).unwrap();
        let psi = unit_vector::<f64>(b.dim(), 3);
        let shots = sample(&b, &psi, LinkBasis::TauX, 50, 7).unwrap();
        assert!(shots.windows(2).all(|w| w[0].link_values == w[1].link_values
            && w[0].matter_occupations == w[1].matter_occupations));
    }

    #[test]
    fn equal_superposition_frequencies() {
        let g = preset("tri1").unwrap();
        let b = effective_basis(&g, LinkBasis::TauX).unwrap();
        let mut psi = vec![cr(0.0); b.dim()];
        let s = 0.5f64.sqrt();
        psi[0] = cr(s);
        psi[5] = cr(s);
        let n = 10_000;
        let shots = sample(&b, &psi, LinkBasis::TauX, n, 11).unwrap();
        let first = b.state(0);
        let hits = shots
            .iter()
            .filter(|sh| {
                b.matter_modes.iter().zip(&first.occupations).all(|(&(site, _), &o)| sh.occupation(site) == o)
                    && b.link_modes.iter().enumerate().all(|(k, &l)| sh.link(l) == first.link_value(k))
            })
            .count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((hits - n as f64 / 2.0).abs() < 3.0 * sigma, "{hits}");
    }

    #[test]
    fn sampling_is_reproducible_and_seed_dependent() {
        let (_, b, psi) = toric("tri3", &[1, 1, 1], LinkBasis::TauX);
        let a = sample(&b, &psi, LinkBasis::TauX, 600, 42).unwrap();
        assert_eq!(a, sample(&b, &psi, LinkBasis::TauX, 600, 42).unwrap());
        assert_ne!(a, sample(&b, &psi, LinkBasis::TauX, 600, 43).unwrap());
        // A longer run extends a shorter one.
        assert_eq!(a[..300], sample(&b, &psi, LinkBasis::TauX, 300, 42).unwrap()[..]);
    }

    #[test]
    fn flip_follows_attached_parity() {
        let g = preset("tri2").unwrap();
        let shared = g.links.iter().position(|l| l.plaquettes.len() == 2).unwrap();
        let [a, b] = g.attached_sites(shared);
        let snap = |occ: &[usize]| Snapshot {
            shot: 0,
            basis: LinkBasis::TauX,
            link_values: (0..g.n_links()).map(|l| (l, 1)).collect(),
            matter_occupations: occ.iter().map(|&s| (s, 1)).collect(),
            seed: 0,
        };
        assert_eq!(apply_string_flip(&snap(&[]), &g).unwrap().link(shared), 1);
        assert_eq!(apply_string_flip(&snap(&[a[0]]), &g).unwrap().link(shared), -1);
        assert_eq!(apply_string_flip(&snap(&[a[0], b[1]]), &g).unwrap().link(shared), 1);
    }

    #[test]
    fn flip_rejects_tau_z_snapshots() {
        let (g, b, psi) = toric("tri1", &[1], LinkBasis::TauZ);
        let s = &sample(&b, &psi, LinkBasis::TauZ, 1, 0).unwrap()[0];
        assert!(apply_string_flip(s, &g).is_err());
    }

    #[test]
    fn toric_tau_x_shots_close_after_flip() {
        let (g, b, psi) = toric("tri3", &[1, 1, 1], LinkBasis::TauX);
        let shots = sample(&b, &psi, LinkBasis::TauX, 1000, 5).unwrap();
        assert!(shots.iter().all(|s| classify_strings(&apply_string_flip(s, &g).unwrap(), &g).all_closed));
        // Without the flip the matter-attached strings stay open.
        assert!(shots.iter().any(|s| !classify_strings(s, &g).all_closed));
    }

    #[test]
    fn toric_tau_z_shots_have_no_fluxes() {
        let (g, b, psi) = toric("tri3", &[1, 1, 1], LinkBasis::TauX);
        let shots = sample(&b, &psi, LinkBasis::TauZ, 500, 9).unwrap();
        assert!(shots.iter().all(|s| classify_strings(s, &g).all_closed));
    }

    #[test]
    fn vison_shots_mark_its_plaquette() {
        let (g, b, psi) = toric("tri3", &[1, -1, 1], LinkBasis::TauZ);
        for s in sample(&b, &psi, LinkBasis::TauZ, 500, 3).unwrap() {
            assert_eq!(classify_strings(&s, &g).open_ends, vec![1]);
        }
    }

    #[test]
    fn trivial_snapshot_has_no_strings() {
        let g = preset("tri3").unwrap();
        let s = Snapshot {
            shot: 0,
            basis: LinkBasis::TauX,
            link_values: (0..g.n_links()).map(|l| (l, 1)).collect(),
            matter_occupations: BTreeMap::new(),
            seed: 0,
        };
        let r = classify_strings(&s, &g);
        assert!(r.all_closed && r.parities.iter().all(|&p| p == 0));
    }

    #[test]
    fn rejects_unnormalized_state() {
        let g = preset("tri1").unwrap();
        let b = effective_basis(&g, LinkBasis::TauX).unwrap();
        let psi = vec![cr(1.0f64); b.dim()];
        assert!(sample(&b, &psi, LinkBasis::TauX, 1, 0).is_err());
    }
}
