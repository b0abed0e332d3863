use proptest::prelude::*;

use z2lgt::braiding::{control_density, measure_one, RamseyConfig};
use z2lgt::dynamics::RampSchedule;
use z2lgt::effective::{effective_basis, exact_eigenstate};
use z2lgt::num::cis;
use z2lgt::reduced::{reduced_gap, ReducedBlock};
use z2lgt::snapshots::{apply_string_flip, classify_strings, sample};
use z2lgt::{build_chain_of_plaquettes, preset, LinkBasis, Orientation};

fn orientation() -> impl Strategy<Value = Orientation> {
    prop_oneof![Just(Orientation::CounterClockwise), Just(Orientation::Clockwise)]
}

fn signs(n: usize) -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn chain_counts(n in 1usize..8, pattern in prop::collection::vec(orientation(), 1..4)) {
        let g = build_chain_of_plaquettes(n, &pattern).unwrap();
        prop_assert_eq!(g.n_plaquettes(), n);
        prop_assert_eq!(g.n_links(), 2 * n + 1);
        prop_assert_eq!(g.n_super_sites(), n + 2);
        // Every link borders one or two plaquettes.
        let dual = g.dual_lattice();
        prop_assert_eq!(dual.links.len(), g.n_links());
    }

    #[test]
    fn string_flip_is_an_involution(s in signs(3), seed in any::<u64>()) {
        let g = preset("tri3").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauX).unwrap();
        let psi = exact_eigenstate::<f64>(&g, &basis, &s).unwrap();
        for snap in sample(&basis, &psi, LinkBasis::TauX, 20, seed).unwrap() {
            let once = apply_string_flip(&snap, &g).unwrap();
            prop_assert!(classify_strings(&once, &g).all_closed);
            prop_assert_eq!(apply_string_flip(&once, &g).unwrap(), snap);
        }
    }

    #[test]
    fn sampling_extends_as_a_prefix(seed in any::<u64>(), n in 1usize..300, extra in 0usize..300) {
        let g = preset("tri2").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauZ).unwrap();
        let psi = exact_eigenstate::<f64>(&g, &basis, &[1, 1]).unwrap();
        let short = sample(&basis, &psi, LinkBasis::TauZ, n, seed).unwrap();
        let long = sample(&basis, &psi, LinkBasis::TauZ, n + extra, seed).unwrap();
        prop_assert_eq!(&long[..n], &short[..]);
    }

    #[test]
    fn ramsey_ignores_the_global_phase(theta in -3.2f64..3.2, phi in -3.2f64..3.2, s in signs(3)) {
        let g = preset("tri3").unwrap();
        let basis = effective_basis(&g, LinkBasis::TauZ).unwrap();
        let psi = exact_eigenstate::<f64>(&g, &basis, &s).unwrap();
        let rotated: Vec<_> = psi.iter().map(|a| a * cis(theta)).collect();
        let cfg = RamseyConfig::around_center(&g, 3).unwrap();
        let a = measure_one(&control_density(&cfg, &g, &basis, &psi).unwrap(), phi);
        let b = measure_one(&control_density(&cfg, &g, &basis, &rotated).unwrap(), phi);
        prop_assert!((a - b).abs() < 1e-12);
        // Opposite phases are complementary outcomes.
        let rho = control_density(&cfg, &g, &basis, &psi).unwrap();
        let c = measure_one(&rho, phi + std::f64::consts::PI);
        prop_assert!((a + c - 1.0).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn schedule_hits_every_boundary(
        initial in prop::collection::vec(-2.0f64..2.0, 2),
        segs in prop::collection::vec((0.1f64..5.0, prop::collection::vec(-2.0f64..2.0, 2)), 1..5),
    ) {
        let mut s = RampSchedule::new(vec!["a".into(), "b".into()], initial.clone()).unwrap();
        for (k, (d, end)) in segs.iter().enumerate() {
            s.push(format!("s{k}"), *d, end.clone()).unwrap();
        }
        let b = s.boundaries();
        prop_assert!((b[b.len() - 1] - s.total_duration()).abs() < 1e-12);
        prop_assert_eq!(s.values_at(0.0), initial);
        for (k, (_, end)) in segs.iter().enumerate() {
            let v = s.values_at(b[k + 1]);
            prop_assert!(v.iter().zip(end).all(|(x, y)| (x - y).abs() < 1e-9));
        }
        // Clamped past the end.
        prop_assert_eq!(s.values_at(s.total_duration() + 1.0), s.end_values().to_vec());
    }

    #[test]
    fn reduced_spectrum_is_sorted(t in 0.1f64..2.0, tt in 0.0f64..1.0, h in 0.0f64..1.0) {
        let m = ReducedBlock::new(t, tt, h).unwrap();
        let e = m.spectrum();
        // Two copies of the block, the second shifted up by t.
        prop_assert_eq!(e.len(), 2 * m.dim());
        prop_assert!(e.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        // The shifted copy of the ground level caps the gap at t.
        let gap = reduced_gap(t, tt, h).unwrap();
        prop_assert!(gap > 0.0 && gap <= t + 1e-12);
    }
}
