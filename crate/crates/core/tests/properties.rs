//! Property tests for the structural invariants: serialization fidelity,
//! restriction monotonicity, sampling containment, and group identities.

use proptest::prelude::*;

use quasix::geom::{IncidencePoint, SpacePoint, SquareMatrix};
use quasix::grid::{rle_decode, rle_encode, GridGeometry, GridSet};
use quasix::lorentz::dyadic_levels;
use quasix::symmetry::{apply_pair, compose, SymmetryElement, SymmetryWord};

fn arb_gridset() -> impl Strategy<Value = GridSet> {
    (2usize..=3, 2usize..=6, any::<u64>()).prop_map(|(dim, cells, seed)| {
        let geom =
            GridGeometry::over_box(&vec![-1.0; dim], &vec![1.0; dim], &vec![cells; dim]).unwrap();
        let n = geom.len();
        let occupancy: Vec<bool> =
            (0..n).map(|i| quasix::rng::draw_u64(seed, 7, i as u64) % 3 == 0).collect();
        GridSet::from_occupancy(geom, occupancy).unwrap()
    })
}

proptest! {
    #[test]
    fn rle_roundtrip_bit_for_bit(bits in proptest::collection::vec(any::<bool>(), 0..256)) {
        let runs = rle_encode(&bits);
        prop_assert_eq!(rle_decode(&runs, bits.len()).unwrap(), bits);
    }

    #[test]
    fn json_roundtrip_reproduces_occupancy(set in arb_gridset()) {
        let back = GridSet::from_json(&set.to_json()).unwrap();
        prop_assert_eq!(back.occupancy(), set.occupancy());
        prop_assert_eq!(back.geometry(), set.geometry());
    }

    #[test]
    fn restriction_never_grows(set in arb_gridset(), threshold in -1.0f64..1.0) {
        let restricted = set.restrict(|c| c[0] < threshold);
        prop_assert!(restricted.measure() <= set.measure() + 1e-15);
        // and restricting to everything is the identity
        prop_assert_eq!(set.restrict(|_| true).measure(), set.measure());
    }

    #[test]
    fn sampled_points_are_contained(set in arb_gridset(), seed in any::<u64>()) {
        if set.occupied_count() > 0 {
            for p in set.sample_uniform(seed, 64).unwrap() {
                prop_assert!(set.contains_point(&p));
            }
        }
    }

    #[test]
    fn dyadic_levels_partition_the_support(set in arb_gridset(), value in 0.01f64..100.0) {
        let f = quasix::grid::GridFunction::indicator(&set, value);
        let total: f64 = dyadic_levels(&f).iter().map(|(_, m)| m).sum();
        prop_assert!((total - set.measure()).abs() <= 1e-12 * set.measure().max(1.0));
    }

    #[test]
    fn word_inverse_is_identity(
        dx in -2.0f64..2.0,
        lambda in 0.25f64..4.0,
        tx in -2.0f64..2.0,
        td in -2.0f64..2.0,
        x0 in -2.0f64..2.0,
        xd in -2.0f64..2.0,
        y0 in -2.0f64..2.0,
    ) {
        let word = SymmetryWord(vec![
            SymmetryElement::Shear { delta: vec![dx] },
            SymmetryElement::ParabolicDilation { lambda },
            SymmetryElement::Translation { v: vec![tx, td] },
        ]);
        let round = compose(&word.inverse().unwrap(), &word);
        let z = IncidencePoint::on_manifold(SpacePoint::new(vec![x0, xd]), &[y0]);
        let w = apply_pair(&round, &z).unwrap();
        for (a, b) in w.first.coords.iter().zip(&z.first.coords) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        for (a, b) in w.second.coords.iter().zip(&z.second.coords) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn generators_preserve_the_manifold(
        x0 in -2.0f64..2.0,
        xd in -2.0f64..2.0,
        y0 in -2.0f64..2.0,
        dx in -2.0f64..2.0,
        lambda in 0.25f64..4.0,
        a in 0.25f64..4.0,
    ) {
        let z = IncidencePoint::on_manifold(SpacePoint::new(vec![x0, xd]), &[y0]);
        for g in [
            SymmetryElement::Shear { delta: vec![dx] },
            SymmetryElement::ParabolicDilation { lambda },
            SymmetryElement::ShearedLinear { matrix: SquareMatrix::new(1, vec![a]).unwrap() },
        ] {
            let w = apply_pair(&SymmetryWord::single(g), &z).unwrap();
            prop_assert!(w.residual() <= 1e-9 * w.residual_scale());
        }
    }
}
