//! Property checks over randomly generated domains, points, and
//! controller parameterizations.

use proptest::prelude::*;

use gridalloc_core::rng::derive_seed;
use gridalloc_core::{
    delta_matrix, expected_improvement, sample_domain, ControllerParam, ControllerStructure,
    DeltaBlock, DeltaStructure, GridPoint,
};

/// Per-block generator: (lower edge, width, repetition, relative position).
fn block_specs() -> impl Strategy<Value = Vec<(f64, f64, usize, f64)>> {
    prop::collection::vec(
        (-10.0f64..10.0, 0.0f64..5.0, 1usize..4, 0.0f64..=1.0),
        1..5,
    )
}

fn build_domain(specs: &[(f64, f64, usize, f64)]) -> (DeltaStructure, GridPoint) {
    let blocks = specs
        .iter()
        .enumerate()
        .map(|(i, &(lo, width, rep, _))| DeltaBlock {
            name: format!("b{i}"),
            rep,
            lo,
            hi: lo + width,
        })
        .collect();
    let domain = DeltaStructure::new(blocks).unwrap();
    let coords = specs
        .iter()
        .map(|&(lo, width, _, frac)| lo + frac * width)
        .collect();
    (domain, GridPoint::new(coords).unwrap())
}

proptest! {
    #[test]
    fn delta_matrix_gain_equals_the_largest_coordinate(specs in block_specs()) {
        let (domain, point) = build_domain(&specs);
        let m = delta_matrix(&domain, &point).unwrap();
        let top = m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        let expect = point.coords().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!((top - expect).abs() <= 1e-12 * expect.max(1.0));
        // Diagonal by construction.
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i != j {
                    prop_assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn rescaled_coordinates_stay_in_the_unit_box(specs in block_specs()) {
        let (domain, point) = build_domain(&specs);
        for q in domain.rescale_to_unit(&point) {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&q));
        }
        prop_assert!(domain.contains(&point));
    }

    #[test]
    fn sampled_points_land_inside_the_box(specs in block_specs(), seed in any::<u64>()) {
        let (domain, _) = build_domain(&specs);
        let pts = sample_domain(&domain, 8, seed);
        prop_assert_eq!(pts.len(), 8);
        for p in &pts {
            prop_assert!(domain.contains(p));
        }
        prop_assert_eq!(&pts, &sample_domain(&domain, 8, seed));
    }

    #[test]
    fn improvement_scores_are_nonnegative(
        mean in -1e6f64..1e6,
        sd in 0.0f64..1e3,
        best in -1e6f64..1e6,
        margin in 0.0f64..1e3,
    ) {
        let ei = expected_improvement(mean, sd, best, margin);
        prop_assert!(ei.is_finite());
        prop_assert!(ei >= 0.0);
        prop_assert_eq!(expected_improvement(mean, 0.0, best, margin), 0.0);
    }

    #[test]
    fn controller_packing_round_trips(
        n_xk in 1usize..4,
        n_y in 1usize..3,
        n_u in 1usize..3,
        direct in any::<bool>(),
        fill in any::<u64>(),
    ) {
        let structure = ControllerStructure::new(n_xk, n_y, n_u, direct).unwrap();
        let mut state = fill;
        let theta: Vec<f64> = (0..structure.n_params())
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
            })
            .collect();
        let param = structure.unpack(&theta).unwrap();
        prop_assert_eq!(&structure.pack(&param).unwrap(), &theta);
        if !direct {
            prop_assert_eq!(param.d_k.abs().max(), 0.0);
        }
        let round = ControllerParam::from_json(&param.to_json()).unwrap();
        prop_assert_eq!(round, param);
    }

    #[test]
    fn seed_streams_never_collide(master in any::<u64>(), s1 in any::<u64>(), s2 in any::<u64>()) {
        if s1 != s2 {
            prop_assert_ne!(derive_seed(master, s1), derive_seed(master, s2));
        }
        prop_assert_eq!(derive_seed(master, s1), derive_seed(master, s1));
    }
}
