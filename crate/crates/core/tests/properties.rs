use proptest::prelude::*;

use capdim::boxcount::mesh_count;
use capdim::capacity::{energy, solve_equilibrium, DiscreteMeasure, SolverOptions};
use capdim::kernels::{assemble_matrix, phi_of_distance, KernelSpec};
use capdim::pointset::PointSet;
use capdim::profiles::fit_scaling;

fn point_set(max_points: usize) -> impl Strategy<Value = PointSet> {
    (1usize..=3).prop_flat_map(move |n| {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), 1..=max_points)
            .prop_map(|pts| PointSet::from_points(&pts).unwrap())
    })
}

fn capacity(e: &PointSet, s: f64, r: f64) -> f64 {
    solve_equilibrium(e, &KernelSpec::phi(s, r).unwrap(), &SolverOptions::default())
        .unwrap()
        .capacity
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn phi_is_monotone(d in 0.0f64..10.0, r in 0.01f64..5.0, s in 0.1f64..4.0, ds in 0.0f64..2.0, dr in 0.0f64..2.0) {
        let v = phi_of_distance(s, r, d);
        prop_assert!(v > 0.0 && v <= 1.0);
        // bounded below by the indicator of the r-ball
        if d <= r {
            prop_assert_eq!(v, 1.0);
        }
        prop_assert!(phi_of_distance(s + ds, r, d) <= v);
        prop_assert!(phi_of_distance(s, r + dr, d) >= v);
    }

    #[test]
    fn capacity_between_one_and_count(e in point_set(25), s in 0.2f64..3.0, r in 0.001f64..1.0) {
        let res = solve_equilibrium(&e, &KernelSpec::phi(s, r).unwrap(), &SolverOptions::default()).unwrap();
        prop_assert!(res.converged);
        prop_assert!(res.capacity >= 1.0 - 1e-12);
        prop_assert!(res.capacity <= e.len() as f64 + 1e-9);
        prop_assert!((res.capacity * res.min_energy - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn equilibrium_beats_uniform(e in point_set(25), s in 0.2f64..3.0, r in 0.001f64..1.0) {
        let spec = KernelSpec::phi(s, r).unwrap();
        let res = solve_equilibrium(&e, &spec, &SolverOptions::default()).unwrap();
        let k = assemble_matrix(&e, &spec, 1000).unwrap();
        let uniform = energy(&DiscreteMeasure::uniform(e.len()).unwrap(), &k).unwrap();
        prop_assert!(res.min_energy <= uniform + 1e-9);
    }

    #[test]
    fn capacity_grows_with_s_and_shrinks_with_r(e in point_set(20), s in 0.2f64..2.0, r in 0.005f64..0.5) {
        let base = capacity(&e, s, r);
        prop_assert!(capacity(&e, s * 1.5, r) >= base - 1e-7);
        prop_assert!(capacity(&e, s, r * 1.5) <= base + 1e-7);
    }

    #[test]
    fn capacity_of_subset_is_smaller(e in point_set(20), keep in prop::collection::vec(any::<bool>(), 20), s in 0.2f64..3.0, r in 0.005f64..0.5) {
        let idx: Vec<usize> = (0..e.len()).filter(|&i| keep[i]).collect();
        prop_assume!(!idx.is_empty());
        let sub = e.select(&idx).unwrap();
        // phi matrices can be indefinite, so a single descent may stop at a
        // local minimum of the energy; restarts make the comparison global
        let opts = SolverOptions { restarts: 10, ..SolverOptions::default() };
        let spec = KernelSpec::phi(s, r).unwrap();
        let whole = solve_equilibrium(&e, &spec, &opts).unwrap().capacity;
        prop_assert!(capacity(&sub, s, r) <= whole + 1e-7);
    }

    #[test]
    fn capacity_ignores_order_and_position(e in point_set(20), seed in any::<u64>(), shift in -5.0f64..5.0, s in 0.2f64..3.0, r in 0.005f64..0.5) {
        let mut order: Vec<usize> = (0..e.len()).collect();
        let mut state = seed;
        for i in (1..order.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (state >> 33) as usize % (i + 1));
        }
        let permuted = e.select(&order).unwrap();
        let moved = e.translate(&vec![shift; e.ambient_dim()]).unwrap();
        let c = capacity(&e, s, r);
        prop_assert!((capacity(&permuted, s, r) - c).abs() <= 1e-7 * c);
        prop_assert!((capacity(&moved, s, r) - c).abs() <= 1e-7 * c);
    }

    #[test]
    fn mesh_count_bounded(e in point_set(40), r in 0.001f64..3.0) {
        let c = mesh_count(&e, r).unwrap().count;
        prop_assert!(c >= 1 && c <= e.len());
    }

    #[test]
    fn fit_is_affine_invariant(
        ys in prop::collection::vec(0.0f64..5.0, 6..12),
        scale in 0.01f64..100.0,
        rscale in 0.01f64..100.0,
    ) {
        let curve: Vec<(f64, f64)> = ys.iter().enumerate()
            .map(|(k, y)| (0.5f64.powi(k as i32), y.exp()))
            .collect();
        let moved: Vec<(f64, f64)> = curve.iter().map(|(r, v)| (r * rscale, v * scale)).collect();
        let a = fit_scaling(&curve, 5).unwrap();
        let b = fit_scaling(&moved, 5).unwrap();
        for (x, y) in [(a.slope_ols, b.slope_ols), (a.slope_lower, b.slope_lower), (a.slope_upper, b.slope_upper)] {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
        prop_assert!(a.slope_lower <= a.slope_ols + 1e-12 && a.slope_ols <= a.slope_upper + 1e-12);
    }
}
