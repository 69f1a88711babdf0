use lyapspec::gds::{refine, subsystem_pressure, Edge, GdsSystem, Vertex};
use lyapspec::map::RationalMap;
use lyapspec::orbit::{hyperbolic_times_brute_force, hyperbolic_times_of, pliss_bound, OrbitTrace};
use lyapspec::pressure::{periodic_pressure, tree_pressure};
use lyapspec::sphere::SpherePoint;
use num_complex::Complex64;
use proptest::prelude::*;

fn cantor() -> RationalMap {
    RationalMap::quadratic(Complex64::new(-6.0, 0.0))
}

fn two_disk(map: &RationalMap) -> GdsSystem {
    let re = |x: f64| Complex64::new(x, 0.0);
    GdsSystem::from_disks(
        map,
        vec![Vertex::new(re(-2.4), 0.8).with_anchor(re(-2.0)), Vertex::new(re(2.4), 0.8).with_anchor(re(3.0))],
        1,
    )
    .unwrap()
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(x, y)| Complex64::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_pressure_is_convex(c in -8.0f64..-2.1, d0 in -2.0f64..2.0, h in 0.05f64..1.0) {
        let map = RationalMap::quadratic(Complex64::new(c, 0.0));
        let x = SpherePoint::real(3.0 - c.abs() / 10.0);
        let p = |d: f64| tree_pressure(&map, d, x, 7).unwrap();
        let mid = p(d0 + h);
        prop_assert!(mid <= 0.5 * (p(d0) + p(d0 + 2.0 * h)) + 1e-10);
    }

    #[test]
    fn hyperbolic_scan_matches_brute_force(
        values in prop::collection::vec(-1.0f64..2.0, 1..200),
        sigma in 0.05f64..1.0,
    ) {
        let fast = hyperbolic_times_of(&values, sigma);
        prop_assert_eq!(&fast.times, &hyperbolic_times_brute_force(&values, sigma));
        if let Some(theta) = pliss_bound(&values, sigma) {
            prop_assert!(fast.density + 1e-12 >= theta);
        }
    }

    #[test]
    fn run_length_extremes_match_expansion(
        runs in prop::collection::vec((prop::collection::vec(-1.0f64..2.0, 1..5), 1u128..20), 1..6),
        a in -1.0f64..1.0,
        b in -0.5f64..0.5,
        from in 1u128..40,
    ) {
        let mut trace = OrbitTrace::new(SpherePoint::real(0.0));
        for (pattern, repeats) in &runs {
            trace.push_run(pattern.clone(), *repeats);
        }
        let values = trace.values().unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut s = 0.0;
        for (i, v) in values.iter().enumerate() {
            s += v;
            let k = (i + 1) as u128;
            if k >= from {
                let x = (s - a - b * k as f64) / k as f64;
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        match trace.deviation_extremes(from, trace.len(), a, b) {
            Some((l, h)) => {
                prop_assert!((l - lo).abs() < 1e-9 && (h - hi).abs() < 1e-9);
            }
            None => prop_assert!(from > values.len() as u128),
        }
    }

    #[test]
    fn gds_json_round_trips(
        centers in prop::collection::vec((complex(), 1e-3f64..5.0, complex()), 1..5),
        weights in prop::collection::vec((0usize..5, 0usize..5, complex(), 1e-3f64..1e3, 1.0f64..3.0), 0..8),
        iterate in 1usize..4,
    ) {
        let n = centers.len();
        let system = GdsSystem {
            vertices: centers.iter().map(|&(c, r, a)| Vertex::new(c, r).with_anchor(a)).collect(),
            edges: weights
                .iter()
                .map(|&(f, t, w, weight, distortion)| Edge { from: f % n, to: t % n, witness: w, weight, distortion })
                .collect(),
            iterate,
        };
        let back = GdsSystem::from_json(&system.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, system);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn subsystem_pressure_within_distortion_of_map_pressure(d in 0.0f64..2.0, m in 1usize..4) {
        let map = cantor();
        let sys = refine(&two_disk(&map), &map, m).unwrap();
        let sub = subsystem_pressure(&sys, d);
        let full = periodic_pressure(&map, d, 10).unwrap();
        // the disks cover the Julia set, so the sums agree up to distortion
        prop_assert!((sub.pressure - full).abs() <= sub.error_bar + 1e-6, "{} vs {}", sub.pressure, full);
    }
}
