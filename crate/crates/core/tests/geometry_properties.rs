use locbmo::geometry::{
    chain_ball_construct, lattice_resolver, monotone_geodesic_certificate, monotone_geodesic_chain,
    trace_growth_holds, verify_chain_ball, weak_geodesic_certificate, GeodesicWitness, WeakGeodesicSampling,
};
use locbmo::space::{Ball, Metric, SpaceSpec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn monotone_chain_steps_are_admissible(i in 0usize..81, j in 0usize..81, k in 1u32..6) {
        let space = SpaceSpec::lebesgue(1, 2.0, 0.05).with_metric(Metric::GraphPath).build().unwrap();
        let s = k as f64 * space.spacing();
        let c4 = 2.0;
        prop_assume!(space.dist(i, j) >= s);
        let chain = monotone_geodesic_chain(&space, i, j, s, c4).unwrap();
        let pts = &chain.points;
        prop_assert_eq!(pts[0], j);
        prop_assert_eq!(*pts.last().unwrap(), i);
        let eps = 1e-9;
        for w in pts.windows(2) {
            prop_assert!(space.dist(w[0], w[1]) <= c4 * s + eps);
        }
        for w in pts[..pts.len() - 1].windows(2) {
            prop_assert!(space.dist(w[1], i) <= space.dist(w[0], i) - s + eps);
        }
    }

    #[test]
    fn chain_ball_witness_verifies(m in 9u32..16, offset in 0usize..81) {
        let space = SpaceSpec::lebesgue(1, 2.0, 0.05).with_metric(Metric::GraphPath).build().unwrap();
        let h = space.spacing();
        let c4 = 2.0;
        let z = space.len() / 2;
        let base = Ball::new(z, (m as f64 + 0.5) * h);
        let members = space.members(&base, false);
        let x = members[offset % members.len()];
        let w = chain_ball_construct(&space, base, x, c4, lattice_resolver(&space, c4, h)).unwrap();
        prop_assert!(verify_chain_ball(&space, &w).is_ok());
        prop_assert!(trace_growth_holds(&w.t_values, c4));
    }

    #[test]
    fn weak_witness_is_sound(extent in 4u32..12) {
        let space = SpaceSpec::integers(extent as f64).build().unwrap();
        let sampling = WeakGeodesicSampling { s_min_fraction: 0.05, ..Default::default() };
        let cert = weak_geodesic_certificate(&space, &sampling).unwrap();
        prop_assert!(!cert.holds());
        match cert.witness() {
            Some(GeodesicWitness::Weak { x, r, s, y, distance }) => {
                let d = space.dist(*x, *y);
                prop_assert!(d > *r && d <= r + s + 1e-12);
                let ball = space.members(&Ball::new(*x, *r), true);
                let to_ball = ball.iter().map(|&p| space.dist(*y, p)).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(to_ball, *distance);
                prop_assert!(distance / s > 1.0);
            }
            other => prop_assert!(false, "unexpected witness {:?}", other),
        }
    }
}

// On the path grids the monotone property holds, and with it the weak one.
#[test]
fn monotone_implies_weak_on_grids() {
    for spec in [
        SpaceSpec::lebesgue(1, 2.0, 0.05).with_metric(Metric::GraphPath),
        SpaceSpec::lebesgue(2, 0.5, 0.05).with_metric(Metric::GraphPath),
    ] {
        let space = spec.build().unwrap();
        let h = space.spacing();
        let mono = monotone_geodesic_certificate(&space, 2.0, &[h, 2.0 * h, 4.0 * h], 6).unwrap();
        assert!(mono.holds());
        let weak = weak_geodesic_certificate(&space, &WeakGeodesicSampling::default()).unwrap();
        assert!(weak.holds(), "{:?}", weak.scale_profile);
    }
}

// The integer model fails the weak property, so it cannot satisfy the
// monotone one with a bounded constant at sub-unit scales.
#[test]
fn integers_fail_both_below_unit_scale() {
    let space = SpaceSpec::integers(6.0).build().unwrap();
    let mono = monotone_geodesic_certificate(&space, 2.0, &[0.25], 4).unwrap();
    assert!(!mono.holds());
}
