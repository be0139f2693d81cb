//! Cross-module property tests.

use proptest::prelude::*;

use plaplab::capacity::{global_capacity, spherical_condenser_oracle, CompactSet, Shape, SolverOpts};
use plaplab::geom::Ball;
use plaplab::measure::{ball_mass, MassProfile, RadonMeasure};
use plaplab::spectra::{ap_spectrum, cone_membership_tol, ConeSpec, EigenSpectrum};
use plaplab::thinness::{ball_chain, find_escape_ray, segment_clear, RegionSet};
use plaplab::wolff::{wolff_potential, WolffParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

}

fn spectrum_strategy(n: usize) -> impl Strategy<Value = EigenSpectrum> {
    prop::collection::vec(-1.0f64..1.0, n).prop_map(|v| EigenSpectrum::new(v).unwrap())
}

proptest! {
    /// Membership in the stronger cone implies membership in the weaker one
    /// for 2 <= p1 < p2.
    #[test]
    fn ap_cone_nesting(s in spectrum_strategy(6), dp1 in 0.0f64..3.0, dp2 in 0.01f64..5.0) {
        let p1 = 2.0 + dp1;
        let p2 = p1 + dp2;
        if cone_membership_tol(&s, ConeSpec::Ap { p: p2 }, 0.0).unwrap() {
            let weaker = cone_membership_tol(&s, ConeSpec::Ap { p: p1 }, 1e-12).unwrap();
            prop_assert!(weaker);
        }
    }

    /// Uniform shifts commute with the intermediate-curvature map:
    /// spectrum(s + c) = spectrum(s) + c (p - 2 + n).
    #[test]
    fn ap_shift_commutation(s in spectrum_strategy(5), c in -2.0f64..2.0, p in 1.1f64..8.0) {
        let lhs = ap_spectrum(&s.shifted(c), p).unwrap();
        let rhs = ap_spectrum(&s, p).unwrap().shifted(c * (p - 2.0 + 5.0));
        for (a, b) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    /// Ball mass is monotone in the radius and bounded by the total mass.
    #[test]
    fn ball_mass_monotone(
        atoms in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..12),
        weights in prop::collection::vec(0.01f64..2.0, 12),
        cx in -0.5f64..0.5,
    ) {
        let k = atoms.len();
        let mu = RadonMeasure::atomic(atoms, weights[..k].to_vec()).unwrap();
        let total = mu.total_mass();
        let center = vec![cx, 0.1, -0.2];
        let mut prev = 0.0;
        for step in 1..=12 {
            let r = 0.25 * step as f64;
            let m = ball_mass(&mu, &Ball::new(center.clone(), r).unwrap());
            prop_assert!(m + 1e-12 >= prev);
            prop_assert!(m <= total + 1e-12);
            prev = m;
        }
    }

    /// The certified bracket contains the reported value and the potential
    /// grows with the truncation radius.
    #[test]
    fn wolff_bracket_and_radius_monotonicity(
        atoms in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..6),
        r1 in 0.4f64..1.0,
        dr in 0.1f64..1.0,
    ) {
        let k = atoms.len();
        let mu = RadonMeasure::atomic(atoms, vec![1.0; k]).unwrap();
        let x = vec![1.4, 1.3, 0.0, 0.0];
        let profile_gap = {
            let p = MassProfile::new(&mu, &x);
            p.first_hitting_radius().unwrap_or(f64::INFINITY)
        };
        prop_assume!(profile_gap > 1e-3);
        let w1 = wolff_potential(&mu, &x, &WolffParams::new(2.5, r1, 1e-7).unwrap()).unwrap();
        let w2 = wolff_potential(&mu, &x, &WolffParams::new(2.5, r1 + dr, 1e-7).unwrap()).unwrap();
        prop_assert!(w1.lower <= w1.value + 1e-12 && w1.value <= w1.upper + 1e-12);
        prop_assert!(w2.value + 1e-9 >= w1.value);
    }

    /// Any escape direction reported by the search survives the independent
    /// closest-point verifier against every ball of the chain.
    #[test]
    fn escape_rays_verified(seed in 0u64..500, c in 0.05f64..0.2) {
        let x0 = vec![0.0; 3];
        let dir = vec![0.6, -0.8, 0.0];
        let region = ball_chain(&x0, &dir, 1.0, c, 2, 10).unwrap();
        let res = find_escape_ray(&region, &x0, 0.4, 2000, seed).unwrap();
        if let Some(theta) = res.direction {
            let RegionSet::BallUnion { balls } = &region else { unreachable!() };
            let refs: Vec<&Ball> = balls.iter().collect();
            prop_assert!(segment_clear(&theta, &x0, 0.4, &refs));
        }
    }
}

/// Lipschitz image bound at the level the solver can witness: an affine
/// contraction never increases the (box-truncated) global capacity beyond
/// solver tolerance.
#[test]
fn contraction_image_capacity_bound() {
    let n = 3;
    let p = 2.5;
    let k = CompactSet::from_shapes(vec![
        Shape::Ball { center: vec![0.25, 0.0, 0.0], radius: 0.3 },
        Shape::Ball { center: vec![-0.3, 0.15, 0.0], radius: 0.22 },
    ]);
    let contracted = CompactSet {
        shapes: k.shapes.iter().map(|s| s.affine(0.7, &[0.0, 0.0, 0.0])).collect(),
        mask: None,
    };
    let opts = SolverOpts::default();
    let original = global_capacity(&k, n, p, 4.0, 1.0 / 20.0, &opts).unwrap().value;
    let image = global_capacity(&contracted, n, p, 4.0, 0.7 / 20.0, &opts).unwrap().value;
    assert!(
        image <= original * 1.03,
        "contraction increased capacity: {image} vs {original}"
    );
}

/// Domain-truncation study for the box approximation of global capacity:
/// the box value must land between the oracles of its inscribed and
/// circumscribed balls, and shrink as the box grows (the truncation tail
/// decays like R^-(n-p), slow for p near n).
#[test]
fn global_capacity_truncation_study() {
    let n = 3;
    let p = 2.5;
    let r = 0.5;
    let k = CompactSet::ball(vec![0.0; n], r);
    let opts = SolverOpts::default();
    let mut values = Vec::new();
    for factor in [3.0, 5.0] {
        let value = global_capacity(&k, n, p, factor, 1.0 / 18.0, &opts).unwrap().value;
        // box half-width is factor * diam(K) / 2 = factor * r
        let half = factor * r;
        let inscribed = spherical_condenser_oracle(n, p, r, half).unwrap();
        let circumscribed = spherical_condenser_oracle(n, p, r, half * 3.0f64.sqrt()).unwrap();
        assert!(
            value >= circumscribed * 0.90 && value <= inscribed * 1.05,
            "factor {factor}: value {value} outside oracle bracket [{circumscribed}, {inscribed}]"
        );
        values.push(value);
    }
    assert!(values[1] <= values[0] * 1.01, "capacity must shrink with the domain");
}
