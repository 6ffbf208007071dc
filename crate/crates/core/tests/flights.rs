//! Random flights against closed-form moments.

use lorentz_core::flight::{flight_covariance, sample_flight, virtual_centre};
use lorentz_core::rng::{stream, Domain};
use lorentz_core::Vec3;
use proptest::prelude::*;

#[test]
fn endpoint_variance_matches_exact_formula() {
    let (rate, horizon, m) = (1.0, 3.0, 40_000u64);
    let mut sum = 0.0;
    for replica in 0..m {
        let mut rng = stream(11, Domain::Flight, &[replica]);
        let v0 = lorentz_core::flight::sample_uniform_sphere(&mut rng);
        let y = sample_flight(&mut rng, rate, &v0, horizon, 0.0)
            .unwrap()
            .endpoint();
        sum += y.norm_squared() / 3.0;
    }
    let var = sum / m as f64;
    let exact = flight_covariance(rate, horizon);
    // |Y|² ≤ T², so the SE of the mean is below T²/(3√m).
    let tol = 4.0 * horizon * horizon / 3.0 / (m as f64).sqrt();
    assert!((var - exact).abs() < tol, "{var} vs {exact}");
}

#[test]
fn short_horizon_variance_is_ballistic() {
    // Var ≈ T²/3 − λT³/9 for λT ≪ 1.
    let t = 1e-3;
    let v = flight_covariance(1.0, t);
    assert!((v - (t * t / 3.0 - t.powi(3) / 9.0)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn flight_event_invariants(seed in 0u64..100_000, horizon in 0.5f64..30.0, r in 1e-4f64..0.1) {
        let mut rng = stream(seed, Domain::Flight, &[0]);
        let path = sample_flight(&mut rng, 1.0, &Vec3::z(), horizon, r).unwrap();
        let mut prev = (0.0, Vec3::zeros(), Vec3::z());
        for ev in &path.events {
            prop_assert!(ev.time > prev.0 && ev.time <= horizon);
            prop_assert!((ev.position - (prev.1 + prev.2 * (ev.time - prev.0))).norm() < 1e-9);
            prop_assert!(((ev.position - ev.centre).norm() - r).abs() < 1e-12);
            // The virtual scatterer explains the turn as a specular bounce.
            let n = (ev.position - ev.centre) / r;
            let reflected = ev.v_pre - n * (2.0 * ev.v_pre.dot(&n));
            prop_assert!((reflected - ev.v_post).norm() < 1e-9);
            prev = (ev.time, ev.position, ev.v_post);
        }
    }

    #[test]
    fn virtual_centre_is_at_distance_r(x in -5.0f64..5.0, r in 1e-6f64..1.0) {
        let pos = Vec3::new(x, 1.0, -2.0);
        let c = virtual_centre(&pos, &Vec3::x(), &Vec3::y(), r).unwrap();
        prop_assert!(((c - pos).norm() - r).abs() < 1e-12);
    }
}
