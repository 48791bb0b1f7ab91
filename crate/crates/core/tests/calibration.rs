use std::f64::consts::PI;

use dmod::calibration::{calibrate, resolve_sign, solve_abs_phase, CalibrationConfig};
use dmod::channel::ChannelMatrix;
use dmod::scenario::ScenarioFile;
use dmod::testbed::Testbed;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// A 2×2 channel whose inter-column phase magnitude stays inside
/// [0.01, π − 0.01] on both rows.
fn random_channel(rng: &mut impl Rng) -> ChannelMatrix {
    let rows: Vec<Vec<Complex64>> = (0..2)
        .map(|_| {
            let a = Complex64::from_polar(rng.random_range(0.2..2.0), rng.random_range(-PI..PI));
            let theta = rng.random_range(0.01..PI - 0.01) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let b = a / a.norm() * Complex64::from_polar(rng.random_range(0.2..2.0), theta);
            vec![a, b]
        })
        .collect();
    ChannelMatrix::from_rows(&rows).unwrap()
}

fn noiseless_measure(h: &ChannelMatrix) -> impl FnMut(&[Complex64]) -> Result<Vec<f64>, String> + '_ {
    move |w| Ok(h.apply(w).unwrap().iter().map(|z| z.norm()).collect())
}

#[test]
fn gauge_recovery_on_random_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..500 {
        let h = random_channel(&mut rng);
        let cal = calibrate(2, &CalibrationConfig::default(), noiseless_measure(&h)).unwrap();
        let est = &cal.channel;
        for n in 0..2 {
            for m in 0..2 {
                let (truth, got) = (h.get(n, m).norm(), est.get(n, m).norm());
                assert!((got - truth).abs() <= 1e-9 * truth, "trial {trial} |H[{n}][{m}]|: {got} vs {truth}");
            }
            let truth = (h.get(n, 1) / h.get(n, 0)).arg();
            let got = (est.get(n, 1) / est.get(n, 0)).arg();
            assert!(wrap(got - truth).abs() <= 1e-9, "trial {trial} row {n}: {got} vs {truth}");
        }
    }
}

#[test]
fn sign_resolution_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut wrong = 0;
    for i in 0..1000 {
        let abs_theta = 0.01 + (PI - 0.02) * i as f64 / 999.0;
        for sign in [1i8, -1] {
            let t1: f64 = rng.random_range(0.1..3.0);
            let t2: f64 = rng.random_range(0.1..3.0);
            let theta = f64::from(sign) * abs_theta;
            // element 2 at +90°: |T1 + j·T2| with T2 = t2·e^{jθ} relative to T1
            let quadrature = (Complex64::new(t1, 0.0) + Complex64::from_polar(t2, theta + PI / 2.0)).norm();
            if resolve_sign(t1, t2, abs_theta, quadrature) != sign {
                wrong += 1;
            }
        }
    }
    assert_eq!(wrong, 0);
}

#[test]
fn scenario_calibration_matches_geometry() {
    let tb = Testbed::new(ScenarioFile::reference().build().unwrap()).unwrap();
    let cal = tb.calibrate(1, 0.0).unwrap().calibration;
    for n in 0..2 {
        let truth = (tb.truth().get(n, 1) / tb.truth().get(n, 0)).arg().to_degrees();
        let got = cal.csi.theta[n][0].to_degrees();
        assert!((got - truth).abs() < 1e-6, "row {n}: {got} vs {truth}");
    }
}

proptest! {
    #[test]
    fn abs_phase_inverts_law_of_cosines(t1 in 0.05f64..5.0, t2 in 0.05f64..5.0, theta in 0.01f64..PI - 0.01) {
        let both = (Complex64::new(t1, 0.0) + Complex64::from_polar(t2, theta)).norm();
        let got = solve_abs_phase(t1, t2, both, 1e-6).unwrap();
        prop_assert!((got - theta).abs() <= 1e-9, "{} vs {}", got, theta);
    }

    #[test]
    fn abs_phase_clamps_out_of_range(t1 in 0.1f64..3.0, t2 in 0.1f64..3.0, excess in 1e-9f64..0.5) {
        let over = t1 + t2 + excess;
        prop_assert_eq!(solve_abs_phase(t1, t2, over, 1e-6).unwrap(), 0.0);
        let under = ((t1 - t2).abs() - excess).max(0.0);
        if under < (t1 - t2).abs() {
            prop_assert_eq!(solve_abs_phase(t1, t2, under, 1e-6).unwrap(), PI);
        }
    }

    #[test]
    fn gauge_invariance_under_row_phase(phi0 in -PI..PI, phi1 in -PI..PI, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_channel(&mut rng);
        let rotated = ChannelMatrix::from_rows(&h.rows().iter().zip([phi0, phi1]).map(|(row, p)| {
            row.iter().map(|z| z * Complex64::from_polar(1.0, p)).collect()
        }).collect::<Vec<_>>()).unwrap();
        let a = calibrate(2, &CalibrationConfig::default(), noiseless_measure(&h)).unwrap();
        let b = calibrate(2, &CalibrationConfig::default(), noiseless_measure(&rotated)).unwrap();
        for n in 0..2 {
            for m in 0..2 {
                prop_assert!((a.channel.get(n, m) - b.channel.get(n, m)).norm() < 1e-9);
            }
        }
    }
}
