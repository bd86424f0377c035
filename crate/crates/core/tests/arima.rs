mod common;

use common::arima_dense::{dense_forecast, dense_loglik, params, simulate};
use common::proptest_config;
use proptest::prelude::*;
use stintlab::arima::{arima_forecast, arima_loglik, fit_arima, ArimaParams};

#[test]
fn likelihood_matches_dense_oracle() {
    let cases = [
        params([0.5, -0.3], [0.4, 0.2], 0.05, 0.8),
        params([-0.2, 0.6], [-0.5, 0.1], -0.1, 1.5),
        params([0.0, 0.0], [0.0, 0.0], 0.0, 1.0),
        params([1.2, -0.5], [0.9, 0.3], 0.2, 0.3),
    ];
    let y = [70.2, 70.9, 70.1, 71.4, 71.0, 72.3, 71.8, 71.9, 72.8, 72.2];
    for p in cases {
        for n in 2..=y.len() {
            let a = arima_loglik(&p, &y[..n]).unwrap();
            let b = dense_loglik(&p, &y[..n]);
            assert!((a - b).abs() < 1e-6, "{p:?} n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn forecast_matches_dense_conditional() {
    let p = params([0.5, -0.3], [0.4, 0.2], 0.05, 0.8);
    let y = simulate(&p, 10, 4);
    let (m, s) = arima_forecast(&p, &y).unwrap();
    let (dm, ds) = dense_forecast(&p, &y);
    assert!((m - dm).abs() < 1e-8 && (s - ds).abs() < 1e-8, "({m}, {s}) vs ({dm}, {ds})");
}

#[test]
fn recovers_coefficients_at_n_2000() {
    // AR and MA roots well apart, so the coefficients are identified.
    let truth = params([1.2, -0.6], [-0.3, -0.4], 0.05, 0.8);
    for seed in [11, 12, 13] {
        let y = simulate(&truth, 2000, seed);
        let fit = fit_arima(&y).unwrap();
        let pairs = [
            (fit.ar[0], truth.ar[0]),
            (fit.ar[1], truth.ar[1]),
            (fit.ma[0], truth.ma[0]),
            (fit.ma[1], truth.ma[1]),
            (fit.intercept, truth.intercept),
            (fit.innovation_sd, truth.innovation_sd),
        ];
        for (i, (a, b)) in pairs.iter().enumerate() {
            assert!((a - b).abs() < 0.1, "seed {seed} coefficient {i}: {a} vs {b} ({fit:?})");
        }
        // The optimum is at least as likely as the truth.
        assert!(arima_loglik(&fit, &y).unwrap() >= arima_loglik(&truth, &y).unwrap() - 1e-6);
    }
}

#[test]
fn rejects_short_and_inadmissible() {
    assert!(fit_arima(&[70.0; 7]).is_err());
    assert!(arima_loglik(&params([0.5, 0.6], [0.0, 0.0], 0.0, 1.0), &[1.0, 2.0, 3.0]).is_err());
    assert!(arima_loglik(&params([0.0, 0.0], [0.0, -1.2], 0.0, 1.0), &[1.0, 2.0, 3.0]).is_err());
    let line: Vec<f64> = (0..20).map(|t| 70.0 + 0.125 * t as f64).collect();
    let fit = fit_arima(&line).unwrap();
    assert_eq!(fit.innovation_sd, 0.0);
    let (m, s) = arima_forecast(&fit, &line).unwrap();
    assert!((m - 72.5).abs() < 1e-9 && s == 0.0);
}

fn admissible() -> impl Strategy<Value = ArimaParams> {
    // Partial autocorrelations inside ±0.9 keep the roots away from the unit circle.
    (-0.9f64..0.9, -0.9f64..0.9, -0.9f64..0.9, -0.9f64..0.9, -1.0f64..1.0, 0.1f64..3.0).prop_map(
        |(r1, r2, s1, s2, mu, sd)| ArimaParams {
            ar: [r1 * (1.0 - r2), r2],
            ma: [-(s1 * (1.0 - s2)), -s2],
            intercept: mu,
            innovation_sd: sd,
        },
    )
}

proptest! {
    #![proptest_config(proptest_config(64))]

    #[test]
    fn likelihood_matches_dense_for_random_params(p in admissible(), y in prop::collection::vec(60.0f64..80.0, 2..=10)) {
        prop_assume!(p.is_admissible());
        let a = arima_loglik(&p, &y).unwrap();
        let b = dense_loglik(&p, &y);
        prop_assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{} vs {}", a, b);
    }
}
