mod common;

use mec::bregman::ALL_KINDS;
use mec::estimators::{greg_estimate, mec, ppi_crossfit, wald_interval};
use mec::{Generator, PredictionSet, SolveOptions};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{affine, random_calibration, random_instance};

fn generator() -> impl Strategy<Value = Generator> {
    (0..ALL_KINDS.len()).prop_map(|i| ALL_KINDS[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calibrated_weights_hit_totals(seed in any::<u64>(), n in 10usize..300, p in 1usize..=2, gen in generator()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_calibration(&mut rng, n, p, gen);
        let sol = problem.solve(&SolveOptions::default()).unwrap();
        prop_assert!(sol.converged);
        let omega = DVector::from_column_slice(&sol.omega);
        let residual = (problem.basis().tr_mul(&omega) - problem.totals()).norm();
        prop_assert!(residual <= 1e-10 * problem.totals().norm().max(1.0));
        prop_assert!(sol.omega.iter().all(|&w| gen.in_domain(w)));
        prop_assert!(sol.objective >= 0.0);
        if gen.is_quadratic() {
            prop_assert_eq!(sol.iterations, 1);
        }
    }

    #[test]
    fn quadratic_mec_is_greg(seed in any::<u64>(), n in 10usize..200, n_u in 10usize..600) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, preds) = random_instance(&mut rng, n, n_u);
        let a = mec(&data, &preds, Generator::Quadratic, 0.05).unwrap();
        let b = greg_estimate(&data, &preds, Generator::Quadratic, 0.05).unwrap();
        prop_assert!((a.theta_hat - b.theta_hat).abs() <= 1e-10 * (1.0 + a.theta_hat.abs()));
        prop_assert_eq!(a.se, b.se);
    }

    #[test]
    fn mec_ignores_affine_rescaling(
        seed in any::<u64>(),
        shift in -10.0f64..10.0,
        scale in 0.1f64..10.0,
        gen in generator(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, preds) = random_instance(&mut rng, 60, 240);
        let a = mec(&data, &preds, gen, 0.05).unwrap();
        let b = mec(&data, &affine(&preds, shift, scale), gen, 0.05).unwrap();
        prop_assert!((a.theta_hat - b.theta_hat).abs() <= 1e-10, "{} vs {}", a.theta_hat, b.theta_hat);
    }

    #[test]
    fn constant_predictions_give_crossfit_ppi(seed in any::<u64>(), c in -50.0f64..50.0, gen in generator()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, preds) = random_instance(&mut rng, 30, 90);
        let flat = PredictionSet::new(preds.labeled.map(|_| c), preds.unlabeled.clone(), Some(5), "flat").unwrap();
        let r = mec(&data, &flat, gen, 0.05).unwrap();
        let reference = ppi_crossfit(&data, &flat, 0.05).unwrap();
        prop_assert_eq!(r.theta_hat.to_bits(), reference.theta_hat.to_bits());
        prop_assert_eq!(r.se.to_bits(), reference.se.to_bits());
        prop_assert!(r.diagnostics.collapsed_basis);
        prop_assert_eq!(r.diagnostics.warnings.len(), 1);
    }

    #[test]
    fn intervals_are_centred_and_nested(theta in -1e3f64..1e3, se in 1e-6f64..1e3) {
        let (lo90, hi90) = wald_interval(theta, se, 0.10);
        let (lo95, hi95) = wald_interval(theta, se, 0.05);
        prop_assert!(((lo95 + hi95) / 2.0 - theta).abs() <= 1e-9 * (1.0 + theta.abs()));
        prop_assert!(lo95 < lo90 && hi90 < hi95);
    }

    #[test]
    fn mec_interval_contains_estimate(seed in any::<u64>(), gen in generator()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (data, preds) = random_instance(&mut rng, 40, 160);
        let r = mec(&data, &preds, gen, 0.05).unwrap();
        prop_assert!(r.ci_lower < r.theta_hat && r.theta_hat < r.ci_upper);
        prop_assert!(r.se > 0.0);
    }
}
