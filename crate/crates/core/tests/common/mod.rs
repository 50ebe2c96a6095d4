#![allow(dead_code)]

use mec::{CalibrationProblem, Dataset, Generator, PredictionSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// A feasible calibration instance: totals are `Zᵀω*` for a positive `ω*`
/// scattered around the baseline.
pub fn random_calibration<R: Rng>(rng: &mut R, n: usize, p: usize, gen: Generator) -> CalibrationProblem {
    let population = n as f64 / rng.random_range(0.1..0.9);
    let d = population / n as f64;
    let z = DMatrix::from_fn(n, p, |_, c| {
        if c == 0 {
            1.0
        } else {
            rng.sample::<f64, _>(StandardNormal)
        }
    });
    let target = DVector::from_fn(n, |_, _| d * (0.3 * rng.sample::<f64, _>(StandardNormal)).exp());
    let totals = z.tr_mul(&target);
    CalibrationProblem::with_uniform_baseline(z, totals, population, gen).unwrap()
}

/// A linear-signal dataset with `n` labeled and `n_unlabeled` units and noisy
/// predictions of the signal for every unit.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, n_unlabeled: usize) -> (Dataset, PredictionSet) {
    let big_n = n + n_unlabeled;
    let slope = rng.random_range(0.5..2.0);
    let x: Vec<f64> = (0..big_n).map(|_| rng.sample(StandardNormal)).collect();
    let m: Vec<f64> = x
        .iter()
        .map(|v| 1.0 + slope * v + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y = DVector::from_fn(n, |j, _| 2.0 + slope * x[j] + rng.sample::<f64, _>(StandardNormal));
    let data = Dataset::new(
        DMatrix::from_column_slice(n, 1, &x[..n]),
        y,
        DMatrix::from_column_slice(n_unlabeled, 1, &x[n..]),
    )
    .unwrap();
    let preds = PredictionSet::new(
        DVector::from_column_slice(&m[..n]),
        DVector::from_column_slice(&m[n..]),
        Some(5),
        "synthetic",
    )
    .unwrap();
    (data, preds)
}

/// `a + b·m` applied to every prediction.
pub fn affine(preds: &PredictionSet, a: f64, b: f64) -> PredictionSet {
    PredictionSet::new(
        preds.labeled.map(|v| a + b * v),
        preds.unlabeled.map(|v| a + b * v),
        preds.k,
        preds.learner.clone(),
    )
    .unwrap()
}
