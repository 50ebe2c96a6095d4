//! Five-fold cross-fitted kernel ridge predictions on synthetic data, written
//! in the prediction-set CSV format that external models can also produce.

use mec::crossfit::{cross_predict, FoldAssignment};
use mec::simulate::{draw_dataset, SimulationConfig};
use mec::LearnerSpec;

fn main() -> mec::Result<()> {
    let cfg = SimulationConfig { population: 400, ..SimulationConfig::main_experiment() };
    let (data, truth) = draw_dataset(&cfg, 0.25, 11)?;
    let folds = FoldAssignment::new(data.n(), 5, 3)?;
    println!("fold sizes {:?}", folds.sizes());

    for learner in [LearnerSpec::krr(), LearnerSpec::knn()] {
        let preds = cross_predict(&data, &folds, &learner)?;
        let mse = |a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>| (a - b).norm_squared() / a.len() as f64;
        println!(
            "{learner}: out-of-fold MSE vs truth {:.3}, unlabeled MSE vs truth {:.3}",
            mse(&preds.labeled, &truth.m0_labeled),
            mse(&preds.unlabeled, &truth.m0_unlabeled)
        );
    }

    let preds = cross_predict(&data, &folds, &LearnerSpec::krr())?;
    let mut buf = Vec::new();
    preds.write_csv(&mut buf)?;
    let text = String::from_utf8_lossy(&buf);
    println!("\nfirst rows of the prediction file:");
    for line in text.lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
