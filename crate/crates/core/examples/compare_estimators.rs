//! Every estimator on one synthetic draw, next to the true mean.

use mec::bregman::ALL_KINDS;
use mec::crossfit::{cross_predict, FoldAssignment};
use mec::estimators::{classical, greg_estimate, mec, ppi_crossfit, ppi_oracle, ppi_vanilla};
use mec::simulate::{draw_dataset, SimulationConfig};
use mec::LearnerSpec;

fn main() -> mec::Result<()> {
    let cfg = SimulationConfig::main_experiment();
    let (data, truth) = draw_dataset(&cfg, 0.2, 2024)?;
    let learner = LearnerSpec::krr();
    let preds = cross_predict(&data, &FoldAssignment::new(data.n(), 5, 1)?, &learner)?;
    let alpha = 0.05;

    println!("true mean {:.4}, n = {}, N = {}\n", truth.theta0, data.n(), data.population());
    let mut reports = vec![
        classical(&data, alpha)?,
        ppi_oracle(&data, &truth.m0_labeled, &truth.m0_unlabeled, alpha)?,
        ppi_vanilla(&data, &learner, alpha)?,
        ppi_crossfit(&data, &preds, alpha)?,
        greg_estimate(&data, &preds, mec::Generator::Quadratic, alpha)?,
    ];
    for gen in ALL_KINDS {
        reports.push(mec(&data, &preds, gen, alpha)?);
    }
    for r in &reports {
        println!(
            "{:<9} {:<20} {:>9.4}  [{:.4}, {:.4}]  width {:.4}",
            r.method.to_string(),
            r.generator.map(|g| g.to_string()).unwrap_or_default(),
            r.theta_hat,
            r.ci_lower,
            r.ci_upper,
            r.width()
        );
    }
    Ok(())
}
