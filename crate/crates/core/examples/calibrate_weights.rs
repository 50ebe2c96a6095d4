//! Calibrates four weights so that they reproduce known totals, once per
//! generator, and prints the Newton trace of the entropy case.

use mec::bregman::ALL_KINDS;
use mec::calibration::{write_trace_csv, CalibrationProblem, SolveOptions};
use nalgebra::{DMatrix, DVector};

fn main() -> mec::Result<()> {
    // intercept and one covariate; baseline weight N/n = 2
    let basis = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 1.0, 1.5, 1.0, 2.0, 1.0, 3.0]);
    let totals = DVector::from_vec(vec![8.0, 17.0]);

    for gen in ALL_KINDS {
        let problem = CalibrationProblem::with_uniform_baseline(basis.clone(), totals.clone(), 8.0, gen)?;
        let sol = problem.solve(&SolveOptions::default())?;
        let w: Vec<String> = sol.omega.iter().map(|w| format!("{w:.5}")).collect();
        println!(
            "{:<20} iterations {:>2}  residual {:.1e}  D = {:.6}  weights [{}]",
            gen.to_string(),
            sol.iterations,
            sol.residual_norm,
            sol.objective,
            w.join(", ")
        );
    }

    let problem = CalibrationProblem::with_uniform_baseline(basis, totals, 8.0, mec::Generator::KullbackLeibler)?;
    let opts = SolveOptions { trace: true, ..SolveOptions::default() };
    let sol = problem.solve(&opts)?;
    println!("\nNewton trace (kl):");
    write_trace_csv(&sol.trace, std::io::stdout())?;
    Ok(())
}
