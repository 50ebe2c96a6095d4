//! Coverage and interval-width study on the synthetic benchmark.
//!
//! ```text
//! cargo run --release --example monte_carlo -- [R] [f ...]
//! ```
//! Defaults to 100 replications at f = 0.1, 0.3, 0.5.

use mec::{run_monte_carlo, Generator, LearnerSpec, SimulationConfig};

fn main() -> mec::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().map(|r| r.parse().expect("R must be an integer")).unwrap_or(100);
    let mut f_grid: Vec<f64> = args.map(|f| f.parse().expect("f must be a number")).collect();
    if f_grid.is_empty() {
        f_grid = vec![0.1, 0.3, 0.5];
    }

    let cfg = SimulationConfig {
        replications: reps,
        f_grid,
        learners: vec![LearnerSpec::krr(), LearnerSpec::knn()],
        generators: vec![Generator::Quadratic, Generator::KullbackLeibler],
        ..SimulationConfig::main_experiment()
    };
    let started = std::time::Instant::now();
    let summary = run_monte_carlo(&cfg)?;
    print!("{}", summary.table());
    eprintln!("{} replications per cell in {:.1?}", reps, started.elapsed());
    Ok(())
}
