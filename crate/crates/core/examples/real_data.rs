//! Labeled/unlabeled workflow on a fully labeled table: hide most outcomes,
//! estimate the mean from the rest, and compare with the full-data mean.
//!
//! ```text
//! cargo run --release --example real_data -- energy.csv Y1 115 [split seed] [excluded column ...]
//! ```
//! For the UCI Energy Efficiency data pass `Y2` as an excluded column.

use mec::cli::estimate_methods;
use mec::dataset::split_table;
use mec::io::read_numeric_csv;
use mec::{EstimateOptions, Method};

fn main() -> mec::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 3 {
        eprintln!("usage: real_data <csv> <response column> <labeled size> [split seed] [excluded column ...]");
        std::process::exit(2);
    }
    let table = read_numeric_csv(args[0].as_ref())?;
    let response = &args[1];
    let n: usize = args[2].parse().expect("labeled size must be an integer");
    let seed: u64 = args.get(3).map(|s| s.parse().expect("seed must be an integer")).unwrap_or(0);
    let exclude: Vec<String> = args.iter().skip(4).cloned().collect();

    let y_col = table.column_index(response).expect("response column not found");
    let full_mean = table.rows.iter().map(|r| r[y_col]).sum::<f64>() / table.rows.len() as f64;
    let data = split_table(&table, response, &exclude, n, seed)?;
    println!(
        "full-data mean {full_mean:.3}; labeled mean {:.3} (n = {}, N = {})",
        data.labeled_y().mean(),
        data.n(),
        data.population()
    );

    let methods = [Method::Classical, Method::Ppi, Method::CfPpi, Method::Mec, Method::Greg];
    let (reports, _) = estimate_methods(&data, &methods, &EstimateOptions::default())?;
    for r in &reports {
        let covers = if r.covers(full_mean) { "covers" } else { "misses" };
        println!(
            "{:<9} {:>9.3}  [{:.3}, {:.3}]  width {:.3}  {covers}",
            r.method.to_string(),
            r.theta_hat,
            r.ci_lower,
            r.ci_upper,
            r.width()
        );
    }
    Ok(())
}
