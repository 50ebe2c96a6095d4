//! Divergences, derivatives and conjugates of every built-in generator.

use mec::bregman::ALL_KINDS;

fn main() -> mec::Result<()> {
    let pairs = [(1.0, 1.0), (2.0, 1.0), (0.5, 1.0), (5.0, 4.0), (4.0, 5.0)];
    println!("{:<20} {:>8} {:>8} {:>12} {:>12} {:>12}", "generator", "u", "v", "D(u||v)", "g(u)", "F(g(u))");
    for gen in ALL_KINDS {
        for &(u, v) in &pairs {
            let nu = gen.derivative(u)?;
            println!(
                "{:<20} {:>8} {:>8} {:>12.6} {:>12.6} {:>12.6}",
                gen.to_string(),
                u,
                v,
                gen.divergence(u, v)?,
                nu,
                gen.conjugate(nu)?
            );
        }
    }

    // F′ inverts g, so F′(g(u)) recovers u
    let gen: mec::Generator = "renyi:2".parse()?;
    let u = 3.5;
    let back = gen.derivative_inverse(gen.derivative(u)?)?;
    println!("\n{gen}: g⁻¹(g({u})) = {back}");

    // outside the domain
    match mec::Generator::EmpiricalLikelihood.value(-1.0) {
        Err(e) => println!("rejected: {e}"),
        Ok(v) => println!("unexpected value {v}"),
    }
    Ok(())
}
