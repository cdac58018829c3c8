//! Maximin Latin hypercube designs: the improvement in minimum distance
//! from swap optimization, and a parameter table for one experiment.

use permconf::shuffle::RngStream;
use permconf::synthdata::{experiment_design, lhs_unit, min_pairwise_distance};

fn main() -> permconf::Result<()> {
    for sweeps in [0, 10, 100, 1000] {
        let pts = lhs_unit(3, 30, sweeps, &mut RngStream::new(1, 0).rng())?;
        println!("{sweeps:>5} sweeps: min distance {:.4}", min_pairwise_distance(&pts));
    }
    println!("\n    n    p11    p10    p01    p00   beta  theta    rho");
    for p in experiment_design(1, 8, 100, &mut RngStream::new(2, 0).rng())? {
        let j = p.joint;
        println!(
            "{:>5} {:.4} {:.4} {:.4} {:.4} {:.4} {:.4} {:.4}",
            p.n, j.p11, j.p10, j.p01, j.p00, p.beta, p.theta, p.rho
        );
    }
    Ok(())
}
