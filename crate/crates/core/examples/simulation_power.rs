//! Rejection rates of both tests and corrected-AUC behaviour across the
//! four signal/confounding experiments, at a reduced number of datasets.
//! Pass a number of datasets as the first argument (default 40).

use permconf::harness::{power_curve, run_experiment, ExperimentConfig};

fn main() -> permconf::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(40);
    println!("exp  response@0.05  confounding@0.05  mean obs  mean corr");
    for e in 1..=4u8 {
        let cfg = ExperimentConfig { n_datasets: n, scale_factor: 1.0, ..ExperimentConfig::desk(e, 2024) };
        let rows = run_experiment(&cfg)?;
        let pt = power_curve(&rows, &[0.05])?[0];
        let k = rows.len() as f64;
        println!(
            "{e:>3}  {:>13.3}  {:>16.3}  {:>8.4}  {:>9.4}",
            pt.response_rate,
            pt.confounding_rate,
            rows.iter().map(|r| r.observed).sum::<f64>() / k,
            rows.iter().map(|r| r.corrected).sum::<f64>() / k
        );
    }
    Ok(())
}
