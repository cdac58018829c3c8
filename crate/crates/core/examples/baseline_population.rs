//! A development sample in which disease and gender are more strongly
//! associated than in the population of interest. The baseline null comes
//! from a subsample matched to the population's joint table.

use permconf::harness::{run_baseline_scenario, BaselineScenarioConfig};

fn main() -> permconf::Result<()> {
    let cfg = BaselineScenarioConfig { n: 4000, ..Default::default() };
    let s = run_baseline_scenario(&cfg, 11)?;
    let r = &s.report;
    println!("baseline subsample {} rows, test size {}", r.baseline_size, r.test_size);
    println!("observed AUC              {:.4}", r.observed);
    println!("development null mean     {:.4}", r.development_null.mean());
    println!("baseline null mean        {:.4}", r.baseline_null.mean());
    println!("standard null mean        {:.4}", r.standard_null.mean());
    println!("corrected vs baseline     {:.4}", r.correction.m_c);
    println!("corrected vs standard     {:.4}", r.standard_correction.m_c);
    println!("excess confounding p      {:.3e}", r.test.p_value);
    Ok(())
}
