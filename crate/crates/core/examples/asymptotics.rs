//! How close restricted nulls are to a normal distribution as the test set
//! grows, for classification and regression metrics.

use permconf::harness::run_asymptotics_study;
use permconf::metrics::MetricId;

fn main() -> permconf::Result<()> {
    let rows = run_asymptotics_study(&[15, 30, 100], &MetricId::ALL, 1000, 1)?;
    println!("metric    test  KS-to-normal  largest atom");
    for r in rows {
        println!("{:<9} {:>4}  {:>12.4}  {:>12.4}", r.metric.name(), r.test_size, r.ks, r.max_atom);
    }
    Ok(())
}
