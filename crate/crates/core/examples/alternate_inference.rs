//! Predicts both labels of unlabeled samples by alternating the two towers.

use duallabel::experiment::{convergence_report, ExperimentConfig, PresetName};

fn main() -> duallabel::Result<()> {
    let mut config = ExperimentConfig::from_preset(PresetName::Higgs);
    config.train.epochs = Some(20);
    config.inference.max_iterations = Some(30);

    let report = convergence_report(&config)?;
    println!("iteration  {}(y1)  {}(y2)", report.metric_name(), report.metric_name());
    for (it, a, b) in report.per_iteration.iter().take(10) {
        println!("{it:>9}  {a:.5}  {b:.5}");
    }
    println!(
        "converged within 10 iterations: {:.1}%, median {:?}",
        100.0 * report.converged_fraction_within(10),
        report.median_convergence()
    );
    let t = &report.traces[0];
    println!("sample 0 trace:");
    for (i, (y1, y2)) in t.iterates.iter().enumerate().take(6) {
        println!("  {:>2}: y1 = {y1:.6}, y2 = {y2:.6}", i + 1);
    }
    Ok(())
}
