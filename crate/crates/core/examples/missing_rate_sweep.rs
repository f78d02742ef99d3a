//! Sweeps the label missing rate and prints mean double-label MAPE per rate.

use duallabel::experiment::{sweep_missing_rates, ExperimentConfig, Method, PresetName};

fn main() -> duallabel::Result<()> {
    let mut config = ExperimentConfig::from_preset(PresetName::Higgs);
    config.methods = vec![Method::Dll, Method::Id];
    config.seeds = vec![0, 1];
    config.train.epochs = Some(15);

    let sweep = sweep_missing_rates(&config, &[0.1, 0.3, 0.5])?;
    for (rate, results) in &sweep.per_rate {
        for method in ["DLL", "ID"] {
            let y1 = results.summary(method, "Double-y1", "mape").map(|s| s.mean);
            let y2 = results.summary(method, "Double-y2", "mape").map(|s| s.mean);
            println!("rate {rate:.1}  {method:<4} y1 {:?}  y2 {:?}", y1, y2);
        }
    }
    print!("{}", sweep.to_csv(&config.seeds).lines().take(4).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
