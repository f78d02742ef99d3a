//! Compares DLL with the baseline schemes over a few seeds.

use duallabel::evalkit::TASKS;
use duallabel::experiment::{run_experiment, ExperimentConfig, Method, PresetName};

fn main() -> duallabel::Result<()> {
    let mut config = ExperimentConfig::from_preset(PresetName::Higgs);
    config.seeds = vec![0, 1, 2];
    config.methods = vec![
        Method::Dll,
        Method::Id,
        Method::Col,
        Method::Ssl,
        Method::Ls,
        Method::Dsml,
    ];
    config.train.epochs = Some(20);

    let out = run_experiment(&config)?;
    let summary = out.results.summarize();
    print!("{:<10}", "method");
    for t in TASKS {
        print!("{t:>14}");
    }
    println!();
    for (method, tasks) in &summary {
        print!("{method:<10}");
        for t in TASKS {
            match tasks.get(t).and_then(|m| m.get("mape")) {
                Some(s) => print!("{:>8.5}±{:<5.4}", s.mean, s.sd),
                None => print!("{:>14}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
