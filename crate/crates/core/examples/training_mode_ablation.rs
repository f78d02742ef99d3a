//! Ablates the training modes on a classification preset.

use duallabel::experiment::{ablation, ExperimentConfig, PresetName, STACKS};

fn main() -> duallabel::Result<()> {
    let mut config = ExperimentConfig::from_preset(PresetName::Tox21);
    config.train.epochs = Some(10);
    config.seeds = vec![0, 1];

    let results = ablation(&config)?;
    for stack in STACKS {
        let f1 = |task| results.summary(stack, task, "f1").map(|s| s.mean).unwrap_or(f64::NAN);
        println!(
            "{stack:<6} single y1 {:.3}  single y2 {:.3}  double y1 {:.3}  double y2 {:.3}",
            f1("Single-y1"),
            f1("Single-y2"),
            f1("Double-y1"),
            f1("Double-y2")
        );
    }
    Ok(())
}
