//! Trains the dual-tower model on partially labeled regression data.

use duallabel::datahub::{gen_synthetic_regression, mask_labels, MinMaxScaler, TaskKind};
use duallabel::dualtower::{DualTower, ModelConfig};
use duallabel::training::{train, LossWeights, TrainConfig};

fn main() -> duallabel::Result<()> {
    let raw = gen_synthetic_regression(500, 6, 0)?.samples;
    let data = mask_labels(&MinMaxScaler::fit(&raw).transform(&raw), 0.3, 0.3, 1)?;

    let model = DualTower::new(ModelConfig::with_defaults(TaskKind::Regression, 6, 2))?;
    let mut params = model.init_params()?;
    let config = TrainConfig {
        epochs: 30,
        batch_size: 4,
        learning_rate: 0.05,
        weights: LossWeights::uniform(1.0),
        class_weights: None,
        marginal_subset: Default::default(),
        seed: 3,
    };
    let history = train(&model, &data, &mut params, None, &config)?;
    for e in history.epochs.iter().step_by(5) {
        println!(
            "epoch {:>3}  s1 {:.5}  s2 {:.5}  r1 {:.5}  r2 {:.5}  total {:.5}",
            e.epoch, e.s1, e.s2, e.r1, e.r2, e.total()
        );
    }

    let x = &data[0].x;
    let y2 = model.f_forward(&params, x, 0.5)?;
    let y1 = model.g_forward(&params, x, y2)?;
    println!("f(x, 0.5) = {y2:.4}, g(x, f(x, 0.5)) = {y1:.4}");
    Ok(())
}
