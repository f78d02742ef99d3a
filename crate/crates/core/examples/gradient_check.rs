//! Finite-difference check of the dual-tower losses on a small batch.

use duallabel::datahub::{gen_synthetic_classification, mask_labels};
use duallabel::diffcore::{check_gradients, Graph};
use duallabel::dualtower::{DualTower, DualTowerParams, ModelConfig};
use duallabel::training::{impute_missing, BatchContext, LossWeights};

fn main() -> duallabel::Result<()> {
    let raw = gen_synthetic_classification(8, 3, 1)?.samples;
    let data = mask_labels(&raw, 0.4, 0.4, 2)?;
    let model = DualTower::new(ModelConfig {
        task: duallabel::datahub::TaskKind::BinaryClassification,
        encoder_widths: vec![3, 5, 4],
        embedding_widths: vec![1, 2],
        tower_widths: vec![6, 4, 1],
        seed: 3,
    })?;
    let params = model.init_params()?;
    let batch: Vec<_> = data.iter().filter(|s| s.y1.is_some() || s.y2.is_some()).collect();
    let imputed = impute_missing(&model, &params, &batch)?;

    let groups = params.groups().map(|g| g.clone());
    let report = check_gradients(&groups, 1e-6, |g, gs| {
        let p = DualTowerParams {
            theta0: gs[0].clone(),
            theta1: gs[1].clone(),
            theta2: gs[2].clone(),
        };
        let mut ctx = BatchContext::on_graph(std::mem::replace(g, Graph::new()), &model, &p, imputed.clone(), None)?;
        let l = ctx.all_losses(&LossWeights::uniform(1.0), None)?;
        let mut total = l.s1;
        for v in [l.s2, l.r1, l.r2, l.d] {
            total = ctx.graph.add(total, v)?;
        }
        *g = ctx.into_graph();
        Ok(total)
    })?;
    println!("checked {} entries, max relative error {:.2e}", report.checked, report.max_rel_error);
    if let Some((group, key, i, a, n)) = &report.worst {
        println!("worst: {group}/{key}[{i}] analytic {a:.6e} numeric {n:.6e}");
    }
    Ok(())
}
