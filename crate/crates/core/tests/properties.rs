use duallabel::datahub::{
    gen_synthetic_classification, gen_synthetic_regression, load_csv, mask_labels, partition,
    presence_indicator, write_csv, MinMaxScaler, PresenceMask, Sample, TaskKind,
};
use duallabel::diffcore::{Activation, Graph, MlpSpec, ParamGroup, Tensor};
use duallabel::dualtower::{DualTower, ModelConfig, Tower, THETA0, THETA1, THETA2};
use duallabel::evalkit::{classification_metrics, empirical_risk, mape, spearman, RiskWeights};
use duallabel::inference::{alternate_infer, alternate_with, InferenceConfig};
use duallabel::rng::seeded;
use duallabel::training::{impute_missing, BatchContext, LossWeights};
use proptest::prelude::*;

fn small_model(task: TaskKind, d: usize, seed: u64) -> DualTower {
    DualTower::new(ModelConfig {
        task,
        encoder_widths: vec![d, 6, 4],
        embedding_widths: vec![1, 3],
        tower_widths: vec![7, 5, 1],
        seed,
    })
    .unwrap()
}

fn mixed(task: TaskKind, n: usize, seed: u64, r1: f64, r2: f64) -> Vec<Sample> {
    let data = match task {
        TaskKind::Regression => gen_synthetic_regression(n, 3, seed).unwrap().samples,
        TaskKind::BinaryClassification => gen_synthetic_classification(n, 3, seed).unwrap().samples,
    };
    mask_labels(&data, r1, r2, seed ^ 0x55).unwrap()
}

fn task_strategy() -> impl Strategy<Value = TaskKind> {
    prop_oneof![Just(TaskKind::Regression), Just(TaskKind::BinaryClassification)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn partition_of_masked_data_covers_every_sample(n in 1usize..200, r1 in 0.0..=1.0f64, r2 in 0.0..=1.0f64, seed: u64) {
        let data = gen_synthetic_regression(n, 2, seed).unwrap().samples;
        let masked = mask_labels(&data, r1, r2, seed).unwrap();
        let split = partition(&masked);
        prop_assert_eq!(split.total(), n);
        for &i in &split.only_y1 {
            prop_assert_eq!(presence_indicator(&masked[i]), PresenceMask::ONLY_Y1);
        }
        for (i, s) in masked.iter().enumerate() {
            if presence_indicator(s) == PresenceMask::ONLY_Y1 {
                prop_assert!(split.only_y1.contains(&i));
            }
            prop_assert!(s.y1.is_none() || s.y1 == data[i].y1);
            prop_assert!(s.y2.is_none() || s.y2 == data[i].y2);
        }
    }

    #[test]
    fn csv_round_trip_is_exact(n in 1usize..30, seed: u64, r in 0.0..0.9f64) {
        let data = mixed(TaskKind::Regression, n, seed, r, r);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&path, &data).unwrap();
        prop_assert_eq!(load_csv(&path, TaskKind::Regression).unwrap(), data);
    }

    #[test]
    fn scaled_training_features_lie_in_unit_box(n in 2usize..50, seed: u64) {
        let data = gen_synthetic_classification(n, 4, seed).unwrap().samples;
        let scaled = MinMaxScaler::fit(&data).transform(&data);
        for s in &scaled {
            prop_assert!(s.x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn mlp_is_deterministic_and_softmax_normalized(seed: u64, x in prop::collection::vec(-3.0..3.0f64, 4)) {
        let spec = MlpSpec::new(vec![4, 6, 3], Activation::Tanh, Activation::Softmax).unwrap();
        let mut p = ParamGroup::new("m");
        spec.init_params(&mut p, "net", &mut seeded(seed)).unwrap();
        let a = spec.eval(&p, "net", &x).unwrap();
        let b = spec.eval(&p, "net", &x).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(a.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn backward_leaves_parameters_untouched(seed: u64) {
        let spec = MlpSpec::new(vec![3, 4, 1], Activation::Relu, Activation::Sigmoid).unwrap();
        let mut p = ParamGroup::new("m");
        spec.init_params(&mut p, "net", &mut seeded(seed)).unwrap();
        let before = p.clone();
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -1.0, 0.5, 2.0]).unwrap());
        let out = spec.forward(&mut g, &p, "net", x).unwrap();
        let l = g.sum(out);
        g.backward(l).unwrap();
        prop_assert_eq!(p, before);
    }

    #[test]
    fn losses_route_only_to_their_groups(task in task_strategy(), seed in 0u64..1000) {
        let model = small_model(task, 3, seed);
        let params = model.init_params().unwrap();
        let data = mixed(task, 12, seed, 0.4, 0.4);
        let refs: Vec<&Sample> = data.iter().filter(|s| s.y1.is_some() || s.y2.is_some()).collect();
        let imputed = impute_missing(&model, &params, &refs).unwrap();
        let allowed: [(&str, &[&str]); 4] = [
            ("s1", &[THETA0, THETA1]),
            ("s2", &[THETA0, THETA2]),
            ("r1", &[THETA0, THETA1]),
            ("r2", &[THETA0, THETA2]),
        ];
        for (term, groups) in allowed {
            let mut ctx = BatchContext::new(&model, &params, imputed.clone(), None).unwrap();
            let l = ctx.all_losses(&LossWeights::uniform(1.0), None).unwrap();
            let v = match term { "s1" => l.s1, "s2" => l.s2, "r1" => l.r1, _ => l.r2 };
            prop_assert!(ctx.value(v) >= 0.0);
            let grads = ctx.graph.backward(v).unwrap();
            for (g, _) in grads.nonzero_keys() {
                prop_assert!(groups.contains(&g.as_str()), "{} reached {}", term, g);
            }
        }
    }

    #[test]
    fn towers_depend_on_disjoint_groups(seed: u64, label in -2.0..2.0f64) {
        let model = small_model(TaskKind::Regression, 3, seed);
        let params = model.init_params().unwrap();
        let x = [0.3, -0.2, 0.8];
        for (tower, foreign) in [(Tower::Two, THETA1), (Tower::One, THETA2)] {
            let (mut g, out) = model.record_single(&params, tower, &x, label).unwrap();
            let l = g.sum(out);
            let grads = g.backward(l).unwrap();
            let keys = grads.nonzero_keys();
            prop_assert!(keys.iter().all(|(grp, _)| grp != foreign));
        }
    }

    #[test]
    fn contraction_converges_geometrically(a in -0.9..0.9f64, b in -0.9..0.9f64, c in -1.0..1.0f64, e in -1.0..1.0f64, y0 in -2.0..2.0f64) {
        let lip = (a * b).abs();
        // fixed point of y1 = b (a y1 + c) + e
        let y1_star = (b * c + e) / (1.0 - a * b);
        let cfg = InferenceConfig { y0, max_iterations: 30, epsilon: None };
        let (y1, y2, t) = alternate_with(|y| Ok(a * y + c), |y| Ok(b * y + e), &cfg).unwrap();
        let mut prev = (y0 - y1_star).abs();
        for &(v, _) in &t.iterates {
            let err = (v - y1_star).abs();
            if prev > 1e-12 {
                prop_assert!(err <= prev * lip * (1.0 + 1e-6) + 1e-12, "ratio {} > {}", err / prev, lip);
            }
            prev = err;
        }
        prop_assert_eq!(y1, b * y2 + e);
        let before = t.iterates[t.iterates.len() - 2];
        prop_assert_eq!(y2, a * before.0 + c);
    }

    #[test]
    fn relay_stays_in_unit_interval_and_is_reproducible(seed in 0u64..500) {
        let model = small_model(TaskKind::BinaryClassification, 3, seed);
        let params = model.init_params().unwrap();
        let s = Sample::new(vec![0.5, 0.1, 0.9], None, None);
        let cfg = InferenceConfig { y0: 0.5, max_iterations: 25, epsilon: Some(1e-9) };
        let r = alternate_infer(&model, &params, &s, &cfg).unwrap();
        prop_assert!(r.trace.iterates.iter().all(|(a, b)| (0.0..=1.0).contains(a) && (0.0..=1.0).contains(b)));
        prop_assert_eq!(alternate_infer(&model, &params, &s, &cfg).unwrap(), r);
    }

    #[test]
    fn metrics_ignore_sample_order(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..40), rot in 0usize..40) {
        let p: Vec<f64> = pairs.iter().map(|x| x.0 as f64).collect();
        let t: Vec<f64> = pairs.iter().map(|x| x.1 as f64).collect();
        let k = rot % p.len();
        let (mut p2, mut t2) = (p.clone(), t.clone());
        p2.rotate_left(k);
        t2.rotate_left(k);
        let m = classification_metrics(&p, &t).unwrap();
        prop_assert_eq!(m, classification_metrics(&p2, &t2).unwrap());
        if m.precision + m.recall > 0.0 {
            prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-15);
        }
    }

    #[test]
    fn mape_is_permutation_and_scale_invariant(pairs in prop::collection::vec((0.1..10.0f64, 0.1..10.0f64), 1..30), c in 0.1..10.0f64) {
        let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
        let t: Vec<f64> = pairs.iter().map(|x| x.1).collect();
        let base = mape(&p, &t).unwrap();
        let (pr, tr): (Vec<f64>, Vec<f64>) = p.iter().rev().zip(t.iter().rev()).map(|(a, b)| (*a, *b)).unzip();
        prop_assert!((mape(&pr, &tr).unwrap() - base).abs() < 1e-12);
        let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
        let ts: Vec<f64> = t.iter().map(|v| v * c).collect();
        prop_assert!((mape(&ps, &ts).unwrap() - base).abs() < 1e-12);
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn spearman_is_bounded(v in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..30)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        if let Some(r) = spearman(&a, &b) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn empirical_risk_is_linear_in_alpha(seed in 0u64..300, t in 0.0..=1.0f64, i in 0usize..4, j in 0usize..4) {
        let model = small_model(TaskKind::BinaryClassification, 3, seed);
        let params = model.init_params().unwrap();
        let data = mixed(TaskKind::BinaryClassification, 20, seed, 0.3, 0.3);
        let risk = |alpha: [f64; 4]| {
            empirical_risk(
                TaskKind::BinaryClassification,
                |x: &[f64], y1: f64| model.f_forward(&params, x, y1),
                |x: &[f64], y2: f64| model.g_forward(&params, x, y2),
                &data,
                &RiskWeights::new(alpha).unwrap(),
            )
            .unwrap()
        };
        let mut a = [0.0; 4];
        a[i] = 1.0;
        let mut b = [0.0; 4];
        b[j] = 1.0;
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let (ra, rb) = (risk(a), risk(b));
        let rm = risk([mix[0], mix[1], mix[2], mix[3]]);
        prop_assert!((rm - (t * ra + (1.0 - t) * rb)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&rm));
    }
}

#[test]
fn shared_encoder_feeds_both_towers() {
    let model = DualTower::new(ModelConfig::with_defaults(TaskKind::Regression, 3, 7)).unwrap();
    let params = model.init_params().unwrap();
    let x = [0.3, 0.6, 0.9];
    let mut bumped = params.clone();
    for (_, t) in bumped.theta0.iter_mut() {
        t.values_mut().iter_mut().for_each(|v| *v += 0.05);
    }
    assert_ne!(model.f_forward(&params, &x, 0.4).unwrap(), model.f_forward(&bumped, &x, 0.4).unwrap());
    assert_ne!(model.g_forward(&params, &x, 0.4).unwrap(), model.g_forward(&bumped, &x, 0.4).unwrap());
}
