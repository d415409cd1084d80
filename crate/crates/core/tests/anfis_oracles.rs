use chainfis::anfis::{
    build_with_fcm, classify_efficiency, fit_consequents, premise_gradient, rmse,
    select_cluster_count, train_hybrid, EfficiencyClass, FuzzyInferenceModel, FuzzyRule,
    LabeledDataset, MembershipFunction, StopReason, TrainingConfig,
};
use chainfis::fcm::FcmConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(rng: &mut ChaCha8Rng) -> (FuzzyInferenceModel<f64>, LabeledDataset<f64>) {
    let dim = rng.random_range(1..=3);
    let rules = (0..rng.random_range(2..=3))
        .map(|_| FuzzyRule {
            antecedent: (0..dim)
                .map(|_| {
                    MembershipFunction::gaussian(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(0.3..1.5),
                    )
                    .unwrap()
                })
                .collect(),
            consequents: vec![(0..=dim).map(|_| rng.random_range(-2.0..2.0)).collect()],
        })
        .collect();
    let model = FuzzyInferenceModel::new(dim, 1, rules).unwrap();
    let inputs: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let targets = inputs
        .iter()
        .map(|x| vec![x.iter().map(|v| v.sin()).sum::<f64>() + rng.random_range(-0.1..0.1)])
        .collect();
    (model, LabeledDataset::new(inputs, targets).unwrap())
}

fn loss_at(model: &FuzzyInferenceModel<f64>, data: &LabeledDataset<f64>, params: &[f64]) -> f64 {
    let mut m = model.clone();
    m.set_premise_parameters(params).unwrap();
    rmse(&m, data).unwrap()
}

#[test]
fn premise_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (model, data) = random_model(&mut rng);
        let grad = premise_gradient(&model, &data).unwrap();
        let base = model.premise_parameters();
        for (j, &g) in grad.iter().enumerate() {
            let h = 1e-6;
            let mut up = base.clone();
            up[j] += h;
            let mut down = base.clone();
            down[j] -= h;
            let fd = (loss_at(&model, &data, &up) - loss_at(&model, &data, &down)) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {j}: analytic {g} vs fd {fd}");
        }
    }
}

fn line_data() -> LabeledDataset<f64> {
    let inputs: Vec<Vec<f64>> = (0..21).map(|i| vec![i as f64 / 20.0]).collect();
    let targets = inputs.iter().map(|x| vec![2.0 * x[0] + 1.0]).collect();
    LabeledDataset::new(inputs, targets).unwrap()
}

#[test]
fn affine_target_is_fit_exactly() {
    let data = line_data();
    let (model, _) = build_with_fcm(&data, 2, &FcmConfig::default()).unwrap();
    let out = train_hybrid(&model, &data, &data, &TrainingConfig::default()).unwrap();
    assert_eq!(out.stop_reason, StopReason::ErrorGoal);
    assert!(rmse(&out.model, &data).unwrap() < 1e-6);
    let y = out.model.evaluate(&[0.37]).unwrap()[0];
    assert!((y - 1.74).abs() < 1e-6);
}

#[test]
fn frozen_premises_never_raise_train_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (model, data) = random_model(&mut rng);
    let config = TrainingConfig {
        learning_rate: 0.0,
        error_goal: 0.0,
        max_epochs: 15,
        ..TrainingConfig::default()
    };
    let out = train_hybrid(&model, &data, &data, &config).unwrap();
    assert!(out
        .history
        .windows(2)
        .all(|w| w[1].train_rmse <= w[0].train_rmse));
}

#[test]
fn gradient_steps_never_raise_train_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let (model, data) = random_model(&mut rng);
        let config = TrainingConfig {
            error_goal: 0.0,
            max_epochs: 25,
            ..TrainingConfig::default()
        };
        let out = train_hybrid(&model, &data, &data, &config).unwrap();
        assert!(out
            .history
            .windows(2)
            .all(|w| w[1].train_rmse <= w[0].train_rmse));
    }
}

#[test]
fn consequent_fit_is_least_squares() {
    // One rule: the model is a plain affine regression, so LS has a closed form.
    let inputs: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
    let targets = vec![vec![1.0], vec![2.0], vec![2.0], vec![5.0]];
    let data = LabeledDataset::new(inputs, targets).unwrap();
    let rule = FuzzyRule {
        antecedent: vec![MembershipFunction::gaussian(1.5, 2.0).unwrap()],
        consequents: vec![vec![0.0, 0.0]],
    };
    let mut model = FuzzyInferenceModel::new(1, 1, vec![rule]).unwrap();
    fit_consequents(&mut model, &data).unwrap();
    // slope = Sxy / Sxx = 6 / 5, intercept = 2.5 - 1.2 * 1.5
    let c = &model.rules()[0].consequents[0];
    assert!((c[0] - 1.2).abs() < 1e-12 && (c[1] - 0.7).abs() < 1e-12);
}

#[test]
fn cluster_count_selection_is_deterministic() {
    let data = line_data();
    let config = TrainingConfig {
        max_epochs: 5,
        ..TrainingConfig::default()
    };
    let a = select_cluster_count(&data, 3, &config).unwrap();
    let b = select_cluster_count(&data, 3, &config).unwrap();
    assert_eq!(a, b);
    assert!((2..=3).contains(&a.best));
}

#[test]
fn class_encodings() {
    for (label, code) in [
        ("Perfect", [1, 0, 0, 0]),
        ("Good", [0, 1, 0, 0]),
        ("Medium", [0, 0, 1, 0]),
    ] {
        let class = EfficiencyClass::from_label(label).unwrap();
        assert_eq!(class.one_hot(), code);
        let mut scores = [0.1; 4];
        scores[class.index()] = 0.9;
        assert_eq!(classify_efficiency(&scores), (code, class));
    }
}

#[test]
fn single_precision_model() {
    let inputs: Vec<Vec<f32>> = (0..11).map(|i| vec![i as f32 / 10.0]).collect();
    let targets = inputs.iter().map(|x| vec![3.0 * x[0] - 1.0]).collect();
    let data = LabeledDataset::new(inputs, targets).unwrap();
    let (model, _) = build_with_fcm(&data, 2, &FcmConfig::default()).unwrap();
    let out = train_hybrid(&model, &data, &data, &TrainingConfig::default()).unwrap();
    assert!(rmse(&out.model, &data).unwrap() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn text_round_trip_is_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, _) = random_model(&mut rng);
        let text = model.to_text();
        let back = FuzzyInferenceModel::<f64>::from_text(&text).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn normalized_strengths_sum_to_one(seed in any::<u64>(), x in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (model, _) = random_model(&mut rng);
        let input = vec![x; model.input_dim()];
        let (w, firing) = model.normalized_strengths(&input).unwrap();
        prop_assert!(firing);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
