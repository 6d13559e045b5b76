use ddsrank_core::data::{generate_synthetic, split_by_time, SplitCounts, SyntheticSpec};
use ddsrank_core::metrics::evaluate;
use ddsrank_core::model::{Model, ModelConfig, Variant};
use ddsrank_core::train::{train, TrainConfig};
use ddsrank_core::Error;

fn tiny_data() -> ddsrank_core::data::Splits {
    let spec = SyntheticSpec {
        sessions_per_domain: vec![
            SplitCounts {
                train: 200,
                valid: 40,
                test: 40,
            };
            2
        ],
        min_list_length: 8,
        max_list_length: 24,
        feature_dim: 6,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    split_by_time(data.sessions, data.train_end, data.valid_end).unwrap()
}

fn small_model(variant: Variant, seed: u64) -> Model {
    let cfg = ModelConfig {
        variant,
        feature_dim: 8,
        trunk_hidden: vec![16, 8],
        token_dim: 8,
        ffn_dim: 16,
        final_hidden: vec![8],
        classifier_hidden: vec![8],
        ..ModelConfig::default()
    };
    Model::build(cfg, seed).unwrap()
}

fn quick(lr: f64) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 16,
        learning_rate: lr,
        eval_every: 10,
        seed: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_keeps_the_initial_model() {
    let s = tiny_data();
    let m = small_model(Variant::Dds, 2);
    let out = train(m.clone(), &s.train, &s.valid, &quick(0.0)).unwrap();
    assert_eq!(out.best, m);
    assert_eq!(out.best_step, 0);
    assert!(out
        .history
        .iter()
        .all(|h| h.valid_ndcg.is_none_or(|v| v == out.best_valid_ndcg)));
}

#[test]
fn training_is_bitwise_reproducible() {
    let s = tiny_data();
    let run = || train(small_model(Variant::Dda, 3), &s.train, &s.valid, &quick(3e-3)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.best.save(), b.best.save());
    assert_eq!(a.history, b.history);
    assert_eq!(a.steps, 3 * 400usize.div_ceil(16));
}

#[test]
fn training_improves_validation_ndcg() {
    let s = tiny_data();
    let m = small_model(Variant::Baseline, 4);
    let before = evaluate(&m, &s.valid, 16).unwrap().overall.unwrap().ndcg;
    let out = train(m, &s.train, &s.valid, &quick(3e-3)).unwrap();
    assert!(out.best_valid_ndcg > before, "{before} -> {}", out.best_valid_ndcg);
    assert_eq!(out.history[0].valid_ndcg, Some(before));
    let losses: Vec<f64> = out.history.iter().filter_map(|h| h.total_loss).collect();
    let head: f64 = losses[..10].iter().sum();
    let tail: f64 = losses[losses.len() - 10..].iter().sum();
    assert!(tail < head);
}

#[test]
fn exploding_updates_are_reported_as_divergence() {
    let s = tiny_data();
    let cfg = TrainConfig {
        learning_rate: 1e300,
        eval_every: 1,
        ..quick(0.0)
    };
    let err = train(small_model(Variant::Baseline, 5), &s.train, &s.valid, &cfg).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
}

#[test]
fn invalid_settings_are_rejected() {
    let s = tiny_data();
    let m = small_model(Variant::Baseline, 6);
    for cfg in [
        TrainConfig {
            batch_size: 0,
            ..quick(1e-3)
        },
        TrainConfig { k: 0, ..quick(1e-3) },
        TrainConfig {
            learning_rate: -1.0,
            ..quick(1e-3)
        },
        TrainConfig {
            beta2: 1.0,
            ..quick(1e-3)
        },
    ] {
        assert!(matches!(
            train(m.clone(), &s.train, &s.valid, &cfg),
            Err(Error::Config(_))
        ));
    }
    assert!(train(m.clone(), &[], &s.valid, &quick(1e-3)).is_err());
    assert!(train(m, &s.train, &[], &quick(1e-3)).is_err());
}
