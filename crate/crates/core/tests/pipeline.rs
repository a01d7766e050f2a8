//! End-to-end pipeline checks: generate data, pretrain, evaluate.

use relproto::data::split;
use relproto::evaluation::nearest_prototype_accuracy;
use relproto::training::{pretrain, LossMode, TrainConfig};
use relproto::{generate_synthetic, GeneratorSpec};

fn clean_spec(relations: usize, per_relation: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        num_relations: relations,
        per_relation,
        noise_rate: 0.0,
        vocab_size: 120,
        templates_per_relation: 3,
        seed,
    }
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        epochs: 3,
        output_dim: 8,
        token_dim: 8,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_return_the_initialization() {
    let data = generate_synthetic(&clean_spec(3, 20, 1)).unwrap();
    let mut config = small_config(5);
    config.epochs = 0;
    let (ckpt, log) = pretrain(&config, &data).unwrap();
    assert!(log.is_empty());
    assert_eq!(ckpt.step, 0);
    // Identical to a second zero-epoch run.
    let (again, _) = pretrain(&config, &data).unwrap();
    assert_eq!(ckpt, again);
}

#[test]
fn training_is_bitwise_reproducible() {
    let data = generate_synthetic(&clean_spec(3, 30, 2)).unwrap();
    let config = small_config(7);
    let (a, log_a) = pretrain(&config, &data).unwrap();
    let (b, log_b) = pretrain(&config, &data).unwrap();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    for (x, y) in a.encoder.embed.iter().zip(&b.encoder.embed) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn combined_loss_decreases_and_separates() {
    let data = generate_synthetic(&clean_spec(4, 100, 3)).unwrap();
    let (train, _, test) = split(&data, (0.8, 0.0, 0.2), 11).unwrap();
    let config = TrainConfig {
        batch_size: 32,
        epochs: 5,
        token_dim: 16,
        output_dim: 16,
        seed: 13,
        ..TrainConfig::default()
    };
    let (ckpt, log) = pretrain(&config, &train).unwrap();
    assert!(log.iter().all(|row| row.combined.is_finite()));

    let steps_per_epoch = log.len() / config.epochs;
    let first_epoch: f64 = log[..steps_per_epoch]
        .iter()
        .map(|r| r.combined)
        .sum::<f64>()
        / steps_per_epoch as f64;
    let last_epoch: f64 = log[log.len() - steps_per_epoch..]
        .iter()
        .map(|r| r.combined)
        .sum::<f64>()
        / steps_per_epoch as f64;
    assert!(
        last_epoch < first_epoch,
        "mean loss went {first_epoch} -> {last_epoch}"
    );

    let accuracy = nearest_prototype_accuracy(&ckpt.encoder, &ckpt.prototypes, &test).unwrap();
    assert!(accuracy >= 0.95, "held-out accuracy {accuracy}");
}

#[test]
fn ce_mode_trains_a_usable_classifier_head() {
    let data = generate_synthetic(&clean_spec(4, 100, 3)).unwrap();
    let (train, _, test) = split(&data, (0.8, 0.0, 0.2), 11).unwrap();
    let config = TrainConfig {
        batch_size: 32,
        epochs: 5,
        token_dim: 16,
        output_dim: 16,
        seed: 13,
        loss_mode: LossMode::CeOnly,
        ..TrainConfig::default()
    };
    let (ckpt, _) = pretrain(&config, &train).unwrap();
    let report =
        relproto::evaluation::eval_supervised(&ckpt.encoder, &ckpt.classifier, &test).unwrap();
    assert!(report.accuracy >= 0.95, "held-out accuracy {}", report.accuracy);
}

#[test]
fn every_mode_runs_and_stays_finite() {
    let data = generate_synthetic(&clean_spec(3, 24, 9)).unwrap();
    for mode in [
        LossMode::Combined,
        LossMode::S2sOnly,
        LossMode::CeOnly,
        LossMode::Ind,
        LossMode::ZCls,
        LossMode::S2sLogZCls,
    ] {
        let config = TrainConfig {
            batch_size: 12,
            epochs: 2,
            token_dim: 6,
            output_dim: 6,
            loss_mode: mode,
            seed: 21,
            ..TrainConfig::default()
        };
        let (ckpt, log) = pretrain(&config, &data).unwrap();
        assert!(ckpt.encoder.is_finite(), "mode {mode:?}");
        assert!(log.iter().all(|r| r.combined.is_finite()), "mode {mode:?}");
    }
}

#[test]
fn checkpoints_round_trip_through_disk() {
    let data = generate_synthetic(&clean_spec(3, 20, 4)).unwrap();
    let (ckpt, _) = pretrain(&small_config(3), &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    ckpt.save(&path).unwrap();
    let loaded = relproto::training::Checkpoint::load(&path).unwrap();
    assert_eq!(ckpt, loaded);
}
