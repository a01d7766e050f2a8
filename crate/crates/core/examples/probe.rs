//! Scratch probe for training dynamics (not part of the test suite).

use relproto::data::split;
use relproto::evaluation::nearest_prototype_accuracy;
use relproto::training::{pretrain, LossMode, TrainConfig};
use relproto::{generate_synthetic, GeneratorSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let warmup: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);
    let mode: LossMode = args
        .get(4)
        .map(|s| s.parse().unwrap())
        .unwrap_or(LossMode::Combined);

    let data = generate_synthetic(&GeneratorSpec {
        num_relations: 4,
        per_relation: 200,
        noise_rate: 0.0,
        vocab_size: 120,
        templates_per_relation: 3,
        seed: 3,
    })
    .unwrap();
    let (train, _, test) = split(&data, (0.8, 0.0, 0.2), 11).unwrap();
    let config = TrainConfig {
        batch_size: 32,
        epochs,
        learning_rate: lr,
        warmup_steps: warmup,
        token_dim: 16,
        output_dim: 16,
        seed: 13,
        loss_mode: mode,
        ..TrainConfig::default()
    };
    let (ckpt, log) = pretrain(&config, &train).unwrap();
    let steps_per_epoch = log.len() / epochs.max(1);
    for e in 0..epochs {
        let mean: f64 = log[e * steps_per_epoch..(e + 1) * steps_per_epoch]
            .iter()
            .map(|r| r.combined)
            .sum::<f64>()
            / steps_per_epoch as f64;
        println!("epoch {e}: mean loss {mean:.4}");
    }
    let proto_acc = nearest_prototype_accuracy(&ckpt.encoder, &ckpt.prototypes, &test).unwrap();
    let head = relproto::evaluation::eval_supervised(&ckpt.encoder, &ckpt.classifier, &test)
        .map(|r| r.accuracy)
        .unwrap_or(f64::NAN);
    println!("lr {lr} epochs {epochs} warmup {warmup} mode {mode}: proto_acc {proto_acc:.4} head_acc {head:.4}");
    println!(
        "min pairwise prototype angle: {:.1} deg",
        ckpt.prototypes.min_pairwise_angle().to_degrees()
    );
}
