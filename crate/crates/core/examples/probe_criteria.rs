//! Scratch probe for the noise-robustness and zero-shot comparisons.

use relproto::data::split;
use relproto::evaluation::episodes::eval_fewshot;
use relproto::evaluation::fuzzy::{eval_fuzzy, FuzzyConfig};
use relproto::inject_label_noise;
use relproto::training::{pretrain, LossMode, TrainConfig};
use relproto::{generate_synthetic, EncoderModel, EncoderSpec, GeneratorSpec};

fn noise_robustness() {
    println!("== noise robustness: combined vs ce at 30% label noise ==");
    let mut combined_wins = 0;
    for seed in 0..5u64 {
        let data = generate_synthetic(&GeneratorSpec {
            num_relations: 5,
            per_relation: 200,
            noise_rate: 0.0,
            vocab_size: 120,
            templates_per_relation: 3,
            seed: 100 + seed,
        })
        .unwrap();
        let (train, _, test) = split(&data, (0.8, 0.0, 0.2), seed).unwrap();
        let noisy = inject_label_noise(&train, 0.3, 200 + seed).unwrap();
        let mut accs = Vec::new();
        for mode in [LossMode::Combined, LossMode::CeOnly] {
            let config = TrainConfig {
                batch_size: 32,
                epochs: 5,
                token_dim: 16,
                output_dim: 16,
                seed,
                loss_mode: mode,
                ..TrainConfig::default()
            };
            let (ckpt, _) = pretrain(&config, &noisy).unwrap();
            let report = eval_fewshot(&ckpt.encoder, &test, 5, 1, 1000, 42).unwrap();
            accs.push(report.mean_accuracy);
        }
        println!(
            "seed {seed}: combined {:.4} ce {:.4} diff {:+.4}",
            accs[0],
            accs[1],
            accs[0] - accs[1]
        );
        if accs[0] > accs[1] {
            combined_wins += 1;
        }
    }
    println!("combined wins {combined_wins}/5");
}

fn zero_shot() {
    println!("== zero-shot: pretrain on 4 relations, eval 3-way on 3 held-out ==");
    let data = generate_synthetic(&GeneratorSpec {
        num_relations: 7,
        per_relation: 100,
        noise_rate: 0.0,
        vocab_size: 210,
        templates_per_relation: 3,
        seed: 17,
    })
    .unwrap();
    let train = data.filter_relations(&[0, 1, 2, 3]).unwrap();
    let heldout = data.filter_relations(&[4, 5, 6]).unwrap();
    let config = TrainConfig {
        batch_size: 32,
        epochs: 5,
        token_dim: 16,
        output_dim: 16,
        seed: 3,
        ..TrainConfig::default()
    };
    let (ckpt, _) = pretrain(&config, &train).unwrap();
    let trained = eval_fewshot(&ckpt.encoder, &heldout, 3, 1, 1000, 5).unwrap();

    let spec = EncoderSpec::with_markers_appended(data.token_vocab.len(), 16, 16, 1.0);
    let untrained_model = EncoderModel::init(spec, 3).unwrap();
    let untrained = eval_fewshot(&untrained_model, &heldout, 3, 1, 1000, 5).unwrap();
    println!(
        "trained {:.4} untrained {:.4} gap {:+.4}",
        trained.mean_accuracy,
        untrained.mean_accuracy,
        trained.mean_accuracy - untrained.mean_accuracy
    );
}

fn fuzzy() {
    println!("== fuzzy: combined encoder vs DS baseline at 54% FPs ==");
    let data = generate_synthetic(&GeneratorSpec {
        num_relations: 20,
        per_relation: 50,
        noise_rate: 0.54,
        vocab_size: 400,
        templates_per_relation: 3,
        seed: 29,
    })
    .unwrap();
    let config = TrainConfig {
        batch_size: 40,
        epochs: 5,
        token_dim: 16,
        output_dim: 16,
        seed: 7,
        ..TrainConfig::default()
    };
    let (ckpt, _) = pretrain(&config, &data).unwrap();
    for k in [1usize, 3, 5] {
        let report = eval_fuzzy(&ckpt.encoder, &data, &FuzzyConfig::new(k), 11).unwrap();
        println!(
            "k={k}: majority {:.4} resample {:.4} ds {:.4}",
            report.majority_accuracy, report.resample_accuracy, report.ds_baseline
        );
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".to_string());
    match which.as_str() {
        "noise" => noise_robustness(),
        "zero" => zero_shot(),
        "fuzzy" => fuzzy(),
        _ => {
            zero_shot();
            fuzzy();
            noise_robustness();
        }
    }
}
