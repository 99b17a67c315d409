//! Train the graph embedder on an easy corpus, save a checkpoint and check
//! that held-out variants of one source now sit closer than other sources.
//!
//!     cargo run --release --example train_siamese

use binsd::embed::{cosine_similarity, load_checkpoint, save_checkpoint, train_on_corpus, EmbeddingConfig, TrainHyper};
use binsd::pipeline::embed_corpus;
use binsd::synth::{generate_corpus, split_dataset, CorpusSpec};

fn main() -> binsd::Result<()> {
    let spec = CorpusSpec::new(120, 4, 3);
    let corpus = generate_corpus(&spec)?;
    let split = split_dataset(&corpus.functions, 0.7, 3)?;
    let cfg = EmbeddingConfig {
        d_feat: spec.d_feat,
        d_embed: 32,
        iterations: 3,
        seed: 3,
        ..EmbeddingConfig::default()
    };
    let hyper = TrainHyper {
        learning_rate: 1e-3,
        epochs: 6,
        seed: 3,
        threads: 1,
        ..TrainHyper::default()
    };
    let (params, log) = train_on_corpus(&split.train, &cfg, &hyper)?;
    println!("initial loss {:.4}", log.initial_loss);
    for (e, l) in log.epoch_losses.iter().enumerate() {
        println!("epoch {:>2}: {l:.4}", e + 1);
    }

    let path = std::env::temp_dir().join("binsd-example-model.json");
    save_checkpoint(&path, &cfg, &params)?;
    let (cfg2, params2) = load_checkpoint(&path)?;
    assert_eq!(cfg2, cfg);
    assert_eq!(params2, params);
    println!("checkpoint round-tripped through {}", path.display());

    let test = embed_corpus(&split.test, &params, &cfg, 0)?;
    let (mut same, mut other, mut ns, mut no) = (0.0, 0.0, 0, 0);
    for (i, a) in test.iter().enumerate() {
        for b in &test[i + 1..] {
            let c = cosine_similarity(&a.vector, &b.vector)?;
            if a.function.source_id == b.function.source_id {
                same += c;
                ns += 1;
            } else {
                other += c;
                no += 1;
            }
        }
    }
    println!(
        "held-out mean cosine: same source {:.3}, different source {:.3}",
        same / ns as f64,
        other / no as f64
    );
    Ok(())
}
