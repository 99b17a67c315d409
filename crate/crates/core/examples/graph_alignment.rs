//! Plant decoys that embed almost exactly like the queries but share no
//! basic block with them, then let identical-block alignment weed them out.
//!
//!     cargo run --release --example graph_alignment

use binsd::align::{evaluate_filter_effect, AlignConfig, GraphIndex};
use binsd::embed::{train_on_corpus, EmbeddingConfig, TrainHyper};
use binsd::pipeline::{embed_corpus, filtered_search};
use binsd::search::{GroundTruthPolicy, Repository};
use binsd::synth::{generate_corpus, plant_collision, split_dataset, CorpusSpec, TransformProfile};

fn main() -> binsd::Result<()> {
    let mut spec = CorpusSpec::new(80, 4, 12);
    spec.transform_profile = TransformProfile::zero_jitter();
    let corpus = generate_corpus(&spec)?.functions;
    let split = split_dataset(&corpus, 0.6, 12)?;
    let cfg = EmbeddingConfig {
        d_feat: spec.d_feat,
        d_embed: 32,
        iterations: 3,
        ..EmbeddingConfig::default()
    };
    let hyper = TrainHyper {
        learning_rate: 1e-3,
        epochs: 5,
        ..TrainHyper::default()
    };
    let (params, _) = train_on_corpus(&split.train, &cfg, &hyper)?;

    let queries: Vec<_> = split.test.iter().step_by(spec.variants_per_source).cloned().collect();
    let mut graphs = corpus.clone();
    graphs.extend(
        queries
            .iter()
            .enumerate()
            .map(|(i, q)| plant_collision(q, &format!("decoy{i}"), 0.02)),
    );
    let repo = Repository::from_entries(embed_corpus(&graphs, &params, &cfg, 0)?)?;
    let q_emb = embed_corpus(&queries, &params, &cfg, 0)?;
    let index = GraphIndex::new(&graphs);

    for alpha in [0.0, 0.05, 0.2] {
        let align = AlignConfig { alpha, ..AlignConfig::default() };
        let (before, after) = filtered_search(&repo, &q_emb, &index, &align, 5, GroundTruthPolicy::BySource, 0)?;
        let fx = evaluate_filter_effect(&before, &after, 5)?;
        println!(
            "alpha {alpha:<4}: precision@5 {:.3} -> {:.3}, recall@5 {:.3} -> {:.3}",
            fx.precision_before, fx.precision_after, fx.recall_before, fx.recall_after
        );
    }
    Ok(())
}
