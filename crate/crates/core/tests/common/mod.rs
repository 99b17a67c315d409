#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::Instant;

use binsd::acfg::{Arch, AttributedCfg, BasicBlockNode, CompilationTag, FeatureVector, OptLevel};
use binsd::embed::{train_on_corpus, EmbeddingConfig, FunctionEmbedding, ModelParams, TrainHyper};
use binsd::pipeline::embed_corpus;
use binsd::rng::StreamRng;
use binsd::synth::{generate_corpus, split_dataset, CorpusSpec, DatasetSplit, TransformProfile};
use rand::Rng;

/// Weakly connected random graph: a random tree plus up to `n` extra edges.
pub fn random_graph(rng: &mut StreamRng, n: usize, d_feat: usize, source: &str) -> AttributedCfg {
    let mut edges = BTreeSet::new();
    for i in 1..n {
        edges.insert((rng.gen_range(0..i), i));
    }
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.insert((a, b));
        }
    }
    AttributedCfg {
        function_name: format!("f_{source}"),
        source_id: source.to_string(),
        compilation: CompilationTag::new(Arch::X64, OptLevel::O0, "gcc"),
        nodes: (0..n)
            .map(|i| BasicBlockNode {
                node_id: i,
                features: FeatureVector((0..d_feat).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            })
            .collect(),
        edges: edges.into_iter().collect(),
    }
}

/// A trained model plus the corpus it was trained on.
pub struct Desk {
    pub spec: CorpusSpec,
    pub split: DatasetSplit,
    pub cfg: EmbeddingConfig,
    pub params: ModelParams,
    pub train_seconds: f64,
}

impl Desk {
    fn build(profile: TransformProfile, seed: u64, epochs: usize) -> Desk {
        let mut spec = CorpusSpec::new(200, 4, seed);
        spec.transform_profile = profile;
        let corpus = generate_corpus(&spec).unwrap();
        let split = split_dataset(&corpus.functions, 0.7, seed).unwrap();
        let cfg = EmbeddingConfig {
            d_feat: spec.d_feat,
            d_embed: 32,
            iterations: 3,
            seed,
            ..EmbeddingConfig::default()
        };
        let hyper = TrainHyper {
            learning_rate: 1e-3,
            epochs,
            batch_size: 32,
            seed,
            threads: 1,
        };
        let t = Instant::now();
        let (params, _) = train_on_corpus(&split.train, &cfg, &hyper).unwrap();
        Desk {
            spec,
            split,
            cfg,
            params,
            train_seconds: t.elapsed().as_secs_f64(),
        }
    }

    /// Validation and test sources, neither seen in training.
    pub fn held_out(&self) -> Vec<AttributedCfg> {
        self.split.validation.iter().chain(&self.split.test).cloned().collect()
    }

    pub fn embed(&self, graphs: &[AttributedCfg]) -> Vec<FunctionEmbedding> {
        embed_corpus(graphs, &self.params, &self.cfg, 0).unwrap()
    }

    /// Functions from `n_sources` sources disjoint from the desk corpus.
    pub fn distractors(&self, n_sources: usize) -> Vec<AttributedCfg> {
        let mut spec = self.spec.clone();
        spec.seed = self.spec.seed.wrapping_add(1000);
        spec.n_sources = n_sources;
        spec.rename_fraction = 0.0;
        let mut out = generate_corpus(&spec).unwrap().functions;
        for g in &mut out {
            g.source_id = format!("dis:{}", g.source_id);
            g.function_name = format!("dis_{}", g.function_name);
        }
        out
    }
}

pub fn easy_desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| Desk::build(TransformProfile::easy(), 11, 5))
}

pub fn hard_desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| Desk::build(TransformProfile::hard(), 21, 8))
}

/// First function of every source, in input order.
pub fn one_per_source(embs: &[FunctionEmbedding]) -> Vec<FunctionEmbedding> {
    let mut seen = BTreeSet::new();
    embs.iter()
        .filter(|e| seen.insert(e.function.source_id.clone()))
        .cloned()
        .collect()
}
