//! End-to-end experiment glue: generate, split, train, embed, build a
//! repository, search and score.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acfg::{AttributedCfg, Corpus, FunctionRef};
use crate::align::{filter_batch, AlignConfig, GraphIndex};
use crate::collision::CollisionThresholds;
use crate::embed::{
    cosine_similarity, embed_function, train_on_corpus, EmbeddingConfig, FunctionEmbedding, Label,
    ModelParams, TrainHyper, TrainingLog,
};
use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::metrics::{aggregate_report, ranking_metrics, roc_curve, MetricReport, PairScoreSet, RankingMetrics};
use crate::report::Timings;
use crate::rng;
use crate::search::{build_repository, query_batch, query_with_fallback, GroundTruthPolicy, Protocol, RankedList, Repository};
use crate::synth::{generate_corpus, split_dataset, CorpusSpec, DatasetSplit};

pub fn embed_corpus(
    graphs: &[AttributedCfg],
    params: &ModelParams,
    cfg: &EmbeddingConfig,
    threads: usize,
) -> Result<Vec<FunctionEmbedding>> {
    map_ordered(graphs, threads, |g| embed_function(g, params, cfg).map(|(e, _)| e))
        .into_iter()
        .collect()
}

/// Up to `n` items drawn without replacement, kept in input order. `n = 0`
/// takes everything.
pub fn sample_in_order<T: Clone>(items: &[T], n: usize, seed: u64, domain: &str) -> Vec<T> {
    if n == 0 || n >= items.len() {
        return items.to_vec();
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut rng::stream(seed, domain, 0));
    let mut chosen = idx[..n].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| items[i].clone()).collect()
}

/// Alternating positive/negative pairs: a random function with a random
/// co-source variant, or with a function from another source.
pub fn sample_eval_pairs(embeddings: &[FunctionEmbedding], n_pairs: usize, seed: u64) -> Result<PairScoreSet> {
    let mut by_source: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in embeddings.iter().enumerate() {
        by_source.entry(&e.function.source_id).or_default().push(i);
    }
    let multi: Vec<usize> = (0..embeddings.len())
        .filter(|&i| by_source[embeddings[i].function.source_id.as_str()].len() > 1)
        .collect();
    if multi.is_empty() || by_source.len() < 2 {
        return Err(Error::invalid("pair sampling needs two sources and a source with variants"));
    }
    let mut r = rng::stream(seed, "eval-pairs", 0);
    let mut items = Vec::with_capacity(n_pairs);
    for p in 0..n_pairs {
        let (a, b, label) = if p % 2 == 0 {
            let a = multi[r.gen_range(0..multi.len())];
            let sibs = &by_source[embeddings[a].function.source_id.as_str()];
            let mut b = a;
            while b == a {
                b = sibs[r.gen_range(0..sibs.len())];
            }
            (a, b, Label::Similar)
        } else {
            let a = r.gen_range(0..embeddings.len());
            let mut b = a;
            while embeddings[b].function.source_id == embeddings[a].function.source_id {
                b = r.gen_range(0..embeddings.len());
            }
            (a, b, Label::Dissimilar)
        };
        let score = cosine_similarity(&embeddings[a].vector, &embeddings[b].vector)?;
        items.push((score, label));
    }
    Ok(PairScoreSet::new(items))
}

/// Largest repository `build_repository` can produce for this protocol.
pub fn max_repository_size(pool: &[FunctionEmbedding], queries: &[FunctionRef], protocol: Protocol) -> usize {
    let non_query = pool
        .iter()
        .filter(|e| !queries.iter().any(|q| q.same_instance(&e.function)))
        .count();
    match protocol {
        Protocol::Random => pool.len(),
        Protocol::ExcludeIdentical => non_query,
        Protocol::RatioInjection(r) => non_query + (r * queries.len() as f64).round() as usize,
    }
}

/// Lists for one larger `K` cut down to `k`.
pub fn truncate_lists(lists: &[RankedList], k: usize) -> Vec<RankedList> {
    lists
        .iter()
        .map(|l| RankedList {
            query: l.query.clone(),
            results: l.results.iter().take(k).cloned().collect(),
            k,
            total_relevant_in_repo: l.total_relevant_in_repo,
        })
        .collect()
}

pub fn metrics_vs_k(lists: &[RankedList], ks: &[usize]) -> Result<Vec<(usize, RankingMetrics)>> {
    ks.iter()
        .map(|&k| ranking_metrics(&truncate_lists(lists, k), k).map(|m| (k, m)))
        .collect()
}

/// Ranking metrics for `RatioInjection(r)` repositories over `ratios`.
#[allow(clippy::too_many_arguments)]
pub fn ratio_sweep(
    pool: &[FunctionEmbedding],
    queries: &[FunctionEmbedding],
    ratios: &[f64],
    size: usize,
    k: usize,
    policy: GroundTruthPolicy,
    seed: u64,
    threads: usize,
) -> Result<Vec<(f64, RankingMetrics)>> {
    let refs: Vec<FunctionRef> = queries.iter().map(|q| q.function.clone()).collect();
    ratios
        .iter()
        .map(|&r| {
            let repo = build_repository(pool, &refs, Protocol::RatioInjection(r), size, seed)?;
            let lists = query_batch(&repo, queries, k, policy, threads)?;
            Ok((r, ranking_metrics(&lists, k)?))
        })
        .collect()
}

/// Everything one desk experiment needs. Deserializes from the JSON config
/// file with every field optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusSpec,
    pub embedding: EmbeddingConfig,
    pub train: TrainHyper,
    pub train_frac: f64,
    /// 0 = as large as the protocol allows.
    pub repo_size: usize,
    /// Queries are the first function of each test source; 0 = all of them.
    pub n_queries: usize,
    pub k: usize,
    pub protocol: Protocol,
    pub policy: GroundTruthPolicy,
    pub n_pairs: usize,
    pub seed: u64,
    pub threads: usize,
    pub align: AlignConfig,
    pub collision: CollisionThresholds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: CorpusSpec::new(60, 4, 7),
            embedding: EmbeddingConfig {
                d_embed: 32,
                iterations: 3,
                ..EmbeddingConfig::default()
            },
            train: TrainHyper {
                learning_rate: 5e-3,
                epochs: 8,
                ..TrainHyper::default()
            },
            train_frac: 0.6,
            repo_size: 0,
            n_queries: 0,
            k: 5,
            protocol: Protocol::Random,
            policy: GroundTruthPolicy::BySource,
            n_pairs: 400,
            seed: 7,
            threads: 1,
            align: AlignConfig::default(),
            collision: CollisionThresholds::default(),
        }
    }
}

impl PipelineConfig {
    /// Push the top-level seed and thread count into every stage.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.corpus.seed = self.seed;
        c.embedding.seed = self.seed;
        c.embedding.d_feat = self.corpus.d_feat;
        c.train.seed = self.seed;
        c.train.threads = self.threads;
        c
    }
}

pub struct PipelineOutput {
    pub config: PipelineConfig,
    pub corpus: Corpus,
    pub split: DatasetSplit,
    pub params: ModelParams,
    pub training: TrainingLog,
    pub pool: Vec<FunctionEmbedding>,
    pub queries: Vec<FunctionEmbedding>,
    pub repository: Repository,
    pub lists: Vec<RankedList>,
    pub pairs: PairScoreSet,
    pub report: MetricReport,
    pub roc: Vec<(f64, f64)>,
    pub timings: Timings,
}

/// Generate, train on the training split, then query one function per test
/// source against a repository drawn from the whole corpus.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    run_pipeline_with(cfg, None, None)
}

/// [`run_pipeline`] with an optional pre-built corpus and/or trained model.
/// A supplied model is used as is and the training log stays empty.
pub fn run_pipeline_with(
    cfg: &PipelineConfig,
    corpus: Option<Corpus>,
    model: Option<(EmbeddingConfig, ModelParams)>,
) -> Result<PipelineOutput> {
    let mut cfg = cfg.resolved();
    let mut timings = Timings::default();
    let corpus = match corpus {
        Some(c) => c,
        None => timings.measure("gen", || generate_corpus(&cfg.corpus))?,
    };
    let split = split_dataset(&corpus.functions, cfg.train_frac, cfg.seed)?;
    let (params, training) = match model {
        Some((ecfg, params)) => {
            if ecfg.d_feat != corpus.d_feat && !corpus.functions.is_empty() {
                return Err(Error::DimensionMismatch {
                    expected: ecfg.d_feat,
                    found: corpus.d_feat,
                });
            }
            cfg.embedding = ecfg;
            (params, TrainingLog::default())
        }
        None => {
            cfg.embedding.d_feat = corpus.d_feat;
            timings.measure("train", || train_on_corpus(&split.train, &cfg.embedding, &cfg.train))?
        }
    };
    let pool = timings.measure("embed", || embed_corpus(&corpus.functions, &params, &cfg.embedding, cfg.threads))?;

    let test_set: std::collections::HashSet<FunctionRef> = split.test.iter().map(|g| g.function_ref()).collect();
    let test_embedded: Vec<FunctionEmbedding> = pool
        .iter()
        .filter(|e| test_set.contains(&e.function))
        .cloned()
        .collect();
    // one query per source leaves its other variants as the targets
    let mut seen = std::collections::HashSet::new();
    let per_source: Vec<FunctionEmbedding> = test_embedded
        .iter()
        .filter(|e| seen.insert(e.function.source_id.clone()))
        .cloned()
        .collect();
    let queries = sample_in_order(&per_source, cfg.n_queries, cfg.seed, "queries");
    let query_refs: Vec<FunctionRef> = queries.iter().map(|q| q.function.clone()).collect();

    let size = if cfg.repo_size == 0 {
        max_repository_size(&pool, &query_refs, cfg.protocol)
    } else {
        cfg.repo_size
    };
    let repository = timings.measure("index", || build_repository(&pool, &query_refs, cfg.protocol, size, cfg.seed))?;
    let lists = timings.measure("query", || query_batch(&repository, &queries, cfg.k, cfg.policy, cfg.threads))?;
    let pairs = sample_eval_pairs(&test_embedded, cfg.n_pairs, cfg.seed)?;
    let report = aggregate_report(&lists, &pairs, cfg.k)?;
    let roc = roc_curve(&pairs)?;
    Ok(PipelineOutput {
        config: cfg,
        corpus,
        split,
        params,
        training,
        pool,
        queries,
        repository,
        lists,
        pairs,
        report,
        roc,
        timings,
    })
}

/// Top-K lists before and after graph-alignment filtering.
pub fn filtered_search(
    repo: &Repository,
    queries: &[FunctionEmbedding],
    graphs: &GraphIndex<'_>,
    align: &AlignConfig,
    k: usize,
    policy: GroundTruthPolicy,
    threads: usize,
) -> Result<(Vec<RankedList>, Vec<RankedList>)> {
    let with_rest = map_ordered(queries, threads, |q| query_with_fallback(repo, q, k, policy))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let after = filter_batch(&with_rest, graphs, align, threads)?;
    let before = with_rest.into_iter().map(|(l, _)| l).collect();
    Ok((before, after))
}
