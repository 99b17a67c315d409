//! The `binsd` command line.
//!
//! ```text
//! binsd gen     --spec spec.json --out corpus.jsonl
//! binsd train   --corpus corpus.jsonl --out model.json
//! binsd embed   --model model.json --corpus corpus.jsonl --out emb.jsonl
//! binsd index   --model model.json --corpus corpus.jsonl --out pool.bsdx
//! binsd query   --index pool.bsdx --model model.json --queries q.jsonl --k 5
//! binsd eval    [--corpus c.jsonl --model m.json] --out results/
//! binsd filter-eval --alpha 0.05 --tol 1e-6 --k 5 --out results/
//! binsd collide --tau-sim 0.9 --tau-node 0.3 --out results/
//! binsd vuln    --queries q.jsonl --pool pool.bsdx --model m.json --k 10
//! binsd license --query-lib lib.jsonl --firmware-manifest fw.json --model m.json
//! binsd report  --demo --out results/
//! ```
//!
//! Exit status: 0 on success (and for `--help`), 1 for usage errors, 2 for
//! data errors. Every run writes a run manifest (seed, config hash, versions)
//! to stderr, and to `manifest.json` when `--out` names a directory.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acfg::{parse_acfg_stream, write_corpus_file, Corpus, FunctionRef, CORPUS_FORMAT_VERSION};
use crate::align::{evaluate_filter_effect, GraphIndex};
use crate::apps::{rank_target_libraries, vuln_search, AlignedTopOne, FirmwareManifest, DEFAULT_VULN_K};
use crate::collision::classify_false_positives;
use crate::embed::{
    load_checkpoint, save_checkpoint, train_on_corpus, EmbeddingConfig, FunctionEmbedding, ModelParams,
    CHECKPOINT_FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::metrics::{csv_err, ranking_metrics};
use crate::pipeline::{
    embed_corpus, filtered_search, metrics_vs_k, ratio_sweep, run_pipeline_with, PipelineConfig, PipelineOutput,
};
use crate::report::{emit_report, timing_report, write_file, PlotData, PlotKind};
use crate::rng::RNG_ALGORITHM;
use crate::search::{
    load_index, quantize_f32, query_batch, save_index, GroundTruthPolicy, Repository, INDEX_FORMAT_VERSION,
};
use crate::synth::{generate_corpus, split_dataset, CorpusSpec};

#[derive(Parser, Debug)]
#[command(name = "binsd", version, about = "Binary function similarity detection workbench")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON experiment config; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// 1 forces the deterministic single-threaded path, 0 uses all cores
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Graph-alignment survival fraction
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Identical-block tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long = "tau-sim", global = true)]
    tau_sim: Option<f64>,
    #[arg(long = "tau-node", global = true)]
    tau_node: Option<f64>,
    /// Output file or directory, depending on the subcommand
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus
    Gen {
        /// Corpus spec JSON (defaults to the config's corpus section)
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train an embedding model on the training split of a corpus
    Train {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Embed every function of a corpus (JSONL output)
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Build a binary search index
    Index {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Embeddings JSONL written by `embed`, instead of model + corpus
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Top-K search of query functions against an index
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// `source` or `name`
        #[arg(long, default_value = "source")]
        policy: String,
    },
    /// Search metrics and pairwise AUC/ACC on held-out sources
    Eval {
        #[command(flatten)]
        inputs: Inputs,
        /// `random`, `exclude` or `ratio:<r>`
        #[arg(long)]
        protocol: Option<String>,
        /// Comma-separated injection ratios to sweep, e.g. 0,0.25,0.5,0.75,1
        #[arg(long)]
        ratios: Option<String>,
    },
    /// Precision/recall before and after graph-alignment filtering
    FilterEval {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Classify top-K false positives (collision / rename / other)
    Collide {
        #[command(flatten)]
        inputs: Inputs,
        /// Relevance policy for deciding what counts as a false positive
        #[arg(long, default_value = "name")]
        policy: String,
    },
    /// Vulnerability search against a firmware pool
    Vuln {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Rank firmware libraries by similarity to a query library
    License {
        #[arg(long = "query-lib")]
        query_lib: PathBuf,
        #[arg(long = "firmware-manifest")]
        firmware_manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Library expected to match; its rank is reported (-1 if absent)
        #[arg(long)]
        expected: Option<String>,
        /// Apply graph alignment before taking top-1 scores (needs --graphs)
        #[arg(long)]
        align: bool,
        /// Corpus holding the firmware functions' graphs
        #[arg(long)]
        graphs: Option<PathBuf>,
    },
    /// Full pipeline with CSV, timing and SVG plots
    Report {
        /// Run the bundled demo experiment
        #[arg(long)]
        demo: bool,
        #[command(flatten)]
        inputs: Inputs,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct Inputs {
    /// Corpus to use instead of generating one from the config
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Trained checkpoint to use instead of training
    #[arg(long)]
    model: Option<PathBuf>,
}

/// Resolved settings that determine a run's results.
#[derive(Serialize)]
struct Manifest<'a> {
    binsd_version: &'static str,
    command: &'a str,
    seed: u64,
    threads: usize,
    config_hash: String,
    rng: &'static str,
    corpus_format_version: u64,
    index_format_version: u32,
    checkpoint_format_version: u64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parse `args` (program name first), run the subcommand and return the
/// process exit code.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("BINSD_LOG", "error")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `binsd --help` for usage");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_config(common: &Common) -> CliResult<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("bad config {}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if let Some(k) = common.k {
        if k == 0 {
            return Err(usage("--k must be at least 1"));
        }
        cfg.k = k;
    }
    if let Some(a) = common.alpha {
        cfg.align.alpha = a;
    }
    if let Some(t) = common.tol {
        cfg.align.tol = t;
    }
    if let Some(t) = common.tau_sim {
        cfg.collision.tau_sim = t;
    }
    if let Some(t) = common.tau_node {
        cfg.collision.tau_node = t;
    }
    cfg.align.validate().map_err(|e| usage(e.to_string()))?;
    cfg.collision.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn config_hash(command: &str, cfg: &PipelineConfig) -> String {
    let canonical = serde_json::to_string(&(command, cfg)).unwrap_or_default();
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn print_manifest(command: &str, cfg: &PipelineConfig, out_dir: Option<&Path>) -> CliResult<()> {
    let m = Manifest {
        binsd_version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        threads: cfg.threads,
        config_hash: config_hash(command, cfg),
        rng: RNG_ALGORITHM,
        corpus_format_version: CORPUS_FORMAT_VERSION,
        index_format_version: INDEX_FORMAT_VERSION,
        checkpoint_format_version: CHECKPOINT_FORMAT_VERSION,
    };
    let line = serde_json::to_string(&m).map_err(|e| Error::Schema(e.to_string()))?;
    eprintln!("run-manifest {line}");
    if let Some(dir) = out_dir {
        let pretty = serde_json::to_string_pretty(&m).map_err(|e| Error::Schema(e.to_string()))?;
        write_file(&dir.join("manifest.json"), format!("{pretty}\n").as_bytes())?;
    }
    Ok(())
}

fn require_out(common: &Common, what: &str) -> CliResult<PathBuf> {
    common
        .out
        .clone()
        .ok_or_else(|| usage(format!("--out <{what}> is required")))
}

fn out_dir(common: &Common) -> CliResult<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gen { .. } => "gen",
        Command::Train { .. } => "train",
        Command::Embed { .. } => "embed",
        Command::Index { .. } => "index",
        Command::Query { .. } => "query",
        Command::Eval { .. } => "eval",
        Command::FilterEval { .. } => "filter-eval",
        Command::Collide { .. } => "collide",
        Command::Vuln { .. } => "vuln",
        Command::License { .. } => "license",
        Command::Report { .. } => "report",
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli.common)?;
    let common = &cli.common;
    let name = command_name(&cli.command);
    match cli.command {
        Command::Gen { spec } => {
            let out = require_out(common, "corpus.jsonl")?;
            let mut spec = match spec {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    serde_json::from_str::<CorpusSpec>(&text)
                        .map_err(|e| Error::Schema(format!("bad corpus spec {}: {e}", p.display())))?
                }
                None => cfg.corpus.clone(),
            };
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            cfg.corpus = spec.clone();
            cfg.seed = spec.seed;
            print_manifest(name, &cfg, None)?;
            let corpus = generate_corpus(&spec)?;
            write_corpus_file(&out, &corpus)?;
            println!("wrote {} functions to {}", corpus.functions.len(), out.display());
        }
        Command::Train { corpus } => {
            let out = require_out(common, "model.json")?;
            print_manifest(name, &cfg, None)?;
            let corpus = parse_acfg_stream(&corpus)?;
            let cfg = cfg.resolved();
            let mut ecfg = cfg.embedding.clone();
            ecfg.d_feat = corpus.d_feat;
            let split = split_dataset(&corpus.functions, cfg.train_frac, cfg.seed)?;
            let (params, log) = train_on_corpus(&split.train, &ecfg, &cfg.train)?;
            save_checkpoint(&out, &ecfg, &params)?;
            println!(
                "trained on {} functions: loss {:.6} -> {:.6}; wrote {}",
                split.train.len(),
                log.initial_loss,
                log.final_loss,
                out.display()
            );
        }
        Command::Embed { model, corpus } => {
            let out = require_out(common, "embeddings.jsonl")?;
            print_manifest(name, &cfg, None)?;
            let (ecfg, params) = load_checkpoint(&model)?;
            let corpus = parse_acfg_stream(&corpus)?;
            let embs = embed_checked(&corpus, &ecfg, &params, cfg.threads)?;
            write_embeddings(&out, &embs)?;
            println!("wrote {} embeddings to {}", embs.len(), out.display());
        }
        Command::Index {
            model,
            corpus,
            embeddings,
        } => {
            let out = require_out(common, "index.bsdx")?;
            let embs = match (embeddings, model, corpus) {
                (Some(e), None, None) => read_embeddings(&e)?,
                (None, Some(m), Some(c)) => {
                    print_manifest(name, &cfg, None)?;
                    let (ecfg, params) = load_checkpoint(&m)?;
                    embed_checked(&parse_acfg_stream(&c)?, &ecfg, &params, cfg.threads)?
                }
                _ => return Err(usage("index needs either --embeddings or both --model and --corpus")),
            };
            save_index(&out, &embs)?;
            println!("indexed {} functions into {}", embs.len(), out.display());
        }
        Command::Query {
            index,
            model,
            queries,
            policy,
        } => {
            let policy: GroundTruthPolicy = policy.parse().map_err(|e: Error| usage(e.to_string()))?;
            print_manifest(name, &cfg, None)?;
            let repo = Repository::from_entries(load_index(&index)?)?;
            let (ecfg, params) = load_checkpoint(&model)?;
            let qs = quantized(embed_checked(&parse_acfg_stream(&queries)?, &ecfg, &params, cfg.threads)?);
            let lists = query_batch(&repo, &qs, cfg.k, policy, cfg.threads)?;
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(["query", "rank", "candidate", "score", "relevant"])
                .map_err(csv_err)?;
            for l in &lists {
                for (i, h) in l.results.iter().enumerate() {
                    wtr.write_record([
                        l.query.to_string(),
                        (i + 1).to_string(),
                        h.function.to_string(),
                        format!("{:.6}", h.score),
                        h.relevant.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            emit_text(common.out.as_deref(), &csv_bytes(wtr)?)?;
        }
        Command::Eval {
            inputs,
            protocol,
            ratios,
        } => {
            if let Some(p) = protocol {
                cfg.protocol = p.parse().map_err(|e: Error| usage(e.to_string()))?;
            }
            let ratios = ratios.map(|r| parse_ratios(&r)).transpose()?;
            let dir = out_dir(common)?;
            print_manifest(name, &cfg, Some(&dir))?;
            let run = run_inputs(&cfg, &inputs)?;
            let mut data = PlotData {
                roc: Some(run.roc.clone()),
                ..Default::default()
            };
            let mut plots = vec![PlotKind::Roc];
            if let Some(rs) = ratios {
                data.vs_ratio = Some(sweep(&run, &rs)?);
                plots.push(PlotKind::MetricVsRatio);
            }
            emit_report(&run.report, &data, &plots, &dir)?;
            write_file(&dir.join("timing.csv"), timing_report(&run.timings).as_bytes())?;
            print!("{}", run.report.to_csv_string()?);
        }
        Command::FilterEval { inputs } => {
            let dir = out_dir(common)?;
            print_manifest(name, &cfg, Some(&dir))?;
            let run = run_inputs(&cfg, &inputs)?;
            let graphs = GraphIndex::new(&run.corpus.functions);
            let c = &run.config;
            let (before, after) = filtered_search(
                &run.repository,
                &run.queries,
                &graphs,
                &c.align,
                c.k,
                c.policy,
                c.threads,
            )?;
            let effect = evaluate_filter_effect(&before, &after, c.k)?;
            let mb = ranking_metrics(&before, c.k)?;
            let ma = ranking_metrics(&after, c.k)?;
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(["metric", "before", "after", "delta"]).map_err(csv_err)?;
            let rows = [
                ("precision_k", effect.precision_before, effect.precision_after),
                ("recall_k", effect.recall_before, effect.recall_after),
                ("f1_k", mb.f1, ma.f1),
                ("rank1", mb.rank1, ma.rank1),
                ("map_k", mb.map, ma.map),
                ("mrr_k", mb.mrr, ma.mrr),
                ("ndcg_k", mb.ndcg, ma.ndcg),
            ];
            for (m, b, a) in rows {
                wtr.write_record([m.to_string(), b.to_string(), a.to_string(), (a - b).to_string()])
                    .map_err(csv_err)?;
            }
            let bytes = csv_bytes(wtr)?;
            write_file(&dir.join("filter_eval.csv"), &bytes)?;
            print!("{}", String::from_utf8_lossy(&bytes));
        }
        Command::Collide { inputs, policy } => {
            let policy: GroundTruthPolicy = policy.parse().map_err(|e: Error| usage(e.to_string()))?;
            cfg.policy = policy;
            let dir = out_dir(common)?;
            print_manifest(name, &cfg, Some(&dir))?;
            let run = run_inputs(&cfg, &inputs)?;
            let graphs = GraphIndex::new(&run.corpus.functions);
            let c = &run.config;
            let breakdown =
                classify_false_positives(&run.lists, &graphs, &run.params, &c.embedding, &c.collision, c.threads)?;
            let json = breakdown.to_json()?;
            write_file(&dir.join("collisions.json"), format!("{json}\n").as_bytes())?;
            println!(
                "false positives: {} (collision {}, rename {}, other {})",
                breakdown.total(),
                breakdown.collision,
                breakdown.rename,
                breakdown.other
            );
        }
        Command::Vuln { queries, pool, model } => {
            let k = common.k.unwrap_or(DEFAULT_VULN_K);
            cfg.k = k;
            print_manifest(name, &cfg, None)?;
            let repo = Repository::from_entries(load_index(&pool)?)?;
            let (ecfg, params) = load_checkpoint(&model)?;
            let qs = quantized(embed_checked(&parse_acfg_stream(&queries)?, &ecfg, &params, cfg.threads)?);
            let reports = vuln_search(&qs, &repo, k, cfg.threads)?;
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(["query", "rank", "candidate", "score", "confirmed"])
                .map_err(csv_err)?;
            for r in &reports {
                for (i, h) in r.hits.iter().enumerate() {
                    wtr.write_record([
                        r.query.to_string(),
                        (i + 1).to_string(),
                        h.function.to_string(),
                        format!("{:.6}", h.score),
                        h.relevant.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
                eprintln!(
                    "{}: max {:.4} min {:.4} confirmed {}/{}",
                    r.query,
                    r.max_similarity,
                    r.min_similarity,
                    r.confirmed,
                    r.hits.len()
                );
            }
            emit_text(common.out.as_deref(), &csv_bytes(wtr)?)?;
        }
        Command::License {
            query_lib,
            firmware_manifest,
            model,
            expected,
            align,
            graphs,
        } => {
            print_manifest(name, &cfg, None)?;
            let (ecfg, params) = load_checkpoint(&model)?;
            let qlib = parse_acfg_stream(&query_lib)?;
            let qs = quantized(embed_checked(&qlib, &ecfg, &params, cfg.threads)?);
            let firmware = FirmwareManifest::load(&firmware_manifest)?.load_firmware()?;
            let graph_corpus = match (align, graphs) {
                (true, Some(p)) => Some(parse_acfg_stream(&p)?),
                (true, None) => return Err(usage("--align needs --graphs <corpus.jsonl>")),
                (false, _) => None,
            };
            let index = graph_corpus
                .as_ref()
                .map(|c| GraphIndex::new(c.functions.iter().chain(&qlib.functions)));
            let aligned = index.as_ref().map(|g| AlignedTopOne {
                graphs: g,
                cfg: &cfg.align,
            });
            let name_of_query = query_lib
                .file_stem()
                .map_or_else(|| "query".to_string(), |s| s.to_string_lossy().into_owned());
            let ranking =
                rank_target_libraries(&name_of_query, &qs, &firmware, expected.as_deref(), aligned, cfg.threads)?;
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(["rank", "library", "s_qt"]).map_err(csv_err)?;
            for l in &ranking.libraries {
                wtr.write_record([l.rank.to_string(), l.library.clone(), format!("{:.6}", l.s_qt)])
                    .map_err(csv_err)?;
            }
            emit_text(common.out.as_deref(), &csv_bytes(wtr)?)?;
            if expected.is_some() {
                eprintln!("expected library rank: {}", ranking.expected_rank);
            }
        }
        Command::Report { demo, inputs } => {
            if !demo && common.config.is_none() && inputs.corpus.is_none() {
                return Err(usage("report needs --demo, --config or --corpus"));
            }
            let dir = out_dir(common)?;
            print_manifest(name, &cfg, Some(&dir))?;
            let run = run_inputs(&cfg, &inputs)?;
            let ks: Vec<usize> = (1..=run.config.k.max(10)).collect();
            let lists_k = {
                let c = &run.config;
                query_batch(&run.repository, &run.queries, *ks.last().unwrap_or(&c.k), c.policy, c.threads)?
            };
            let data = PlotData {
                roc: Some(run.roc.clone()),
                vs_k: Some(metrics_vs_k(&lists_k, &ks)?),
                vs_ratio: Some(sweep(&run, &[0.0, 0.25, 0.5, 0.75, 1.0])?),
            };
            let files = emit_report(
                &run.report,
                &data,
                &[PlotKind::Roc, PlotKind::MetricVsK, PlotKind::MetricVsRatio],
                &dir,
            )?;
            write_file(&dir.join("timing.csv"), timing_report(&run.timings).as_bytes())?;
            print!("{}", run.report.to_csv_string()?);
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn run_inputs(cfg: &PipelineConfig, inputs: &Inputs) -> CliResult<PipelineOutput> {
    let corpus = inputs.corpus.as_ref().map(parse_acfg_stream).transpose()?;
    let model = inputs.model.as_ref().map(load_checkpoint).transpose()?;
    Ok(run_pipeline_with(cfg, corpus, model)?)
}

/// Ratio sweep over a repository as large as the smallest ratio allows.
fn sweep(run: &PipelineOutput, ratios: &[f64]) -> CliResult<Vec<(f64, crate::metrics::RankingMetrics)>> {
    let c = &run.config;
    let refs: Vec<FunctionRef> = run.queries.iter().map(|q| q.function.clone()).collect();
    let non_query = run
        .pool
        .iter()
        .filter(|e| !refs.iter().any(|q| q.same_instance(&e.function)))
        .count();
    let size = if c.repo_size == 0 { non_query } else { c.repo_size };
    Ok(ratio_sweep(&run.pool, &run.queries, ratios, size, c.k, c.policy, c.seed, c.threads)?)
}

fn parse_ratios(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|r| {
            let v: f64 = r.trim().parse().map_err(|_| usage(format!("bad ratio {r:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(usage(format!("ratio {v} outside [0,1]")));
            }
            Ok(v)
        })
        .collect()
}

fn embed_checked(
    corpus: &Corpus,
    ecfg: &EmbeddingConfig,
    params: &ModelParams,
    threads: usize,
) -> Result<Vec<FunctionEmbedding>> {
    if !corpus.functions.is_empty() && corpus.d_feat != ecfg.d_feat {
        return Err(Error::DimensionMismatch {
            expected: ecfg.d_feat,
            found: corpus.d_feat,
        });
    }
    embed_corpus(&corpus.functions, params, ecfg, threads)
}

/// Queries are compared against f32 index entries at the same precision.
fn quantized(embs: Vec<FunctionEmbedding>) -> Vec<FunctionEmbedding> {
    embs.into_iter()
        .map(|e| FunctionEmbedding {
            vector: quantize_f32(&e.vector),
            function: e.function,
        })
        .collect()
}

fn csv_bytes(wtr: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    wtr.into_inner().map_err(|e| Error::Schema(e.to_string()))
}

fn emit_text(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_file(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    function: FunctionRef,
    vector: Vec<f64>,
}

/// One `{"function": {...}, "vector": [...]}` object per line.
pub fn write_embeddings(path: &Path, embs: &[FunctionEmbedding]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for e in embs {
        let rec = EmbeddingRecord {
            function: e.function.clone(),
            vector: e.vector.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| Error::Schema(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<FunctionEmbedding>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(FunctionEmbedding {
            vector: rec.vector,
            function: rec.function,
        });
    }
    Ok(out)
}
