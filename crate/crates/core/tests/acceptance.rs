//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use binsd::acfg::AttributedCfg;
use binsd::align::{filter_ranked_list, AlignConfig, GraphIndex};
use binsd::apps::{rank_target_libraries, Firmware};
use binsd::collision::{collision_evidence, CollisionThresholds, Observed, Verdict};
use binsd::embed::{
    embed_function, pair_gradients, pair_loss, readout, EmbeddingConfig, FunctionEmbedding, Label, ModelParams,
    VertexStates,
};
use binsd::linalg::Matrix;
use binsd::metrics::{
    map_at_k, mrr_at_k, ndcg_at_k, precision_recall_f1_at_k, rank1, roc_auc, roc_curve, trapezoid_auc,
    PairScoreSet,
};
use binsd::pipeline::{
    filtered_search, ratio_sweep, run_pipeline, sample_eval_pairs, sample_in_order, PipelineConfig,
};
use binsd::report::{emit_report, PlotData, PlotKind};
use binsd::rng::stream;
use binsd::search::{
    build_repository, query_batch, query_with_fallback, rectification_delta, GroundTruthPolicy, Protocol,
    RankedHit, RankedList, Repository,
};
use binsd::synth::{generate_corpus, plant_collision};
use binsd::FunctionRef;
use common::{easy_desk, hard_desk, one_per_source, random_graph};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        // written negated so a NaN fails the check
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradient_correctness),
        ("metric oracle equivalence", metric_oracles),
        ("permutation invariance", permutation_invariance),
        ("collision construction", collision_construction),
        ("end-to-end desk experiment", desk_experiment),
        ("repository-construction effects", repository_effects),
        ("AUC-vs-search gap", auc_search_gap),
        ("graph-alignment effect", alignment_effect),
        ("license-violation pipeline", license_pipeline),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}; {secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why}; {secs:.1}s)", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(1, "accept-grad", 0);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let cfg = EmbeddingConfig {
            d_feat: 3,
            d_embed: 4,
            iterations: 2,
            sigma_depth: 2,
            use_prev_term: trial % 2 == 1,
            seed: trial,
        };
        let params = ModelParams::init(&cfg);
        let (na, nb) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let a = random_graph(&mut rng, na, 3, "a");
        let b = random_graph(&mut rng, nb, 3, "b");
        let label = if rng.gen_bool(0.5) { Label::Similar } else { Label::Dissimilar };
        let grads = pair_gradients(&a, &b, label, &params, &cfg).map_err(|e| e.to_string())?;
        for (m, analytic) in grads.matrices().iter().enumerate() {
            for (k, &g) in analytic.data.iter().enumerate() {
                if g.abs() <= 1e-8 {
                    continue;
                }
                let h = 1e-5;
                let mut plus = params.clone();
                plus.matrices_mut()[m].data[k] += h;
                let mut minus = params.clone();
                minus.matrices_mut()[m].data[k] -= h;
                let lp = pair_loss(&a, &b, label, &plus, &cfg).map_err(|e| e.to_string())?;
                let lm = pair_loss(&a, &b, label, &minus, &cfg).map_err(|e| e.to_string())?;
                let n = (lp - lm) / (2.0 * h);
                let rel = (g - n).abs() / g.abs().max(n.abs());
                worst = worst.max(rel);
                ensure!(rel <= 1e-4, "trial {trial} matrix {m} entry {k}: analytic {g} vs numeric {n}");
                checked += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs <= 30.0, "took {secs:.1}s");
    Ok(format!("{checked} entries, worst rel err {worst:.2e}"))
}

// Oracles written straight from the metric definitions, one query at a time.
fn oracle_query(rel: &[bool], total: usize, k: usize) -> [f64; 6] {
    let top = &rel[..rel.len().min(k)];
    let hits = top.iter().filter(|r| **r).count() as f64;
    let p = if top.is_empty() { 0.0 } else { hits / top.len() as f64 };
    let r = hits / total.max(1) as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let mut ap = 0.0;
    for j in 0..top.len() {
        if top[j] {
            let hits_to_j = top[..=j].iter().filter(|r| **r).count() as f64;
            ap += hits_to_j / (j + 1) as f64;
        }
    }
    let ideal = total.min(k);
    let ap = if ideal == 0 { 0.0 } else { ap / ideal as f64 };
    let rr = top.iter().position(|r| *r).map_or(0.0, |j| 1.0 / (j + 1) as f64);
    let dcg: f64 = (0..top.len()).filter(|&j| top[j]).map(|j| 1.0 / ((j + 2) as f64).log2()).sum();
    let idcg: f64 = (0..ideal).map(|j| 1.0 / ((j + 2) as f64).log2()).sum();
    let ndcg = if idcg == 0.0 { 0.0 } else { dcg / idcg };
    [p, r, f1, ap, rr, ndcg]
}

fn pairwise_auc(items: &[(f64, Label)]) -> f64 {
    let mut wins = 0.0;
    let mut n = 0.0;
    for (sp, lp) in items {
        if *lp != Label::Similar {
            continue;
        }
        for (sn, ln) in items {
            if *ln != Label::Dissimilar {
                continue;
            }
            n += 1.0;
            wins += if sp > sn {
                1.0
            } else if sp == sn {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / n
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(2, "accept-metrics", 0);
    let tag = binsd::CompilationTag::new(binsd::acfg::Arch::X64, binsd::acfg::OptLevel::O0, "gcc");
    let fref = |s: String| FunctionRef {
        function_name: s.clone(),
        source_id: s,
        compilation: tag.clone(),
    };
    let mut worst = 0.0f64;
    for inst in 0..200 {
        let k = rng.gen_range(1..=10);
        let n_queries = rng.gen_range(1..=6);
        let mut lists = Vec::new();
        let mut per_query = Vec::new();
        for q in 0..n_queries {
            let repo = rng.gen_range(1..=50usize);
            let flags: Vec<bool> = (0..repo).map(|_| rng.gen_bool(0.3)).collect();
            let total = flags.iter().filter(|r| **r).count();
            let mut scores: Vec<f64> = (0..repo).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            let shown = repo.min(k);
            let results: Vec<RankedHit> = (0..shown)
                .map(|j| RankedHit {
                    function: fref(format!("c{j:03}")),
                    score: scores[j],
                    relevant: flags[j],
                })
                .collect();
            per_query.push((oracle_query(&flags[..shown], total, k), total));
            lists.push(RankedList {
                query: fref(format!("q{q}")),
                results,
                k,
                total_relevant_in_repo: total,
            });
        }
        let nq = n_queries as f64;
        let mean_all = |i: usize| per_query.iter().map(|(m, _)| m[i]).sum::<f64>() / nq;
        let used: Vec<&[f64; 6]> = per_query.iter().filter(|(_, t)| *t > 0).map(|(m, _)| m).collect();
        let mean_used = |i: usize| used.iter().map(|m| m[i]).sum::<f64>() / used.len() as f64;
        let first = lists.iter().filter(|l| l.results.first().is_some_and(|h| h.relevant)).count() as f64 / nq;

        let prf = precision_recall_f1_at_k(&lists, k).map_err(|e| e.to_string())?;
        let mut diffs = vec![
            (prf.precision - mean_all(0)).abs(),
            (prf.recall - mean_all(1)).abs(),
            (prf.f1 - mean_all(2)).abs(),
            (rank1(&lists).map_err(|e| e.to_string())? - first).abs(),
        ];
        if used.is_empty() {
            ensure!(map_at_k(&lists, k).is_err(), "instance {inst}: MAP over no usable queries must fail");
        } else {
            let map = map_at_k(&lists, k).map_err(|e| e.to_string())?;
            let mrr = mrr_at_k(&lists, k).map_err(|e| e.to_string())?;
            let ndcg = ndcg_at_k(&lists, k).map_err(|e| e.to_string())?;
            ensure!(map.n_excluded == n_queries - used.len(), "instance {inst}: exclusion count");
            diffs.extend([
                (map.value - mean_used(3)).abs(),
                (mrr.value - mean_used(4)).abs(),
                (ndcg.value - mean_used(5)).abs(),
            ]);
        }
        let d = diffs.iter().cloned().fold(0.0, f64::max);
        worst = worst.max(d);
        ensure!(d <= 1e-12, "instance {inst}: ranking metric off by {d:e}");

        let n_pairs = rng.gen_range(2..=60);
        let mut items: Vec<(f64, Label)> = (0..n_pairs)
            .map(|i| {
                let l = if i % 2 == 0 { Label::Similar } else { Label::Dissimilar };
                ((rng.gen_range(0..15) as f64) / 15.0, l)
            })
            .collect();
        items.shuffle(&mut rng);
        let set = PairScoreSet::new(items.clone());
        let auc = roc_auc(&set).map_err(|e| e.to_string())?;
        let trap = trapezoid_auc(&roc_curve(&set).map_err(|e| e.to_string())?);
        ensure!((auc - trap).abs() <= 1e-9, "instance {inst}: rank-sum {auc} vs trapezoid {trap}");
        ensure!((auc - pairwise_auc(&items)).abs() <= 1e-12, "instance {inst}: AUC vs pair count");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs <= 10.0, "took {secs:.1}s");
    Ok(format!("200 instances, worst diff {worst:.1e}"))
}

fn relabel(g: &AttributedCfg, perm: &[usize]) -> AttributedCfg {
    let mut out = g.clone();
    let mut nodes = g.nodes.clone();
    for n in &mut nodes {
        n.node_id = perm[n.node_id];
    }
    nodes.sort_by_key(|n| n.node_id);
    out.nodes = nodes;
    out.edges = g.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    out
}

fn permutation_invariance() -> Outcome {
    let mut rng = stream(3, "accept-perm", 0);
    let mut worst = 0.0f64;
    for inst in 0..100u64 {
        let cfg = EmbeddingConfig {
            d_feat: rng.gen_range(1..=6),
            d_embed: rng.gen_range(2..=12),
            iterations: rng.gen_range(1..=5),
            sigma_depth: rng.gen_range(1..=3),
            use_prev_term: rng.gen_bool(0.5),
            seed: inst,
        };
        let params = ModelParams::init(&cfg);
        let n = rng.gen_range(1..=20);
        let g = random_graph(&mut rng, n, cfg.d_feat, "p");
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let (a, _) = embed_function(&g, &params, &cfg).map_err(|e| e.to_string())?;
        let (b, _) = embed_function(&relabel(&g, &perm), &params, &cfg).map_err(|e| e.to_string())?;
        for (x, y) in a.vector.iter().zip(&b.vector) {
            worst = worst.max((x - y).abs());
        }
        ensure!(worst <= 1e-12, "instance {inst}: component moved by {worst:e}");
    }
    Ok(format!("100 instances, max component change {worst:.1e}"))
}

fn collision_construction() -> Outcome {
    let cfg = EmbeddingConfig {
        d_feat: 2,
        d_embed: 2,
        iterations: 1,
        sigma_depth: 1,
        use_prev_term: false,
        seed: 0,
    };
    let mut params = ModelParams::zeros(&cfg);
    params.w2 = Matrix::identity(2);
    let cancel = VertexStates::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]);
    let h = readout(&cancel, &params).map_err(|e| e.to_string())?;
    ensure!(h == vec![0.0, 0.0], "cancellation readout {h:?}");

    // Same readout (1,1), different vertex states, different sources.
    let states_a = VertexStates::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0], &[1.0, 1.0]]);
    let states_b = VertexStates::from_rows(&[&[1.0, 1.0]]);
    let mut rng = stream(4, "accept-collide", 0);
    let ga = random_graph(&mut rng, 3, 2, "alpha");
    let mut gb = random_graph(&mut rng, 1, 2, "beta");
    gb.nodes[0].features.0 = vec![5.0, 5.0];
    let ea = FunctionEmbedding {
        vector: readout(&states_a, &params).map_err(|e| e.to_string())?,
        function: ga.function_ref(),
    };
    let eb = FunctionEmbedding {
        vector: readout(&states_b, &params).map_err(|e| e.to_string())?,
        function: gb.function_ref(),
    };
    let ev = collision_evidence(
        Observed {
            embedding: &ea,
            states: &states_a,
        },
        Observed {
            embedding: &eb,
            states: &states_b,
        },
        &CollisionThresholds::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(ev.cosine >= 0.9 && ev.node_distance >= 0.3, "planted pair evidence {ev:?}");
    ensure!(ev.verdict == Verdict::Collision, "verdict {:?}", ev.verdict);

    let fillers: Vec<AttributedCfg> = (0..5)
        .map(|i| {
            let mut g = ga.clone();
            g.source_id = format!("alpha-{i}");
            g
        })
        .collect();
    let mut graphs: Vec<&AttributedCfg> = vec![&ga, &gb];
    graphs.extend(&fillers);
    let index = GraphIndex::new(graphs);
    let hit = |g: &AttributedCfg, score: f64| RankedHit {
        function: g.function_ref(),
        score,
        relevant: false,
    };
    let mut results = vec![hit(&gb, 1.0)];
    results.extend(fillers[..4].iter().enumerate().map(|(i, g)| hit(g, 0.9 - 0.1 * i as f64)));
    let list = RankedList {
        query: ga.function_ref(),
        results,
        k: 5,
        total_relevant_in_repo: 0,
    };
    let out = filter_ranked_list(&list, &index, &AlignConfig::default(), &[hit(&fillers[4], 0.1)])
        .map_err(|e| e.to_string())?;
    ensure!(
        out.results.iter().all(|h| h.function != gb.function_ref()) && out.results.len() == 5,
        "planted candidate not removed: {:?}",
        out.results
    );
    Ok(format!(
        "cos {:.3}, distance {:.3}, decoy dropped from top-5",
        ev.cosine, ev.node_distance
    ))
}

fn desk_experiment() -> Outcome {
    let desk = easy_desk();
    ensure!(desk.train_seconds <= 600.0, "training took {:.0}s", desk.train_seconds);
    let held = desk.held_out();
    let distract = desk.distractors(540);
    let k = 5;

    let mut graphs = held.clone();
    graphs.extend(distract.iter().cloned());
    let pool = desk.embed(&graphs);
    let queries = one_per_source(&desk.embed(&held));
    let refs: Vec<FunctionRef> = queries.iter().map(|q| q.function.clone()).collect();
    let (mut got, mut expected) = (0.0, 0.0);
    for seed in 0..3 {
        let repo = build_repository(&pool, &refs, Protocol::Random, 2000, seed).map_err(|e| e.to_string())?;
        let lists = query_batch(&repo, &queries, k, GroundTruthPolicy::BySource, 0).map_err(|e| e.to_string())?;
        got += precision_recall_f1_at_k(&lists, k).map_err(|e| e.to_string())?.precision / 3.0;
        // a uniformly random ranking puts relevant entries in top-K at rate rel/|repo|
        expected += lists
            .iter()
            .map(|l| l.total_relevant_in_repo as f64 / repo.len() as f64)
            .sum::<f64>()
            / lists.len() as f64
            / 3.0;
    }
    ensure!(got >= 5.0 * expected, "P@5 {got:.4} vs random {expected:.4}");

    let mut renamed_spec = desk.spec.clone();
    renamed_spec.rename_fraction = 0.3;
    let renamed = generate_corpus(&renamed_spec).map_err(|e| e.to_string())?.functions;
    let held_sources: std::collections::HashSet<&str> = held.iter().map(|g| g.source_id.as_str()).collect();
    let renamed_held: Vec<AttributedCfg> =
        renamed.into_iter().filter(|g| held_sources.contains(g.source_id.as_str())).collect();

    let mut deltas = Vec::new();
    let mut renames_retrieved = 0;
    for held_set in [&held, &renamed_held] {
        let mut graphs = held_set.clone();
        graphs.extend(distract.iter().cloned());
        let pool = desk.embed(&graphs);
        let queries = one_per_source(&desk.embed(held_set));
        let refs: Vec<FunctionRef> = queries.iter().map(|q| q.function.clone()).collect();
        let repo = build_repository(&pool, &refs, Protocol::Random, 2000, 0).map_err(|e| e.to_string())?;
        let by_name = query_batch(&repo, &queries, k, GroundTruthPolicy::ByName, 0).map_err(|e| e.to_string())?;
        let by_source =
            query_batch(&repo, &queries, k, GroundTruthPolicy::BySource, 0).map_err(|e| e.to_string())?;
        deltas.push(rectification_delta(&by_name, &by_source, k).map_err(|e| e.to_string())?.precision);
        renames_retrieved = by_source
            .iter()
            .flat_map(|l| l.results.iter().map(move |h| (l, h)))
            .filter(|(l, h)| h.relevant && h.function.function_name != l.query.function_name)
            .count();
    }
    ensure!(deltas[0] == 0.0, "rename 0: delta {}", deltas[0]);
    ensure!(deltas[1] > 0.0 && renames_retrieved > 0, "rename 0.3: delta {} ({renames_retrieved} renames retrieved)", deltas[1]);
    Ok(format!(
        "train {:.1}s, P@5 {got:.3} vs random {expected:.4}, delta {} / {:.3} ({renames_retrieved} renames retrieved)",
        desk.train_seconds, deltas[0], deltas[1]
    ))
}

/// Held-out functions of the hard desk padded to 2000 with distractors, and
/// one query per held-out source.
fn hard_pool() -> (Vec<FunctionEmbedding>, Vec<FunctionEmbedding>) {
    let desk = hard_desk();
    let held = desk.held_out();
    let mut graphs = held.clone();
    graphs.extend(desk.distractors((2000 - held.len()) / 4));
    (desk.embed(&graphs), one_per_source(&desk.embed(&held)))
}

fn repository_effects() -> Outcome {
    let (pool, queries) = hard_pool();
    let refs: Vec<FunctionRef> = queries.iter().map(|q| q.function.clone()).collect();
    let size = 1900;
    let sweep = ratio_sweep(
        &pool,
        &queries,
        &[0.0, 0.25, 0.5, 0.75, 1.0],
        size,
        5,
        GroundTruthPolicy::BySource,
        7,
        0,
    )
    .map_err(|e| e.to_string())?;
    for w in sweep.windows(2) {
        let (a, b) = (&w[0].1, &w[1].1);
        ensure!(b.rank1 - a.rank1 >= -0.01, "Rank-1 fell from {} to {} at r = {}", a.rank1, b.rank1, w[1].0);
        ensure!(b.mrr - a.mrr >= -0.01, "MRR@5 fell from {} to {} at r = {}", a.mrr, b.mrr, w[1].0);
    }
    let mut r1 = Vec::new();
    for protocol in [Protocol::Random, Protocol::ExcludeIdentical] {
        let repo = build_repository(&pool, &refs, protocol, size, 7).map_err(|e| e.to_string())?;
        let lists = query_batch(&repo, &queries, 5, GroundTruthPolicy::BySource, 0).map_err(|e| e.to_string())?;
        r1.push(rank1(&lists).map_err(|e| e.to_string())?);
    }
    ensure!(r1[0] - r1[1] >= 0.1, "Rank-1 random {} vs exclude {}", r1[0], r1[1]);
    let curve: Vec<String> = sweep.iter().map(|(r, m)| format!("{r}:{:.3}", m.rank1)).collect();
    Ok(format!(
        "Rank-1 sweep [{}], random {:.3} -> exclude {:.3}",
        curve.join(" "),
        r1[0],
        r1[1]
    ))
}

fn auc_search_gap() -> Outcome {
    let desk = hard_desk();
    let test = desk.embed(&desk.split.test);
    let auc = roc_auc(&sample_eval_pairs(&test, 2000, 5).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (pool, queries) = hard_pool();
    let refs: Vec<FunctionRef> = queries.iter().map(|q| q.function.clone()).collect();
    let repo =
        build_repository(&pool, &refs, Protocol::ExcludeIdentical, 1900, 7).map_err(|e| e.to_string())?;
    let lists = query_batch(&repo, &queries, 5, GroundTruthPolicy::BySource, 0).map_err(|e| e.to_string())?;
    let p = precision_recall_f1_at_k(&lists, 5).map_err(|e| e.to_string())?.precision;
    ensure!(auc >= 0.95, "AUC {auc:.4}");
    ensure!(p <= 0.60, "exclude P@5 {p:.3}");
    Ok(format!("AUC {auc:.4}, exclude P@5 {p:.3}"))
}

fn alignment_effect() -> Outcome {
    let desk = easy_desk();
    let mut spec = desk.spec.clone();
    spec.transform_profile = binsd::synth::TransformProfile::zero_jitter();
    spec.seed = 31;
    spec.n_sources = 120;
    let corpus = generate_corpus(&spec).map_err(|e| e.to_string())?.functions;
    let query_graphs: Vec<AttributedCfg> = corpus.iter().step_by(spec.variants_per_source).take(40).cloned().collect();
    let decoys: Vec<AttributedCfg> = query_graphs
        .iter()
        .enumerate()
        .map(|(i, g)| plant_collision(g, &format!("planted:{i}"), 0.02))
        .collect();
    let mut graphs = corpus.clone();
    graphs.extend(decoys);
    let pool = desk.embed(&graphs);
    let queries = desk.embed(&query_graphs);
    let repo = Repository::from_entries(pool).map_err(|e| e.to_string())?;
    let index = GraphIndex::new(&graphs);
    let align = AlignConfig::default();
    let (before, after) =
        filtered_search(&repo, &queries, &index, &align, 5, GroundTruthPolicy::BySource, 1).map_err(|e| e.to_string())?;
    let pb = precision_recall_f1_at_k(&before, 5).map_err(|e| e.to_string())?;
    let pa = precision_recall_f1_at_k(&after, 5).map_err(|e| e.to_string())?;
    ensure!(pa.precision > pb.precision, "NPrecision@5 {} vs Precision@5 {}", pa.precision, pb.precision);
    ensure!(pb.recall - pa.recall <= 0.02, "recall {} -> {}", pb.recall, pa.recall);
    for q in &queries {
        let (list, rest) = query_with_fallback(&repo, q, 5, GroundTruthPolicy::BySource).map_err(|e| e.to_string())?;
        let once = filter_ranked_list(&list, &index, &align, &rest).map_err(|e| e.to_string())?;
        let twice = filter_ranked_list(&once, &index, &align, &rest).map_err(|e| e.to_string())?;
        ensure!(once == twice, "filter not idempotent for {}", q.function);
    }
    Ok(format!(
        "precision {:.3} -> {:.3}, recall {:.3} -> {:.3}, idempotent",
        pb.precision, pa.precision, pb.recall, pa.recall
    ))
}

fn license_pipeline() -> Outcome {
    let desk = easy_desk();
    let held = desk.held_out();
    let distract = desk.distractors(200);
    let held_e = desk.embed(&held);
    let dis_e = desk.embed(&distract);
    let by_source = |embs: &[FunctionEmbedding]| {
        let mut m: BTreeMap<String, Vec<FunctionEmbedding>> = BTreeMap::new();
        for e in embs {
            m.entry(e.function.source_id.clone()).or_default().push(e.clone());
        }
        m.into_values().collect::<Vec<_>>()
    };
    let held_groups = by_source(&held_e);
    let dis_groups = by_source(&dis_e);
    let per_lib = 10;
    let mut hits = 0;
    let mut ranks = Vec::new();
    for trial in 0..10u64 {
        let mut rng = stream(trial, "accept-license", 0);
        let chosen = sample_in_order(&held_groups, per_lib, trial, "accept-license-query");
        let queries: Vec<FunctionEmbedding> = chosen.iter().map(|g| g[0].clone()).collect();
        let copy: Vec<FunctionEmbedding> =
            chosen.iter().map(|g| g[rng.gen_range(1..g.len())].clone()).collect();
        let mut names: Vec<String> = (0..10).map(|i| format!("lib{i:02}")).collect();
        names.shuffle(&mut rng);
        let copy_name = names[0].clone();
        let mut others = dis_groups.clone();
        others.shuffle(&mut rng);
        let mut firmware = Firmware::default();
        firmware
            .libraries
            .insert(copy_name.clone(), Repository::from_entries(copy).map_err(|e| e.to_string())?);
        for (j, name) in names[1..].iter().enumerate() {
            let entries: Vec<FunctionEmbedding> = others[j * per_lib..(j + 1) * per_lib]
                .iter()
                .map(|g| g[rng.gen_range(0..g.len())].clone())
                .collect();
            firmware
                .libraries
                .insert(name.clone(), Repository::from_entries(entries).map_err(|e| e.to_string())?);
        }
        let ranking = rank_target_libraries("query", &queries, &firmware, Some(&copy_name), None, 1)
            .map_err(|e| e.to_string())?;
        ranks.push(ranking.expected_rank);
        if ranking.expected_rank == 1 {
            hits += 1;
        }
        firmware.libraries.remove(&copy_name);
        let absent = rank_target_libraries("query", &queries, &firmware, Some(&copy_name), None, 1)
            .map_err(|e| e.to_string())?;
        ensure!(absent.expected_rank == -1, "absent library ranked {}", absent.expected_rank);
    }
    ensure!(hits >= 9, "copy ranked first in {hits}/10 trials: {ranks:?}");
    Ok(format!("copy ranked first in {hits}/10 trials, absent runs -> -1"))
}

fn tiny_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.corpus.n_sources = 30;
    cfg.corpus.variants_per_source = 3;
    cfg.embedding.d_embed = 12;
    cfg.embedding.iterations = 2;
    cfg.train.epochs = 2;
    cfg.threads = 1;
    cfg.n_pairs = 100;
    cfg
}

fn read_dir_bytes(dir: &Path, ext: &str) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .filter(|p| p.file_name().is_some_and(|n| n != "timing.csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let cfg = tiny_config();
    let mut outputs = Vec::new();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let out = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        let data = PlotData {
            roc: Some(out.roc.clone()),
            vs_k: Some(binsd::pipeline::metrics_vs_k(&out.lists, &[1, 2, 3, 4, 5]).map_err(|e| e.to_string())?),
            vs_ratio: None,
        };
        emit_report(&out.report, &data, &[PlotKind::Roc, PlotKind::MetricVsK], dir.path()).map_err(|e| e.to_string())?;
        outputs.push(read_dir_bytes(dir.path(), "csv"));
    }
    ensure!(!outputs[0].is_empty(), "no CSV written");
    ensure!(outputs[0] == outputs[1], "library pipeline CSVs differ");

    // the same through the command line, including the query CSV
    let bin = env!("CARGO_BIN_EXE_binsd");
    let work = tempfile::tempdir().unwrap();
    let cfg_path = work.path().join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let mut cli_outputs = Vec::new();
    for run in 0..2 {
        let dir = work.path().join(format!("run{run}"));
        std::fs::create_dir_all(&dir).unwrap();
        let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
        let cfg_arg = cfg_path.to_string_lossy().into_owned();
        let steps: Vec<Vec<String>> = vec![
            vec!["gen".into(), "--out".into(), p("corpus.jsonl")],
            vec!["train".into(), "--corpus".into(), p("corpus.jsonl"), "--out".into(), p("model.json")],
            vec!["index".into(), "--model".into(), p("model.json"), "--corpus".into(), p("corpus.jsonl"), "--out".into(), p("repo.bsdx")],
            vec![
                "query".into(), "--index".into(), p("repo.bsdx"), "--model".into(), p("model.json"),
                "--queries".into(), p("corpus.jsonl"), "--out".into(), p("hits.csv"),
            ],
            vec![
                "eval".into(), "--corpus".into(), p("corpus.jsonl"), "--model".into(), p("model.json"),
                "--ratios".into(), "0,0.5,1".into(), "--out".into(), dir.to_string_lossy().into_owned(),
            ],
        ];
        for step in steps {
            let status = Command::new(bin)
                .args(&step)
                .args(["--config", &cfg_arg, "--threads", "1"])
                .output()
                .unwrap();
            ensure!(
                status.status.success(),
                "binsd {} failed: {}",
                step[0],
                String::from_utf8_lossy(&status.stderr)
            );
        }
        cli_outputs.push(read_dir_bytes(&dir, "csv"));
    }
    ensure!(cli_outputs[0] == cli_outputs[1], "CLI CSVs differ");
    let names: Vec<&String> = outputs[0].keys().chain(cli_outputs[0].keys()).collect();
    Ok(format!("identical bytes across runs: {names:?}"))
}
