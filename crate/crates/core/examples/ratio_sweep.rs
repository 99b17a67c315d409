//! How repository construction moves the numbers: inject a growing share of
//! the query functions themselves, then compare random repositories with
//! ones that exclude the queries.
//!
//!     cargo run --release --example ratio_sweep

use binsd::pipeline::{ratio_sweep, run_pipeline, PipelineConfig};
use binsd::search::{build_repository, query_batch, Protocol};
use binsd::metrics::ranking_metrics;
use binsd::synth::TransformProfile;
use binsd::FunctionRef;

fn main() -> binsd::Result<()> {
    let mut cfg = PipelineConfig::default();
    cfg.corpus.n_sources = 120;
    cfg.corpus.transform_profile = TransformProfile::hard();
    let out = run_pipeline(&cfg)?;
    let refs: Vec<FunctionRef> = out.queries.iter().map(|q| q.function.clone()).collect();
    let size = out.pool.len() - refs.len();

    println!("ratio  rank1  mrr@5");
    let sweep = ratio_sweep(&out.pool, &out.queries, &[0.0, 0.25, 0.5, 0.75, 1.0], size, 5, cfg.policy, cfg.seed, 1)?;
    for (r, m) in &sweep {
        println!("{r:<5}  {:.3}  {:.3}", m.rank1, m.mrr);
    }
    for protocol in [Protocol::Random, Protocol::ExcludeIdentical] {
        let repo = build_repository(&out.pool, &refs, protocol, size, cfg.seed)?;
        let m = ranking_metrics(&query_batch(&repo, &out.queries, 5, cfg.policy, 1)?, 5)?;
        println!("{protocol:>8}: rank1 {:.3}, precision@5 {:.3}", m.rank1, m.precision);
    }
    Ok(())
}
