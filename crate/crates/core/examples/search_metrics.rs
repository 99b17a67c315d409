//! One complete desk experiment: generate, train, build a repository, query
//! it and report every ranking and pairwise metric.
//!
//!     cargo run --release --example search_metrics

use binsd::pipeline::{metrics_vs_k, run_pipeline, PipelineConfig};
use binsd::search::query_batch;

fn main() -> binsd::Result<()> {
    let cfg = PipelineConfig::default();
    let out = run_pipeline(&cfg)?;
    println!(
        "{} queries against a {}-entry repository ({} protocol)",
        out.queries.len(),
        out.repository.len(),
        cfg.protocol
    );
    print!("{}", out.report.to_csv_string()?);

    let lists = query_batch(&out.repository, &out.queries, 10, cfg.policy, cfg.threads)?;
    println!("\nK  precision  recall  map");
    for (k, m) in metrics_vs_k(&lists, &[1, 3, 5, 10])? {
        println!("{k:<2} {:>9.3} {:>7.3} {:>5.3}", m.precision, m.recall, m.map);
    }
    print!("\n{}", binsd::report::timing_report(&out.timings));
    Ok(())
}
