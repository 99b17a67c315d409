//! Search a firmware-like pool for the top 10 matches of known vulnerable
//! functions and count how many hits are true variants.
//!
//!     cargo run --release --example vuln_search

use binsd::apps::{vuln_search, DEFAULT_VULN_K};
use binsd::pipeline::{run_pipeline, PipelineConfig};
use binsd::search::Repository;

fn main() -> binsd::Result<()> {
    let out = run_pipeline(&PipelineConfig::default())?;
    // treat a handful of held-out functions as the vulnerable ones
    let vulnerable = &out.queries[..out.queries.len().min(5)];
    let others: Vec<_> = out
        .pool
        .iter()
        .filter(|e| !vulnerable.iter().any(|v| v.function == e.function))
        .cloned()
        .collect();
    let pool = Repository::from_entries(others)?;
    for r in vuln_search(vulnerable, &pool, DEFAULT_VULN_K, 0)? {
        println!(
            "{}: similarity {:.3}..{:.3}, {} of {} hits are variants of the same source",
            r.query,
            r.min_similarity,
            r.max_similarity,
            r.confirmed,
            r.hits.len()
        );
    }
    Ok(())
}
