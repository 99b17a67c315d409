//! Rank the libraries of a synthetic firmware image by how much they look
//! like a query library. One library is the query built for other targets.
//!
//!     cargo run --release --example license_detection

use binsd::apps::{rank_target_libraries, Firmware};
use binsd::embed::FunctionEmbedding;
use binsd::pipeline::{run_pipeline, PipelineConfig};
use binsd::search::Repository;

fn main() -> binsd::Result<()> {
    let mut cfg = PipelineConfig::default();
    cfg.corpus.n_sources = 100;
    let out = run_pipeline(&cfg)?;
    let per_source: Vec<&[FunctionEmbedding]> = out.pool.chunks(cfg.corpus.variants_per_source).collect();

    let lib = 8;
    let query: Vec<FunctionEmbedding> = per_source[..lib].iter().map(|v| v[0].clone()).collect();
    let mut firmware = Firmware::default();
    firmware.libraries.insert(
        "libz_arm".into(),
        Repository::from_entries(per_source[..lib].iter().map(|v| v[2].clone()).collect())?,
    );
    for (i, chunk) in per_source[lib..].chunks(lib).take(6).enumerate() {
        let entries = chunk.iter().map(|v| v[1].clone()).collect();
        firmware.libraries.insert(format!("lib{i}"), Repository::from_entries(entries)?);
    }

    let ranking = rank_target_libraries("libz", &query, &firmware, Some("libz_arm"), None, 0)?;
    for l in &ranking.libraries {
        println!("{:>2}. {:<9} S = {:.4}", l.rank, l.library, l.s_qt);
    }
    println!("libz_arm ranked {}", ranking.expected_rank);

    firmware.libraries.remove("libz_arm");
    let absent = rank_target_libraries("libz", &query, &firmware, Some("libz_arm"), None, 0)?;
    println!("without it: {}", absent.expected_rank);
    Ok(())
}
