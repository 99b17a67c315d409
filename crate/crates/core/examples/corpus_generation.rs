//! Generate easy and hard synthetic corpora, check them, and look at how far
//! variants drift from their source function.
//!
//!     cargo run --release --example corpus_generation

use binsd::acfg::{parse_acfg_stream, validate_acfg, vertex_count_relative_diff, write_corpus_file};
use binsd::synth::{generate_corpus, split_dataset, CorpusSpec, TransformProfile};

fn main() -> binsd::Result<()> {
    for profile in ["easy", "hard", "zero_jitter"] {
        let mut spec = CorpusSpec::new(50, 4, 42);
        spec.transform_profile = TransformProfile::named(profile)?;
        spec.rename_fraction = 0.2;
        let corpus = generate_corpus(&spec)?;
        assert!(corpus.functions.iter().all(|g| validate_acfg(g, spec.d_feat).is_valid()));

        // relative vertex-count difference between each source and its variants
        let diffs: Vec<f64> = corpus
            .functions
            .chunks(spec.variants_per_source)
            .flat_map(|group| group[1..].iter().map(|v| vertex_count_relative_diff(&group[0], v)))
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let renamed = corpus
            .functions
            .chunks(spec.variants_per_source)
            .flat_map(|group| group[1..].iter().filter(|v| v.function_name != group[0].function_name))
            .count();
        let split = split_dataset(&corpus.functions, 0.8, 42)?;
        println!(
            "{profile:>11}: {} functions, mean vertex diff {mean:.3}, {renamed} renamed, split {}/{}/{}",
            corpus.functions.len(),
            split.train.len(),
            split.validation.len(),
            split.test.len()
        );
    }

    let dir = tempfile_dir();
    let path = dir.join("corpus.jsonl");
    let corpus = generate_corpus(&CorpusSpec::new(10, 3, 1))?;
    write_corpus_file(&path, &corpus)?;
    let back = parse_acfg_stream(&path)?;
    assert_eq!(back.functions, corpus.functions);
    println!("round-tripped {} functions through {}", back.functions.len(), path.display());
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("binsd-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}
