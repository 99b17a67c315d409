//! A model can separate random similar/dissimilar pairs almost perfectly and
//! still retrieve poorly once the repository holds many functions.
//!
//!     cargo run --release --example auc_vs_search

use binsd::pipeline::{run_pipeline, PipelineConfig};
use binsd::search::Protocol;
use binsd::synth::TransformProfile;

fn main() -> binsd::Result<()> {
    for profile in [TransformProfile::easy(), TransformProfile::hard()] {
        let mut cfg = PipelineConfig::default();
        cfg.corpus.n_sources = 150;
        cfg.corpus.transform_profile = profile.clone();
        cfg.protocol = Protocol::ExcludeIdentical;
        cfg.n_pairs = 2000;
        cfg.train.learning_rate = 1e-3;
        let out = run_pipeline(&cfg)?;
        println!(
            "{:>5}: AUC {:.4}  acc {:.3} (threshold {:.3})  precision@5 {:.3}  rank1 {:.3}",
            profile.name,
            out.report.auc,
            out.report.acc,
            out.report.threshold,
            out.report.precision_k,
            out.report.rank1
        );
    }
    Ok(())
}
