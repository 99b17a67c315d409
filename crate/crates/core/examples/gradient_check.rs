//! Compare the hand-derived gradients of the siamese cosine loss with
//! central finite differences.
//!
//!     cargo run --release --example gradient_check

use binsd::embed::{pair_gradients, pair_loss, EmbeddingConfig, Label, ModelParams};
use binsd::synth::{generate_source_variants, CorpusSpec, TransformProfile};

fn main() -> binsd::Result<()> {
    let mut spec = CorpusSpec::new(2, 2, 5);
    spec.node_count_range = (3, 6);
    spec.d_feat = 3;
    spec.transform_profile = TransformProfile::hard();
    let a = generate_source_variants(&spec, 0);
    let b = generate_source_variants(&spec, 1);
    let cfg = EmbeddingConfig {
        d_feat: 3,
        d_embed: 4,
        iterations: 2,
        sigma_depth: 2,
        ..EmbeddingConfig::default()
    };
    let params = ModelParams::init(&cfg);
    let names = params.matrix_names();

    for (x, y, label) in [(&a[0], &a[1], Label::Similar), (&a[0], &b[0], Label::Dissimilar)] {
        let grads = pair_gradients(x, y, label, &params, &cfg)?;
        println!("{label:?} pair, loss {:.3e}", pair_loss(x, y, label, &params, &cfg)?);
        for (m, g) in grads.matrices().iter().enumerate() {
            let mut worst = 0.0f64;
            for (k, &analytic) in g.data.iter().enumerate() {
                let h = 1e-5;
                let mut plus = params.clone();
                plus.matrices_mut()[m].data[k] += h;
                let mut minus = params.clone();
                minus.matrices_mut()[m].data[k] -= h;
                let numeric = (pair_loss(x, y, label, &plus, &cfg)? - pair_loss(x, y, label, &minus, &cfg)?) / (2.0 * h);
                if analytic.abs() > 1e-8 {
                    worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()));
                }
            }
            println!("  {:>4}: worst relative error {worst:.2e}", names[m]);
        }
    }
    Ok(())
}
