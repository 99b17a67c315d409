//! Summation readouts can collide: different vertex-state multisets with the
//! same sum give the same function embedding. The collision lab tells such a
//! pair apart from a genuine match by comparing vertex states.
//!
//!     cargo run --release --example embed_and_collide

use binsd::collision::{collision_evidence, CollisionThresholds, Observed};
use binsd::embed::{embed_function, readout, EmbeddingConfig, FunctionEmbedding, ModelParams, VertexStates};
use binsd::linalg::Matrix;
use binsd::synth::{generate_source_variants, CorpusSpec};

fn main() -> binsd::Result<()> {
    let cfg = EmbeddingConfig {
        d_feat: 2,
        d_embed: 2,
        iterations: 1,
        sigma_depth: 1,
        ..EmbeddingConfig::default()
    };
    let mut params = ModelParams::zeros(&cfg);
    params.w2 = Matrix::identity(2);
    let cancel = VertexStates::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]);
    println!("readout of (1,-1) + (-1,1) = {:?}", readout(&cancel, &params)?);

    let spec = CorpusSpec::new(2, 2, 9);
    let a = generate_source_variants(&spec, 0);
    let b = generate_source_variants(&spec, 1);
    let states_a = VertexStates::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0], &[0.6, 0.8]]);
    let states_b = VertexStates::from_rows(&[&[0.6, 0.8]]);
    let ea = FunctionEmbedding {
        vector: readout(&states_a, &params)?,
        function: a[0].function_ref(),
    };
    let eb = FunctionEmbedding {
        vector: readout(&states_b, &params)?,
        function: b[0].function_ref(),
    };
    let t = CollisionThresholds::default();
    let ev = collision_evidence(
        Observed { embedding: &ea, states: &states_a },
        Observed { embedding: &eb, states: &states_b },
        &t,
    )?;
    println!(
        "constructed pair: cosine {:.3}, vertex-state distance {:.3} -> {:?}",
        ev.cosine, ev.node_distance, ev.verdict
    );

    // a real model on real variants of one source
    let cfg = EmbeddingConfig {
        d_feat: spec.d_feat,
        d_embed: 16,
        iterations: 3,
        ..EmbeddingConfig::default()
    };
    let params = ModelParams::init(&cfg);
    let (e0, s0) = embed_function(&a[0], &params, &cfg)?;
    let (e1, s1) = embed_function(&a[1], &params, &cfg)?;
    let ev = collision_evidence(
        Observed { embedding: &e0, states: &s0 },
        Observed { embedding: &e1, states: &s1 },
        &t,
    )?;
    println!(
        "two variants of {}: cosine {:.3}, vertex-state distance {:.3} -> {:?}",
        a[0].source_id, ev.cosine, ev.node_distance, ev.verdict
    );
    Ok(())
}
