//! The untrained adjacency-image baseline: structurally different CFGs whose
//! edges pool into the same cells get identical signatures. Concatenating an
//! auxiliary feature vector breaks such ties.
//!
//!     cargo run --release --example adjacency_baseline

use binsd::acfg::{Arch, AttributedCfg, BasicBlockNode, CompilationTag, FeatureVector, OptLevel};
use binsd::embed::{adjacency_signature, concat_embedding, cosine_similarity, FunctionEmbedding};

fn graph(name: &str, n: usize, edges: Vec<(usize, usize)>) -> AttributedCfg {
    AttributedCfg {
        function_name: name.into(),
        source_id: name.into(),
        compilation: CompilationTag::new(Arch::X64, OptLevel::O2, "gcc"),
        nodes: (0..n)
            .map(|i| BasicBlockNode {
                node_id: i,
                features: FeatureVector(vec![1.0]),
            })
            .collect(),
        edges,
    }
}

fn main() -> binsd::Result<()> {
    // a 40-block chain and a chain of 10-block stars: different shapes, but
    // with 10×10 pooling cells both put 9 edges in each diagonal cell and one
    // edge in each cell just above it
    let chain: Vec<(usize, usize)> = (0..39).map(|i| (i, i + 1)).collect();
    let mut stars: Vec<(usize, usize)> = Vec::new();
    for block in 0..4 {
        let base = block * 10;
        stars.extend((1..10).map(|j| (base, base + j)));
        if block < 3 {
            stars.push((base + 9, base + 10));
        }
    }
    let a = graph("chain", 40, chain);
    let b = graph("stars", 40, stars);
    let grid = 4;
    let sa = adjacency_signature(&a, grid);
    let sb = adjacency_signature(&b, grid);
    println!("edges differ: {}", a.edges != b.edges);
    println!("signature cosine: {:.6}", cosine_similarity(&sa, &sb)?);

    let ha = FunctionEmbedding { vector: sa, function: a.function_ref() };
    let hb = FunctionEmbedding { vector: sb, function: b.function_ref() };
    let ca = concat_embedding(&ha, &[3.0, 1.0, 0.0]);
    let cb = concat_embedding(&hb, &[0.0, 1.0, 4.0]);
    println!(
        "after concatenating string features: cosine {:.6}",
        cosine_similarity(&ca.vector, &cb.vector)?
    );
    Ok(())
}
