//! Untrained adjacency-image signature and embedding concatenation.

use super::FunctionEmbedding;
use crate::acfg::AttributedCfg;
use crate::linalg::norm;

/// Mean-pool the `V×V` 0/1 adjacency matrix (rows/columns ordered by node id,
/// zero-padded up to a multiple of `grid`) onto a `grid×grid` image, flatten
/// row-major and L2-normalize. Graphs without edges give the zero vector.
///
/// Distinct graphs whose edges land in the same pooled cells get identical
/// signatures, which is how adjacency-image models confuse functions with
/// similar CFG shapes.
pub fn adjacency_signature(g: &AttributedCfg, grid: usize) -> Vec<f64> {
    let grid = grid.max(1);
    let n = g.node_count();
    let cell = n.div_ceil(grid).max(1);
    let mut pooled = vec![0.0; grid * grid];
    for &(a, b) in &g.edges {
        pooled[(a / cell) * grid + b / cell] += 1.0;
    }
    let area = (cell * cell) as f64;
    pooled.iter_mut().for_each(|v| *v /= area);
    let len = norm(&pooled);
    if len > 0.0 {
        pooled.iter_mut().for_each(|v| *v /= len);
    }
    pooled
}

/// `[h ; aux/‖aux‖]`. A zero `aux` is appended unchanged.
pub fn concat_embedding(h: &FunctionEmbedding, aux: &[f64]) -> FunctionEmbedding {
    let len = norm(aux);
    let mut vector = h.vector.clone();
    if len > 0.0 {
        vector.extend(aux.iter().map(|v| v / len));
    } else {
        vector.extend_from_slice(aux);
    }
    FunctionEmbedding {
        vector,
        function: h.function.clone(),
    }
}
