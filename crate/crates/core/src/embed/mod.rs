//! Structure2Vec-style graph embedding.
//!
//! For `T` synchronous rounds every vertex sums the previous states of its
//! undirected neighbors, then updates
//!
//! ```text
//! h_i      = Σ_{r ∈ N(i)} μ_r
//! μ_i'     = tanh(W1·x_i + σ(h_i) + U·μ_i)       σ(h) = P_L·relu(…relu(P_1·h))
//! h_G      = W2 · Σ_i μ_i
//! ```
//!
//! with `μ⁰ = 0`. The `U` term is only active when
//! [`EmbeddingConfig::use_prev_term`] is set. The graph-level readout is a
//! plain sum, which is what makes distinct vertex-state multisets collide.

mod baseline;
mod checkpoint;
mod grad;
mod train;

pub use baseline::{adjacency_signature, concat_embedding};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION,
};
pub use grad::{pair_gradients, pair_loss, pair_loss_and_gradients, Gradients};
pub use train::{
    mean_pair_loss, sample_pairs, train_model, train_model_from, train_on_corpus, Label,
    TrainHyper, TrainingLog, TrainingPair,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acfg::{AttributedCfg, FunctionRef};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub d_feat: usize,
    pub d_embed: usize,
    /// Number of aggregation rounds `T`.
    pub iterations: usize,
    /// Depth `L` of the ReLU chain applied to the aggregated neighbor state.
    pub sigma_depth: usize,
    pub use_prev_term: bool,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            d_feat: 8,
            d_embed: 64,
            iterations: 5,
            sigma_depth: 2,
            use_prev_term: false,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_embed == 0 || self.iterations == 0 || self.sigma_depth == 0 || self.d_feat == 0 {
            return Err(Error::invalid(
                "d_feat, d_embed, iterations and sigma_depth must all be >= 1",
            ));
        }
        Ok(())
    }
}

/// All learnable matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `d_embed × d_feat` feature lift.
    pub w1: Matrix,
    /// `P_1 … P_L`, each `d_embed × d_embed`.
    pub sigma: Vec<Matrix>,
    /// Previous-state term, kept at zero when `use_prev_term` is off.
    pub u: Matrix,
    /// Readout projection.
    pub w2: Matrix,
}

impl ModelParams {
    pub fn zeros(cfg: &EmbeddingConfig) -> Self {
        let p = cfg.d_embed;
        ModelParams {
            w1: Matrix::zeros(p, cfg.d_feat),
            sigma: (0..cfg.sigma_depth).map(|_| Matrix::zeros(p, p)).collect(),
            u: Matrix::zeros(p, p),
            w2: Matrix::zeros(p, p),
        }
    }

    /// Uniform in `[-1/√d_embed, 1/√d_embed]`, seeded by `cfg.seed`.
    pub fn init(cfg: &EmbeddingConfig) -> Self {
        let mut params = ModelParams::zeros(cfg);
        let bound = 1.0 / (cfg.d_embed as f64).sqrt();
        let use_u = cfg.use_prev_term;
        for (k, m) in params.matrices_mut().into_iter().enumerate() {
            let mut r = rng::stream(cfg.seed, "init", k as u64);
            m.data.iter_mut().for_each(|v| *v = r.gen_range(-bound..=bound));
        }
        if !use_u {
            params.u = Matrix::zeros(cfg.d_embed, cfg.d_embed);
        }
        params
    }

    /// Matrices in a fixed order: W1, P_1..P_L, U, W2.
    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.w1];
        v.extend(self.sigma.iter());
        v.push(&self.u);
        v.push(&self.w2);
        v
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.w1];
        v.extend(self.sigma.iter_mut());
        v.push(&mut self.u);
        v.push(&mut self.w2);
        v
    }

    /// Checkpoint names matching [`ModelParams::matrices`] order.
    pub fn matrix_names(&self) -> Vec<String> {
        let mut names = vec!["W1".to_string()];
        names.extend((1..=self.sigma.len()).map(|l| format!("P{l}")));
        names.push("U".into());
        names.push("W2".into());
        names
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices().iter().map(|m| m.data.len()).sum()
    }

    pub fn check(&self, cfg: &EmbeddingConfig) -> Result<()> {
        let p = cfg.d_embed;
        let mismatch = |what: &str, m: &Matrix, r: usize, c: usize| {
            Error::ShapeMismatch(format!("{what} is {}x{}, expected {r}x{c}", m.rows, m.cols))
        };
        if self.w1.shape() != (p, cfg.d_feat) {
            return Err(mismatch("W1", &self.w1, p, cfg.d_feat));
        }
        if self.sigma.len() != cfg.sigma_depth {
            return Err(Error::ShapeMismatch(format!(
                "{} sigma layers, expected {}",
                self.sigma.len(),
                cfg.sigma_depth
            )));
        }
        for m in &self.sigma {
            if m.shape() != (p, p) {
                return Err(mismatch("P", m, p, p));
            }
        }
        if self.u.shape() != (p, p) {
            return Err(mismatch("U", &self.u, p, p));
        }
        if self.w2.shape() != (p, p) {
            return Err(mismatch("W2", &self.w2, p, p));
        }
        if !self.matrices().iter().all(|m| m.is_finite()) {
            return Err(Error::invalid("parameters contain non-finite values"));
        }
        Ok(())
    }
}

/// Final per-vertex states `μ`, one row per vertex (indexed by node id).
#[derive(Clone, Debug, PartialEq)]
pub struct VertexStates {
    pub mu: Matrix,
}

impl VertexStates {
    pub fn new(mu: Matrix) -> Self {
        VertexStates { mu }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        VertexStates {
            mu: Matrix::from_rows(rows),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.mu.rows
    }

    pub fn dim(&self) -> usize {
        self.mu.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.mu.row(i)
    }
}

/// Graph-level embedding `h_G` tagged with the function it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionEmbedding {
    pub vector: Vec<f64>,
    pub function: FunctionRef,
}

/// `Σ_{r ∈ N(i)} μ_r` over the undirected neighborhood of vertex `i`.
pub fn aggregate_neighbors(states: &VertexStates, g: &AttributedCfg, i: usize) -> Result<Vec<f64>> {
    let n = g.node_count();
    if states.vertex_count() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} state rows for a graph with {n} vertices",
            states.vertex_count()
        )));
    }
    if i >= n {
        return Err(Error::VertexOutOfRange { index: i, count: n });
    }
    let mut neighbors: Vec<usize> = g
        .edges
        .iter()
        .filter_map(|&(a, b)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
        .collect();
    neighbors.sort_unstable();
    neighbors.dedup();
    let mut h = vec![0.0; states.dim()];
    for r in neighbors {
        for (acc, v) in h.iter_mut().zip(states.row(r)) {
            *acc += v;
        }
    }
    Ok(h)
}

/// `σ(h)`; when `pre_activations` is given, the inputs to each inner ReLU are
/// appended to it (L−1 vectors).
pub(crate) fn sigma_chain(
    layers: &[Matrix],
    h: &[f64],
    mut pre_activations: Option<&mut Vec<Vec<f64>>>,
) -> Vec<f64> {
    let last = layers.len() - 1;
    let mut x = h.to_vec();
    for (l, p) in layers.iter().enumerate() {
        let z = p.matvec(&x);
        if l == last {
            return z;
        }
        x = z.iter().map(|v| v.max(0.0)).collect();
        if let Some(store) = pre_activations.as_deref_mut() {
            store.push(z);
        }
    }
    unreachable!("sigma chain has at least one layer")
}

/// One vertex update: `tanh(W1·x + σ(h) + U·μ_prev)`.
pub fn union_update(
    h: &[f64],
    mu_prev: &[f64],
    x: &[f64],
    params: &ModelParams,
    cfg: &EmbeddingConfig,
) -> Result<Vec<f64>> {
    let p = cfg.d_embed;
    if h.len() != p || mu_prev.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: if h.len() != p { h.len() } else { mu_prev.len() },
        });
    }
    if x.len() != params.w1.cols {
        return Err(Error::DimensionMismatch {
            expected: params.w1.cols,
            found: x.len(),
        });
    }
    params.check(cfg)?;
    let mut pre = sigma_chain(&params.sigma, h, None);
    params.w1.matvec_add(x, &mut pre);
    if cfg.use_prev_term {
        params.u.matvec_add(mu_prev, &mut pre);
    }
    Ok(pre.into_iter().map(f64::tanh).collect())
}

/// `W2 · Σ_i μ_i`.
pub fn readout(states: &VertexStates, params: &ModelParams) -> Result<Vec<f64>> {
    if states.vertex_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    if states.dim() != params.w2.cols {
        return Err(Error::DimensionMismatch {
            expected: params.w2.cols,
            found: states.dim(),
        });
    }
    Ok(params.w2.matvec(&vertex_sum(&states.mu)))
}

pub(crate) fn vertex_sum(mu: &Matrix) -> Vec<f64> {
    let mut sum = vec![0.0; mu.cols];
    for r in 0..mu.rows {
        for (s, v) in sum.iter_mut().zip(mu.row(r)) {
            *s += v;
        }
    }
    sum
}

/// Intermediate values kept for the backward pass.
pub(crate) struct Trace {
    /// `μ^t` for t = 0..=T.
    pub mus: Vec<Matrix>,
    /// Aggregated neighbor states per round (t = 1..=T).
    pub hs: Vec<Matrix>,
    /// Inner ReLU pre-activations per round, per vertex, per layer.
    pub zs: Vec<Vec<Vec<Vec<f64>>>>,
    pub sum: Vec<f64>,
}

pub(crate) struct Forward {
    pub h_g: Vec<f64>,
    pub states: Matrix,
    pub trace: Option<Trace>,
}

fn check_graph(g: &AttributedCfg, params: &ModelParams, cfg: &EmbeddingConfig) -> Result<()> {
    params.check(cfg)?;
    if g.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    if let Some(bad) = g.nodes.iter().find(|n| n.features.len() != cfg.d_feat) {
        return Err(Error::ShapeMismatch(format!(
            "node {} has {} features, model expects {}",
            bad.node_id,
            bad.features.len(),
            cfg.d_feat
        )));
    }
    Ok(())
}

pub(crate) fn forward(
    g: &AttributedCfg,
    params: &ModelParams,
    cfg: &EmbeddingConfig,
    keep_trace: bool,
) -> Result<Forward> {
    check_graph(g, params, cfg)?;
    let n = g.node_count();
    let p = cfg.d_embed;
    let neighbors = g.undirected_neighbors();
    let lifted: Vec<Vec<f64>> = g
        .features_by_id()
        .into_iter()
        .map(|x| params.w1.matvec(x))
        .collect();

    let mut mu = Matrix::zeros(n, p);
    let mut trace = keep_trace.then(|| Trace {
        mus: vec![mu.clone()],
        hs: Vec::with_capacity(cfg.iterations),
        zs: Vec::with_capacity(cfg.iterations),
        sum: Vec::new(),
    });

    let mut h = Matrix::zeros(n, p);
    for _ in 0..cfg.iterations {
        h.data.iter_mut().for_each(|v| *v = 0.0);
        for (i, nbrs) in neighbors.iter().enumerate() {
            let row = &mut h.data[i * p..(i + 1) * p];
            for &r in nbrs {
                for (acc, v) in row.iter_mut().zip(mu.row(r)) {
                    *acc += v;
                }
            }
        }

        let mut next = Matrix::zeros(n, p);
        let mut round_zs = Vec::new();
        for (i, lift) in lifted.iter().enumerate() {
            let mut zs = keep_trace.then(Vec::new);
            let mut pre = sigma_chain(&params.sigma, h.row(i), zs.as_mut());
            for (a, b) in pre.iter_mut().zip(lift) {
                *a += b;
            }
            if cfg.use_prev_term {
                params.u.matvec_add(mu.row(i), &mut pre);
            }
            for (dst, v) in next.data[i * p..(i + 1) * p].iter_mut().zip(pre) {
                *dst = v.tanh();
            }
            if let Some(zs) = zs {
                round_zs.push(zs);
            }
        }
        if let Some(t) = trace.as_mut() {
            t.hs.push(h.clone());
            t.zs.push(round_zs);
            t.mus.push(next.clone());
        }
        mu = next;
    }

    let sum = vertex_sum(&mu);
    let h_g = params.w2.matvec(&sum);
    if let Some(t) = trace.as_mut() {
        t.sum = sum;
    }
    Ok(Forward {
        h_g,
        states: mu,
        trace,
    })
}

/// Run `T` synchronous rounds from `μ⁰ = 0` and read out the graph embedding.
pub fn embed_function(
    g: &AttributedCfg,
    params: &ModelParams,
    cfg: &EmbeddingConfig,
) -> Result<(FunctionEmbedding, VertexStates)> {
    let fwd = forward(g, params, cfg, false)?;
    Ok((
        FunctionEmbedding {
            vector: fwd.h_g,
            function: g.function_ref(),
        },
        VertexStates::new(fwd.states),
    ))
}

/// Cosine similarity; identical vectors give exactly 1.0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = dot(a, a);
    let nb = dot(b, b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    if a == b {
        return Ok(1.0);
    }
    Ok((dot(a, b) / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}
