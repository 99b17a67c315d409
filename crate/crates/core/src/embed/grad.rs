//! Hand-derived reverse pass for the siamese cosine loss
//! `L = (cos(h_A, h_B) − y)²`.

use super::train::Label;
use super::{forward, EmbeddingConfig, ModelParams, Trace};
use crate::acfg::AttributedCfg;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

fn cosine_parts(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let c = if a == b { 1.0 } else { dot(a, b) / (na * nb) };
    Ok((c, na, nb))
}

pub fn pair_loss(
    a: &AttributedCfg,
    b: &AttributedCfg,
    label: Label,
    params: &ModelParams,
    cfg: &EmbeddingConfig,
) -> Result<f64> {
    let ha = forward(a, params, cfg, false)?.h_g;
    let hb = forward(b, params, cfg, false)?.h_g;
    let (c, _, _) = cosine_parts(&ha, &hb)?;
    Ok((c - label.value()).powi(2))
}

pub fn pair_gradients(
    a: &AttributedCfg,
    b: &AttributedCfg,
    label: Label,
    params: &ModelParams,
    cfg: &EmbeddingConfig,
) -> Result<Gradients> {
    pair_loss_and_gradients(a, b, label, params, cfg).map(|(_, g)| g)
}

/// Loss and its exact gradient with respect to every parameter matrix.
pub fn pair_loss_and_gradients(
    a: &AttributedCfg,
    b: &AttributedCfg,
    label: Label,
    params: &ModelParams,
    cfg: &EmbeddingConfig,
) -> Result<(f64, Gradients)> {
    let fa = forward(a, params, cfg, true)?;
    let fb = forward(b, params, cfg, true)?;
    let (ha, hb) = (&fa.h_g, &fb.h_g);
    let (c, na, nb) = cosine_parts(ha, hb)?;
    let y = label.value();
    let loss = (c - y).powi(2);

    let mut grads = ModelParams::zeros(cfg);
    let dl_dc = 2.0 * (c - y);
    if dl_dc == 0.0 {
        return Ok((loss, grads));
    }
    // ∂c/∂a = b/(|a||b|) − c·a/|a|²
    let g_ha: Vec<f64> = ha
        .iter()
        .zip(hb)
        .map(|(x, z)| dl_dc * (z / (na * nb) - c * x / (na * na)))
        .collect();
    let g_hb: Vec<f64> = hb
        .iter()
        .zip(ha)
        .map(|(z, x)| dl_dc * (x / (na * nb) - c * z / (nb * nb)))
        .collect();

    backward_graph(a, fa.trace.as_ref().expect("trace kept"), params, cfg, &g_ha, &mut grads);
    backward_graph(b, fb.trace.as_ref().expect("trace kept"), params, cfg, &g_hb, &mut grads);
    Ok((loss, grads))
}

/// Accumulate `∂L/∂θ` for one graph given `∂L/∂h_G`.
fn backward_graph(
    g: &AttributedCfg,
    trace: &Trace,
    params: &ModelParams,
    cfg: &EmbeddingConfig,
    g_hg: &[f64],
    grads: &mut Gradients,
) {
    let n = g.node_count();
    let p = cfg.d_embed;
    let depth = params.sigma.len();
    let neighbors = g.undirected_neighbors();
    let features = g.features_by_id();

    grads.w2.add_outer(g_hg, &trace.sum);
    let mut g_sum = vec![0.0; p];
    params.w2.tmatvec_add(g_hg, &mut g_sum);

    // every vertex contributes to the sum with weight one
    let mut g_mu = Matrix::zeros(n, p);
    for i in 0..n {
        g_mu.data[i * p..(i + 1) * p].copy_from_slice(&g_sum);
    }

    for t in (0..cfg.iterations).rev() {
        let mu_next = &trace.mus[t + 1];
        let mu_prev = &trace.mus[t];
        let hs = &trace.hs[t];
        let mut g_prev = Matrix::zeros(n, p);

        for i in 0..n {
            let g_pre: Vec<f64> = g_mu
                .row(i)
                .iter()
                .zip(mu_next.row(i))
                .map(|(gm, m)| gm * (1.0 - m * m))
                .collect();
            if g_pre.iter().all(|v| *v == 0.0) {
                continue;
            }

            grads.w1.add_outer(&g_pre, features[i]);
            if cfg.use_prev_term {
                grads.u.add_outer(&g_pre, mu_prev.row(i));
                params
                    .u
                    .tmatvec_add(&g_pre, &mut g_prev.data[i * p..(i + 1) * p]);
            }

            let zs = &trace.zs[t][i];
            let mut g_out = g_pre;
            for l in (0..depth).rev() {
                if l == 0 {
                    grads.sigma[0].add_outer(&g_out, hs.row(i));
                } else {
                    let input: Vec<f64> = zs[l - 1].iter().map(|v| v.max(0.0)).collect();
                    grads.sigma[l].add_outer(&g_out, &input);
                }
                let mut g_in = vec![0.0; p];
                params.sigma[l].tmatvec_add(&g_out, &mut g_in);
                if l > 0 {
                    for (gi, z) in g_in.iter_mut().zip(&zs[l - 1]) {
                        if *z <= 0.0 {
                            *gi = 0.0;
                        }
                    }
                }
                g_out = g_in;
            }

            for &r in &neighbors[i] {
                for (dst, v) in g_prev.data[r * p..(r + 1) * p].iter_mut().zip(&g_out) {
                    *dst += v;
                }
            }
        }
        g_mu = g_prev;
    }
}
