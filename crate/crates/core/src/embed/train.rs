use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grad::{pair_loss_and_gradients, Gradients};
use super::{forward, EmbeddingConfig, ModelParams};
use crate::acfg::AttributedCfg;
use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::linalg::Matrix;
use crate::rng::{self, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Similar,
    Dissimilar,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Similar => 1.0,
            Label::Dissimilar => -1.0,
        }
    }
}

/// Two functions labeled +1 when compiled from the same source, −1 otherwise.
#[derive(Clone, Copy, Debug)]
pub struct TrainingPair<'g> {
    pub a: &'g AttributedCfg,
    pub b: &'g AttributedCfg,
    pub label: Label,
}

impl<'g> TrainingPair<'g> {
    pub fn new(a: &'g AttributedCfg, b: &'g AttributedCfg) -> Self {
        let label = if a.source_id == b.source_id {
            Label::Similar
        } else {
            Label::Dissimilar
        };
        TrainingPair { a, b, label }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// 1 = deterministic single-threaded reference path.
    pub threads: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 32,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean loss over the training pairs before the first update.
    pub initial_loss: f64,
    /// Running mean loss observed during each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean loss over the training pairs after the last update.
    pub final_loss: f64,
}

/// Adam with the usual defaults (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
struct Adam {
    lr: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros = || {
            params
                .matrices()
                .iter()
                .map(|m| Matrix::zeros(m.rows, m.cols))
                .collect()
        };
        Adam {
            lr,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ModelParams, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.step);
        let bc2 = 1.0 - Self::BETA2.powi(self.step);
        for (((p, g), m), v) in params
            .matrices_mut()
            .into_iter()
            .zip(grads.matrices())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = Self::BETA1 * m.data[k] + (1.0 - Self::BETA1) * gk;
                v.data[k] = Self::BETA2 * v.data[k] + (1.0 - Self::BETA2) * gk * gk;
                let m_hat = m.data[k] / bc1;
                let v_hat = v.data[k] / bc2;
                p.data[k] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
            }
        }
    }
}

fn check_pairs(pairs: &[TrainingPair<'_>]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    let pos = pairs.iter().any(|p| p.label == Label::Similar);
    let neg = pairs.iter().any(|p| p.label == Label::Dissimilar);
    if !(pos && neg) {
        return Err(Error::invalid("training pairs need both labels"));
    }
    Ok(())
}

/// Mean pair loss with the current parameters.
pub fn mean_pair_loss(
    pairs: &[TrainingPair<'_>],
    params: &ModelParams,
    cfg: &EmbeddingConfig,
    threads: usize,
) -> Result<f64> {
    let losses = map_ordered(pairs, threads, |p| -> Result<f64> {
        let ha = forward(p.a, params, cfg, false)?.h_g;
        let hb = forward(p.b, params, cfg, false)?.h_g;
        let c = super::cosine_similarity(&ha, &hb)?;
        Ok((c - p.label.value()).powi(2))
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / pairs.len() as f64)
}

struct Trainer<'c> {
    cfg: &'c EmbeddingConfig,
    hyper: &'c TrainHyper,
    params: ModelParams,
    adam: Adam,
}

impl<'c> Trainer<'c> {
    fn new(params: ModelParams, cfg: &'c EmbeddingConfig, hyper: &'c TrainHyper) -> Self {
        let adam = Adam::new(&params, hyper.learning_rate);
        Trainer {
            cfg,
            hyper,
            params,
            adam,
        }
    }

    /// One shuffled pass; returns the running mean loss.
    fn epoch(&mut self, pairs: &[TrainingPair<'_>], rng: &mut StreamRng) -> Result<f64> {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(rng);
        let batch_size = self.hyper.batch_size.max(1);
        let mut total = 0.0;
        for batch in order.chunks(batch_size) {
            let params = &self.params;
            let cfg = self.cfg;
            let results = map_ordered(batch, self.hyper.threads, |&i| {
                let p = &pairs[i];
                pair_loss_and_gradients(p.a, p.b, p.label, params, cfg)
            });
            let mut grads = ModelParams::zeros(cfg);
            for r in results {
                let (loss, g) = r?;
                total += loss;
                for (acc, gm) in grads.matrices_mut().into_iter().zip(g.matrices()) {
                    acc.add_assign(gm);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grads.matrices_mut().into_iter().for_each(|m| m.scale(scale));
            if !cfg.use_prev_term {
                grads.u = Matrix::zeros(cfg.d_embed, cfg.d_embed);
            }
            self.adam.update(&mut self.params, &grads);
        }
        Ok(total / pairs.len() as f64)
    }
}

/// Minibatch Adam on a fixed pair list, starting from `ModelParams::init`.
pub fn train_model(
    pairs: &[TrainingPair<'_>],
    cfg: &EmbeddingConfig,
    hyper: &TrainHyper,
) -> Result<(ModelParams, TrainingLog)> {
    cfg.validate()?;
    train_model_from(ModelParams::init(cfg), pairs, cfg, hyper)
}

pub fn train_model_from(
    params: ModelParams,
    pairs: &[TrainingPair<'_>],
    cfg: &EmbeddingConfig,
    hyper: &TrainHyper,
) -> Result<(ModelParams, TrainingLog)> {
    check_pairs(pairs)?;
    params.check(cfg)?;
    let initial_loss = mean_pair_loss(pairs, &params, cfg, hyper.threads)?;
    let mut trainer = Trainer::new(params, cfg, hyper);
    let mut rng = rng::stream(hyper.seed, "train-shuffle", 0);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let loss = trainer.epoch(pairs, &mut rng)?;
        log::debug!("epoch {epoch}: mean loss {loss:.6}");
        epoch_losses.push(loss);
    }
    let final_loss = if hyper.epochs == 0 {
        initial_loss
    } else {
        mean_pair_loss(pairs, &trainer.params, cfg, hyper.threads)?
    };
    Ok((
        trainer.params,
        TrainingLog {
            initial_loss,
            epoch_losses,
            final_loss,
        },
    ))
}

/// For every function, one positive (another variant of its source) and one
/// negative (a function from a different source). Functions without a
/// sibling variant contribute only a negative.
pub fn sample_pairs<'g>(corpus: &'g [AttributedCfg], rng: &mut StreamRng) -> Vec<TrainingPair<'g>> {
    let mut by_source: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in corpus.iter().enumerate() {
        by_source.entry(&g.source_id).or_default().push(i);
    }
    let multi_source = by_source.len() > 1;
    let mut pairs = Vec::with_capacity(corpus.len() * 2);
    for (i, g) in corpus.iter().enumerate() {
        let siblings = &by_source[g.source_id.as_str()];
        if siblings.len() > 1 {
            let mut j = siblings[rng.gen_range(0..siblings.len() - 1)];
            if j == i {
                j = siblings[siblings.len() - 1];
            }
            pairs.push(TrainingPair::new(g, &corpus[j]));
        }
        if multi_source {
            let others = corpus.len() - siblings.len();
            let mut k = rng.gen_range(0..others);
            // skip over the contiguous or scattered sibling indices
            let mut j = 0;
            loop {
                if corpus[j].source_id != g.source_id {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                }
                j += 1;
            }
            pairs.push(TrainingPair::new(g, &corpus[j]));
        }
    }
    pairs
}

/// Train on a corpus, drawing fresh pairs with [`sample_pairs`] every epoch.
/// The initial and final losses are measured on the first epoch's pairs.
pub fn train_on_corpus(
    corpus: &[AttributedCfg],
    cfg: &EmbeddingConfig,
    hyper: &TrainHyper,
) -> Result<(ModelParams, TrainingLog)> {
    cfg.validate()?;
    let params = ModelParams::init(cfg);
    let mut pair_rng = rng::stream(hyper.seed, "train-pairs", 0);
    let reference = sample_pairs(corpus, &mut pair_rng);
    check_pairs(&reference)?;
    let initial_loss = mean_pair_loss(&reference, &params, cfg, hyper.threads)?;

    let mut trainer = Trainer::new(params, cfg, hyper);
    let mut shuffle_rng = rng::stream(hyper.seed, "train-shuffle", 0);
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let pairs = if epoch == 0 {
            reference.clone()
        } else {
            sample_pairs(corpus, &mut pair_rng)
        };
        let loss = trainer.epoch(&pairs, &mut shuffle_rng)?;
        log::info!("epoch {epoch}: mean loss {loss:.6}");
        epoch_losses.push(loss);
    }
    let final_loss = mean_pair_loss(&reference, &trainer.params, cfg, hyper.threads)?;
    Ok((
        trainer.params,
        TrainingLog {
            initial_loss,
            epoch_losses,
            final_loss,
        },
    ))
}
