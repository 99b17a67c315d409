//! JSON model checkpoints:
//! `{"format_version":1,"config":{..},"matrices":{"W1":{"rows":r,"cols":c,"data":[..]},..}}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingConfig, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u64,
    pub config: EmbeddingConfig,
    pub matrices: BTreeMap<String, Matrix>,
}

impl Checkpoint {
    pub fn new(config: &EmbeddingConfig, params: &ModelParams) -> Self {
        let matrices = params
            .matrix_names()
            .into_iter()
            .zip(params.matrices())
            .map(|(n, m)| (n, m.clone()))
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: config.clone(),
            matrices,
        }
    }

    pub fn into_params(mut self) -> Result<(EmbeddingConfig, ModelParams)> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.format_version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let cfg = self.config;
        cfg.validate()?;
        let mut take = |name: &str| {
            self.matrices
                .remove(name)
                .ok_or_else(|| Error::Schema(format!("checkpoint is missing matrix {name}")))
        };
        let w1 = take("W1")?;
        let sigma = (1..=cfg.sigma_depth)
            .map(|l| take(&format!("P{l}")))
            .collect::<Result<Vec<_>>>()?;
        let u = take("U")?;
        let w2 = take("W2")?;
        let params = ModelParams { w1, sigma, u, w2 };
        for m in params.matrices() {
            if m.data.len() != m.rows * m.cols {
                return Err(Error::Schema("matrix data length disagrees with rows*cols".into()));
            }
        }
        params.check(&cfg)?;
        Ok((cfg, params))
    }
}

pub fn write_checkpoint<W: Write>(w: W, cfg: &EmbeddingConfig, params: &ModelParams) -> Result<()> {
    let mut w = BufWriter::new(w);
    serde_json::to_writer(&mut w, &Checkpoint::new(cfg, params))
        .map_err(|e| Error::Schema(e.to_string()))?;
    w.flush().map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(EmbeddingConfig, ModelParams)> {
    let ck: Checkpoint = serde_json::from_reader(BufReader::new(r))
        .map_err(|e| Error::Schema(format!("bad checkpoint: {e}")))?;
    ck.into_params()
}

pub fn save_checkpoint(path: impl AsRef<Path>, cfg: &EmbeddingConfig, params: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(f, cfg, params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(EmbeddingConfig, ModelParams)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(f)
}
