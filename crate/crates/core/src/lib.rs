//! Binary function similarity detection workbench.
//!
//! Functions are represented as attributed control-flow graphs ([`acfg`]),
//! embedded with a Structure2Vec-style neighborhood-aggregation network
//! ([`embed`]) and searched exhaustively by cosine similarity ([`search`]).
//! Around that core the crate provides:
//!
//! - [`synth`]: seeded synthetic corpora that simulate compilation variants
//! - [`metrics`]: AUC, accuracy, P/R/F1@K, Rank-1, MAP@K, MRR@K, NDCG@K
//! - [`align`]: identical-basic-block alignment to filter false positives
//! - [`collision`]: diagnosis of summation-readout embedding collisions
//! - [`apps`]: vulnerability search and license-violation ranking
//! - [`pipeline`] and [`report`]: end-to-end experiment glue, CSV and SVG output
//! - [`cli`]: the `binsd` command-line front end
//!
//! Runnable walkthroughs of each capability live in `examples/`:
//!
//! ```bash
//! cargo run --release -p binsd --example corpus_generation
//! cargo run --release -p binsd --example train_siamese
//! cargo run --release -p binsd --example graph_alignment
//! ```

pub mod acfg;
pub mod align;
pub mod apps;
pub mod cli;
pub mod collision;
pub mod embed;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod search;
pub mod synth;

pub use acfg::{AttributedCfg, CompilationTag, FunctionRef};
pub use embed::{EmbeddingConfig, ModelParams};
pub use error::{Error, Result};
