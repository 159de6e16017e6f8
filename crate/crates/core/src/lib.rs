//! TransE knowledge-graph embeddings with entity initialization from
//! averaged word vectors of entity descriptions.
//!
//! - [`kgdata`]: triple/description ingestion and the known-triple set.
//! - [`wordvec`]: word2vec/GloVe text-format vector tables.
//! - [`descinit`]: description averaging, PCA reduction, fallback init.
//! - [`transe`]: the model, SGD training, checkpoints.
//! - [`evaluate`]: raw/filtered ranking, learning curves, Mann-Whitney U.
//! - [`synthetic`]: planted-translation graphs for testing.

pub mod descinit;
pub mod error;
pub mod evaluate;
pub mod kgdata;
pub mod matrix;
pub mod pca;
pub mod synthetic;
pub mod transe;
pub mod wordvec;

pub use error::{Error, Result};
pub use kgdata::{DescriptionCorpus, Dictionary, KgDataset, KnownSet, Triple};
pub use matrix::Matrix;
pub use pca::PcaModel;
pub use transe::{Metric, ModelParams, Side, TrainConfig};
pub use wordvec::WordVectorTable;
