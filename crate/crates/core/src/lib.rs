//! Tag importance for multimodal image retrieval.
//!
//! The crate is organised along the processing pipeline:
//!
//! - [`corpus`]: data model, dataset / feature ingestion, bracketed parse trees,
//!   taxonomy and lexicon loading, splitting and synthetic data.
//! - [`measure`]: ground-truth object and scene tag importance from sentences.
//! - [`features`]: semantic, visual (saliency, box geometry) and context
//!   features, assembled into per-image MRF instances.
//! - [`ssvm`]: the structured importance predictor (energy, joint feature map,
//!   exact inference, one-slack cutting-plane training) and ablation models.
//! - [`cca`]: canonical correlation between visual and textual features and the
//!   I2I / T2I / I2T retrieval tasks.
//! - [`eval`]: relevance functions, NDCG, prediction error and the experiment
//!   driver.

pub mod cca;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub(crate) mod io;
pub mod measure;
pub mod ssvm;

pub use error::{Error, Result};
