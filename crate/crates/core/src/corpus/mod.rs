//! Data model, ingestion of datasets, feature matrices, parse trees,
//! taxonomies and lexicons, plus splitting and synthetic data.

mod dataset;
mod matrix;
mod split;
mod synth;
mod taxonomy;
mod tree;

pub use dataset::{load_dataset, BoundingBox, Dataset, ImageRecord, ObjectInstance, SentenceRecord, Vocabulary};
pub use matrix::{load_feature_matrix, FeatureMatrix, MatrixRole, MATRIX_MAGIC, MATRIX_VERSION};
pub use split::{split_dataset, Split};
pub use synth::{generate_synthetic, SyntheticConfig, SyntheticDataset};
pub use taxonomy::{SynonymLexicon, Taxonomy};
pub use tree::{parse_bracketed_tree, ParseTree};
