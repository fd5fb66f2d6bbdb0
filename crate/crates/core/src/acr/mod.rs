//! Article content representation: a text CNN plus publisher metadata,
//! trained to classify article categories, whose penultimate layer is
//! exported as a fixed content embedding per article.

mod model;
mod repository;
mod train;

pub use model::{acr_loss, AcrConfig, AcrModel, AcrOutput, CONTENT_DIM};
pub use repository::{export_embeddings, EmbeddingRepository, RepositoryFormat};
pub use train::{evaluate, train_acr, AcrReport, EpochStats};
