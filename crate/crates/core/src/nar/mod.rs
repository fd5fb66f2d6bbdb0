//! Next-article recommendation: a global click buffer supplying context
//! features and fallback negatives, fusion of content and context into
//! contextual item embeddings, an LSTM over the session emitting predicted
//! next-item embeddings, and a cosine-softmax ranking loss trained online,
//! one hour of sessions at a time.

mod buffer;
mod features;
mod model;
mod sampling;
mod train;

pub use buffer::{ClickBuffer, DEFAULT_BUFFER_SIZE};
pub use features::{context_features, ArticleContext, ContentTable, FeatureDiagnostics, RowBuilder, UserContext, CONTEXT_DIM};
pub use model::{
    nar_loss, next_click_probability, relevance, BatchForward, NarConfig, NarLoss, NarModel, SessionInputs,
    StepCandidates,
};
pub use sampling::{batch_pool, sample_negatives, Negatives, EVAL_NEGATIVES, TRAIN_NEGATIVES};
pub use train::{prepare_hour, HourReport, NarTrainer, Phase, PreparedHour, PreparedSession};

#[cfg(test)]
mod tests;
