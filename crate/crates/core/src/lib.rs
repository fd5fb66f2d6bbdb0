//! Session-based news recommendation.
//!
//! * [`corpus`]: articles, clicks, sessionization and a synthetic generator.
//! * [`kernel`]: dense tensors with reverse-mode differentiation, layers and Adam.
//! * [`acr`]: the text CNN content encoder and the embedding repository.
//! * [`nar`]: the recurrent next-article model, its features and online training.
//! * [`baselines`]: co-occurrence, sequential rules, item-kNN, V-SkNN,
//!   recent popularity and content similarity.
//! * [`eval`]: the hourly train/evaluate protocol, metrics and reports.
//!
//! ```
//! use newsrec::eval::{hr_at_k, mrr_at_k};
//!
//! assert_eq!(hr_at_k(Some(3), 5), 1.0);
//! assert_eq!(mrr_at_k(Some(4), 5), 0.25);
//! ```

pub mod acr;
pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod nar;
pub mod kernel;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/kernel.md")]
    mod kernel {}
    #[doc = include_str!("../../../book/src/content-encoder.md")]
    mod content_encoder {}
    #[doc = include_str!("../../../book/src/session-model.md")]
    mod session_model {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
