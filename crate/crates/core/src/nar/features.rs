use crate::acr::EmbeddingRepository;
use crate::corpus::{Article, ArticleIdx, Catalog, Device, Platform};
use crate::error::{Error, Result};

use super::buffer::ClickBuffer;

/// Article context (2) plus user context (2 + 3) appended to the content embedding.
pub const CONTEXT_DIM: usize = 2 + 2 + 3;

/// Log-smoothed recent popularity and age of an article at lookup time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArticleContext {
    pub popularity: f64,
    pub recency: f64,
}

/// `ln(1 + buffer count)` and `ln(1 + hours since publication)`. The second
/// value is `true` when the article was published after `now`; its age is
/// then taken as zero.
pub fn context_features(article: ArticleIdx, published_at: i64, buffer: &ClickBuffer, now: i64) -> (ArticleContext, bool) {
    let popularity = (buffer.count(article) as f64).ln_1p();
    let clamped = published_at > now;
    let hours = (now - published_at).max(0) as f64 / 3600.0;
    (
        ArticleContext {
            popularity,
            recency: hours.ln_1p(),
        },
        clamped,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UserContext {
    pub platform: Platform,
    pub device: Device,
}

impl UserContext {
    pub fn one_hot(&self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[Platform::ALL.iter().position(|p| *p == self.platform).expect("listed")] = 1.0;
        v[2 + Device::ALL.iter().position(|d| *d == self.device).expect("listed")] = 1.0;
        v
    }
}

/// Content embeddings looked up by catalog position.
#[derive(Clone, Debug)]
pub struct ContentTable {
    dim: usize,
    rows: Vec<Option<usize>>,
    data: Vec<f64>,
}

impl ContentTable {
    pub fn new(catalog: &Catalog, repo: &EmbeddingRepository) -> Self {
        let dim = repo.dim();
        let mut rows = Vec::with_capacity(catalog.len());
        let mut data = Vec::new();
        for a in catalog.articles() {
            match repo.get(&a.article_id) {
                Some(v) => {
                    rows.push(Some(data.len() / dim.max(1)));
                    data.extend_from_slice(v);
                }
                None => rows.push(None),
            }
        }
        ContentTable { dim, rows, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, article: ArticleIdx) -> Option<&[f64]> {
        self.rows
            .get(article.index())
            .copied()
            .flatten()
            .map(|r| &self.data[r * self.dim..(r + 1) * self.dim])
    }

    pub fn contains(&self, article: ArticleIdx) -> bool {
        self.get(article).is_some()
    }

    pub fn require(&self, catalog: &Catalog, article: ArticleIdx) -> Result<&[f64]> {
        self.get(article).ok_or_else(|| Error::MissingEmbedding {
            article: catalog.id_of(article).to_string(),
        })
    }
}

/// Tallies of lookups that needed special handling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FeatureDiagnostics {
    /// Lookups of articles published after the lookup time.
    pub future_published: u64,
}

/// Builds fused-input rows `[content | popularity, recency | platform, device]`.
pub struct RowBuilder<'a> {
    pub catalog: &'a Catalog,
    pub content: &'a ContentTable,
    pub diagnostics: FeatureDiagnostics,
}

impl<'a> RowBuilder<'a> {
    pub fn new(catalog: &'a Catalog, content: &'a ContentTable) -> Self {
        RowBuilder {
            catalog,
            content,
            diagnostics: FeatureDiagnostics::default(),
        }
    }

    /// Appends one row for `article` seen at `now` by `user`.
    pub fn push_row(
        &mut self,
        out: &mut Vec<f64>,
        article: ArticleIdx,
        buffer: &ClickBuffer,
        now: i64,
        user: UserContext,
    ) -> Result<()> {
        let content = self.content.require(self.catalog, article)?;
        let meta: &Article = self.catalog.get(article);
        let (ctx, clamped) = context_features(article, meta.published_at, buffer, now);
        if clamped {
            self.diagnostics.future_published += 1;
        }
        out.extend_from_slice(content);
        out.push(ctx.popularity);
        out.push(ctx.recency);
        out.extend_from_slice(&user.one_hot());
        Ok(())
    }
}
