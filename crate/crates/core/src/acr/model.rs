use rand::Rng as _;

use crate::corpus::{Article, Catalog, Vocabulary, WordVectors};
use crate::error::{Error, Result};
use crate::kernel::{xavier_uniform, Activation, Checkpoint, Dense, Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::{substream, Rng};

/// Width of the exported content embedding.
pub const CONTENT_DIM: usize = 250;

/// Architecture and optimization settings of the content model.
#[derive(Clone, Debug, PartialEq)]
pub struct AcrConfig {
    pub word_dim: usize,
    pub windows: Vec<usize>,
    pub filters: usize,
    pub content_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AcrConfig {
    fn default() -> Self {
        AcrConfig {
            word_dim: 300,
            windows: vec![3, 4, 5],
            filters: 128,
            content_dim: CONTENT_DIM,
            epochs: 10,
            lr: 1e-3,
            lambda: 1e-4,
            batch_size: 64,
            seed: 1,
        }
    }
}

impl AcrConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("acr_word_dim", self.word_dim),
            ("acr_filters", self.filters),
            ("acr_content_dim", self.content_dim),
            ("acr_batch_size", self.batch_size),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::config("acr_windows", "need at least one positive window"));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::config("acr_lambda", "must be finite and non-negative"));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::config("acr_lr", "must be finite and positive"));
        }
        Ok(())
    }

    fn max_window(&self) -> usize {
        self.windows.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvBlock {
    filters: ParamId,
    bias: ParamId,
}

/// Text CNN over word vectors plus a publisher one-hot, fused into the
/// content embedding, followed by a linear category classifier.
#[derive(Clone, Debug)]
pub struct AcrModel {
    pub store: ParamStore,
    pub config: AcrConfig,
    embedding: ParamId,
    convs: Vec<ConvBlock>,
    fusion: Dense,
    classifier: Dense,
    n_publishers: usize,
    n_categories: usize,
}

/// Graph nodes of a forward pass over a batch.
#[derive(Clone, Copy, Debug)]
pub struct AcrOutput {
    /// `[B × content_dim]`
    pub embeddings: Var,
    /// `[B × categories]`
    pub logits: Var,
}

impl AcrModel {
    /// Builds a freshly initialized model. `pretrained`, when given, must have
    /// one row per vocabulary id and is frozen.
    pub fn new(
        config: AcrConfig,
        vocab_size: usize,
        n_publishers: usize,
        n_categories: usize,
        pretrained: Option<&Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, "init");
        let mut store = ParamStore::new();
        let embedding = match pretrained {
            Some(t) => {
                if t.shape() != [vocab_size, config.word_dim] {
                    return Err(Error::shape("word vectors", t.shape(), &[vocab_size, config.word_dim]));
                }
                store.add_with("acr.words", t.clone(), false, false)
            }
            None => store.add("acr.words", random_words(vocab_size, config.word_dim, &mut rng)),
        };
        let convs = config
            .windows
            .iter()
            .map(|&w| {
                let f = xavier_uniform(w * config.word_dim, config.filters, &mut rng)
                    .reshape(vec![w, config.word_dim, config.filters])
                    .expect("same length");
                ConvBlock {
                    filters: store.add(format!("acr.conv{w}.w"), f),
                    bias: store.add(format!("acr.conv{w}.b"), Tensor::zeros(vec![config.filters])),
                }
            })
            .collect();
        let pooled = config.windows.len() * config.filters;
        let fusion = Dense::new(
            &mut store,
            "acr.fusion",
            pooled + n_publishers,
            config.content_dim,
            Activation::Tanh,
            &mut rng,
        );
        let classifier = Dense::new(
            &mut store,
            "acr.classifier",
            config.content_dim,
            n_categories,
            Activation::Identity,
            &mut rng,
        );
        Ok(AcrModel {
            store,
            config,
            embedding,
            convs,
            fusion,
            classifier,
            n_publishers,
            n_categories,
        })
    }

    /// Sizes the model for `catalog`. Pre-trained vectors must share the
    /// catalog's vocabulary (parse the catalog with their vocabulary).
    pub fn for_catalog(config: AcrConfig, catalog: &Catalog, pretrained: Option<&WordVectors>) -> Result<Self> {
        let mut config = config;
        if let Some(wv) = pretrained {
            if wv.vocab.len() != catalog.vocab.len() {
                return Err(Error::Invariant(
                    "catalog was not parsed with the pre-trained vocabulary".into(),
                ));
            }
            config.word_dim = wv.dim();
        }
        AcrModel::new(
            config,
            catalog.vocab.len(),
            catalog.n_publishers(),
            catalog.n_categories(),
            pretrained.map(|wv| &wv.vectors),
        )
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn n_publishers(&self) -> usize {
        self.n_publishers
    }

    /// Width of the pooled convolution features before fusion.
    pub fn pooled_dim(&self) -> usize {
        self.convs.len() * self.config.filters
    }

    /// Token ids padded to the widest convolution window.
    pub fn padded_tokens(&self, article: &Article) -> Vec<usize> {
        let mut ids: Vec<usize> = article.tokens.iter().map(|&t| t as usize).collect();
        while ids.len() < self.config.max_window() {
            ids.push(Vocabulary::PAD as usize);
        }
        ids
    }

    /// Pooled n-gram features `[B × pooled_dim]`, after tanh.
    pub fn text_features(&self, g: &mut Graph<'_>, articles: &[&Article]) -> Result<Var> {
        if articles.is_empty() {
            return Err(Error::EmptySequence { op: "acr_forward" });
        }
        let mut ids = Vec::new();
        let mut spans = Vec::with_capacity(articles.len());
        for a in articles {
            let start = ids.len();
            ids.extend(self.padded_tokens(a));
            spans.push((start, ids.len()));
        }
        let table = g.param(self.embedding);
        let words = g.gather_rows(table, &ids)?;
        let mut rows = Vec::with_capacity(articles.len());
        for (start, end) in spans {
            let seq = g.slice_rows(words, start, end)?;
            let mut pooled = Vec::with_capacity(self.convs.len());
            for block in &self.convs {
                let (f, b) = (g.param(block.filters), g.param(block.bias));
                let maps = g.conv1d(seq, f, b)?;
                pooled.push(g.maxpool(maps)?);
            }
            rows.push(g.concat_cols(&pooled)?);
        }
        let features = g.concat_rows(&rows)?;
        Ok(g.tanh(features))
    }

    /// Content embeddings and class logits for a batch of articles.
    pub fn forward(&self, g: &mut Graph<'_>, articles: &[&Article]) -> Result<AcrOutput> {
        let text = self.text_features(g, articles)?;
        let mut onehot = vec![0.0; articles.len() * self.n_publishers];
        for (r, a) in articles.iter().enumerate() {
            let p = a.publisher_id as usize;
            if p >= self.n_publishers {
                return Err(Error::shape("publisher", &[p], &[self.n_publishers]));
            }
            onehot[r * self.n_publishers + p] = 1.0;
        }
        let fused = if self.n_publishers > 0 {
            let meta = g.input(Tensor::matrix(articles.len(), self.n_publishers, onehot)?);
            g.concat_cols(&[text, meta])?
        } else {
            text
        };
        let embeddings = self.fusion.forward(g, fused)?;
        let logits = self.classifier.forward(g, embeddings)?;
        Ok(AcrOutput { embeddings, logits })
    }

    /// Mean cross-entropy against `labels` plus `lambda·Σ‖W‖²` over the
    /// model's trainable weight matrices.
    pub fn loss(&self, g: &mut Graph<'_>, logits: Var, labels: &[usize], lambda: f64) -> Result<Var> {
        acr_loss(g, logits, labels, &self.store.decayed(), lambda)
    }

    /// Content embeddings without recording gradients.
    pub fn embed(&self, articles: &[&Article]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::with_params(&self.store);
        let out = self.forward(&mut g, articles)?;
        let t = g.value(out.embeddings);
        Ok((0..t.rows()).map(|r| t.row(r).to_vec()).collect())
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(self.config.seed, step);
        ck.push_text(
            "acr.shape",
            format!(
                "{} {} {} {} {} {}",
                self.config.word_dim,
                self.config.filters,
                self.config.content_dim,
                self.n_publishers,
                self.n_categories,
                self.config
                    .windows
                    .iter()
                    .map(|w| w.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        );
        ck.push_params("", &self.store);
        ck
    }

    /// Loads parameters saved by [`AcrModel::to_checkpoint`] into a model of
    /// matching architecture.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.restore_params("", &mut self.store)
    }
}

fn random_words(vocab: usize, dim: usize, rng: &mut Rng) -> Tensor {
    let data = (0..vocab * dim).map(|_| rng.gen_range(-0.25..0.25)).collect();
    Tensor::matrix(vocab, dim, data).expect("positive extents")
}

/// Mean softmax cross-entropy plus `lambda·Σ‖θ‖²` over `params`.
pub fn acr_loss(g: &mut Graph<'_>, logits: Var, labels: &[usize], params: &[ParamId], lambda: f64) -> Result<Var> {
    let xent = g.softmax_cross_entropy(logits, labels)?;
    if lambda == 0.0 {
        return Ok(xent);
    }
    match g.l2_penalty(params, lambda)? {
        Some(p) => g.add(xent, p),
        None => Ok(xent),
    }
}
