use std::collections::BTreeMap;
use std::ops::Range;

use super::features::CONTEXT_DIM;
use crate::acr::CONTENT_DIM;
use crate::corpus::{ArticleIdx, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use crate::kernel::{softmax, Activation, Checkpoint, Dense, Graph, LayerNorm, Lstm, ParamId, ParamStore, Tensor, Var};
use crate::rng::substream;

use super::buffer::DEFAULT_BUFFER_SIZE;
use super::sampling::{EVAL_NEGATIVES, TRAIN_NEGATIVES};

#[derive(Clone, Debug, PartialEq)]
pub struct NarConfig {
    pub content_dim: usize,
    pub item_dim: usize,
    pub lstm_units: usize,
    /// Softmax temperature applied to cosine relevances.
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub train_negatives: usize,
    pub eval_negatives: usize,
    pub seed: u64,
}

impl Default for NarConfig {
    fn default() -> Self {
        NarConfig {
            content_dim: CONTENT_DIM,
            item_dim: 1024,
            lstm_units: 255,
            gamma: 10.0,
            lambda: 1e-4,
            lr: 1e-3,
            batch_size: DEFAULT_BATCH_SIZE,
            buffer_size: DEFAULT_BUFFER_SIZE,
            train_negatives: TRAIN_NEGATIVES,
            eval_negatives: EVAL_NEGATIVES,
            seed: 1,
        }
    }
}

impl NarConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("content_dim", self.content_dim),
            ("item_dim", self.item_dim),
            ("lstm_units", self.lstm_units),
            ("batch_size", self.batch_size),
            ("buffer_size", self.buffer_size),
            ("train_negatives", self.train_negatives),
            ("eval_negatives", self.eval_negatives),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma", "must be finite and positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be finite and non-negative"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be finite and positive"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.content_dim + CONTEXT_DIM
    }
}

/// Candidates scored at one prediction position: the next click first,
/// then the negatives, each as a fused-input row.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCandidates {
    /// Click position whose output predicts the candidate (0-based).
    pub position: usize,
    pub articles: Vec<ArticleIdx>,
    /// `articles.len() × input_dim`
    pub rows: Vec<f64>,
}

/// Model-ready view of one session.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionInputs {
    pub len: usize,
    /// `len × input_dim`, one row per click.
    pub clicks: Vec<f64>,
    pub steps: Vec<StepCandidates>,
}

/// Nodes produced by [`NarModel::forward`].
#[derive(Clone, Debug)]
pub struct BatchForward {
    /// Cosine relevance of every candidate, all steps concatenated.
    pub relevance: Var,
    /// Range of `relevance` belonging to each step, sessions in input order.
    pub spans: Vec<Range<usize>>,
}

/// Input fusion, recurrent session encoder and output projection.
#[derive(Clone, Debug)]
pub struct NarModel {
    pub store: ParamStore,
    pub config: NarConfig,
    norm: LayerNorm,
    fusion: Dense,
    lstm: Lstm,
    output: Dense,
}

impl NarModel {
    pub fn new(config: NarConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, "init");
        let mut store = ParamStore::new();
        let input = config.input_dim();
        let norm = LayerNorm::new(&mut store, "nar.norm", input);
        let fusion = Dense::new(&mut store, "nar.fusion", input, config.item_dim, Activation::Tanh, &mut rng);
        let lstm = Lstm::new(&mut store, "nar.lstm", config.item_dim, config.lstm_units, &mut rng);
        let output = Dense::new(
            &mut store,
            "nar.output",
            config.lstm_units,
            config.item_dim,
            Activation::Tanh,
            &mut rng,
        );
        Ok(NarModel {
            store,
            config,
            norm,
            fusion,
            lstm,
            output,
        })
    }

    /// Layer-normalized, fully connected fusion of input rows `[R × input_dim]`.
    pub fn fuse(&self, g: &mut Graph<'_>, rows: Tensor) -> Result<Var> {
        if rows.cols() != self.config.input_dim() {
            return Err(Error::shape("fuse", rows.shape(), &[self.config.input_dim()]));
        }
        let x = g.input(rows);
        let x = self.norm.forward(g, x)?;
        self.fusion.forward(g, x)
    }

    /// Fused embeddings of single input rows, without gradients.
    pub fn fuse_rows(&self, rows: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = rows.len() / self.config.input_dim();
        let mut g = Graph::with_params(&self.store);
        let v = self.fuse(&mut g, Tensor::matrix(n, self.config.input_dim(), rows.to_vec())?)?;
        let t = g.value(v);
        Ok((0..n).map(|r| t.row(r).to_vec()).collect())
    }

    /// Predicted next-item embeddings, one row per click, laid out time-major
    /// over sessions sorted by decreasing length. Returns the prediction
    /// node and, per session in input order, the row of each position.
    fn predict_nodes(&self, g: &mut Graph<'_>, batch: &[&SessionInputs]) -> Result<(Var, Vec<Vec<usize>>)> {
        let dim = self.config.input_dim();
        if batch.is_empty() || batch.iter().any(|s| s.len == 0 || s.clicks.len() != s.len * dim) {
            return Err(Error::EmptySequence { op: "session_forward" });
        }
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(batch[i].len));
        let max_len = batch[order[0]].len;
        let active: Vec<usize> = (0..max_len)
            .map(|t| order.iter().take_while(|&&i| batch[i].len > t).count())
            .collect();

        let mut rows = Vec::new();
        let mut row_of = vec![Vec::new(); batch.len()];
        let mut n = 0;
        for (t, &a) in active.iter().enumerate() {
            for &i in &order[..a] {
                rows.extend_from_slice(&batch[i].clicks[t * dim..(t + 1) * dim]);
                row_of[i].push(n);
                n += 1;
            }
        }
        let fused = self.fuse(g, Tensor::matrix(n, dim, rows)?)?;

        let units = self.config.lstm_units;
        let mut h = g.input(Tensor::zeros(vec![active[0], units]));
        let mut c = g.input(Tensor::zeros(vec![active[0], units]));
        let mut hs = Vec::with_capacity(max_len);
        let mut offset = 0;
        for (t, &a) in active.iter().enumerate() {
            let x = g.slice_rows(fused, offset, offset + a)?;
            if t > 0 && a < active[t - 1] {
                h = g.slice_rows(h, 0, a)?;
                c = g.slice_rows(c, 0, a)?;
            }
            (h, c) = self.lstm.step(g, x, h, c)?;
            hs.push(h);
            offset += a;
        }
        let hidden = if hs.len() == 1 { hs[0] } else { g.concat_rows(&hs)? };
        let p = self.output.forward(g, hidden)?;
        Ok((p, row_of))
    }

    /// Cosine relevance of every step's candidates to the prediction made
    /// at that step.
    pub fn forward(&self, g: &mut Graph<'_>, batch: &[&SessionInputs]) -> Result<BatchForward> {
        let (p, row_of) = self.predict_nodes(g, batch)?;
        let dim = self.config.input_dim();
        let mut cand_rows = Vec::new();
        let mut rep = Vec::new();
        let mut spans = Vec::new();
        for (s, rows) in batch.iter().zip(&row_of) {
            for step in &s.steps {
                let k = step.articles.len();
                if step.position + 1 >= s.len || k == 0 || step.rows.len() != k * dim {
                    return Err(Error::Invariant(format!(
                        "step at position {} of a {}-click session with {k} candidates",
                        step.position, s.len
                    )));
                }
                spans.push(rep.len()..rep.len() + k);
                rep.extend(std::iter::repeat_n(rows[step.position], k));
                cand_rows.extend_from_slice(&step.rows);
            }
        }
        if rep.is_empty() {
            return Err(Error::EmptySequence { op: "candidates" });
        }
        let items = self.fuse(g, Tensor::matrix(rep.len(), dim, cand_rows)?)?;
        let preds = g.gather_rows(p, &rep)?;
        let relevance = g.cosine_rows(preds, items)?;
        Ok(BatchForward { relevance, spans })
    }

    /// Predicted next-article embeddings of one session, one per click.
    pub fn predict(&self, session: &SessionInputs) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::with_params(&self.store);
        let (p, row_of) = self.predict_nodes(&mut g, &[session])?;
        let t = g.value(p);
        Ok(row_of[0].iter().map(|&r| t.row(r).to_vec()).collect())
    }

    /// Relevance of each step's candidates for one session, without gradients.
    pub fn score(&self, session: &SessionInputs) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::with_params(&self.store);
        let out = self.forward(&mut g, &[session])?;
        let r = g.value(out.relevance).data();
        Ok(out.spans.into_iter().map(|span| r[span].to_vec()).collect())
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(self.config.seed, step);
        ck.push_text(
            "nar.shape",
            format!(
                "{} {} {}",
                self.config.content_dim, self.config.item_dim, self.config.lstm_units
            ),
        );
        ck.push_params("", &self.store);
        ck
    }

    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.restore_params("", &mut self.store)
    }
}

/// Cosine similarity; a zero vector scores 0 and is reported as degenerate.
pub fn relevance(p: &[f64], item: &[f64]) -> (f64, bool) {
    let dot: f64 = p.iter().zip(item).map(|(a, b)| a * b).sum();
    let np = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ni = item.iter().map(|v| v * v).sum::<f64>().sqrt();
    if np == 0.0 || ni == 0.0 {
        (0.0, true)
    } else {
        (dot / (np * ni), false)
    }
}

/// `exp(γ·r_i) / Σ_j exp(γ·r_j)`.
pub fn next_click_probability(relevances: &[f64], gamma: f64) -> Vec<f64> {
    softmax(relevances, gamma)
}

/// Loss nodes of a batch.
#[derive(Clone, Copy, Debug)]
pub struct NarLoss {
    pub total: Var,
    /// Mean negative log-likelihood of the positives.
    pub ranking: Var,
}

/// `−(1/M)·Σ log P(positive)` over the `M` scored steps (positive first in
/// every span) plus `lambda·Σ‖θ‖²` over `params`.
pub fn nar_loss(
    g: &mut Graph<'_>,
    relevance: Var,
    spans: &[Range<usize>],
    gamma: f64,
    params: &[ParamId],
    lambda: f64,
) -> Result<NarLoss> {
    if spans.is_empty() {
        return Err(Error::EmptySequence { op: "nar_loss" });
    }
    let n = g.value(relevance).len();
    let column = g.reshape(relevance, &[n, 1])?;
    let mut by_width: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in spans {
        by_width.entry(s.len()).or_default().push(s.start);
    }
    let total_steps = spans.len() as f64;
    let mut ranking: Option<Var> = None;
    for (width, starts) in by_width {
        let index: Vec<usize> = starts.iter().flat_map(|&s| s..s + width).collect();
        let r = g.gather_rows(column, &index)?;
        let r = g.reshape(r, &[starts.len(), width])?;
        let logits = g.scale(r, gamma);
        let xent = g.softmax_cross_entropy(logits, &vec![0; starts.len()])?;
        let part = g.scale(xent, starts.len() as f64 / total_steps);
        ranking = Some(match ranking {
            None => part,
            Some(acc) => g.add(acc, part)?,
        });
    }
    let ranking = ranking.expect("non-empty spans");
    let total = match (lambda > 0.0).then(|| g.l2_penalty(params, lambda)).transpose()?.flatten() {
        Some(p) => g.add(ranking, p)?,
        None => ranking,
    };
    Ok(NarLoss { total, ranking })
}
