use crate::corpus::{ArticleIdx, Catalog, Session};
use crate::error::Result;
use crate::kernel::{Adam, AdamConfig, Graph};
use crate::rng::{derive, from_seed, substream_seed};

use super::buffer::ClickBuffer;
use super::features::{ContentTable, RowBuilder, UserContext};
use super::model::{nar_loss, NarModel, SessionInputs, StepCandidates};
use super::sampling::{batch_pool, sample_negatives, Negatives};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Clicks are pushed to the buffer as they are replayed.
    Train,
    /// The buffer is read but never modified.
    Eval,
}

impl Phase {
    fn tag(self) -> u64 {
        match self {
            Phase::Train => 0,
            Phase::Eval => 1,
        }
    }
}

/// A session ready for scoring or training.
#[derive(Clone, Debug)]
pub struct PreparedSession {
    /// Position in the hour's session list.
    pub index: usize,
    pub negatives: Negatives,
    /// Absent when some clicked article has no content embedding.
    pub inputs: Option<SessionInputs>,
}

#[derive(Clone, Debug, Default)]
pub struct PreparedHour {
    pub hour: i64,
    /// Sessions that take part in this phase, grouped into batches.
    pub batches: Vec<Vec<PreparedSession>>,
    pub shortfall: usize,
    pub missing_embedding: usize,
    pub future_published: u64,
}

impl PreparedHour {
    pub fn sessions(&self) -> impl Iterator<Item = &PreparedSession> {
        self.batches.iter().flatten()
    }
}

/// Samples negatives and builds fused-input rows for an hour of sessions.
///
/// Sessions are batched in the given order. Negatives come from the other
/// sessions of the batch, then from the buffer as it stood when the hour
/// began. Clicks of all sessions are then replayed in time order; in the
/// training phase each click is pushed to the buffer before the features
/// of that step are looked up. Candidate rows share the user context and
/// timestamp of the click whose output scores them.
#[allow(clippy::too_many_arguments)]
pub fn prepare_hour(
    sessions: &[Session],
    hour: i64,
    phase: Phase,
    buffer: &mut ClickBuffer,
    catalog: &Catalog,
    content: Option<&ContentTable>,
    batch_size: usize,
    negatives: usize,
    seed: u64,
) -> Result<PreparedHour> {
    let complete: Vec<bool> = sessions
        .iter()
        .map(|s| content.is_some_and(|c| s.articles().all(|a| c.contains(a))))
        .collect();
    let missing_embedding = complete.iter().filter(|c| !**c).count();
    let members: Vec<usize> = (0..sessions.len())
        .filter(|&i| phase == Phase::Eval || complete[i])
        .collect();
    let eligible = |a: ArticleIdx| content.is_none_or(|c| c.contains(a));
    let buffer_pool: Vec<ArticleIdx> = buffer.distinct().into_iter().filter(|&a| eligible(a)).collect();
    let sampling = substream_seed(seed, "sampling");

    let mut prepared: Vec<Vec<PreparedSession>> = Vec::new();
    let mut shortfall = 0;
    for chunk in members.chunks(batch_size.max(1)) {
        let refs: Vec<&Session> = chunk.iter().map(|&i| &sessions[i]).collect();
        let pool = batch_pool(&refs);
        let mut batch = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let mut rng = from_seed(derive(sampling, &[hour as u64, i as u64, phase.tag()]));
            let neg = sample_negatives(&sessions[i], &pool, &buffer_pool, negatives, &eligible, &mut rng);
            shortfall += neg.shortfall as usize;
            let len = sessions[i].len();
            let inputs = complete[i].then(|| SessionInputs {
                len,
                clicks: Vec::new(),
                steps: Vec::new(),
            });
            batch.push(PreparedSession {
                index: i,
                negatives: neg,
                inputs,
            });
        }
        prepared.push(batch);
    }

    // (ts, session, position) replay order
    let mut slot_of = vec![None; sessions.len()];
    for (b, batch) in prepared.iter().enumerate() {
        for (k, p) in batch.iter().enumerate() {
            slot_of[p.index] = Some((b, k));
        }
    }
    let mut events: Vec<(i64, usize, usize)> = sessions
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.clicks.iter().enumerate().map(move |(t, c)| (c.ts, i, t)))
        .collect();
    events.sort_unstable();

    let mut future_published = 0;
    for (ts, i, t) in events {
        let click = &sessions[i].clicks[t];
        if phase == Phase::Train {
            buffer.push(click.article, ts);
        }
        let Some(content) = content else { continue };
        let dim = content.dim() + super::features::CONTEXT_DIM;
        let mut rows = RowBuilder::new(catalog, content);
        let Some((b, k)) = slot_of[i] else { continue };
        let p = &mut prepared[b][k];
        let Some(inputs) = p.inputs.as_mut() else { continue };
        let user = UserContext {
            platform: click.platform,
            device: click.device,
        };
        rows.push_row(&mut inputs.clicks, click.article, buffer, ts, user)?;
        if t + 1 < inputs.len {
            let mut articles = Vec::with_capacity(1 + p.negatives.articles.len());
            articles.push(sessions[i].clicks[t + 1].article);
            articles.extend_from_slice(&p.negatives.articles);
            let mut cand = Vec::with_capacity(articles.len() * dim);
            for &a in &articles {
                rows.push_row(&mut cand, a, buffer, ts, user)?;
            }
            inputs.steps.push(StepCandidates {
                position: t,
                articles,
                rows: cand,
            });
        }
        future_published += rows.diagnostics.future_published;
    }
    Ok(PreparedHour {
        hour,
        batches: prepared,
        shortfall,
        missing_embedding,
        future_published,
    })
}

/// Per-hour training summary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HourReport {
    pub hour: i64,
    pub sessions: usize,
    /// Scored prediction positions.
    pub steps: usize,
    /// Mean ranking loss over the hour's steps, measured before each update.
    pub mean_loss: Option<f64>,
    pub updates: u64,
    pub shortfall: usize,
    pub missing_embedding: usize,
    pub future_published: u64,
}

impl HourReport {
    /// `hour sessions steps mean_loss shortfall missing` as one line.
    pub fn line(&self) -> String {
        format!(
            "hour={} sessions={} steps={} mean_loss={} shortfall={} missing_embedding={}",
            self.hour,
            self.sessions,
            self.steps,
            self.mean_loss.map_or("-".to_string(), |l| format!("{l:.6}")),
            self.shortfall,
            self.missing_embedding
        )
    }
}

/// A session model together with its optimizer state.
#[derive(Clone, Debug)]
pub struct NarTrainer {
    pub model: NarModel,
    adam: Adam,
}

impl NarTrainer {
    pub fn new(model: NarModel) -> Self {
        let adam = Adam::new(
            AdamConfig {
                lr: model.config.lr,
                ..Default::default()
            },
            &model.store,
        );
        NarTrainer { model, adam }
    }

    pub fn updates(&self) -> u64 {
        self.adam.steps()
    }

    /// One pass over an hour: prepares it (advancing the buffer) and takes
    /// one optimizer step per batch.
    pub fn train_on_hour(
        &mut self,
        sessions: &[Session],
        hour: i64,
        buffer: &mut ClickBuffer,
        catalog: &Catalog,
        content: &ContentTable,
    ) -> Result<HourReport> {
        let c = &self.model.config;
        let prepared = prepare_hour(
            sessions,
            hour,
            Phase::Train,
            buffer,
            catalog,
            Some(content),
            c.batch_size,
            c.train_negatives,
            c.seed,
        )?;
        self.train_prepared(&prepared)
    }

    pub fn train_prepared(&mut self, hour: &PreparedHour) -> Result<HourReport> {
        let mut report = self.base_report(hour);
        let mut weighted = 0.0;
        let decayed = self.model.store.decayed();
        for batch in &hour.batches {
            let inputs: Vec<&SessionInputs> = batch
                .iter()
                .filter_map(|p| p.inputs.as_ref())
                .filter(|s| !s.steps.is_empty())
                .collect();
            if inputs.is_empty() {
                continue;
            }
            let grads = {
                let mut g = Graph::with_params(&self.model.store);
                let fwd = self.model.forward(&mut g, &inputs)?;
                let loss = nar_loss(&mut g, fwd.relevance, &fwd.spans, self.model.config.gamma, &decayed, self.model.config.lambda)?;
                weighted += g.scalar(loss.ranking) * fwd.spans.len() as f64;
                report.steps += fwd.spans.len();
                g.backward(loss.total)?
            };
            self.adam.step(&mut self.model.store, &grads)?;
            report.updates += 1;
        }
        report.mean_loss = (report.steps > 0).then(|| weighted / report.steps as f64);
        log::info!("nar {}", report.line());
        Ok(report)
    }

    /// Mean ranking loss over a prepared hour without updating the model.
    pub fn measure(&self, hour: &PreparedHour) -> Result<HourReport> {
        let mut report = self.base_report(hour);
        let mut weighted = 0.0;
        for batch in &hour.batches {
            let inputs: Vec<&SessionInputs> = batch
                .iter()
                .filter_map(|p| p.inputs.as_ref())
                .filter(|s| !s.steps.is_empty())
                .collect();
            if inputs.is_empty() {
                continue;
            }
            let mut g = Graph::with_params(&self.model.store);
            let fwd = self.model.forward(&mut g, &inputs)?;
            let loss = nar_loss(&mut g, fwd.relevance, &fwd.spans, self.model.config.gamma, &[], 0.0)?;
            weighted += g.scalar(loss.ranking) * fwd.spans.len() as f64;
            report.steps += fwd.spans.len();
        }
        report.mean_loss = (report.steps > 0).then(|| weighted / report.steps as f64);
        Ok(report)
    }

    fn base_report(&self, hour: &PreparedHour) -> HourReport {
        HourReport {
            hour: hour.hour,
            sessions: hour.sessions().filter(|p| p.inputs.is_some()).count(),
            shortfall: hour.shortfall,
            missing_embedding: hour.missing_embedding,
            future_published: hour.future_published,
            ..Default::default()
        }
    }
}
