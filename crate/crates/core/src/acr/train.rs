use rand::seq::SliceRandom;

use super::model::{AcrConfig, AcrModel};
use crate::corpus::{Article, Catalog, WordVectors};
use crate::error::{Error, Result};
use crate::kernel::{Adam, AdamConfig, Graph};
use crate::rng::substream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Full objective (cross-entropy plus penalty) over the catalog after the epoch.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AcrReport {
    pub epochs: Vec<EpochStats>,
    pub steps: u64,
    /// Set when the catalog has a single category.
    pub degenerate_labels: bool,
}

impl AcrReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }
}

/// Trains the category classifier on the whole catalog and reports
/// loss and accuracy on that same catalog after every epoch.
pub fn train_acr(
    catalog: &Catalog,
    config: &AcrConfig,
    pretrained: Option<&WordVectors>,
) -> Result<(AcrModel, AcrReport)> {
    if catalog.is_empty() {
        return Err(Error::Invariant("cannot train on an empty catalog".into()));
    }
    let mut model = AcrModel::for_catalog(config.clone(), catalog, pretrained)?;
    let mut report = AcrReport {
        degenerate_labels: catalog.n_categories() < 2,
        ..Default::default()
    };
    if report.degenerate_labels {
        log::warn!("catalog has a single category; the classifier has nothing to separate");
    }
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..Default::default()
        },
        &model.store,
    );
    let mut rng = substream(config.seed, "acr-batches");
    let mut order: Vec<usize> = (0..catalog.len()).collect();
    let articles = catalog.articles();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Article> = chunk.iter().map(|&i| &articles[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|a| a.category_id as usize).collect();
            let grads = {
                let mut g = Graph::with_params(&model.store);
                let out = model.forward(&mut g, &batch)?;
                let loss = model.loss(&mut g, out.logits, &labels, config.lambda)?;
                g.backward(loss)?
            };
            adam.step(&mut model.store, &grads)?;
            report.steps += 1;
        }
        let (loss, accuracy) = evaluate(&model, catalog, config.lambda)?;
        log::info!("acr epoch {epoch}: loss {loss:.4} accuracy {accuracy:.4}");
        report.epochs.push(EpochStats { epoch, loss, accuracy });
    }
    Ok((model, report))
}

/// Objective and accuracy over the full catalog.
pub fn evaluate(model: &AcrModel, catalog: &Catalog, lambda: f64) -> Result<(f64, f64)> {
    let articles: Vec<&Article> = catalog.articles().iter().collect();
    let mut xent = 0.0;
    let mut correct = 0usize;
    for chunk in articles.chunks(model.config.batch_size.max(1)) {
        let labels: Vec<usize> = chunk.iter().map(|a| a.category_id as usize).collect();
        let mut g = Graph::with_params(&model.store);
        let out = model.forward(&mut g, chunk)?;
        let loss = g.softmax_cross_entropy(out.logits, &labels)?;
        xent += g.scalar(loss) * chunk.len() as f64;
        let logits = g.value(out.logits);
        for (r, &label) in labels.iter().enumerate() {
            if argmax(logits.row(r)) == label {
                correct += 1;
            }
        }
    }
    let n = articles.len() as f64;
    let penalty: f64 = model
        .store
        .decayed()
        .into_iter()
        .map(|id| model.store.get(id).sum_squares())
        .sum::<f64>()
        * lambda;
    Ok((xent / n + penalty, correct as f64 / n))
}

/// First index of the maximum.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}
