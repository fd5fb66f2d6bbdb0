use std::io::Cursor;

use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::acr::EmbeddingRepository;
use crate::corpus::{parse_articles, write_articles, ArticleIdx, ArticleRecord, Catalog, ClickEvent, Device, ParseOptions, Platform, Session};
use crate::kernel::{gradient_check_params, Graph, Tensor};
use crate::rng::from_seed;

fn tiny_config(seed: u64) -> NarConfig {
    NarConfig {
        content_dim: 4,
        item_dim: 6,
        lstm_units: 3,
        gamma: 3.0,
        lambda: 1e-3,
        batch_size: 4,
        train_negatives: 2,
        eval_negatives: 3,
        seed,
        ..NarConfig::default()
    }
}

fn random_rows(n: usize, dim: usize, rng: &mut crate::rng::Rng) -> Vec<f64> {
    (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_session(len: usize, negatives: usize, dim: usize, rng: &mut crate::rng::Rng) -> SessionInputs {
    SessionInputs {
        len,
        clicks: random_rows(len, dim, rng),
        steps: (0..len - 1)
            .map(|t| StepCandidates {
                position: t,
                articles: (0..=negatives as u32).map(ArticleIdx).collect(),
                rows: random_rows(negatives + 1, dim, rng),
            })
            .collect(),
    }
}

fn catalog(n: usize) -> Catalog {
    let records: Vec<ArticleRecord> = (0..n)
        .map(|i| ArticleRecord {
            article_id: format!("a{i}"),
            text: format!("word{i} shared"),
            publisher: "p".into(),
            category: "c".into(),
            published_at: 0,
        })
        .collect();
    let mut buf = Vec::new();
    write_articles(&records, &mut buf).unwrap();
    parse_articles(Cursor::new(buf), ParseOptions::default()).unwrap().0
}

fn content(catalog: &Catalog, dim: usize, skip: &[usize]) -> ContentTable {
    let mut rng = from_seed(5);
    let mut repo = EmbeddingRepository::new(dim, "");
    for (i, a) in catalog.articles().iter().enumerate() {
        if !skip.contains(&i) {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            repo.insert(a.article_id.clone(), &v).unwrap();
        }
    }
    ContentTable::new(catalog, &repo)
}

fn session(id: u64, user: &str, clicks: &[(u32, i64)]) -> Session {
    Session {
        id,
        clicks: clicks
            .iter()
            .map(|&(a, ts)| ClickEvent {
                user_id: user.into(),
                article: ArticleIdx(a),
                ts,
                platform: Platform::App,
                device: Device::Mobile,
            })
            .collect(),
    }
}

#[test]
fn fusion_depends_on_context() {
    let model = NarModel::new(NarConfig::default()).unwrap();
    let dim = model.config.input_dim();
    assert_eq!(dim, 257);
    let mut rng = from_seed(1);
    let mut rows = random_rows(1, dim, &mut rng);
    let mut other = rows.clone();
    other[250] += 1.0;
    rows.extend(other);
    rows.extend_from_within(..dim);
    let fused = model.fuse_rows(&rows).unwrap();
    assert_eq!(fused[0].len(), 1024);
    assert_ne!(fused[0], fused[1]);
    assert_eq!(fused[0], fused[2]);
}

#[test]
fn zero_model_predicts_a_constant() {
    let mut model = NarModel::new(tiny_config(1)).unwrap();
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        let shape = model.store.get(id).shape().to_vec();
        *model.store.get_mut(id) = Tensor::zeros(shape);
    }
    let s = random_session(4, 2, model.config.input_dim(), &mut from_seed(2));
    let p = model.predict(&s).unwrap();
    assert!(p.windows(2).all(|w| w[0] == w[1]));
}

proptest! {
    #[test]
    fn predictions_are_causal(seed in 0u64..500, len in 2usize..7, cut in 1usize..7) {
        let model = NarModel::new(tiny_config(seed)).unwrap();
        let dim = model.config.input_dim();
        let mut rng = from_seed(seed);
        let s = random_session(len, 1, dim, &mut rng);
        let full = model.predict(&s).unwrap();
        let cut = cut.min(len);
        let mut head = s.clone();
        head.len = cut;
        head.clicks.truncate(cut * dim);
        head.steps.truncate(cut - 1);
        let part = model.predict(&head).unwrap();
        prop_assert_eq!(&full[..cut], &part[..]);

        let mut altered = s.clone();
        for v in &mut altered.clicks[cut * dim..] {
            *v = -*v + 0.5;
        }
        let changed = model.predict(&altered).unwrap();
        prop_assert_eq!(&full[..cut], &changed[..cut]);
    }

    #[test]
    fn probabilities_shift_invariant_and_monotone(
        rel in prop::collection::vec(-1.0f64..1.0, 2..12),
        shift in -5.0f64..5.0,
        bump in 0.01f64..1.0,
        gamma in 0.1f64..20.0,
    ) {
        let p = next_click_probability(&rel, gamma);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = rel.iter().map(|r| r + shift).collect();
        let q = next_click_probability(&shifted, gamma);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let mut up = rel.clone();
        up[0] += bump;
        prop_assert!(next_click_probability(&up, gamma)[0] > p[0]);

        let order = |xs: &[f64]| {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            idx.sort_by(|&a, &b| xs[b].partial_cmp(&xs[a]).unwrap().then(a.cmp(&b)));
            idx
        };
        prop_assert_eq!(order(&p), order(&rel));
    }
}

#[test]
fn relevance_examples() {
    let p = [0.3, -1.0, 2.0];
    assert!((relevance(&p, &p).0 - 1.0).abs() < 1e-12);
    assert!((relevance(&[1.0, 0.0], &[0.0, 2.0]).0).abs() < 1e-12);
    let neg: Vec<f64> = p.iter().map(|v| -v).collect();
    assert!((relevance(&p, &neg).0 + 1.0).abs() < 1e-12);
    assert_eq!(relevance(&[0.0, 0.0], &[1.0, 0.0]), (0.0, true));
}

#[test]
fn probability_examples() {
    assert_eq!(next_click_probability(&[0.2, 0.2], 10.0), vec![0.5, 0.5]);
    let p = next_click_probability(&[1.0, 0.0], 1.0);
    let e = std::f64::consts::E;
    assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
    assert!((p[0] - 0.7311).abs() < 1e-4);
    let p = next_click_probability(&[0.4; 51], 10.0);
    assert!(p.iter().all(|v| (v - 1.0 / 51.0).abs() < 1e-12));
}

#[test]
fn loss_examples() {
    let mut g = Graph::new();
    let r = g.input(Tensor::vector(vec![100.0, 0.0, 0.0, 90.0, 1.0]));
    let l = nar_loss(&mut g, r, &[0..3, 3..5], 10.0, &[], 0.0).unwrap();
    assert!(g.scalar(l.total).abs() < 1e-12);

    let r = g.input(Tensor::vector(vec![0.3, 0.3]));
    let l = nar_loss(&mut g, r, std::slice::from_ref(&(0..2)), 10.0, &[], 0.0).unwrap();
    assert!((g.scalar(l.total) - 2f64.ln()).abs() < 1e-12);

    // mixed widths average over steps, not over groups
    let r = g.input(Tensor::vector(vec![0.0, 0.0, 0.0, 0.0, 0.0]));
    let l = nar_loss(&mut g, r, &[0..2, 2..5], 1.0, &[], 0.0).unwrap();
    let expected = (2f64.ln() + 3f64.ln()) / 2.0;
    assert!((g.scalar(l.ranking) - expected).abs() < 1e-12);
}

#[test]
fn end_to_end_loss_gradient() {
    for seed in 0..20u64 {
        let mut model = NarModel::new(tiny_config(seed)).unwrap();
        let dim = model.config.input_dim();
        let mut rng = from_seed(100 + seed);
        let a = random_session(3, 2, dim, &mut rng);
        let b = random_session(3, 2, dim, &mut rng);
        let mut store = std::mem::take(&mut model.store);
        let decayed = store.decayed();
        let (gamma, lambda) = (model.config.gamma, model.config.lambda);
        let err = gradient_check_params(
            &mut store,
            |g| {
                let fwd = model.forward(g, &[&a, &b])?;
                Ok(nar_loss(g, fwd.relevance, &fwd.spans, gamma, &decayed, lambda)?.total)
            },
            1e-5,
            10,
        )
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn batched_and_single_scores_agree() {
    let model = NarModel::new(tiny_config(3)).unwrap();
    let dim = model.config.input_dim();
    let mut rng = from_seed(7);
    let sessions: Vec<SessionInputs> = [2, 5, 3, 5].iter().map(|&l| random_session(l, 2, dim, &mut rng)).collect();
    let refs: Vec<&SessionInputs> = sessions.iter().collect();
    let mut g = Graph::with_params(&model.store);
    let fwd = model.forward(&mut g, &refs).unwrap();
    let all = g.value(fwd.relevance).data().to_vec();
    let single: Vec<f64> = sessions.iter().flat_map(|s| model.score(s).unwrap().concat()).collect();
    assert_eq!(all.len(), single.len());
    for (x, y) in all.iter().zip(&single) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn hour_preparation_replays_clicks_in_order() {
    let cat = catalog(12);
    let table = content(&cat, 4, &[]);
    let sessions = vec![
        session(0, "u1", &[(0, 100), (0, 200), (1, 300)]),
        session(1, "u2", &[(2, 150), (3, 160)]),
    ];
    let mut buffer = ClickBuffer::new(50);
    let hour = prepare_hour(&sessions, 0, Phase::Train, &mut buffer, &cat, Some(&table), 8, 2, 1).unwrap();
    assert_eq!(buffer.len(), 5);
    let first = hour.sessions().find(|p| p.index == 0).unwrap();
    let inputs = first.inputs.as_ref().unwrap();
    let dim = 4 + CONTEXT_DIM;
    // popularity of article 0 after its first and second push
    assert!((inputs.clicks[4] - 1f64.ln_1p()).abs() < 1e-12);
    assert!((inputs.clicks[dim + 4] - 2f64.ln_1p()).abs() < 1e-12);
    assert_eq!(inputs.steps.len(), 2);
    // the short session has exactly one scored position
    let second = hour.sessions().find(|p| p.index == 1).unwrap();
    assert_eq!(second.inputs.as_ref().unwrap().steps.len(), 1);
    for p in hour.sessions() {
        assert!(p.negatives.articles.iter().all(|a| !sessions[p.index].contains(*a)));
    }

    let mut frozen = buffer.clone();
    let eval = prepare_hour(&sessions, 1, Phase::Eval, &mut frozen, &cat, Some(&table), 8, 3, 1).unwrap();
    assert_eq!(frozen, buffer);
    assert_eq!(eval.sessions().count(), 2);
}

#[test]
fn sessions_without_embeddings_are_skipped() {
    let cat = catalog(10);
    let table = content(&cat, 4, &[3]);
    let sessions = vec![session(0, "u", &[(3, 10), (4, 20)]), session(1, "v", &[(5, 10), (6, 20)])];
    let mut buffer = ClickBuffer::new(10);
    let mut trainer = NarTrainer::new(NarModel::new(tiny_config(1)).unwrap());
    let report = trainer.train_on_hour(&sessions, 0, &mut buffer, &cat, &table).unwrap();
    assert_eq!(report.missing_embedding, 1);
    assert_eq!(report.sessions, 1);
    assert_eq!(buffer.len(), 4);
    let mut buffer = ClickBuffer::new(10);
    let eval = prepare_hour(&sessions, 0, Phase::Eval, &mut buffer, &cat, Some(&table), 4, 3, 1).unwrap();
    for p in eval.sessions() {
        assert!(p.negatives.articles.iter().all(|&a| a != ArticleIdx(3)));
        assert_eq!(p.inputs.is_some(), p.index == 1);
    }
}

#[test]
fn empty_hour_leaves_model_unchanged() {
    let cat = catalog(3);
    let table = content(&cat, 4, &[]);
    let mut trainer = NarTrainer::new(NarModel::new(tiny_config(1)).unwrap());
    let before = trainer.model.store.clone();
    let report = trainer
        .train_on_hour(&[], 0, &mut ClickBuffer::new(4), &cat, &table)
        .unwrap();
    assert_eq!(trainer.model.store, before);
    assert_eq!((report.steps, report.updates, report.mean_loss), (0, 0, None));
}

#[test]
fn training_reduces_loss_on_a_repeated_pattern() {
    let cat = catalog(40);
    let table = content(&cat, 4, &[]);
    let config = NarConfig {
        item_dim: 16,
        lstm_units: 8,
        lr: 1e-2,
        ..tiny_config(4)
    };
    let mut trainer = NarTrainer::new(NarModel::new(config).unwrap());
    let mut buffer = ClickBuffer::new(200);
    let mut losses = Vec::new();
    for hour in 0..6i64 {
        let sessions: Vec<Session> = (0..40u64)
            .map(|k| {
                let a = (k % 20) as u32;
                let t = hour * 3600 + k as i64 * 60;
                session(k, &format!("u{k}"), &[(a, t), (a + 20, t + 30)])
            })
            .collect();
        let r = trainer.train_on_hour(&sessions, hour, &mut buffer, &cat, &table).unwrap();
        losses.push(r.mean_loss.unwrap());
    }
    assert!(losses[5] < losses[0], "{losses:?}");
}

#[test]
fn checkpoint_round_trip() {
    let a = NarTrainer::new(NarModel::new(tiny_config(1)).unwrap());
    let mut b = NarModel::new(tiny_config(2)).unwrap();
    b.restore(&a.model.to_checkpoint(3)).unwrap();
    assert_eq!(b.store, a.model.store);
}
