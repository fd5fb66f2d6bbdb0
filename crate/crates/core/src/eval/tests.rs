use std::io::Cursor;

use rand::Rng as _;

use super::*;
use crate::acr::EmbeddingRepository;
use crate::corpus::{parse_articles, write_articles, ArticleIdx, ArticleRecord, Catalog, ClickEvent, Device, ParseOptions, Platform, Session};
use crate::nar::{ContentTable, NarConfig, PreparedSession};
use crate::rng::{derive, from_seed};
use crate::Result;

fn catalog(n: usize) -> Catalog {
    let records: Vec<ArticleRecord> = (0..n)
        .map(|i| ArticleRecord {
            article_id: format!("a{i:02}"),
            text: format!("word{i} shared"),
            publisher: "p".into(),
            category: format!("c{}", i % 3),
            published_at: 0,
        })
        .collect();
    let mut buf = Vec::new();
    write_articles(&records, &mut buf).unwrap();
    parse_articles(Cursor::new(buf), ParseOptions::default()).unwrap().0
}

fn content(catalog: &Catalog, dim: usize) -> ContentTable {
    let mut rng = from_seed(11);
    let mut repo = EmbeddingRepository::new(dim, "");
    for a in catalog.articles() {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        repo.insert(a.article_id.clone(), &v).unwrap();
    }
    ContentTable::new(catalog, &repo)
}

fn nar_config() -> NarConfig {
    NarConfig {
        content_dim: 4,
        item_dim: 6,
        lstm_units: 3,
        batch_size: 4,
        buffer_size: 50,
        train_negatives: 2,
        eval_negatives: 5,
        ..NarConfig::default()
    }
}

/// Three sessions starting in each of `hours` hours; some run past the
/// end of their hour.
fn sessions(n_articles: u32, hours: i64, seed: u64) -> Vec<Session> {
    let mut rng = from_seed(seed);
    let mut out = Vec::new();
    for h in 0..hours {
        for j in 0..3u64 {
            let len = rng.gen_range(2..5);
            let mut ts = h * 3600 + rng.gen_range(0..3500);
            let mut a = rng.gen_range(0..n_articles);
            let clicks = (0..len)
                .map(|_| {
                    let c = ClickEvent {
                        user_id: format!("u{h}-{j}"),
                        article: ArticleIdx(a),
                        ts,
                        platform: Platform::Web,
                        device: Device::Desktop,
                    };
                    ts += rng.gen_range(30..900);
                    a = (a + 1 + rng.gen_range(0..2)) % n_articles;
                    c
                })
                .collect();
            out.push(Session {
                id: h as u64 * 3 + j,
                clicks,
            });
        }
    }
    out
}

struct Oracle;

impl Scorer for Oracle {
    fn name(&self) -> String {
        "oracle".into()
    }
    fn score_session(&self, _: &Session, _: &PreparedSession, c: &[Vec<ArticleIdx>]) -> Result<Vec<Option<Vec<f64>>>> {
        Ok(c.iter()
            .map(|c| Some((0..c.len()).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect()))
            .collect())
    }
}

struct Uniform(String);

impl Scorer for Uniform {
    fn name(&self) -> String {
        self.0.clone()
    }
    fn score_session(&self, s: &Session, _: &PreparedSession, c: &[Vec<ArticleIdx>]) -> Result<Vec<Option<Vec<f64>>>> {
        Ok(c.iter()
            .enumerate()
            .map(|(t, c)| {
                let mut rng = from_seed(derive(3, &[s.id, t as u64]));
                Some((0..c.len()).map(|_| rng.gen::<f64>()).collect())
            })
            .collect())
    }
}

fn prepared(catalog: &Catalog, sessions: &[Session], hour: i64) -> crate::nar::PreparedHour {
    let mut buffer = crate::nar::ClickBuffer::new(100);
    for a in 0..catalog.len() as u32 {
        buffer.push(ArticleIdx(a), 0);
    }
    crate::nar::prepare_hour(sessions, hour, crate::nar::Phase::Eval, &mut buffer, catalog, None, 8, 5, 1).unwrap()
}

#[test]
fn oracle_scorer_is_perfect() {
    let cat = catalog(12);
    let ss: Vec<Session> = sessions(12, 1, 1);
    let p = prepared(&cat, &ss, 0);
    let ev = evaluate_hour(&[&Oracle], &ss, &p, &cat, 5, None, None).unwrap();
    assert_eq!(ev.metrics.len(), 1);
    assert_eq!(ev.metrics[0].hr, 1.0);
    assert_eq!(ev.metrics[0].mrr, 1.0);
    assert_eq!(ev.metrics[0].steps, ss.iter().map(|s| s.len() - 1).sum::<usize>());
}

#[test]
fn identical_scorers_give_identical_ranks() {
    let cat = catalog(12);
    let ss = sessions(12, 2, 4);
    let p = prepared(&cat, &ss, 0);
    let (a, b) = (Uniform("a".into()), Uniform("b".into()));
    let ev = evaluate_hour(&[&a, &b], &ss, &p, &cat, 5, None, None).unwrap();
    assert_eq!(ev.audit.hash_mismatches, 0);
    for r in &ev.records {
        assert_eq!(r.ranks["a"], r.ranks["b"]);
        assert_eq!(r.candidate_hash["a"], r.candidate_hash["b"]);
        assert_eq!(r.negatives.len(), 5);
        assert!(!r.negatives.contains(&r.positive));
    }
    assert_eq!(ev.metrics[0].hr, ev.metrics[1].hr);
}

#[test]
fn random_scorer_hits_at_chance() {
    let cat = catalog(60);
    let ss = sessions(60, 60, 9);
    let mut buffer = crate::nar::ClickBuffer::new(100);
    for a in 0..60 {
        buffer.push(ArticleIdx(a), 0);
    }
    let p = crate::nar::prepare_hour(&ss, 0, crate::nar::Phase::Eval, &mut buffer, &cat, None, 64, 50, 2).unwrap();
    let ev = evaluate_hour(&[&Uniform("r".into())], &ss, &p, &cat, 5, None, None).unwrap();
    let m = &ev.metrics[0];
    assert!(m.steps > 300);
    assert!((m.hr - 5.0 / 51.0).abs() < 0.06, "{}", m.hr);
}

#[test]
fn twenty_four_hours_give_twenty_three_evaluations() {
    let cat = catalog(15);
    let ss = sessions(15, 24, 2);
    let cfg = EvalConfig::default();
    let run = run_temporal_evaluation(&cat, &ss, None, &[Method::Sr, Method::RecPop], None, &nar_config(), &cfg).unwrap();
    assert_eq!(run.evaluated_hours, (1..24).collect::<Vec<_>>());
    assert_eq!(run.metrics.len(), 46);
    assert!(run.audit.passed(), "{:?}", run.audit);
}

#[test]
fn eval_cadence_and_restricted_training() {
    let cat = catalog(15);
    let ss = sessions(15, 12, 2);
    let cfg = EvalConfig {
        train_span_hours: 2,
        eval_every: 3,
        train_all_hours: false,
        ..EvalConfig::default()
    };
    let run = run_temporal_evaluation(&cat, &ss, None, &[Method::Cooccurrence], None, &nar_config(), &cfg).unwrap();
    assert_eq!(run.evaluated_hours, vec![2, 5, 8, 11]);
    // Training hours have (h mod 3) < 2; sessions ending in hours 2, 5, 8
    // and 11, or after the last evaluated hour, are never indexed.
    let trained: usize = ss
        .iter()
        .map(|s| s.clicks.last().unwrap().ts / 3600)
        .filter(|h| h % 3 < 2 && *h <= 11)
        .count();
    assert_eq!(run.indices.sessions.len(), trained);
}

#[test]
fn straddling_sessions_do_not_leak() {
    let cat = catalog(15);
    let mut ss = sessions(15, 6, 5);
    // A long session crossing two hour boundaries.
    ss[0].clicks = (0..5)
        .map(|i| ClickEvent {
            ts: 3000 + i * 1500,
            ..ss[0].clicks[0].clone()
        })
        .collect();
    let cfg = EvalConfig {
        keep_records: true,
        ..EvalConfig::default()
    };
    let table = content(&cat, 4);
    let run = run_temporal_evaluation(&cat, &ss, Some(&table), &Method::ALL, None, &nar_config(), &cfg).unwrap();
    assert!(run.audit.passed(), "{:?}", run.audit);
    assert_eq!(run.audit.records, run.records.len());
    for r in &run.records {
        if let Some(ts) = r.state_latest_ts {
            assert!(ts < r.hour * 3600);
        }
        assert_eq!(r.ranks.len(), Method::ALL.len());
    }
    let trained: usize = run.train_reports.iter().map(|r| r.sessions).sum();
    let ending_in_range = ss.iter().filter(|s| s.clicks.last().unwrap().ts < 6 * 3600).count();
    assert_eq!(trained, ending_in_range);
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let cat = catalog(15);
    let ss = sessions(15, 8, 7);
    let table = content(&cat, 4);
    let go = |threads| {
        let cfg = EvalConfig {
            threads,
            ..EvalConfig::default()
        };
        let run = run_temporal_evaluation(&cat, &ss, Some(&table), &Method::ALL, None, &nar_config(), &cfg).unwrap();
        metrics_tsv(&run.metrics)
    };
    let one = go(1);
    assert_eq!(one, go(1));
    assert_eq!(one, go(3));
}

#[test]
fn content_methods_need_a_repository() {
    let cat = catalog(5);
    let err = run_temporal_evaluation(&cat, &sessions(5, 2, 1), None, &[Method::Content], None, &nar_config(), &EvalConfig::default());
    assert!(err.is_err());
}

#[test]
fn method_names() {
    assert_eq!(Method::parse_list("all").unwrap(), Method::ALL.to_vec());
    assert_eq!(Method::parse_list("sr, nar,sr").unwrap(), vec![Method::Nar, Method::Sr]);
    let msg = Method::parse_list("nar,gru4rec").unwrap_err().to_string();
    assert!(msg.contains("gru4rec") && msg.contains("vsknn") && msg.contains("recpop"), "{msg}");
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
}

#[test]
fn aggregation_examples() {
    assert_eq!(median(&[0.1, 0.5, 0.3]), Some(0.3));
    assert_eq!(median(&[0.4, 0.1, 0.2, 0.3]), Some(0.25));
    assert_eq!(median(&[]), None);
    let gain = relative_improvement(0.72, 0.65).unwrap();
    assert!((gain - 0.10769).abs() < 1e-4);
    assert_eq!(relative_improvement(0.3, 0.0), None);

    let row = |hour, method: &str, hr, steps| HourlyMetrics {
        hour,
        method: method.into(),
        hr,
        mrr: hr / 2.0,
        steps,
        flags: "-".into(),
    };
    let rows = vec![row(2, "nar", 0.6, 10), row(1, "nar", 0.4, 10), row(1, "recpop", 0.2, 10), row(3, "nar", 0.0, 0)];
    let rep = aggregate_report(&rows);
    let nar = rep.method("nar").unwrap();
    assert_eq!(nar.hours, 2);
    assert!((nar.median_hr - 0.5).abs() < 1e-12);
    assert_eq!(nar.series, vec![(1, 0.4, 0.2), (2, 0.6, 0.3)]);
    let imp = rep.improvements_over("recpop");
    assert_eq!(imp.len(), 1);
    assert!((imp[0].1.unwrap() - 1.5).abs() < 1e-12);
    assert!(rep.table().contains("recpop"));
}

#[test]
fn metrics_tsv_round_trip_and_errors() {
    let rows = vec![HourlyMetrics {
        hour: 443_900,
        method: "sr".into(),
        hr: 0.1 + 0.2,
        mrr: 1.0 / 3.0,
        steps: 17,
        flags: "shortfall=2".into(),
    }];
    let text = metrics_tsv(&rows);
    assert!(text.starts_with(METRICS_HEADER));
    assert_eq!(parse_metrics(&text).unwrap(), rows);

    let bad = format!("{METRICS_HEADER}\n1\tsr\t0.5\t0.2\t3\t-\n2\tsr\tx\t0.2\t3\t-\n");
    match parse_metrics(&bad).unwrap_err() {
        crate::Error::Parse { line, .. } => assert_eq!(line, 3),
        e => panic!("{e}"),
    }
    assert!(parse_metrics("").is_err());
    assert!(parse_metrics(&format!("{METRICS_HEADER}\n1\tsr\t1.5\t0.2\t3\t-\n")).is_err());
}

#[test]
fn series_files() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec![HourlyMetrics {
        hour: 5,
        method: "nar".into(),
        hr: 0.5,
        mrr: 0.25,
        steps: 4,
        flags: "-".into(),
    }];
    let written = aggregate_report(&rows).write_series(dir.path()).unwrap();
    assert_eq!(written.len(), 2);
    assert_eq!(std::fs::read_to_string(dir.path().join("nar.mrr.tsv")).unwrap(), "hour_id\tmrr@5\n5\t0.25\n");
}

#[test]
fn records_serialize_as_json_lines() {
    let cat = catalog(12);
    let ss = sessions(12, 1, 1);
    let p = prepared(&cat, &ss, 0);
    let ev = evaluate_hour(&[&Oracle], &ss, &p, &cat, 5, Some(-1), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    write_records(&path, &ev.records).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), ev.records.len());
    let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(v["ranks"]["oracle"], 1);
}
