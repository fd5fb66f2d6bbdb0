use proptest::prelude::*;

use super::*;
use crate::acr::EmbeddingRepository;

fn a(i: u32) -> ArticleIdx {
    ArticleIdx(i)
}

const A: ArticleIdx = ArticleIdx(0);
const B: ArticleIdx = ArticleIdx(1);
const C: ArticleIdx = ArticleIdx(2);

fn corpus_abc() -> BaselineIndices {
    BaselineIndices::rebuild([(&[A, B, C][..], 0), (&[A, C][..], 1)])
}

// Brute-force recomputation straight from the raw sessions.
mod oracle {
    use super::*;

    pub fn co(sessions: &[Vec<ArticleIdx>], p: ArticleIdx, q: ArticleIdx) -> f64 {
        if p == q {
            return 0.0;
        }
        sessions.iter().filter(|s| s.contains(&p) && s.contains(&q)).count() as f64
    }

    pub fn n(sessions: &[Vec<ArticleIdx>], p: ArticleIdx) -> f64 {
        sessions.iter().filter(|s| s.contains(&p)).count() as f64
    }

    pub fn sr(sessions: &[Vec<ArticleIdx>], p: ArticleIdx, q: ArticleIdx) -> f64 {
        let mut w = 0.0;
        for s in sessions {
            for i in 0..s.len() {
                for j in i + 1..s.len() {
                    if s[i] == p && s[j] == q {
                        w += 1.0 / (j - i) as f64;
                    }
                }
            }
        }
        w
    }

    pub fn knn(sessions: &[Vec<ArticleIdx>], p: ArticleIdx, q: ArticleIdx) -> f64 {
        let d = n(sessions, p) * n(sessions, q);
        if d == 0.0 {
            0.0
        } else {
            co(sessions, p, q) / d.sqrt()
        }
    }

    pub fn vsknn(sessions: &[Vec<ArticleIdx>], active: &[ArticleIdx], c: ArticleIdx, k: usize) -> f64 {
        let weight = |item: ArticleIdx| {
            active
                .iter()
                .rposition(|&x| x == item)
                .map_or(0.0, |i| (i + 1) as f64 / active.len() as f64)
        };
        let mut sims: Vec<(usize, f64)> = sessions
            .iter()
            .enumerate()
            .map(|(id, s)| {
                let mut items = s.clone();
                items.sort();
                items.dedup();
                (id, items.iter().map(|&x| weight(x)).sum::<f64>())
            })
            .filter(|&(_, sim)| sim > 0.0)
            .collect();
        sims.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(y.0.cmp(&x.0)));
        sims.iter()
            .take(k)
            .filter(|(id, _)| sessions[*id].contains(&c))
            .map(|(_, sim)| sim)
            .sum()
    }
}

#[test]
fn cooccurrence_examples() {
    let idx = corpus_abc();
    assert_eq!(cooccurrence_score(A, &[B, C], &idx.cooccurrence), vec![1.0, 2.0]);
    assert_eq!(cooccurrence_score(B, &[C], &idx.cooccurrence), vec![1.0]);
    assert_eq!(cooccurrence_score(B, &[a(9)], &idx.cooccurrence), vec![0.0]);
}

#[test]
fn sequential_rule_examples() {
    let idx = corpus_abc();
    assert_eq!(sr_score(A, &[B, C], &idx.rules), vec![1.0, 1.5]);
    assert_eq!(sr_score(C, &[A, B], &idx.rules), vec![0.0, 0.0]);
    let single = BaselineIndices::rebuild([(&[A, B, C][..], 0)]);
    assert_eq!(single.rules.weight(A, C), 0.5);
}

#[test]
fn itemknn_examples() {
    let idx = corpus_abc();
    let s = itemknn_score(A, &[C, B], &idx.cooccurrence);
    assert!((s[0] - 1.0).abs() < 1e-12);
    assert!((s[1] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    let only = BaselineIndices::rebuild([(&[A, B][..], 0), (&[A, C][..], 1)]);
    assert!((itemknn_score(B, &[A], &only.cooccurrence)[0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(itemknn_score(a(7), &[A], &only.cooccurrence), vec![0.0]);
    let perfect = BaselineIndices::rebuild([(&[A, B][..], 0), (&[A, B][..], 1)]);
    assert_eq!(itemknn_score(A, &[B], &perfect.cooccurrence), vec![1.0]);
}

#[test]
fn vsknn_examples() {
    let idx = BaselineIndices::rebuild([(&[A, B][..], 0)]);
    assert_eq!(vsknn_score(&[A], &[B], &idx.sessions, 100), vec![1.0]);
    let idx = BaselineIndices::rebuild([(&[A, C][..], 0)]);
    assert_eq!(vsknn_score(&[A, B], &[C, a(5)], &idx.sessions, 100), vec![0.5, 0.0]);
    let idx = BaselineIndices::rebuild([(&[a(8), a(9)][..], 0)]);
    assert_eq!(vsknn_score(&[A, B], &[a(9)], &idx.sessions, 100), vec![0.0]);
}

#[test]
fn recently_popular_examples() {
    let mut buf = ClickBuffer::new(10);
    assert_eq!(recently_popular_score(&[A], &buf), vec![0.0]);
    for x in [A, A, B] {
        buf.push(x, 0);
    }
    assert_eq!(recently_popular_score(&[A, B, C], &buf), vec![2.0, 1.0, 0.0]);
}

#[test]
fn content_examples() {
    use std::io::Cursor;
    let records: Vec<_> = ["q", "x", "y", "z"]
        .iter()
        .map(|id| crate::corpus::ArticleRecord {
            article_id: id.to_string(),
            text: "t".into(),
            publisher: "p".into(),
            category: "c".into(),
            published_at: 0,
        })
        .collect();
    let mut buf = Vec::new();
    crate::corpus::write_articles(&records, &mut buf).unwrap();
    let catalog = crate::corpus::parse_articles(Cursor::new(buf), Default::default()).unwrap().0;
    let mut repo = EmbeddingRepository::new(2, "");
    repo.insert("q", &[1.0, 0.0]).unwrap();
    repo.insert("x", &[1.0, 1.0]).unwrap();
    repo.insert("y", &[-1.0, 0.0]).unwrap();
    let table = ContentTable::new(&catalog, &repo);
    let (q, x, y, z) = (a(0), a(1), a(2), a(3));
    let (s, missing) = content_based_score(&[q], &[x, y, q, z], &table, ContentQuery::Last);
    assert!((s[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    assert_eq!(s[1], -1.0);
    assert!((s[2] - 1.0).abs() < 1e-12);
    assert_eq!(s[3], f64::NEG_INFINITY);
    assert_eq!(missing, 1);
    let (m, _) = content_based_score(&[q, x], &[y], &table, ContentQuery::Mean);
    assert!(m[0] < 0.0);
}

#[test]
fn single_session_update() {
    let idx = BaselineIndices::rebuild([(&[A, B][..], 0)]);
    assert_eq!(idx.cooccurrence.pair(A, B), 1);
    assert_eq!(idx.rules.weight(A, B), 1.0);
    assert_eq!((idx.cooccurrence.sessions_with(A), idx.cooccurrence.sessions_with(B)), (1, 1));
    let none: [(&[ArticleIdx], i64); 0] = [];
    assert_eq!(BaselineIndices::rebuild(none), BaselineIndices::new());
}

#[test]
fn checkpoint_replays_history() {
    let idx = corpus_abc();
    let mut ck = Checkpoint::new(0, 0);
    idx.to_checkpoint(&mut ck);
    assert_eq!(BaselineIndices::from_checkpoint(&ck).unwrap(), idx);
}

fn small_corpus() -> impl Strategy<Value = Vec<Vec<ArticleIdx>>> {
    prop::collection::vec(prop::collection::vec((0u32..8).prop_map(ArticleIdx), 1..7), 0..=10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scores_match_brute_force(sessions in small_corpus(), active in prop::collection::vec((0u32..8).prop_map(ArticleIdx), 1..5), k in 1usize..6) {
        let idx = BaselineIndices::rebuild(sessions.iter().map(|s| (s.as_slice(), 0)));
        let cands: Vec<ArticleIdx> = (0..9).map(ArticleIdx).collect();
        let last = *active.last().unwrap();
        let co = cooccurrence_score(last, &cands, &idx.cooccurrence);
        let sr = sr_score(last, &cands, &idx.rules);
        let kn = itemknn_score(last, &cands, &idx.cooccurrence);
        let vs = vsknn_score(&active, &cands, &idx.sessions, k);
        for (i, &c) in cands.iter().enumerate() {
            prop_assert_eq!(co[i], oracle::co(&sessions, last, c));
            prop_assert!((sr[i] - oracle::sr(&sessions, last, c)).abs() <= 1e-12);
            prop_assert!((kn[i] - oracle::knn(&sessions, last, c)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&kn[i]));
            prop_assert!((vs[i] - oracle::vsknn(&sessions, &active, c, k)).abs() <= 1e-12);
            prop_assert!(co[i] >= 0.0 && sr[i] >= 0.0);
            // scoring one candidate never depends on the others
            prop_assert_eq!(cooccurrence_score(last, &[c], &idx.cooccurrence)[0], co[i]);
            prop_assert_eq!(vsknn_score(&active, &[c], &idx.sessions, k)[0], vs[i]);
        }
        for p in 0..8 {
            for q in 0..8 {
                let (p, q) = (ArticleIdx(p), ArticleIdx(q));
                let c = idx.cooccurrence.pair(p, q);
                prop_assert_eq!(c, idx.cooccurrence.pair(q, p));
                prop_assert!(c <= idx.cooccurrence.sessions_with(p).min(idx.cooccurrence.sessions_with(q)));
            }
        }
    }

    #[test]
    fn recent_popularity_matches_recount(cap in 1usize..10, stream in prop::collection::vec(0u32..6, 0..40)) {
        let mut buf = ClickBuffer::new(cap);
        for (i, &x) in stream.iter().enumerate() {
            buf.push(ArticleIdx(x), i as i64);
        }
        let tail = &stream[stream.len().saturating_sub(cap)..];
        let cands: Vec<ArticleIdx> = (0..6).map(ArticleIdx).collect();
        let s = recently_popular_score(&cands, &buf);
        for (i, c) in cands.iter().enumerate() {
            prop_assert_eq!(s[i], tail.iter().filter(|&&x| x == c.0).count() as f64);
        }
    }

    #[test]
    fn incremental_equals_rebuild(sessions in prop::collection::vec(prop::collection::vec((0u32..12).prop_map(ArticleIdx), 1..8), 50)) {
        let mut inc = BaselineIndices::new();
        for (i, s) in sessions.iter().enumerate() {
            inc.update(s, i as i64);
        }
        let full = BaselineIndices::rebuild(sessions.iter().enumerate().map(|(i, s)| (s.as_slice(), i as i64)));
        prop_assert_eq!(inc, full);
    }
}
