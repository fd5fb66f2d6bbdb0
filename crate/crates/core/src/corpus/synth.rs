//! Seeded synthetic news corpus.
//!
//! Articles are spread over categories, each with its own topic words, and
//! are published at staggered times (a backlog before the first hour, the
//! rest uniformly over the simulated period). Every category has a
//! successor category, forming a single cycle, and every article an oracle
//! successor: a recently published article of the successor category.
//! Sessions start on a fresh, appealing article and then walk: with
//! probability `markov_skew` to the oracle successor, otherwise to a
//! uniformly drawn live article.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::article::{write_articles, ArticleRecord};
use super::click::{write_clicks, ClickRecord, Device, Platform};
use super::session::SESSION_GAP_SECS;
use crate::error::{Error, Result};
use crate::rng::{substream, Rng};

/// Start of the first simulated hour (an exact hour boundary).
pub const DEFAULT_START_TS: i64 = 1_599_998_400;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_articles: usize,
    pub n_categories: usize,
    pub n_users: usize,
    pub n_sessions: usize,
    pub hours: usize,
    pub markov_skew: f64,
    pub seed: u64,
    pub n_publishers: usize,
    pub topic_words: usize,
    pub common_words: usize,
    pub start_ts: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_articles: 2000,
            n_categories: 20,
            n_users: 20_000,
            n_sessions: 20_000,
            hours: 48,
            markov_skew: 0.9,
            seed: 1,
            n_publishers: 8,
            topic_words: 40,
            common_words: 300,
            start_ts: DEFAULT_START_TS,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_articles", self.n_articles),
            ("n_categories", self.n_categories),
            ("n_users", self.n_users),
            ("n_sessions", self.n_sessions),
            ("hours", self.hours),
            ("n_publishers", self.n_publishers),
            ("topic_words", self.topic_words),
            ("common_words", self.common_words),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.markov_skew) {
            return Err(Error::config("markov_skew", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub categories: Vec<String>,
    pub articles: Vec<ArticleRecord>,
    /// Sorted by timestamp.
    pub clicks: Vec<ClickRecord>,
    /// Oracle successor of every article id.
    pub successors: HashMap<String, String>,
}

pub struct SynthPaths {
    pub articles: PathBuf,
    pub clicks: PathBuf,
    pub categories: PathBuf,
}

impl SynthCorpus {
    pub fn write(&self, dir: &Path) -> Result<SynthPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths {
            articles: dir.join("articles.jsonl"),
            clicks: dir.join("clicks.jsonl"),
            categories: dir.join("categories.txt"),
        };
        let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
        let mut w = create(&paths.articles)?;
        write_articles(&self.articles, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&paths.articles, e))?;
        let mut w = create(&paths.clicks)?;
        write_clicks(&self.clicks, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&paths.clicks, e))?;
        let mut w = create(&paths.categories)?;
        self.categories
            .iter()
            .try_for_each(|c| writeln!(w, "{c}"))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&paths.categories, e))?;
        Ok(paths)
    }
}

struct Item {
    category: usize,
    published_at: i64,
    appeal: f64,
}

/// Hours over which an article's draw weight for session starts decays by `e`.
const FRESHNESS_HOURS: f64 = 6.0;
const SUCCESSOR_POOL: usize = 5;

pub fn generate_synthetic(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = substream(config.seed, "data");
    let start = config.start_ts;
    let end = start + config.hours as i64 * 3600;

    let categories: Vec<String> = (0..config.n_categories).map(|c| format!("cat{c:02}")).collect();
    // successor categories form one cycle, so no category succeeds itself
    let mut order: Vec<usize> = (0..config.n_categories).collect();
    order.shuffle(&mut rng);
    let mut next_category = vec![0; config.n_categories];
    for i in 0..order.len() {
        next_category[order[i]] = order[(i + 1) % order.len()];
    }

    let mut items: Vec<Item> = (0..config.n_articles)
        .map(|_| {
            let backlog = rng.gen_bool(0.2);
            let published_at = if backlog {
                rng.gen_range(start - 24 * 3600..start)
            } else {
                rng.gen_range(start..end)
            };
            Item {
                category: rng.gen_range(0..config.n_categories),
                published_at,
                appeal: rng.gen_range(0.2..1.8),
            }
        })
        .collect();
    items.sort_by_key(|it| it.published_at);

    let ids: Vec<String> = (0..items.len()).map(|i| format!("a{i:05}")).collect();
    let articles: Vec<ArticleRecord> = items
        .iter()
        .zip(&ids)
        .map(|(it, id)| {
            let len = rng.gen_range(20..=40);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.6) {
                        format!("t{}w{}", it.category, rng.gen_range(0..config.topic_words))
                    } else {
                        format!("w{}", rng.gen_range(0..config.common_words))
                    }
                })
                .collect();
            ArticleRecord {
                article_id: id.clone(),
                text: words.join(" "),
                publisher: format!("pub{}", rng.gen_range(0..config.n_publishers)),
                category: categories[it.category].clone(),
                published_at: it.published_at,
            }
        })
        .collect();

    // articles are sorted by publication time, so per-category lists are too
    let mut by_category: Vec<Vec<usize>> = vec![Vec::new(); config.n_categories];
    for (i, it) in items.iter().enumerate() {
        by_category[it.category].push(i);
    }
    let successor: Vec<Option<usize>> = items
        .iter()
        .map(|it| {
            let pool = &by_category[next_category[it.category]];
            let published = pool.partition_point(|&j| items[j].published_at <= it.published_at);
            let window = if published > 0 {
                &pool[published.saturating_sub(SUCCESSOR_POOL)..published]
            } else {
                &pool[..pool.len().min(SUCCESSOR_POOL)]
            };
            window.choose(&mut rng).copied()
        })
        .collect();

    let mut starts: Vec<i64> = (0..config.n_sessions).map(|_| rng.gen_range(start..end)).collect();
    starts.sort_unstable();

    let users: Vec<String> = (0..config.n_users).map(|u| format!("u{u:06}")).collect();
    let mut user_free_at = vec![i64::MIN; config.n_users];
    let mut clicks = Vec::new();
    let live_count = |t: i64| items.partition_point(|it| it.published_at <= t);

    for &t0 in &starts {
        let mut user = rng.gen_range(0..config.n_users);
        for _ in 0..20 {
            if user_free_at[user] < t0 {
                break;
            }
            user = rng.gen_range(0..config.n_users);
        }
        let platform = *Platform::ALL.choose(&mut rng).unwrap();
        let device = match platform {
            Platform::App => *[Device::Mobile, Device::Tablet].choose(&mut rng).unwrap(),
            Platform::Web => *Device::ALL.choose(&mut rng).unwrap(),
        };
        let len = session_length(&mut rng);

        let mut ts = t0;
        let live = live_count(ts);
        if live == 0 {
            continue;
        }
        let mut current = draw_fresh(&items[..live], ts, &mut rng);
        for step in 0..len {
            if step > 0 {
                ts += rng.gen_range(20..=600);
                let live = live_count(ts);
                current = match successor[current] {
                    Some(s) if items[s].published_at <= ts && rng.gen_bool(config.markov_skew) => s,
                    _ => rng.gen_range(0..live),
                };
            }
            clicks.push(ClickRecord {
                user_id: users[user].clone(),
                article_id: ids[current].clone(),
                ts,
                platform,
                device,
            });
        }
        user_free_at[user] = ts + SESSION_GAP_SECS;
    }
    clicks.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.user_id.cmp(&b.user_id)));

    let successors = successor
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (ids[i].clone(), ids[s].clone())))
        .collect();
    Ok(SynthCorpus {
        categories,
        articles,
        clicks,
        successors,
    })
}

/// Mostly short sessions; a few single clicks and a few over-long ones so
/// the length filter has something to do.
fn session_length(rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    if u < 0.08 {
        1
    } else if u < 0.09 {
        rng.gen_range(21..=24)
    } else {
        let mut len = 2;
        while len < 20 && rng.gen_bool(0.45) {
            len += 1;
        }
        len
    }
}

fn draw_fresh(live: &[Item], now: i64, rng: &mut Rng) -> usize {
    let weights: Vec<f64> = live
        .iter()
        .map(|it| it.appeal * (-((now - it.published_at) as f64 / 3600.0) / FRESHNESS_HOURS).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    live.len() - 1
}

/// Small labelled corpus in which every category owns one marker word that
/// appears in all of its articles and nowhere else; the remaining words
/// are shared noise.
pub fn generate_marker_articles(n_categories: usize, per_category: usize, seed: u64) -> Vec<ArticleRecord> {
    let mut rng = substream(seed, "marker");
    let mut out = Vec::with_capacity(n_categories * per_category);
    for c in 0..n_categories {
        for k in 0..per_category {
            let len = rng.gen_range(6..14);
            let mut words: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..50))).collect();
            let at = rng.gen_range(0..=words.len());
            words.insert(at, format!("marker{c}"));
            out.push(ArticleRecord {
                article_id: format!("m{c:02}-{k:03}"),
                text: words.join(" "),
                publisher: format!("pub{}", rng.gen_range(0..3)),
                category: format!("cat{c:02}"),
                published_at: DEFAULT_START_TS,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(skew: f64) -> SynthConfig {
        SynthConfig {
            n_articles: 300,
            n_categories: 6,
            n_users: 2000,
            n_sessions: 3000,
            hours: 12,
            markov_skew: skew,
            seed: 9,
            ..Default::default()
        }
    }

    fn transitions(c: &SynthCorpus) -> Vec<(String, String)> {
        let mut by_user: HashMap<&str, Vec<&ClickRecord>> = HashMap::new();
        for r in &c.clicks {
            by_user.entry(&r.user_id).or_default().push(r);
        }
        let mut out = Vec::new();
        for clicks in by_user.values() {
            for w in clicks.windows(2) {
                if w[1].ts - w[0].ts <= SESSION_GAP_SECS {
                    out.push((w[0].article_id.clone(), w[1].article_id.clone()));
                }
            }
        }
        out
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = generate_synthetic(&small(0.9)).unwrap().write(&dir.path().join("a")).unwrap();
        let b = generate_synthetic(&small(0.9)).unwrap().write(&dir.path().join("b")).unwrap();
        for (x, y) in [(a.articles, b.articles), (a.clicks, b.clicks), (a.categories, b.categories)] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }

    #[test]
    fn high_skew_follows_oracle_successor() {
        let mut cfg = small(0.9);
        cfg.n_sessions = 6000;
        let corpus = generate_synthetic(&cfg).unwrap();
        let tr = transitions(&corpus);
        assert!(tr.len() >= 10_000, "only {} transitions", tr.len());
        let hits = tr
            .iter()
            .filter(|(a, b)| corpus.successors.get(a) == Some(b))
            .count();
        let rate = hits as f64 / tr.len() as f64;
        assert!(rate >= 0.85, "oracle successor rate {rate}");
    }

    #[test]
    fn zero_skew_rarely_follows_successor() {
        let corpus = generate_synthetic(&small(0.0)).unwrap();
        let tr = transitions(&corpus);
        let hits = tr
            .iter()
            .filter(|(a, b)| corpus.successors.get(a) == Some(b))
            .count();
        assert!((hits as f64 / tr.len() as f64) < 0.05);
    }

    #[test]
    fn rejects_zero_counts() {
        let cfg = SynthConfig {
            hours: 0,
            ..small(0.5)
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config { key, .. }) if key == "hours"));
    }
}
