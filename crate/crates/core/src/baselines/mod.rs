//! Session-based baselines scoring arbitrary candidate sets: pairwise
//! co-occurrence, sequential rules, item-kNN, session-kNN with recency
//! weights, recent popularity and content similarity.
//!
//! Co-occurrence and item-kNN count a repeated click once per session;
//! sequential rules use the raw click order.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::ArticleIdx;
use crate::error::{Error, Result};
use crate::kernel::Checkpoint;
use crate::nar::{ClickBuffer, ContentTable};

/// Default neighbourhood size of session-kNN.
pub const DEFAULT_NEIGHBOURS: usize = 100;

/// Symmetric session co-occurrence counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CooccurrenceIndex {
    pairs: HashMap<(ArticleIdx, ArticleIdx), u32>,
    sessions_with: HashMap<ArticleIdx, u32>,
}

impl CooccurrenceIndex {
    pub fn update(&mut self, session: &[ArticleIdx]) {
        let items: BTreeSet<ArticleIdx> = session.iter().copied().collect();
        for &p in &items {
            *self.sessions_with.entry(p).or_insert(0) += 1;
            for &q in &items {
                if p != q {
                    *self.pairs.entry((p, q)).or_insert(0) += 1;
                }
            }
        }
    }

    /// Sessions containing both `p` and `q`; zero when `p == q`.
    pub fn pair(&self, p: ArticleIdx, q: ArticleIdx) -> u32 {
        self.pairs.get(&(p, q)).copied().unwrap_or(0)
    }

    /// Sessions containing `p`.
    pub fn sessions_with(&self, p: ArticleIdx) -> u32 {
        self.sessions_with.get(&p).copied().unwrap_or(0)
    }
}

/// Directed rules `p → q` weighted `1/x` for every occurrence of `q`
/// `x` positions after `p` within a session.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequentialRuleIndex {
    rules: HashMap<(ArticleIdx, ArticleIdx), f64>,
}

impl SequentialRuleIndex {
    pub fn update(&mut self, session: &[ArticleIdx]) {
        for i in 0..session.len() {
            for j in i + 1..session.len() {
                *self.rules.entry((session[i], session[j])).or_insert(0.0) += 1.0 / (j - i) as f64;
            }
        }
    }

    pub fn weight(&self, p: ArticleIdx, q: ArticleIdx) -> f64 {
        self.rules.get(&(p, q)).copied().unwrap_or(0.0)
    }
}

/// Past sessions as item sets with an inverted index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionIndex {
    sessions: Vec<(Vec<ArticleIdx>, i64)>,
    containing: HashMap<ArticleIdx, Vec<usize>>,
}

impl SessionIndex {
    pub fn update(&mut self, session: &[ArticleIdx], ts: i64) {
        let items: Vec<ArticleIdx> = session.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let id = self.sessions.len();
        for &a in &items {
            self.containing.entry(a).or_default().push(id);
        }
        self.sessions.push((items, ts));
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Distinct items of past session `id`, ascending.
    pub fn items(&self, id: usize) -> &[ArticleIdx] {
        &self.sessions[id].0
    }

    pub fn sessions_containing(&self, item: ArticleIdx) -> &[usize] {
        self.containing.get(&item).map_or(&[], |v| v.as_slice())
    }
}

/// All click-derived baseline indices, updated together.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BaselineIndices {
    pub cooccurrence: CooccurrenceIndex,
    pub rules: SequentialRuleIndex,
    pub sessions: SessionIndex,
    history: Vec<(Vec<ArticleIdx>, i64)>,
}

impl BaselineIndices {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one completed session (article sequence and start time).
    pub fn update(&mut self, session: &[ArticleIdx], ts: i64) {
        self.cooccurrence.update(session);
        self.rules.update(session);
        self.sessions.update(session, ts);
        self.history.push((session.to_vec(), ts));
    }

    pub fn rebuild<'a>(sessions: impl IntoIterator<Item = (&'a [ArticleIdx], i64)>) -> Self {
        let mut idx = Self::new();
        for (s, ts) in sessions {
            idx.update(s, ts);
        }
        idx
    }

    /// Stores the session history; restoring replays it.
    pub fn to_checkpoint(&self, ck: &mut Checkpoint) {
        let text: Vec<String> = self
            .history
            .iter()
            .map(|(s, ts)| {
                let items: Vec<String> = s.iter().map(|a| a.0.to_string()).collect();
                format!("{ts} {}", items.join(" "))
            })
            .collect();
        ck.push_text("baselines.history", text.join("\n"));
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let text = ck
            .text("baselines.history")
            .ok_or_else(|| Error::Checkpoint("missing baseline history".into()))?;
        let mut idx = Self::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let mut parts = line.split(' ').map(str::parse::<i64>);
            let bad = || Error::Checkpoint(format!("bad history line `{line}`"));
            let ts = parts.next().ok_or_else(bad)?.map_err(|_| bad())?;
            let items = parts
                .map(|p| p.map(|v| ArticleIdx(v as u32)).map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            idx.update(&items, ts);
        }
        Ok(idx)
    }
}

pub fn cooccurrence_score(last: ArticleIdx, candidates: &[ArticleIdx], index: &CooccurrenceIndex) -> Vec<f64> {
    candidates.iter().map(|&c| index.pair(last, c) as f64).collect()
}

pub fn sr_score(last: ArticleIdx, candidates: &[ArticleIdx], index: &SequentialRuleIndex) -> Vec<f64> {
    candidates.iter().map(|&c| index.weight(last, c)).collect()
}

/// `c(last, c) / sqrt(n(last)·n(c))`, zero when either count is zero.
pub fn itemknn_score(last: ArticleIdx, candidates: &[ArticleIdx], index: &CooccurrenceIndex) -> Vec<f64> {
    let n_last = index.sessions_with(last) as f64;
    candidates
        .iter()
        .map(|&c| {
            let n_c = index.sessions_with(c) as f64;
            if n_last == 0.0 || n_c == 0.0 {
                0.0
            } else {
                index.pair(last, c) as f64 / (n_last * n_c).sqrt()
            }
        })
        .collect()
}

/// Position weights `i/|s|` of the active session's items, 1-based, with a
/// repeated item keeping its latest position.
pub fn position_weights(active: &[ArticleIdx]) -> HashMap<ArticleIdx, f64> {
    let n = active.len() as f64;
    active
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, (i + 1) as f64 / n))
        .collect()
}

/// Session-kNN: similarity to a past session is the sum of the active
/// session's position weights over shared items; the `k` most similar
/// past sessions (ties to the more recent) vote their similarity for each
/// item they contain. Similarities are accumulated as integer position
/// sums so that equal similarities tie exactly.
pub fn vsknn_score(active: &[ArticleIdx], candidates: &[ArticleIdx], index: &SessionIndex, k: usize) -> Vec<f64> {
    let positions: HashMap<ArticleIdx, u64> = active.iter().enumerate().map(|(i, &a)| (a, i as u64 + 1)).collect();
    let mut sums: HashMap<usize, u64> = HashMap::new();
    for (&a, &p) in &positions {
        for &s in index.sessions_containing(a) {
            *sums.entry(s).or_insert(0) += p;
        }
    }
    let mut neighbours: Vec<(usize, u64)> = sums.into_iter().collect();
    neighbours.sort_by(|a, b| b.1.cmp(&a.1).then(b.0.cmp(&a.0)));
    neighbours.truncate(k);
    neighbours.sort_by_key(|&(s, _)| s);
    let n = active.len() as f64;
    let mut votes: HashMap<ArticleIdx, f64> = HashMap::new();
    for (s, sum) in neighbours {
        let sim = sum as f64 / n;
        for &a in index.items(s) {
            *votes.entry(a).or_insert(0.0) += sim;
        }
    }
    candidates.iter().map(|c| votes.get(c).copied().unwrap_or(0.0)).collect()
}

pub fn recently_popular_score(candidates: &[ArticleIdx], buffer: &ClickBuffer) -> Vec<f64> {
    candidates.iter().map(|&c| buffer.count(c) as f64).collect()
}

/// Query vector of the content baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ContentQuery {
    /// The last clicked article.
    #[default]
    Last,
    /// Mean of the session's article embeddings.
    Mean,
}

impl std::str::FromStr for ContentQuery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(ContentQuery::Last),
            "mean" => Ok(ContentQuery::Mean),
            _ => Err(Error::config("content_query", format!("`{s}` is not one of last, mean"))),
        }
    }
}

/// Cosine between the query embedding and each candidate. Candidates
/// without an embedding score `-inf`; their number is returned alongside.
/// With no usable query every candidate scores `-inf`.
pub fn content_based_score(
    active: &[ArticleIdx],
    candidates: &[ArticleIdx],
    content: &ContentTable,
    query: ContentQuery,
) -> (Vec<f64>, usize) {
    let q: Option<Vec<f64>> = match query {
        ContentQuery::Last => active.last().and_then(|&a| content.get(a)).map(<[f64]>::to_vec),
        ContentQuery::Mean => {
            let vs: Vec<&[f64]> = active.iter().filter_map(|&a| content.get(a)).collect();
            (!vs.is_empty()).then(|| {
                let mut m = vec![0.0; content.dim()];
                for v in &vs {
                    m.iter_mut().zip(*v).for_each(|(a, b)| *a += b / vs.len() as f64);
                }
                m
            })
        }
    };
    let mut missing = 0;
    let scores = candidates
        .iter()
        .map(|&c| match (q.as_deref(), content.get(c)) {
            (Some(q), Some(v)) => crate::nar::relevance(q, v).0,
            _ => {
                missing += 1;
                f64::NEG_INFINITY
            }
        })
        .collect();
    (scores, missing)
}

#[cfg(test)]
mod tests;
