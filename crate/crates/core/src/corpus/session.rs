use super::article::ArticleIdx;
use super::click::ClickEvent;
use crate::error::{Error, Result};

/// Inactivity gap, in seconds, after which a new session starts.
pub const SESSION_GAP_SECS: i64 = 30 * 60;
pub const MIN_SESSION_LEN: usize = 2;
pub const MAX_SESSION_LEN: usize = 20;
pub const DEFAULT_BATCH_SIZE: usize = 256;

/// Ordered clicks of one user with no gap longer than the session gap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub id: u64,
    pub clicks: Vec<ClickEvent>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn user_id(&self) -> &str {
        &self.clicks[0].user_id
    }

    pub fn start(&self) -> i64 {
        self.clicks[0].ts
    }

    pub fn articles(&self) -> impl Iterator<Item = ArticleIdx> + '_ {
        self.clicks.iter().map(|c| c.article)
    }

    pub fn contains(&self, article: ArticleIdx) -> bool {
        self.clicks.iter().any(|c| c.article == article)
    }
}

/// Splits clicks sorted by `(user, ts)` into sessions. A gap of exactly
/// `gap_secs` still continues the session.
pub fn sessionize(clicks: &[ClickEvent], gap_secs: i64) -> Result<Vec<Session>> {
    assert!(gap_secs > 0, "session gap must be positive");
    let mut sessions: Vec<Session> = Vec::new();
    for (i, click) in clicks.iter().enumerate() {
        let continues = match i.checked_sub(1).map(|p| &clicks[p]) {
            Some(prev) if prev.user_id == click.user_id => {
                if click.ts < prev.ts {
                    return Err(Error::Ordering { index: i });
                }
                click.ts - prev.ts <= gap_secs
            }
            Some(prev) if prev.user_id > click.user_id => return Err(Error::Ordering { index: i }),
            _ => false,
        };
        if continues {
            sessions.last_mut().unwrap().clicks.push(click.clone());
        } else {
            sessions.push(Session {
                id: sessions.len() as u64,
                clicks: vec![click.clone()],
            });
        }
    }
    Ok(sessions)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterOptions {
    pub min_len: usize,
    pub max_len: usize,
    /// Collapse consecutive clicks on the same article before length filtering.
    pub collapse_repeats: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            min_len: MIN_SESSION_LEN,
            max_len: MAX_SESSION_LEN,
            collapse_repeats: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub kept: usize,
    pub too_short: usize,
    pub too_long: usize,
}

/// Keeps sessions whose length is within `[min_len, max_len]`.
pub fn filter_sessions(sessions: Vec<Session>, options: FilterOptions) -> (Vec<Session>, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::with_capacity(sessions.len());
    for mut s in sessions {
        if options.collapse_repeats {
            s.clicks.dedup_by(|b, a| a.article == b.article);
        }
        if s.len() < options.min_len {
            report.too_short += 1;
        } else if s.len() > options.max_len {
            report.too_long += 1;
        } else {
            kept.push(s);
        }
    }
    report.kept = kept.len();
    (kept, report)
}

/// Sessions padded to the longest member; `mask[s][t]` marks real clicks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionBatch {
    pub sessions: Vec<Session>,
    pub max_len: usize,
    pub mask: Vec<Vec<bool>>,
}

impl SessionBatch {
    pub fn new(sessions: Vec<Session>) -> Self {
        let max_len = sessions.iter().map(Session::len).max().unwrap_or(0);
        let mask = sessions
            .iter()
            .map(|s| (0..max_len).map(|t| t < s.len()).collect())
            .collect();
        SessionBatch {
            sessions,
            max_len,
            mask,
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn valid_positions(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| m).count()
    }

    /// Article grid, `None` at padded positions.
    pub fn padded_articles(&self) -> Vec<Vec<Option<ArticleIdx>>> {
        self.sessions
            .iter()
            .zip(&self.mask)
            .map(|(s, m)| {
                m.iter()
                    .enumerate()
                    .map(|(t, &valid)| valid.then(|| s.clicks[t].article))
                    .collect()
            })
            .collect()
    }

    /// Drops padding, returning the original sessions.
    pub fn unbatch(self) -> Vec<Session> {
        self.sessions
            .into_iter()
            .zip(self.mask)
            .map(|(mut s, m)| {
                let n = m.iter().filter(|&&v| v).count();
                s.clicks.truncate(n);
                s
            })
            .collect()
    }
}

/// Groups sessions, in the given order, into batches of at most `batch_size`.
pub fn batch_sessions(sessions: &[Session], batch_size: usize) -> Vec<SessionBatch> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    sessions
        .chunks(batch_size)
        .map(|chunk| SessionBatch::new(chunk.to_vec()))
        .collect()
}
