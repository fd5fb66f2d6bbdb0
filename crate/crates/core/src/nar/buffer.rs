use std::collections::{HashMap, VecDeque};

use crate::corpus::ArticleIdx;

/// Default number of recent clicks kept.
pub const DEFAULT_BUFFER_SIZE: usize = 5000;

/// Bounded FIFO of the most recent global clicks with per-article counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickBuffer {
    capacity: usize,
    clicks: VecDeque<(ArticleIdx, i64)>,
    counts: HashMap<ArticleIdx, u32>,
}

impl ClickBuffer {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        ClickBuffer {
            capacity,
            clicks: VecDeque::with_capacity(capacity),
            counts: HashMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    /// Appends a click, evicting the oldest one when full.
    pub fn push(&mut self, article: ArticleIdx, ts: i64) {
        if self.clicks.len() == self.capacity {
            let (old, _) = self.clicks.pop_front().expect("full buffer");
            let c = self.counts.get_mut(&old).expect("counted");
            *c -= 1;
            if *c == 0 {
                self.counts.remove(&old);
            }
        }
        self.clicks.push_back((article, ts));
        *self.counts.entry(article).or_insert(0) += 1;
    }

    pub fn count(&self, article: ArticleIdx) -> u32 {
        self.counts.get(&article).copied().unwrap_or(0)
    }

    /// Buffered clicks, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = (ArticleIdx, i64)> + '_ {
        self.clicks.iter().copied()
    }

    /// Distinct buffered articles in ascending index order.
    pub fn distinct(&self) -> Vec<ArticleIdx> {
        let mut v: Vec<ArticleIdx> = self.counts.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Timestamp of the newest buffered click.
    pub fn latest_ts(&self) -> Option<i64> {
        self.clicks.back().map(|&(_, ts)| ts)
    }
}
