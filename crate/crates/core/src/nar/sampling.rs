use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::corpus::{ArticleIdx, Session};
use crate::rng::Rng;

pub const TRAIN_NEGATIVES: usize = 7;
pub const EVAL_NEGATIVES: usize = 50;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Negatives {
    pub articles: Vec<ArticleIdx>,
    /// Fewer than the requested count were available.
    pub shortfall: bool,
}

/// Distinct articles of a batch, ascending.
pub fn batch_pool(sessions: &[&Session]) -> Vec<ArticleIdx> {
    let set: BTreeSet<ArticleIdx> = sessions.iter().flat_map(|s| s.articles()).collect();
    set.into_iter().collect()
}

/// Draws `count` distinct negatives for `session`: first uniformly from the
/// articles of the other sessions in its batch, then, if those run out,
/// uniformly from the distinct articles of the click buffer. Articles of
/// the session itself and articles rejected by `eligible` are never drawn.
pub fn sample_negatives(
    session: &Session,
    batch_pool: &[ArticleIdx],
    buffer_pool: &[ArticleIdx],
    count: usize,
    eligible: &dyn Fn(ArticleIdx) -> bool,
    rng: &mut Rng,
) -> Negatives {
    let own: BTreeSet<ArticleIdx> = session.articles().collect();
    let in_batch: Vec<ArticleIdx> = batch_pool
        .iter()
        .copied()
        .filter(|a| !own.contains(a) && eligible(*a))
        .collect();
    let mut articles: Vec<ArticleIdx> = in_batch.choose_multiple(rng, count).copied().collect();
    if articles.len() < count {
        let taken: BTreeSet<ArticleIdx> = articles.iter().copied().collect();
        let fill: Vec<ArticleIdx> = buffer_pool
            .iter()
            .copied()
            .filter(|a| !own.contains(a) && !taken.contains(a) && eligible(*a))
            .collect();
        let need = count - articles.len();
        articles.extend(fill.choose_multiple(rng, need).copied());
    }
    Negatives {
        shortfall: articles.len() < count,
        articles,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::{ClickEvent, Device, Platform};
    use crate::rng::from_seed;

    fn session(ids: &[u32]) -> Session {
        Session {
            id: 0,
            clicks: ids
                .iter()
                .enumerate()
                .map(|(i, &a)| ClickEvent {
                    user_id: "u".into(),
                    article: ArticleIdx(a),
                    ts: i as i64,
                    platform: Platform::Web,
                    device: Device::Desktop,
                })
                .collect(),
        }
    }

    fn ids(v: &[ArticleIdx]) -> BTreeSet<u32> {
        v.iter().map(|a| a.0).collect()
    }

    const ANY: &dyn Fn(ArticleIdx) -> bool = &|_| true;

    #[test]
    fn exhaustive_in_batch_pool() {
        let (ab, cd) = (session(&[0, 1]), session(&[2, 3]));
        let pool = batch_pool(&[&ab, &cd]);
        let n = sample_negatives(&ab, &pool, &[], 2, ANY, &mut from_seed(1));
        assert_eq!(ids(&n.articles), BTreeSet::from([2, 3]));
        assert!(!n.shortfall);
    }

    #[test]
    fn buffer_fills_the_rest() {
        let (s, other) = (session(&[0, 1]), session(&[2, 3, 4]));
        let pool = batch_pool(&[&s, &other]);
        let buffer: Vec<ArticleIdx> = (0..20).map(ArticleIdx).collect();
        let n = sample_negatives(&s, &pool, &buffer, 7, ANY, &mut from_seed(2));
        assert_eq!(n.articles.len(), 7);
        assert_eq!(ids(&n.articles[..3]), BTreeSet::from([2, 3, 4]));
        assert!(n.articles[3..].iter().all(|a| a.0 >= 5));
    }

    #[test]
    fn shortfall_is_flagged() {
        let s = session(&[0, 1]);
        let n = sample_negatives(&s, &[ArticleIdx(0), ArticleIdx(5)], &[ArticleIdx(1)], 3, ANY, &mut from_seed(3));
        assert_eq!(n.articles, vec![ArticleIdx(5)]);
        assert!(n.shortfall);
    }

    proptest! {
        #[test]
        fn negatives_avoid_the_session(
            own in prop::collection::vec(0u32..30, 1..6),
            other in prop::collection::vec(0u32..30, 1..10),
            buffer in prop::collection::vec(0u32..40, 0..30),
            count in 1usize..12,
            seed in 0u64..1000,
        ) {
            let (s, o) = (session(&own), session(&other));
            let pool = batch_pool(&[&s, &o]);
            let buffer: Vec<ArticleIdx> = ids(&buffer.iter().map(|&a| ArticleIdx(a)).collect::<Vec<_>>())
                .into_iter().map(ArticleIdx).collect();
            let n = sample_negatives(&s, &pool, &buffer, count, ANY, &mut from_seed(seed));
            let got = ids(&n.articles);
            prop_assert_eq!(got.len(), n.articles.len());
            prop_assert!(got.iter().all(|a| !own.contains(a)));
            prop_assert!(n.articles.len() <= count);
            prop_assert_eq!(n.shortfall, n.articles.len() < count);
        }
    }
}
