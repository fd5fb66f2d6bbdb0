use std::cmp::Ordering;

/// Cutoff used for reported metrics.
pub const DEFAULT_K: usize = 5;

/// 1 when the positive is within the top `k`, else 0. `None` is a miss.
pub fn hr_at_k(rank: Option<usize>, k: usize) -> f64 {
    match rank {
        Some(r) if r >= 1 && r <= k => 1.0,
        _ => 0.0,
    }
}

/// `1/rank` when the positive is within the top `k`, else 0.
pub fn mrr_at_k(rank: Option<usize>, k: usize) -> f64 {
    match rank {
        Some(r) if r >= 1 && r <= k => 1.0 / r as f64,
        _ => 0.0,
    }
}

/// Descending score, then ascending id. NaN sorts last.
fn precedes(sa: f64, ia: &str, sb: f64, ib: &str) -> Ordering {
    let key = |s: f64| if s.is_nan() { f64::NEG_INFINITY } else { s };
    key(sb).total_cmp(&key(sa)).then_with(|| ia.cmp(ib))
}

/// Rank (1-based) of candidate 0 among all candidates.
pub fn rank_of_positive(scores: &[f64], ids: &[&str]) -> usize {
    1 + (1..scores.len())
        .filter(|&j| precedes(scores[j], ids[j], scores[0], ids[0]) == Ordering::Less)
        .count()
}

/// Candidate positions in ranked order.
pub fn ranking(scores: &[f64], ids: &[&str]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| precedes(scores[a], ids[a], scores[b], ids[b]));
    order
}
