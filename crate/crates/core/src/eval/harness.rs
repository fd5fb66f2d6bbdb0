use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{hr_at_k, mrr_at_k, rank_of_positive, ranking, DEFAULT_K};
use crate::baselines::{
    content_based_score, cooccurrence_score, itemknn_score, recently_popular_score, sr_score, vsknn_score,
    BaselineIndices, ContentQuery, DEFAULT_NEIGHBOURS,
};
use crate::corpus::{ArticleIdx, Catalog, Session};
use crate::error::{Error, Result};
use crate::nar::{prepare_hour, ClickBuffer, ContentTable, HourReport, NarConfig, NarModel, NarTrainer, Phase, PreparedHour, PreparedSession};

const HOUR: i64 = 3600;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Nar,
    Cooccurrence,
    Sr,
    ItemKnn,
    VsKnn,
    RecPop,
    Content,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Nar,
        Method::Cooccurrence,
        Method::Sr,
        Method::ItemKnn,
        Method::VsKnn,
        Method::RecPop,
        Method::Content,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nar => "nar",
            Method::Cooccurrence => "cooccurrence",
            Method::Sr => "sr",
            Method::ItemKnn => "itemknn",
            Method::VsKnn => "vsknn",
            Method::RecPop => "recpop",
            Method::Content => "content",
        }
    }

    /// `all`, or a comma-separated list of method names, returned in
    /// canonical order without duplicates.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        if s.trim() == "all" {
            return Ok(Method::ALL.to_vec());
        }
        let mut out: Vec<Method> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(Method::from_str)
            .collect::<Result<_>>()?;
        if out.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Whether the method needs content embeddings.
    pub fn uses_content(self) -> bool {
        matches!(self, Method::Nar | Method::Content)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::config("methods", format!("unknown method `{s}`; valid: {}, all", valid.join(", ")))
        })
    }
}

/// Scores every prediction step of a session. `candidates[t]` holds the
/// next click of step `t` followed by the logged negatives. `None` marks a
/// step the scorer cannot handle.
pub trait Scorer: Sync {
    fn name(&self) -> String;
    fn score_session(
        &self,
        session: &Session,
        prepared: &PreparedSession,
        candidates: &[Vec<ArticleIdx>],
    ) -> Result<Vec<Option<Vec<f64>>>>;
}

/// Read-only state shared by the built-in methods during an evaluation hour.
pub struct Snapshot<'a> {
    pub nar: Option<&'a NarModel>,
    pub indices: &'a BaselineIndices,
    pub buffer: &'a ClickBuffer,
    pub content: Option<&'a ContentTable>,
    pub neighbours: usize,
    pub content_query: ContentQuery,
}

pub struct BuiltinScorer<'a> {
    pub method: Method,
    pub state: &'a Snapshot<'a>,
}

impl Scorer for BuiltinScorer<'_> {
    fn name(&self) -> String {
        self.method.name().to_string()
    }

    fn score_session(
        &self,
        session: &Session,
        prepared: &PreparedSession,
        candidates: &[Vec<ArticleIdx>],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let s = self.state;
        let articles: Vec<ArticleIdx> = session.articles().collect();
        if self.method == Method::Nar {
            return match (s.nar, prepared.inputs.as_ref()) {
                (Some(model), Some(inputs)) => Ok(model.score(inputs)?.into_iter().map(Some).collect()),
                _ => Ok(vec![None; candidates.len()]),
            };
        }
        Ok(candidates
            .iter()
            .enumerate()
            .map(|(t, cands)| {
                let active = &articles[..=t];
                let last = articles[t];
                Some(match self.method {
                    Method::Cooccurrence => cooccurrence_score(last, cands, &s.indices.cooccurrence),
                    Method::Sr => sr_score(last, cands, &s.indices.rules),
                    Method::ItemKnn => itemknn_score(last, cands, &s.indices.cooccurrence),
                    Method::VsKnn => vsknn_score(active, cands, &s.indices.sessions, s.neighbours),
                    Method::RecPop => recently_popular_score(cands, s.buffer),
                    Method::Content => {
                        let content = s.content?;
                        prepared.inputs.as_ref()?;
                        content_based_score(active, cands, content, s.content_query).0
                    }
                    Method::Nar => unreachable!(),
                })
            })
            .collect())
    }
}

/// One scored prediction step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationRecord {
    pub hour: i64,
    pub session_id: u64,
    pub session_start: i64,
    pub step: usize,
    pub positive: String,
    pub negatives: Vec<String>,
    pub shortfall: bool,
    /// Rank of the positive per method that scored the step.
    pub ranks: BTreeMap<String, usize>,
    pub top: BTreeMap<String, Vec<String>>,
    /// FNV-1a of the candidate list each method ranked.
    pub candidate_hash: BTreeMap<String, String>,
    /// Newest click timestamp reflected in trained state and buffer.
    pub state_latest_ts: Option<i64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HourlyMetrics {
    pub hour: i64,
    pub method: String,
    pub hr: f64,
    pub mrr: f64,
    pub steps: usize,
    pub flags: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Audit {
    pub records: usize,
    /// Records whose scoring state contains a click at or after the start
    /// of the evaluated hour.
    pub temporal_violations: usize,
    /// Records whose methods ranked different candidate lists.
    pub hash_mismatches: usize,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.temporal_violations == 0 && self.hash_mismatches == 0
    }

    fn merge(&mut self, other: Audit) {
        self.records += other.records;
        self.temporal_violations += other.temporal_violations;
        self.hash_mismatches += other.hash_mismatches;
    }
}

#[derive(Clone, Debug, Default)]
pub struct HourEvaluation {
    pub records: Vec<EvaluationRecord>,
    pub metrics: Vec<HourlyMetrics>,
    pub audit: Audit,
}

pub fn candidate_hash(ids: &[&str]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for id in ids {
        for b in id.bytes().chain([0u8]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Ranks the logged candidates of every step with every scorer and
/// averages HR@k and MRR@k per scorer.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_hour(
    scorers: &[&dyn Scorer],
    sessions: &[Session],
    prepared: &PreparedHour,
    catalog: &Catalog,
    k: usize,
    state_latest_ts: Option<i64>,
    pool: Option<&rayon::ThreadPool>,
) -> Result<HourEvaluation> {
    let hour = prepared.hour;
    let work: Vec<&PreparedSession> = prepared.sessions().collect();
    let run = |p: &&PreparedSession| -> Result<Vec<EvaluationRecord>> {
        let session = &sessions[p.index];
        let articles: Vec<ArticleIdx> = session.articles().collect();
        let candidates: Vec<Vec<ArticleIdx>> = (0..articles.len().saturating_sub(1))
            .map(|t| {
                let mut c = Vec::with_capacity(1 + p.negatives.articles.len());
                c.push(articles[t + 1]);
                c.extend_from_slice(&p.negatives.articles);
                c
            })
            .collect();
        let mut per_scorer = Vec::with_capacity(scorers.len());
        for s in scorers {
            let scores = s.score_session(session, p, &candidates)?;
            let hash: Vec<String> = candidates
                .iter()
                .map(|c| {
                    let ids: Vec<&str> = c.iter().map(|&a| catalog.id_of(a)).collect();
                    candidate_hash(&ids)
                })
                .collect();
            per_scorer.push((s.name(), scores, hash));
        }
        let mut out = Vec::with_capacity(candidates.len());
        for (t, cands) in candidates.iter().enumerate() {
            let ids: Vec<&str> = cands.iter().map(|&a| catalog.id_of(a)).collect();
            let mut rec = EvaluationRecord {
                hour,
                session_id: session.id,
                session_start: session.start(),
                step: t,
                positive: ids[0].to_string(),
                negatives: ids[1..].iter().map(|s| s.to_string()).collect(),
                shortfall: p.negatives.shortfall,
                ranks: BTreeMap::new(),
                top: BTreeMap::new(),
                candidate_hash: BTreeMap::new(),
                state_latest_ts,
            };
            for (name, scores, hash) in &per_scorer {
                let Some(Some(sc)) = scores.get(t) else { continue };
                if sc.len() != cands.len() {
                    return Err(Error::Invariant(format!("{name} returned {} scores for {} candidates", sc.len(), cands.len())));
                }
                rec.ranks.insert(name.clone(), rank_of_positive(sc, &ids));
                rec.top.insert(
                    name.clone(),
                    ranking(sc, &ids).into_iter().take(k).map(|i| ids[i].to_string()).collect(),
                );
                rec.candidate_hash.insert(name.clone(), hash[t].clone());
            }
            out.push(rec);
        }
        Ok(out)
    };
    let nested: Vec<Vec<EvaluationRecord>> = match pool {
        Some(pool) => pool.install(|| work.par_iter().map(run).collect::<Result<_>>())?,
        None => work.iter().map(run).collect::<Result<_>>()?,
    };
    let records: Vec<EvaluationRecord> = nested.into_iter().flatten().collect();

    let mut audit = Audit {
        records: records.len(),
        ..Default::default()
    };
    let hour_start = hour * HOUR;
    for r in &records {
        if r.state_latest_ts.is_some_and(|ts| ts >= hour_start) {
            audit.temporal_violations += 1;
        }
        let mut hashes = r.candidate_hash.values();
        if let Some(first) = hashes.next() {
            if hashes.any(|h| h != first) {
                audit.hash_mismatches += 1;
            }
        }
    }

    let shortfall_steps = records.iter().filter(|r| r.shortfall).count();
    let metrics = scorers
        .iter()
        .map(|s| {
            let name = s.name();
            let (mut hr, mut mrr, mut steps) = (0.0, 0.0, 0usize);
            for r in &records {
                if let Some(&rank) = r.ranks.get(&name) {
                    hr += hr_at_k(Some(rank), k);
                    mrr += mrr_at_k(Some(rank), k);
                    steps += 1;
                }
            }
            let mut flags = Vec::new();
            if shortfall_steps > 0 {
                flags.push(format!("shortfall={shortfall_steps}"));
            }
            if steps < records.len() {
                flags.push(format!("skipped={}", records.len() - steps));
            }
            HourlyMetrics {
                hour,
                method: name,
                hr: if steps > 0 { hr / steps as f64 } else { 0.0 },
                mrr: if steps > 0 { mrr / steps as f64 } else { 0.0 },
                steps,
                flags: if flags.is_empty() { "-".into() } else { flags.join(",") },
            }
        })
        .collect();
    Ok(HourEvaluation { records, metrics, audit })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Hours trained before the first evaluation.
    pub train_span_hours: usize,
    /// Evaluate every this many hours after the first evaluation.
    pub eval_every: usize,
    pub start_hour: Option<i64>,
    pub end_hour: Option<i64>,
    /// Train on every hour; otherwise only on the `train_span_hours` hours
    /// preceding each evaluated hour.
    pub train_all_hours: bool,
    pub k: usize,
    pub neighbours: usize,
    pub content_query: ContentQuery,
    pub threads: usize,
    pub keep_records: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_span_hours: 1,
            eval_every: 1,
            start_hour: None,
            end_hour: None,
            train_all_hours: true,
            k: DEFAULT_K,
            neighbours: DEFAULT_NEIGHBOURS,
            content_query: ContentQuery::Last,
            threads: 1,
            keep_records: false,
            seed: 1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("eval_every", self.eval_every),
            ("k", self.k),
            ("vsknn_k", self.neighbours),
            ("threads", self.threads),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if let (Some(s), Some(e)) = (self.start_hour, self.end_hour) {
            if e < s {
                return Err(Error::config("end_hour", "precedes start_hour"));
            }
        }
        Ok(())
    }

    fn is_eval_hour(&self, rel: i64) -> bool {
        let span = self.train_span_hours as i64;
        rel >= span && (rel - span) % self.eval_every as i64 == 0
    }

    fn is_train_hour(&self, rel: i64) -> bool {
        self.train_all_hours || (rel % self.eval_every as i64) < self.train_span_hours as i64
    }
}

/// Everything a temporal run produced.
#[derive(Debug)]
pub struct EvalRun {
    pub metrics: Vec<HourlyMetrics>,
    pub records: Vec<EvaluationRecord>,
    pub train_reports: Vec<HourReport>,
    pub audit: Audit,
    pub notes: Vec<String>,
    pub evaluated_hours: Vec<i64>,
    pub trainer: Option<NarTrainer>,
    pub indices: BaselineIndices,
}

fn hour_of(ts: i64) -> i64 {
    ts.div_euclid(HOUR)
}

/// Hour-by-hour protocol: for every hour, first evaluate the sessions that
/// start in it (when it is an evaluation hour) against state frozen at the
/// hour boundary, then train on the sessions whose last click falls in it.
/// A session is therefore evaluated once and trained once, and no click at
/// or after an hour's start ever reaches the state that scores that hour.
pub fn run_temporal_evaluation(
    catalog: &Catalog,
    sessions: &[Session],
    content: Option<&ContentTable>,
    methods: &[Method],
    trainer: Option<NarTrainer>,
    nar_config: &NarConfig,
    config: &EvalConfig,
) -> Result<EvalRun> {
    config.validate()?;
    nar_config.validate()?;
    if methods.is_empty() {
        return Err(Error::config("methods", "at least one method is required"));
    }
    if methods.iter().any(|m| m.uses_content()) && content.is_none() {
        return Err(Error::config("repository", "nar and content need an embedding repository"));
    }
    let mut trainer = if methods.contains(&Method::Nar) {
        Some(match trainer {
            Some(t) => t,
            None => NarTrainer::new(NarModel::new(nar_config.clone())?),
        })
    } else {
        None
    };

    let mut starts: BTreeMap<i64, Vec<Session>> = BTreeMap::new();
    let mut ends: HashMap<i64, Vec<Session>> = HashMap::new();
    for s in sessions.iter().filter(|s| !s.is_empty()) {
        starts.entry(hour_of(s.start())).or_default().push(s.clone());
        let last = s.clicks.last().expect("non-empty").ts;
        ends.entry(hour_of(last)).or_default().push(s.clone());
    }
    for v in starts.values_mut().chain(ends.values_mut()) {
        v.sort_by_key(|s| (s.start(), s.id));
    }
    let (Some(&first), Some(&last)) = (starts.keys().next(), starts.keys().next_back()) else {
        return Ok(EvalRun {
            metrics: Vec::new(),
            records: Vec::new(),
            train_reports: Vec::new(),
            audit: Audit::default(),
            notes: vec!["no sessions".into()],
            evaluated_hours: Vec::new(),
            trainer,
            indices: BaselineIndices::new(),
        });
    };
    let start = config.start_hour.unwrap_or(first);
    let end = config.end_hour.unwrap_or(last);

    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut buffer = ClickBuffer::new(nar_config.buffer_size);
    let mut indices = BaselineIndices::new();
    let mut state_latest_ts: Option<i64> = None;
    let mut run = EvalRun {
        metrics: Vec::new(),
        records: Vec::new(),
        train_reports: Vec::new(),
        audit: Audit::default(),
        notes: Vec::new(),
        evaluated_hours: Vec::new(),
        trainer: None,
        indices: BaselineIndices::new(),
    };
    let empty = Vec::new();

    for h in start..=end {
        let rel = h - start;
        if config.is_eval_hour(rel) {
            let evaluated = starts.get(&h).unwrap_or(&empty);
            if evaluated.is_empty() {
                run.notes.push(format!("hour {h}: no sessions to evaluate, skipped"));
            } else {
                let mut frozen = buffer.clone();
                let prepared = prepare_hour(
                    evaluated,
                    h,
                    Phase::Eval,
                    &mut frozen,
                    catalog,
                    content,
                    nar_config.batch_size,
                    nar_config.eval_negatives,
                    config.seed,
                )?;
                let snapshot = Snapshot {
                    nar: trainer.as_ref().map(|t| &t.model),
                    indices: &indices,
                    buffer: &buffer,
                    content,
                    neighbours: config.neighbours,
                    content_query: config.content_query,
                };
                let builtins: Vec<BuiltinScorer<'_>> = methods
                    .iter()
                    .map(|&method| BuiltinScorer {
                        method,
                        state: &snapshot,
                    })
                    .collect();
                let scorers: Vec<&dyn Scorer> = builtins.iter().map(|b| b as &dyn Scorer).collect();
                let ev = evaluate_hour(&scorers, evaluated, &prepared, catalog, config.k, state_latest_ts, pool.as_ref())?;
                if prepared.shortfall > 0 {
                    run.notes.push(format!("hour {h}: {} sessions with fewer negatives than requested", prepared.shortfall));
                }
                run.audit.merge(ev.audit);
                run.metrics.extend(ev.metrics);
                if config.keep_records {
                    run.records.extend(ev.records);
                }
                run.evaluated_hours.push(h);
            }
        }

        let finished = ends.get(&h).unwrap_or(&empty);
        if finished.is_empty() || !config.is_train_hour(rel) {
            continue;
        }
        match trainer.as_mut() {
            Some(t) => {
                let report = t.train_on_hour(finished, h, &mut buffer, catalog, content.expect("checked above"))?;
                run.train_reports.push(report);
            }
            None => {
                let mut clicks: Vec<(i64, ArticleIdx)> = finished
                    .iter()
                    .flat_map(|s| s.clicks.iter().map(|c| (c.ts, c.article)))
                    .collect();
                clicks.sort();
                for (ts, a) in clicks {
                    buffer.push(a, ts);
                }
            }
        }
        for s in finished {
            let articles: Vec<ArticleIdx> = s.articles().collect();
            indices.update(&articles, s.start());
            let last = s.clicks.last().expect("non-empty").ts;
            state_latest_ts = Some(state_latest_ts.map_or(last, |v| v.max(last)));
        }
    }
    run.trainer = trainer;
    run.indices = indices;
    Ok(run)
}
