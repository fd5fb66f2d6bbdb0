//! Click-log data model: articles, clicks, sessions, batching and a seeded
//! synthetic corpus generator.

mod article;
mod click;
mod session;
mod synth;
mod text;

pub use article::{parse_articles, write_articles, Article, ArticleIdx, ArticleRecord, Catalog, ParseOptions, ParseReport};
pub use click::{parse_clicks, sort_by_user_time, write_clicks, ClickEvent, ClickRecord, Device, Platform};
pub use session::{
    batch_sessions, filter_sessions, sessionize, FilterOptions, FilterReport, Session, SessionBatch,
    DEFAULT_BATCH_SIZE, MAX_SESSION_LEN, MIN_SESSION_LEN, SESSION_GAP_SECS,
};
pub use synth::{generate_marker_articles, generate_synthetic, SynthConfig, SynthCorpus, SynthPaths, DEFAULT_START_TS};
pub use text::{tokenize, Vocabulary, WordVectors, MAX_TOKENS};

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};

pub fn read_articles_file(path: &Path, options: ParseOptions) -> Result<(Catalog, ParseReport)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_articles(BufReader::new(f), options)
}

pub fn read_clicks_file(path: &Path, catalog: &Catalog) -> Result<Vec<ClickEvent>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_clicks(BufReader::new(f), catalog)
}

/// One label per non-empty line.
pub fn read_categories_file(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn read_word_vectors(path: &Path) -> Result<WordVectors> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    WordVectors::read(BufReader::new(f))
}
