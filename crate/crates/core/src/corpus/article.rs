use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::Serialize;
use serde_json::{Map, Value};

use super::text::{tokenize, Vocabulary, MAX_TOKENS};
use crate::error::{Error, Result};

/// Position of an article in its [`Catalog`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArticleIdx(pub u32);

impl ArticleIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Article {
    pub article_id: String,
    /// Word ids; never empty.
    pub tokens: Vec<u32>,
    pub publisher_id: u32,
    pub category_id: u32,
    /// Epoch seconds.
    pub published_at: i64,
}

/// One line of the articles file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ArticleRecord {
    pub article_id: String,
    pub text: String,
    pub publisher: String,
    pub category: String,
    pub published_at: i64,
}

#[derive(Clone, Debug, Default)]
pub struct ParseOptions {
    /// Closed category label set; unknown labels are rejected when present.
    pub categories: Option<Vec<String>>,
    /// Fixed vocabulary (e.g. from pre-trained vectors); unknown words map
    /// to the unknown id. When absent the vocabulary is built from the text.
    pub vocabulary: Option<Vocabulary>,
    pub max_tokens: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseReport {
    /// Records dropped because no token survived tokenization.
    pub skipped_empty: usize,
}

/// Articles keyed by id, with the label sets used to encode them.
#[derive(Clone, Debug)]
pub struct Catalog {
    articles: Vec<Article>,
    by_id: HashMap<String, ArticleIdx>,
    pub vocab: Vocabulary,
    pub categories: Vec<String>,
    pub publishers: Vec<String>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, idx: ArticleIdx) -> &Article {
        &self.articles[idx.index()]
    }

    pub fn resolve(&self, article_id: &str) -> Option<ArticleIdx> {
        self.by_id.get(article_id).copied()
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn iter(&self) -> impl Iterator<Item = (ArticleIdx, &Article)> {
        self.articles
            .iter()
            .enumerate()
            .map(|(i, a)| (ArticleIdx(i as u32), a))
    }

    pub fn id_of(&self, idx: ArticleIdx) -> &str {
        &self.articles[idx.index()].article_id
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn n_publishers(&self) -> usize {
        self.publishers.len()
    }
}

pub(crate) fn field<'a>(obj: &'a Map<String, Value>, key: &str, line: usize) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::parse(line, format!("missing field `{key}`")))
}

pub(crate) fn str_field<'a>(obj: &'a Map<String, Value>, key: &str, line: usize) -> Result<&'a str> {
    field(obj, key, line)?
        .as_str()
        .ok_or_else(|| Error::parse(line, format!("field `{key}` must be a string")))
}

/// Epoch seconds from either an integer or an ISO-8601/RFC 3339 string.
pub(crate) fn time_field(obj: &Map<String, Value>, key: &str, line: usize) -> Result<i64> {
    match field(obj, key, line)? {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64))
            .ok_or_else(|| Error::parse(line, format!("field `{key}` must be whole epoch seconds"))),
        Value::String(s) => chrono::DateTime::parse_from_rfc3339(s)
            .map(|t| t.timestamp())
            .or_else(|_| s.parse::<i64>())
            .map_err(|_| Error::parse(line, format!("field `{key}`: unparseable timestamp `{s}`"))),
        _ => Err(Error::parse(line, format!("field `{key}` must be a timestamp"))),
    }
}

pub(crate) fn json_lines(reader: impl BufRead) -> impl Iterator<Item = Result<(usize, Map<String, Value>)>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let lineno = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::parse(lineno, format!("unreadable line ({e})")))),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(obj)) => Ok((lineno, obj)),
            Ok(_) => Err(Error::parse(lineno, "expected a JSON object")),
            Err(e) => Err(Error::parse(lineno, format!("malformed JSON: {e}"))),
        })
    })
}

/// Reads the line-delimited articles file into a catalog.
pub fn parse_articles(reader: impl BufRead, options: ParseOptions) -> Result<(Catalog, ParseReport)> {
    let max_tokens = options.max_tokens.unwrap_or(MAX_TOKENS);
    let closed = options.categories.is_some();
    let mut categories = options.categories.unwrap_or_default();
    let mut category_index: HashMap<String, u32> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i as u32))
        .collect();
    let fixed_vocab = options.vocabulary.is_some();
    let mut vocab = options.vocabulary.unwrap_or_default();
    let mut publishers: Vec<String> = Vec::new();
    let mut publisher_index: HashMap<String, u32> = HashMap::new();
    let mut articles = Vec::new();
    let mut by_id = HashMap::new();
    let mut report = ParseReport::default();

    for item in json_lines(reader) {
        let (line, obj) = item?;
        let article_id = str_field(&obj, "article_id", line)?.to_string();
        let text = str_field(&obj, "text", line)?;
        let publisher = match field(&obj, "publisher", line)? {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(Error::parse(line, "field `publisher` must be a string or number")),
        };
        let category = str_field(&obj, "category", line)?;
        let published_at = time_field(&obj, "published_at", line)?;

        if by_id.contains_key(&article_id) {
            return Err(Error::parse(line, format!("duplicate article_id `{article_id}`")));
        }
        let category_id = match category_index.get(category) {
            Some(&c) => c,
            None if closed => {
                return Err(Error::UnknownCategory {
                    line,
                    category: category.to_string(),
                })
            }
            None => {
                let c = categories.len() as u32;
                categories.push(category.to_string());
                category_index.insert(category.to_string(), c);
                c
            }
        };
        let words = tokenize(text, max_tokens);
        if words.is_empty() {
            report.skipped_empty += 1;
            log::warn!("line {line}: article `{article_id}` has no tokens, skipped");
            continue;
        }
        let tokens = words
            .iter()
            .map(|w| if fixed_vocab { vocab.lookup(w) } else { vocab.insert(w) })
            .collect();
        let publisher_id = *publisher_index.entry(publisher.clone()).or_insert_with(|| {
            publishers.push(publisher);
            (publishers.len() - 1) as u32
        });
        by_id.insert(article_id.clone(), ArticleIdx(articles.len() as u32));
        articles.push(Article {
            article_id,
            tokens,
            publisher_id,
            category_id,
            published_at,
        });
    }
    Ok((
        Catalog {
            articles,
            by_id,
            vocab,
            categories,
            publishers,
        },
        report,
    ))
}

pub fn write_articles(records: &[ArticleRecord], mut w: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
