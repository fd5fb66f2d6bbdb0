//! Article content embeddings keyed by article id, with a text and a
//! binary file format.
//!
//! Text: a header line `ACR-EMB v1 <count> <dim> [run-id]`, then one line
//! per article, `article_id v1 … vdim`, with values in shortest
//! round-trip decimal form. Binary: the checkpoint container with an
//! `embeddings` tensor `[count × dim]` and newline-joined `ids`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::model::AcrModel;
use crate::corpus::{Article, Catalog};
use crate::error::{Error, Result};
use crate::kernel::{Checkpoint, Tensor};

const TEXT_MAGIC: &str = "ACR-EMB";
const TEXT_VERSION: &str = "v1";
const EXPORT_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RepositoryFormat {
    #[default]
    Text,
    Binary,
}

impl FromStr for RepositoryFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(RepositoryFormat::Text),
            "binary" => Ok(RepositoryFormat::Binary),
            _ => Err(Error::config("repository_format", format!("`{s}` is not one of text, binary"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRepository {
    dim: usize,
    run_id: String,
    ids: Vec<String>,
    vectors: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingRepository {
    pub fn new(dim: usize, run_id: impl Into<String>) -> Self {
        EmbeddingRepository {
            dim,
            run_id: run_id.into(),
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds one vector; ids must be unique and vectors finite and of the
    /// repository dimension.
    pub fn insert(&mut self, article_id: impl Into<String>, vector: &[f64]) -> Result<()> {
        let id = article_id.into();
        if vector.len() != self.dim {
            return Err(Error::shape("repository insert", &[vector.len()], &[self.dim]));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite embedding for `{id}`")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Invariant(format!("duplicate embedding for `{id}`")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, article_id: &str) -> Option<&[f64]> {
        self.index
            .get(article_id)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(self.vectors.chunks(self.dim.max(1)))
            .map(|(id, v)| (id.as_str(), v))
    }

    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "{TEXT_MAGIC} {TEXT_VERSION} {} {}", self.len(), self.dim)?;
        if !self.run_id.is_empty() {
            write!(w, " {}", self.run_id)?;
        }
        writeln!(w)?;
        for (id, v) in self.iter() {
            write!(w, "{id}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::parse(1, e.to_string()))?,
            None => return Err(Error::parse(1, "empty repository file")),
        };
        let h: Vec<&str> = header.split_whitespace().collect();
        if !(4..=5).contains(&h.len()) || h[0] != TEXT_MAGIC || h[1] != TEXT_VERSION {
            return Err(Error::parse(1, format!("expected `{TEXT_MAGIC} {TEXT_VERSION} <count> <dim>`")));
        }
        let count: usize = h[2].parse().map_err(|_| Error::parse(1, "bad count"))?;
        let dim: usize = h[3].parse().map_err(|_| Error::parse(1, "bad dim"))?;
        let mut repo = EmbeddingRepository::new(dim, h.get(4).copied().unwrap_or(""));
        let mut vector = Vec::with_capacity(dim);
        for (k, line) in lines.enumerate() {
            let n = k + 2;
            let line = line.map_err(|e| Error::parse(n, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let id = parts.next().expect("non-empty line");
            vector.clear();
            for p in parts {
                vector.push(p.parse::<f64>().map_err(|_| Error::parse(n, format!("bad value `{p}`")))?);
            }
            if vector.len() != dim {
                return Err(Error::parse(n, format!("expected {dim} values, found {}", vector.len())));
            }
            repo.insert(id, &vector).map_err(|e| Error::parse(n, e.to_string()))?;
        }
        if repo.len() != count {
            return Err(Error::parse(1, format!("header promises {count} vectors, file has {}", repo.len())));
        }
        Ok(repo)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(0, 0);
        ck.push_text("run_id", self.run_id.clone());
        ck.push_text("dim", self.dim.to_string());
        ck.push_text("ids", self.ids.join("\n"));
        if !self.is_empty() {
            ck.push_tensor("embeddings", Tensor::matrix(self.len(), self.dim, self.vectors.clone())?);
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let missing = |what: &str| Error::Checkpoint(format!("repository entry `{what}` missing"));
        let dim: usize = ck
            .text("dim")
            .ok_or_else(|| missing("dim"))?
            .parse()
            .map_err(|_| Error::Checkpoint("bad repository dim".into()))?;
        let ids = ck.text("ids").ok_or_else(|| missing("ids"))?;
        let mut repo = EmbeddingRepository::new(dim, ck.text("run_id").unwrap_or(""));
        if ids.is_empty() {
            return Ok(repo);
        }
        let t = ck.tensor("embeddings").ok_or_else(|| missing("embeddings"))?;
        let ids: Vec<&str> = ids.split('\n').collect();
        if t.shape() != [ids.len(), dim] {
            return Err(Error::shape("repository", t.shape(), &[ids.len(), dim]));
        }
        for (r, id) in ids.into_iter().enumerate() {
            repo.insert(id, &t.data()[r * dim..(r + 1) * dim])?;
        }
        Ok(repo)
    }

    pub fn save(&self, path: &Path, format: RepositoryFormat) -> Result<()> {
        match format {
            RepositoryFormat::Text => {
                let f = File::create(path).map_err(|e| Error::io(path, e))?;
                let mut w = BufWriter::new(f);
                self.write_text(&mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io(path, e))
            }
            RepositoryFormat::Binary => self.to_checkpoint()?.save(path),
        }
    }

    /// Reads either format, detected from the leading bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut magic = [0u8; 7];
        let is_text = r
            .read_exact(&mut magic)
            .map(|_| magic == TEXT_MAGIC.as_bytes())
            .unwrap_or(false);
        if is_text {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            Self::read_text(BufReader::new(f))
        } else {
            Self::from_checkpoint(&Checkpoint::load(path)?)
        }
    }
}

/// Embeds every catalog article with a frozen model snapshot.
pub fn export_embeddings(model: &AcrModel, catalog: &Catalog, run_id: &str) -> Result<EmbeddingRepository> {
    let articles: Vec<&Article> = catalog.articles().iter().collect();
    let chunks: Vec<Vec<Vec<f64>>> = articles
        .par_chunks(EXPORT_CHUNK)
        .map(|chunk| model.embed(chunk))
        .collect::<Result<_>>()?;
    let mut repo = EmbeddingRepository::new(model.config.content_dim, run_id);
    for (a, v) in articles.iter().zip(chunks.iter().flatten()) {
        repo.insert(a.article_id.clone(), v)?;
    }
    Ok(repo)
}
