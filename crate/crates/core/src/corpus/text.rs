//! Tokenization, vocabulary and pre-trained word vectors.

use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::kernel::Tensor;

/// Default cap on the number of tokens kept per article.
pub const MAX_TOKENS: usize = 300;

/// Lowercases, splits on whitespace and strips non-alphanumeric characters.
pub fn tokenize(text: &str, max_tokens: usize) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .take(max_tokens)
        .collect()
}

/// Token ↔ id mapping. Id 0 is padding, id 1 the unknown token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;

    pub fn new() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.insert("<pad>");
        v.insert("<unk>");
        v
    }

    /// Returns the id of `token`, adding it if absent.
    pub fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unknown id.
    pub fn lookup(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// Pre-trained word vectors with their vocabulary; row `i` belongs to token id `i`.
#[derive(Clone, Debug)]
pub struct WordVectors {
    pub vocab: Vocabulary,
    pub vectors: Tensor,
}

impl WordVectors {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// Reads the word2vec text format: a `count dim` header, then one
    /// `token v1 … vdim` line per word. Padding and unknown rows are zero.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (count, dim) = match lines.next() {
            Some((_, line)) => {
                let line = line.map_err(|e| Error::parse(1, e.to_string()))?;
                let mut it = line.split_whitespace().map(str::parse::<usize>);
                match (it.next(), it.next(), it.next()) {
                    (Some(Ok(c)), Some(Ok(d)), None) if d > 0 => (c, d),
                    _ => return Err(Error::parse(1, "expected header `count dim`")),
                }
            }
            None => return Err(Error::parse(1, "empty embedding file")),
        };
        let mut vocab = Vocabulary::new();
        let mut data = vec![0.0; 2 * dim];
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap_or_default();
            let values = parts
                .map(|v| v.parse::<f64>().map_err(|_| Error::parse(lineno, format!("bad number `{v}`"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != dim {
                return Err(Error::parse(lineno, format!("expected {dim} values, found {}", values.len())));
            }
            if vocab.get(token).is_some() {
                return Err(Error::parse(lineno, format!("duplicate token `{token}`")));
            }
            vocab.insert(token);
            data.extend(values);
        }
        if vocab.len() - 2 != count {
            return Err(Error::parse(1, format!("header announces {count} vectors, file has {}", vocab.len() - 2)));
        }
        let vectors = Tensor::matrix(vocab.len(), dim, data)?;
        Ok(WordVectors { vocab, vectors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_normalizes() {
        assert_eq!(tokenize("  Hello, World!  it's 2017 ", 300), ["hello", "world", "its", "2017"]);
        assert_eq!(tokenize("a b c d", 2), ["a", "b"]);
        assert!(tokenize("... --- !!!", 300).is_empty());
    }

    #[test]
    fn word2vec_text_format() {
        let src = "2 3\nfoo 1 2 3\nbar 0.5 -1 0\n";
        let wv = WordVectors::read(src.as_bytes()).unwrap();
        assert_eq!(wv.dim(), 3);
        assert_eq!(wv.vocab.lookup("bar"), 3);
        assert_eq!(wv.vocab.lookup("nope"), Vocabulary::UNK);
        assert_eq!(wv.vectors.row(3), &[0.5, -1.0, 0.0]);
        assert_eq!(wv.vectors.row(Vocabulary::UNK as usize), &[0.0; 3]);

        let err = WordVectors::read("2 3\nfoo 1 2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
