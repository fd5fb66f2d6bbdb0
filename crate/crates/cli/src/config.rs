//! Flat `key = value` run configuration.
//!
//! Layers, lowest precedence first: built-in defaults, a config file,
//! `NEWSREC_<KEY>` environment variables, command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use newsrec::acr::{AcrConfig, RepositoryFormat};
use newsrec::baselines::ContentQuery;
use newsrec::corpus::{FilterOptions, SynthConfig};
use newsrec::eval::{EvalConfig, Method};
use newsrec::nar::NarConfig;
use newsrec::{Error, Result};

pub const ENV_PREFIX: &str = "NEWSREC_";

trait Value: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(u64, usize, i64, f64, bool, String);

impl<T: Value> Value for Option<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            T::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map(Value::render).unwrap_or_default()
    }
}

/// Comma-separated list of sizes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sizes(pub Vec<usize>);

impl Value for Sizes {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<_, _>>()
            .map(Sizes)
    }
    fn render(&self) -> String {
        self.0.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

macro_rules! run_config {
    ($($(#[doc = $doc:literal])* $key:ident: $t:ty = $default:expr;)*) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $($(#[doc = $doc])* pub $key: $t,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($key: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $(stringify!($key) => {
                        self.$key = <$t as Value>::parse_value(value)
                            .map_err(|e| Error::config(key, format!("invalid value `{value}`: {e}")))?;
                    })*
                    _ => return Err(Error::config(key, "unknown configuration key")),
                }
                Ok(())
            }

            /// Effective configuration in file syntax, one key per line.
            pub fn echo(&self) -> String {
                let mut out = String::new();
                $(writeln!(out, "{} = {}", stringify!($key), self.$key.render()).unwrap();)*
                out
            }
        }
    };
}

run_config! {
    seed: u64 = 1;
    /// Worker threads; 1 is the reference path.
    threads: usize = 1;
    out_dir: String = ".".into();
    articles: Option<String> = None;
    clicks: Option<String> = None;
    categories: Option<String> = None;
    word_vectors: Option<String> = None;
    repository: Option<String> = None;
    repository_format: String = "text".into();
    run_id: String = String::new();
    metrics: Option<String> = None;
    records: bool = false;
    nar_init: Option<String> = None;

    n_articles: usize = 2000;
    n_categories: usize = 20;
    n_publishers: usize = 8;
    n_users: usize = 20_000;
    n_sessions: usize = 20_000;
    hours: usize = 48;
    markov_skew: f64 = 0.9;
    start_ts: i64 = newsrec::corpus::DEFAULT_START_TS;

    max_tokens: Option<usize> = None;
    word_dim: usize = 300;
    conv_windows: Sizes = Sizes(vec![3, 4, 5]);
    conv_filters: usize = 128;
    content_dim: usize = 250;
    acr_epochs: usize = 10;
    acr_lr: f64 = 1e-3;
    acr_lambda: f64 = 1e-4;
    acr_batch_size: usize = 64;

    item_dim: usize = 1024;
    lstm_units: usize = 255;
    gamma: f64 = 10.0;
    nar_lr: f64 = 1e-3;
    nar_lambda: f64 = 1e-4;
    nar_batch_size: usize = 256;
    buffer_size: usize = 5000;
    train_negatives: usize = 7;
    eval_negatives: usize = 50;

    methods: String = "all".into();
    train_span_hours: usize = 1;
    eval_every: usize = 1;
    train_all_hours: bool = true;
    start_hour: Option<i64> = None;
    end_hour: Option<i64> = None;
    vsknn_k: usize = 100;
    content_query: String = "last".into();
    collapse_repeats: bool = false;
    /// Method the summary's relative improvements are measured against.
    reference_method: String = "recpop".into();
}

impl RunConfig {
    /// Applies a `key = value` file. Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), "expected `key = value`"))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in vars {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                if Self::KEYS.contains(&key.as_str()) {
                    self.set(&key, &value)?;
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` override strings.
    pub fn apply_overrides<'a>(&mut self, items: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item, "override must look like key=value"))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        Path::new(&self.out_dir).join(name)
    }

    pub fn require<'a>(&self, key: &str, value: &'a Option<String>) -> Result<&'a Path> {
        value
            .as_deref()
            .map(Path::new)
            .ok_or_else(|| Error::config(key, "required for this command"))
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            n_articles: self.n_articles,
            n_categories: self.n_categories,
            n_users: self.n_users,
            n_sessions: self.n_sessions,
            hours: self.hours,
            markov_skew: self.markov_skew,
            seed: self.seed,
            n_publishers: self.n_publishers,
            start_ts: self.start_ts,
            ..SynthConfig::default()
        }
    }

    pub fn acr(&self) -> AcrConfig {
        AcrConfig {
            word_dim: self.word_dim,
            windows: self.conv_windows.0.clone(),
            filters: self.conv_filters,
            content_dim: self.content_dim,
            epochs: self.acr_epochs,
            lr: self.acr_lr,
            lambda: self.acr_lambda,
            batch_size: self.acr_batch_size,
            seed: self.seed,
        }
    }

    pub fn nar(&self, content_dim: usize) -> NarConfig {
        NarConfig {
            content_dim,
            item_dim: self.item_dim,
            lstm_units: self.lstm_units,
            gamma: self.gamma,
            lambda: self.nar_lambda,
            lr: self.nar_lr,
            batch_size: self.nar_batch_size,
            buffer_size: self.buffer_size,
            train_negatives: self.train_negatives,
            eval_negatives: self.eval_negatives,
            seed: self.seed,
        }
    }

    pub fn eval(&self) -> Result<EvalConfig> {
        let content_query: ContentQuery = self.content_query.parse()?;
        Ok(EvalConfig {
            train_span_hours: self.train_span_hours,
            eval_every: self.eval_every,
            start_hour: self.start_hour,
            end_hour: self.end_hour,
            train_all_hours: self.train_all_hours,
            neighbours: self.vsknn_k,
            content_query,
            threads: self.threads,
            keep_records: self.records,
            seed: self.seed,
            ..EvalConfig::default()
        })
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        Method::parse_list(&self.methods)
    }

    pub fn repository_format(&self) -> Result<RepositoryFormat> {
        self.repository_format.parse()
    }

    pub fn filter(&self) -> FilterOptions {
        FilterOptions {
            collapse_repeats: self.collapse_repeats,
            ..FilterOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::config("threads", "must be positive"));
        }
        Ok(())
    }
}
