use std::path::Path;

use log::info;
use newsrec::acr::{export_embeddings, train_acr, EmbeddingRepository};
use newsrec::corpus::{
    filter_sessions, generate_synthetic, read_articles_file, read_categories_file, read_clicks_file, read_word_vectors,
    sessionize, sort_by_user_time, ParseOptions, SESSION_GAP_SECS,
};
use newsrec::eval::{aggregate_report, read_metrics, run_temporal_evaluation, write_metrics, write_records, Method};
use newsrec::kernel::Checkpoint;
use newsrec::nar::{ContentTable, NarModel, NarTrainer};
use newsrec::Error;

use crate::config::RunConfig;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config { .. } => EXIT_USAGE,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::UnknownCategory { .. }
            | Error::Ordering { .. }
            | Error::MissingEmbedding { .. }
            | Error::Checkpoint(_) => EXIT_DATA,
            _ => EXIT_INVARIANT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn write_echo(config: &RunConfig, name: &str) -> Outcome {
    let dir = Path::new(&config.out_dir);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = config.out_path(name);
    std::fs::write(&path, config.echo()).map_err(|e| Error::io(&path, e))?;
    info!("effective configuration written to {}", path.display());
    Ok(())
}

pub fn synth(config: &RunConfig) -> Outcome {
    let synth = config.synth();
    synth.validate()?;
    write_echo(config, "synth.conf")?;
    let corpus = generate_synthetic(&synth)?;
    let paths = corpus.write(Path::new(&config.out_dir))?;
    println!(
        "wrote {} articles to {}\nwrote {} clicks to {}\nwrote {} categories to {}",
        corpus.articles.len(),
        paths.articles.display(),
        corpus.clicks.len(),
        paths.clicks.display(),
        corpus.categories.len(),
        paths.categories.display()
    );
    Ok(())
}

pub fn acr_train(config: &RunConfig) -> Outcome {
    let articles = config.require("articles", &config.articles)?;
    let format = config.repository_format()?;
    let mut acr = config.acr();
    let vectors = config.word_vectors.as_deref().map(|p| read_word_vectors(Path::new(p))).transpose()?;
    if let Some(v) = &vectors {
        acr.word_dim = v.vectors.shape()[1];
    }
    acr.validate()?;
    let categories = config.categories.as_deref().map(|p| read_categories_file(Path::new(p))).transpose()?;
    let options = ParseOptions {
        categories,
        vocabulary: vectors.as_ref().map(|v| v.vocab.clone()),
        max_tokens: config.max_tokens,
    };
    let (catalog, parse) = read_articles_file(articles, options)?;
    if parse.skipped_empty > 0 {
        println!("skipped {} articles without usable text", parse.skipped_empty);
    }
    write_echo(config, "acr-train.conf")?;
    let (model, report) = train_acr(&catalog, &acr, vectors.as_ref())?;
    for e in &report.epochs {
        println!("epoch={} loss={:.6} accuracy={:.4}", e.epoch, e.loss, e.accuracy);
    }
    if report.degenerate_labels {
        println!("warning: a single category; the classifier has nothing to separate");
    }
    let ck_path = config.out_path("acr.ckpt");
    model.to_checkpoint(report.steps).save(&ck_path)?;
    let repo = export_embeddings(&model, &catalog, &config.run_id)?;
    let repo_path = config.out_path(match format {
        newsrec::acr::RepositoryFormat::Text => "embeddings.txt",
        newsrec::acr::RepositoryFormat::Binary => "embeddings.bin",
    });
    repo.save(&repo_path, format)?;
    println!(
        "wrote checkpoint {}\nwrote {} embeddings of dim {} to {}",
        ck_path.display(),
        repo.len(),
        repo.dim(),
        repo_path.display()
    );
    Ok(())
}

pub fn evaluate(config: &RunConfig) -> Outcome {
    let methods = config.methods()?;
    let eval = config.eval()?;
    eval.validate()?;
    let articles = config.require("articles", &config.articles)?;
    let clicks_path = config.require("clicks", &config.clicks)?;
    let needs_content = methods.iter().any(|m| m.uses_content());
    let repo_path = if needs_content {
        Some(config.require("repository", &config.repository)?)
    } else {
        None
    };
    let categories = config.categories.as_deref().map(|p| read_categories_file(Path::new(p))).transpose()?;
    let (catalog, _) = read_articles_file(
        articles,
        ParseOptions {
            categories,
            ..ParseOptions::default()
        },
    )?;
    let mut clicks = read_clicks_file(clicks_path, &catalog)?;
    sort_by_user_time(&mut clicks);
    let (sessions, filtered) = filter_sessions(sessionize(&clicks, SESSION_GAP_SECS)?, config.filter());
    println!(
        "sessions kept={} too_short={} too_long={}",
        filtered.kept, filtered.too_short, filtered.too_long
    );

    let repo = repo_path.map(EmbeddingRepository::load).transpose()?;
    let content = repo.as_ref().map(|r| ContentTable::new(&catalog, r));
    let nar_config = config.nar(repo.as_ref().map_or(config.content_dim, |r| r.dim()));
    nar_config.validate()?;
    let trainer = if methods.contains(&Method::Nar) {
        let mut model = NarModel::new(nar_config.clone())?;
        if let Some(p) = &config.nar_init {
            model.restore(&Checkpoint::load(Path::new(p))?)?;
            println!("initialized nar from {p}");
        }
        Some(NarTrainer::new(model))
    } else {
        None
    };
    write_echo(config, "evaluate.conf")?;

    let run = run_temporal_evaluation(&catalog, &sessions, content.as_ref(), &methods, trainer, &nar_config, &eval)?;
    for r in &run.train_reports {
        info!("{}", r.line());
    }
    for n in &run.notes {
        println!("note: {n}");
    }
    if !run.audit.passed() {
        return Err(Failure {
            code: EXIT_INVARIANT,
            message: format!("temporal audit failed: {:?}", run.audit),
        });
    }
    let metrics_path = config.out_path("metrics.tsv");
    write_metrics(&metrics_path, &run.metrics)?;
    if config.records {
        write_records(&config.out_path("records.jsonl"), &run.records)?;
    }
    if let Some(t) = &run.trainer {
        t.model.to_checkpoint(t.updates()).save(&config.out_path("nar.ckpt"))?;
    }
    println!(
        "evaluated {} hours; audit: {} records, {} temporal violations, {} candidate hash mismatches",
        run.evaluated_hours.len(),
        run.audit.records,
        run.audit.temporal_violations,
        run.audit.hash_mismatches
    );
    print_summary(&aggregate_report(&run.metrics), &config.reference_method);
    println!("wrote {}", metrics_path.display());
    Ok(())
}

fn print_summary(report: &newsrec::eval::Report, reference: &str) {
    print!("{}", report.table());
    let gains = report.improvements_over(reference);
    if !gains.is_empty() {
        println!("relative improvement of median over {reference}:");
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:+.1}%", 100.0 * v));
        for (m, hr, mrr) in gains {
            println!("  {m:<14} hr@5 {:>8}  mrr@5 {:>8}", pct(hr), pct(mrr));
        }
    }
}

pub fn report(config: &RunConfig) -> Outcome {
    let path = config.require("metrics", &config.metrics)?;
    let rows = read_metrics(path)?;
    if rows.is_empty() {
        return Err(Failure {
            code: EXIT_DATA,
            message: format!("{}: no metrics rows to report", path.display()),
        });
    }
    write_echo(config, "report.conf")?;
    let report = aggregate_report(&rows);
    let series = report.write_series(&config.out_path("series"))?;
    print_summary(&report, &config.reference_method);
    println!("wrote {} series files under {}", series.len(), config.out_path("series").display());
    Ok(())
}
