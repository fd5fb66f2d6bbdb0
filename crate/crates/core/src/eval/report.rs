use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::harness::{EvaluationRecord, HourlyMetrics};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "hour_id\tmethod\thr@5\tmrr@5\tsteps\tflags";

/// Serializes hourly metrics as TSV. Floats use Rust's shortest
/// round-trip formatting, so equal runs give equal bytes.
pub fn metrics_tsv(rows: &[HourlyMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}\t{}\t{}\n", r.hour, r.method, r.hr, r.mrr, r.steps, r.flags));
    }
    out
}

pub fn write_metrics(path: &Path, rows: &[HourlyMetrics]) -> Result<()> {
    fs::write(path, metrics_tsv(rows)).map_err(|e| Error::io(path, e))
}

/// Parses metrics TSV. Errors carry the 1-based line number.
pub fn parse_metrics(text: &str) -> Result<Vec<HourlyMetrics>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == METRICS_HEADER => {}
        Some(_) => return Err(Error::parse(1, format!("expected header `{METRICS_HEADER}`"))),
        None => return Err(Error::parse(1, "empty metrics file")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::parse(n, format!("expected 6 columns, found {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::parse(n, format!("bad {what} `{s}`")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::parse(n, format!("{what} {v} outside [0, 1]")));
            }
            Ok(v)
        };
        rows.push(HourlyMetrics {
            hour: f[0].parse().map_err(|_| Error::parse(n, format!("bad hour_id `{}`", f[0])))?,
            method: f[1].to_string(),
            hr: num(f[2], "hr@5")?,
            mrr: num(f[3], "mrr@5")?,
            steps: f[4].parse().map_err(|_| Error::parse(n, format!("bad steps `{}`", f[4])))?,
            flags: f[5].to_string(),
        });
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<HourlyMetrics>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text)
}

pub fn write_records(path: &Path, records: &[EvaluationRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Invariant(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Median of a non-empty slice; mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { (v[m - 1] + v[m]) / 2.0 } else { v[m] })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// `(a − b) / b`; `None` when `b` is zero.
pub fn relative_improvement(a: f64, b: f64) -> Option<f64> {
    (b != 0.0).then(|| (a - b) / b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub hours: usize,
    pub steps: usize,
    pub median_hr: f64,
    pub median_mrr: f64,
    pub mean_hr: f64,
    pub mean_mrr: f64,
    /// `(hour, hr, mrr)` in hour order.
    pub series: Vec<(i64, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub methods: Vec<MethodSummary>,
}

impl Report {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// Median-based table, one row per method.
    pub fn table(&self) -> String {
        let mut out = format!("{:<14}{:>7}{:>9}{:>12}{:>12}{:>10}{:>10}\n", "method", "hours", "steps", "median_hr", "median_mrr", "mean_hr", "mean_mrr");
        for m in &self.methods {
            out.push_str(&format!(
                "{:<14}{:>7}{:>9}{:>12.4}{:>12.4}{:>10.4}{:>10.4}\n",
                m.method, m.hours, m.steps, m.median_hr, m.median_mrr, m.mean_hr, m.mean_mrr
            ));
        }
        out
    }

    /// Relative median improvement of every method over `baseline`.
    pub fn improvements_over(&self, baseline: &str) -> Vec<(String, Option<f64>, Option<f64>)> {
        let Some(b) = self.method(baseline) else {
            return Vec::new();
        };
        self.methods
            .iter()
            .filter(|m| m.method != baseline)
            .map(|m| {
                (
                    m.method.clone(),
                    relative_improvement(m.median_hr, b.median_hr),
                    relative_improvement(m.median_mrr, b.median_mrr),
                )
            })
            .collect()
    }

    /// Writes `<method>.hr.tsv` and `<method>.mrr.tsv` (hour, value) under
    /// `dir` and returns the written paths.
    pub fn write_series(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for m in &self.methods {
            for (metric, pick) in [("hr", 1usize), ("mrr", 2)] {
                let path = dir.join(format!("{}.{metric}.tsv", m.method));
                let mut text = format!("hour_id\t{metric}@5\n");
                for &(h, hr, mrr) in &m.series {
                    text.push_str(&format!("{h}\t{}\n", if pick == 1 { hr } else { mrr }));
                }
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Per-method aggregation over hours. Hours where a method scored no step
/// are left out of its statistics. Methods keep first-appearance order.
pub fn aggregate_report(rows: &[HourlyMetrics]) -> Report {
    let mut order: Vec<String> = Vec::new();
    let mut by: BTreeMap<&str, Vec<&HourlyMetrics>> = BTreeMap::new();
    for r in rows {
        if !by.contains_key(r.method.as_str()) {
            order.push(r.method.clone());
        }
        by.entry(&r.method).or_default().push(r);
    }
    let methods = order
        .into_iter()
        .map(|name| {
            let mut rs: Vec<&HourlyMetrics> = by[name.as_str()].iter().copied().filter(|r| r.steps > 0).collect();
            rs.sort_by_key(|r| r.hour);
            let hr: Vec<f64> = rs.iter().map(|r| r.hr).collect();
            let mrr: Vec<f64> = rs.iter().map(|r| r.mrr).collect();
            MethodSummary {
                hours: rs.len(),
                steps: rs.iter().map(|r| r.steps).sum(),
                median_hr: median(&hr).unwrap_or(0.0),
                median_mrr: median(&mrr).unwrap_or(0.0),
                mean_hr: mean(&hr).unwrap_or(0.0),
                mean_mrr: mean(&mrr).unwrap_or(0.0),
                series: rs.iter().map(|r| (r.hour, r.hr, r.mrr)).collect(),
                method: name,
            }
        })
        .collect();
    Report { methods }
}
