use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{psnr, ssim};
use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::model::{Model, ParamSet};

/// Method label used for scoring the degraded input itself.
pub const INPUT_METHOD: &str = "input";

pub const CSV_HEADER: &str = "dataset,artifact,method,psnr_mean,psnr_std,ssim_mean,ssim_std,n";
pub const PER_IMAGE_HEADER: &str = "dataset,artifact,method,image,psnr,ssim";

/// Per-image scores of one method on one artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub dataset: String,
    pub artifact: String,
    pub method: String,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

/// Mean and sample standard deviation of one table cell.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub dataset: String,
    pub artifact: String,
    pub method: String,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub n: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvalRecord {
    pub fn summary(&self) -> EvalSummary {
        let (psnr_mean, psnr_std) = mean_std(&self.psnr);
        let (ssim_mean, ssim_std) = mean_std(&self.ssim);
        EvalSummary {
            dataset: self.dataset.clone(),
            artifact: self.artifact.clone(),
            method: self.method.clone(),
            psnr_mean,
            psnr_std,
            ssim_mean,
            ssim_std,
            n: self.psnr.len(),
        }
    }
}

/// Degraded/clean pairs of one evaluation artifact.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCase {
    pub artifact: String,
    pub pairs: Vec<PairedSample>,
}

/// PSNR and SSIM of every pair, restored with `params` or, when `None`,
/// taken as the degraded input unchanged.
pub fn score_pairs(
    model: &Model,
    params: Option<&ParamSet>,
    pairs: &[PairedSample],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let scores: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|p| {
            let pred = match params {
                Some(theta) => model.predict(theta, &p.degraded)?,
                None => p.degraded.clone(),
            };
            Ok((psnr(&pred, &p.clean, 1.0)?, ssim(&pred, &p.clean, 1.0)?))
        })
        .collect::<Result<_>>()?;
    Ok(scores.into_iter().unzip())
}

/// Scores every method on every case. Records come out case by case, with
/// methods in the order given.
pub fn evaluate_suite(
    model: &Model,
    dataset: &str,
    methods: &[(String, Option<ParamSet>)],
    cases: &[EvalCase],
) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::with_capacity(methods.len() * cases.len());
    for case in cases {
        if case.pairs.is_empty() {
            return Err(Error::Data(format!("no evaluation pairs for {}", case.artifact)));
        }
        for (name, params) in methods {
            let (psnr, ssim) = score_pairs(model, params.as_ref(), &case.pairs)?;
            records.push(EvalRecord {
                dataset: dataset.to_string(),
                artifact: case.artifact.clone(),
                method: name.clone(),
                psnr,
                ssim,
            });
        }
    }
    Ok(records)
}

fn check_field(value: &str) -> Result<&str> {
    if value.contains([',', '\n', '"']) {
        return Err(Error::arg(format!("CSV field {value:?} contains a separator")));
    }
    Ok(value)
}

pub fn summaries_to_csv(rows: &[EvalSummary]) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            check_field(&r.dataset)?,
            check_field(&r.artifact)?,
            check_field(&r.method)?,
            r.psnr_mean,
            r.psnr_std,
            r.ssim_mean,
            r.ssim_std,
            r.n
        )
        .expect("writing to a string");
    }
    Ok(out)
}

pub fn per_image_csv(records: &[EvalRecord]) -> Result<String> {
    let mut out = String::from(PER_IMAGE_HEADER);
    out.push('\n');
    for r in records {
        for (i, (p, s)) in r.psnr.iter().zip(&r.ssim).enumerate() {
            writeln!(
                out,
                "{},{},{},{i},{p},{s}",
                check_field(&r.dataset)?,
                check_field(&r.artifact)?,
                check_field(&r.method)?
            )
            .expect("writing to a string");
        }
    }
    Ok(out)
}

fn csv_rows<'a>(text: &'a str, header: &str, columns: usize) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == header => {}
        other => {
            return Err(Error::format(
                "csv",
                format!("expected header {header:?}, found {:?}", other.map(|(_, h)| h)),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != columns {
            return Err(Error::format(
                "csv",
                format!("line {} has {} fields, expected {columns}", i + 1, fields.len()),
            ));
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, column: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::format("csv", format!("line {line}: bad {column} value {value:?}")))
}

pub fn parse_summaries_csv(text: &str) -> Result<Vec<EvalSummary>> {
    csv_rows(text, CSV_HEADER, 8)?
        .into_iter()
        .map(|(line, f)| {
            Ok(EvalSummary {
                dataset: f[0].to_string(),
                artifact: f[1].to_string(),
                method: f[2].to_string(),
                psnr_mean: parse_num(f[3], line, "psnr_mean")?,
                psnr_std: parse_num(f[4], line, "psnr_std")?,
                ssim_mean: parse_num(f[5], line, "ssim_mean")?,
                ssim_std: parse_num(f[6], line, "ssim_std")?,
                n: parse_num(f[7], line, "n")?,
            })
        })
        .collect()
}

/// Rebuilds per-image records, grouped in order of first appearance.
pub fn parse_per_image_csv(text: &str) -> Result<Vec<EvalRecord>> {
    let mut records: Vec<EvalRecord> = Vec::new();
    for (line, f) in csv_rows(text, PER_IMAGE_HEADER, 6)? {
        let psnr: f64 = parse_num(f[4], line, "psnr")?;
        let ssim: f64 = parse_num(f[5], line, "ssim")?;
        let pos = records
            .iter()
            .position(|r| r.dataset == f[0] && r.artifact == f[1] && r.method == f[2]);
        let record = match pos {
            Some(i) => &mut records[i],
            None => {
                records.push(EvalRecord {
                    dataset: f[0].to_string(),
                    artifact: f[1].to_string(),
                    method: f[2].to_string(),
                    psnr: Vec::new(),
                    ssim: Vec::new(),
                });
                records.last_mut().unwrap()
            }
        };
        record.psnr.push(psnr);
        record.ssim.push(ssim);
    }
    Ok(records)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `"PSNR/ SSIM"` with two and four decimals.
pub fn format_cell(psnr: f64, ssim: f64) -> String {
    if psnr.is_infinite() && psnr > 0.0 {
        format!("inf/ {ssim:.4}")
    } else {
        format!("{psnr:.2}/ {ssim:.4}")
    }
}

fn better(a: &EvalSummary, b: &EvalSummary) -> bool {
    a.psnr_mean > b.psnr_mean || (a.psnr_mean == b.psnr_mean && a.ssim_mean > b.ssim_mean)
}

/// Plain-text table with one row per artifact and one column per method.
/// The best cell of each row (highest PSNR, then highest SSIM) is starred.
pub fn render_table(rows: &[EvalSummary], methods: &[String]) -> Result<String> {
    let mut artifacts: Vec<&str> = Vec::new();
    for r in rows {
        if !artifacts.contains(&r.artifact.as_str()) {
            artifacts.push(&r.artifact);
        }
    }
    let mut cells: Vec<Vec<String>> = Vec::new();
    for artifact in &artifacts {
        let row: Vec<&EvalSummary> = methods
            .iter()
            .map(|m| {
                rows.iter()
                    .find(|r| r.artifact == *artifact && &r.method == m)
                    .ok_or_else(|| Error::Data(format!("no result for {m} on {artifact}")))
            })
            .collect::<Result<_>>()?;
        let best = (1..row.len()).fold(0, |b, i| if better(row[i], row[b]) { i } else { b });
        let mut line = vec![artifact.to_string()];
        line.extend(row.iter().enumerate().map(|(i, r)| {
            let mark = if i == best { "*" } else { "" };
            format!("{}{mark}", format_cell(r.psnr_mean, r.ssim_mean))
        }));
        cells.push(line);
    }
    let mut header = vec!["artifact".to_string()];
    header.extend(methods.iter().cloned());
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(&cells)
                .map(|r| r[c].len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (k, line) in std::iter::once(&header).chain(&cells).enumerate() {
        let padded: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
        if k == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    Ok(out)
}
