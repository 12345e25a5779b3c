//! Report files: JSON and CSV carry every field at full precision, markdown
//! is the human-readable grid with `*` on significant effect sizes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use robeval_core::report::{CorrelationCurve, ReportRow};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Meta;

pub const CSV_HEADER: &str = "model,dataset,variant_filter,n_groups,mean_orig,mean_pert,nh_mean,nh_lo,nh_hi,nh_significant,nh_category,anh_mean,anh_lo,anh_hi,anh_significant,anh_category,pdr_mean,pdr_lo,pdr_hi,pdr_n_undefined";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Csv, Format::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportDocument {
    #[serde(rename = "_meta", default, skip_serializing_if = "Option::is_none")]
    meta: Option<Meta>,
    rows: Vec<ReportRow>,
}

pub fn report_to_json(rows: &[ReportRow], meta: Option<&Meta>) -> String {
    let doc = ReportDocument { meta: meta.cloned(), rows: rows.to_vec() };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_from_json(text: &str) -> Result<Vec<ReportRow>> {
    let doc: ReportDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "<report json>".into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(doc.rows)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { path: "<report csv>".into(), line, message: e.to_string() }
}

/// CSV with an optional leading `# {"_meta": ...}` comment line.
pub fn report_to_csv(rows: &[ReportRow], meta: Option<&Meta>) -> String {
    let mut out = Vec::new();
    if let Some(meta) = meta {
        out.extend_from_slice(format!("# {}\n", meta.to_line()).as_bytes());
    }
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
        for row in rows {
            w.serialize(row).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    String::from_utf8(out).expect("csv output is utf-8")
}

pub fn report_from_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse {
            path: "<report csv>".into(),
            line: 1,
            message: format!("unexpected header {:?}", header.join(",")),
        });
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|")
}

fn num(x: f64) -> String {
    format!("{x:.2}")
}

fn starred(x: f64, significant: bool) -> String {
    if significant {
        format!("{}*", num(x))
    } else {
        num(x)
    }
}

fn interval(lo: f64, hi: f64) -> String {
    format!("[{}, {}]", num(lo), num(hi))
}

pub fn report_to_markdown(rows: &[ReportRow], meta: Option<&Meta>) -> String {
    let mut s = String::new();
    if let Some(meta) = meta {
        writeln!(s, "<!-- {} -->", meta.to_line()).unwrap();
        s.push('\n');
    }
    s.push_str("| Model | Dataset | Variants | n | M(orig) | M(pert.) | NCoH | NCoH CI | ANCoH | ANCoH CI | PDR | PDR undefined | NCoH category | ANCoH category |\n");
    s.push_str("|---|---|---|---:|---:|---:|---:|---|---:|---|---:|---:|---|---|\n");
    for r in rows {
        let pdr = r.pdr_mean.map_or_else(|| "n/a".into(), num);
        writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            cell(&r.model),
            cell(&r.dataset),
            r.variant_filter,
            r.n_groups,
            num(r.mean_orig),
            num(r.mean_pert),
            starred(r.nh_mean, r.nh_significant),
            interval(r.nh_lo, r.nh_hi),
            starred(r.anh_mean, r.anh_significant),
            interval(r.anh_lo, r.anh_hi),
            pdr,
            r.pdr_n_undefined,
            r.nh_category,
            r.anh_category,
        )
        .unwrap();
    }
    s.push_str("\n`*`: the 95% bootstrap interval excludes 0.\n");
    s
}

pub fn render(rows: &[ReportRow], format: Format, meta: Option<&Meta>) -> String {
    match format {
        Format::Json => report_to_json(rows, meta),
        Format::Csv => report_to_csv(rows, meta),
        Format::Markdown => report_to_markdown(rows, meta),
    }
}

pub fn write_report(rows: &[ReportRow], format: Format, meta: Option<&Meta>, path: &Path) -> Result<()> {
    fs::write(path, render(rows, format, meta)).map_err(|e| Error::io(path, e))
}

/// `score_p,nh,reverse_pdr` rows followed by a `# pearson_r=` footer.
pub fn curve_to_csv(curve: &CorrelationCurve, meta: Option<&Meta>) -> String {
    let mut out = Vec::new();
    if let Some(meta) = meta {
        out.extend_from_slice(format!("# {}\n", meta.to_line()).as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for p in &curve.points {
            w.serialize(p).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    let mut s = String::from_utf8(out).expect("csv output is utf-8");
    writeln!(s, "# score_o={}", curve.score_o).unwrap();
    writeln!(s, "# pearson_r={}", curve.pearson_r).unwrap();
    s
}
