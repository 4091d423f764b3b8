//! CSV emission for curves and summaries.
//!
//! Floats are written in shortest round-trip form, so parsing a file back
//! reproduces every value bit for bit. Missing values are empty fields.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use crate::run::{RunRecord, RunSummary};

pub const CURVE_HEADER: [&str; 9] = [
    "run",
    "optimizer",
    "step",
    "eta_t",
    "loss",
    "accuracy",
    "clip_ratio",
    "mean_vhat",
    "decay_norm",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "optimizer",
    "final_loss",
    "best_loss",
    "final_accuracy",
    "steps_to_threshold",
    "diverged",
    "diverged_at",
];

pub fn fmt_f64(x: f64) -> String {
    ryu::Buffer::new().format(x).to_owned()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn to_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::new(io::ErrorKind::InvalidData, format!("{other:?}")),
    }
}

pub fn write_records<W: Write>(records: &[RunRecord], writer: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CURVE_HEADER).map_err(to_io)?;
    for r in records {
        w.write_record([
            r.run.to_string(),
            r.optimizer.clone(),
            r.step.to_string(),
            fmt_f64(r.eta_t),
            fmt_f64(r.loss),
            fmt_opt(r.accuracy),
            fmt_opt(r.clip_ratio),
            fmt_f64(r.mean_vhat),
            fmt_f64(r.decay_norm),
        ])
        .map_err(to_io)?;
    }
    w.flush()
}

/// Write `records` to `path` as CSV.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> io::Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    write_records(records, &mut out)?;
    out.flush()
}

fn bad(line: u64, msg: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"))
}

fn parse_field<T: std::str::FromStr>(field: &str, line: u64, name: &str) -> io::Result<T>
where
    T::Err: std::fmt::Display,
{
    field
        .parse()
        .map_err(|e| bad(line, format!("column {name}: {e}")))
}

fn parse_opt(field: &str, line: u64, name: &str) -> io::Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_field(field, line, name).map(Some)
    }
}

/// Parse a curve file produced by [`write_records`].
pub fn read_records<R: Read>(reader: R) -> io::Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(to_io)?;
    if header.iter().ne(CURVE_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(to_io)?;
        let line = i as u64 + 2;
        if rec.len() != CURVE_HEADER.len() {
            return Err(bad(line, "wrong number of fields"));
        }
        out.push(RunRecord {
            run: parse_field(&rec[0], line, "run")?,
            optimizer: rec[1].to_owned(),
            step: parse_field(&rec[2], line, "step")?,
            eta_t: parse_field(&rec[3], line, "eta_t")?,
            loss: parse_field(&rec[4], line, "loss")?,
            accuracy: parse_opt(&rec[5], line, "accuracy")?,
            clip_ratio: parse_opt(&rec[6], line, "clip_ratio")?,
            mean_vhat: parse_field(&rec[7], line, "mean_vhat")?,
            decay_norm: parse_field(&rec[8], line, "decay_norm")?,
        });
    }
    Ok(out)
}

pub fn write_summaries<W: Write>(summaries: &[RunSummary], writer: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER).map_err(to_io)?;
    for s in summaries {
        w.write_record([
            s.optimizer.clone(),
            fmt_opt(s.final_loss),
            fmt_opt(s.best_loss),
            fmt_opt(s.final_accuracy),
            s.steps_to_threshold
                .map(|v| v.to_string())
                .unwrap_or_default(),
            s.diverged().to_string(),
            s.diverged_at.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(to_io)?;
    }
    w.flush()
}
