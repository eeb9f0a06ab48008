//! Sweep results as CSV: one row per (pair, step) followed by one aggregate
//! row per step. Floats use Rust's shortest round-trip formatting, so parsing
//! a file reproduces the in-memory values exactly.

use std::io::{Read, Write};
use std::path::Path;

use super::{CellRecord, StepAggregate, SweepKind, SweepResult};
use crate::error::{Error, Result};
use crate::geometry::ShapeKind;
use crate::metrics::MetricRecord;

pub const CSV_HEADER: [&str; 13] = [
    "sweep_kind",
    "anchor",
    "other",
    "step",
    "param_value",
    "chamfer_sq",
    "iou",
    "status",
    "mean_chamfer_sq",
    "ci_chamfer_sq",
    "mean_iou",
    "ci_iou",
    "n_valid",
];

const OK: &str = "ok";
const AGGREGATE: &str = "aggregate";
const FAILED_PREFIX: &str = "failed: ";

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Csv(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    let kind = result.kind.name();
    for r in &result.records {
        let (chamfer, iou, status) = match &r.outcome {
            Ok(m) => (m.chamfer_sq.to_string(), m.iou.to_string(), OK.to_string()),
            Err(e) => (String::new(), String::new(), format!("{FAILED_PREFIX}{e}")),
        };
        w.write_record([
            kind,
            r.anchor.name(),
            r.other.name(),
            &r.step.to_string(),
            &r.param_value.to_string(),
            &chamfer,
            &iou,
            &status,
            "",
            "",
            "",
            "",
            "",
        ])
        .map_err(csv_err)?;
    }
    for a in &result.aggregates {
        w.write_record([
            kind,
            "*",
            "*",
            &a.step.to_string(),
            &a.param_value.to_string(),
            "",
            "",
            AGGREGATE,
            &opt(a.mean_chamfer_sq),
            &opt(a.ci_chamfer_sq),
            &opt(a.mean_iou),
            &opt(a.ci_iou),
            &a.n_valid.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e))?;
    Ok(())
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(result, std::io::BufWriter::new(file))
}

fn num<T: std::str::FromStr>(field: &str, row: usize, name: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Csv(format!("row {row}: bad {name} {field:?}")))
}

fn opt_num(field: &str, row: usize, name: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        num(field, row, name).map(Some)
    }
}

pub fn parse_csv<R: Read>(input: R) -> Result<SweepResult> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut kind: Option<SweepKind> = None;
    let mut records = Vec::new();
    let mut aggregates = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(csv_err)?;
        let f = |c: usize| row.get(c).unwrap_or("");
        let k: SweepKind = f(0).parse()?;
        if *kind.get_or_insert(k) != k {
            return Err(Error::Csv(format!("row {row_no}: mixed sweep kinds")));
        }
        let step: usize = num(f(3), row_no, "step")?;
        let param_value: f64 = num(f(4), row_no, "param_value")?;
        let status = f(7);
        if status == AGGREGATE {
            aggregates.push(StepAggregate {
                step,
                param_value,
                mean_chamfer_sq: opt_num(f(8), row_no, "mean_chamfer_sq")?,
                ci_chamfer_sq: opt_num(f(9), row_no, "ci_chamfer_sq")?,
                mean_iou: opt_num(f(10), row_no, "mean_iou")?,
                ci_iou: opt_num(f(11), row_no, "ci_iou")?,
                n_valid: num(f(12), row_no, "n_valid")?,
            });
            continue;
        }
        let outcome = if status == OK {
            Ok(MetricRecord {
                chamfer_sq: num(f(5), row_no, "chamfer_sq")?,
                iou: num(f(6), row_no, "iou")?,
            })
        } else if let Some(msg) = status.strip_prefix(FAILED_PREFIX) {
            Err(msg.to_string())
        } else {
            return Err(Error::Csv(format!("row {row_no}: unknown status {status:?}")));
        };
        records.push(CellRecord {
            anchor: f(1).parse::<ShapeKind>()?,
            other: f(2).parse::<ShapeKind>()?,
            step,
            param_value,
            outcome,
        });
    }
    Ok(SweepResult {
        kind: kind.ok_or_else(|| Error::Csv("no rows".into()))?,
        records,
        aggregates,
    })
}

pub fn read_csv(path: &Path) -> Result<SweepResult> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file)
}
