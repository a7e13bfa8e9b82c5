//! The experiment CSV schema.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, XlabError};

pub const HEADER: [&str; 8] = ["experiment", "n", "beta", "epsilon", "t", "quantity", "value", "stderr"];

/// One measurement. Absent fields are written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub n: Option<usize>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub t: Option<f64>,
    pub quantity: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl Row {
    pub fn new(experiment: &str, quantity: &str, value: f64) -> Self {
        Self {
            experiment: experiment.into(),
            n: None,
            beta: None,
            epsilon: None,
            t: None,
            quantity: quantity.into(),
            value,
            stderr: None,
        }
    }

    pub fn model(mut self, n: usize, beta: f64, epsilon: f64) -> Self {
        self.n = Some(n);
        self.beta = Some(beta);
        self.epsilon = Some(epsilon);
        self
    }

    pub fn at(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }

    fn cells(&self) -> [String; 8] {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        [
            self.experiment.clone(),
            opt(&self.n),
            opt(&self.beta),
            opt(&self.epsilon),
            opt(&self.t),
            self.quantity.clone(),
            self.value.to_string(),
            opt(&self.stderr),
        ]
    }
}

pub fn write_rows<W: Write>(sink: W, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| XlabError::Io(std::io::Error::other(e));
    w.write_record(HEADER).map_err(io)?;
    for row in rows {
        w.write_record(row.cells()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_file(path: &Path, rows: &[Row]) -> Result<()> {
    write_rows(std::fs::File::create(path)?, rows)
}

pub fn to_string(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

fn parse_cell<T: std::str::FromStr>(cell: &str, name: &str) -> std::result::Result<Option<T>, String> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| format!("column `{name}`: cannot parse `{cell}`"))
}

/// Parses rows; `origin` names the source in error messages.
pub fn read_rows<R: Read>(source: R, origin: &Path) -> Result<Vec<Row>> {
    let err = |line: u64, msg: String| XlabError::Csv { path: origin.to_path_buf(), line, msg };
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(source);
    let mut rows = Vec::new();
    let mut saw_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            if record.iter().ne(HEADER.iter().copied()) {
                return Err(err(line, format!("header must be `{}`", HEADER.join(","))));
            }
            saw_header = true;
            continue;
        }
        if record.len() != HEADER.len() {
            return Err(err(line, format!("expected {} fields, found {}", HEADER.len(), record.len())));
        }
        let parsed = (|| -> std::result::Result<Row, String> {
            Ok(Row {
                experiment: record[0].to_string(),
                n: parse_cell(&record[1], "n")?,
                beta: parse_cell(&record[2], "beta")?,
                epsilon: parse_cell(&record[3], "epsilon")?,
                t: parse_cell(&record[4], "t")?,
                quantity: record[5].to_string(),
                value: parse_cell(&record[6], "value")?.ok_or("column `value` is empty")?,
                stderr: parse_cell(&record[7], "stderr")?,
            })
        })();
        rows.push(parsed.map_err(|m| err(line, m))?);
    }
    if !saw_header {
        return Err(err(1, "missing header".into()));
    }
    Ok(rows)
}

pub fn read_file(path: &Path) -> Result<Vec<Row>> {
    read_rows(std::fs::File::open(path)?, path)
}
