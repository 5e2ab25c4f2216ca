//! File plumbing: headered CSV tables, JSON documents and error reporting.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

/// A runtime failure, printed as `error[kind]: message`.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub code: u8,
}

impl Failure {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), code: 1 }
    }

    /// A usage problem detected after parsing; exits like a clap error.
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: "argument", message: message.into(), code: 2 }
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        Self::new("io", format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.replace('\n', " ");
        write!(f, "error[{}]: {one_line}", self.kind)
    }
}

impl From<memqubit::Error> for Failure {
    fn from(e: memqubit::Error) -> Self {
        let kind = match e {
            memqubit::Error::Domain(_) => "domain",
            memqubit::Error::Argument(_) => "argument",
            memqubit::Error::Quadrature { .. } => "quadrature",
            memqubit::Error::FitFailure(_) => "fit",
            memqubit::Error::Degenerate(_) => "degenerate",
        };
        Self::new(kind, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// An output destination opened before any work starts.
pub struct Sink {
    path: Option<PathBuf>,
    inner: Box<dyn Write>,
}

impl Sink {
    /// Creates `path`, or writes to stdout when absent.
    pub fn open(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => {
                let file = File::create(p).map_err(|e| Failure::io(p, e))?;
                Ok(Self { path: Some(p.to_path_buf()), inner: Box::new(BufWriter::new(file)) })
            }
            None => Ok(Self { path: None, inner: Box::new(io::stdout().lock()) }),
        }
    }

    pub fn create(path: &Path) -> CliResult<Self> {
        Self::open(Some(path))
    }

    fn fail(&self, e: impl fmt::Display) -> Failure {
        let name = self.path.as_ref().map_or("<stdout>".to_string(), |p| p.display().to_string());
        Failure::new("io", format!("{name}: {e}"))
    }

    pub fn json<T: Serialize>(mut self, value: &T) -> CliResult<()> {
        serde_json::to_writer_pretty(&mut self.inner, value).map_err(|e| self.fail(e))?;
        writeln!(self.inner).map_err(|e| self.fail(e))?;
        self.inner.flush().map_err(|e| self.fail(e))
    }

    pub fn csv(self, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
        let Sink { path, inner } = self;
        let name = path.as_ref().map_or("<stdout>".to_string(), |p| p.display().to_string());
        let fail = |e: csv::Error| Failure::new("io", format!("{name}: {e}"));
        let mut w = csv::Writer::from_writer(inner);
        w.write_record(header).map_err(fail)?;
        for row in rows {
            w.write_record(row.iter().map(f64::to_string)).map_err(fail)?;
        }
        w.flush().map_err(|e| Failure::new("io", format!("{name}: {e}")))
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Failure::new("parse", format!("{}: {e}", path.display())))
}

/// A numeric CSV with a header row.
pub struct Table {
    path: PathBuf,
    headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| Failure::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let parse = |e: csv::Error| Failure::new("parse", format!("{}: {e}", path.display()));
        let headers: Vec<String> = reader.headers().map_err(parse)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(parse)?;
            let row = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|_| {
                        Failure::new(
                            "parse",
                            format!("{}: line {}: '{field}' is not a number", path.display(), i + 2),
                        )
                    })
                })
                .collect::<CliResult<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { path: path.to_path_buf(), headers, rows })
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, name: &str) -> CliResult<usize> {
        self.find(name).ok_or_else(|| {
            Failure::new(
                "parse",
                format!("{}: no column '{name}' (have {})", self.path.display(), self.headers.join(", ")),
            )
        })
    }

    /// The first two columns as pairs.
    pub fn pairs(&self) -> CliResult<Vec<(f64, f64)>> {
        if self.headers.len() < 2 {
            return Err(Failure::new("parse", format!("{}: expected two columns", self.path.display())));
        }
        Ok(self.rows.iter().map(|r| (r[0], r[1])).collect())
    }
}
