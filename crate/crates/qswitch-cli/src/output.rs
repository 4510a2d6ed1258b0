//! Result tables and the run log.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// Version tag of every table layout. Bump when a column changes.
pub const SCHEMAS: &[(&str, u32)] = &[
    ("qst.csv", 1),
    ("qst_trace.csv", 1),
    ("fidelity.csv", 1),
    ("route.csv", 1),
    ("sweep_tau.csv", 1),
    ("tau_opt.csv", 1),
    ("sweep_chi.csv", 1),
    ("sweep_t1.csv", 1),
    ("emitter_check.csv", 1),
];

pub fn schema_version(file: &str) -> Option<u32> {
    SCHEMAS.iter().find(|(f, _)| *f == file).map(|(_, v)| *v)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// One result file; the header is always written, even with no rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub file: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(file: &'static str, header: &[&'static str]) -> Self {
        debug_assert!(schema_version(file).is_some(), "unregistered table {file}");
        Self {
            file,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width of {}", self.file);
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(self.file);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Line-oriented log written next to the results.
#[derive(Debug, Default)]
pub struct RunLog {
    lines: Vec<String>,
}

impl RunLog {
    /// Records `msg` and echoes it at info level.
    pub fn line(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::info!("{msg}");
        self.lines.push(msg);
    }

    /// Records `msg` without echoing it.
    pub fn record(&mut self, msg: impl Into<String>) {
        self.lines.push(msg.into());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("run.log");
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}
