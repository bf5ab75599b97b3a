//! Typed CSV tables with `#`-comment metadata.
//!
//! Layout of an emitted table:
//!
//! ```text
//! # command: thresholds
//! # version: 0.1.0
//! # seed: 42
//! # config: {"k":[3,4]}
//! # schema: k:int,lambda_s:real,error:text
//! k,lambda_s,error
//! 3,1.1547005383792515,
//! ```
//!
//! Reals use Rust's shortest round-trip formatting, so parsing an emitted
//! table gives back the same bits. Empty fields are missing values; an empty
//! text cell is stored as missing for the same reason.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ColumnType {
    Int,
    Real,
    Bool,
    Text,
}

impl ColumnType {
    fn tag(self) -> &'static str {
        match self {
            ColumnType::Int => "int",
            ColumnType::Real => "real",
            ColumnType::Bool => "bool",
            ColumnType::Text => "text",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "int" => ColumnType::Int,
            "real" => ColumnType::Real,
            "bool" => ColumnType::Bool,
            "text" => ColumnType::Text,
            other => return Err(Error::Table(format!("unknown column type {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Self { name: name.into(), ty }
    }
    pub fn int(name: impl Into<String>) -> Self {
        Self::new(name, ColumnType::Int)
    }
    pub fn real(name: impl Into<String>) -> Self {
        Self::new(name, ColumnType::Real)
    }
    pub fn bool(name: impl Into<String>) -> Self {
        Self::new(name, ColumnType::Bool)
    }
    pub fn text(name: impl Into<String>) -> Self {
        Self::new(name, ColumnType::Text)
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Bool(bool),
    Text(String),
    Missing,
}

// Reals compare by bit pattern so that NaN cells survive a round trip check.
impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Real(a), Cell::Real(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (Cell::Bool(a), Cell::Bool(b)) => a == b,
            (Cell::Text(a), Cell::Text(b)) => a == b,
            (Cell::Missing, Cell::Missing) => true,
            _ => false,
        }
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}
impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Real(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Cell::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Cell::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(v) => Some(v),
            _ => None,
        }
    }

    fn fits(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Cell::Missing, _)
                | (Cell::Int(_), ColumnType::Int)
                | (Cell::Real(_), ColumnType::Real)
                | (Cell::Bool(_), ColumnType::Bool)
                | (Cell::Text(_), ColumnType::Text)
        )
    }

    fn parse(field: &str, ty: ColumnType) -> Result<Self> {
        if field.is_empty() {
            return Ok(Cell::Missing);
        }
        let bad = |what: &str| Error::Table(format!("cannot parse {field:?} as {what}"));
        Ok(match ty {
            ColumnType::Int => Cell::Int(field.parse().map_err(|_| bad("int"))?),
            ColumnType::Real => Cell::Real(field.parse().map_err(|_| bad("real"))?),
            ColumnType::Bool => Cell::Bool(field.parse().map_err(|_| bad("bool"))?),
            ColumnType::Text => Cell::Text(field.to_string()),
        })
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Real(v) => write!(f, "{v:?}"),
            Cell::Bool(v) => write!(f, "{v}"),
            Cell::Text(v) => f.write_str(v),
            Cell::Missing => Ok(()),
        }
    }
}

/// Provenance of a table: enough to rerun the command that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub timestamp: Option<String>,
}

impl Metadata {
    pub fn new(command: impl Into<String>, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self { command: command.into(), version: crate::VERSION.to_string(), seed, config, timestamp: None }
    }

    pub fn with_timestamp(mut self, timestamp: impl Into<String>) -> Self {
        self.timestamp = Some(timestamp.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub metadata: Metadata,
    columns: Vec<Column>,
    rows: Vec<Vec<Cell>>,
}

impl CurveTable {
    pub fn new(metadata: Metadata, columns: Vec<Column>) -> Result<Self> {
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() || c.name.contains([',', ':', '\n', '\r', '"']) {
                return Err(Error::Table(format!("invalid column name {:?}", c.name)));
            }
            if columns[..i].iter().any(|d| d.name == c.name) {
                return Err(Error::Table(format!("duplicate column {:?}", c.name)));
            }
        }
        Ok(Self { metadata, columns, rows: Vec::new() })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// All values of a column, in row order.
    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Table(format!(
                "row has {} cells but the schema has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        let row: Vec<Cell> = row
            .into_iter()
            .map(|c| match c {
                Cell::Text(s) if s.is_empty() => Cell::Missing,
                c => c,
            })
            .collect();
        for (cell, col) in row.iter().zip(&self.columns) {
            if !cell.fits(col.ty) {
                return Err(Error::Table(format!("cell {cell:?} does not fit column {:?} ({:?})", col.name, col.ty)));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Build a row by column name; unnamed columns are missing.
    pub fn push_named(&mut self, cells: Vec<(&str, Cell)>) -> Result<()> {
        let mut row = vec![Cell::Missing; self.columns.len()];
        for (name, cell) in cells {
            let i = self
                .column_index(name)
                .ok_or_else(|| Error::Table(format!("no column named {name:?}")))?;
            row[i] = cell;
        }
        self.push_row(row)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let m = &self.metadata;
        writeln!(out, "# command: {}", single_line(&m.command))?;
        writeln!(out, "# version: {}", single_line(&m.version))?;
        match m.seed {
            Some(s) => writeln!(out, "# seed: {s}")?,
            None => writeln!(out, "# seed:")?,
        }
        writeln!(out, "# config: {}", serde_json::to_string(&m.config).map_err(|e| Error::Table(e.to_string()))?)?;
        if let Some(ts) = &m.timestamp {
            writeln!(out, "# timestamp: {}", single_line(ts))?;
        }
        let schema: Vec<String> = self.columns.iter().map(|c| format!("{}:{}", c.name, c.ty.tag())).collect();
        writeln!(out, "# schema: {}", schema.join(","))?;

        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Table(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut command = None;
        let mut version = None;
        let mut seed = None;
        let mut config = None;
        let mut timestamp = None;
        let mut schema = None;
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(rest) = line.strip_prefix('#') else { break };
            body_start += line.len();
            let rest = rest.trim_end_matches(['\n', '\r']);
            let rest = rest.strip_prefix(' ').unwrap_or(rest);
            let (key, value) = rest.split_once(':').unwrap_or((rest, ""));
            let value = value.strip_prefix(' ').unwrap_or(value);
            match key {
                "command" => command = Some(value.to_string()),
                "version" => version = Some(value.to_string()),
                "seed" => {
                    seed = if value.is_empty() {
                        None
                    } else {
                        Some(value.parse().map_err(|_| Error::Table(format!("bad seed {value:?}")))?)
                    }
                }
                "config" => {
                    config = Some(serde_json::from_str(value).map_err(|e| Error::Table(format!("bad config: {e}")))?)
                }
                "timestamp" => timestamp = Some(value.to_string()),
                "schema" => schema = Some(value.to_string()),
                _ => {}
            }
        }
        let schema = schema.ok_or_else(|| Error::Table("missing schema line".into()))?;
        let columns = schema
            .split(',')
            .map(|spec| {
                let (name, ty) = spec
                    .rsplit_once(':')
                    .ok_or_else(|| Error::Table(format!("bad schema entry {spec:?}")))?;
                Ok(Column::new(name, ColumnType::from_tag(ty)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let metadata = Metadata {
            command: command.ok_or_else(|| Error::Table("missing command line".into()))?,
            version: version.unwrap_or_default(),
            seed,
            config: config.unwrap_or(serde_json::Value::Null),
            timestamp,
        };
        let mut table = CurveTable::new(metadata, columns)?;

        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text[body_start..].as_bytes());
        let header = reader.headers()?.clone();
        if header.len() != table.columns.len() || header.iter().zip(&table.columns).any(|(h, c)| h != c.name) {
            return Err(Error::Table("header row does not match schema".into()));
        }
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .zip(&table.columns)
                .map(|(field, col)| Cell::parse(field, col.ty))
                .collect::<Result<Vec<_>>>()?;
            table.push_row(row)?;
        }
        Ok(table)
    }
}

fn single_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}
