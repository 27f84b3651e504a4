//! Tabular experiment output.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), which is enough
//! for every finite `f64` to parse back to the same bits. Absent values are
//! empty fields.

use std::fmt;
use std::io;

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}

impl From<Option<f64>> for Field {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Field::Empty, Field::Num)
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Text(s.to_string())
    }
}

impl From<bool> for Field {
    fn from(b: bool) -> Self {
        Field::Num(if b { 1.0 } else { 0.0 })
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Num(v) => write!(f, "{v:.16e}"),
            Field::Text(s) => f.write_str(s),
            Field::Empty => Ok(()),
        }
    }
}

impl Field {
    fn parse(s: &str) -> Self {
        if s.is_empty() {
            Field::Empty
        } else {
            s.parse::<f64>().map_or_else(|_| Field::Text(s.to_string()), Field::Num)
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Field::Num(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTrace {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl CsvTrace {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric values of a column; `None` for empty or text cells.
    pub fn column(&self, name: &str) -> Vec<Option<f64>> {
        let k = self.column_index(name).unwrap_or_else(|| panic!("no column `{name}`"));
        self.rows.iter().map(|r| r[k].as_f64()).collect()
    }

    pub fn write<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|f| f.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("fields are UTF-8")
    }

    pub fn parse(text: &str) -> csv::Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().map(|rec| rec.map(|rec| rec.iter().map(Field::parse).collect())).collect::<csv::Result<_>>()?;
        Ok(Self { header, rows })
    }
}
