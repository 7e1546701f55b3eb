//! Byte-stable emission of JSON reports, CSV tables and plot data.
//!
//! Every float is written as `{:.16e}` (17 significant digits), which
//! round-trips exactly and does not depend on the platform's shortest-repr
//! algorithm.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON with fixed-width scientific floats.
pub struct SciFormatter<'a>(PrettyFormatter<'a>);

impl Default for SciFormatter<'_> {
    fn default() -> Self {
        SciFormatter(PrettyFormatter::with_indent(b"  "))
    }
}

impl Formatter for SciFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(fmt_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter::default());
    value
        .serialize(&mut ser)
        .expect("serializing into memory does not fail");
    out.push(b'\n');
    out
}

/// `Some(x)` as a number, `None` (or non-finite) as `null`.
pub fn opt(x: Option<f64>) -> Value {
    x.map(Value::from).unwrap_or(Value::Null)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Missing,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map(Cell::Num).unwrap_or(Cell::Missing)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
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

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn dat(&self) -> String {
        match self {
            Cell::Num(x) if x.is_nan() => "NaN".into(),
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Bool(b) => u8::from(*b).to_string(),
            Cell::Text(s) if s.is_empty() => "-".into(),
            Cell::Text(s) => s.split_whitespace().collect::<Vec<_>>().join("_"),
            Cell::Missing => "NaN".into(),
        }
    }
}

/// A named table written as `<name>.csv` and `<name>.dat`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn to_dat(&self) -> Vec<u8> {
        let mut s = format!("# {}\n", self.columns.join(" "));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::dat).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s.into_bytes()
    }
}

/// gnuplot stub plotting every numeric column of `t`-indexed tables.
pub fn plot_script(tables: &[Table]) -> String {
    let mut s =
        String::from("# gnuplot -p plot.gp\nset terminal pngcairo size 900,600\nset key outside\n");
    for t in tables.iter().filter(|t| t.columns.first() == Some(&"t")) {
        let numeric: Vec<usize> = (1..t.columns.len())
            .filter(|&j| {
                t.rows
                    .iter()
                    .all(|r| matches!(r[j], Cell::Num(_) | Cell::Int(_) | Cell::Missing))
            })
            .collect();
        if numeric.is_empty() {
            continue;
        }
        let _ = writeln!(s, "\nset output '{}.png'\nset xlabel 't'", t.name);
        let parts: Vec<String> = numeric
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let file = if i == 0 {
                    format!("'{}.dat'", t.name)
                } else {
                    "''".into()
                };
                format!(
                    "{file} using 1:{} with lines title '{}'",
                    j + 1,
                    t.columns[j]
                )
            })
            .collect();
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    s
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> io::Result<()> {
    std::fs::write(dir.join(name), bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_have_17_digits_and_round_trip() {
        let v = json!({"a": 0.1, "b": [1.0, -2.5e-300], "c": 3u64, "d": null});
        let bytes = to_json_bytes(&v);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert!(text.contains("\"c\": 3"));
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn non_finite_becomes_null() {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter::default());
        f64::NAN.serialize(&mut ser).unwrap();
        assert_eq!(out, b"null");
    }

    #[test]
    fn csv_and_dat_layout() {
        let mut t = Table::new("x", &["t", "v", "note"]);
        t.push(vec![0.0.into(), None.into(), "a b".into()]);
        let csv = String::from_utf8(t.to_csv()).unwrap();
        assert_eq!(csv, "t,v,note\r\n0.0000000000000000e0,,a b\r\n");
        let dat = String::from_utf8(t.to_dat()).unwrap();
        assert_eq!(dat, "# t v note\n0.0000000000000000e0 NaN a_b\n");
        assert!(plot_script(&[t]).contains("'x.dat' using 1:2"));
    }
}
