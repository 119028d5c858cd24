//! Tabular results and their CSV/JSON encodings.
//!
//! Numbers are written with 17 significant digits so that every `f64`
//! survives a text round trip. Missing values are empty CSV cells (JSON
//! `null`); NaN and infinities are never written.

use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::Format;
use crate::error::Result;

/// Bumped whenever a column is added, removed or renamed.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    /// Finite numbers only; anything else becomes `Missing`.
    pub fn num(x: f64) -> Self {
        if x.is_finite() {
            Cell::Num(x)
        } else {
            Cell::Missing
        }
    }

    pub fn opt(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::num)
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn csv_field(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) if x.is_finite() => format_f64(*x),
            Cell::Num(_) | Cell::Missing => String::new(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json_value(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Missing => Value::Null,
        }
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Join diagnostic flags into one cell; `;` keeps the CSV unquoted.
pub fn join_flags<S: AsRef<str>>(flags: &[S]) -> String {
    flags
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_field))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .header
                        .iter()
                        .cloned()
                        .zip(row.iter().map(Cell::json_value))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn write<W: Write>(&self, format: Format, mut out: W) -> Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, &self.to_json())?;
                out.write_all(b"\n")?;
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(["N", "Tp", "flags"]);
        t.push(vec![Cell::Int(2), Cell::num(0.1), Cell::text("")]);
        t.push(vec![
            Cell::Int(3),
            Cell::num(f64::NAN),
            Cell::text("undefined:no_steady_state"),
        ]);
        t
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            std::f64::consts::TAU,
            1e300,
            f64::MIN_POSITIVE,
        ] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa: String = s
                .split('e')
                .next()
                .unwrap()
                .chars()
                .filter(char::is_ascii_digit)
                .collect();
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn csv_never_contains_nan() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "N,Tp,flags\n2,1.0000000000000001e-1,\n3,,undefined:no_steady_state\n"
        );
        assert!(!text.contains("NaN"));
    }

    #[test]
    fn json_uses_null_for_missing() {
        let v = sample().to_json();
        assert_eq!(v[0]["Tp"], Value::from(0.1));
        assert_eq!(v[1]["Tp"], Value::Null);
        assert_eq!(v[1]["N"], Value::from(3));
    }

    #[test]
    fn flags_join() {
        assert_eq!(join_flags(&["slow", "strained_warn"]), "slow;strained_warn");
        assert_eq!(join_flags::<&str>(&[]), "");
    }
}
