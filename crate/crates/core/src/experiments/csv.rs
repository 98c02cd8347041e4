//! CSV output for experiment result tables.

use std::path::Path;

use crate::error::{Error, Result};

/// Rectangular numeric results of one scenario, in sweep order.
#[derive(Debug, Clone)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        ResultTable { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    /// Appends one sweep-point row; the width must match the header and all
    /// values must be finite.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!("non-finite table value {v}")));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Formats a value with 17 significant digits, enough to round-trip any f64.
fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Renders the table as deterministic UTF-8 CSV text (header + one row per
/// sweep point). Reruns with identical inputs are byte-identical.
pub fn render_csv(table: &ResultTable) -> String {
    let mut out = String::new();
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes the table to `path` as CSV.
pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(table))?;
    Ok(())
}

/// Writes a minimal gnuplot script next to a CSV so the sweep can be eyeballed
/// without further tooling: first column on x, every other column as a line.
pub fn emit_gnuplot_stub(table: &ResultTable, csv_name: &str, path: &Path) -> Result<()> {
    let mut s = String::from("set datafile separator \",\"\nset key autotitle columnhead\n");
    if let Some(x) = table.columns.first() {
        s.push_str(&format!("set xlabel \"{x}\"\n"));
    }
    let series: Vec<String> = (2..=table.columns.len())
        .map(|c| format!("\"{csv_name}\" using 1:{c} with linespoints"))
        .collect();
    if !series.is_empty() {
        s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_when_empty() {
        let t = ResultTable::new(&["a", "b"]);
        assert_eq!(render_csv(&t), "a,b\n");
    }

    #[test]
    fn values_round_trip_through_text() {
        let mut t = ResultTable::new(&["x", "y"]);
        let v = std::f64::consts::PI / 3.0;
        t.push_row(vec![2.0, v]).unwrap();
        let text = render_csv(&t);
        let cell = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
        assert_eq!(cell.parse::<f64>().unwrap(), v);
    }

    #[test]
    fn rejects_ragged_or_non_finite_rows() {
        let mut t = ResultTable::new(&["x", "y"]);
        assert!(t.push_row(vec![1.0]).is_err());
        assert!(t.push_row(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn rerun_is_byte_identical() {
        let mut t = ResultTable::new(&["x", "y"]);
        t.push_row(vec![1.0, 0.1 + 0.2]).unwrap();
        assert_eq!(render_csv(&t), render_csv(&t.clone()));
    }
}
