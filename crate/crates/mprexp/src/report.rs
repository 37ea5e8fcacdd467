//! Tabular output: CSV at full precision and aligned text at three decimals
//! (three significant digits for [`Kind::Sci`]).

use std::io::Write;

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    /// A confidence interval; two CSV columns `<name>_lo`, `<name>_hi`.
    Interval(f64, f64),
    Int(u64),
    Text(String),
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Num,
    /// A number shown in scientific notation.
    Sci,
    Interval,
    Int,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: &'static str,
    pub kind: Kind,
    /// Shown in the text rendering; CSV always has every column.
    pub rendered: bool,
}

impl Column {
    pub fn new(name: &'static str, kind: Kind) -> Self {
        Self { name, kind, rendered: true }
    }

    pub fn csv_only(name: &'static str, kind: Kind) -> Self {
        Self { name, kind, rendered: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    /// Free-form lines printed under the text rendering.
    pub notes: Vec<String>,
}

fn full(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn short(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3}")
    } else {
        full(x)
    }
}

impl Table {
    pub fn new(title: impl Into<String>, columns: Vec<Column>) -> Self {
        Self { title: title.into(), columns, rows: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> CliResult<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = Vec::new();
        for c in &self.columns {
            match c.kind {
                Kind::Interval => {
                    header.push(format!("{}_lo", c.name));
                    header.push(format!("{}_hi", c.name));
                }
                _ => header.push(c.name.to_string()),
            }
        }
        wr.write_record(&header)?;
        for row in &self.rows {
            let mut rec = Vec::with_capacity(header.len());
            for (cell, col) in row.iter().zip(&self.columns) {
                match cell {
                    Cell::Num(x) => rec.push(full(*x)),
                    Cell::Interval(lo, hi) => {
                        rec.push(full(*lo));
                        rec.push(full(*hi));
                    }
                    Cell::Int(n) => rec.push(n.to_string()),
                    Cell::Text(s) => rec.push(s.clone()),
                    Cell::Missing => {
                        rec.push(String::new());
                        if col.kind == Kind::Interval {
                            rec.push(String::new());
                        }
                    }
                }
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }

    pub fn render(&self) -> String {
        let cols: Vec<usize> = (0..self.columns.len()).filter(|&i| self.columns[i].rendered).collect();
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                cols.iter()
                    .map(|&i| match &row[i] {
                        Cell::Num(x) if self.columns[i].kind == Kind::Sci => format!("{x:.3e}"),
                        Cell::Num(x) => short(*x),
                        Cell::Interval(lo, hi) => format!("[{}, {}]", short(*lo), short(*hi)),
                        Cell::Int(n) => n.to_string(),
                        Cell::Text(s) => s.clone(),
                        Cell::Missing => "-".into(),
                    })
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = cols
            .iter()
            .enumerate()
            .map(|(j, &i)| cells.iter().map(|r| r[j].len()).chain([self.columns[i].name.len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&self.title);
            out.push('\n');
        }
        let header: Vec<String> =
            cols.iter().zip(&widths).map(|(&i, &w)| format!("{:>w$}", self.columns[i].name)).collect();
        out.push_str(header.join("  ").trim_end());
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1)));
        out.push('\n');
        for r in &cells {
            let line: Vec<String> = r.iter().zip(&widths).map(|(s, &w)| format!("{s:>w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        for n in &self.notes {
            out.push_str(n);
            out.push('\n');
        }
        out
    }
}
