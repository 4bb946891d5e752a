//! Headered CSV tables. Floats are written with Rust's shortest round-trip
//! formatting so every emitted file re-ingests to identical values.

use crate::locksim::SimTrace;
use crate::{Error, Result};

/// Column-major-free numeric table: a header and rows of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn has(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }
}

pub const TRACE_HEADER: [&str; 6] = ["t", "detuning_hz", "error", "control", "coupling", "locked"];

fn write_row(out: &mut String, cells: impl Iterator<Item = String>) {
    let line: Vec<String> = cells.collect();
    out.push_str(&line.join(","));
    out.push('\n');
}

pub fn emit_table(table: &Table) -> String {
    let mut out = String::new();
    write_row(&mut out, table.header.iter().cloned());
    for row in &table.rows {
        write_row(&mut out, row.iter().map(|v| format!("{v}")));
    }
    out
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn parse_cell(cell: &str, line: u64, col: usize, name: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| {
        Error::InvalidData(format!(
            "line {line}, column {} ({name}): cannot parse '{cell}' as a number",
            col + 1
        ))
    })
}

/// Parses a table whose header is `required` optionally followed by
/// `optional`, in that order.
pub fn parse_table(text: &str, required: &[&str], optional: &[&str]) -> Result<Table> {
    let mut rdr = reader(text);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::InvalidData(format!("line 1: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected = required.len()..=required.len() + optional.len();
    let matches =
        expected.contains(&header.len()) && header.iter().zip(required.iter().chain(optional)).all(|(h, e)| h == e);
    if !matches {
        let mut want = required.join(",");
        for o in optional {
            want.push_str(&format!("[,{o}]"));
        }
        return Err(Error::InvalidData(format!(
            "line 1: header '{}' does not match '{want}'",
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::InvalidData(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::InvalidData(format!(
                "line {line}, column {}: expected {} fields, found {}",
                rec.len().min(header.len()) + 1,
                header.len(),
                rec.len()
            )));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| parse_cell(cell, line, j, &header[j]))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("no data rows".into()));
    }
    Ok(Table { header, rows })
}

pub fn emit_trace(trace: &SimTrace) -> String {
    let mut out = String::new();
    write_row(&mut out, TRACE_HEADER.iter().map(|s| s.to_string()));
    for i in 0..trace.len() {
        write_row(
            &mut out,
            [
                format!("{}", trace.time[i]),
                format!("{}", trace.detuning[i]),
                format!("{}", trace.error[i]),
                format!("{}", trace.control[i]),
                format!("{}", trace.coupling[i]),
                if trace.locked[i] { "1".into() } else { "0".into() },
            ]
            .into_iter(),
        );
    }
    out
}

pub fn parse_trace(text: &str) -> Result<SimTrace> {
    let mut rdr = reader(text);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::InvalidData(format!("line 1: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != TRACE_HEADER {
        return Err(Error::InvalidData(format!(
            "line 1: header '{}' is not a trace header",
            header.join(",")
        )));
    }
    let mut t = SimTrace::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::InvalidData(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != TRACE_HEADER.len() {
            return Err(Error::InvalidData(format!(
                "line {line}: expected 6 fields, found {}",
                rec.len()
            )));
        }
        let num = |j: usize| parse_cell(&rec[j], line, j, TRACE_HEADER[j]);
        t.time.push(num(0)?);
        t.detuning.push(num(1)?);
        t.error.push(num(2)?);
        t.control.push(num(3)?);
        t.coupling.push(num(4)?);
        t.locked.push(match &rec[5] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::InvalidData(format!(
                    "line {line}, column 6 (locked): expected 0 or 1, found '{other}'"
                )))
            }
        });
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn same(a: f64, b: f64) -> bool {
        a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
    }

    fn any_value() -> impl Strategy<Value = f64> {
        prop_oneof![
            8 => any::<f64>().prop_filter("finite", |v| v.is_finite()),
            1 => Just(f64::NAN),
            1 => Just(-0.0),
            1 => Just(f64::INFINITY),
        ]
    }

    proptest! {
        #[test]
        fn table_round_trip(rows in prop::collection::vec(prop::collection::vec(any_value(), 3), 1..20)) {
            let table = Table { header: vec!["a".into(), "b".into(), "c".into()], rows };
            let back = parse_table(&emit_table(&table), &["a", "b"], &["c"]).unwrap();
            prop_assert_eq!(&back.header, &table.header);
            for (r, s) in back.rows.iter().zip(&table.rows) {
                for (x, y) in r.iter().zip(s) {
                    prop_assert!(same(*x, *y), "{} vs {}", x, y);
                }
            }
        }

        #[test]
        fn trace_round_trip(rows in prop::collection::vec((any_value(), any_value(), any_value(), any::<bool>()), 0..30)) {
            let mut t = SimTrace::default();
            for (i, (d, e, c, l)) in rows.iter().enumerate() {
                t.time.push(i as f64 * 1e-4);
                t.detuning.push(*d);
                t.error.push(*e);
                t.control.push(*c);
                t.coupling.push(1.0 / (1.0 + i as f64));
                t.locked.push(*l);
            }
            let back = parse_trace(&emit_trace(&t)).unwrap();
            prop_assert_eq!(back.len(), t.len());
            for i in 0..t.len() {
                prop_assert!(same(back.detuning[i], t.detuning[i]));
                prop_assert!(same(back.error[i], t.error[i]));
                prop_assert!(same(back.control[i], t.control[i]));
                prop_assert_eq!(back.time[i].to_bits(), t.time[i].to_bits());
                prop_assert_eq!(back.locked[i], t.locked[i]);
            }
        }
    }

    #[test]
    fn bad_cell_names_line_and_column() {
        let text = "power_w,shift_hz\n0.01,-3e6\n0.02,abc\n";
        let err = parse_table(text, &["power_w", "shift_hz"], &["sigma_hz"])
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("line 3") && err.contains("column 2") && err.contains("shift_hz"),
            "{err}"
        );
    }

    #[test]
    fn ragged_row_is_reported() {
        let text = "power_w,shift_hz\n0.01,-3e6\n0.02\n";
        let err = parse_table(text, &["power_w", "shift_hz"], &[])
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn header_mismatch_is_reported() {
        let err = parse_table("p,shift\n1,2\n", &["power_w", "shift_hz"], &[])
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 1") && err.contains("power_w,shift_hz"), "{err}");
    }

    #[test]
    fn optional_column_and_comments() {
        let text = "# bench run\npower_w, shift_hz, sigma_hz\n0.01, 1, 0.5\n";
        let t = parse_table(text, &["power_w", "shift_hz"], &["sigma_hz"]).unwrap();
        assert_eq!(t.column("sigma_hz").unwrap(), vec![0.5]);
    }

    #[test]
    fn empty_table_is_rejected() {
        assert!(parse_table("power_w,shift_hz\n", &["power_w", "shift_hz"], &[]).is_err());
    }
}
