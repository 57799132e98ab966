//! Long-format CSV: one row per `(unit, time)`, one column per variable.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{PmeError, Result};
use crate::panel::{PanelDataset, UnitSeries};

/// Which CSV columns identify units and periods, and which hold values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvColumns {
    pub unit: String,
    pub time: String,
    /// `None` takes every other column in header order.
    pub values: Option<Vec<String>>,
}

impl Default for CsvColumns {
    fn default() -> Self {
        CsvColumns {
            unit: "unit".into(),
            time: "time".into(),
            values: None,
        }
    }
}

/// Observations of one unit, sorted by time; gaps are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct RawUnit {
    pub unit_id: String,
    pub times: Vec<i64>,
    /// One row per time stamp.
    pub rows: Vec<Vec<f64>>,
}

impl RawUnit {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_series(&self) -> Result<UnitSeries> {
        let m = self.rows.first().map_or(0, Vec::len);
        let values = DMatrix::from_fn(self.rows.len(), m, |t, j| self.rows[t][j]);
        UnitSeries::with_times(self.unit_id.clone(), self.times.clone(), values)
    }
}

/// Unit-grouped records in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecords {
    pub variable_names: Vec<String>,
    pub units: Vec<RawUnit>,
}

impl RawRecords {
    /// Panel with gaps preserved; see [`crate::panel::validate`] for estimability.
    pub fn to_panel(&self) -> Result<PanelDataset> {
        let units = self.units.iter().map(RawUnit::to_series).collect::<Result<Vec<_>>>()?;
        PanelDataset::new(units, self.variable_names.clone())
    }

    pub fn from_panel(panel: &PanelDataset) -> Self {
        let units = panel
            .units()
            .iter()
            .map(|u| RawUnit {
                unit_id: u.unit_id().to_string(),
                times: u.times().to_vec(),
                rows: u.values().row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
            .collect();
        RawRecords {
            variable_names: panel.variable_names().to_vec(),
            units,
        }
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> PmeError {
    PmeError::Parse {
        line,
        message: message.into(),
    }
}

fn csv_err(e: ::csv::Error) -> PmeError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        ::csv::ErrorKind::Io(io) => PmeError::Io(io.to_string()),
        ::csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            parse_err(line, format!("expected {expected_len} fields, found {len}"))
        }
        ::csv::ErrorKind::Utf8 { err, .. } => parse_err(line, format!("invalid UTF-8: {err}")),
        other => parse_err(line, format!("{other:?}")),
    }
}

pub fn read_csv_long(path: impl AsRef<Path>, columns: &CsvColumns) -> Result<RawRecords> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| PmeError::Io(format!("{}: {e}", path.display())))?;
    read_csv_long_from(file, columns)
}

pub fn read_csv_long_from<R: Read>(reader: R, columns: &CsvColumns) -> Result<RawRecords> {
    let mut rdr = ::csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(1, format!("no column named {name:?}")))
    };
    let unit_col = find(&columns.unit)?;
    let time_col = find(&columns.time)?;
    let value_cols: Vec<usize> = match &columns.values {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&k| k != unit_col && k != time_col).collect(),
    };
    if value_cols.is_empty() {
        return Err(parse_err(1, "no value columns"));
    }
    let variable_names: Vec<String> = value_cols.iter().map(|&k| header[k].trim().to_string()).collect();

    let mut units: Vec<RawUnit> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    // (unit, time) -> line of first occurrence
    let mut seen: HashMap<(usize, i64), u64> = HashMap::new();
    let mut record = ::csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(csv_err)? {
        let line = record.position().map_or(0, |p| p.line());
        let unit_id = record[unit_col].trim();
        if unit_id.is_empty() {
            return Err(parse_err(line, format!("missing value in column {:?}", columns.unit)));
        }
        let time: i64 = record[time_col]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("time {:?} is not an integer", &record[time_col])))?;
        let mut row = Vec::with_capacity(value_cols.len());
        for (&k, name) in value_cols.iter().zip(&variable_names) {
            let cell = record[k].trim();
            if cell.is_empty() {
                return Err(parse_err(line, format!("missing value in column {name:?}")));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("{cell:?} in column {name:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in column {name:?}")));
            }
            row.push(v);
        }
        let u = *index.entry(unit_id.to_string()).or_insert_with(|| {
            units.push(RawUnit {
                unit_id: unit_id.to_string(),
                times: Vec::new(),
                rows: Vec::new(),
            });
            units.len() - 1
        });
        if let Some(first) = seen.insert((u, time), line) {
            return Err(parse_err(
                line,
                format!("duplicate observation for unit {unit_id:?} at time {time} (first on line {first})"),
            ));
        }
        units[u].times.push(time);
        units[u].rows.push(row);
    }
    if units.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    for u in &mut units {
        let mut order: Vec<usize> = (0..u.times.len()).collect();
        order.sort_by_key(|&k| u.times[k]);
        u.times = order.iter().map(|&k| u.times[k]).collect();
        u.rows = order.iter().map(|&k| std::mem::take(&mut u.rows[k])).collect();
    }
    Ok(RawRecords {
        variable_names,
        units,
    })
}

/// Writes `unit,time,<variables>`; floats use the shortest round-trip form.
pub fn write_csv_long<W: Write>(writer: W, records: &RawRecords) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(writer);
    let mut header = vec!["unit".to_string(), "time".to_string()];
    header.extend(records.variable_names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for u in &records.units {
        for (t, row) in u.times.iter().zip(&u.rows) {
            let mut rec = vec![u.unit_id.clone(), t.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
