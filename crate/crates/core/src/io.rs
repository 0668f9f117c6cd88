//! CSV tables of per-record features.
//!
//! Floats are written with 17 significant digits so a round trip through
//! text is lossless. Missing values are empty fields.

use std::io::{Read, Write};

use thiserror::Error;

use crate::channel::TransmissionRecord;
use crate::features::history_features;

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("line {line}, column {column:?}: cannot parse {value:?}")]
    Parse {
        line: usize,
        column: String,
        value: String,
    },
    #[error("table has no rows with all of the requested columns")]
    NoCompleteRows,
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A labelled feature table; `values[r][c]` is `None` when missing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub idx: Vec<u64>,
    pub labels: Vec<u8>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

/// Dense design matrix with the table rows it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub rows: Vec<usize>,
}

impl FeatureTable {
    pub fn from_records(records: &[TransmissionRecord]) -> Self {
        let n_vnr = records.first().map_or(0, |r| r.vnr.len());
        let mut columns: Vec<String> = (0..n_vnr).map(|j| format!("vnr_{j}")).collect();
        columns.push("eucd".into());
        columns.push("gain".into());
        FeatureTable {
            idx: records.iter().map(|r| r.idx).collect(),
            labels: records.iter().map(|r| r.label).collect(),
            columns,
            values: records
                .iter()
                .map(|r| {
                    r.vnr
                        .iter()
                        .chain([&r.eucd, &r.gain])
                        .map(|&v| Some(v))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, TableError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| TableError::MissingColumn(name.to_string()))
    }

    /// Appends causal window means of `base` columns, named
    /// `h{w}_{name}` with underscores removed from `name` (so `vnr_3`
    /// becomes `h5_vnr3`). Rows are assumed to be in temporal order.
    pub fn with_history(&self, base: &[&str], windows: &[usize]) -> Result<Self, TableError> {
        let cols = base
            .iter()
            .map(|b| self.column_index(b))
            .collect::<Result<Vec<_>, _>>()?;
        let series: Vec<Vec<f64>> = self
            .values
            .iter()
            .map(|row| cols.iter().map(|&c| row[c].unwrap_or(f64::NAN)).collect())
            .collect();
        let hist = history_features(&series, windows);
        let mut out = self.clone();
        for &w in windows {
            for b in base {
                out.columns.push(format!("h{w}_{}", b.replace('_', "")));
            }
        }
        for (row, h) in out.values.iter_mut().zip(hist) {
            for means in h {
                match means {
                    Some(m) => row.extend(m.into_iter().map(|v| v.is_finite().then_some(v))),
                    None => row.extend(std::iter::repeat(None).take(base.len())),
                }
            }
        }
        Ok(out)
    }

    /// Rows where every requested column is present.
    pub fn select(&self, names: &[String]) -> Result<Selection, TableError> {
        let cols = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<Vec<_>, _>>()?;
        let mut sel = Selection {
            x: Vec::new(),
            y: Vec::new(),
            rows: Vec::new(),
        };
        for (r, row) in self.values.iter().enumerate() {
            let x: Option<Vec<f64>> = cols.iter().map(|&c| row[c]).collect();
            if let Some(x) = x {
                sel.x.push(x);
                sel.y.push(self.labels[r]);
                sel.rows.push(r);
            }
        }
        if sel.rows.is_empty() {
            return Err(TableError::NoCompleteRows);
        }
        Ok(sel)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TableError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["idx".to_string(), "label".to_string()];
        header.extend(self.columns.iter().cloned());
        wr.write_record(&header)?;
        for r in 0..self.len() {
            let mut rec = vec![self.idx[r].to_string(), self.labels[r].to_string()];
            rec.extend(
                self.values[r]
                    .iter()
                    .map(|v| v.map(fmt_f64).unwrap_or_default()),
            );
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a table whose first two columns are `idx` and `label`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, TableError> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        for (i, want) in ["idx", "label"].iter().enumerate() {
            if header.get(i).map(String::as_str) != Some(*want) {
                return Err(TableError::MissingColumn(want.to_string()));
            }
        }
        let mut table = FeatureTable {
            columns: header[2..].to_vec(),
            ..Default::default()
        };
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |c: usize, v: &str| TableError::Parse {
                line,
                column: header.get(c).cloned().unwrap_or_default(),
                value: v.to_string(),
            };
            let idx = rec[0].trim().parse().map_err(|_| bad(0, &rec[0]))?;
            let label = match rec[1].trim() {
                "0" => 0,
                "1" => 1,
                v => return Err(bad(1, v)),
            };
            let values = (2..rec.len())
                .map(|c| {
                    let v = rec[c].trim();
                    if v.is_empty() {
                        Ok(None)
                    } else {
                        v.parse::<f64>().map(Some).map_err(|_| bad(c, v))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            table.idx.push(idx);
            table.labels.push(label);
            table.values.push(values);
        }
        Ok(table)
    }
}
