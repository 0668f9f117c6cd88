//! Reader and writer for the alist sparse-matrix format.
//!
//! Layout: `n_vars n_checks`, `max_col_degree max_row_degree`, the column
//! degrees, the row degrees, one line per column listing its checks, then one
//! line per row listing its variables. Indices are 1-based and a `0` entry is
//! padding. Blank lines are ignored.

use std::fmt::Write;

use super::{LdpcError, ParityCheckMatrix};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line as `(1-based line number, integers)`.
    fn next_ints(&mut self, section: &str) -> Result<(usize, Vec<usize>), LdpcError> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let ints = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|_| LdpcError::Parse {
                        line: i + 1,
                        message: format!("{section}: invalid integer '{tok}'"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Ok((i + 1, ints));
        }
        Err(LdpcError::Parse {
            line: self.last + 1,
            message: format!("{section}: unexpected end of input"),
        })
    }
}

fn expect_len(line: usize, section: &str, got: &[usize], want: usize) -> Result<(), LdpcError> {
    if got.len() != want {
        return Err(LdpcError::Parse {
            line,
            message: format!("{section}: expected {want} entries, found {}", got.len()),
        });
    }
    Ok(())
}

/// Reads neighbour lists for `count` nodes, checking degrees and ranges.
fn read_lists(
    lines: &mut Lines<'_>,
    section: &str,
    degrees: &[usize],
    max_index: usize,
) -> Result<Vec<Vec<usize>>, LdpcError> {
    let mut out = Vec::with_capacity(degrees.len());
    for (node, &deg) in degrees.iter().enumerate() {
        let (line, ints) = lines.next_ints(section).map_err(|e| match e {
            LdpcError::Parse { line, .. } => LdpcError::Parse {
                line,
                message: format!("{section}: expected {} lists, found {node}", degrees.len()),
            },
            other => other,
        })?;
        let mut list = Vec::with_capacity(deg);
        for &idx in &ints {
            if idx == 0 {
                continue;
            }
            if idx > max_index {
                return Err(LdpcError::Parse {
                    line,
                    message: format!("{section}: index {idx} out of range 1..={max_index}"),
                });
            }
            list.push(idx - 1);
        }
        if list.len() != deg {
            return Err(LdpcError::Parse {
                line,
                message: format!(
                    "{section}: node {} declares degree {deg} but lists {}",
                    node + 1,
                    list.len()
                ),
            });
        }
        out.push(list);
    }
    Ok(out)
}

/// Parses an alist description into a [`ParityCheckMatrix`].
pub fn parse_alist(text: &str) -> Result<ParityCheckMatrix, LdpcError> {
    let mut lines = Lines::new(text);

    let (line, header) = lines.next_ints("header")?;
    expect_len(line, "header", &header, 2)?;
    let (n_vars, n_checks) = (header[0], header[1]);
    if n_vars == 0 || n_checks == 0 {
        return Err(LdpcError::Parse {
            line,
            message: "header: dimensions must be positive".into(),
        });
    }

    let (line, max_deg) = lines.next_ints("max degrees")?;
    expect_len(line, "max degrees", &max_deg, 2)?;

    let (line, col_deg) = lines.next_ints("column degrees")?;
    expect_len(line, "column degrees", &col_deg, n_vars)?;
    let (line, row_deg) = lines.next_ints("row degrees")?;
    expect_len(line, "row degrees", &row_deg, n_checks)?;
    if col_deg.iter().any(|&d| d > max_deg[0]) || row_deg.iter().any(|&d| d > max_deg[1]) {
        return Err(LdpcError::Parse {
            line,
            message: "degree exceeds declared maximum".into(),
        });
    }

    let cols = read_lists(&mut lines, "column neighbour lists", &col_deg, n_checks)?;
    let rows = read_lists(&mut lines, "row neighbour lists", &row_deg, n_vars)?;
    let rows_end = lines.last;

    let h = ParityCheckMatrix::from_rows(n_vars, rows).map_err(|e| LdpcError::Parse {
        line: rows_end,
        message: e.to_string(),
    })?;
    for (k, col) in cols.into_iter().enumerate() {
        let mut col = col;
        col.sort_unstable();
        if col != h.var_checks(k) {
            return Err(LdpcError::Parse {
                line: rows_end,
                message: format!("column {} disagrees with the row lists", k + 1),
            });
        }
    }
    Ok(h)
}

/// Serialises a matrix to alist text. Padding zeros are never written.
pub fn write_alist(h: &ParityCheckMatrix) -> String {
    let mut out = String::new();
    let col_deg: Vec<usize> = h.columns().iter().map(Vec::len).collect();
    let row_deg: Vec<usize> = h.rows().iter().map(Vec::len).collect();
    let join =
        |v: &mut dyn Iterator<Item = usize>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "{} {}", h.n_vars(), h.n_checks());
    let _ = writeln!(
        out,
        "{} {}",
        col_deg.iter().max().unwrap_or(&0),
        row_deg.iter().max().unwrap_or(&0)
    );
    let _ = writeln!(out, "{}", join(&mut col_deg.iter().copied()));
    let _ = writeln!(out, "{}", join(&mut row_deg.iter().copied()));
    for col in h.columns() {
        let _ = writeln!(out, "{}", join(&mut col.iter().map(|m| m + 1)));
    }
    for row in h.rows() {
        let _ = writeln!(out, "{}", join(&mut row.iter().map(|k| k + 1)));
    }
    out
}
