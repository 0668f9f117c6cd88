use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::Context;
use eharq::features::HISTORY_WINDOWS;
use eharq::io::{FeatureTable, Selection, TableError};

use crate::config_error;

pub fn load(path: &Path) -> anyhow::Result<FeatureTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    FeatureTable::read_csv(BufReader::new(file)).map_err(|e| match e {
        TableError::Io(_) => anyhow::Error::from(e),
        _ => config_error(format!("{}: {e}", path.display())),
    })
}

/// Splits `h{w}_{base}` into the window and the base column it averages.
fn history_column(name: &str, table: &FeatureTable) -> Option<(usize, String)> {
    let rest = name.strip_prefix('h')?;
    let (w, base) = rest.split_once('_')?;
    let w: usize = w.parse().ok()?;
    let column = table
        .columns
        .iter()
        .find(|c| c.replace('_', "") == base)?
        .clone();
    Some((w, column))
}

/// Adds any requested history columns the table lacks, then selects the
/// complete rows.
pub fn select(table: &FeatureTable, names: &[String]) -> anyhow::Result<Selection> {
    let mut table = table.clone();
    for name in names {
        if table.column_index(name).is_ok() {
            continue;
        }
        let Some((w, base)) = history_column(name, &table) else {
            return Err(config_error(format!("missing column {name:?}")));
        };
        if !HISTORY_WINDOWS.contains(&w) {
            log::warn!("history window {w} is not one of {HISTORY_WINDOWS:?}");
        }
        table = table.with_history(&[base.as_str()], &[w])?;
    }
    table.select(names).map_err(|e| config_error(e.to_string()))
}
