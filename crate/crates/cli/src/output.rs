//! Output files with provenance lines, and CSV tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::RunConfig;
use crate::CliError;

/// Lossless float text (`{:e}` round-trips through `parse`).
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Opens `path` for writing and emits the provenance line plus one comment
/// line per note. The parent directory must exist.
pub fn create(path: &Path, cfg: &RunConfig, notes: &[String]) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(CliError::io(format!("output directory {} does not exist", dir.display())));
        }
    }
    let f = File::create(path).map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "{}", cfg.provenance())?;
    for n in notes {
        writeln!(w, "# {n}")?;
    }
    Ok(w)
}

pub fn write_csv(
    path: &Path,
    cfg: &RunConfig,
    notes: &[String],
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let w = create(path, cfg, notes)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(header)?;
    for r in rows {
        c.write_record(r)?;
    }
    c.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column as floats; `Ok(None)` when absent.
    pub fn floats(&self, name: &str) -> Result<Option<Vec<f64>>, CliError> {
        let Some(c) = self.column(name) else { return Ok(None) };
        self.rows
            .iter()
            .map(|r| {
                let s = r.get(c).map(String::as_str).unwrap_or("");
                s.trim().parse::<f64>().map_err(|_| CliError::io(format!("column {name}: bad number '{s}'")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

pub fn read_csv(path: &Path) -> Result<Table, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(f);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()?;
    Ok(Table { header, rows })
}
