//! Table writers for CSV and JSON output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::args::OutputFormat;
use crate::error::CliError;

pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(io::Error::other(e))
}

/// Writes `rows` as CSV, or as `{<key>: rows, ..extra}` JSON.
pub fn write_table<R: Serialize>(
    out: &mut dyn Write,
    format: OutputFormat,
    key: &str,
    rows: &[R],
    extra: serde_json::Map<String, serde_json::Value>,
) -> Result<(), CliError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row).map_err(csv_err)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut doc = extra;
            doc.insert(
                key.into(),
                serde_json::to_value(rows).map_err(io::Error::other)?,
            );
            serde_json::to_writer_pretty(&mut *out, &doc).map_err(io::Error::other)?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn gnuplot_script(csv_path: &Path, units: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'F'\n\
         set ylabel 'MMI ({units})'\n\
         plot '{}' using 1:2 with lines\n",
        csv_path.display()
    )
}
