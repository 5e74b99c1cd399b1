//! Two-column CSV input for the calibration subcommands.

use std::path::Path;

use crate::error::CliError;

/// Reads a headed CSV with two numeric columns.
pub fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if record.len() != 2 {
            return Err(CliError::Config(format!(
                "{} row {}: expected 2 columns, found {}",
                path.display(),
                line + 1,
                record.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| CliError::Config(format!("{} row {}: {s:?}: {e}", path.display(), line + 1)))
        };
        xs.push(parse(&record[0])?);
        ys.push(parse(&record[1])?);
    }
    Ok((xs, ys))
}
