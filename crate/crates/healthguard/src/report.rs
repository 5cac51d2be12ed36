use std::path::{Path, PathBuf};

use healthguard_core::eval::{render_csv, render_table, ExperimentResult};

use crate::error::CliError;

/// Writes `<experiment>.txt` and `<experiment>.csv` into `dir`, creating it if needed.
pub fn write(result: &ExperimentResult, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    if result.records.is_empty() {
        return Err(CliError::Usage("no results to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = result.experiment.name();
    let table = dir.join(format!("{name}.txt"));
    let csv = dir.join(format!("{name}.csv"));
    std::fs::write(&table, render_table(result)).map_err(|e| CliError::io(&table, e))?;
    std::fs::write(&csv, render_csv(result)).map_err(|e| CliError::io(&csv, e))?;
    Ok((table, csv))
}
