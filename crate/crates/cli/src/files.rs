use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// `path` itself, or the sorted `.json` files inside it (excluding reports).
pub fn instance_paths(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = json_files(path)?;
    out.retain(|p| !is_report(p));
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no instance files", path.display())));
    }
    Ok(out)
}

pub fn report_paths(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = json_files(dir)?;
    out.retain(|p| is_report(p));
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no report files", dir.display())));
    }
    Ok(out)
}

fn is_report(p: &Path) -> bool {
    p.to_string_lossy().ends_with(".report.json")
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// File name without `.json` (and without `.report` for reports).
pub fn stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let name = name.strip_suffix(".json").unwrap_or(&name);
    name.strip_suffix(".report").unwrap_or(name).to_string()
}
