//! File helpers that classify failures: unreadable inputs are input errors,
//! unwritable outputs are I/O errors.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use ipr_core::SplitDataset;
use serde::de::DeserializeOwned;

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses and validates a dataset file.
pub fn load_dataset(path: &Path) -> CliResult<SplitDataset> {
    let bytes = read_bytes(path)?;
    let ds = SplitDataset::from_jsonl(Cursor::new(bytes), Some(path))?;
    ds.validate()?;
    Ok(ds)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Refuses to replace an existing file unless `force` is set.
pub fn check_overwrite(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::Input(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}
