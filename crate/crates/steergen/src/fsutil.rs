//! Write-temp-then-rename file output, shared by model and pipeline writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Atomically replace `path` with `contents`: write a sibling temp file, then
/// rename over the target. Readers never observe a partial file.
pub(crate) fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::io(format!("write {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(format!("rename to {}", path.display()), e)
    })
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))
}

/// Read a UTF-8 text file as one document per line.
pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_to_string(path)?.lines().map(str::to_string).collect())
}
