//! File formats: dataset directories and model checkpoints.

mod checkpoint;
mod dataset;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, read_checkpoint, write_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use dataset::{manifest_from_str, manifest_to_string, read_dataset, write_dataset};

use std::path::Path;

/// Write a file atomically: temp sibling first, rename on success, so a
/// failure never leaves a partial artifact behind.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> crate::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "file".into());
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
