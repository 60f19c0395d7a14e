//! On-disk dataset directory.
//!
//! `manifest.json` (UTF-8 JSON) plus raw little-endian float64 arrays:
//! `sensors.f64`, `queries.f64`, `train_in.f64`, `test_in.f64`,
//! `train_out_re.f64`, `test_out_re.f64` and the `_im` variants for complex
//! outputs. Row-major, sizes implied by the manifest and verified on read.

use std::path::Path;

use crate::data::{DatasetManifest, OperatorDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_f64_file(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let meta = std::fs::metadata(path)?;
    let expected_bytes = expected as u64 * 8;
    if meta.len() != expected_bytes {
        return Err(Error::Integrity(format!(
            "{}: expected {expected_bytes} bytes, got {}",
            path.display(),
            meta.len()
        )));
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() as u64 != expected_bytes {
        return Err(Error::Integrity(format!(
            "{}: expected {expected_bytes} bytes, read {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Serialize the manifest in its canonical on-disk form.
pub fn manifest_to_string(manifest: &DatasetManifest) -> Result<String> {
    serde_json::to_string_pretty(manifest)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Parse(format!("manifest serialization failed: {e}")))
}

/// Parse and validate a manifest document.
pub fn manifest_from_str(text: &str) -> Result<DatasetManifest> {
    let manifest: DatasetManifest =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Write a dataset directory atomically: everything goes into a temp sibling
/// which replaces the destination only once complete.
pub fn write_dataset(dataset: &OperatorDataset, dir: &Path) -> Result<()> {
    let manifest = &dataset.manifest;
    manifest.validate()?;
    let parent = dir.parent().unwrap_or_else(|| Path::new("."));
    if !parent.as_os_str().is_empty() {
        std::fs::create_dir_all(parent)?;
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    std::fs::create_dir_all(&tmp)?;

    std::fs::write(tmp.join("manifest.json"), manifest_to_string(manifest)?)?;
    std::fs::write(tmp.join("sensors.f64"), f64s_to_bytes(&dataset.sensors))?;
    std::fs::write(tmp.join("queries.f64"), f64s_to_bytes(&dataset.queries))?;
    std::fs::write(tmp.join("train_in.f64"), f64s_to_bytes(dataset.train_in.data()))?;
    std::fs::write(tmp.join("test_in.f64"), f64s_to_bytes(dataset.test_in.data()))?;
    std::fs::write(
        tmp.join("train_out_re.f64"),
        f64s_to_bytes(dataset.train_out_re.data()),
    )?;
    std::fs::write(
        tmp.join("test_out_re.f64"),
        f64s_to_bytes(dataset.test_out_re.data()),
    )?;
    if let (Some(tr), Some(te)) = (&dataset.train_out_im, &dataset.test_out_im) {
        std::fs::write(tmp.join("train_out_im.f64"), f64s_to_bytes(tr.data()))?;
        std::fs::write(tmp.join("test_out_im.f64"), f64s_to_bytes(te.data()))?;
    }

    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::rename(&tmp, dir)?;
    Ok(())
}

/// Read a dataset directory back, verifying every array length.
pub fn read_dataset(dir: &Path) -> Result<OperatorDataset> {
    let manifest_text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest = manifest_from_str(&manifest_text)?;

    let m = manifest.n_sensors;
    let q = manifest.n_queries;
    let sensors = read_f64_file(&dir.join("sensors.f64"), m)?;
    let queries = read_f64_file(&dir.join("queries.f64"), q)?;
    let read_matrix = |name: &str, rows: usize, cols: usize| -> Result<Tensor> {
        let data = read_f64_file(&dir.join(name), rows * cols)?;
        Ok(Tensor::from_parts(vec![rows, cols], data))
    };
    let train_in = read_matrix("train_in.f64", manifest.n_train, m)?;
    let test_in = read_matrix("test_in.f64", manifest.n_test, m)?;
    let train_out_re = read_matrix("train_out_re.f64", manifest.n_train, q)?;
    let test_out_re = read_matrix("test_out_re.f64", manifest.n_test, q)?;
    let (train_out_im, test_out_im) = if manifest.complex_outputs() {
        (
            Some(read_matrix("train_out_im.f64", manifest.n_train, q)?),
            Some(read_matrix("test_out_im.f64", manifest.n_test, q)?),
        )
    } else {
        (None, None)
    };

    Ok(OperatorDataset {
        manifest,
        sensors,
        queries,
        train_in,
        test_in,
        train_out_re,
        test_out_re,
        train_out_im,
        test_out_im,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, DatasetConfig};

    fn small_map_dataset() -> OperatorDataset {
        let mut config = DatasetConfig::nonlinear_map(3, 4);
        config.n_train = 5;
        config.n_test = 2;
        config.n_sensors = 7;
        config.n_queries = 6;
        config.seed = 11;
        build_dataset(&config).unwrap()
    }

    #[test]
    fn roundtrip_bit_exact_and_idempotent() {
        let ds = small_map_dataset();
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("ds");
        write_dataset(&ds, &target).unwrap();
        let back = read_dataset(&target).unwrap();
        assert_eq!(ds, back);

        let manifest_bytes = std::fs::read(target.join("manifest.json")).unwrap();
        let array_bytes = std::fs::read(target.join("train_out_re.f64")).unwrap();
        write_dataset(&ds, &target).unwrap();
        assert_eq!(std::fs::read(target.join("manifest.json")).unwrap(), manifest_bytes);
        assert_eq!(std::fs::read(target.join("train_out_re.f64")).unwrap(), array_bytes);
    }

    #[test]
    fn helmholtz_roundtrip_includes_imaginary_parts() {
        let mut config = DatasetConfig::helmholtz(2, 5.0);
        config.n_train = 3;
        config.n_test = 1;
        config.n_sensors = 6;
        config.n_queries = 5;
        config.mesh_elements = Some(32);
        let ds = build_dataset(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("h");
        write_dataset(&ds, &target).unwrap();
        assert!(target.join("train_out_im.f64").exists());
        assert_eq!(read_dataset(&target).unwrap(), ds);
    }

    #[test]
    fn truncated_array_reports_byte_counts() {
        let ds = small_map_dataset();
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("ds");
        write_dataset(&ds, &target).unwrap();
        let victim = target.join("train_in.f64");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() - 8]).unwrap();
        match read_dataset(&target) {
            Err(Error::Integrity(msg)) => {
                assert!(msg.contains("280") && msg.contains("272"), "{msg}");
            }
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn future_manifest_version_is_a_migration_error() {
        let ds = small_map_dataset();
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("ds");
        write_dataset(&ds, &target).unwrap();
        let manifest_path = target.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        std::fs::write(&manifest_path, text).unwrap();
        assert!(matches!(
            read_dataset(&target),
            Err(Error::Version { found: 2, .. })
        ));
    }

    #[test]
    fn manifest_text_is_stable() {
        let ds = small_map_dataset();
        let a = manifest_to_string(&ds.manifest).unwrap();
        let b = manifest_to_string(&manifest_from_str(&a).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
