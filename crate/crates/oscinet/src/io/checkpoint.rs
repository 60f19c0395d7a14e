//! Versioned binary model container.
//!
//! Layout: magic `MSON`, format version (u32 LE), spec length (u64 LE), the
//! architecture as canonical JSON, then every parameter tensor as raw
//! little-endian float64 in canonical order. Tensor shapes are implied by
//! the spec, so the total byte count is checked before anything is read.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nets::{DeepOnetSpec, LayerParams, MlpParams, MlpSpec, ModelParams};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MSON";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialize spec + parameters into the container format.
pub fn checkpoint_to_bytes(spec: &DeepOnetSpec, params: &ModelParams) -> Result<Vec<u8>> {
    params.matches(spec)?;
    let spec_json = serde_json::to_string(spec)
        .map_err(|e| Error::Parse(format!("spec serialization failed: {e}")))?;
    let tensors = params.tensors();
    let total: usize = tensors.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(16 + spec_json.len() + 8 * total);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec_json.len() as u64).to_le_bytes());
    out.extend_from_slice(spec_json.as_bytes());
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Expected parameter tensor shapes for one sub-network.
fn layer_shapes(spec: &MlpSpec) -> Vec<(Vec<usize>, bool)> {
    (0..spec.n_layers())
        .map(|i| {
            (
                vec![spec.widths[i], spec.widths[i + 1]],
                spec.layer_has_bias(i),
            )
        })
        .collect()
}

fn checked_total_values(spec: &DeepOnetSpec) -> Result<usize> {
    let mlp_values = |m: &MlpSpec| -> Option<usize> {
        let mut acc = 0usize;
        for i in 0..m.n_layers() {
            acc = acc.checked_add(m.widths[i].checked_mul(m.widths[i + 1])?)?;
            if m.layer_has_bias(i) {
                acc = acc.checked_add(m.widths[i + 1])?;
            }
        }
        Some(acc)
    };
    let branch = mlp_values(&spec.branch)
        .ok_or_else(|| Error::Integrity("branch parameter count overflows".into()))?;
    let trunk = mlp_values(&spec.trunk)
        .ok_or_else(|| Error::Integrity("trunk parameter count overflows".into()))?;
    let stacks = spec.branch_stacks() * spec.branch_scales.len();
    stacks
        .checked_mul(branch)
        .and_then(|b| spec.trunk_scales.len().checked_mul(trunk).map(|t| (b, t)))
        .and_then(|(b, t)| b.checked_add(t))
        .filter(|&n| n <= (1usize << 33))
        .ok_or_else(|| Error::Integrity("parameter payload exceeds supported size".into()))
}

/// Parse a container. Never panics on malformed input; every length is
/// validated before the corresponding allocation.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(DeepOnetSpec, ModelParams)> {
    if bytes.len() < 16 {
        return Err(Error::Integrity(format!(
            "container header needs 16 bytes, got {}",
            bytes.len()
        )));
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::Integrity("bad magic (expected MSON)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version > CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let spec_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let rest = &bytes[16..];
    if spec_len > rest.len() as u64 {
        return Err(Error::Integrity(format!(
            "spec block claims {spec_len} bytes, only {} available",
            rest.len()
        )));
    }
    let spec_len = spec_len as usize;
    let spec_json = std::str::from_utf8(&rest[..spec_len])
        .map_err(|e| Error::Parse(format!("spec block is not UTF-8: {e}")))?;
    let spec: DeepOnetSpec = serde_json::from_str(spec_json)
        .map_err(|e| Error::Parse(format!("spec block: {e}")))?;
    spec.validate()?;

    let total = checked_total_values(&spec)?;
    let payload = &rest[spec_len..];
    let expected_bytes = total * 8;
    if payload.len() != expected_bytes {
        return Err(Error::Integrity(format!(
            "parameter payload: expected {expected_bytes} bytes, got {}",
            payload.len()
        )));
    }

    let mut cursor = payload;
    let mut read_tensor = |shape: Vec<usize>| -> Tensor {
        let n: usize = shape.iter().product();
        let (head, tail) = cursor.split_at(n * 8);
        cursor = tail;
        let data = head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_parts(shape, data)
    };
    let mut read_mlp = |mlp: &MlpSpec| -> MlpParams {
        MlpParams {
            layers: layer_shapes(mlp)
                .into_iter()
                .map(|(shape, has_bias)| {
                    let out_width = shape[1];
                    LayerParams {
                        weight: read_tensor(shape),
                        bias: has_bias.then(|| read_tensor(vec![out_width])),
                    }
                })
                .collect(),
        }
    };

    let branch_re: Vec<MlpParams> = (0..spec.branch_scales.len())
        .map(|_| read_mlp(&spec.branch))
        .collect();
    let branch_im: Vec<MlpParams> = if spec.complex_output {
        (0..spec.branch_scales.len())
            .map(|_| read_mlp(&spec.branch))
            .collect()
    } else {
        Vec::new()
    };
    let trunk: Vec<MlpParams> = (0..spec.trunk_scales.len())
        .map(|_| read_mlp(&spec.trunk))
        .collect();

    let params = ModelParams {
        branch_re,
        branch_im,
        trunk,
    };
    params.matches(&spec)?;
    Ok((spec, params))
}

/// Write a checkpoint atomically (temp file in the same directory, rename).
pub fn write_checkpoint(spec: &DeepOnetSpec, params: &ModelParams, path: &Path) -> Result<()> {
    let bytes = checkpoint_to_bytes(spec, params)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into()),
        std::process::id()
    ));
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(DeepOnetSpec, ModelParams)> {
    let bytes = std::fs::read(path)?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{init_parameters, ScaleSet};
    use crate::tensor::Activation;

    fn spec(complex_output: bool) -> DeepOnetSpec {
        DeepOnetSpec {
            branch: MlpSpec::new(vec![7, 6, 9], Activation::Tanh),
            trunk: MlpSpec::new(vec![1, 5, 4], Activation::Sin),
            branch_scales: ScaleSet::new(vec![1.0, 2.0]).unwrap(),
            trunk_scales: ScaleSet::new(vec![1.0, 4.0]).unwrap(),
            n_t: 4,
            complex_output,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        for complex_output in [false, true] {
            let s = spec(complex_output);
            let p = init_parameters(&s, 99).unwrap();
            let bytes = checkpoint_to_bytes(&s, &p).unwrap();
            let (s2, p2) = checkpoint_from_bytes(&bytes).unwrap();
            assert_eq!(s, s2);
            assert_eq!(p, p2);
            let bytes2 = checkpoint_to_bytes(&s2, &p2).unwrap();
            assert_eq!(bytes, bytes2);
        }
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let s = spec(false);
        let p = init_parameters(&s, 1).unwrap();
        let bytes = checkpoint_to_bytes(&s, &p).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            checkpoint_from_bytes(&bad),
            Err(Error::Integrity(_))
        ));

        let mut future = bytes.clone();
        future[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            checkpoint_from_bytes(&future),
            Err(Error::Version { found: 99, .. })
        ));

        let truncated = &bytes[..bytes.len() - 5];
        match checkpoint_from_bytes(truncated) {
            Err(Error::Integrity(msg)) => {
                assert!(msg.contains("expected") && msg.contains("got"), "{msg}")
            }
            other => panic!("expected integrity error, got {other:?}"),
        }

        assert!(checkpoint_from_bytes(&bytes[..10]).is_err());
        assert!(checkpoint_from_bytes(b"").is_err());
    }

    #[test]
    fn spec_length_overflow_is_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        bytes.extend_from_slice(b"{}");
        assert!(matches!(
            checkpoint_from_bytes(&bytes),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mson");
        let s = spec(true);
        let p = init_parameters(&s, 4).unwrap();
        write_checkpoint(&s, &p, &path).unwrap();
        let (s2, p2) = read_checkpoint(&path).unwrap();
        assert_eq!((s, p), (s2, p2));
    }
}
