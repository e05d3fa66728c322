//! Named-array checkpoint container: little-endian scalar data plus a
//! manifest of (name, shape, dtype) per entry. Round-trips bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::scalar::{Dtype, Scalar};
use crate::nn::tensor::{for_each_param, Parameterized};

const MAGIC: &[u8; 8] = b"FGCKPT1\0";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub bytes: Vec<u8>,
}

impl CheckpointEntry {
    pub fn from_scalars<S: Scalar>(name: &str, shape: &[usize], data: &[S]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        let mut bytes = Vec::with_capacity(data.len() * S::DTYPE.size());
        for &v in data {
            v.write_le(&mut bytes);
        }
        CheckpointEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            dtype: S::DTYPE,
            bytes,
        }
    }

    pub fn to_scalars<S: Scalar>(&self) -> Result<Vec<S>> {
        if self.dtype != S::DTYPE {
            return Err(Error::Validation(format!(
                "checkpoint entry {} has dtype {:?}, expected {:?}",
                self.name,
                self.dtype,
                S::DTYPE
            )));
        }
        let size = self.dtype.size();
        Ok(self.bytes.chunks_exact(size).map(S::read_le).collect())
    }

    pub fn scalar_count(&self) -> usize {
        self.shape.iter().product()
    }
}

pub fn write_checkpoint(path: &Path, entries: &[CheckpointEntry]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        let name = e.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(e.dtype.tag());
        buf.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
        for &d in &e.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        debug_assert_eq!(e.bytes.len(), e.scalar_count() * e.dtype.size());
        buf.extend_from_slice(&e.bytes);
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointEntry>> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(Error::Format {
                what: "checkpoint",
                detail: format!("truncated at byte {pos:?}", pos = *pos),
            });
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let magic = take(&mut pos, 8)?;
    if magic != MAGIC {
        return Err(Error::Format {
            what: "checkpoint",
            detail: "bad magic".into(),
        });
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec()).map_err(|_| {
            Error::Format {
                what: "checkpoint",
                detail: "entry name is not utf-8".into(),
            }
        })?;
        let tag = take(&mut pos, 1)?[0];
        let dtype = Dtype::from_tag(tag).ok_or(Error::Format {
            what: "checkpoint",
            detail: format!("unknown dtype tag {tag}"),
        })?;
        let ndim = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let n_bytes = shape.iter().product::<usize>() * dtype.size();
        let bytes = take(&mut pos, n_bytes)?.to_vec();
        entries.push(CheckpointEntry {
            name,
            shape,
            dtype,
            bytes,
        });
    }
    if pos != buf.len() {
        return Err(Error::Format {
            what: "checkpoint",
            detail: format!("{} trailing bytes", buf.len() - pos),
        });
    }
    Ok(entries)
}

/// Snapshot a module's parameters as checkpoint entries.
pub fn export_params<S: Scalar, M: Parameterized<S> + ?Sized>(
    model: &mut M,
) -> Vec<CheckpointEntry> {
    let mut out = Vec::new();
    for_each_param(model, |name, p| {
        out.push(CheckpointEntry::from_scalars(
            name,
            &p.value.shape,
            &p.value.data,
        ));
    });
    out
}

/// Fill a module's parameters from entries; every parameter must be present
/// with an exactly matching shape and dtype.
pub fn import_params<S: Scalar, M: Parameterized<S> + ?Sized>(
    model: &mut M,
    entries: &[CheckpointEntry],
) -> Result<()> {
    let map: BTreeMap<&str, &CheckpointEntry> =
        entries.iter().map(|e| (e.name.as_str(), e)).collect();
    let mut missing = Vec::new();
    let mut mismatched = Vec::new();
    let mut pending: Vec<(String, Vec<S>)> = Vec::new();
    for_each_param(model, |name, p| match map.get(name) {
        None => missing.push(name.to_string()),
        Some(e) => {
            if e.shape != p.value.shape || e.dtype != S::DTYPE {
                mismatched.push(format!(
                    "{name}: stored {:?} {:?}, model wants {:?} {:?}",
                    e.shape,
                    e.dtype,
                    p.value.shape,
                    S::DTYPE
                ));
            } else {
                pending.push((name.to_string(), e.to_scalars().expect("dtype checked")));
            }
        }
    });
    if !missing.is_empty() || !mismatched.is_empty() {
        return Err(Error::Validation(format!(
            "checkpoint does not match model: missing={missing:?} mismatched={mismatched:?}"
        )));
    }
    for (name, data) in pending {
        for_each_param(model, |n, p| {
            if n == name {
                p.value.data.copy_from_slice(&data);
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::{ActKind, Mlp};
    use crate::rng::RandomSource;

    fn temp_file(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("foleygen-test-{}-{}", std::process::id(), name));
        p
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = RandomSource::from_seed(77);
        let entries = vec![
            CheckpointEntry::from_scalars::<f32>("a.w", &[2, 3], &rng.normal_vec(6)),
            CheckpointEntry::from_scalars::<f64>("b", &[4], &rng.normal_vec(4)),
        ];
        let path = temp_file("ckpt-roundtrip.fgc");
        write_checkpoint(&path, &entries).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(entries, back);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn import_restores_model_exactly() {
        let mut rng = RandomSource::from_seed(13);
        let mut a = Mlp::<f32>::new(&[3, 4, 2], ActKind::Silu, &mut rng);
        let mut b = Mlp::<f32>::new(&[3, 4, 2], ActKind::Silu, &mut rng);
        let entries = export_params(&mut a);
        import_params(&mut b, &entries).unwrap();
        let x = vec![0.1, 0.2, 0.3];
        let (ya, _) = a.forward(&x).unwrap();
        let (yb, _) = b.forward(&x).unwrap();
        assert_eq!(ya, yb);
    }

    #[test]
    fn import_rejects_shape_mismatch() {
        let mut rng = RandomSource::from_seed(13);
        let mut a = Mlp::<f32>::new(&[3, 4, 2], ActKind::Silu, &mut rng);
        let mut b = Mlp::<f32>::new(&[3, 5, 2], ActKind::Silu, &mut rng);
        let entries = export_params(&mut a);
        let err = import_params(&mut b, &entries).unwrap_err();
        assert!(err.to_string().contains("mismatched"), "{err}");
    }

    #[test]
    fn read_rejects_bad_magic() {
        let path = temp_file("ckpt-bad-magic.fgc");
        std::fs::write(&path, b"NOTMAGIC\0\0\0\0").unwrap();
        assert!(read_checkpoint(&path).is_err());
        std::fs::remove_file(&path).ok();
    }
}
