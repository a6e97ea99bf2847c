// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flat little-endian tensor files and their manifest entries.

use std::fs;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    U32,
}

impl DType {
    pub const fn size(self) -> u64 {
        4
    }
}

/// One tensor file declared in a manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub dtype: DType,
    #[serde(default)]
    pub offset: u64,
    pub elements: u64,
    pub shape: Vec<usize>,
}

impl TensorEntry {
    pub fn new(
        name: impl Into<String>,
        file: impl Into<String>,
        dtype: DType,
        shape: Vec<usize>,
    ) -> Self {
        let elements = shape.iter().product::<usize>() as u64;
        Self {
            name: name.into(),
            file: file.into(),
            dtype,
            offset: 0,
            elements,
            shape,
        }
    }

    pub fn expected_file_len(&self) -> u64 {
        self.offset + self.elements * self.dtype.size()
    }
}

/// Rejects file names that would escape the bundle directory.
pub(crate) fn check_relative(file: &str) -> Result<()> {
    let p = Path::new(file);
    let ok = !file.is_empty()
        && p.components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidBundle(format!(
            "tensor file name {file:?} must be relative"
        )))
    }
}

/// Checks that the file exists and its length matches the entry exactly.
pub(crate) fn check_size(dir: &Path, entry: &TensorEntry) -> Result<()> {
    check_relative(&entry.file)?;
    let path = dir.join(&entry.file);
    let meta = match fs::metadata(&path) {
        Ok(m) => m,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path)),
        Err(e) => return Err(Error::io(path, e)),
    };
    let expected = entry.expected_file_len();
    if meta.len() != expected {
        return Err(Error::SizeMismatch {
            file: path,
            expected,
            actual: meta.len(),
        });
    }
    Ok(())
}

fn read_payload(dir: &Path, entry: &TensorEntry, dtype: DType) -> Result<Vec<u8>> {
    if entry.dtype != dtype {
        return Err(Error::InvalidBundle(format!(
            "tensor {} has dtype {:?}, expected {:?}",
            entry.name, entry.dtype, dtype
        )));
    }
    check_size(dir, entry)?;
    let path = dir.join(&entry.file);
    let mut f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    f.seek(SeekFrom::Start(entry.offset))
        .map_err(|e| Error::io(&path, e))?;
    let mut buf = vec![0u8; (entry.elements * dtype.size()) as usize];
    f.read_exact(&mut buf).map_err(|e| Error::io(&path, e))?;
    Ok(buf)
}

pub(crate) fn read_f32(dir: &Path, entry: &TensorEntry) -> Result<Vec<f32>> {
    let buf = read_payload(dir, entry, DType::F32)?;
    Ok(buf
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub(crate) fn read_u32(dir: &Path, entry: &TensorEntry) -> Result<Vec<u32>> {
    let buf = read_payload(dir, entry, DType::U32)?;
    Ok(buf
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn write_bytes(path: &Path, words: impl Iterator<Item = [u8; 4]>) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for b in words {
        w.write_all(&b).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    write_bytes(path, values.iter().map(|v| v.to_le_bytes()))
}

pub(crate) fn write_u32(path: &Path, values: &[u32]) -> Result<()> {
    write_bytes(path, values.iter().map(|v| v.to_le_bytes()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_bytes_decode_independent_of_host() {
        let dir = tempfile::tempdir().unwrap();
        // 1.0f32 = 0x3F800000, -2.5f32 = 0xC0200000, little-endian on disk
        let bytes = [0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x20, 0xC0];
        fs::write(dir.path().join("t.f32"), bytes).unwrap();
        let entry = TensorEntry::new("t", "t.f32", DType::F32, vec![2]);
        assert_eq!(read_f32(dir.path(), &entry).unwrap(), vec![1.0, -2.5]);

        fs::write(dir.path().join("l.u32"), [0x01, 0, 0, 0, 0x00, 0x01, 0, 0]).unwrap();
        let entry = TensorEntry::new("l", "l.u32", DType::U32, vec![2]);
        assert_eq!(read_u32(dir.path(), &entry).unwrap(), vec![1, 256]);
    }

    #[test]
    fn honors_offset() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = vec![0xAA; 4];
        bytes.extend_from_slice(&7.0f32.to_le_bytes());
        fs::write(dir.path().join("t.f32"), bytes).unwrap();
        let mut entry = TensorEntry::new("t", "t.f32", DType::F32, vec![1]);
        entry.offset = 4;
        assert_eq!(read_f32(dir.path(), &entry).unwrap(), vec![7.0]);
    }

    #[test]
    fn rejects_escaping_paths() {
        assert!(check_relative("../x.f32").is_err());
        assert!(check_relative("/etc/passwd").is_err());
        assert!(check_relative("layer_0.f32").is_ok());
    }
}
