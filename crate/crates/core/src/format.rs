//! Binary container shared by model and dataset files.
//!
//! ```text
//! magic      8 bytes        e.g. "KPCADON1" / "KPCADAT1" (last byte = format version)
//! meta_len   u64 LE
//! meta       meta_len bytes UTF-8 TOML
//! n_arrays   u32 LE
//! n_arrays x { rank u32 LE, dims rank x u64 LE, data prod(dims) x f64 LE, row-major }
//! ```
//!
//! Files must end exactly after the last array.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"KPCADON1";
pub const DATASET_MAGIC: &[u8; 8] = b"KPCADAT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub(crate) struct ContainerWriter {
    meta: String,
    magic: [u8; 8],
    arrays: Vec<u8>,
    count: u32,
}

impl ContainerWriter {
    pub fn new(magic: &[u8; 8], meta: String) -> Self {
        ContainerWriter {
            meta,
            magic: *magic,
            arrays: Vec::new(),
            count: 0,
        }
    }

    fn push(&mut self, shape: &[usize], data: impl Iterator<Item = f64>) {
        self.count += 1;
        self.arrays.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            self.arrays.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in data {
            self.arrays.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn array1(&mut self, a: &Array1<f64>) {
        self.push(&[a.len()], a.iter().copied());
    }

    pub fn array2(&mut self, a: &Array2<f64>) {
        let (r, c) = a.dim();
        // iter() walks in logical row-major order regardless of memory layout
        self.push(&[r, c], a.iter().copied());
    }

    pub fn scalars(&mut self, values: &[f64]) {
        self.push(&[values.len()], values.iter().copied());
    }

    pub fn finish(self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 + self.meta.len() + 4 + self.arrays.len());
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&(self.meta.len() as u64).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.arrays);
        out
    }
}

#[derive(Debug)]
pub(crate) struct ContainerReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    remaining: u32,
}

impl<'a> ContainerReader<'a> {
    /// Check the magic and read the metadata block.
    pub fn open(bytes: &'a [u8], magic: &[u8; 8]) -> Result<(Self, String)> {
        if bytes.len() < 8 {
            return Err(Error::Corrupt("file shorter than the 8-byte magic".into()));
        }
        let found = &bytes[..8];
        if found != magic {
            if found[..7] == magic[..7] {
                let version = (found[7] as char).to_digit(10).unwrap_or(u32::MAX);
                return Err(Error::VersionMismatch {
                    found: version,
                    supported: FORMAT_VERSION,
                });
            }
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let mut reader = ContainerReader {
            bytes,
            pos: 8,
            remaining: 0,
        };
        let meta_len = reader.u64("metadata length")? as usize;
        let meta_bytes = reader.take(meta_len, "metadata block")?;
        let meta = std::str::from_utf8(meta_bytes)
            .map_err(|_| Error::Corrupt("metadata is not UTF-8".into()))?
            .to_string();
        reader.remaining = reader.u32("array count")?;
        Ok((reader, meta))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn next_array(&mut self, what: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        if self.remaining == 0 {
            return Err(Error::Corrupt(format!("missing array '{what}'")));
        }
        self.remaining -= 1;
        let rank = self.u32(what)? as usize;
        if rank > 8 {
            return Err(Error::Corrupt(format!("array '{what}' has implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut count: usize = 1;
        for _ in 0..rank {
            let d = self.u64(what)? as usize;
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::Corrupt(format!("array '{what}' size overflows")))?;
            shape.push(d);
        }
        let bytes_needed = count
            .checked_mul(8)
            .ok_or_else(|| Error::Corrupt(format!("array '{what}' size overflows")))?;
        let raw = self.take(bytes_needed, what)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((shape, data))
    }

    pub fn array1(&mut self, what: &str) -> Result<Array1<f64>> {
        let (shape, data) = self.next_array(what)?;
        if shape.len() != 1 {
            return Err(Error::Corrupt(format!("array '{what}' should have rank 1, has {}", shape.len())));
        }
        Ok(Array1::from_vec(data))
    }

    pub fn array1_len(&mut self, what: &str, len: usize) -> Result<Array1<f64>> {
        let a = self.array1(what)?;
        if a.len() != len {
            return Err(Error::Corrupt(format!("array '{what}' has length {}, expected {len}", a.len())));
        }
        Ok(a)
    }

    pub fn array2(&mut self, what: &str) -> Result<Array2<f64>> {
        let (shape, data) = self.next_array(what)?;
        if shape.len() != 2 {
            return Err(Error::Corrupt(format!("array '{what}' should have rank 2, has {}", shape.len())));
        }
        Ok(Array2::from_shape_vec((shape[0], shape[1]), data).expect("length checked"))
    }

    pub fn array2_shape(&mut self, what: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let a = self.array2(what)?;
        if a.dim() != (rows, cols) {
            return Err(Error::Corrupt(format!(
                "array '{what}' has shape {:?}, expected ({rows}, {cols})",
                a.dim()
            )));
        }
        Ok(a)
    }

    pub fn finish(self) -> Result<()> {
        if self.remaining != 0 {
            return Err(Error::Corrupt(format!("{} unexpected trailing arrays", self.remaining)));
        }
        if self.pos != self.bytes.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after the last array",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_meta<T: serde::de::DeserializeOwned>(meta: &str) -> Result<T> {
    toml::from_str(meta).map_err(|e| Error::Corrupt(format!("metadata: {e}")))
}

pub(crate) fn render_meta<T: serde::Serialize>(meta: &T) -> String {
    toml::to_string(meta).expect("metadata is always representable as TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_and_truncation() {
        let mut w = ContainerWriter::new(MODEL_MAGIC, "a = 1\n".into());
        w.array2(&array![[1.0, -0.0], [f64::MIN_POSITIVE, 3.5e300]]);
        w.array1(&array![0.1, 0.2]);
        let bytes = w.finish();
        let (mut r, meta) = ContainerReader::open(&bytes, MODEL_MAGIC).unwrap();
        assert_eq!(meta, "a = 1\n");
        let a = r.array2("a").unwrap();
        assert_eq!(a[[0, 1]].to_bits(), (-0.0f64).to_bits());
        assert_eq!(a[[1, 1]], 3.5e300);
        assert_eq!(r.array1("b").unwrap(), array![0.1, 0.2]);
        r.finish().unwrap();

        for cut in [3, 12, 20, bytes.len() - 1] {
            let res = ContainerReader::open(&bytes[..cut], MODEL_MAGIC).and_then(|(mut r, _)| {
                r.array2("a")?;
                r.array1("b")?;
                r.finish()
            });
            assert!(matches!(res, Err(Error::Corrupt(_))), "cut {cut}");
        }
    }

    #[test]
    fn magic_and_version_errors() {
        let bytes = ContainerWriter::new(DATASET_MAGIC, String::new()).finish();
        assert!(matches!(
            ContainerReader::open(&bytes, MODEL_MAGIC),
            Err(Error::BadMagic { .. })
        ));
        let mut v2 = bytes.clone();
        v2[..8].copy_from_slice(b"KPCADAT2");
        assert!(matches!(
            ContainerReader::open(&v2, DATASET_MAGIC),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
    }
}
