//! The `BWNT` checkpoint container: named f32 tensors in a flat binary file.
//!
//! Layout (all integers little-endian):
//! magic `BWNT` | u32 version (= 1) | u32 tensor count | per tensor:
//! u16 name length, UTF-8 name, u8 rank, rank x u32 extents,
//! extent-product x f32 values.
//!
//! Save -> load round-trips are bit-exact. The same container stores
//! encoders, heads, vocabularies, and optimizer state.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"BWNT";
const VERSION: u32 = 1;

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Checkpoint {
        Checkpoint::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        debug_assert!(
            !self.entries.iter().any(|(n, _)| *n == name),
            "duplicate tensor name {name}"
        );
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::Format {
            offset: 0,
            message: format!("checkpoint is missing tensor {name:?}"),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            let name_bytes = name.as_bytes();
            w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
            w.write_all(name_bytes)?;
            w.write_all(&[t.rank() as u8])?;
            for &e in t.shape() {
                w.write_all(&(e as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };

        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(r.format_err("bad magic, not a BWNT checkpoint"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.format_err(&format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut out = Checkpoint::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| Error::Format {
                    offset: r.pos as u64,
                    message: format!("tensor name is not UTF-8: {e}"),
                })?
                .to_owned();
            let rank = r.take(1)?[0] as usize;
            if rank == 0 || rank > 4 {
                return Err(r.format_err(&format!("tensor {name:?} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let len: usize = shape.iter().product();
            let raw = r.take(4 * len)?;
            let mut data = Vec::with_capacity(len);
            for chunk in raw.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
            // from_vec also rejects NaN/Inf payloads, which a valid
            // checkpoint can never contain.
            out.push(name, Tensor::from_vec(&shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(r.format_err("trailing bytes after last tensor"));
        }
        Ok(out)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("wanted {n} bytes, file has {}", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn format_err(&self, message: &str) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.to_owned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::new(6);
        let mut ck = Checkpoint::new();
        ck.push(
            "block0.w",
            Tensor::from_vec(&[2, 3, 3, 3], (0..54).map(|_| rng.normal_f32()).collect()).unwrap(),
        );
        ck.push("block0.b", Tensor::zeros(&[2]));
        ck.push(
            "head.log_gamma",
            Tensor::from_vec(&[1], vec![10.0f32.ln()]).unwrap(),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bwnt");
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(ck, loaded);
        // Byte-level stability of a rewrite.
        let path2 = dir.path().join("model2.bwnt");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bwnt");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn rejects_truncation() {
        let mut ck = Checkpoint::new();
        ck.push("t", Tensor::filled(&[4], 1.5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bwnt");
        ck.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));
    }
}
