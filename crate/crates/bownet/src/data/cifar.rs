//! Bit-exact reader for the public CIFAR binary distribution.
//!
//! Each record is `[label bytes][3072 pixel bytes]`, with pixels stored
//! channel-planar row-major (R plane, G plane, B plane). CIFAR-10 records
//! carry one label byte; CIFAR-100 records carry a coarse byte followed by a
//! fine byte, and the fine label is the one we keep.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{Dataset, Image, Split};

const SIDE: usize = 32;
const PIXEL_BYTES: usize = 3 * SIDE * SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    fn n_classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }
}

pub fn load_cifar_binary<P: AsRef<Path>>(paths: &[P], variant: CifarVariant) -> Result<Dataset> {
    let record = variant.label_bytes() + PIXEL_BYTES;
    let mut images = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path.as_ref())?;
        if bytes.len() % record != 0 {
            let full = bytes.len() / record;
            return Err(Error::Format {
                offset: (full * record) as u64,
                message: format!(
                    "{}: truncated record ({} trailing bytes, record size {record})",
                    path.as_ref().display(),
                    bytes.len() % record
                ),
            });
        }
        for rec in bytes.chunks_exact(record) {
            // For cifar100 the fine label is the second byte.
            let label = u32::from(rec[variant.label_bytes() - 1]);
            let pixels: Vec<f32> = rec[variant.label_bytes()..]
                .iter()
                .map(|&b| f32::from(b) / 255.0)
                .collect();
            images.push(Image::new(SIDE, pixels, Some(label))?);
        }
    }
    let class_names = (0..variant.n_classes()).map(|i| format!("class_{i}")).collect();
    Dataset::new(images, class_names, Split::Train)
}

/// Convenience: the five standard training batches of CIFAR-10 under `dir`.
pub fn cifar10_train_paths(dir: &Path) -> Vec<PathBuf> {
    (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_record(buf: &mut Vec<u8>, labels: &[u8], r: u8, g: u8, b: u8) {
        buf.extend_from_slice(labels);
        buf.extend(std::iter::repeat(r).take(SIDE * SIDE));
        buf.extend(std::iter::repeat(g).take(SIDE * SIDE));
        buf.extend(std::iter::repeat(b).take(SIDE * SIDE));
    }

    #[test]
    fn handcrafted_record_decodes_planar() {
        // One record, R plane all 255, G/B all 0.
        let mut buf = Vec::new();
        write_record(&mut buf, &[7], 255, 0, 0);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&buf).unwrap();
        let ds = load_cifar_binary(&[f.path()], CifarVariant::Cifar10).unwrap();
        assert_eq!(ds.len(), 1);
        let img = ds.image(0);
        assert_eq!(img.label(), Some(7));
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(1, 0, 0), 0.0);
        assert_eq!(img.get(2, 0, 0), 0.0);
    }

    #[test]
    fn cifar100_uses_fine_label() {
        let mut buf = Vec::new();
        write_record(&mut buf, &[3, 42], 10, 20, 30);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&buf).unwrap();
        let ds = load_cifar_binary(&[f.path()], CifarVariant::Cifar100).unwrap();
        assert_eq!(ds.image(0).label(), Some(42));
        assert!((ds.image(0).get(0, 5, 5) - 10.0 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn empty_file_yields_zero_images() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let ds = load_cifar_binary(&[f.path()], CifarVariant::Cifar10).unwrap();
        assert_eq!(ds.len(), 0);
    }

    #[test]
    fn truncated_record_reports_offset() {
        let mut buf = Vec::new();
        write_record(&mut buf, &[1], 5, 5, 5);
        buf.extend_from_slice(&[9, 9, 9]); // 3 stray bytes
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&buf).unwrap();
        match load_cifar_binary(&[f.path()], CifarVariant::Cifar10) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 3073),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let res = load_cifar_binary(&["/nonexistent/file.bin"], CifarVariant::Cifar10);
        assert!(matches!(res, Err(Error::Io(_))));
    }
}
