//! Dataset ingestion, synthetic data generation, batching, and the
//! checkpoint container format.

mod batch;
mod checkpoint;
mod cifar;
mod image;
mod synth;

pub use batch::batch_iter;
pub use checkpoint::Checkpoint;
pub use cifar::{load_cifar_binary, CifarVariant};
pub use image::{Dataset, Image, Split};
pub use synth::{gen_synthetic, SynthSpec};

use std::path::Path;

use crate::error::{Error, Result};

/// Manifest sidecar for datasets written by `gen-synth`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub size: usize,
    pub count: usize,
    pub class_names: Vec<String>,
    pub split: Split,
}

/// Write a dataset as CIFAR-style binary records plus a JSON manifest.
///
/// Pixels are quantized to bytes, so values become multiples of 1/255;
/// loading the directory back reproduces the quantized dataset exactly.
pub fn save_dataset_dir(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let size = ds.image_size();
    let mut bytes = Vec::with_capacity(ds.len() * (1 + 3 * size * size));
    for img in ds.images() {
        let label = img.label().unwrap_or(0);
        if label > 255 {
            return Err(Error::Config(format!(
                "dataset dir format stores one label byte; label {label} does not fit"
            )));
        }
        bytes.push(label as u8);
        for &v in img.pixels() {
            bytes.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    std::fs::write(dir.join("data.bin"), bytes)?;
    let manifest = DatasetManifest {
        size,
        count: ds.len(),
        class_names: ds.class_names().to_vec(),
        split: ds.split(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Load a dataset directory: `manifest.json` + `data.bin` as written by
/// [`save_dataset_dir`], or raw CIFAR batches (`data_batch_*.bin` /
/// `train.bin`) when no manifest is present.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    if manifest_path.exists() {
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
        let raw = std::fs::read(dir.join("data.bin"))?;
        let record = 1 + 3 * manifest.size * manifest.size;
        if raw.len() != manifest.count * record {
            return Err(Error::Format {
                offset: raw.len() as u64,
                message: format!(
                    "data.bin has {} bytes, manifest implies {}",
                    raw.len(),
                    manifest.count * record
                ),
            });
        }
        let mut images = Vec::with_capacity(manifest.count);
        for rec in raw.chunks_exact(record) {
            let label = u32::from(rec[0]);
            let pixels: Vec<f32> = rec[1..].iter().map(|&b| f32::from(b) / 255.0).collect();
            images.push(Image::new(manifest.size, pixels, Some(label))?);
        }
        return Dataset::new(images, manifest.class_names, manifest.split);
    }

    // Raw CIFAR layout fallbacks.
    let c10: Vec<_> = (1..=5)
        .map(|i| dir.join(format!("data_batch_{i}.bin")))
        .filter(|p| p.exists())
        .collect();
    if !c10.is_empty() {
        return load_cifar_binary(&c10, CifarVariant::Cifar10);
    }
    let c10_test = dir.join("test_batch.bin");
    if c10_test.exists() {
        return load_cifar_binary(&[c10_test], CifarVariant::Cifar10);
    }
    for name in ["train.bin", "test.bin"] {
        let p = dir.join(name);
        if p.exists() {
            return load_cifar_binary(&[p], CifarVariant::Cifar100);
        }
    }
    Err(Error::Config(format!(
        "no dataset found in {}: expected manifest.json, data_batch_*.bin, test_batch.bin, \
         train.bin, or test.bin",
        dir.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_dir_round_trip_is_exact() {
        let spec = SynthSpec {
            n_classes: 3,
            per_class: 4,
            size: 16,
            seed: 5,
        };
        let ds = gen_synthetic(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset_dir(&ds, dir.path()).unwrap();
        let loaded = load_dataset_dir(dir.path()).unwrap();
        // Quantize the original the same way the writer does.
        for (a, b) in ds.images().iter().zip(loaded.images()) {
            assert_eq!(a.label(), b.label());
            for (&x, &y) in a.pixels().iter().zip(b.pixels()) {
                let q = (x * 255.0).round() / 255.0;
                assert!((q - y).abs() < 1e-7);
            }
        }
        // And a second save/load is bit-stable.
        let dir2 = tempfile::tempdir().unwrap();
        save_dataset_dir(&loaded, dir2.path()).unwrap();
        let again = load_dataset_dir(dir2.path()).unwrap();
        for (a, b) in loaded.images().iter().zip(again.images()) {
            assert_eq!(a.pixels(), b.pixels());
        }
    }
}
