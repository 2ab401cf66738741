//! The `Image` and `Dataset` types every pipeline stage consumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square RGB raster with channel-planar f32 pixels in [0, 1].
///
/// Layout is `[3, size, size]` row-major (R plane, then G, then B), matching
/// the CIFAR binary distribution and the encoder's input order. Squareness is
/// required by the 90-degree rotation pretext.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    size: usize,
    pixels: Vec<f32>,
    label: Option<u32>,
}

impl Image {
    pub fn new(size: usize, pixels: Vec<f32>, label: Option<u32>) -> Result<Image> {
        if pixels.len() != 3 * size * size {
            return Err(Error::Shape(format!(
                "image of size {size} needs {} pixel values, got {}",
                3 * size * size,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Image {
            size,
            pixels,
            label,
        })
    }

    /// All-zero (black) image, mainly for tests and padding.
    pub fn black(size: usize, label: Option<u32>) -> Image {
        Image {
            size,
            pixels: vec![0.0; 3 * size * size],
            label,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn width(&self) -> usize {
        self.size
    }

    pub fn height(&self) -> usize {
        self.size
    }

    pub fn label(&self) -> Option<u32> {
        self.label
    }

    pub fn with_label(mut self, label: Option<u32>) -> Image {
        self.label = label;
        self
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[(c * self.size + y) * self.size + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.pixels[(c * self.size + y) * self.size + x] = v;
    }

    pub fn is_valid(&self) -> bool {
        self.pixels.len() == 3 * self.size * self.size
            && self.pixels.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Ordered, immutable collection of same-sized images.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<Image>,
    class_names: Vec<String>,
    split: Split,
}

impl Dataset {
    pub fn new(images: Vec<Image>, class_names: Vec<String>, split: Split) -> Result<Dataset> {
        let size = images.first().map_or(0, Image::size);
        for (i, img) in images.iter().enumerate() {
            if img.size() != size {
                return Err(Error::Shape(format!(
                    "image {i} has size {}, dataset is {size}",
                    img.size()
                )));
            }
            if let Some(label) = img.label() {
                if label as usize >= class_names.len() {
                    return Err(Error::Contract(format!(
                        "image {i} has label {label}, only {} classes",
                        class_names.len()
                    )));
                }
            }
        }
        Ok(Dataset {
            images,
            class_names,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &Image {
        &self.images[i]
    }

    /// Common image side length; 0 for an empty dataset.
    pub fn image_size(&self) -> usize {
        self.images.first().map_or(0, Image::size)
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Labels as plain usizes; errors if any image is unlabeled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, img)| {
                img.label()
                    .map(|l| l as usize)
                    .ok_or_else(|| Error::Contract(format!("image {i} has no label")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_out_of_range() {
        assert!(Image::new(2, vec![1.5; 12], None).is_err());
        assert!(Image::new(2, vec![0.5; 11], None).is_err());
        assert!(Image::new(2, vec![0.5; 12], None).is_ok());
    }

    #[test]
    fn dataset_rejects_mixed_sizes_and_bad_labels() {
        let a = Image::black(4, Some(0));
        let b = Image::black(8, Some(0));
        assert!(Dataset::new(vec![a.clone(), b], vec!["x".into()], Split::Train).is_err());
        let c = Image::black(4, Some(3));
        assert!(Dataset::new(vec![a, c], vec!["x".into()], Split::Train).is_err());
    }
}
