//! IDX container parsing (MNIST / Fashion-MNIST).
//!
//! Layout: a big-endian magic word (`0x00000803` images, `0x00000801`
//! labels), big-endian u32 dimension sizes, then row-major unsigned bytes.
//! Gzip is handled by the caller.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const N_CLASSES: u8 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImageSet {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabelSet {
    pub labels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    let word = bytes
        .get(offset..end)
        .ok_or(Error::Truncated(bytes.len()))?;
    Ok(u32::from_be_bytes(word.try_into().expect("4 bytes")))
}

fn expect_payload(bytes: &[u8], header: usize, payload: usize) -> Result<()> {
    if bytes.len() < header + payload {
        Err(Error::Truncated(bytes.len()))
    } else {
        Ok(())
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImageSet> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::NotIdxImages(magic));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = count * rows * cols;
    expect_payload(bytes, 16, size)?;
    if rows != 28 || cols != 28 {
        log::warn!("IDX images are {rows}x{cols}, not 28x28");
    }
    Ok(IdxImageSet {
        count,
        rows,
        cols,
        pixels: bytes[16..16 + size].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<IdxLabelSet> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::NotIdxLabels(magic));
    }
    let count = read_u32(bytes, 4)? as usize;
    expect_payload(bytes, 8, count)?;
    let labels = bytes[8..8 + count].to_vec();
    if let Some(index) = labels.iter().position(|&l| l >= N_CLASSES) {
        return Err(Error::LabelOutOfRange {
            index,
            label: labels[index],
        });
    }
    Ok(IdxLabelSet { labels })
}

impl IdxImageSet {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        let size = rows * cols;
        if size == 0 || !pixels.len().is_multiple_of(size) {
            return Err(Error::Shape {
                expected: format!("multiple of {rows}x{cols}"),
                got: pixels.len().to_string(),
            });
        }
        Ok(Self {
            count: pixels.len() / size,
            rows,
            cols,
            pixels,
        })
    }

    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn raw(&self, i: usize) -> &[u8] {
        let n = self.pixels_per_image();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Intensities `byte / 255` of image `i`.
    pub fn intensities(&self, i: usize) -> Vec<f64> {
        self.raw(i).iter().map(|&b| b as f64 / 255.0).collect()
    }

    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for w in [
            IMAGE_MAGIC,
            self.count as u32,
            self.rows as u32,
            self.cols as u32,
        ] {
            out.extend_from_slice(&w.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

impl IdxLabelSet {
    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }
}

/// An ordered view over paired images and labels.
#[derive(Debug, Clone)]
pub struct Split<'a> {
    images: &'a IdxImageSet,
    labels: &'a IdxLabelSet,
    order: Vec<usize>,
}

impl<'a> Split<'a> {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn intensities(&self, k: usize) -> Vec<f64> {
        self.images.intensities(self.order[k])
    }

    pub fn label(&self, k: usize) -> u8 {
        self.labels.labels[self.order[k]]
    }

    pub fn pixels_per_image(&self) -> usize {
        self.images.pixels_per_image()
    }
}

/// Seeded Fisher-Yates shuffle, then the first `subset` pairs (all when
/// `None` or larger than the set).
pub fn make_split<'a>(
    images: &'a IdxImageSet,
    labels: &'a IdxLabelSet,
    subset: Option<usize>,
    seed: u64,
) -> Result<Split<'a>> {
    if images.count != labels.count() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.count(),
        });
    }
    let mut order: Vec<usize> = (0..images.count).collect();
    let mut rng = seed::stream(seed, &[seed::tag::SHUFFLE, u64::MAX]);
    order.shuffle(&mut rng);
    if let Some(n) = subset {
        order.truncate(n);
    }
    Ok(Split {
        images,
        labels,
        order,
    })
}
