//! IDX decoding for the MNIST digit files and deterministic subset selection.
//!
//! Files may be raw or gzip-compressed; compression is detected from the
//! `1f 8b` prefix rather than the file name.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DataError, Result, SnnError};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major within an image, image-major overall.
    pub pixels: Vec<u8>,
}

impl ImageSet {
    pub fn image(&self, index: usize) -> &[u8] {
        let len = self.rows * self.cols;
        &self.pixels[index * len..(index + 1) * len]
    }

    /// Encodes back to IDX bytes (uncompressed).
    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.count as u32).to_be_bytes());
        out.extend_from_slice(&(self.rows as u32).to_be_bytes());
        out.extend_from_slice(&(self.cols as u32).to_be_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub count: usize,
    pub labels: Vec<u8>,
}

impl LabelSet {
    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.count as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }
}

fn be_u32(raw: &[u8], at: usize) -> Result<u32, DataError> {
    raw.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::Truncated {
            needed: at + 4,
            available: raw.len(),
        })
}

fn check_magic(raw: &[u8], expected: u32) -> Result<(), DataError> {
    let found = be_u32(raw, 0)?;
    if found != expected {
        return Err(DataError::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an IDX3 image file. With `strict`, anything other than 28x28 is rejected.
pub fn parse_idx_images(raw: &[u8], strict: bool) -> Result<ImageSet, DataError> {
    check_magic(raw, IMAGE_MAGIC)?;
    let count = be_u32(raw, 4)? as usize;
    let rows = be_u32(raw, 8)?;
    let cols = be_u32(raw, 12)?;
    if strict && (rows as usize != SIDE || cols as usize != SIDE) {
        return Err(DataError::DimensionMismatch { rows, cols });
    }
    let len = count
        .checked_mul(rows as usize)
        .and_then(|n| n.checked_mul(cols as usize))
        .ok_or(DataError::Truncated {
            needed: usize::MAX,
            available: raw.len(),
        })?;
    let needed = 16 + len;
    if raw.len() < needed {
        return Err(DataError::Truncated {
            needed,
            available: raw.len(),
        });
    }
    Ok(ImageSet {
        count,
        rows: rows as usize,
        cols: cols as usize,
        pixels: raw[16..needed].to_vec(),
    })
}

pub fn parse_idx_labels(raw: &[u8]) -> Result<LabelSet, DataError> {
    check_magic(raw, LABEL_MAGIC)?;
    let count = be_u32(raw, 4)? as usize;
    let needed = 8 + count;
    if raw.len() < needed {
        return Err(DataError::Truncated {
            needed,
            available: raw.len(),
        });
    }
    let labels = raw[8..needed].to_vec();
    if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &v)| v > 9) {
        return Err(DataError::BadLabel { index, value });
    }
    Ok(LabelSet { count, labels })
}

/// Reads a file, transparently inflating it when it starts with the gzip magic.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| SnnError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| SnnError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Finds `name` or `name.gz` inside `dir`.
fn locate(dir: &Path, name: &str) -> Result<PathBuf> {
    let plain = dir.join(name);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(SnnError::io(
        plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
    ))
}

/// Images and labels with an index order. The underlying arrays are shared, so
/// subsets and clones are cheap.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Arc<ImageSet>,
    pub labels: Arc<LabelSet>,
    /// Indices into `images`/`labels`, in presentation order.
    pub order: Vec<usize>,
}

impl Dataset {
    pub fn new(images: ImageSet, labels: LabelSet) -> Result<Self, DataError> {
        if images.count != labels.count {
            return Err(DataError::CountMismatch {
                images: images.count,
                labels: labels.count,
            });
        }
        let order = (0..images.count).collect();
        Ok(Dataset {
            images: Arc::new(images),
            labels: Arc::new(labels),
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The `k`-th stimulus in presentation order: (pixels, label).
    pub fn get(&self, k: usize) -> (&[u8], u8) {
        let idx = self.order[k];
        (self.images.image(idx), self.labels.labels[idx])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], u8)> + '_ {
        (0..self.len()).map(move |k| self.get(k))
    }

    /// `count` stimuli starting at `offset`. With a seed, the current order is
    /// first permuted by a seeded Fisher-Yates shuffle.
    pub fn take_subset(
        &self,
        offset: usize,
        count: usize,
        shuffle_seed: Option<u64>,
    ) -> Result<Dataset, DataError> {
        let len = self.len();
        if offset.checked_add(count).is_none_or(|end| end > len) {
            return Err(DataError::OutOfRange { offset, count, len });
        }
        let mut order = self.order.clone();
        if let Some(seed) = shuffle_seed {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        Ok(Dataset {
            images: Arc::clone(&self.images),
            labels: Arc::clone(&self.labels),
            order: order[offset..offset + count].to_vec(),
        })
    }
}

/// The four standard files.
#[derive(Debug, Clone)]
pub struct Mnist {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_pair(dir: &Path, images: &str, labels: &str, strict: bool) -> Result<Dataset> {
    let img = parse_idx_images(&read_maybe_gzip(&locate(dir, images)?)?, strict)?;
    let lab = parse_idx_labels(&read_maybe_gzip(&locate(dir, labels)?)?)?;
    Ok(Dataset::new(img, lab)?)
}

pub fn load_dir(dir: &Path, strict: bool) -> Result<Mnist> {
    Ok(Mnist {
        train: load_pair(dir, TRAIN_IMAGES, TRAIN_LABELS, strict)?,
        test: load_pair(dir, TEST_IMAGES, TEST_LABELS, strict)?,
    })
}
