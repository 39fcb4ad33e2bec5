//! CIFAR-10 binary format: records of one label byte followed by the
//! 1024-byte red, green and blue planes of a 32x32 image.

use std::fs;
use std::path::{Path, PathBuf};

use hebbconv_core::{Dims4, Tensor4};

use crate::error::{io_err, Error, Result};

pub const SIDE: usize = 32;
pub const IMAGE_BYTES: usize = 3 * SIDE * SIDE;
pub const RECORD_BYTES: usize = IMAGE_BYTES + 1;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images as raw bytes (`N x 3 x 32 x 32`, RGB planes) with their labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cifar10Set {
    images: Vec<u8>,
    labels: Vec<u8>,
}

impl Cifar10Set {
    pub fn new(images: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() * IMAGE_BYTES {
            return Err(Error::Format(format!(
                "{} image bytes for {} labels (expected {})",
                images.len(),
                labels.len(),
                labels.len() * IMAGE_BYTES
            )));
        }
        if let Some(pos) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Corrupt(format!("record {pos} has label {}", labels[pos])));
        }
        Ok(Cifar10Set { images, labels })
    }

    /// Parses the concatenated records of one or more batch files.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.is_empty() || !bytes.len().is_multiple_of(RECORD_BYTES) {
            return Err(Error::Format(format!(
                "{} bytes is not a whole number of {RECORD_BYTES}-byte records (nearest: {} bytes)",
                bytes.len(),
                (bytes.len() / RECORD_BYTES).max(1) * RECORD_BYTES
            )));
        }
        let n = bytes.len() / RECORD_BYTES;
        let mut images = Vec::with_capacity(n * IMAGE_BYTES);
        let mut labels = Vec::with_capacity(n);
        for record in bytes.chunks_exact(RECORD_BYTES) {
            labels.push(record[0]);
            images.extend_from_slice(&record[1..]);
        }
        Self::new(images, labels)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * RECORD_BYTES);
        for (label, image) in self.labels.iter().zip(self.images.chunks_exact(IMAGE_BYTES)) {
            out.push(*label);
            out.extend_from_slice(image);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]
    }

    pub fn extend(&mut self, other: Cifar10Set) {
        self.images.extend(other.images);
        self.labels.extend(other.labels);
    }

    /// The first `n` records (all of them if fewer).
    pub fn take(&self, n: usize) -> Cifar10Set {
        let n = n.min(self.len());
        Cifar10Set {
            images: self.images[..n * IMAGE_BYTES].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// Images `start..end` scaled to `[0, 1]`.
    pub fn tensor_range(&self, start: usize, end: usize) -> Result<Tensor4> {
        let dims = Dims4::new(end - start, 3, SIDE, SIDE);
        let data = self.images[start * IMAGE_BYTES..end * IMAGE_BYTES]
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect();
        Ok(Tensor4::from_vec(dims, data)?)
    }

    pub fn to_tensor(&self) -> Result<Tensor4> {
        self.tensor_range(0, self.len())
    }
}

pub fn load_cifar10_file(path: &Path) -> Result<Cifar10Set> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Cifar10Set::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Loads a split from the standard `cifar-10-batches-bin` directory.
pub fn load_cifar10(dir: &Path, split: Split) -> Result<Cifar10Set> {
    let files: Vec<PathBuf> = match split {
        Split::Train => TRAIN_FILES.iter().map(|f| dir.join(f)).collect(),
        Split::Test => vec![dir.join(TEST_FILE)],
    };
    let mut set = Cifar10Set::default();
    for f in files {
        set.extend(load_cifar10_file(&f)?);
    }
    Ok(set)
}

/// Loads at most `limit` records of a split, reading only the files needed.
pub fn load_cifar10_subset(dir: &Path, split: Split, limit: usize) -> Result<Cifar10Set> {
    if split == Split::Test {
        return Ok(load_cifar10(dir, split)?.take(limit));
    }
    let mut set = Cifar10Set::default();
    for f in TRAIN_FILES {
        if set.len() >= limit {
            break;
        }
        set.extend(load_cifar10_file(&dir.join(f))?);
    }
    Ok(set.take(limit))
}

/// `true` when `dir` holds the five training batches and the test batch.
pub fn is_cifar_dir(dir: &Path) -> bool {
    TRAIN_FILES.iter().chain([&TEST_FILE]).all(|f| dir.join(f).is_file())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut bytes = Vec::new();
        for (label, seed) in [(3u8, 7u32), (9, 11)] {
            bytes.push(label);
            bytes.extend((0..IMAGE_BYTES as u32).map(|i| (i * seed % 251) as u8));
        }
        bytes
    }

    #[test]
    fn two_record_round_trip() {
        let bytes = fixture();
        assert_eq!(bytes.len(), 6146);
        let set = Cifar10Set::from_bytes(&bytes).unwrap();
        assert_eq!(set.labels(), &[3, 9]);
        assert_eq!(set.image(1)[5], 5 * 11);
        assert_eq!(set.to_bytes(), bytes);
    }

    #[test]
    fn truncated_and_corrupt_inputs() {
        let bytes = fixture();
        let err = Cifar10Set::from_bytes(&bytes[..6000]).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("6000")), "{err}");
        let mut bad = bytes.clone();
        bad[RECORD_BYTES] = 10;
        assert!(matches!(Cifar10Set::from_bytes(&bad), Err(Error::Corrupt(_))));
    }

    #[test]
    fn tensor_layout_is_planar() {
        let set = Cifar10Set::from_bytes(&fixture()).unwrap();
        let t = set.to_tensor().unwrap();
        assert_eq!(t.dims(), Dims4::new(2, 3, 32, 32));
        // green plane, row 1, column 2 of the second image
        let byte = set.image(1)[1024 + 32 + 2];
        assert_eq!(t.get(1, 1, 1, 2), byte as f32 / 255.0);
    }
}
