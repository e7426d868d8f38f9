use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::LabeledDataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads a file, transparently gunzipping `*.gz` paths. A missing plain path
/// falls back to its `.gz` sibling.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let gz_sibling = PathBuf::from(format!("{}.gz", path.display()));
    let (path, gz) = if path.exists() {
        (path.to_path_buf(), path.extension().is_some_and(|e| e == "gz"))
    } else if gz_sibling.exists() {
        (gz_sibling, true)
    } else {
        return Err(Error::Path(path.to_path_buf()));
    };
    let raw = fs::read(&path)?;
    if !gz {
        return Ok(raw);
    }
    let mut out = Vec::new();
    GzDecoder::new(raw.as_slice())
        .read_to_end(&mut out)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(out)
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Parses an IDX image file into `(count, rows, cols, pixels)`.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("images: bad magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let body = &bytes[16..];
    let expected = count * rows * cols;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "images: header promises {expected} pixel bytes, file has {}",
            body.len()
        )));
    }
    Ok((count, rows, cols, body))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("labels: bad magic {magic:#010x}")));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format(format!(
            "labels: header promises {count} labels, file has {}",
            body.len()
        )));
    }
    Ok(body)
}

fn load_split(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let image_bytes = read_maybe_gz(images)?;
    let label_bytes = read_maybe_gz(labels)?;
    let (count, rows, cols, pixels) = read_idx_images(&image_bytes)?;
    let label_body = read_idx_labels(&label_bytes)?;
    if count != label_body.len() {
        return Err(Error::Consistency(format!(
            "{count} images but {} labels",
            label_body.len()
        )));
    }
    if count == 0 {
        return Err(Error::EmptyDataset(images.display().to_string()));
    }
    if let Some(l) = label_body.iter().find(|&&l| l > 9) {
        return Err(Error::Format(format!("label {l} outside 0-9")));
    }
    let inputs = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels = label_body.iter().map(|&l| usize::from(l)).collect();
    LabeledDataset::new(inputs, labels, 10, vec![1, rows, cols])
}

/// Loads MNIST train and test splits from IDX files. Pixels are scaled to [0, 1].
pub fn load_mnist(
    train_images: &Path,
    train_labels: &Path,
    test_images: &Path,
    test_labels: &Path,
) -> Result<(LabeledDataset, LabeledDataset)> {
    Ok((
        load_split(train_images, train_labels)?,
        load_split(test_images, test_labels)?,
    ))
}

/// [`load_mnist`] with the conventional file names inside `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    load_mnist(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
    )
}
