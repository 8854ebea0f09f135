//! IDX (MNIST-format) image and label files.

use std::fs;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder};

use super::dataset::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded image file: `count` images of `rows × cols` bytes scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

fn header_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(BigEndian::read_u32)
        .ok_or_else(|| Error::DimensionMismatch(format!("truncated IDX header ({what})")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = header_u32(bytes, 0, "magic")?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an image file, keeping at most `limit` images in file order.
pub fn parse_images(bytes: &[u8], limit: Option<usize>) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let declared = header_u32(bytes, 4, "count")? as usize;
    let rows = header_u32(bytes, 8, "rows")? as usize;
    let cols = header_u32(bytes, 12, "cols")? as usize;
    let item = rows * cols;
    let payload = &bytes[16..];
    if payload.len() != declared * item {
        return Err(Error::DimensionMismatch(format!(
            "{declared} images of {rows}x{cols} need {} bytes, file has {}",
            declared * item,
            payload.len()
        )));
    }
    let count = limit.map_or(declared, |l| l.min(declared));
    let pixels = payload[..count * item].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

/// Parses a label file, keeping at most `limit` labels and checking each is `< classes`.
pub fn parse_labels(bytes: &[u8], limit: Option<usize>, classes: usize) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let declared = header_u32(bytes, 4, "count")? as usize;
    let payload = &bytes[8..];
    if payload.len() != declared {
        return Err(Error::DimensionMismatch(format!(
            "{declared} labels declared, file has {}",
            payload.len()
        )));
    }
    let count = limit.map_or(declared, |l| l.min(declared));
    payload[..count]
        .iter()
        .enumerate()
        .map(|(item, &b)| {
            let label = b as usize;
            if label < classes {
                Ok(label)
            } else {
                Err(Error::LabelOutOfRange { label, classes, item })
            }
        })
        .collect()
}

/// Builds a dataset from parsed images and labels; every point goes to the pool.
pub fn dataset_from_idx(images: IdxImages, labels: Vec<usize>, classes: usize) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let n = labels.len();
    Dataset::new(
        images.pixels,
        images.rows * images.cols,
        labels,
        classes,
        (0..n).collect(),
        Vec::new(),
        vec![None; n],
    )
}

/// Loads an image/label file pair with ten classes.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    load_idx_with_classes(images, labels, limit, 10)
}

pub fn load_idx_with_classes(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    limit: Option<usize>,
    classes: usize,
) -> Result<Dataset> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let image_bytes = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let label_bytes = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let images = parse_images(&image_bytes, limit)?;
    let labels = parse_labels(&label_bytes, limit, classes)?;
    dataset_from_idx(images, labels, classes)
}

/// Encodes images (one byte per pixel) in IDX format.
pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_items() -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..10 * 784).map(|i| (i % 256) as u8).collect();
        let labels: Vec<u8> = (0..10).collect();
        (encode_images(28, 28, &pixels), encode_labels(&labels))
    }

    #[test]
    fn parses_ten_mnist_items() {
        let (img, lab) = ten_items();
        let ds = dataset_from_idx(parse_images(&img, None).unwrap(), parse_labels(&lab, None, 10).unwrap(), 10).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.dims(), 784);
        assert_eq!(ds.features(0)[255], 1.0);
        assert_eq!(ds.features(0)[0], 0.0);
    }

    #[test]
    fn label_out_of_range() {
        let lab = encode_labels(&[1, 12, 3]);
        assert!(matches!(
            parse_labels(&lab, None, 10),
            Err(Error::LabelOutOfRange { label: 12, classes: 10, item: 1 })
        ));
    }

    #[test]
    fn limit_truncates_in_file_order() {
        let (img, lab) = ten_items();
        let images = parse_images(&img, Some(5)).unwrap();
        let labels = parse_labels(&lab, Some(5), 10).unwrap();
        assert_eq!(labels, vec![0, 1, 2, 3, 4]);
        let ds = dataset_from_idx(images, labels, 10).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.features(4)[0], f64::from(((4 * 784) % 256) as u8) / 255.0);
    }

    #[test]
    fn wrong_magic_and_short_payload() {
        let (img, lab) = ten_items();
        assert!(matches!(parse_images(&lab, None), Err(Error::BadMagic { expected: IMAGES_MAGIC, .. })));
        assert!(matches!(parse_labels(&img, None, 10), Err(Error::BadMagic { .. })));
        assert!(matches!(parse_images(&img[..100], None), Err(Error::DimensionMismatch(_))));
        let images = parse_images(&img, Some(4)).unwrap();
        let labels = parse_labels(&lab, Some(5), 10).unwrap();
        assert!(matches!(dataset_from_idx(images, labels, 10), Err(Error::DimensionMismatch(_))));
    }
}
