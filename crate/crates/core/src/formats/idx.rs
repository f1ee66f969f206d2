use std::path::Path;

use super::{read_file, write_file};
use crate::dataset::{Dataset, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::image::Image;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, offset as u64, "truncated header"))
}

/// Loads an MNIST image/label file pair. Images come back 28×28 (or whatever
/// the header declares), single channel, in file order, with 10 classes.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;

    let magic = be_u32(&images, 0, images_path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(
            images_path,
            0,
            format!("bad magic {magic}, expected {IDX_IMAGE_MAGIC} for an image file"),
        ));
    }
    let count = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let needed = 16 + count * rows * cols;
    if images.len() < needed {
        return Err(Error::format(
            images_path,
            images.len() as u64,
            format!("truncated payload: {count} images of {rows}×{cols} need {needed} bytes"),
        ));
    }

    let magic = be_u32(&labels, 0, labels_path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::format(
            labels_path,
            0,
            format!("bad magic {magic}, expected {IDX_LABEL_MAGIC} for a label file"),
        ));
    }
    let label_count = be_u32(&labels, 4, labels_path)? as usize;
    if label_count != count {
        return Err(Error::format(
            labels_path,
            4,
            format!("label count {label_count} does not match image count {count}"),
        ));
    }
    if labels.len() < 8 + count {
        return Err(Error::format(
            labels_path,
            labels.len() as u64,
            format!("truncated payload: {count} labels need {} bytes", 8 + count),
        ));
    }

    let px = rows * cols;
    let mut items = Vec::with_capacity(count);
    for i in 0..count {
        let label = labels[8 + i] as usize;
        if label > 9 {
            return Err(Error::format(
                labels_path,
                (8 + i) as u64,
                format!("label {label} outside 0..=9"),
            ));
        }
        let start = 16 + i * px;
        items.push(LabeledImage {
            image: Image::new(cols, rows, 1, images[start..start + px].to_vec())?,
            label,
        });
    }
    let name = images_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mnist".into());
    Dataset::new(name, 10, items, Split::Unsplit)
}

pub fn write_mnist_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (w, h, c) = dataset.dims().unwrap_or((28, 28, 1));
    if c != 1 {
        return Err(Error::Argument("IDX images must be single-channel".into()));
    }
    if dataset.items().iter().any(|it| it.label > 255) {
        return Err(Error::Argument("IDX labels must fit in a byte".into()));
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.len() * w * h);
    for v in [IDX_IMAGE_MAGIC, n, h as u32, w as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    let mut lab = Vec::with_capacity(8 + dataset.len());
    for v in [IDX_LABEL_MAGIC, n] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    for item in dataset.items() {
        img.extend_from_slice(item.image.pixels());
        lab.push(item.label as u8);
    }
    write_file(images_path, &img)?;
    write_file(labels_path, &lab)
}
