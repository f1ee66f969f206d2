use std::path::{Path, PathBuf};

use super::{read_file, write_file};
use crate::dataset::{Dataset, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::image::Image;

const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
/// One label byte followed by the R, G and B planes.
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * PLANE;

/// Reads CIFAR-10 binary batches in order, converting the planar records to
/// interleaved RGB images.
pub fn load_cifar10_bin<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let mut items = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        if bytes.len() % CIFAR_RECORD_LEN != 0 {
            return Err(Error::format(
                path,
                (bytes.len() - bytes.len() % CIFAR_RECORD_LEN) as u64,
                format!(
                    "length {} is not a multiple of the {CIFAR_RECORD_LEN}-byte record",
                    bytes.len()
                ),
            ));
        }
        for (r, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
            let label = rec[0] as usize;
            if label > 9 {
                return Err(Error::format(
                    path,
                    (r * CIFAR_RECORD_LEN) as u64,
                    format!("label byte {label} outside 0..=9"),
                ));
            }
            let mut px = vec![0u8; 3 * PLANE];
            for i in 0..PLANE {
                px[3 * i] = rec[1 + i];
                px[3 * i + 1] = rec[1 + PLANE + i];
                px[3 * i + 2] = rec[1 + 2 * PLANE + i];
            }
            items.push(LabeledImage {
                image: Image::new(SIDE, SIDE, 3, px)?,
                label,
            });
        }
    }
    Dataset::new("cifar10", 10, items, Split::Unsplit)
}

pub fn write_cifar10_bin(dataset: &Dataset, path: &Path) -> Result<()> {
    if dataset.dims().is_some_and(|d| d != (SIDE, SIDE, 3)) {
        return Err(Error::Argument("CIFAR records must be 32×32 RGB".into()));
    }
    let mut out = Vec::with_capacity(dataset.len() * CIFAR_RECORD_LEN);
    for item in dataset.items() {
        out.push(item.label as u8);
        for c in 0..3 {
            out.extend(item.image.pixels().iter().skip(c).step_by(3));
        }
    }
    write_file(path, &out)
}

/// The five training batches of the standard distribution, in order.
pub fn cifar_train_batches(root: &Path) -> Vec<PathBuf> {
    (1..=5)
        .map(|i| root.join(format!("data_batch_{i}.bin")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_to_interleaved() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.bin");
        let mut rec = vec![7u8];
        rec.extend(std::iter::repeat_n(1u8, PLANE));
        rec.extend(std::iter::repeat_n(2u8, PLANE));
        rec.extend(std::iter::repeat_n(3u8, PLANE));
        std::fs::write(&p, &rec).unwrap();
        let d = load_cifar10_bin(&[&p]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.items()[0].label, 7);
        assert_eq!(&d.items()[0].image.pixels()[..6], &[1, 2, 3, 1, 2, 3]);

        let q = dir.path().join("c.bin");
        write_cifar10_bin(&d, &q).unwrap();
        assert_eq!(std::fs::read(&q).unwrap(), rec);
    }

    #[test]
    fn truncated_and_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.bin");
        std::fs::write(&p, vec![0u8; 3072]).unwrap();
        assert!(matches!(load_cifar10_bin(&[&p]), Err(Error::Format { .. })));
        let mut rec = vec![0u8; CIFAR_RECORD_LEN];
        rec[0] = 10;
        std::fs::write(&p, rec).unwrap();
        assert!(load_cifar10_bin(&[&p]).unwrap_err().to_string().contains("label"));
    }
}
