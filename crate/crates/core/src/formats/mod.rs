//! Native dataset formats: MNIST IDX, CIFAR-10 binary batches, binary
//! PGM/PPM and manifest-indexed PGM directories.

mod cifar;
mod idx;
mod manifest;
mod pnm;

pub use cifar::{cifar_train_batches, load_cifar10_bin, write_cifar10_bin, CIFAR_RECORD_LEN};
pub use idx::{load_mnist_idx, write_mnist_idx, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use manifest::{load_pgm_dir, parse_manifest, write_pgm_dir};
pub use pnm::{decode_pnm, encode_pnm, read_pnm, write_pnm};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
