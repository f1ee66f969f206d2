//! Image handling, dataset loaders, the 8×8 block DCT used by JPEG, and the
//! three obfuscation transforms studied here: mosaicing, Gaussian blur and
//! P3-style coefficient thresholding.
//!
//! Every sample-producing operation rounds half away from zero (`f64::round`)
//! and clamps to `[0, 255]`.

pub mod blockdct;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod image;
pub mod obfuscation;

pub use dataset::{Dataset, LabeledImage, Split};
pub use error::{Error, Result};
pub use image::Image;
pub use obfuscation::Obfuscation;
