//! Loading, shaping and obfuscating datasets, and turning them into network
//! input.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use obslab_core::formats::{cifar_train_batches, load_cifar10_bin, load_mnist_idx, load_pgm_dir};
use obslab_core::image::pad_image;
use obslab_core::obfuscation::{apply_obfuscation, gaussian_blur};
use obslab_core::{Dataset, Image, LabeledImage, Obfuscation};
use obslab_nn::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::DatasetSource;
use crate::error::{Error, Result};

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// A loaded source: either already split, or whole and awaiting a
/// per-class split.
#[derive(Clone, Debug)]
pub enum Loaded {
    Split { train: Dataset, test: Dataset },
    Whole { all: Dataset, train_per_class: usize },
}

impl Loaded {
    pub fn class_count(&self) -> usize {
        match self {
            Loaded::Split { train, .. } => train.class_count(),
            Loaded::Whole { all, .. } => all.class_count(),
        }
    }

    /// Applies `f` to every dataset held.
    pub fn try_map(self, mut f: impl FnMut(Dataset) -> Result<Dataset>) -> Result<Loaded> {
        Ok(match self {
            Loaded::Split { train, test } => Loaded::Split {
                train: f(train)?,
                test: f(test)?,
            },
            Loaded::Whole { all, train_per_class } => Loaded::Whole {
                all: f(all)?,
                train_per_class,
            },
        })
    }
}

pub fn load_source(source: &DatasetSource) -> Result<Loaded> {
    match source {
        DatasetSource::Mnist { root } => {
            let [ti, tl, vi, vl] = MNIST_FILES.map(|f| root.join(f));
            Ok(Loaded::Split {
                train: load_mnist_idx(&ti, &tl)?,
                test: load_mnist_idx(&vi, &vl)?,
            })
        }
        DatasetSource::Cifar10 { root } => Ok(Loaded::Split {
            train: load_cifar10_bin(&cifar_train_batches(root))?,
            test: load_cifar10_bin(&[root.join("test_batch.bin")])?,
        }),
        DatasetSource::Dir {
            root,
            manifest,
            train_per_class,
        } => {
            let manifest = manifest_path(root, manifest.as_deref());
            Ok(Loaded::Whole {
                all: load_pgm_dir(root, &manifest)?,
                train_per_class: *train_per_class,
            })
        }
    }
}

pub fn manifest_path(root: &Path, manifest: Option<&Path>) -> PathBuf {
    match manifest {
        Some(m) if m.is_absolute() => m.to_path_buf(),
        Some(m) => root.join(m),
        None => root.join("manifest.tsv"),
    }
}

/// Pads images with a black frame up to the network input size (MNIST's
/// 28×28 digits become 32×32). Any other mismatch is a configuration error.
pub fn fit_to_input(dataset: Dataset, input: Shape) -> Result<Dataset> {
    let Shape::Image {
        channels,
        height,
        width,
    } = input
    else {
        return Err(Error::Config(format!("network input {input} is not an image")));
    };
    let Some((w, h, c)) = dataset.dims() else {
        return Ok(dataset);
    };
    if c != channels {
        return Err(Error::Config(format!(
            "{}: {c}-channel images for a {channels}-channel network",
            dataset.name()
        )));
    }
    if (w, h) == (width, height) {
        return Ok(dataset);
    }
    let (dw, dh) = (width.wrapping_sub(w), height.wrapping_sub(h));
    if w < width && dw == dh && dw % 2 == 0 {
        let border = dw / 2;
        return Ok(dataset.map_images(|im| Ok(pad_image(im, border, 0)))?);
    }
    Err(Error::Config(format!(
        "{}: {w}×{h} images do not fit a {width}×{height} network input",
        dataset.name()
    )))
}

/// Applies one obfuscation to every image; labels, order and metadata are
/// unchanged.
pub fn obfuscate_dataset(dataset: &Dataset, spec: &Obfuscation) -> Result<Dataset> {
    obfuscate_dataset_jittered(dataset, spec, 0.0, 0)
}

/// Like [`obfuscate_dataset`], but a blur's sigma is scaled per image by a
/// factor drawn uniformly from `[1 − jitter, 1 + jitter]` (seeded by
/// `seed` and the item index).
pub fn obfuscate_dataset_jittered(
    dataset: &Dataset,
    spec: &Obfuscation,
    jitter: f64,
    seed: u64,
) -> Result<Dataset> {
    spec.validate()?;
    if *spec == Obfuscation::None {
        return Ok(dataset.clone());
    }
    let items = dataset
        .items()
        .par_iter()
        .enumerate()
        .map(|(i, it)| {
            let image = match *spec {
                Obfuscation::Blur { sigma } if jitter > 0.0 => {
                    gaussian_blur(&it.image, jittered_sigma(sigma, jitter, seed, i))
                }
                _ => apply_obfuscation(&it.image, spec)?,
            };
            Ok(LabeledImage {
                image,
                label: it.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(dataset.with_items(items, dataset.split())?)
}

pub fn jittered_sigma(sigma: f64, jitter: f64, seed: u64, index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    sigma * (1.0 + jitter * (2.0 * rng.gen::<f64>() - 1.0))
}

pub fn content_hash(image: &Image) -> [u8; 32] {
    let mut h = Sha256::new();
    for d in [image.width(), image.height(), image.channels()] {
        h.update((d as u64).to_le_bytes());
    }
    h.update(image.pixels());
    h.finalize().into()
}

/// Number of test images bit-identical to some training image.
pub fn cross_split_duplicates(train: &Dataset, test: &Dataset) -> usize {
    let seen: HashSet<[u8; 32]> = train.items().par_iter().map(|it| content_hash(&it.image)).collect();
    test.items()
        .par_iter()
        .filter(|it| seen.contains(&content_hash(&it.image)))
        .count()
}

/// Network-ready copy of a dataset: planar (CHW) floats in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Prepared {
    shape: Shape,
    classes: usize,
    data: Vec<f32>,
    labels: Vec<usize>,
}

impl Prepared {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let (w, h, c) = dataset
            .dims()
            .ok_or_else(|| Error::Argument(format!("{}: dataset is empty", dataset.name())))?;
        let item_len = w * h * c;
        let mut data = vec![0f32; item_len * dataset.len()];
        data.par_chunks_mut(item_len)
            .zip(dataset.items().par_iter())
            .for_each(|(dst, it)| {
                // interleaved HWC → planar CHW
                for (p, &v) in it.image.pixels().iter().enumerate() {
                    let (pix, ch) = (p / c, p % c);
                    dst[ch * w * h + pix] = v as f32 / 255.0;
                }
            });
        Ok(Prepared {
            shape: Shape::image(c, h, w),
            classes: dataset.class_count(),
            data,
            labels: dataset.items().iter().map(|it| it.label).collect(),
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Gathers the given items into one batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let n = self.shape.len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        let x = Tensor::new(self.shape.with_batch(indices.len()), data).expect("batch shape matches data");
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use obslab_core::Split;

    fn toy(n: usize, w: usize, h: usize, c: usize) -> Dataset {
        let items = (0..n)
            .map(|i| LabeledImage {
                image: Image::new(w, h, c, (0..w * h * c).map(|p| ((p * 37 + i * 11) % 256) as u8).collect())
                    .unwrap(),
                label: i % 3,
            })
            .collect();
        Dataset::new("toy", 3, items, Split::Unsplit).unwrap()
    }

    #[test]
    fn none_is_identity() {
        let d = toy(5, 8, 8, 1);
        assert_eq!(obfuscate_dataset(&d, &Obfuscation::None).unwrap(), d);
    }

    #[test]
    fn mosaic16_on_32px_leaves_four_values() {
        let d = fit_to_input(toy(4, 28, 28, 1), Shape::image(1, 32, 32)).unwrap();
        let m = obfuscate_dataset(&d, &Obfuscation::Mosaic { window: 16 }).unwrap();
        for it in m.items() {
            assert!(it.image.distinct_values(0) <= 4);
        }
    }

    #[test]
    fn obfuscation_keeps_labels_and_order() {
        let d = toy(7, 16, 16, 3);
        for spec in [
            Obfuscation::Mosaic { window: 4 },
            Obfuscation::Blur { sigma: 2.0 },
            Obfuscation::p3(10),
        ] {
            let o = obfuscate_dataset(&d, &spec).unwrap();
            assert_eq!(o.len(), d.len());
            assert_eq!(o.split(), d.split());
            for (a, b) in o.items().iter().zip(d.items()) {
                assert_eq!(a.label, b.label);
                assert!(a.image.same_shape(&b.image));
            }
        }
    }

    #[test]
    fn jitter_is_seeded_and_bounded() {
        let s: Vec<f64> = (0..200).map(|i| jittered_sigma(4.0, 0.1, 9, i)).collect();
        assert!(s.iter().all(|&v| (3.6..=4.4).contains(&v)));
        assert!(s.iter().any(|&v| v < 3.8) && s.iter().any(|&v| v > 4.2));
        assert_eq!(jittered_sigma(4.0, 0.1, 9, 17), s[17]);
        let d = toy(6, 12, 12, 1);
        let spec = Obfuscation::Blur { sigma: 1.5 };
        let a = obfuscate_dataset_jittered(&d, &spec, 0.1, 3).unwrap();
        assert_eq!(a, obfuscate_dataset_jittered(&d, &spec, 0.1, 3).unwrap());
    }

    #[test]
    fn padding_to_network_input() {
        let d = fit_to_input(toy(2, 28, 28, 1), Shape::image(1, 32, 32)).unwrap();
        assert_eq!(d.dims(), Some((32, 32, 1)));
        let im = &d.items()[0].image;
        assert_eq!(im.get(0, 0, 0), 0);
        assert_eq!(im.get(31, 31, 0), 0);
        assert_eq!(im.get(2, 2, 0), toy(2, 28, 28, 1).items()[0].image.get(0, 0, 0));
        assert!(matches!(
            fit_to_input(toy(2, 28, 28, 1), Shape::image(3, 32, 32)),
            Err(Error::Config(_))
        ));
        assert!(fit_to_input(toy(2, 30, 28, 1), Shape::image(1, 32, 32)).is_err());
        assert!(fit_to_input(toy(2, 36, 36, 1), Shape::image(1, 32, 32)).is_err());
    }

    #[test]
    fn prepared_is_planar_and_scaled() {
        let im = Image::new(2, 1, 3, vec![0, 51, 102, 153, 204, 255]).unwrap();
        let d = Dataset::new("rgb", 2, vec![LabeledImage { image: im, label: 1 }], Split::Test).unwrap();
        let p = Prepared::new(&d).unwrap();
        let (x, y) = p.batch(&[0, 0]);
        assert_eq!(x.shape(), &[2, 3, 1, 2]);
        assert_eq!(y, vec![1, 1]);
        let expect = [0.0, 0.6, 0.2, 0.8, 0.4, 1.0];
        for (a, b) in x.data()[..6].iter().zip(expect) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicates_are_counted_by_content() {
        let d = toy(6, 4, 4, 1);
        let (a, b) = (d.take(4), d.with_items(d.items()[2..].to_vec(), Split::Test).unwrap());
        assert_eq!(cross_split_duplicates(&a, &b), 2);
        assert_ne!(content_hash(&d.items()[0].image), content_hash(&d.items()[1].image));
    }

    #[test]
    fn manifest_defaults_under_root() {
        let root = Path::new("/faces");
        assert_eq!(manifest_path(root, None), Path::new("/faces/manifest.tsv"));
        assert_eq!(manifest_path(root, Some(Path::new("m.tsv"))), Path::new("/faces/m.tsv"));
        assert_eq!(manifest_path(root, Some(Path::new("/x/m.tsv"))), Path::new("/x/m.tsv"));
    }
}
