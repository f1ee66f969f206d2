//! Seeded stand-in datasets for tests and for checks whose real data is not
//! available offline.

use obslab_core::{Dataset, Image, LabeledImage, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Smooth random field: bilinear upsampling of a coarse `cells × cells`
/// grid of uniform values in `[0, 255]`.
fn smooth_field(rng: &mut ChaCha8Rng, w: usize, h: usize, cells: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.gen_range(0.0..255.0)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / h as f64 * cells as f64;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / w as f64 * cells as f64;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let at = |yy: usize, xx: usize| g[yy * (cells + 1) + xx];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// `per_class` images for each of `classes` classes. Every class has a
/// random smooth prototype; each image mixes it with its own random field
/// (`mix` is the prototype's weight, in `[0, 1]`). Items are interleaved by
/// class: labels run 0, 1, …, classes−1, 0, 1, ….
pub fn prototype_dataset(
    name: &str,
    classes: usize,
    per_class: usize,
    (w, h, channels): (usize, usize, usize),
    mix: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protos: Vec<Vec<Vec<f64>>> = (0..classes)
        .map(|_| (0..channels).map(|_| smooth_field(&mut rng, w, h, 4)).collect())
        .collect();
    let mut items = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (label, proto) in protos.iter().enumerate() {
            let planes: Vec<Vec<u8>> = proto
                .iter()
                .map(|p| {
                    let own = smooth_field(&mut rng, w, h, 8);
                    p.iter()
                        .zip(&own)
                        .map(|(&a, &b)| (mix * a + (1.0 - mix) * b).round().clamp(0.0, 255.0) as u8)
                        .collect()
                })
                .collect();
            items.push(LabeledImage {
                image: Image::from_planes(w, h, &planes)?,
                label,
            });
        }
    }
    Ok(Dataset::new(name, classes, items, Split::Unsplit)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_labels_and_determinism() {
        let d = prototype_dataset("s", 4, 3, (10, 6, 3), 0.5, 1).unwrap();
        assert_eq!(d.len(), 12);
        assert_eq!(d.dims(), Some((10, 6, 3)));
        assert_eq!(d.class_counts(), vec![3; 4]);
        assert_eq!(d.items()[5].label, 1);
        assert_eq!(d, prototype_dataset("s", 4, 3, (10, 6, 3), 0.5, 1).unwrap());
        assert_ne!(d, prototype_dataset("s", 4, 3, (10, 6, 3), 0.5, 2).unwrap());
    }

    #[test]
    fn pure_prototypes_repeat_within_a_class() {
        let d = prototype_dataset("s", 2, 2, (8, 8, 1), 1.0, 3).unwrap();
        assert_eq!(d.items()[0].image, d.items()[2].image);
        assert_ne!(d.items()[0].image, d.items()[1].image);
    }
}
