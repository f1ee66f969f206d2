use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decoded 8-bit raster, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

/// Converts a real-valued sample to 8 bits: round half away from zero, then clamp.
#[inline]
pub fn sample_from_f64(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Argument(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Argument(format!(
                "pixel buffer has {} samples, expected {width}×{height}×{channels}",
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Same width, height and channel count.
    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// One channel as a dense `width × height` plane.
    pub fn plane(&self, c: usize) -> Vec<u8> {
        assert!(c < self.channels, "channel {c} out of range");
        self.pixels
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Interleaves `planes` (each `width × height`) into an image.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<u8>]) -> Result<Self> {
        let channels = planes.len();
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::Argument("plane size does not match dimensions".into()));
        }
        let mut pixels = vec![0u8; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                pixels[i * channels + c] = v;
            }
        }
        Self::new(width, height, channels, pixels)
    }

    /// Inclusive per-channel `(min, max)`.
    pub fn channel_range(&self, c: usize) -> (u8, u8) {
        self.pixels
            .iter()
            .skip(c)
            .step_by(self.channels)
            .fold((u8::MAX, u8::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Number of distinct values in channel `c`.
    pub fn distinct_values(&self, c: usize) -> usize {
        let mut seen = [false; 256];
        for &v in self.pixels.iter().skip(c).step_by(self.channels) {
            seen[v as usize] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Argument(format!(
                "crop {w}×{h}+{x0}+{y0} exceeds {}×{}",
                self.width, self.height
            )));
        }
        let ch = self.channels;
        let mut pixels = Vec::with_capacity(w * h * ch);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * ch;
            pixels.extend_from_slice(&self.pixels[start..start + w * ch]);
        }
        Image::new(w, h, ch, pixels)
    }
}

/// Luma conversion with BT.601 weights. One-channel images are returned unchanged.
pub fn to_grayscale(image: &Image) -> Image {
    if image.channels == 1 {
        return image.clone();
    }
    let pixels = image
        .pixels
        .chunks_exact(3)
        .map(|p| {
            sample_from_f64(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        })
        .collect();
    Image {
        width: image.width,
        height: image.height,
        channels: 1,
        pixels,
    }
}

/// Source coordinate for output index `i` under half-pixel-center mapping,
/// clamped to the valid sample range.
fn source_coord(i: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, s - i0 as f64)
}

pub fn resize_bilinear(image: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Argument(format!(
            "resize target must be non-empty, got {out_w}×{out_h}"
        )));
    }
    if image.width == 0 || image.height == 0 {
        return Err(Error::Argument("cannot resize an empty image".into()));
    }
    if out_w == image.width && out_h == image.height {
        return Ok(image.clone());
    }
    let sx = image.width as f64 / out_w as f64;
    let sy = image.height as f64 / out_h as f64;
    let cols: Vec<_> = (0..out_w).map(|x| source_coord(x, sx, image.width)).collect();
    let ch = image.channels;
    let mut pixels = Vec::with_capacity(out_w * out_h * ch);
    for y in 0..out_h {
        let (y0, y1, fy) = source_coord(y, sy, image.height);
        for &(x0, x1, fx) in &cols {
            for c in 0..ch {
                let p00 = image.get(x0, y0, c) as f64;
                let p10 = image.get(x1, y0, c) as f64;
                let p01 = image.get(x0, y1, c) as f64;
                let p11 = image.get(x1, y1, c) as f64;
                let top = p00 + (p10 - p00) * fx;
                let bottom = p01 + (p11 - p01) * fx;
                pixels.push(sample_from_f64(top + (bottom - top) * fy));
            }
        }
    }
    Image::new(out_w, out_h, ch, pixels)
}

/// Surrounds the image with a `border`-pixel frame of `fill` in every channel.
pub fn pad_image(image: &Image, border: usize, fill: u8) -> Image {
    if border == 0 {
        return image.clone();
    }
    let w = image.width + 2 * border;
    let h = image.height + 2 * border;
    let ch = image.channels;
    let mut pixels = vec![fill; w * h * ch];
    let row = image.width * ch;
    for y in 0..image.height {
        let dst = ((y + border) * w + border) * ch;
        pixels[dst..dst + row].copy_from_slice(&image.pixels[y * row..(y + 1) * row]);
    }
    Image {
        width: w,
        height: h,
        channels: ch,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, px: &[u8]) -> Image {
        Image::new(w, h, 1, px.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(Image::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(Image::new(2, 2, 1, vec![0; 3]).is_err());
    }

    #[test]
    fn grayscale_cases() {
        let g = gray(2, 1, &[3, 200]);
        assert_eq!(to_grayscale(&g), g);
        let white = Image::filled(1, 1, 3, 255).unwrap();
        assert_eq!(to_grayscale(&white).pixels(), &[255]);
        let red = Image::new(1, 1, 3, vec![255, 0, 0]).unwrap();
        // 0.299 * 255 = 76.245
        assert_eq!(to_grayscale(&red).pixels(), &[76]);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = gray(3, 2, &[1, 2, 3, 4, 5, 6]);
        assert_eq!(resize_bilinear(&img, 3, 2).unwrap(), img);
        let c = Image::filled(5, 7, 3, 42).unwrap();
        let r = resize_bilinear(&c, 11, 3).unwrap();
        assert!(r.pixels().iter().all(|&v| v == 42));
        assert!(resize_bilinear(&c, 0, 3).is_err());
    }

    #[test]
    fn resize_upsample_matches_direct_formula() {
        // Direct evaluation: src = (x + 0.5) * 2/4 - 0.5 → -0.25, 0.25, 0.75, 1.25,
        // clamped to [0, 1]; value = 255 * src.
        let img = gray(2, 1, &[0, 255]);
        let r = resize_bilinear(&img, 4, 1).unwrap();
        let expected: Vec<u8> = [-0.25f64, 0.25, 0.75, 1.25]
            .iter()
            .map(|s| (255.0 * s.clamp(0.0, 1.0)).round() as u8)
            .collect();
        assert_eq!(expected, vec![0, 64, 191, 255]);
        assert_eq!(r.pixels(), expected.as_slice());
    }

    #[test]
    fn pad_cases() {
        let img = gray(1, 1, &[9]);
        let p = pad_image(&img, 1, 0);
        assert_eq!(p.pixels(), &[0, 0, 0, 0, 9, 0, 0, 0, 0]);
        assert_eq!(pad_image(&img, 0, 7), img);
        let digit = Image::filled(28, 28, 1, 3).unwrap();
        let p = pad_image(&digit, 2, 0);
        assert_eq!((p.width(), p.height()), (32, 32));
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (1usize..12, 1usize..12, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(
            |(w, h, c)| {
                proptest::collection::vec(any::<u8>(), w * h * c)
                    .prop_map(move |px| Image::new(w, h, c, px).unwrap())
            },
        )
    }

    proptest! {
        #[test]
        fn pad_then_crop_is_identity(img in arb_image(), border in 0usize..4, fill: u8) {
            let p = pad_image(&img, border, fill);
            let back = p.crop(border, border, img.width(), img.height()).unwrap();
            prop_assert_eq!(back, img);
        }

        #[test]
        fn resize_stays_within_channel_range(img in arb_image(), w in 1usize..20, h in 1usize..20) {
            let r = resize_bilinear(&img, w, h).unwrap();
            for c in 0..img.channels() {
                let (lo, hi) = img.channel_range(c);
                let (rlo, rhi) = r.channel_range(c);
                prop_assert!(rlo >= lo && rhi <= hi);
            }
        }

        #[test]
        fn grayscale_idempotent(img in arb_image()) {
            let g = to_grayscale(&img);
            prop_assert_eq!(g.channels(), 1);
            prop_assert_eq!(to_grayscale(&g), g);
        }
    }
}
