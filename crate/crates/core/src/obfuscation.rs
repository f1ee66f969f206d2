//! The privacy transforms under attack: mosaicing, Gaussian blur and P3
//! coefficient thresholding.
//!
//! P3 operates on quantized coefficients. [`p3_public`] produces the decoded
//! public image (every coefficient clamped to the threshold, DC included),
//! while [`p3_split`] and [`p3_merge`] implement the lossless public/secret
//! decomposition in which the DC and every AC coefficient above the threshold
//! live in the secret part.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blockdct::{
    decode_plane, encode_plane, quality_to_table, BlockGrid, CoeffBlock, BLOCK_LEN,
};
use crate::error::{Error, Result};
use crate::formats;
use crate::image::{sample_from_f64, Image};

pub const DEFAULT_JPEG_QUALITY: u32 = 75;

/// How a coefficient above the threshold is replaced in the public part.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClampRule {
    /// `sign(c) · T`
    #[default]
    Signed,
    /// `T` regardless of sign
    Unsigned,
}

impl ClampRule {
    #[inline]
    pub fn apply(self, c: i32, threshold: i32) -> i32 {
        match self {
            ClampRule::Signed => c.clamp(-threshold, threshold),
            ClampRule::Unsigned if c.abs() > threshold => threshold,
            ClampRule::Unsigned => c,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Obfuscation {
    #[default]
    None,
    Mosaic {
        window: usize,
    },
    Blur {
        sigma: f64,
    },
    P3 {
        threshold: u32,
        #[serde(default = "default_quality")]
        quality: u32,
        #[serde(default)]
        clamp: ClampRule,
    },
}

fn default_quality() -> u32 {
    DEFAULT_JPEG_QUALITY
}

impl Obfuscation {
    pub fn p3(threshold: u32) -> Self {
        Obfuscation::P3 {
            threshold,
            quality: DEFAULT_JPEG_QUALITY,
            clamp: ClampRule::Signed,
        }
    }

    /// Blur strength used when none is given: wide enough that 92-pixel faces
    /// lose identifying detail.
    pub fn default_blur_sigma(width: usize) -> f64 {
        (width as f64 / 16.0).max(2.0)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Obfuscation::None => Ok(()),
            Obfuscation::Mosaic { window } if window >= 1 => Ok(()),
            Obfuscation::Mosaic { .. } => Err(Error::Argument("mosaic window must be ≥ 1".into())),
            Obfuscation::Blur { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            Obfuscation::Blur { .. } => Err(Error::Argument("blur sigma must be > 0".into())),
            Obfuscation::P3 {
                threshold, quality, ..
            } => {
                if threshold < 1 {
                    return Err(Error::Argument("P3 threshold must be ≥ 1".into()));
                }
                quality_to_table(quality).map(|_| ())
            }
        }
    }

    /// Short identifier such as `mosaic8`, `p3-20` or `blur5.75`.
    pub fn label(&self) -> String {
        match *self {
            Obfuscation::None => "original".into(),
            Obfuscation::Mosaic { window } => format!("mosaic{window}"),
            Obfuscation::Blur { sigma } => format!("blur{sigma}"),
            Obfuscation::P3 { threshold, .. } => format!("p3-{threshold}"),
        }
    }
}

/// Replaces every `window × window` cell (anchored at the top-left corner)
/// with its per-channel mean. Edge cells average the pixels they contain.
pub fn mosaic(image: &Image, window: usize) -> Image {
    assert!(window >= 1, "mosaic window must be ≥ 1");
    if window == 1 {
        return image.clone();
    }
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let mut out = image.clone();
    for cy in (0..h).step_by(window) {
        let y1 = (cy + window).min(h);
        for cx in (0..w).step_by(window) {
            let x1 = (cx + window).min(w);
            let n = ((y1 - cy) * (x1 - cx)) as f64;
            for c in 0..ch {
                let mut sum = 0u64;
                for y in cy..y1 {
                    for x in cx..x1 {
                        sum += image.get(x, y, c) as u64;
                    }
                }
                let mean = sample_from_f64(sum as f64 / n);
                for y in cy..y1 {
                    for x in cx..x1 {
                        out.set(x, y, c, mean);
                    }
                }
            }
        }
    }
    out
}

/// Normalized 1-D Gaussian with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with replicated edges.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;
    let mut horiz = vec![0.0f64; w * h * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                horiz[(y * w + x) * ch + c] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| {
                        wt * image.get(clamp(x as isize + k as isize - r, w), y, c) as f64
                    })
                    .sum();
            }
        }
    }
    let mut pixels = vec![0u8; w * h * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| {
                        wt * horiz[(clamp(y as isize + k as isize - r, h) * w + x) * ch + c]
                    })
                    .sum();
                pixels[(y * w + x) * ch + c] = sample_from_f64(v);
            }
        }
    }
    Image::new(w, h, ch, pixels).expect("dimensions preserved")
}

fn threshold_i32(threshold: u32) -> Result<i32> {
    if threshold < 1 {
        return Err(Error::Argument("P3 threshold must be ≥ 1".into()));
    }
    Ok(threshold.min(i32::MAX as u32) as i32)
}

/// Quantized coefficients of every channel, as the JPEG encoder would store them.
pub fn quantized_channels(image: &Image, quality: u32) -> Result<Vec<BlockGrid<CoeffBlock>>> {
    let table = quality_to_table(quality)?;
    (0..image.channels())
        .map(|c| encode_plane(&image.plane(c), image.width(), image.height(), &table))
        .collect()
}

/// Decoded public image: every quantized coefficient `c` with `|c| > T` is
/// replaced by the clamp rule, then the image is decoded.
pub fn p3_public_with(image: &Image, threshold: u32, quality: u32, rule: ClampRule) -> Result<Image> {
    let t = threshold_i32(threshold)?;
    let table = quality_to_table(quality)?;
    let planes = (0..image.channels())
        .map(|c| {
            let grid = encode_plane(&image.plane(c), image.width(), image.height(), &table)?;
            let clamped = grid.map(|b| CoeffBlock(b.0.map(|v| rule.apply(v, t))));
            decode_plane(&clamped, &table)
        })
        .collect::<Result<Vec<_>>>()?;
    Image::from_planes(image.width(), image.height(), &planes)
}

pub fn p3_public(image: &Image, threshold: u32, quality: u32) -> Result<Image> {
    p3_public_with(image, threshold, quality, ClampRule::Signed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PublicCoeffs {
    pub grid: BlockGrid<CoeffBlock>,
    pub threshold: u32,
    pub quality: u32,
}

/// Per block, the `(index, original value)` pairs removed from the public part.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretCoeffs {
    pub blocks_w: usize,
    pub blocks_h: usize,
    pub width: usize,
    pub height: usize,
    pub threshold: u32,
    pub quality: u32,
    pub entries: Vec<Vec<(u8, i32)>>,
}

impl SecretCoeffs {
    pub fn entry_count(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }
}

/// Splits one channel into its public and secret coefficient sets.
///
/// The DC of every block and each AC coefficient with `|c| > T` go to the
/// secret part; the public part holds the clamped value in their place, so it
/// equals the coefficients [`p3_public`] decodes.
pub fn p3_split(
    plane: &[u8],
    width: usize,
    height: usize,
    threshold: u32,
    quality: u32,
    rule: ClampRule,
) -> Result<(PublicCoeffs, SecretCoeffs)> {
    let t = threshold_i32(threshold)?;
    let table = quality_to_table(quality)?;
    let grid = encode_plane(plane, width, height, &table)?;
    let mut entries = Vec::with_capacity(grid.blocks.len());
    let public = grid.map(|b| {
        let mut secret = vec![(0u8, b.0[0])];
        secret.extend(
            b.0.iter()
                .enumerate()
                .skip(1)
                .filter(|(_, c)| c.abs() > t)
                .map(|(i, &c)| (i as u8, c)),
        );
        entries.push(secret);
        CoeffBlock(b.0.map(|v| rule.apply(v, t)))
    });
    let secret = SecretCoeffs {
        blocks_w: grid.blocks_w,
        blocks_h: grid.blocks_h,
        width,
        height,
        threshold,
        quality,
        entries,
    };
    Ok((
        PublicCoeffs {
            grid: public,
            threshold,
            quality,
        },
        secret,
    ))
}

/// Splits every channel of an image.
pub fn p3_split_image(
    image: &Image,
    threshold: u32,
    quality: u32,
    rule: ClampRule,
) -> Result<Vec<(PublicCoeffs, SecretCoeffs)>> {
    (0..image.channels())
        .map(|c| p3_split(&image.plane(c), image.width(), image.height(), threshold, quality, rule))
        .collect()
}

/// Copies every secret coefficient back into its place in the public grid.
pub fn p3_merge(public: &PublicCoeffs, secret: &SecretCoeffs) -> Result<BlockGrid<CoeffBlock>> {
    let g = &public.grid;
    g.check()?;
    if (g.blocks_w, g.blocks_h, g.width, g.height)
        != (secret.blocks_w, secret.blocks_h, secret.width, secret.height)
    {
        return Err(Error::Argument(format!(
            "public grid {}×{} blocks ({}×{} px) does not match secret {}×{} blocks ({}×{} px)",
            g.blocks_w,
            g.blocks_h,
            g.width,
            g.height,
            secret.blocks_w,
            secret.blocks_h,
            secret.width,
            secret.height
        )));
    }
    if public.threshold != secret.threshold || public.quality != secret.quality {
        return Err(Error::Argument(format!(
            "public (T={}, q={}) and secret (T={}, q={}) disagree",
            public.threshold, public.quality, secret.threshold, secret.quality
        )));
    }
    if secret.entries.len() != g.blocks.len() {
        return Err(Error::Argument("secret block count does not match grid".into()));
    }
    let mut merged = g.clone();
    for (block, entries) in merged.blocks.iter_mut().zip(&secret.entries) {
        for &(idx, v) in entries {
            let slot = block.0.get_mut(idx as usize).ok_or_else(|| {
                Error::Argument(format!("secret coefficient index {idx} out of range"))
            })?;
            *slot = v;
        }
    }
    Ok(merged)
}

pub fn apply_obfuscation(image: &Image, spec: &Obfuscation) -> Result<Image> {
    spec.validate()?;
    match *spec {
        Obfuscation::None => Ok(image.clone()),
        Obfuscation::Mosaic { window } => Ok(mosaic(image, window)),
        Obfuscation::Blur { sigma } => Ok(gaussian_blur(image, sigma)),
        Obfuscation::P3 {
            threshold,
            quality,
            clamp,
        } => p3_public_with(image, threshold, quality, clamp),
    }
}

// ---------------------------------------------------------------------------
// P3LB record stream

const P3_MAGIC: &[u8; 4] = b"P3LB";
const P3_VERSION: u16 = 1;

/// One serialized coefficient set. Little-endian layout:
///
/// ```text
/// "P3LB" | version u16 | kind u8 (0 public, 1 secret)
/// blocks_w u32 | blocks_h u32 | width u32 | height u32 | threshold u32 | quality u8
/// per block: count u8, then count × (index u8, value i16)
/// ```
///
/// Public records store only the non-zero coefficients of each block.
#[derive(Clone, Debug, PartialEq)]
pub enum P3Record {
    Public(PublicCoeffs),
    Secret(SecretCoeffs),
}

fn push_value(out: &mut Vec<u8>, idx: usize, v: i32) -> Result<()> {
    let v = i16::try_from(v)
        .map_err(|_| Error::Argument(format!("coefficient {v} does not fit in 16 bits")))?;
    out.push(idx as u8);
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl P3Record {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (kind, dims, threshold, quality) = match self {
            P3Record::Public(p) => (
                0u8,
                (p.grid.blocks_w, p.grid.blocks_h, p.grid.width, p.grid.height),
                p.threshold,
                p.quality,
            ),
            P3Record::Secret(s) => (
                1u8,
                (s.blocks_w, s.blocks_h, s.width, s.height),
                s.threshold,
                s.quality,
            ),
        };
        let mut out = Vec::new();
        out.extend_from_slice(P3_MAGIC);
        out.extend_from_slice(&P3_VERSION.to_le_bytes());
        out.push(kind);
        for v in [dims.0, dims.1, dims.2, dims.3] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&threshold.to_le_bytes());
        out.push(quality as u8);
        match self {
            P3Record::Public(p) => {
                p.grid.check()?;
                for b in &p.grid.blocks {
                    out.push(b.0.iter().filter(|&&v| v != 0).count() as u8);
                    for (i, &v) in b.0.iter().enumerate().filter(|(_, &v)| v != 0) {
                        push_value(&mut out, i, v)?;
                    }
                }
            }
            P3Record::Secret(s) => {
                if s.entries.len() != s.blocks_w * s.blocks_h {
                    return Err(Error::Argument("secret block count does not match grid".into()));
                }
                for entries in &s.entries {
                    out.push(entries.len() as u8);
                    for &(i, v) in entries {
                        push_value(&mut out, i as usize, v)?;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::format(path, pos as u64, "truncated P3 record"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != P3_MAGIC {
            return Err(Error::format(path, 0, "missing P3LB magic"));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != P3_VERSION {
            return Err(Error::format(path, 4, format!("unsupported version {version}")));
        }
        let kind = take(1)?[0];
        let mut u32s = [0usize; 5];
        for v in &mut u32s {
            *v = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        }
        let [blocks_w, blocks_h, width, height, threshold] = u32s;
        let quality = take(1)?[0] as u32;
        let n_blocks = blocks_w * blocks_h;
        let mut blocks: Vec<Vec<(u8, i32)>> = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let count = take(1)?[0] as usize;
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                let rec = take(3)?;
                if rec[0] as usize >= BLOCK_LEN {
                    return Err(Error::format(path, 0, format!("coefficient index {}", rec[0])));
                }
                entries.push((rec[0], i16::from_le_bytes([rec[1], rec[2]]) as i32));
            }
            blocks.push(entries);
        }
        if pos != bytes.len() {
            return Err(Error::format(path, pos as u64, "trailing bytes after P3 record"));
        }
        let threshold = threshold as u32;
        match kind {
            0 => {
                let grid = BlockGrid {
                    blocks_w,
                    blocks_h,
                    width,
                    height,
                    blocks: blocks
                        .iter()
                        .map(|e| {
                            let mut b = CoeffBlock::default();
                            for &(i, v) in e {
                                b.0[i as usize] = v;
                            }
                            b
                        })
                        .collect(),
                };
                grid.check()?;
                Ok(P3Record::Public(PublicCoeffs {
                    grid,
                    threshold,
                    quality,
                }))
            }
            1 => Ok(P3Record::Secret(SecretCoeffs {
                blocks_w,
                blocks_h,
                width,
                height,
                threshold,
                quality,
                entries: blocks,
            })),
            k => Err(Error::format(path, 6, format!("unknown record kind {k}"))),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        formats::write_file(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&formats::read_file(path)?, path)
    }
}
