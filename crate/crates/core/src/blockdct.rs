//! 8×8 block DCT, JPEG quantization and the tiling between images and blocks.
//!
//! The transform is the orthonormal DCT-II, so a constant level-shifted block
//! of value `v` has DC coefficient `8v` and energy is preserved exactly.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::sample_from_f64;

pub const BLOCK_SIDE: usize = 8;
pub const BLOCK_LEN: usize = BLOCK_SIDE * BLOCK_SIDE;

/// Level-shifted (pixel − 128) samples, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Block(pub [f64; BLOCK_LEN]);

/// Quantized coefficients, row-major; index 0 is DC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CoeffBlock(pub [i32; BLOCK_LEN]);

impl Default for Block {
    fn default() -> Self {
        Block([0.0; BLOCK_LEN])
    }
}

impl Default for CoeffBlock {
    fn default() -> Self {
        CoeffBlock([0; BLOCK_LEN])
    }
}

/// JPEG Annex K luminance table, natural (row-major) order.
pub const ANNEX_K_LUMINANCE: [u16; BLOCK_LEN] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99, //
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantTable {
    entries: [u16; BLOCK_LEN],
    quality: u8,
}

impl QuantTable {
    pub fn entries(&self) -> &[u16; BLOCK_LEN] {
        &self.entries
    }

    pub fn quality(&self) -> u8 {
        self.quality
    }
}

/// IJG quality scaling of the Annex K luminance table.
pub fn quality_to_table(quality: u32) -> Result<QuantTable> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Argument(format!(
            "JPEG quality must be in 1..=100, got {quality}"
        )));
    }
    let scale = if quality < 50 {
        5000 / quality
    } else {
        200 - 2 * quality
    };
    let mut entries = [0u16; BLOCK_LEN];
    for (e, &base) in entries.iter_mut().zip(&ANNEX_K_LUMINANCE) {
        *e = ((base as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    Ok(QuantTable {
        entries,
        quality: quality as u8,
    })
}

/// Orthonormal DCT-II basis: `basis[u][x] = a(u) cos((2x + 1) u π / 16)`.
fn basis() -> &'static [[f64; BLOCK_SIDE]; BLOCK_SIDE] {
    static BASIS: OnceLock<[[f64; BLOCK_SIDE]; BLOCK_SIDE]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; BLOCK_SIDE]; BLOCK_SIDE];
        for (u, row) in m.iter_mut().enumerate() {
            let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = a * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        m
    })
}

/// `C · X · Cᵀ` when `transpose` is false, `Cᵀ · X · C` otherwise.
fn separable(input: &[f64; BLOCK_LEN], transpose: bool) -> [f64; BLOCK_LEN] {
    let c = basis();
    let at = |i: usize, j: usize| if transpose { c[j][i] } else { c[i][j] };
    let mut tmp = [0.0; BLOCK_LEN];
    for i in 0..BLOCK_SIDE {
        for col in 0..BLOCK_SIDE {
            tmp[i * BLOCK_SIDE + col] = (0..BLOCK_SIDE)
                .map(|k| at(i, k) * input[k * BLOCK_SIDE + col])
                .sum();
        }
    }
    let mut out = [0.0; BLOCK_LEN];
    for i in 0..BLOCK_SIDE {
        for j in 0..BLOCK_SIDE {
            out[i * BLOCK_SIDE + j] = (0..BLOCK_SIDE)
                .map(|k| tmp[i * BLOCK_SIDE + k] * at(j, k))
                .sum();
        }
    }
    out
}

pub fn dct2d_forward(block: &Block) -> [f64; BLOCK_LEN] {
    separable(&block.0, false)
}

pub fn dct2d_inverse(coeffs: &[f64; BLOCK_LEN]) -> Block {
    Block(separable(coeffs, true))
}

pub fn quantize(coeffs: &[f64; BLOCK_LEN], table: &QuantTable) -> CoeffBlock {
    let mut out = [0i32; BLOCK_LEN];
    for ((o, &c), &q) in out.iter_mut().zip(coeffs).zip(&table.entries) {
        *o = (c / q as f64).round() as i32;
    }
    CoeffBlock(out)
}

pub fn dequantize(block: &CoeffBlock, table: &QuantTable) -> [f64; BLOCK_LEN] {
    let mut out = [0.0; BLOCK_LEN];
    for ((o, &c), &q) in out.iter_mut().zip(&block.0).zip(&table.entries) {
        *o = c as f64 * q as f64;
    }
    out
}

/// Row-major grid of blocks covering a `width × height` channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrid<B> {
    pub blocks_w: usize,
    pub blocks_h: usize,
    pub width: usize,
    pub height: usize,
    pub blocks: Vec<B>,
}

impl<B> BlockGrid<B> {
    pub fn check(&self) -> Result<()> {
        if self.blocks.len() != self.blocks_w * self.blocks_h {
            return Err(Error::Argument(format!(
                "grid holds {} blocks, expected {}×{}",
                self.blocks.len(),
                self.blocks_w,
                self.blocks_h
            )));
        }
        if self.width > self.blocks_w * BLOCK_SIDE
            || self.height > self.blocks_h * BLOCK_SIDE
            || self.width + BLOCK_SIDE <= self.blocks_w * BLOCK_SIDE
            || self.height + BLOCK_SIDE <= self.blocks_h * BLOCK_SIDE
        {
            return Err(Error::Argument(format!(
                "source size {}×{} inconsistent with a {}×{} block grid",
                self.width, self.height, self.blocks_w, self.blocks_h
            )));
        }
        Ok(())
    }

    pub fn map<C>(&self, f: impl FnMut(&B) -> C) -> BlockGrid<C> {
        BlockGrid {
            blocks_w: self.blocks_w,
            blocks_h: self.blocks_h,
            width: self.width,
            height: self.height,
            blocks: self.blocks.iter().map(f).collect(),
        }
    }
}

/// Tiles a single-channel plane into level-shifted 8×8 blocks. Partial edge
/// blocks replicate the last row/column.
pub fn image_to_blocks(plane: &[u8], width: usize, height: usize) -> Result<BlockGrid<Block>> {
    if plane.len() != width * height || width == 0 || height == 0 {
        return Err(Error::Argument(format!(
            "plane of {} samples does not describe a non-empty {width}×{height} channel",
            plane.len()
        )));
    }
    let blocks_w = width.div_ceil(BLOCK_SIDE);
    let blocks_h = height.div_ceil(BLOCK_SIDE);
    let mut blocks = Vec::with_capacity(blocks_w * blocks_h);
    for by in 0..blocks_h {
        for bx in 0..blocks_w {
            let mut b = [0.0; BLOCK_LEN];
            for y in 0..BLOCK_SIDE {
                let sy = (by * BLOCK_SIDE + y).min(height - 1);
                for x in 0..BLOCK_SIDE {
                    let sx = (bx * BLOCK_SIDE + x).min(width - 1);
                    b[y * BLOCK_SIDE + x] = plane[sy * width + sx] as f64 - 128.0;
                }
            }
            blocks.push(Block(b));
        }
    }
    Ok(BlockGrid {
        blocks_w,
        blocks_h,
        width,
        height,
        blocks,
    })
}

/// Inverse of [`image_to_blocks`]: un-shift, round, clamp and crop.
pub fn blocks_to_image(grid: &BlockGrid<Block>) -> Result<Vec<u8>> {
    grid.check()?;
    let mut plane = vec![0u8; grid.width * grid.height];
    for (i, block) in grid.blocks.iter().enumerate() {
        let (bx, by) = (i % grid.blocks_w, i / grid.blocks_w);
        for y in 0..BLOCK_SIDE {
            let py = by * BLOCK_SIDE + y;
            if py >= grid.height {
                break;
            }
            for x in 0..BLOCK_SIDE {
                let px = bx * BLOCK_SIDE + x;
                if px >= grid.width {
                    break;
                }
                plane[py * grid.width + px] = sample_from_f64(block.0[y * BLOCK_SIDE + x] + 128.0);
            }
        }
    }
    Ok(plane)
}

/// Plane → quantized coefficient grid (the JPEG encoding path minus entropy coding).
pub fn encode_plane(
    plane: &[u8],
    width: usize,
    height: usize,
    table: &QuantTable,
) -> Result<BlockGrid<CoeffBlock>> {
    Ok(image_to_blocks(plane, width, height)?.map(|b| quantize(&dct2d_forward(b), table)))
}

/// Quantized coefficient grid → plane.
pub fn decode_plane(grid: &BlockGrid<CoeffBlock>, table: &QuantTable) -> Result<Vec<u8>> {
    blocks_to_image(&grid.map(|c| dct2d_inverse(&dequantize(c, table))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook double sum, O(64²).
    fn naive_dct(x: &[f64; BLOCK_LEN]) -> [f64; BLOCK_LEN] {
        let a = |k: usize| if k == 0 { (0.125f64).sqrt() } else { (0.25f64).sqrt() };
        let mut out = [0.0; BLOCK_LEN];
        for u in 0..8 {
            for v in 0..8 {
                let mut s = 0.0;
                for i in 0..8 {
                    for j in 0..8 {
                        s += x[i * 8 + j]
                            * (((2 * i + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos()
                            * (((2 * j + 1) * v) as f64 * std::f64::consts::PI / 16.0).cos();
                    }
                }
                out[u * 8 + v] = a(u) * a(v) * s;
            }
        }
        out
    }

    fn arb_block() -> impl Strategy<Value = Block> {
        proptest::array::uniform32(-128.0f64..128.0).prop_flat_map(|a| {
            proptest::array::uniform32(-128.0f64..128.0).prop_map(move |b| {
                let mut x = [0.0; BLOCK_LEN];
                x[..32].copy_from_slice(&a);
                x[32..].copy_from_slice(&b);
                Block(x)
            })
        })
    }

    #[test]
    fn constant_blocks() {
        assert!(dct2d_forward(&Block::default()).iter().all(|&c| c == 0.0));
        let f = dct2d_forward(&Block([10.0; BLOCK_LEN]));
        assert!((f[0] - 80.0).abs() < 1e-12);
        assert!(f[1..].iter().all(|c| c.abs() < 1e-12));
        let mut dc = [0.0; BLOCK_LEN];
        dc[0] = 8.0;
        assert!(dct2d_inverse(&dc).0.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(dct2d_inverse(&[0.0; BLOCK_LEN]).0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quality_tables_match_libjpeg() {
        // DQT tables emitted by libjpeg 6.2 (through Pillow) for a grayscale image.
        let q50 = quality_to_table(50).unwrap();
        assert_eq!(q50.entries(), &ANNEX_K_LUMINANCE);
        let q75: [u16; 64] = [
            8, 6, 5, 8, 12, 20, 26, 31, 6, 6, 7, 10, 13, 29, 30, 28, 7, 7, 8, 12, 20, 29, 35, 28,
            7, 9, 11, 15, 26, 44, 40, 31, 9, 11, 19, 28, 34, 55, 52, 39, 12, 18, 28, 32, 41, 52,
            57, 46, 25, 32, 39, 44, 52, 61, 60, 51, 36, 46, 48, 49, 56, 50, 52, 50,
        ];
        assert_eq!(quality_to_table(75).unwrap().entries(), &q75);
        let q10: [u16; 64] = [
            80, 55, 50, 80, 120, 200, 255, 255, 60, 60, 70, 95, 130, 255, 255, 255, 70, 65, 80,
            120, 200, 255, 255, 255, 70, 85, 110, 145, 255, 255, 255, 255, 90, 110, 185, 255, 255,
            255, 255, 255, 120, 175, 255, 255, 255, 255, 255, 255, 245, 255, 255, 255, 255, 255,
            255, 255, 255, 255, 255, 255, 255, 255, 255, 255,
        ];
        assert_eq!(quality_to_table(10).unwrap().entries(), &q10);
        assert!(quality_to_table(100).unwrap().entries().iter().all(|&e| e == 1));
        assert!(quality_to_table(0).is_err());
        assert!(quality_to_table(101).is_err());
    }

    #[test]
    fn table_non_increasing_in_quality() {
        let tables: Vec<_> = (1..=100).map(|q| quality_to_table(q).unwrap()).collect();
        for w in tables.windows(2) {
            assert!(w[0].entries().iter().zip(w[1].entries()).all(|(a, b)| a >= b));
        }
    }

    #[test]
    fn quantize_rounding() {
        let mut t = quality_to_table(50).unwrap();
        t.entries = [16; BLOCK_LEN];
        let mut c = [0.0; BLOCK_LEN];
        c[0] = 33.0;
        c[1] = -24.0;
        c[2] = 24.0;
        let q = quantize(&c, &t);
        assert_eq!(&q.0[..4], &[2, -2, 2, 0]);
        let d = dequantize(&q, &t);
        assert_eq!(&d[..3], &[32.0, -32.0, 32.0]);
        assert!(dequantize(&CoeffBlock::default(), &t).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiling_sizes_and_padding() {
        let g = image_to_blocks(&[7; 32 * 32], 32, 32).unwrap();
        assert_eq!((g.blocks_w, g.blocks_h, g.blocks.len()), (4, 4, 16));
        let g = image_to_blocks(&vec![0; 92 * 112], 92, 112).unwrap();
        assert_eq!((g.blocks_w, g.blocks_h), (92usize.div_ceil(8), 112usize.div_ceil(8)));
        assert_eq!((g.blocks_w, g.blocks_h), (12, 14));
        let g = image_to_blocks(&[128; 64 * 8], 64, 8).unwrap();
        assert!(g.blocks.iter().all(|b| b.0.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn edge_replication_and_crop() {
        let plane: Vec<u8> = (0..9u8 * 3).collect();
        let g = image_to_blocks(&plane, 9, 3).unwrap();
        assert_eq!((g.blocks_w, g.blocks_h), (2, 1));
        // column 8 of the source is replicated across the second block
        let last_col = plane[8] as f64 - 128.0;
        assert!(g.blocks[1].0[..8].iter().all(|&v| v == last_col));
        // rows 3..8 replicate row 2
        assert_eq!(g.blocks[0].0[7 * 8], plane[2 * 9] as f64 - 128.0);
        assert_eq!(blocks_to_image(&g).unwrap(), plane);
    }

    #[test]
    fn decode_clamps_and_checks_grid() {
        let mut g = image_to_blocks(&[0; 64], 8, 8).unwrap();
        g.blocks[0].0[0] = -133.0;
        assert_eq!(blocks_to_image(&g).unwrap()[0], 0);
        g.blocks.push(Block::default());
        assert!(blocks_to_image(&g).is_err());
        let mut g = image_to_blocks(&[0; 64], 8, 8).unwrap();
        g.width = 20;
        assert!(blocks_to_image(&g).is_err());
    }

    proptest! {
        #[test]
        fn matches_naive_oracle(b in arb_block()) {
            let fast = dct2d_forward(&b);
            let slow = naive_dct(&b.0);
            for (x, y) in fast.iter().zip(&slow) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn roundtrip_and_parseval(b in arb_block()) {
            let f = dct2d_forward(&b);
            let back = dct2d_inverse(&f);
            for (x, y) in back.0.iter().zip(&b.0) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let e_in: f64 = b.0.iter().map(|v| v * v).sum();
            let e_out: f64 = f.iter().map(|v| v * v).sum();
            prop_assert!((e_in - e_out).abs() <= 1e-6 * e_in.max(1e-300));
        }

        #[test]
        fn linear(x in arb_block(), y in arb_block(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
            let mut mix = [0.0; BLOCK_LEN];
            for i in 0..BLOCK_LEN { mix[i] = a * x.0[i] + c * y.0[i]; }
            let (fx, fy, fm) = (dct2d_forward(&x), dct2d_forward(&y), dct2d_forward(&Block(mix)));
            for i in 0..BLOCK_LEN {
                prop_assert!((fm[i] - (a * fx[i] + c * fy[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn requantization_is_stable(
            coeffs in proptest::collection::vec(-200i32..200, BLOCK_LEN),
            quality in 1u32..=100,
        ) {
            let t = quality_to_table(quality).unwrap();
            let mut b = CoeffBlock::default();
            b.0.copy_from_slice(&coeffs);
            prop_assert_eq!(quantize(&dequantize(&b, &t), &t), b);
        }

        #[test]
        fn aligned_tiling_roundtrip(bw in 1usize..4, bh in 1usize..4, seed: u64) {
            let (w, h) = (bw * 8, bh * 8);
            let plane: Vec<u8> = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
            let g = image_to_blocks(&plane, w, h).unwrap();
            prop_assert_eq!(blocks_to_image(&g).unwrap(), plane);
        }

        #[test]
        fn unaligned_tiling_roundtrip(w in 1usize..30, h in 1usize..30, seed: u64) {
            let plane: Vec<u8> = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 3) >> 11) as u8).collect();
            let g = image_to_blocks(&plane, w, h).unwrap();
            prop_assert_eq!(blocks_to_image(&g).unwrap(), plane);
        }
    }
}
