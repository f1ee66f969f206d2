use std::path::Path;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::image::Image;

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::format(path, 0, "not a netpbm file"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, pos as u64, "expected a header number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, start as u64, "header number out of range"))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(path, pos as u64, "missing whitespace after maxval")),
    }
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_offset: pos,
    })
}

/// Decodes binary PGM (`P5`) or PPM (`P6`) with maxval 255.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(b"P2") | Some(b"P3") => {
            return Err(Error::format(
                path,
                0,
                "ASCII netpbm (P2/P3) is not supported; expected binary P5/P6",
            ))
        }
        _ => return Err(Error::format(path, 0, "expected binary PGM (P5) or PPM (P6)")),
    };
    let h = parse_header(bytes, path)?;
    debug_assert_eq!(h.magic[0], b'P');
    if h.maxval != 255 {
        return Err(Error::format(
            path,
            h.data_offset as u64,
            format!("maxval {} unsupported, expected 255", h.maxval),
        ));
    }
    let len = h.width * h.height * channels;
    let raster = bytes
        .get(h.data_offset..h.data_offset + len)
        .ok_or_else(|| Error::format(path, bytes.len() as u64, "truncated raster"))?;
    Image::new(h.width, h.height, channels, raster.to_vec())
}

pub fn encode_pnm(image: &Image) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    decode_pnm(&read_file(path)?, path)
}

pub fn write_pnm(image: &Image, path: &Path) -> Result<()> {
    write_file(path, &encode_pnm(image))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_header_with_comments() {
        let mut bytes = b"P5\n# made by hand\n3 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        let img = decode_pnm(&bytes, Path::new("x.pgm")).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (3, 1, 1));
        assert_eq!(img.pixels(), &[1, 2, 3]);
    }

    #[test]
    fn roundtrip_ppm() {
        let img = Image::new(2, 1, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let back = decode_pnm(&encode_pnm(&img), Path::new("x.ppm")).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn rejects_ascii_and_deep_maxval() {
        let p = Path::new("x.pgm");
        assert!(decode_pnm(b"P2\n1 1\n255\n7\n", p).unwrap_err().to_string().contains("ASCII"));
        let mut deep = b"P5\n1 1\n65535\n".to_vec();
        deep.extend_from_slice(&[0, 0]);
        assert!(decode_pnm(&deep, p).unwrap_err().to_string().contains("maxval"));
        assert!(decode_pnm(b"P5\n2 2\n255\n\x01", p).is_err());
    }
}
