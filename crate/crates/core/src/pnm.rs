//! Binary portable anymap I/O.
//!
//! P5 (graymap) is the canonical format, read and written. P6 (pixmap) is
//! accepted on input and reduced to gray with BT.601 luminance weights.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{BinaryImage, FloatImage, GrayImage};

/// Any raster that can be written as a P5 file.
#[derive(Debug, Clone, Copy)]
pub enum ImageRef<'a> {
    Gray(&'a GrayImage),
    Binary(&'a BinaryImage),
}

impl<'a> From<&'a GrayImage> for ImageRef<'a> {
    fn from(image: &'a GrayImage) -> Self {
        ImageRef::Gray(image)
    }
}

impl<'a> From<&'a BinaryImage> for ImageRef<'a> {
    fn from(image: &'a BinaryImage) -> Self {
        ImageRef::Binary(image)
    }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() {
        match bytes[pos] {
            b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => pos += 1,
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            _ => break,
        }
    }
    pos
}

fn read_number(bytes: &[u8], pos: usize, field: &str) -> Result<(u64, usize)> {
    let start = skip_space_and_comments(bytes, pos);
    let mut end = start;
    let mut value: u64 = 0;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add(u64::from(bytes[end] - b'0')))
            .ok_or_else(|| Error::MalformedHeader(format!("{field} overflows")))?;
        end += 1;
    }
    if end == start {
        return Err(Error::MalformedHeader(format!("missing {field}")));
    }
    Ok((value, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::MalformedHeader("file too short".into()));
    }
    let magic = [bytes[0], bytes[1]];
    if magic != *b"P5" && magic != *b"P6" {
        return Err(Error::UnsupportedFormat(String::from_utf8_lossy(&magic).into_owned()));
    }
    let (width, pos) = read_number(bytes, 2, "width")?;
    let (height, pos) = read_number(bytes, pos, "height")?;
    let (maxval, pos) = read_number(bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 {
        return Err(Error::MalformedHeader("maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedDepth(u32::try_from(maxval).unwrap_or(u32::MAX)));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(Error::MalformedHeader("expected whitespace after maxval".into())),
    }
    let width = usize::try_from(width).map_err(|_| Error::MalformedHeader("width too large".into()))?;
    let height = usize::try_from(height).map_err(|_| Error::MalformedHeader("height too large".into()))?;
    Ok(Header {
        magic,
        width,
        height,
        maxval: maxval as u32,
        data_offset: pos + 1,
    })
}

fn rescale(value: u8, maxval: u32) -> u8 {
    if maxval == 255 {
        value
    } else {
        let v = u32::from(value).min(maxval);
        ((v * 255 + maxval / 2) / maxval) as u8
    }
}

/// BT.601 luma, rounded to nearest.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

/// Decodes a P5 or P6 byte stream.
pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    let header = parse_header(bytes)?;
    let channels = if header.magic == *b"P6" { 3 } else { 1 };
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::MalformedHeader("image dimensions overflow".into()))?;
    let raster = &bytes[header.data_offset.min(bytes.len())..];
    if raster.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            found: raster.len(),
        });
    }
    let raster = &raster[..expected];
    let data = if channels == 1 {
        raster.iter().map(|&v| rescale(v, header.maxval)).collect()
    } else {
        raster
            .chunks_exact(3)
            .map(|px| {
                luminance(
                    rescale(px[0], header.maxval),
                    rescale(px[1], header.maxval),
                    rescale(px[2], header.maxval),
                )
            })
            .collect()
    };
    GrayImage::new(header.width, header.height, data)
}

/// Encodes as P5 with maxval 255.
pub fn encode<'a>(image: impl Into<ImageRef<'a>>) -> Vec<u8> {
    let gray;
    let image = match image.into() {
        ImageRef::Gray(g) => g,
        ImageRef::Binary(b) => {
            gray = b.to_gray();
            &gray
        }
    };
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

/// Loads an image and splits it at gray level 128 (dark = foreground).
pub fn load_binary(path: impl AsRef<Path>) -> Result<BinaryImage> {
    load_image(path).map(|g| BinaryImage::from_gray(&g))
}

/// Writes a P5 file. The bytes go to a temporary sibling first and are
/// renamed into place, so a failed write never leaves a partial file.
pub fn save_image<'a>(image: impl Into<ImageRef<'a>>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, &encode(image))
}

/// Saves a float image in [0, 1] as 8-bit, scaling by `1 / max` first when
/// `normalize` is set.
pub fn save_float(image: &FloatImage, normalize: bool, path: impl AsRef<Path>) -> Result<()> {
    let gray = if normalize {
        let max = image.max();
        if max > 0.0 {
            image.map(|v| v / max).to_gray()
        } else {
            image.to_gray()
        }
    } else {
        image.to_gray()
    };
    save_image(&gray, path)
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let wrap = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.flush().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_p5_bit_exact() {
        let bytes = b"P5\n2 2\n255\n\x00\x80\xff\x40";
        let img = decode(bytes).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.data(), &[0, 128, 255, 64]);
    }

    #[test]
    fn decodes_p6_by_luminance() {
        let white = decode(b"P6 1 1 255\n\xff\xff\xff").unwrap();
        assert_eq!(white.data(), &[255]);
        // round(0.299 * 255) = round(76.245) = 76
        let red = decode(b"P6 1 1 255\n\xff\x00\x00").unwrap();
        assert_eq!(red.data(), &[76]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = decode(b"P5\n# made by hand\n1 # width done\n1\n255\n\x2a").unwrap();
        assert_eq!(img.data(), &[42]);
    }

    #[test]
    fn low_maxval_is_rescaled() {
        let img = decode(b"P5 2 1 1\n\x00\x01").unwrap();
        assert_eq!(img.data(), &[0, 255]);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(decode(b"P2 1 1 255\n0"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(
            decode(b"P5 1 1 65535\n\x00\x00"),
            Err(Error::UnsupportedDepth(65535))
        ));
        assert!(matches!(decode(b"P5 2 x 255\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            decode(b"P5 4 4 255\n\x00"),
            Err(Error::TruncatedData { expected: 16, found: 1 })
        ));
        assert!(matches!(decode(b"P5 0 4 255\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            load_image("/nonexistent/definitely/missing.pgm"),
            Err(Error::Read { .. })
        ));
    }

    #[test]
    fn binary_saves_as_0_and_255() {
        let dir = tempfile::tempdir().unwrap();
        let bg = BinaryImage::background(3, 2).unwrap();
        let p = dir.path().join("bg.pgm");
        save_image(&bg, &p).unwrap();
        let loaded = load_image(&p).unwrap();
        assert!(loaded.data().iter().all(|&v| v == 255));

        let fg = bg.complement();
        save_image(&fg, &p).unwrap();
        let loaded = load_image(&p).unwrap();
        assert!(loaded.data().iter().all(|&v| v == 0));
        assert_eq!(load_binary(&p).unwrap(), fg);
    }

    #[test]
    fn save_to_missing_dir_names_path() {
        let img = GrayImage::filled(1, 1, 0).unwrap();
        let err = save_image(&img, "/nonexistent/dir/out.pgm").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/out.pgm"));
    }
}
