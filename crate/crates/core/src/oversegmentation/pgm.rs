//! Binary PGM (P5) reading and writing.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{GrayImage, ImageError, ImageResult, LabelMap};

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
}

fn read_byte<R: Read>(r: &mut R) -> ImageResult<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

/// Reads one whitespace-delimited header integer, skipping comments.
fn read_header_number<R: BufRead>(r: &mut R) -> ImageResult<u32> {
    let mut c = read_byte(r)?;
    loop {
        if c == b'#' {
            while c != b'\n' {
                c = read_byte(r)?;
            }
        } else if c.is_ascii_whitespace() {
            c = read_byte(r)?;
        } else {
            break;
        }
    }
    let mut value: u64 = 0;
    if !c.is_ascii_digit() {
        return Err(ImageError::Format(format!(
            "unexpected byte 0x{c:02x} in PGM header"
        )));
    }
    while c.is_ascii_digit() {
        value = value * 10 + u64::from(c - b'0');
        if value > u64::from(u32::MAX) {
            return Err(ImageError::Format("PGM header value too large".into()));
        }
        c = read_byte(r)?;
    }
    // exactly one whitespace byte terminates the number (the last one
    // separates the header from the raster)
    if !c.is_ascii_whitespace() {
        return Err(ImageError::Format(format!(
            "unexpected byte 0x{c:02x} after PGM header value"
        )));
    }
    Ok(value as u32)
}

fn read_header<R: BufRead>(r: &mut R) -> ImageResult<Header> {
    let mut magic = [0u8; 2];
    r.read_exact(&mut magic)?;
    if &magic != b"P5" {
        return Err(ImageError::Format(format!(
            "expected binary PGM magic `P5`, found `{}`",
            String::from_utf8_lossy(&magic)
        )));
    }
    let width = read_header_number(r)? as usize;
    let height = read_header_number(r)? as usize;
    let maxval = read_header_number(r)?;
    if width == 0 || height == 0 {
        return Err(ImageError::Format(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::Format(format!("invalid maxval {maxval}")));
    }
    Ok(Header {
        width,
        height,
        maxval,
    })
}

/// Decodes an 8-bit binary PGM.
pub fn decode_pgm<R: Read>(reader: R) -> ImageResult<GrayImage> {
    let mut r = BufReader::new(reader);
    let h = read_header(&mut r)?;
    if h.maxval > 255 {
        return Err(ImageError::Format(format!(
            "expected an 8-bit PGM, maxval is {}",
            h.maxval
        )));
    }
    let mut data = vec![0u8; h.width * h.height];
    r.read_exact(&mut data)?;
    GrayImage::new(h.width, h.height, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> ImageResult<GrayImage> {
    decode_pgm(std::fs::File::open(path)?)
}

pub fn encode_pgm<W: Write>(img: &GrayImage, mut w: W) -> std::io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.width(), img.height())?;
    w.write_all(img.data())?;
    w.flush()
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> std::io::Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    encode_pgm(img, file)
}

/// Decodes a label PGM without normalizing ids. Accepts 16-bit (big-endian)
/// and 8-bit rasters.
pub fn decode_raw_labels<R: Read>(reader: R) -> ImageResult<(usize, usize, Vec<u32>)> {
    let mut r = BufReader::new(reader);
    let h = read_header(&mut r)?;
    let n = h.width * h.height;
    let labels = if h.maxval > 255 {
        let mut buf = vec![0u8; n * 2];
        r.read_exact(&mut buf)?;
        buf.chunks_exact(2)
            .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    } else {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)?;
        buf.into_iter().map(u32::from).collect()
    };
    Ok((h.width, h.height, labels))
}

/// Writes a label map as a 16-bit P5 file (maxval 65535).
pub fn encode_label_map<W: Write>(map: &LabelMap, mut w: W) -> ImageResult<()> {
    let mut buf = Vec::with_capacity(map.labels().len() * 2);
    for &l in map.labels() {
        let v = u16::try_from(l)
            .map_err(|_| ImageError::Format(format!("label {l} does not fit a 16-bit PGM")))?;
        buf.extend_from_slice(&v.to_be_bytes());
    }
    write!(w, "P5\n{} {}\n65535\n", map.width(), map.height())?;
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>) -> ImageResult<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    encode_label_map(map, file)
}
