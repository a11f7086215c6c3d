//! Raster and stack files.
//!
//! `CISM1` raster layout (little endian):
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 5    | magic `CISM1`              |
//! | 5      | 1    | version, always 1          |
//! | 6      | 4    | rows (u32)                 |
//! | 10     | 4    | cols (u32)                 |
//! | 14     | 8    | pixel_size_nm (f64)        |
//! | 22     | 4·N  | row-major f32 values       |
//!
//! `CISMS` stack layout: magic `CISMS`, u32 element count, then that many
//! concatenated `CISM1` records.
//!
//! Values live in memory as f64 and are narrowed to f32 on write, so a value
//! survives exactly once it has been through one write/read cycle.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image2D;

pub const RASTER_MAGIC: &[u8; 5] = b"CISM1";
pub const STACK_MAGIC: &[u8; 5] = b"CISMS";
pub const RASTER_VERSION: u8 = 1;
const HEADER_LEN: usize = 22;

pub fn encode_raster(img: &Image2D, out: &mut Vec<u8>) {
    out.reserve(HEADER_LEN + 4 * img.len());
    out.extend_from_slice(RASTER_MAGIC);
    out.push(RASTER_VERSION);
    out.extend_from_slice(&(img.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(img.cols() as u32).to_le_bytes());
    out.extend_from_slice(&img.pixel_size_nm().to_le_bytes());
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Decodes one raster record from the front of `bytes`; returns it together
/// with the number of bytes consumed.
pub fn decode_raster(bytes: &[u8]) -> Result<(Image2D, usize)> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() < 5 || &bytes[..5] != RASTER_MAGIC {
            return Err(Error::format("magic", "missing or wrong magic bytes"));
        }
        return Err(Error::format("header", "file shorter than the raster header"));
    }
    if &bytes[..5] != RASTER_MAGIC {
        return Err(Error::format("magic", "expected CISM1"));
    }
    if bytes[5] != RASTER_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {}", bytes[5]),
        ));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let pixel_size_nm = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
    if rows == 0 {
        return Err(Error::format("rows", "zero rows"));
    }
    if cols == 0 {
        return Err(Error::format("cols", "zero columns"));
    }
    if !(pixel_size_nm.is_finite() && pixel_size_nm > 0.0) {
        return Err(Error::format(
            "pixel_size_nm",
            format!("invalid pixel size {pixel_size_nm}"),
        ));
    }
    let payload_len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format("rows", "rows x cols overflows"))?;
    let end = HEADER_LEN
        .checked_add(payload_len)
        .ok_or_else(|| Error::format("rows", "rows x cols overflows"))?;
    if bytes.len() < end {
        return Err(Error::format(
            "payload",
            format!(
                "truncated: {rows}x{cols} needs {payload_len} bytes, found {}",
                bytes.len() - HEADER_LEN
            ),
        ));
    }
    let data: Vec<f64> = bytes[HEADER_LEN..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let img = Image2D::from_vec(rows, cols, pixel_size_nm, data)
        .map_err(|e| Error::format("payload", e.to_string()))?;
    Ok((img, end))
}

pub fn encode_stack(images: &[Image2D]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(STACK_MAGIC);
    out.extend_from_slice(&(images.len() as u32).to_le_bytes());
    for img in images {
        encode_raster(img, &mut out);
    }
    out
}

pub fn decode_stack(bytes: &[u8]) -> Result<Vec<Image2D>> {
    if bytes.len() < 5 || &bytes[..5] != STACK_MAGIC {
        return Err(Error::format("magic", "expected CISMS"));
    }
    if bytes.len() < 9 {
        return Err(Error::format("element_count", "truncated stack header"));
    }
    let count = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let mut offset = 9;
    let mut images = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let (img, used) = decode_raster(&bytes[offset..])?;
        offset += used;
        images.push(img);
    }
    if offset != bytes.len() {
        return Err(Error::format(
            "element_count",
            format!("{} trailing bytes after {count} records", bytes.len() - offset),
        ));
    }
    Ok(images)
}

pub fn write_raster(img: &Image2D, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    encode_raster(img, &mut buf);
    write_bytes(path.as_ref(), &buf)
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Image2D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (img, used) = decode_raster(&bytes)?;
    if used != bytes.len() {
        return Err(Error::format(
            "payload",
            format!("{} trailing bytes", bytes.len() - used),
        ));
    }
    Ok(img)
}

pub fn write_stack(images: &[Image2D], path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_stack(images))
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<Vec<Image2D>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_stack(&bytes)
}

/// Writes `key = value` lines.
pub fn write_key_values(path: impl AsRef<Path>, pairs: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        text.push_str(k);
        text.push_str(" = ");
        text.push_str(v);
        text.push('\n');
    }
    write_bytes(path.as_ref(), text.as_bytes())
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// 16-bit grayscale PNG for viewing, linearly scaled from [min, max] to
/// [0, 65535]. The scaling is recorded next to the image in `<path>.txt`.
pub fn export_png16(img: &Image2D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (lo, hi) = (img.min(), img.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut raw = Vec::with_capacity(2 * img.len());
    for &v in img.data() {
        let q = (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16;
        raw.extend_from_slice(&q.to_be_bytes());
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(
        std::io::BufWriter::new(file),
        img.cols() as u32,
        img.rows() as u32,
    );
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let png_err = |e: png::EncodingError| Error::io(path, std::io::Error::other(e.to_string()));
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&raw).map_err(png_err)?;
    writer.finish().map_err(png_err)?;

    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".txt");
    write_key_values(
        Path::new(&sidecar),
        &[
            ("scaling".into(), "linear".into()),
            ("min".into(), lo.to_string()),
            ("max".into(), hi.to_string()),
        ],
    )
}
