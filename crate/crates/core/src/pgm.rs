//! Binary (P5) PGM with maxval 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::raster::{BinaryMask, GrayImage, RasterError};

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM (expected P5)")]
    BadMagic,
    #[error("unsupported maxval {0}, only 255 is accepted")]
    BadMaxval(u64),
    #[error("mask pixel {index} has value {value}, expected 0 or 255")]
    NonBinaryMask { index: usize, value: u8 },
    #[error("PGM data is truncated")]
    TruncatedFile,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Raw 8-bit raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

fn header_fields(bytes: &[u8], count: usize) -> Result<(Vec<u64>, usize), PgmError> {
    let mut fields = Vec::with_capacity(count);
    let mut i = 2;
    while fields.len() < count {
        match bytes.get(i) {
            None => return Err(PgmError::TruncatedFile),
            Some(b'#') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            Some(c) if c.is_ascii_whitespace() => i += 1,
            Some(c) if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let s = std::str::from_utf8(&bytes[start..i]).expect("ascii digits");
                let v = s
                    .parse()
                    .map_err(|_| PgmError::BadHeader(format!("number {s} out of range")))?;
                fields.push(v);
            }
            Some(&c) => return Err(PgmError::BadHeader(format!("unexpected byte {c:#04x}"))),
        }
    }
    // exactly one whitespace byte separates the header from the data
    match bytes.get(i) {
        Some(c) if c.is_ascii_whitespace() => Ok((fields, i + 1)),
        None => Err(PgmError::TruncatedFile),
        Some(_) => Err(PgmError::BadHeader("missing separator after maxval".into())),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Pgm, PgmError> {
    if !bytes.starts_with(b"P5") {
        return Err(PgmError::BadMagic);
    }
    let (f, start) = header_fields(bytes, 3)?;
    let (width, height, maxval) = (f[0] as usize, f[1] as usize, f[2]);
    if maxval != 255 {
        return Err(PgmError::BadMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader(format!("size {width}x{height}")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| PgmError::BadHeader("size overflows".into()))?;
    let data = bytes.get(start..start + n).ok_or(PgmError::TruncatedFile)?;
    Ok(Pgm {
        width,
        height,
        data: data.to_vec(),
    })
}

pub fn encode(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", pgm.width, pgm.height).into_bytes();
    out.extend_from_slice(&pgm.data);
    out
}

pub fn image_to_pgm(img: &GrayImage) -> Pgm {
    Pgm {
        width: img.width(),
        height: img.height(),
        data: img.pixels().iter().map(|v| (v * 255.0).round() as u8).collect(),
    }
}

pub fn pgm_to_image(pgm: &Pgm, spacing_mm: f64) -> Result<GrayImage, PgmError> {
    let px = pgm.data.iter().map(|&v| v as f64 / 255.0).collect();
    Ok(GrayImage::new(pgm.width, pgm.height, px, spacing_mm)?)
}

pub fn mask_to_pgm(mask: &BinaryMask) -> Pgm {
    Pgm {
        width: mask.width(),
        height: mask.height(),
        data: mask.values().iter().map(|&v| v * 255).collect(),
    }
}

pub fn pgm_to_mask(pgm: &Pgm) -> Result<BinaryMask, PgmError> {
    let mut values = Vec::with_capacity(pgm.data.len());
    for (index, &value) in pgm.data.iter().enumerate() {
        match value {
            0 => values.push(0),
            255 => values.push(1),
            _ => return Err(PgmError::NonBinaryMask { index, value }),
        }
    }
    Ok(BinaryMask::new(pgm.width, pgm.height, values)?)
}

fn write_file(path: &Path, pgm: &Pgm) -> Result<(), PgmError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(pgm))?;
    Ok(())
}

pub fn read_image(path: &Path, spacing_mm: f64) -> Result<GrayImage, PgmError> {
    pgm_to_image(&decode(&fs::read(path)?)?, spacing_mm)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask, PgmError> {
    pgm_to_mask(&decode(&fs::read(path)?)?)
}

/// Intensities are quantized to 8 bits.
pub fn write_image(path: &Path, img: &GrayImage) -> Result<(), PgmError> {
    write_file(path, &image_to_pgm(img))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), PgmError> {
    write_file(path, &mask_to_pgm(mask))
}
