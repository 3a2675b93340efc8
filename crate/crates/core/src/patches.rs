//! Oriented patch sampling and the patch/image frame transforms.
//!
//! A patch frame is a square window of `P x P` pixels centered on a
//! continuous image position whose +x axis points along the sampling
//! direction `phi`. Training pairs use the field velocity as sampling
//! direction (optionally offset); the regression target is the scaled field
//! velocity expressed in the patch frame.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, sample_field, FieldBundle, FieldError};
use crate::raster::{BinaryMask, GrayImage};
use crate::seeds::derive_seed;

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("field direction at ({x}, {y}) is degenerate")]
    DegenerateDirection { x: f64, y: f64 },
    #[error("patch size must be even and at least 8, got {0}")]
    BadPatchSize(usize),
    #[error("image {index}: mask is {mask_w}x{mask_h}, image is {img_w}x{img_h}")]
    DimensionMismatch {
        index: usize,
        mask_w: usize,
        mask_h: usize,
        img_w: usize,
        img_h: usize,
    },
    #[error("image {0}: sampling band has no non-singular pixels")]
    EmptyBand(usize),
    #[error("bad dataset file: {0}")]
    BadFormat(String),
    #[error("dataset file is truncated")]
    TruncatedFile,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchFrame {
    pub center: [f64; 2],
    pub phi: f64,
    pub size: usize,
}

impl PatchFrame {
    pub fn new(center: [f64; 2], phi: f64, size: usize) -> Result<Self, PatchError> {
        check_patch_size(size)?;
        Ok(Self {
            center,
            phi: wrap_angle(phi),
            size,
        })
    }

    /// Image position of patch pixel `(a, b)`.
    #[inline]
    pub fn image_position(&self, a: usize, b: usize) -> [f64; 2] {
        let half = (self.size as f64 - 1.0) / 2.0;
        let off = field::rotate_vector([a as f64 - half, b as f64 - half], self.phi);
        [self.center[0] + off[0], self.center[1] + off[1]]
    }
}

pub fn check_patch_size(size: usize) -> Result<(), PatchError> {
    if size < 8 || size % 2 != 0 {
        return Err(PatchError::BadPatchSize(size));
    }
    Ok(())
}

/// Frame aligned with the interpolated field at `center`, rotated by `offset`.
pub fn patch_frame_at(
    fb: &FieldBundle,
    center: [f64; 2],
    offset: f64,
    size: usize,
) -> Result<PatchFrame, PatchError> {
    let v = sample_field(fb, center)?;
    if v[0].hypot(v[1]) < 1e-6 {
        return Err(PatchError::DegenerateDirection {
            x: center[0],
            y: center[1],
        });
    }
    PatchFrame::new(center, v[1].atan2(v[0]) + offset, size)
}

/// Bilinear patch in the frame; samples beyond the image clamp to the edge.
/// Output is row-major with `b` (patch y) as the row.
pub fn extract_patch(img: &GrayImage, frame: &PatchFrame) -> Vec<f32> {
    let p = frame.size;
    let half = (p as f64 - 1.0) / 2.0;
    let (sin, cos) = frame.phi.sin_cos();
    let mut out = Vec::with_capacity(p * p);
    for b in 0..p {
        let db = b as f64 - half;
        for a in 0..p {
            let da = a as f64 - half;
            let x = frame.center[0] + cos * da - sin * db;
            let y = frame.center[1] + sin * da + cos * db;
            out.push(img.sample_clamped(x, y) as f32);
        }
    }
    out
}

/// `R(-phi) v`.
#[inline]
pub fn to_patch_coords(v: [f64; 2], frame: &PatchFrame) -> [f64; 2] {
    field::rotate_vector(v, -frame.phi)
}

/// `R(phi) v`.
#[inline]
pub fn to_image_coords(v: [f64; 2], frame: &PatchFrame) -> [f64; 2] {
    field::rotate_vector(v, frame.phi)
}

/// Zero-mean, unit-variance copy of a patch (variance floored at 1e-6).
pub fn standardize(patch: &[f32]) -> Vec<f32> {
    let n = patch.len() as f64;
    let mean = patch.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = patch
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let scale = 1.0 / var.max(1e-6).sqrt();
    patch
        .iter()
        .map(|&v| ((v as f64 - mean) * scale) as f32)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub pixels: Vec<f32>,
    pub target: [f32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Fraction of band pixels used as patch centers.
    pub rho: f64,
    /// Band half-width around the boundary, px.
    pub band_px: f64,
    /// Sampling-direction offsets in radians; 0 is always included.
    pub offsets: Vec<f64>,
    /// Target displacement magnitude, px.
    pub h: f64,
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            rho: 0.05,
            band_px: 32.0,
            offsets: vec![PI / 4.0, -PI / 4.0],
            h: 2.0,
            patch_size: 64,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    /// Offset 0 first, then the configured offsets in order, without repeats.
    pub fn effective_offsets(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for &o in &self.offsets {
            if !out.contains(&o) {
                out.push(o);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub patch_size: usize,
    pub h: f64,
    pub samples: Vec<PatchSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Patch-policy pairs for one image, using the RNG stream for `index`.
pub fn image_samples(
    img: &GrayImage,
    mask: &BinaryMask,
    index: usize,
    cfg: &DatasetConfig,
) -> Result<Vec<PatchSample>, PatchError> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(PatchError::DimensionMismatch {
            index,
            mask_w: mask.width(),
            mask_h: mask.height(),
            img_w: img.width(),
            img_h: img.height(),
        });
    }
    let df = field::distance_transform(mask)?;
    let fb = field::build_dynamic_from(&df);
    let band: Vec<usize> = (0..df.d().len())
        .filter(|&i| df.d()[i] <= cfg.band_px && !fb.singular()[i])
        .collect();
    if band.is_empty() {
        return Err(PatchError::EmptyBand(index));
    }
    let count = (cfg.rho * band.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let chosen = index::sample(&mut rng, band.len(), count.min(band.len()));
    let offsets = cfg.effective_offsets();
    let w = mask.width();
    let mut out = Vec::with_capacity(count * offsets.len());
    for k in chosen.iter() {
        let i = band[k];
        let center = [(i % w) as f64, (i / w) as f64];
        let v = fb.v()[i];
        for &offset in &offsets {
            let frame = patch_frame_at(&fb, center, offset, cfg.patch_size)?;
            let t = to_patch_coords([cfg.h * v[0], cfg.h * v[1]], &frame);
            out.push(PatchSample {
                pixels: extract_patch(img, &frame),
                target: [t[0] as f32, t[1] as f32],
            });
        }
    }
    Ok(out)
}

/// Samples `floor(rho * |band|)` centers per image from the band
/// `{d <= band_px, non-singular}` and emits one sample per offset.
pub fn build_dataset(
    pairs: &[(GrayImage, BinaryMask)],
    cfg: &DatasetConfig,
) -> Result<Dataset, PatchError> {
    check_patch_size(cfg.patch_size)?;
    let mut samples = Vec::new();
    for (index, (img, mask)) in pairs.iter().enumerate() {
        samples.extend(image_samples(img, mask, index, cfg)?);
    }
    Ok(Dataset {
        patch_size: cfg.patch_size,
        h: cfg.h,
        samples,
    })
}

const DATASET_MAGIC: &[u8] = b"DPMDS1\n";

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    count: usize,
    #[serde(rename = "P")]
    patch_size: usize,
    h: f64,
}

impl Dataset {
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), PatchError> {
        out.write_all(DATASET_MAGIC)?;
        let header = DatasetHeader {
            count: self.samples.len(),
            patch_size: self.patch_size,
            h: self.h,
        };
        let json = serde_json::to_string(&header).expect("header serializes");
        out.write_all(json.as_bytes())?;
        out.write_all(b"\n")?;
        let mut buf = Vec::with_capacity((self.patch_size * self.patch_size + 2) * 4);
        for s in &self.samples {
            buf.clear();
            for v in s.pixels.iter().chain(&s.target) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, PatchError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if !bytes.starts_with(DATASET_MAGIC) {
            return Err(PatchError::BadFormat("bad magic".into()));
        }
        let rest = &bytes[DATASET_MAGIC.len()..];
        let newline = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| PatchError::BadFormat("missing header".into()))?;
        let header: DatasetHeader = serde_json::from_slice(&rest[..newline])
            .map_err(|e| PatchError::BadFormat(e.to_string()))?;
        check_patch_size(header.patch_size)?;
        let floats = header.patch_size * header.patch_size + 2;
        let body = &rest[newline + 1..];
        if body.len() < header.count * floats * 4 {
            return Err(PatchError::TruncatedFile);
        }
        let mut samples = Vec::with_capacity(header.count);
        for rec in body.chunks_exact(floats * 4).take(header.count) {
            let mut vals: Vec<f32> = rec
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let dv = vals.pop().expect("record has target");
            let du = vals.pop().expect("record has target");
            samples.push(PatchSample {
                pixels: vals,
                target: [du, dv],
            });
        }
        Ok(Dataset {
            patch_size: header.patch_size,
            h: header.h,
            samples,
        })
    }
}
