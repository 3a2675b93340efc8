//! Label-derived planar dynamic whose attracting limit cycle is the region
//! boundary.
//!
//! The construction runs in four steps:
//!
//! 1. the boundary is the set of foreground pixels 4-adjacent to background
//!    (or foreground pixels on the image border);
//! 2. an exact Euclidean distance transform gives the unsigned distance `d` to
//!    that set, signed `s = +d` inside and `s = -d` outside;
//! 3. the base direction is the outward normal `u = -grad(s) / |grad(s)|`;
//! 4. `u` is rotated counterclockwise by `theta = pi * (1 - sigmoid(s))`, so
//!    the flow points inward far outside (`theta -> pi`), follows the tangent
//!    on the boundary (`theta = pi/2`) and points outward deep inside
//!    (`theta -> 0`).

use std::f64::consts::PI;
use std::io::{Read, Write};

use thiserror::Error;

use crate::raster::BinaryMask;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("mask has no background pixels")]
    AllForeground,
    #[error("mask has no foreground pixels")]
    AllBackground,
    #[error("position ({x}, {y}) is outside the {width}x{height} field")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("bad field file magic")]
    BadMagic,
    #[error("field file is truncated")]
    TruncatedFile,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Gradient magnitude below which the central-difference normal is treated
/// as degenerate (medial axis, ties).
pub const DEGENERATE_GRADIENT: f64 = 0.1;

/// All foreground pixels with a 4-adjacent background pixel, plus foreground
/// pixels on the image border. Indices are row-major and ascending.
pub fn extract_boundary(mask: &BinaryMask) -> Result<Vec<usize>, FieldError> {
    let fg = mask.count_foreground();
    if fg == 0 {
        return Err(FieldError::AllBackground);
    }
    if fg == mask.width() * mask.height() {
        return Err(FieldError::AllForeground);
    }
    let (w, h) = (mask.width(), mask.height());
    let mut boundary = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let on_border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            if on_border
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1)
            {
                boundary.push(y * w + x);
            }
        }
    }
    Ok(boundary)
}

/// Exact Euclidean distance to the boundary pixel set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    /// Squared distance in px², exact integers.
    d2: Vec<u64>,
    d: Vec<f64>,
    nearest: Vec<usize>,
    s: Vec<f64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn squared(&self) -> &[u64] {
        &self.d2
    }

    pub fn nearest(&self) -> &[usize] {
        &self.nearest
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    #[inline]
    fn s_at(&self, x: usize, y: usize) -> f64 {
        self.s[y * self.width + x]
    }

    /// Central-difference gradient of `s` over a two-pixel baseline,
    /// `(s(x + 2) - s(x - 2)) / 4`. The one-pixel stencil only sees the
    /// flat runs of a digitized curve and returns axis-aligned normals there.
    /// Near the borders the stencil shrinks to one pixel, then to one-sided.
    pub fn gradient(&self, x: usize, y: usize) -> [f64; 2] {
        let gx = axis_derivative(x, self.width, |i| self.s_at(i, y));
        let gy = axis_derivative(y, self.height, |j| self.s_at(x, j));
        [gx, gy]
    }
}

fn axis_derivative(i: usize, n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n == 1 {
        0.0
    } else if i >= 2 && i + 2 < n {
        (f(i + 2) - f(i - 2)) / 4.0
    } else if i >= 1 && i + 1 < n {
        (f(i + 1) - f(i - 1)) / 2.0
    } else if i == 0 {
        f(1) - f(0)
    } else {
        f(i) - f(i - 1)
    }
}

/// Exact Euclidean distance transform with nearest-boundary tracking.
///
/// Pass one scans each column for the closest boundary row (upper row wins a
/// tie). Pass two combines columns along each row, minimising
/// `(x - x')² + dy(x')²` in exact integer arithmetic. Equal distances resolve
/// to the smallest row-major boundary index: within a column the upper
/// candidate is already preferred, and across columns the key `(d², y', x')`
/// orders candidates by row-major index.
pub fn distance_transform(mask: &BinaryMask) -> Result<DistanceField, FieldError> {
    let boundary = extract_boundary(mask)?;
    let (w, h) = (mask.width(), mask.height());
    let mut is_boundary = vec![false; w * h];
    for &i in &boundary {
        is_boundary[i] = true;
    }

    // column pass: nearest boundary row per (x, y), u32::MAX when the column is empty
    const NONE: u32 = u32::MAX;
    let mut col_row = vec![NONE; w * h];
    for x in 0..w {
        let mut above = vec![NONE; h];
        let mut last = NONE;
        for y in 0..h {
            if is_boundary[y * w + x] {
                last = y as u32;
            }
            above[y] = last;
        }
        let mut below = NONE;
        for y in (0..h).rev() {
            if is_boundary[y * w + x] {
                below = y as u32;
            }
            let best = match (above[y], below) {
                (NONE, NONE) => NONE,
                (a, NONE) => a,
                (NONE, b) => b,
                (a, b) => {
                    if (y as u32 - a) <= (b - y as u32) {
                        a
                    } else {
                        b
                    }
                }
            };
            col_row[y * w + x] = best;
        }
    }

    // row pass
    let mut d2 = vec![0u64; w * h];
    let mut nearest = vec![0usize; w * h];
    for y in 0..h {
        let row = &col_row[y * w..(y + 1) * w];
        for x in 0..w {
            let mut best: Option<(u64, usize)> = None;
            for (xc, &yr) in row.iter().enumerate() {
                if yr == NONE {
                    continue;
                }
                let dx = x.abs_diff(xc) as u64;
                let dy = y.abs_diff(yr as usize) as u64;
                let cand = (dx * dx + dy * dy, yr as usize * w + xc);
                if best.map_or(true, |b| cand < b) {
                    best = Some(cand);
                }
            }
            let (dist2, idx) = best.expect("boundary is nonempty so every row sees a column");
            d2[y * w + x] = dist2;
            nearest[y * w + x] = idx;
        }
    }

    let d: Vec<f64> = d2.iter().map(|&v| (v as f64).sqrt()).collect();
    let s = d
        .iter()
        .enumerate()
        .map(|(i, &di)| if mask.is_set(i) { di } else { -di })
        .collect();
    Ok(DistanceField {
        width: w,
        height: h,
        d2,
        d,
        nearest,
        s,
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `pi * (1 - sigmoid(s))`: `pi/2` on the boundary, `-> 0` inside, `-> pi` outside.
pub fn rotation_angle(s: f64) -> f64 {
    PI * (1.0 - sigmoid(s))
}

/// Counterclockwise rotation in (x, y) coordinates.
#[inline]
pub fn rotate_vector(v: [f64; 2], theta: f64) -> [f64; 2] {
    let (sin, cos) = theta.sin_cos();
    [cos * v[0] - sin * v[1], sin * v[0] + cos * v[1]]
}

/// How [`attraction_direction`] obtained its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionSource {
    /// Normalized `-grad(s)`.
    Gradient,
    /// Gradient below [`DEGENERATE_GRADIENT`]; direction from the nearest
    /// boundary pixel instead.
    NearestPoint,
    /// Neither estimate is defined.
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attraction {
    pub direction: [f64; 2],
    pub source: DirectionSource,
}

impl Attraction {
    pub fn singular(&self) -> bool {
        self.source == DirectionSource::Singular
    }
}

/// Unit outward normal at pixel `(x, y)`.
///
/// The nearest-point fallback is oriented outward on both sides: inside it
/// points from `p` toward its nearest boundary pixel, outside it points away
/// from it.
pub fn attraction_direction(df: &DistanceField, x: usize, y: usize) -> Attraction {
    let g = df.gradient(x, y);
    let norm = g[0].hypot(g[1]);
    if norm >= DEGENERATE_GRADIENT {
        return Attraction {
            direction: [-g[0] / norm, -g[1] / norm],
            source: DirectionSource::Gradient,
        };
    }
    let i = y * df.width + x;
    let q = df.nearest[i];
    let to_q = [
        (q % df.width) as f64 - x as f64,
        (q / df.width) as f64 - y as f64,
    ];
    let len = to_q[0].hypot(to_q[1]);
    if len == 0.0 {
        return Attraction {
            direction: [0.0, 0.0],
            source: DirectionSource::Singular,
        };
    }
    let sign = if df.s[i] > 0.0 { 1.0 } else { -1.0 };
    Attraction {
        direction: [sign * to_q[0] / len, sign * to_q[1] / len],
        source: DirectionSource::NearestPoint,
    }
}

/// Per-pixel layers of the customized dynamic.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBundle {
    width: usize,
    height: usize,
    s: Vec<f64>,
    theta: Vec<f64>,
    v: Vec<[f64; 2]>,
    singular: Vec<bool>,
}

pub fn build_dynamic(mask: &BinaryMask) -> Result<FieldBundle, FieldError> {
    let df = distance_transform(mask)?;
    Ok(build_dynamic_from(&df))
}

/// Builds the field from an already computed distance transform.
pub fn build_dynamic_from(df: &DistanceField) -> FieldBundle {
    let n = df.width * df.height;
    let mut theta = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut singular = Vec::with_capacity(n);
    for y in 0..df.height {
        for x in 0..df.width {
            let s = df.s_at(x, y);
            let angle = rotation_angle(s);
            let a = attraction_direction(df, x, y);
            theta.push(angle);
            singular.push(a.singular());
            v.push(if a.singular() {
                [0.0, 0.0]
            } else {
                rotate_vector(a.direction, angle)
            });
        }
    }
    FieldBundle {
        width: df.width,
        height: df.height,
        s: df.s.clone(),
        theta,
        v,
        singular,
    }
}

const FIELD_MAGIC: &str = "DPMVF1";

impl FieldBundle {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn v(&self) -> &[[f64; 2]] {
        &self.v
    }

    pub fn singular(&self) -> &[bool] {
        &self.singular
    }

    #[inline]
    pub fn v_at(&self, x: usize, y: usize) -> [f64; 2] {
        self.v[y * self.width + x]
    }

    pub fn contains(&self, pos: [f64; 2]) -> bool {
        pos[0] >= 0.0
            && pos[1] >= 0.0
            && pos[0] <= (self.width - 1) as f64
            && pos[1] <= (self.height - 1) as f64
    }

    /// Writes the `DPMVF1` format: header line then `(s, theta, vx, vy)` as
    /// little-endian f32 plus one singular byte per pixel, row-major.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), FieldError> {
        write!(out, "{FIELD_MAGIC} {} {}\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.v.len() * 17);
        for i in 0..self.v.len() {
            for value in [self.s[i], self.theta[i], self.v[i][0], self.v[i][1]] {
                buf.extend_from_slice(&(value as f32).to_le_bytes());
            }
            buf.push(self.singular[i] as u8);
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, FieldError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(FieldError::BadMagic)?;
        let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| FieldError::BadMagic)?;
        let mut parts = header.split(' ');
        if parts.next() != Some(FIELD_MAGIC) {
            return Err(FieldError::BadMagic);
        }
        let mut dim = || -> Result<usize, FieldError> {
            parts
                .next()
                .and_then(|p| p.parse().ok())
                .filter(|&v: &usize| v > 0)
                .ok_or(FieldError::BadMagic)
        };
        let (width, height) = (dim()?, dim()?);
        let n = width * height;
        let body = &bytes[newline + 1..];
        if body.len() < n * 17 {
            return Err(FieldError::TruncatedFile);
        }
        let mut fb = FieldBundle {
            width,
            height,
            s: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            singular: Vec::with_capacity(n),
        };
        for rec in body[..n * 17].chunks_exact(17) {
            let f = |k: usize| {
                f32::from_le_bytes([rec[4 * k], rec[4 * k + 1], rec[4 * k + 2], rec[4 * k + 3]])
                    as f64
            };
            fb.s.push(f(0));
            fb.theta.push(f(1));
            fb.v.push([f(2), f(3)]);
            fb.singular.push(rec[16] != 0);
        }
        Ok(fb)
    }
}

/// Bilinear interpolation of the velocity layer; singular pixels contribute
/// zero.
pub fn sample_field(fb: &FieldBundle, pos: [f64; 2]) -> Result<[f64; 2], FieldError> {
    if !fb.contains(pos) {
        return Err(FieldError::OutOfBounds {
            x: pos[0],
            y: pos[1],
            width: fb.width,
            height: fb.height,
        });
    }
    let x0 = pos[0].floor() as usize;
    let y0 = pos[1].floor() as usize;
    let x1 = (x0 + 1).min(fb.width - 1);
    let y1 = (y0 + 1).min(fb.height - 1);
    let fx = pos[0] - x0 as f64;
    let fy = pos[1] - y0 as f64;
    let mut out = [0.0; 2];
    for (x, y, wgt) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ] {
        if wgt == 0.0 {
            continue;
        }
        let v = fb.v_at(x, y);
        out[0] += wgt * v[0];
        out[1] += wgt * v[1];
    }
    Ok(out)
}
