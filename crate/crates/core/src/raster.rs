//! Row-major rasters shared by every stage: binary labels and grayscale images.
//!
//! Coordinates follow one convention throughout the crate: `x` is the column,
//! `y` is the row, pixel `(x, y)` has its center at continuous position
//! `(x, y)` and lives at index `y * width + x`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RasterError {
    #[error("raster data has {got} values, expected {expected} for {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("mask value {value} at index {index} is not 0 or 1")]
    NonBinary { index: usize, value: u8 },
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    IntensityRange { index: usize, value: f64 },
    #[error("pixel spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("raster dimensions must be non-zero")]
    Empty,
}

fn check_size(width: usize, height: usize, len: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::Empty);
    }
    if width * height != len {
        return Err(RasterError::SizeMismatch {
            width,
            height,
            expected: width * height,
            got: len,
        });
    }
    Ok(())
}

/// Quarter-turn rotations used for exact pixel permutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuarterTurn {
    Deg90,
    Deg180,
    Deg270,
}

impl QuarterTurn {
    pub fn all() -> [QuarterTurn; 3] {
        [QuarterTurn::Deg90, QuarterTurn::Deg180, QuarterTurn::Deg270]
    }

    pub fn inverse(self) -> QuarterTurn {
        match self {
            QuarterTurn::Deg90 => QuarterTurn::Deg270,
            QuarterTurn::Deg180 => QuarterTurn::Deg180,
            QuarterTurn::Deg270 => QuarterTurn::Deg90,
        }
    }

    /// Dimensions of a `width x height` raster after the turn.
    pub fn rotated_dims(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            QuarterTurn::Deg180 => (width, height),
            _ => (height, width),
        }
    }

    /// Maps a continuous position in a `width x height` raster to the
    /// rotated raster. `Deg90` turns +x into +y (counterclockwise in (x, y)).
    pub fn apply_point(self, p: [f64; 2], width: usize, height: usize) -> [f64; 2] {
        let (w1, h1) = ((width - 1) as f64, (height - 1) as f64);
        match self {
            QuarterTurn::Deg90 => [h1 - p[1], p[0]],
            QuarterTurn::Deg180 => [w1 - p[0], h1 - p[1]],
            QuarterTurn::Deg270 => [p[1], w1 - p[0]],
        }
    }

    fn permute<T: Copy>(self, data: &[T], width: usize, height: usize) -> Vec<T> {
        let (nw, nh) = self.rotated_dims(width, height);
        let mut out = Vec::with_capacity(data.len());
        for ny in 0..nh {
            for nx in 0..nw {
                // invert apply_point on integer coordinates
                let (x, y) = match self {
                    QuarterTurn::Deg90 => (ny, height - 1 - nx),
                    QuarterTurn::Deg180 => (width - 1 - nx, height - 1 - ny),
                    QuarterTurn::Deg270 => (width - 1 - ny, nx),
                };
                out.push(data[y * width + x]);
            }
        }
        out
    }
}

/// Binary label: 1 marks the region of interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self, RasterError> {
        check_size(width, height, values.len())?;
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(RasterError::NonBinary { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    /// Disk of radius `r` around `center`: pixels whose centers are within `r`.
    pub fn disk(width: usize, height: usize, center: [f64; 2], r: f64) -> Self {
        Self::from_fn(width, height, |x, y| {
            let dx = x as f64 - center[0];
            let dy = y as f64 - center[1];
            dx * dx + dy * dy <= r * r
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x] == 1
    }

    #[inline]
    pub fn is_set(&self, index: usize) -> bool {
        self.values[index] == 1
    }

    pub fn count_foreground(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// Mean position of the foreground pixels, if any.
    pub fn centroid(&self) -> Option<[f64; 2]> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| [sx / n as f64, sy / n as f64])
    }

    pub fn rotate(&self, turn: QuarterTurn) -> Self {
        let (width, height) = turn.rotated_dims(self.width, self.height);
        Self {
            width,
            height,
            values: turn.permute(&self.values, self.width, self.height),
        }
    }
}

/// Grayscale image with intensities in [0, 1] and isotropic pixel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    spacing_mm: f64,
}

impl GrayImage {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        spacing_mm: f64,
    ) -> Result<Self, RasterError> {
        check_size(width, height, pixels.len())?;
        if !(spacing_mm > 0.0 && spacing_mm.is_finite()) {
            return Err(RasterError::BadSpacing(spacing_mm));
        }
        if let Some((index, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(RasterError::IntensityRange { index, value });
        }
        Ok(Self {
            width,
            height,
            pixels,
            spacing_mm,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        spacing_mm: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, RasterError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels, spacing_mm)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a continuous position; positions outside the grid
    /// take the value of the nearest edge pixel.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let xmax = (self.width - 1) as f64;
        let ymax = (self.height - 1) as f64;
        let x = x.clamp(0.0, xmax);
        let y = y.clamp(0.0, ymax);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn rotate(&self, turn: QuarterTurn) -> Self {
        let (width, height) = turn.rotated_dims(self.width, self.height);
        Self {
            width,
            height,
            pixels: turn.permute(&self.pixels, self.width, self.height),
            spacing_mm: self.spacing_mm,
        }
    }
}
