//! Synthetic (image, mask) pairs: circles, ellipses and star-shaped Fourier
//! blobs on a noisy, blurred two-level background.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Contour;
use crate::raster::{BinaryMask, GrayImage};
use crate::seeds::derive_seed;

/// Largest admissible sum of blob harmonic amplitudes.
pub const MAX_BLOB_AMPLITUDE: f64 = 0.35;

/// Extra clearance beyond half a patch between a shape and the border.
pub const EXTRA_MARGIN: f64 = 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("infeasible shape spec: {0}")]
    SpecInfeasible(String),
    #[error("dataset size must be at least 1")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Circle,
    Ellipse,
    Blob,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeSpec {
    pub family: Family,
    pub width: usize,
    pub height: usize,
    /// Radius range, px. Ellipse semi-axes and blob base radii are drawn from it.
    pub r_min: f64,
    pub r_max: f64,
    /// Number of blob harmonics, using orders 2, 3, ...
    pub harmonics: usize,
    /// Upper bound on the summed harmonic amplitudes.
    pub amplitude: f64,
    pub fg_mean: f64,
    pub bg_mean: f64,
    pub noise_sigma: f64,
    pub blur_sigma: f64,
    /// Patch size the data is meant for; sets the border margin.
    pub patch_size: usize,
    pub spacing_mm: f64,
    pub seed: u64,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        Self {
            family: Family::Blob,
            width: 256,
            height: 256,
            r_min: 35.0,
            r_max: 55.0,
            harmonics: 3,
            amplitude: 0.3,
            fg_mean: 0.75,
            bg_mean: 0.25,
            noise_sigma: 0.05,
            blur_sigma: 1.0,
            patch_size: 64,
            spacing_mm: 1.0,
            seed: 0,
        }
    }
}

impl ShapeSpec {
    pub fn margin(&self) -> f64 {
        self.patch_size as f64 / 2.0 + EXTRA_MARGIN
    }

    /// Largest distance from the shape center to its boundary.
    fn max_extent(&self) -> f64 {
        match self.family {
            Family::Blob => self.r_max * (1.0 + self.amplitude),
            _ => self.r_max,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::SpecInfeasible(m));
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return bad(format!("radius range [{}, {}]", self.r_min, self.r_max));
        }
        if !(0.0..=MAX_BLOB_AMPLITUDE).contains(&self.amplitude) {
            return bad(format!("amplitude {} outside [0, {MAX_BLOB_AMPLITUDE}]", self.amplitude));
        }
        if self.family == Family::Blob && self.harmonics == 0 && self.amplitude > 0.0 {
            return bad("blob with amplitude needs at least one harmonic".into());
        }
        for (name, v) in [("fg_mean", self.fg_mean), ("bg_mean", self.bg_mean)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        for (name, v) in [("noise_sigma", self.noise_sigma), ("blur_sigma", self.blur_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} is negative"));
            }
        }
        if !(self.spacing_mm > 0.0 && self.spacing_mm.is_finite()) {
            return bad(format!("spacing {}", self.spacing_mm));
        }
        let need = 2.0 * (self.margin() + self.max_extent());
        if need > (self.width.min(self.height) - 1) as f64 {
            return bad(format!(
                "shapes up to {:.1} px with margin {:.1} px do not fit in {}x{}",
                self.max_extent(),
                self.margin(),
                self.width,
                self.height
            ));
        }
        Ok(())
    }
}

/// A drawn shape in continuous image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Circle {
        center: [f64; 2],
        r: f64,
    },
    Ellipse {
        center: [f64; 2],
        a: f64,
        b: f64,
        angle: f64,
    },
    /// `r(phi) = r0 (1 + sum_k a_k sin(k phi + psi_k))`.
    Blob {
        center: [f64; 2],
        r0: f64,
        terms: Vec<(u32, f64, f64)>,
    },
}

impl Shape {
    pub fn center(&self) -> [f64; 2] {
        match self {
            Shape::Circle { center, .. } | Shape::Ellipse { center, .. } | Shape::Blob { center, .. } => *center,
        }
    }

    fn blob_radius(r0: f64, terms: &[(u32, f64, f64)], phi: f64) -> f64 {
        r0 * (1.0 + terms.iter().map(|&(k, a, psi)| a * (k as f64 * phi + psi).sin()).sum::<f64>())
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let c = self.center();
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        match self {
            Shape::Circle { r, .. } => dx * dx + dy * dy <= r * r,
            Shape::Ellipse { a, b, angle, .. } => {
                let (s, co) = angle.sin_cos();
                let u = co * dx + s * dy;
                let v = -s * dx + co * dy;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
            Shape::Blob { r0, terms, .. } => {
                let r = Self::blob_radius(*r0, terms, dy.atan2(dx));
                dx * dx + dy * dy <= r * r
            }
        }
    }

    /// Counterclockwise boundary polygon with `n` vertices.
    pub fn boundary(&self, n: usize) -> Contour {
        let c = self.center();
        Contour::new(
            (0..n)
                .map(|i| {
                    let phi = TAU * i as f64 / n as f64;
                    match self {
                        Shape::Circle { r, .. } => [c[0] + r * phi.cos(), c[1] + r * phi.sin()],
                        Shape::Ellipse { a, b, angle, .. } => {
                            let (u, v) = (a * phi.cos(), b * phi.sin());
                            let (s, co) = angle.sin_cos();
                            [c[0] + co * u - s * v, c[1] + s * u + co * v]
                        }
                        Shape::Blob { r0, terms, .. } => {
                            let r = Self::blob_radius(*r0, terms, phi);
                            [c[0] + r * phi.cos(), c[1] + r * phi.sin()]
                        }
                    }
                })
                .collect(),
        )
    }

    pub fn mask(&self, width: usize, height: usize) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| self.contains([x as f64, y as f64]))
    }
}

/// Draws a shape. Circles and blobs consume the generator identically up to
/// the harmonics, so a zero-amplitude blob reproduces the circle.
pub fn gen_shape<R: Rng + ?Sized>(spec: &ShapeSpec, rng: &mut R) -> Result<Shape, SynthError> {
    spec.validate()?;
    let r = rng.gen_range(spec.r_min..=spec.r_max);
    let (extent, second) = match spec.family {
        Family::Circle => (r, r),
        Family::Blob => (r * (1.0 + spec.amplitude), r),
        Family::Ellipse => {
            let b = rng.gen_range(spec.r_min..=spec.r_max);
            (r.max(b), b)
        }
    };
    let lo = spec.margin() + extent;
    let cx = rng.gen_range(lo..=(spec.width - 1) as f64 - lo);
    let cy = rng.gen_range(lo..=(spec.height - 1) as f64 - lo);
    let center = [cx, cy];
    Ok(match spec.family {
        Family::Circle => Shape::Circle { center, r },
        Family::Ellipse => Shape::Ellipse {
            center,
            a: r,
            b: second,
            angle: rng.gen_range(0.0..PI),
        },
        Family::Blob => {
            let weights: Vec<f64> = (0..spec.harmonics).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total = spec.amplitude * rng.gen_range(0.5..=1.0);
            let sum: f64 = weights.iter().sum();
            let terms = weights
                .iter()
                .enumerate()
                .map(|(i, w)| (i as u32 + 2, total * w / sum, rng.gen_range(0.0..TAU)))
                .collect();
            Shape::Blob { center, r0: r, terms }
        }
    })
}

pub fn gen_mask<R: Rng + ?Sized>(spec: &ShapeSpec, rng: &mut R) -> Result<BinaryMask, SynthError> {
    Ok(gen_shape(spec, rng)?.mask(spec.width, spec.height))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(pixels: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return pixels.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; pixels.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(i, w)| w * pixels[y * width + clamp(x as i64 + i as i64 - r, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; pixels.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(i, w)| w * tmp[clamp(y as i64 + i as i64 - r, height) * width + x])
                .sum();
        }
    }
    out
}

/// Two-level image from the mask, plus Gaussian noise, then Gaussian blur,
/// clamped to [0, 1].
pub fn render_image<R: Rng + ?Sized>(
    mask: &BinaryMask,
    spec: &ShapeSpec,
    rng: &mut R,
) -> Result<GrayImage, SynthError> {
    spec.validate()?;
    let mut px: Vec<f64> = mask
        .values()
        .iter()
        .map(|&v| if v == 1 { spec.fg_mean } else { spec.bg_mean })
        .collect();
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma checked");
        for p in &mut px {
            *p += normal.sample(rng);
        }
    }
    let px = gaussian_blur(&px, mask.width(), mask.height(), spec.blur_sigma)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(GrayImage::new(mask.width(), mask.height(), px, spec.spacing_mm).expect("clamped pixels"))
}

/// One generated case.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub index: usize,
    pub shape: Shape,
    pub image: GrayImage,
    pub mask: BinaryMask,
}

impl SynthPair {
    pub fn is_test(&self) -> bool {
        is_test_index(self.index)
    }
}

/// Odd indices are held out for testing, even ones are used for training.
pub fn is_test_index(index: usize) -> bool {
    index % 2 == 1
}

/// Pair `index` of the dataset described by `spec`, independent of all others.
pub fn gen_pair(spec: &ShapeSpec, index: usize) -> Result<SynthPair, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, index as u64));
    let shape = gen_shape(spec, &mut rng)?;
    let mask = shape.mask(spec.width, spec.height);
    let image = render_image(&mask, spec, &mut rng)?;
    Ok(SynthPair {
        index,
        shape,
        image,
        mask,
    })
}

pub fn gen_dataset(n: usize, spec: &ShapeSpec) -> Result<Vec<SynthPair>, SynthError> {
    if n == 0 {
        return Err(SynthError::EmptyDataset);
    }
    (0..n).map(|i| gen_pair(spec, i)).collect()
}
