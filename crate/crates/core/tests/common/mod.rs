#![allow(dead_code)]

use dpm_core::agent::{init_state, rollout, AgentState, Policy, Rollout, RolloutConfig};
use dpm_core::field::FieldBundle;
use dpm_core::geometry::Contour;
use dpm_core::metrics::{mask_dice, rasterize};
use dpm_core::raster::{BinaryMask, GrayImage};
use rand::Rng;

/// Dice between the filled contour and a mask on the mask's grid.
pub fn contour_dice(c: &Contour, mask: &BinaryMask) -> f64 {
    let filled = rasterize(c, mask.width(), mask.height()).unwrap();
    mask_dice(&filled, mask).unwrap().unwrap_or(0.0)
}

pub fn pair_dice(a: &Contour, b: &Contour, width: usize, height: usize) -> f64 {
    let ma = rasterize(a, width, height).unwrap();
    let mb = rasterize(b, width, height).unwrap();
    mask_dice(&ma, &mb).unwrap().unwrap_or(0.0)
}

/// Distance from `from` to the last foreground pixel along direction `a`.
fn boundary_radius(mask: &BinaryMask, from: [f64; 2], a: f64) -> f64 {
    let (c, s) = (a.cos(), a.sin());
    let mut r = 0.0;
    let mut last_inside = 0.0;
    while r < (mask.width() + mask.height()) as f64 {
        let (x, y) = ((from[0] + r * c).round(), (from[1] + r * s).round());
        if x < 0.0 || y < 0.0 || x >= mask.width() as f64 || y >= mask.height() as f64 {
            break;
        }
        if mask.get(x as usize, y as usize) {
            last_inside = r;
        }
        r += 0.5;
    }
    last_inside
}

/// `n` random seeds around the mask centroid, between 0.3 and 1.4 times
/// the boundary radius in a random direction, each with a random heading,
/// all far enough from the border for a `patch_size` patch.
pub fn random_seeds<R: Rng>(
    mask: &BinaryMask,
    img: &GrayImage,
    n: usize,
    patch_size: usize,
    rng: &mut R,
) -> Vec<AgentState> {
    let c = mask.centroid().unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let f: f64 = rng.gen_range(0.3..1.4);
        let r = f * boundary_radius(mask, c, a);
        let p = [c[0] + r * a.cos(), c[1] + r * a.sin()];
        if let Ok(s) = init_state(img, p, None, patch_size, rng) {
            out.push(s);
        }
    }
    out
}

pub fn oracle_rollout(fb: &FieldBundle, img: &GrayImage, init: AgentState, cfg: &RolloutConfig) -> Rollout {
    rollout(&Policy::Oracle(fb), img, init, cfg).unwrap()
}

/// Two-level rendering of a mask.
pub fn flat_image(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width(), mask.height(), 1.0, |x, y| if mask.get(x, y) { 0.75 } else { 0.25 }).unwrap()
}

/// Streams bytes into a hash so large artifacts can be compared cheaply.
#[derive(Default)]
pub struct HashWriter(std::collections::hash_map::DefaultHasher);

impl HashWriter {
    pub fn finish(&self) -> u64 {
        std::hash::Hasher::finish(&self.0)
    }
}

impl std::io::Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        std::hash::Hasher::write(&mut self.0, buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}
