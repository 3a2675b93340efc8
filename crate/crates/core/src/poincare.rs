//! Poincaré section on a planar trajectory: a frozen ray, one-sided
//! crossing detection, first-return magnitudes and cycle extraction.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::geometry::{cross, dist, dot, norm, sub, Contour};

#[derive(Debug, Error, PartialEq)]
pub enum PoincareError {
    #[error("need at least {needed} positions to place the section, got {got}")]
    InsufficientPrefix { needed: usize, got: usize },
    #[error("section direction is undefined: latest position coincides with the anchor")]
    DegenerateSection,
    #[error("cycle is degenerate: {0}")]
    DegenerateCycle(String),
}

/// Ray `anchor + t * direction`, `t > 0`. Frozen once placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareSection {
    anchor: [f64; 2],
    direction: [f64; 2],
}

impl PoincareSection {
    pub fn new(anchor: [f64; 2], direction: [f64; 2]) -> Result<Self, PoincareError> {
        let n = norm(direction);
        if !(n > 0.0) {
            return Err(PoincareError::DegenerateSection);
        }
        Ok(Self {
            anchor,
            direction: [direction[0] / n, direction[1] / n],
        })
    }

    pub fn anchor(&self) -> [f64; 2] {
        self.anchor
    }

    pub fn direction(&self) -> [f64; 2] {
        self.direction
    }

    #[inline]
    fn side(&self, p: [f64; 2]) -> f64 {
        cross(self.direction, sub(p, self.anchor))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingRecord {
    /// Index `i` of the crossed segment `[p_i, p_{i+1}]`.
    pub step: usize,
    /// Distance from the anchor along the ray, px.
    pub t_param: f64,
    pub point: [f64; 2],
}

/// Anchor at the centroid of the last `window` positions, direction toward
/// the latest position.
pub fn place_section(prefix: &[[f64; 2]], window: usize) -> Result<PoincareSection, PoincareError> {
    if window == 0 || prefix.len() < window {
        return Err(PoincareError::InsufficientPrefix {
            needed: window.max(1),
            got: prefix.len(),
        });
    }
    let tail = &prefix[prefix.len() - window..];
    let mut c = [0.0, 0.0];
    for p in tail {
        c[0] += p[0];
        c[1] += p[1];
    }
    c = [c[0] / window as f64, c[1] / window as f64];
    let latest = *prefix.last().expect("window >= 1");
    PoincareSection::new(c, sub(latest, c))
}

/// Crossing of segment `[p0, p1]` with the ray, counted only when the
/// segment passes from the negative to the non-negative side of
/// `cross(direction, p - anchor)`, i.e. counterclockwise about the anchor.
pub fn detect_crossing(
    p0: [f64; 2],
    p1: [f64; 2],
    step: usize,
    section: &PoincareSection,
) -> Option<CrossingRecord> {
    let c0 = section.side(p0);
    let c1 = section.side(p1);
    if !(c0 < 0.0 && c1 >= 0.0) {
        return None;
    }
    let f = c0 / (c0 - c1);
    let point = [p0[0] + f * (p1[0] - p0[0]), p0[1] + f * (p1[1] - p0[1])];
    let t_param = dot(sub(point, section.anchor), section.direction);
    (t_param > 0.0).then_some(CrossingRecord {
        step,
        t_param,
        point,
    })
}

/// `|t_{k+1} - t_k|` for consecutive crossings.
pub fn map_magnitudes(crossings: &[CrossingRecord]) -> Vec<f64> {
    crossings
        .windows(2)
        .map(|w| (w[1].t_param - w[0].t_param).abs())
        .collect()
}

/// True iff at least `k` magnitudes exist and the last `k` are all `<= eps`.
pub fn converged(magnitudes: &[f64], eps: f64, k: usize) -> bool {
    k > 0 && magnitudes.len() >= k && magnitudes[magnitudes.len() - k..].iter().all(|&m| m <= eps)
}

/// Closed loop between two crossings, resampled to `n_points` vertices of
/// uniform arclength. `h` is the nominal step length; loops shorter than
/// `4 h` are rejected.
pub fn extract_cycle(
    positions: &[[f64; 2]],
    first: &CrossingRecord,
    second: &CrossingRecord,
    n_points: usize,
    h: f64,
) -> Result<Contour, PoincareError> {
    if second.step <= first.step || second.step >= positions.len() {
        return Err(PoincareError::DegenerateCycle(format!(
            "crossing steps {} and {} do not bracket a loop",
            first.step, second.step
        )));
    }
    let mut loop_pts = Vec::with_capacity(second.step - first.step + 2);
    loop_pts.push(first.point);
    loop_pts.extend_from_slice(&positions[first.step + 1..=second.step]);
    loop_pts.push(second.point);
    // the two crossing points nearly coincide on a converged orbit; keep one
    if loop_pts.len() > 1 && dist(loop_pts[0], *loop_pts.last().unwrap()) < 1e-9 {
        loop_pts.pop();
    }
    let contour = Contour::new(loop_pts);
    let length = contour.perimeter();
    if length < 4.0 * h {
        return Err(PoincareError::DegenerateCycle(format!(
            "loop length {length:.3} px is below 4h = {:.3}",
            4.0 * h
        )));
    }
    contour
        .resample(n_points)
        .map_err(|e| PoincareError::DegenerateCycle(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareConfig {
    /// Minimum number of positions before the section is placed.
    pub warmup: usize,
    /// Convergence threshold on the map magnitudes, px.
    pub eps: f64,
    /// Number of consecutive magnitudes that must be below `eps`.
    pub k: usize,
    pub max_steps: usize,
    /// Vertex count of the extracted contour.
    pub n_points: usize,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        Self {
            warmup: 50,
            eps: 2.0,
            k: 2,
            max_steps: 4000,
            n_points: 200,
        }
    }
}

/// Number of trailing positions spanning one full turn of the trajectory
/// heading, if the trajectory has turned that far.
pub fn revolution_window(positions: &[[f64; 2]]) -> Option<usize> {
    let n = positions.len();
    if n < 3 {
        return None;
    }
    let mut turned = 0.0;
    let mut next = sub(positions[n - 1], positions[n - 2]);
    for i in (1..n - 1).rev() {
        let prev = sub(positions[i], positions[i - 1]);
        if norm(prev) > 0.0 && norm(next) > 0.0 {
            turned += cross(prev, next).atan2(dot(prev, next));
        }
        if turned.abs() >= TAU {
            // positions i + 1 ..= n - 1: one period without repeating an endpoint
            return Some(n - i - 1);
        }
        next = prev;
    }
    None
}

/// Incremental first-return analysis over a growing trajectory.
///
/// The section is placed once at least `warmup` positions exist and the
/// trailing positions cover one full turn; its anchor is the centroid of
/// that last turn, which lies inside the orbit.
#[derive(Debug, Clone)]
pub struct PoincareTracker {
    cfg: PoincareConfig,
    section: Option<PoincareSection>,
    placed_at: usize,
    crossings: Vec<CrossingRecord>,
    magnitudes: Vec<f64>,
}

impl PoincareTracker {
    pub fn new(cfg: PoincareConfig) -> Self {
        Self {
            cfg,
            section: None,
            placed_at: 0,
            crossings: Vec::new(),
            magnitudes: Vec::new(),
        }
    }

    pub fn section(&self) -> Option<&PoincareSection> {
        self.section.as_ref()
    }

    pub fn crossings(&self) -> &[CrossingRecord] {
        &self.crossings
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Feeds the trajectory after a new position was appended; returns true
    /// once the stopping criterion holds.
    pub fn observe(&mut self, positions: &[[f64; 2]]) -> bool {
        let n = positions.len();
        match self.section {
            None => {
                if n < self.cfg.warmup.max(3) {
                    return false;
                }
                if let Some(window) = revolution_window(positions) {
                    if let Ok(section) = place_section(positions, window) {
                        self.section = Some(section);
                        self.placed_at = n - 1;
                    }
                }
                false
            }
            Some(section) => {
                let i = n - 2;
                if i < self.placed_at {
                    return false;
                }
                if let Some(rec) = detect_crossing(positions[i], positions[i + 1], i, &section) {
                    if let Some(prev) = self.crossings.last() {
                        self.magnitudes.push((rec.t_param - prev.t_param).abs());
                    }
                    self.crossings.push(rec);
                }
                converged(&self.magnitudes, self.cfg.eps, self.cfg.k)
            }
        }
    }
}
