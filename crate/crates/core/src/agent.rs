//! Agent rollout: oriented patch, policy displacement, heading update, and
//! Poincaré stopping.

use std::io::Write;

use rand::Rng;
use thiserror::Error;

use crate::field::{sample_field, FieldBundle, FieldError};
use crate::geometry::{norm, sub, Contour};
use crate::model::{ModelError, PolicyModel};
use crate::patches::{extract_patch, standardize, to_image_coords, to_patch_coords, PatchFrame, PatchError};
use crate::poincare::{extract_cycle, CrossingRecord, PoincareConfig, PoincareError, PoincareTracker};
use crate::raster::GrayImage;

/// Consecutive border-pinned steps after which a rollout is reported as stalled.
pub const STALL_LIMIT: u32 = 10;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("seed ({x}, {y}) is closer than {margin} px to the image border")]
    TooCloseToBorder { x: f64, y: f64, margin: f64 },
    #[error("policy displacement vanished at step {step}")]
    DegenerateStep { step: usize },
    #[error("agent pinned at the border margin for {STALL_LIMIT} consecutive steps (step {step})")]
    Stalled { step: usize },
    #[error("no convergence within {max_steps} steps")]
    NonConvergence {
        max_steps: usize,
        trajectory: Box<Trajectory>,
    },
    #[error("heading must be a non-zero vector")]
    BadHeading,
    #[error("oracle field is {field_w}x{field_h}, image is {img_w}x{img_h}")]
    DimensionMismatch {
        field_w: usize,
        field_h: usize,
        img_w: usize,
        img_h: usize,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Poincare(#[from] PoincareError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: [f64; 2],
    /// Unit sampling direction.
    pub heading: [f64; 2],
    pub t: usize,
    /// Consecutive steps whose position had to be clamped to the margin.
    pub pinned: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub states: Vec<AgentState>,
}

impl Trajectory {
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.states.iter().map(|s| s.position).collect()
    }

    /// `t,x,y,hx,hy` header then one row per state.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,y,hx,hy")?;
        for s in &self.states {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.t, s.position[0], s.position[1], s.heading[0], s.heading[1]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(input: R) -> Result<Self, String> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "t,x,y,hx,hy" => {}
            _ => return Err("missing t,x,y,hx,hy header".into()),
        }
        let mut states = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || format!("bad trajectory row {}: {line:?}", row + 2);
            if f.len() != 5 {
                return Err(bad());
            }
            let t = f[0].parse().map_err(|_| bad())?;
            let v: Result<Vec<f64>, _> = f[1..].iter().map(|s| s.parse::<f64>()).collect();
            let v = v.map_err(|_| bad())?;
            states.push(AgentState {
                position: [v[0], v[1]],
                heading: [v[2], v[3]],
                t,
                pinned: 0,
            });
        }
        Ok(Trajectory { states })
    }
}

/// Source of displacements.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Trained regressor on standardized oriented patches.
    Learned(&'a PolicyModel),
    /// Reads the ground-truth field directly.
    Oracle(&'a FieldBundle),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub patch_size: usize,
    /// Nominal step length, px.
    pub h: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Rescale every displacement to length `h`; otherwise clamp into
    /// `[h_min, h_max]`.
    pub renormalize: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            patch_size: 64,
            h: 2.0,
            h_min: 0.5,
            h_max: 4.0,
            renormalize: true,
        }
    }
}

impl StepConfig {
    fn margin(&self) -> f64 {
        self.patch_size as f64 / 2.0
    }
}

fn within_margin(pos: [f64; 2], width: usize, height: usize, margin: f64) -> bool {
    pos[0] >= margin
        && pos[1] >= margin
        && pos[0] <= (width - 1) as f64 - margin
        && pos[1] <= (height - 1) as f64 - margin
}

/// Initial state at `seed_pos`; the heading is the given vector (normalized)
/// or a uniformly random direction.
pub fn init_state<R: Rng + ?Sized>(
    img: &GrayImage,
    seed_pos: [f64; 2],
    seed_heading: Option<[f64; 2]>,
    patch_size: usize,
    rng: &mut R,
) -> Result<AgentState, AgentError> {
    let margin = patch_size as f64 / 2.0;
    if !within_margin(seed_pos, img.width(), img.height(), margin) {
        return Err(AgentError::TooCloseToBorder {
            x: seed_pos[0],
            y: seed_pos[1],
            margin,
        });
    }
    let heading = match seed_heading {
        Some(h) => {
            let n = norm(h);
            if !(n > 0.0) || !n.is_finite() {
                return Err(AgentError::BadHeading);
            }
            [h[0] / n, h[1] / n]
        }
        None => {
            let a: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            [a.cos(), a.sin()]
        }
    };
    Ok(AgentState {
        position: seed_pos,
        heading,
        t: 0,
        pinned: 0,
    })
}

/// Displacement proposed by the policy in patch coordinates.
fn policy_displacement(
    policy: &Policy<'_>,
    img: &GrayImage,
    frame: &PatchFrame,
    h: f64,
) -> Result<[f64; 2], AgentError> {
    match policy {
        Policy::Learned(model) => {
            let patch = standardize(&extract_patch(img, frame));
            let out = model.forward(&patch)?;
            Ok([out[0] as f64, out[1] as f64])
        }
        Policy::Oracle(fb) => {
            let v = sample_field(fb, frame.center)?;
            Ok(to_patch_coords([h * v[0], h * v[1]], frame))
        }
    }
}

/// One agent update.
pub fn step(
    policy: &Policy<'_>,
    img: &GrayImage,
    state: &AgentState,
    cfg: &StepConfig,
) -> Result<AgentState, AgentError> {
    let phi = state.heading[1].atan2(state.heading[0]);
    let frame = PatchFrame::new(state.position, phi, cfg.patch_size)?;
    let d_patch = policy_displacement(policy, img, &frame, cfg.h)?;
    let mut d = to_image_coords(d_patch, &frame);
    let len = norm(d);
    if !(len >= 1e-6) {
        return Err(AgentError::DegenerateStep { step: state.t });
    }
    let target_len = if cfg.renormalize {
        cfg.h
    } else {
        len.clamp(cfg.h_min, cfg.h_max)
    };
    d = [d[0] * target_len / len, d[1] * target_len / len];

    let m = cfg.margin();
    let proposed = [state.position[0] + d[0], state.position[1] + d[1]];
    let position = [
        proposed[0].clamp(m, (img.width() - 1) as f64 - m),
        proposed[1].clamp(m, (img.height() - 1) as f64 - m),
    ];
    let pinned = if position != proposed { state.pinned + 1 } else { 0 };
    if pinned >= STALL_LIMIT {
        return Err(AgentError::Stalled { step: state.t + 1 });
    }
    let moved = sub(position, state.position);
    let moved_len = norm(moved);
    let heading = if moved_len > 1e-12 {
        [moved[0] / moved_len, moved[1] / moved_len]
    } else {
        [d[0] / target_len, d[1] / target_len]
    };
    Ok(AgentState {
        position,
        heading,
        t: state.t + 1,
        pinned,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutConfig {
    pub step: StepConfig,
    pub poincare: PoincareConfig,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub contour: Contour,
    pub crossings: Vec<CrossingRecord>,
    pub magnitudes: Vec<f64>,
}

/// Steps until the Poincaré criterion fires, then extracts the loop between
/// the last two crossings.
pub fn rollout(
    policy: &Policy<'_>,
    img: &GrayImage,
    init: AgentState,
    cfg: &RolloutConfig,
) -> Result<Rollout, AgentError> {
    if let Policy::Oracle(fb) = policy {
        if fb.width() != img.width() || fb.height() != img.height() {
            return Err(AgentError::DimensionMismatch {
                field_w: fb.width(),
                field_h: fb.height(),
                img_w: img.width(),
                img_h: img.height(),
            });
        }
    }
    let mut tracker = PoincareTracker::new(cfg.poincare);
    let mut states = vec![init];
    let mut positions = vec![init.position];
    let mut state = init;
    while state.t < cfg.poincare.max_steps {
        state = step(policy, img, &state, &cfg.step)?;
        states.push(state);
        positions.push(state.position);
        if tracker.observe(&positions) {
            let c = tracker.crossings();
            let (a, b) = (&c[c.len() - 2], &c[c.len() - 1]);
            let contour = extract_cycle(&positions, a, b, cfg.poincare.n_points, cfg.step.h)?;
            return Ok(Rollout {
                trajectory: Trajectory { states },
                contour,
                crossings: c.to_vec(),
                magnitudes: tracker.magnitudes().to_vec(),
            });
        }
    }
    Err(AgentError::NonConvergence {
        max_steps: cfg.poincare.max_steps,
        trajectory: Box::new(Trajectory { states }),
    })
}
