//! Region and contour agreement between a predicted contour and a label mask,
//! plus mean(std) aggregation over cases.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_segment_distance, Contour};
use crate::raster::BinaryMask;

/// APD below this many millimetres marks a contour as good.
pub const GOOD_APD_MM: f64 = 5.0;

/// Vertex count both contours are resampled to before computing APD.
pub const APD_POINTS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("degenerate contour: {0}")]
    DegenerateContour(String),
    #[error("mask sizes differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("pixel spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("contour vertex ({x}, {y}) lies outside the {width}x{height} grid")]
    OutsideGrid {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("nothing to aggregate")]
    EmptyList,
}

/// Even-odd fill of a closed polygon. Pixel `(x, y)` is set when its center
/// lies inside the polygon or on its boundary.
pub fn rasterize(contour: &Contour, width: usize, height: usize) -> Result<BinaryMask, MetricsError> {
    let pts = contour.points();
    if pts.len() < 3 {
        return Err(MetricsError::DegenerateContour(format!("{} vertices", pts.len())));
    }
    let area = contour.signed_area();
    if !(area.abs() > 1e-12) {
        return Err(MetricsError::DegenerateContour("zero area".into()));
    }
    const TOL: f64 = 1e-9;
    let mut values = vec![0u8; width * height];
    let mut xs = Vec::new();
    for y in 0..height {
        let yc = y as f64;
        xs.clear();
        for (a, b) in contour.edges() {
            // half-open in y so a vertex on the scanline is counted once
            let (lo, hi) = if a[1] <= b[1] { (a, b) } else { (b, a) };
            if lo[1] <= yc && yc < hi[1] {
                xs.push(lo[0] + (yc - lo[1]) * (hi[0] - lo[0]) / (hi[1] - lo[1]));
            }
        }
        xs.sort_by(|p, q| p.total_cmp(q));
        let row = &mut values[y * width..(y + 1) * width];
        for pair in xs.chunks_exact(2) {
            fill_span(row, pair[0] - TOL, pair[1] + TOL);
        }
        // closing ends of spans and horizontal edges lying on the scanline
        for (a, b) in contour.edges() {
            if (a[1] - yc).abs() <= TOL && (b[1] - yc).abs() <= TOL {
                fill_span(row, a[0].min(b[0]) - TOL, a[0].max(b[0]) + TOL);
            } else if ((a[1] - yc).abs() <= TOL) || ((b[1] - yc).abs() <= TOL) {
                let p = if (a[1] - yc).abs() <= TOL { a } else { b };
                fill_span(row, p[0] - TOL, p[0] + TOL);
            }
        }
    }
    Ok(BinaryMask::new(width, height, values).expect("values are 0 or 1"))
}

fn fill_span(row: &mut [u8], x0: f64, x1: f64) {
    if row.is_empty() || x1 < 0.0 {
        return;
    }
    let start = x0.max(0.0).ceil() as usize;
    let end = (x1.floor() as usize).min(row.len() - 1);
    for v in row.iter_mut().take(end + 1).skip(start) {
        *v = 1;
    }
}

/// Pixel counts of prediction against truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<Confusion, MetricsError> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(MetricsError::DimensionMismatch(
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height(),
        ));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn dice(&self) -> Option<f64> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn ppv(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn npv(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fn_)
    }
}

/// Dice between two masks of equal size.
pub fn mask_dice(a: &BinaryMask, b: &BinaryMask) -> Result<Option<f64>, MetricsError> {
    Ok(confusion(a, b)?.dice())
}

fn resampled(c: &Contour) -> Result<Contour, MetricsError> {
    c.resample(APD_POINTS)
        .map_err(|e| MetricsError::DegenerateContour(e.to_string()))
}

fn mean_distance_to(from: &Contour, to: &Contour) -> f64 {
    let sum: f64 = from
        .points()
        .iter()
        .map(|&p| {
            to.edges()
                .map(|(a, b)| point_segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / from.len() as f64
}

/// Average perpendicular distance in millimetres: symmetrized mean
/// point-to-polyline distance over uniformly resampled contours.
pub fn apd(a: &Contour, b: &Contour, spacing_mm: f64) -> Result<f64, MetricsError> {
    if !(spacing_mm > 0.0) || !spacing_mm.is_finite() {
        return Err(MetricsError::BadSpacing(spacing_mm));
    }
    let ra = resampled(a)?;
    let rb = resampled(b)?;
    Ok(spacing_mm * (mean_distance_to(&ra, &rb) + mean_distance_to(&rb, &ra)) / 2.0)
}

/// Longest closed iso-line at level 1/2 of the mask, traced by marching
/// squares with the outside of the grid treated as background. Diagonal
/// foreground neighbours are kept apart.
pub fn mask_contour(mask: &BinaryMask) -> Result<Contour, MetricsError> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let at = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize);

    // Edge keys: (x, y, 0) is the horizontal edge (x,y)-(x+1,y),
    // (x, y, 1) the vertical edge (x,y)-(x,y+1).
    type Key = (i64, i64, u8);
    let point = |k: Key| match k.2 {
        0 => [k.0 as f64 + 0.5, k.1 as f64],
        _ => [k.0 as f64, k.1 as f64 + 0.5],
    };
    let mut links: HashMap<Key, Vec<Key>> = HashMap::new();
    let mut order: Vec<Key> = Vec::new();
    let mut link = |a: Key, b: Key, links: &mut HashMap<Key, Vec<Key>>| {
        for (p, q) in [(a, b), (b, a)] {
            let e = links.entry(p).or_insert_with(|| {
                order.push(p);
                Vec::new()
            });
            e.push(q);
        }
    };
    for y in -1..h {
        for x in -1..w {
            // corners counterclockwise in the image: tl, tr, br, bl
            let c = [at(x, y), at(x + 1, y), at(x + 1, y + 1), at(x, y + 1)];
            // edge i joins corner i and corner i+1
            let e: [Key; 4] = [(x, y, 0), (x + 1, y, 1), (x, y + 1, 0), (x, y, 1)];
            let crossing: Vec<usize> = (0..4).filter(|&i| c[i] != c[(i + 1) % 4]).collect();
            match crossing.len() {
                2 => link(e[crossing[0]], e[crossing[1]], &mut links),
                4 => {
                    // cut around each foreground corner: corner i touches edges i-1 and i
                    for i in (0..4).filter(|&i| c[i]) {
                        link(e[(i + 3) % 4], e[i], &mut links);
                    }
                }
                _ => {}
            }
        }
    }

    let mut visited: HashMap<Key, bool> = HashMap::new();
    let mut best: Vec<[f64; 2]> = Vec::new();
    for &start in &order {
        if visited.contains_key(&start) {
            continue;
        }
        let mut pts = vec![point(start)];
        visited.insert(start, true);
        let mut prev = start;
        let mut cur = links[&start][0];
        while cur != start {
            visited.insert(cur, true);
            pts.push(point(cur));
            let nb = &links[&cur];
            let next = if nb[0] == prev { nb[1] } else { nb[0] };
            prev = cur;
            cur = next;
        }
        if pts.len() > best.len() {
            best = pts;
        }
    }
    if best.len() < 3 {
        return Err(MetricsError::DegenerateContour("mask has no foreground".into()));
    }
    Ok(Contour::new(best))
}

/// Per-case scores. Ratios are `None` when their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dice: Option<f64>,
    pub apd_mm: f64,
    pub good: bool,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

impl MetricsReport {
    pub fn new(c: &Confusion, apd_mm: f64) -> Self {
        Self {
            dice: c.dice(),
            apd_mm,
            good: apd_mm < GOOD_APD_MM,
            sensitivity: c.sensitivity(),
            specificity: c.specificity(),
            ppv: c.ppv(),
            npv: c.npv(),
        }
    }
}

/// Scores a predicted contour against a label mask on the mask's grid. A
/// contour reaching more than half a pixel past the grid was made for an
/// image of another size and is rejected.
pub fn evaluate_case(pred: &Contour, truth: &BinaryMask, spacing_mm: f64) -> Result<MetricsReport, MetricsError> {
    let (w, h) = (truth.width(), truth.height());
    if let Some(p) = pred
        .points()
        .iter()
        .find(|p| !(p[0] >= -0.5 && p[1] >= -0.5 && p[0] <= w as f64 - 0.5 && p[1] <= h as f64 - 0.5))
    {
        return Err(MetricsError::OutsideGrid {
            x: p[0],
            y: p[1],
            width: w,
            height: h,
        });
    }
    let pred_mask = rasterize(pred, truth.width(), truth.height())?;
    let c = confusion(&pred_mask, truth)?;
    let truth_contour = mask_contour(truth)?;
    Ok(MetricsReport::new(&c, apd(pred, &truth_contour, spacing_mm)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }

    /// Table style `mean(std)`, e.g. `0.92(0.02)`.
    pub fn format(&self, decimals: usize) -> String {
        format!("{:.*}({:.*})", decimals, self.mean, decimals, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub dice: Option<MeanStd>,
    pub apd_mm: Option<MeanStd>,
    pub sensitivity: Option<MeanStd>,
    pub specificity: Option<MeanStd>,
    pub ppv: Option<MeanStd>,
    pub npv: Option<MeanStd>,
    pub good_rate_pct: f64,
}

/// Mean and population std per metric; undefined entries are skipped.
pub fn aggregate(reports: &[MetricsReport]) -> Result<Aggregate, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let col = |f: fn(&MetricsReport) -> Option<f64>| {
        let v: Vec<f64> = reports.iter().filter_map(f).collect();
        MeanStd::of(&v)
    };
    let good = reports.iter().filter(|r| r.good).count();
    Ok(Aggregate {
        dice: col(|r| r.dice),
        apd_mm: col(|r| Some(r.apd_mm)),
        sensitivity: col(|r| r.sensitivity),
        specificity: col(|r| r.specificity),
        ppv: col(|r| r.ppv),
        npv: col(|r| r.npv),
        good_rate_pct: 100.0 * good as f64 / reports.len() as f64,
    })
}

/// The report file: every case followed by the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cases: Vec<MetricsReport>,
    pub aggregate: Aggregate,
}

impl Report {
    pub fn new(cases: Vec<MetricsReport>) -> Result<Self, MetricsError> {
        let aggregate = aggregate(&cases)?;
        Ok(Self { cases, aggregate })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
