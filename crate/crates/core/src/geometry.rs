//! Closed polygons and the small amount of plane geometry the pipeline needs.

use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContourError {
    #[error("contour needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("contour has zero length")]
    ZeroLength,
    #[error("contour CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[inline]
pub fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm(sub(a, b))
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Closed polygon; the last vertex implicitly connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<[f64; 2]>,
}

impl Contour {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self { points }
    }

    /// Regular polygon approximating a circle, counterclockwise in (x, y).
    pub fn circle(center: [f64; 2], r: f64, n: usize) -> Self {
        let points = (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                [center[0] + r * a.cos(), center[1] + r * a.sin()]
            })
            .collect();
        Self { points }
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Edges `(p_i, p_{i+1})` including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| dist(a, b)).sum()
    }

    /// Shoelace area, positive for counterclockwise order in (x, y).
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| cross(a, b)).sum::<f64>() / 2.0
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        Self {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    /// `n` vertices spaced uniformly in arclength along the closed polygon,
    /// starting at the first vertex.
    pub fn resample(&self, n: usize) -> Result<Contour, ContourError> {
        let distinct = self.distinct_count();
        if distinct < 3 {
            return Err(ContourError::TooFewVertices(distinct));
        }
        let total = self.perimeter();
        if !(total > 0.0) {
            return Err(ContourError::ZeroLength);
        }
        let step = total / n as f64;
        let mut out = Vec::with_capacity(n);
        let mut edges = self.edges();
        let (mut a, mut b) = edges.next().expect("at least 3 vertices");
        let mut seg_len = dist(a, b);
        let mut walked = 0.0; // arclength at the start of the current edge
        for k in 0..n {
            let target = k as f64 * step;
            while walked + seg_len < target {
                walked += seg_len;
                match edges.next() {
                    Some(e) => {
                        (a, b) = e;
                        seg_len = dist(a, b);
                    }
                    None => break,
                }
            }
            let t = if seg_len > 0.0 {
                ((target - walked) / seg_len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
        Ok(Contour { points: out })
    }

    fn distinct_count(&self) -> usize {
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for &p in &self.points {
            if !pts.iter().any(|q| dist(*q, p) < 1e-9) {
                pts.push(p);
                if pts.len() >= 3 {
                    return 3;
                }
            }
        }
        pts.len()
    }

    /// `x,y` header then one row per vertex; closure is implicit.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), ContourError> {
        writeln!(out, "x,y")?;
        for p in &self.points {
            writeln!(out, "{},{}", p[0], p[1])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Contour, ContourError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| ContourError::Csv("empty file".into()))??;
        if header.trim() != "x,y" {
            return Err(ContourError::Csv(format!("unexpected header {header:?}")));
        }
        let mut points = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',').map(|f| f.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) if x.is_finite() && y.is_finite() => {
                    points.push([x, y])
                }
                _ => return Err(ContourError::Csv(format!("bad row {}: {line:?}", row + 2))),
            }
        }
        Ok(Contour { points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_square_uniformly() {
        let sq = Contour::new(vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]);
        let r = sq.resample(8).unwrap();
        assert_eq!(r.len(), 8);
        let expected = [
            [0.0, 0.0],
            [2.0, 0.0],
            [4.0, 0.0],
            [4.0, 2.0],
            [4.0, 4.0],
            [2.0, 4.0],
            [0.0, 4.0],
            [0.0, 2.0],
        ];
        for (p, e) in r.points().iter().zip(expected) {
            assert!(dist(*p, e) < 1e-12, "{p:?} vs {e:?}");
        }
        assert!((r.signed_area() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn resample_rejects_degenerate() {
        let two = Contour::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(
            two.resample(10),
            Err(ContourError::TooFewVertices(2))
        ));
    }

    #[test]
    fn segment_distance() {
        assert_eq!(point_segment_distance([0.0, 1.0], [-1.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(point_segment_distance([3.0, 4.0], [0.0, 0.0], [0.0, 0.0]), 5.0);
        assert_eq!(point_segment_distance([5.0, 0.0], [-1.0, 0.0], [1.0, 0.0]), 4.0);
    }

    #[test]
    fn csv_round_trip() {
        let c = Contour::circle([10.0, 12.5], 3.0, 7);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x,y\n"));
        let back = Contour::read_csv(&buf[..]).unwrap();
        assert_eq!(back, c);
        assert!(Contour::read_csv(&b"a,b\n1,2\n"[..]).is_err());
        assert!(Contour::read_csv(&b"x,y\n1\n"[..]).is_err());
    }
}
