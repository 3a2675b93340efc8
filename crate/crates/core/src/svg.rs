//! SVG overlay of a field, a trajectory and a contour.

use std::fmt::Write;

use thiserror::Error;

use crate::agent::Trajectory;
use crate::field::FieldBundle;
use crate::geometry::Contour;

/// Field arrows are drawn at every `ARROW_STRIDE`-th pixel in x and y.
pub const ARROW_STRIDE: usize = 8;
const ARROW_LEN: f64 = 6.0;

#[derive(Debug, Error, PartialEq)]
pub enum SvgError {
    #[error("nothing to render: give a field, a trajectory or a contour")]
    NothingToRender,
}

/// Canvas extent: the field grid if present, otherwise the bounding box of
/// the geometry plus a small border.
fn canvas(field: Option<&FieldBundle>, pts: &[[f64; 2]]) -> (f64, f64) {
    if let Some(f) = field {
        return (f.width() as f64, f.height() as f64);
    }
    let (mut w, mut h) = (1.0f64, 1.0f64);
    for p in pts {
        w = w.max(p[0]);
        h = h.max(p[1]);
    }
    ((w + 8.0).ceil(), (h + 8.0).ceil())
}

fn fmt_points(out: &mut String, pts: &[[f64; 2]]) {
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{:.3},{:.3}", p[0], p[1]).unwrap();
    }
}

pub fn render_svg(
    field: Option<&FieldBundle>,
    traj: Option<&Trajectory>,
    contour: Option<&Contour>,
) -> Result<String, SvgError> {
    if field.is_none() && traj.is_none() && contour.is_none() {
        return Err(SvgError::NothingToRender);
    }
    let traj_pts = traj.map(|t| t.positions()).unwrap_or_default();
    let mut all = traj_pts.clone();
    if let Some(c) = contour {
        all.extend_from_slice(c.points());
    }
    let (w, h) = canvas(field, &all);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="-0.5 -0.5 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="-0.5" y="-0.5" width="{w}" height="{h}" fill="white"/>"#).unwrap();

    if let Some(f) = field {
        writeln!(
            s,
            r#"<defs><marker id="head" markerWidth="4" markerHeight="4" refX="4" refY="2" orient="auto"><polygon points="0,0 4,2 0,4" fill="steelblue"/></marker></defs>"#
        )
        .unwrap();
        writeln!(s, r#"<g stroke="steelblue" stroke-width="0.6" marker-end="url(#head)">"#).unwrap();
        for y in (0..f.height()).step_by(ARROW_STRIDE) {
            for x in (0..f.width()).step_by(ARROW_STRIDE) {
                if f.singular()[y * f.width() + x] {
                    continue;
                }
                let v = f.v_at(x, y);
                let (x0, y0) = (x as f64, y as f64);
                writeln!(
                    s,
                    r#"<line x1="{x0:.3}" y1="{y0:.3}" x2="{:.3}" y2="{:.3}"/>"#,
                    x0 + ARROW_LEN * v[0],
                    y0 + ARROW_LEN * v[1]
                )
                .unwrap();
            }
        }
        writeln!(s, "</g>").unwrap();
    }

    if !traj_pts.is_empty() {
        s.push_str(r#"<polyline fill="none" stroke="darkorange" stroke-width="0.8" points=""#);
        fmt_points(&mut s, &traj_pts);
        s.push_str("\"/>\n");
    }

    if let Some(c) = contour {
        s.push_str(r#"<path fill="none" stroke="crimson" stroke-width="1.2" d=""#);
        for (i, p) in c.points().iter().enumerate() {
            let cmd = if i == 0 { "M" } else { " L" };
            write!(s, "{cmd}{:.3},{:.3}", p[0], p[1]).unwrap();
        }
        s.push_str(" Z\"/>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}
