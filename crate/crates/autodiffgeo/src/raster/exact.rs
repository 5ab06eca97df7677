//! Exact volumetric-averaging oracle: per-cell overlap fractions between
//! ground-truth shapes and grid cells.
//!
//! Polygons are clipped cell-by-cell (Sutherland–Hodgman for convex shapes,
//! ear-clipped triangles for concave ones), circles use the closed-form
//! Green's-theorem area of a disk/rectangle intersection, and piecewise-linear
//! bands (the taper ground truth) integrate their clamped width analytically.
//! Everything here is independent of the tape: this module is the reference
//! the differentiable representations are tested against.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, MaterialGrid};
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone)]
pub enum ExactShape {
    Polygon(PolygonShape),
    Circle { center: [f64; 2], radius: f64 },
    /// Region between two piecewise-linear curves over an x interval.
    Band(BandShape),
}

#[derive(Debug, Clone)]
pub struct PolygonShape {
    /// CCW vertex ring.
    pub verts: Vec<[f64; 2]>,
    convex: bool,
    /// Triangulation, present only for concave polygons.
    tris: Option<Vec<[[f64; 2]; 3]>>,
    bbox: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct BandShape {
    pub x_knots: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

impl ExactShape {
    pub fn polygon(verts: Vec<[f64; 2]>) -> Result<ExactShape> {
        if verts.len() < 3 {
            return Err(Error::Validation(format!(
                "polygon needs at least 3 vertices, got {}",
                verts.len()
            )));
        }
        let mut verts = verts;
        let area2 = signed_area2(&verts);
        if area2 == 0.0 {
            return Err(Error::Validation("polygon has zero area".into()));
        }
        if area2 < 0.0 {
            verts.reverse();
        }
        if let Some((i, j)) = find_self_intersection(&verts) {
            return Err(Error::Validation(format!(
                "polygon is self-intersecting (edges {i} and {j})"
            )));
        }
        let convex = is_convex(&verts);
        let tris = if convex {
            None
        } else {
            Some(triangulate(&verts)?)
        };
        let bbox = bbox_of(&verts);
        Ok(ExactShape::Polygon(PolygonShape {
            verts,
            convex,
            tris,
            bbox,
        }))
    }

    pub fn circle(center: [f64; 2], radius: f64) -> Result<ExactShape> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Validation(format!(
                "circle radius must be positive, got {radius}"
            )));
        }
        Ok(ExactShape::Circle { center, radius })
    }

    /// Region `lower(x) ≤ y ≤ upper(x)` for `x` in the knot range, both
    /// curves piecewise linear over strictly increasing knots.
    pub fn band(x_knots: Vec<f64>, upper: Vec<f64>, lower: Vec<f64>) -> Result<ExactShape> {
        let n = x_knots.len();
        if n < 2 || upper.len() != n || lower.len() != n {
            return Err(Error::Validation(
                "band needs >= 2 knots with matching upper/lower values".into(),
            ));
        }
        for i in 1..n {
            if x_knots[i] <= x_knots[i - 1] {
                return Err(Error::Validation(
                    "band knots must be strictly increasing".into(),
                ));
            }
        }
        for i in 0..n {
            if upper[i] < lower[i] {
                return Err(Error::Validation(format!(
                    "band upper < lower at knot {i}"
                )));
            }
        }
        Ok(ExactShape::Band(BandShape {
            x_knots,
            upper,
            lower,
        }))
    }

    pub fn bbox(&self) -> [f64; 4] {
        match self {
            ExactShape::Polygon(p) => p.bbox,
            ExactShape::Circle { center, radius } => [
                center[0] - radius,
                center[0] + radius,
                center[1] - radius,
                center[1] + radius,
            ],
            ExactShape::Band(b) => {
                let lo = b.lower.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = b.upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                [b.x_knots[0], *b.x_knots.last().unwrap(), lo, hi]
            }
        }
    }

    /// Overlap area of this shape with an axis-aligned box, in absolute units.
    pub fn overlap_area(&self, cell: [f64; 4]) -> f64 {
        let [cx0, cx1, cy0, cy1] = cell;
        let b = self.bbox();
        if cx1 <= b[0] || cx0 >= b[1] || cy1 <= b[2] || cy0 >= b[3] {
            return 0.0;
        }
        match self {
            ExactShape::Polygon(p) => {
                if p.convex {
                    clip_area(&p.verts, cell)
                } else {
                    let tris = p.tris.as_ref().unwrap();
                    let mut a = 0.0;
                    for t in tris {
                        let tb = bbox_of(t);
                        if cx1 <= tb[0] || cx0 >= tb[1] || cy1 <= tb[2] || cy0 >= tb[3] {
                            continue;
                        }
                        a += clip_area(t, cell);
                    }
                    a
                }
            }
            ExactShape::Circle { center, radius } => circle_box_area(
                *radius,
                [cx0 - center[0], cx1 - center[0], cy0 - center[1], cy1 - center[1]],
            ),
            ExactShape::Band(band) => band_box_area(band, cell),
        }
    }

    /// Per-cell normalized overlap fractions a_o on the grid.
    pub fn overlap_fractions(&self, grid: &GridSpec) -> Vec<f64> {
        let cell_area = grid.dx * grid.dy;
        let mut out = vec![0.0; grid.cells()];
        let b = self.bbox();
        // Clamp the cell sweep to the shape's bounding box.
        let i0 = (((b[0] - grid.x0) / grid.dx) - 1.5 - grid.offset.0).floor().max(0.0) as usize;
        let i1 = ((((b[1] - grid.x0) / grid.dx) + 0.5 - grid.offset.0).ceil() as usize).min(grid.nx);
        let j0 = (((b[2] - grid.y0) / grid.dy) - 1.5 - grid.offset.1).floor().max(0.0) as usize;
        let j1 = ((((b[3] - grid.y0) / grid.dy) + 0.5 - grid.offset.1).ceil() as usize).min(grid.ny);
        for j in j0..j1 {
            for i in i0..i1 {
                let a = self.overlap_area(grid.cell_box(i, j));
                out[grid.index(i, j)] = (a / cell_area).clamp(0.0, 1.0);
            }
        }
        out
    }
}

/// Exact per-cell volumetric average of a single shape, scaled to materials.
pub fn exact_average(
    shape: &ExactShape,
    grid: &GridSpec,
    materials: (f64, f64),
) -> Result<MaterialGrid> {
    let fr = shape.overlap_fractions(grid);
    let (eb, es) = materials;
    let values = fr.iter().map(|a| eb + (es - eb) * a).collect();
    MaterialGrid::new(values, grid.clone(), materials)
}

/// A scene of weighted exact shapes: per-cell occupancy is the clamped
/// signed sum of overlap fractions. Weights of ±1 express disjoint unions
/// and nested subtraction (cut shapes fully inside their base).
#[derive(Debug, Clone)]
pub struct ExactScene {
    pub terms: Vec<(ExactShape, f64)>,
    pub materials: (f64, f64),
}

impl ExactScene {
    pub fn occupancy(&self, grid: &GridSpec) -> Vec<f64> {
        let mut acc = vec![0.0; grid.cells()];
        for (shape, w) in &self.terms {
            let fr = shape.overlap_fractions(grid);
            for (a, f) in acc.iter_mut().zip(fr) {
                *a += w * f;
            }
        }
        for a in &mut acc {
            *a = a.clamp(0.0, 1.0);
        }
        acc
    }

    pub fn rasterize(&self, grid: &GridSpec) -> Result<MaterialGrid> {
        let occ = self.occupancy(grid);
        let (eb, es) = self.materials;
        let values = occ.iter().map(|a| eb + (es - eb) * a).collect();
        MaterialGrid::new(values, grid.clone(), self.materials)
    }
}

// ---- polygon helpers -------------------------------------------------------

fn signed_area2(verts: &[[f64; 2]]) -> f64 {
    let n = verts.len();
    let mut a = 0.0;
    for i in 0..n {
        let [x0, y0] = verts[i];
        let [x1, y1] = verts[(i + 1) % n];
        a += x0 * y1 - x1 * y0;
    }
    a
}

fn bbox_of(verts: &[[f64; 2]]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for v in verts {
        b[0] = b[0].min(v[0]);
        b[1] = b[1].max(v[0]);
        b[2] = b[2].min(v[1]);
        b[3] = b[3].max(v[1]);
    }
    b
}

fn is_convex(verts: &[[f64; 2]]) -> bool {
    let n = verts.len();
    let scale = verts
        .iter()
        .map(|v| v[0].abs().max(v[1].abs()))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let tol = -1e-12 * scale * scale;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        let c = verts[(i + 2) % n];
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if cross < tol {
            return false;
        }
    }
    true
}

/// Proper-intersection scan between non-adjacent edges (O(V²); runs once at
/// construction).
fn find_self_intersection(verts: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = verts.len();
    for i in 0..n {
        let a0 = verts[i];
        let a1 = verts[(i + 1) % n];
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue; // adjacent around the wrap
            }
            let b0 = verts[j];
            let b1 = verts[(j + 1) % n];
            if segments_properly_intersect(a0, a1, b0, b1) {
                return Some((i, j));
            }
        }
    }
    None
}

fn segments_properly_intersect(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> bool {
    let d = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let d1 = d(q0, q1, p0);
    let d2 = d(q0, q1, p1);
    let d3 = d(p0, p1, q0);
    let d4 = d(p0, p1, q1);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Ear-clipping triangulation of a simple CCW polygon. Inside-tests only
/// consult reflex vertices, which keeps near-convex thousand-vertex rings
/// cheap.
fn triangulate(verts: &[[f64; 2]]) -> Result<Vec<[[f64; 2]; 3]>> {
    let n = verts.len();
    let mut ring: Vec<usize> = (0..n).collect();
    let cross_at = |ring: &[usize], k: usize| {
        let m = ring.len();
        let a = verts[ring[(k + m - 1) % m]];
        let b = verts[ring[k]];
        let c = verts[ring[(k + 1) % m]];
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let mut tris = Vec::with_capacity(n - 2);
    let mut stuck_guard = 0usize;
    while ring.len() > 3 {
        let m = ring.len();
        let reflex: Vec<usize> = (0..m).filter(|&k| cross_at(&ring, k) < 0.0).collect();
        let mut clipped = false;
        for k in 0..m {
            if cross_at(&ring, k) <= 0.0 {
                continue; // reflex or degenerate corner cannot be an ear
            }
            let a = verts[ring[(k + m - 1) % m]];
            let b = verts[ring[k]];
            let c = verts[ring[(k + 1) % m]];
            let mut blocked = false;
            for &r in &reflex {
                if r == k || r == (k + m - 1) % m || r == (k + 1) % m {
                    continue;
                }
                if point_strictly_in_triangle(verts[ring[r]], a, b, c) {
                    blocked = true;
                    break;
                }
            }
            if !blocked {
                tris.push([a, b, c]);
                ring.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // Degenerate corner (collinear run): drop the flattest vertex.
            let k = (0..m)
                .min_by(|&a, &b| {
                    cross_at(&ring, a)
                        .abs()
                        .partial_cmp(&cross_at(&ring, b).abs())
                        .unwrap()
                })
                .unwrap();
            let a = verts[ring[(k + m - 1) % m]];
            let b = verts[ring[k]];
            let c = verts[ring[(k + 1) % m]];
            tris.push([a, b, c]);
            ring.remove(k);
        }
        stuck_guard += 1;
        if stuck_guard > 4 * n {
            return Err(Error::Numeric("polygon triangulation did not finish".into()));
        }
    }
    tris.push([verts[ring[0]], verts[ring[1]], verts[ring[2]]]);
    Ok(tris)
}

fn point_strictly_in_triangle(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let d = |u: [f64; 2], v: [f64; 2], w: [f64; 2]| {
        (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])
    };
    d(a, b, p) > 0.0 && d(b, c, p) > 0.0 && d(c, a, p) > 0.0
}

/// Area of a convex-or-triangle subject polygon clipped to an axis-aligned
/// box (Sutherland–Hodgman against the four half-planes, then shoelace).
fn clip_area(subject: &[[f64; 2]], cell: [f64; 4]) -> f64 {
    let [x0, x1, y0, y1] = cell;
    let mut poly: Vec<[f64; 2]> = subject.to_vec();
    let mut next: Vec<[f64; 2]> = Vec::with_capacity(poly.len() + 4);
    // keep(p) for each half-plane, with interpolation along crossing edges
    let planes: [(usize, f64, bool); 4] = [
        (0, x0, true),  // x >= x0
        (0, x1, false), // x <= x1
        (1, y0, true),  // y >= y0
        (1, y1, false), // y <= y1
    ];
    for (axis, bound, keep_ge) in planes {
        next.clear();
        let inside = |p: [f64; 2]| {
            if keep_ge {
                p[axis] >= bound
            } else {
                p[axis] <= bound
            }
        };
        let m = poly.len();
        if m == 0 {
            return 0.0;
        }
        for i in 0..m {
            let cur = poly[i];
            let prev = poly[(i + m - 1) % m];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in != prev_in {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                let mut p = [
                    prev[0] + t * (cur[0] - prev[0]),
                    prev[1] + t * (cur[1] - prev[1]),
                ];
                p[axis] = bound;
                next.push(p);
            }
            if cur_in {
                next.push(cur);
            }
        }
        std::mem::swap(&mut poly, &mut next);
    }
    0.5 * signed_area2(&poly).abs()
}

// ---- circle ----------------------------------------------------------------

/// Exact area of the intersection of the disk of radius `r` centered at the
/// origin with the box `[x0,x1]×[y0,y1]` (Green's theorem over straight and
/// arc boundary pieces).
pub fn circle_box_area(r: f64, cell: [f64; 4]) -> f64 {
    let [x0, x1, y0, y1] = cell;
    // Corners of the box, CCW.
    let corners = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    let r2 = r * r;
    let mut area = 0.0;
    let mut crossings: Vec<f64> = Vec::new();

    for e in 0..4 {
        let p = corners[e];
        let q = corners[(e + 1) % 4];
        let d = [q[0] - p[0], q[1] - p[1]];
        // |p + t d|² = r², t in [0,1]
        let a = d[0] * d[0] + d[1] * d[1];
        let b = 2.0 * (p[0] * d[0] + p[1] * d[1]);
        let c = p[0] * p[0] + p[1] * p[1] - r2;
        let disc = b * b - 4.0 * a * c;
        let (mut t_lo, mut t_hi) = (f64::NAN, f64::NAN);
        if disc > 0.0 {
            let s = disc.sqrt();
            t_lo = (-b - s) / (2.0 * a);
            t_hi = (-b + s) / (2.0 * a);
        }
        // Portion of the edge inside the disk.
        let (mut u0, mut u1) = if disc > 0.0 {
            (t_lo.clamp(0.0, 1.0), t_hi.clamp(0.0, 1.0))
        } else if c <= 0.0 {
            (0.0, 1.0) // entire edge inside (disc <= 0 means no crossing)
        } else {
            (0.0, 0.0)
        };
        if disc > 0.0 && (t_hi < 0.0 || t_lo > 1.0) {
            // crossing interval misses the segment entirely
            let mid = [p[0] + 0.5 * d[0], p[1] + 0.5 * d[1]];
            if mid[0] * mid[0] + mid[1] * mid[1] <= r2 {
                u0 = 0.0;
                u1 = 1.0;
            } else {
                u0 = 0.0;
                u1 = 0.0;
            }
        }
        if u1 > u0 {
            let a_pt = [p[0] + u0 * d[0], p[1] + u0 * d[1]];
            let b_pt = [p[0] + u1 * d[0], p[1] + u1 * d[1]];
            area += 0.5 * (a_pt[0] * b_pt[1] - b_pt[0] * a_pt[1]);
        }
        // Record true boundary crossings (interior of the segment range).
        if disc > 0.0 {
            for t in [t_lo, t_hi] {
                if (0.0..=1.0).contains(&t) {
                    let pt = [p[0] + t * d[0], p[1] + t * d[1]];
                    crossings.push(pt[1].atan2(pt[0]));
                }
            }
        }
    }

    if crossings.is_empty() {
        let all_corners_inside = corners
            .iter()
            .all(|c| c[0] * c[0] + c[1] * c[1] <= r2);
        if all_corners_inside {
            return area; // box fully inside the disk: shoelace of the box
        }
        let center_in_box = x0 <= 0.0 && 0.0 <= x1 && y0 <= 0.0 && 0.0 <= y1;
        if center_in_box {
            return PI * r2; // disk fully inside the box
        }
        return 0.0;
    }

    crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
    crossings.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let m = crossings.len();
    for i in 0..m {
        let t0 = crossings[i];
        let t1 = if i + 1 < m {
            crossings[i + 1]
        } else {
            crossings[0] + TAU
        };
        let span = t1 - t0;
        if span <= 0.0 {
            continue;
        }
        let tm = t0 + 0.5 * span;
        let mid = [r * tm.cos(), r * tm.sin()];
        let eps = 1e-12 * r.max(1.0);
        if mid[0] >= x0 - eps && mid[0] <= x1 + eps && mid[1] >= y0 - eps && mid[1] <= y1 + eps {
            area += 0.5 * r2 * span;
        }
    }
    area.max(0.0)
}

// ---- band ------------------------------------------------------------------

fn band_box_area(band: &BandShape, cell: [f64; 4]) -> f64 {
    let [cx0, cx1, cy0, cy1] = cell;
    let xs = &band.x_knots;
    let n = xs.len();
    let a = cx0.max(xs[0]);
    let b = cx1.min(xs[n - 1]);
    if b <= a {
        return 0.0;
    }
    let mut total = 0.0;
    let first = xs.partition_point(|&x| x <= a).saturating_sub(1);
    for i in first..n - 1 {
        if xs[i] >= b {
            break;
        }
        let s = xs[i].max(a);
        let e = xs[i + 1].min(b);
        if e <= s {
            continue;
        }
        let w = xs[i + 1] - xs[i];
        let mu = (band.upper[i + 1] - band.upper[i]) / w;
        let ml = (band.lower[i + 1] - band.lower[i]) / w;
        let u_at = |x: f64| band.upper[i] + mu * (x - xs[i]);
        let l_at = |x: f64| band.lower[i] + ml * (x - xs[i]);
        // Breakpoints where clamping kicks in.
        let mut pts = vec![s, e];
        for (m, v0, bound) in [
            (mu, band.upper[i], cy0),
            (mu, band.upper[i], cy1),
            (ml, band.lower[i], cy0),
            (ml, band.lower[i], cy1),
        ] {
            if m != 0.0 {
                let x = xs[i] + (bound - v0) / m;
                if x > s && x < e {
                    pts.push(x);
                }
            }
        }
        pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
        for k in 0..pts.len() - 1 {
            let (p, q) = (pts[k], pts[k + 1]);
            if q <= p {
                continue;
            }
            // Width is linear between breakpoints: trapezoid rule is exact.
            let len = |x: f64| (u_at(x).clamp(cy0, cy1) - l_at(x).clamp(cy0, cy1)).max(0.0);
            total += 0.5 * (len(p) + len(q)) * (q - p);
        }
    }
    total
}

// ---- ground-truth polygon constructors --------------------------------------

/// Axis-aligned rectangle as a 4-vertex polygon.
pub fn rect_polygon(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<ExactShape> {
    ExactShape::polygon(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
}

/// Square of half-diagonal... rather: axis-aligned square rotated by `angle`
/// about its center; `half` is half the side length.
pub fn rotated_square_polygon(cx: f64, cy: f64, half: f64, angle: f64) -> Result<ExactShape> {
    let (s, c) = angle.sin_cos();
    let rot = |x: f64, y: f64| [cx + c * x - s * y, cy + s * x + c * y];
    ExactShape::polygon(vec![
        rot(-half, -half),
        rot(half, -half),
        rot(half, half),
        rot(-half, half),
    ])
}

/// Circle approximated by an n-vertex polygon (for parity with polygonal
/// ground-truth pipelines; the analytic circle oracle is usually preferable).
pub fn circle_polygon(cx: f64, cy: f64, r: f64, nv: usize) -> Result<ExactShape> {
    polar_samples(nv, |_| r, cx, cy)
}

/// Star-convex flower `R(1 + δ cos(αθ))` sampled as an n-vertex polygon.
pub fn polar_flower_polygon(
    cx: f64,
    cy: f64,
    r: f64,
    delta: f64,
    alpha: u32,
    nv: usize,
) -> Result<ExactShape> {
    polar_samples(nv, |t| r * (1.0 + delta * (alpha as f64 * t).cos()), cx, cy)
}

/// Fourier-polar boundary sampled as an n-vertex polygon.
pub fn fourier_polygon(
    cx: f64,
    cy: f64,
    r0: f64,
    cos_coeffs: &[f64],
    sin_coeffs: &[f64],
    nv: usize,
) -> Result<ExactShape> {
    polar_samples(
        nv,
        |t| {
            let mut r = r0;
            for (n, c) in cos_coeffs.iter().enumerate() {
                r += c * ((n as f64 + 1.0) * t + PI).cos();
            }
            for (n, s) in sin_coeffs.iter().enumerate() {
                r += s * ((n as f64 + 1.0) * t + PI).sin();
            }
            r
        },
        cx,
        cy,
    )
}

fn polar_samples(nv: usize, r_of: impl Fn(f64) -> f64, cx: f64, cy: f64) -> Result<ExactShape> {
    if nv < 3 {
        return Err(Error::Validation("polar polygon needs >= 3 vertices".into()));
    }
    let verts: Vec<[f64; 2]> = (0..nv)
        .map(|i| {
            let t = TAU * i as f64 / nv as f64;
            let r = r_of(t);
            [cx + r * t.cos(), cy + r * t.sin()]
        })
        .collect();
    ExactShape::polygon(verts)
}
