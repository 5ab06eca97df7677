//! Differentiable shape primitives as tape-graph builders.
//!
//! Every primitive composes the shared boundary nonlinearity σ_k with a
//! signed boundary coordinate, producing a `[0,1]`-bounded scalar field that
//! is differentiable with respect to any design-bound geometric parameter.
//! 1D primitives stay on axis-aligned 1D fields so that broadcasting to the
//! plane happens as late as possible.

use crate::design::DesignVector;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::nonlin::Nonlinearity;
use crate::tape::{Graph, NodeId, ValueShape};
use std::sync::Arc;

/// A geometric parameter: either a fixed number or an entry of the design
/// vector.
#[derive(Debug, Clone, Copy)]
pub enum Bind {
    Const(f64),
    Var(usize),
}

impl Bind {
    pub fn value(&self, params: &DesignVector) -> f64 {
        match *self {
            Bind::Const(c) => c,
            Bind::Var(i) => params.values[i],
        }
    }

    pub fn node(&self, g: &mut Graph) -> Result<NodeId> {
        match *self {
            Bind::Const(c) => Ok(g.constant(c)),
            Bind::Var(i) => g.param(i),
        }
    }
}

impl From<f64> for Bind {
    fn from(c: f64) -> Self {
        Bind::Const(c)
    }
}

/// A shape field node: `[0,1]`-bounded everywhere by construction.
#[derive(Debug, Clone, Copy)]
pub struct ShapeExpr {
    pub node: NodeId,
}

impl ShapeExpr {
    pub fn new(node: NodeId) -> Self {
        ShapeExpr { node }
    }
}

/// Coordinate frame shapes are evaluated in. The default frame holds the
/// grid's 1D coordinate fields; transformed frames hold in-graph plane
/// coordinates (rotation mixes the axes, so 1D structure is lost there).
pub struct Frame {
    pub x: NodeId,
    pub y: NodeId,
    plane_x: Option<NodeId>,
    plane_y: Option<NodeId>,
}

impl Frame {
    /// Untransformed frame over the grid's sample coordinates.
    pub fn axes(g: &mut Graph, grid: &GridSpec) -> Result<Frame> {
        let x = g.x_coords(grid)?;
        let y = g.y_coords(grid)?;
        Ok(Frame {
            x,
            y,
            plane_x: None,
            plane_y: None,
        })
    }

    fn from_plane(x: NodeId, y: NodeId) -> Frame {
        Frame {
            x,
            y,
            plane_x: Some(x),
            plane_y: Some(y),
        }
    }

    /// Plane-shaped versions of both coordinates (broadcast on demand and
    /// cached so repeated star-convex builders share them).
    pub fn plane_coords(&mut self, g: &mut Graph) -> Result<(NodeId, NodeId)> {
        if self.plane_x.is_none() {
            self.plane_x = Some(to_plane(g, self.x)?);
        }
        if self.plane_y.is_none() {
            self.plane_y = Some(to_plane(g, self.y)?);
        }
        Ok((self.plane_x.unwrap(), self.plane_y.unwrap()))
    }

    /// Frame in which shapes appear rotated by `angle` (radians,
    /// counterclockwise) about `center`. The angle may be design-bound.
    pub fn rotated(
        &mut self,
        g: &mut Graph,
        angle: Bind,
        center: (f64, f64),
    ) -> Result<Frame> {
        let (px, py) = self.plane_coords(g)?;
        let a = angle.node(g)?;
        let ca = g.cos(a);
        let sa = g.sin(a);
        let dx = g.affine(px, 1.0, -center.0);
        let dy = g.affine(py, 1.0, -center.1);
        // coords' = R(-angle) · (p - c) + c
        let ca_dx = g.mul(ca, dx)?;
        let sa_dy = g.mul(sa, dy)?;
        let xr = g.add(ca_dx, sa_dy)?;
        let xr = g.affine(xr, 1.0, center.0);
        let sa_dx = g.mul(sa, dx)?;
        let ca_dy = g.mul(ca, dy)?;
        let yr = g.sub(ca_dy, sa_dx)?;
        let yr = g.affine(yr, 1.0, center.1);
        Ok(Frame::from_plane(xr, yr))
    }

    /// Frame in which shapes appear stretched by `(sx, sy)` about `center`.
    pub fn scaled(
        &mut self,
        g: &mut Graph,
        sx: Bind,
        sy: Bind,
        center: (f64, f64),
        params: &DesignVector,
    ) -> Result<Frame> {
        for (name, s) in [("x", &sx), ("y", &sy)] {
            let v = s.value(params);
            if !(v > 0.0) {
                return Err(Error::Validation(format!(
                    "aspect scale along {name} must be positive, got {v}"
                )));
            }
        }
        let sxn = sx.node(g)?;
        let syn = sy.node(g)?;
        let dx = g.affine(self.x, 1.0, -center.0);
        let dy = g.affine(self.y, 1.0, -center.1);
        let xs = g.div(dx, sxn)?;
        let xs = g.affine(xs, 1.0, center.0);
        let ys = g.div(dy, syn)?;
        let ys = g.affine(ys, 1.0, center.1);
        Ok(Frame {
            x: xs,
            y: ys,
            plane_x: None,
            plane_y: None,
        })
    }

    /// Frame in which shapes appear shifted by `(dx, dy)`.
    pub fn shifted(&self, g: &mut Graph, dx: Bind, dy: Bind) -> Result<Frame> {
        let dxn = dx.node(g)?;
        let dyn_ = dy.node(g)?;
        let xs = g.sub(self.x, dxn)?;
        let ys = g.sub(self.y, dyn_)?;
        Ok(Frame {
            x: xs,
            y: ys,
            plane_x: None,
            plane_y: None,
        })
    }
}

/// Broadcast an axis field to the plane; plane fields pass through.
pub fn to_plane(g: &mut Graph, node: NodeId) -> Result<NodeId> {
    match g.shape_of(node) {
        ValueShape::AlongX(_) => g.broadcast_x(node),
        ValueShape::AlongY(_) => g.broadcast_y(node),
        ValueShape::Plane(..) => Ok(node),
        s => Err(Error::Contract(format!(
            "cannot broadcast {s:?} to the plane"
        ))),
    }
}

/// Multiply two fields, broadcasting axis fields to the plane when their
/// axes differ.
fn mul_fields(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let (sa, sb) = (g.shape_of(a), g.shape_of(b));
    let compatible = matches!(
        (sa, sb),
        (ValueShape::Scalar, _) | (_, ValueShape::Scalar)
    ) || sa == sb;
    if compatible {
        g.mul(a, b)
    } else {
        let ap = to_plane(g, a)?;
        let bp = to_plane(g, b)?;
        g.mul(ap, bp)
    }
}

/// `σ_k(t - t0)` along a coordinate field.
pub fn step1d(g: &mut Graph, coord: NodeId, nl: Nonlinearity, t0: Bind) -> Result<ShapeExpr> {
    let t0n = t0.node(g)?;
    let d = g.sub(coord, t0n)?;
    Ok(ShapeExpr::new(g.nonlin(nl, d)))
}

/// `σ_k(t - a) · σ_k(b - t)` along a coordinate field.
pub fn rect1d(
    g: &mut Graph,
    coord: NodeId,
    nl: Nonlinearity,
    a: Bind,
    b: Bind,
) -> Result<ShapeExpr> {
    let an = a.node(g)?;
    let bn = b.node(g)?;
    let lo = g.sub(coord, an)?;
    let lo = g.nonlin(nl, lo);
    let hi = g.sub(bn, coord)?;
    let hi = g.nonlin(nl, hi);
    Ok(ShapeExpr::new(g.mul(lo, hi)?))
}

/// Axis-aligned rectangle: product of two 1D rectangles, with an independent
/// nonlinearity per axis.
#[allow(clippy::too_many_arguments)]
pub fn rect2d(
    g: &mut Graph,
    frame: &Frame,
    nl_x: Nonlinearity,
    nl_y: Nonlinearity,
    x0: Bind,
    x1: Bind,
    y0: Bind,
    y1: Bind,
) -> Result<ShapeExpr> {
    let rx = rect1d(g, frame.x, nl_x, x0, x1)?;
    let ry = rect1d(g, frame.y, nl_y, y0, y1)?;
    Ok(ShapeExpr::new(mul_fields(g, rx.node, ry.node)?))
}

/// d-dimensional box as a product of per-axis 1D rectangles over arbitrary
/// coordinate fields.
pub fn rectdd(
    g: &mut Graph,
    coords: &[NodeId],
    nls: &[Nonlinearity],
    bounds: &[(Bind, Bind)],
) -> Result<ShapeExpr> {
    if coords.is_empty() || coords.len() != nls.len() || coords.len() != bounds.len() {
        return Err(Error::Contract(
            "rectdd needs matching, non-empty coords/nonlinearities/bounds".into(),
        ));
    }
    let mut acc: Option<NodeId> = None;
    for ((&c, &nl), &(lo, hi)) in coords.iter().zip(nls).zip(bounds) {
        let r = rect1d(g, c, nl, lo, hi)?;
        acc = Some(match acc {
            None => r.node,
            Some(p) => mul_fields(g, p, r.node)?,
        });
    }
    Ok(ShapeExpr::new(acc.unwrap()))
}

/// Half-plane with transition along unit normal `n`:
/// `σ_k(n_x(x-x0) + n_y(y-y0))`.
pub fn step2d(
    g: &mut Graph,
    frame: &mut Frame,
    nl: Nonlinearity,
    normal: (f64, f64),
    x0: Bind,
    y0: Bind,
) -> Result<ShapeExpr> {
    let norm = (normal.0 * normal.0 + normal.1 * normal.1).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Validation("step2d normal must be nonzero".into()));
    }
    let (nx, ny) = (normal.0 / norm, normal.1 / norm);
    let (px, py) = frame.plane_coords(g)?;
    let x0n = x0.node(g)?;
    let y0n = y0.node(g)?;
    let dx = g.sub(px, x0n)?;
    let dy = g.sub(py, y0n)?;
    let tx = g.affine(dx, nx, 0.0);
    let ty = g.affine(dy, ny, 0.0);
    let arg = g.add(tx, ty)?;
    Ok(ShapeExpr::new(g.nonlin(nl, arg)))
}

/// Convex polygon from counterclockwise vertices: the product of one
/// half-plane per edge. Differentiable with respect to design-bound vertex
/// coordinates (edge normals are built in-graph).
pub fn poly2d(
    g: &mut Graph,
    frame: &mut Frame,
    nl: Nonlinearity,
    vertices: &[(Bind, Bind)],
    params: &DesignVector,
) -> Result<ShapeExpr> {
    let n = vertices.len();
    if n < 3 {
        return Err(Error::Validation(format!(
            "poly2d needs at least 3 vertices, got {n}"
        )));
    }
    // Convexity and orientation scan with current parameter values.
    let pts: Vec<(f64, f64)> = vertices
        .iter()
        .map(|(x, y)| (x.value(params), y.value(params)))
        .collect();
    let mut area2 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % n];
        area2 += x0 * y1 - x1 * y0;
        scale = scale.max(x0.abs()).max(y0.abs());
    }
    let tol = 1e-12 * scale.max(1.0) * scale.max(1.0);
    if area2 <= tol {
        return Err(Error::Validation(
            "poly2d vertices must be in counterclockwise order".into(),
        ));
    }
    for i in 0..n {
        let (ax, ay) = pts[i];
        let (bx, by) = pts[(i + 1) % n];
        let (cx, cy) = pts[(i + 2) % n];
        let cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
        if cross < -tol {
            return Err(Error::Validation(format!(
                "poly2d is concave at vertex {}",
                (i + 1) % n
            )));
        }
    }

    let (px, py) = frame.plane_coords(g)?;
    let mut acc: Option<NodeId> = None;
    for i in 0..n {
        let (ax, ay) = vertices[i];
        let (bx, by) = vertices[(i + 1) % n];
        let axn = ax.node(g)?;
        let ayn = ay.node(g)?;
        let bxn = bx.node(g)?;
        let byn = by.node(g)?;
        let ex = g.sub(bxn, axn)?;
        let ey = g.sub(byn, ayn)?;
        let len = g.hypot(ex, ey)?;
        // inward normal of a CCW edge is (-ey, ex) / len
        let rx = g.sub(px, axn)?;
        let ry = g.sub(py, ayn)?;
        let ney = g.neg(ey);
        let t1 = g.mul(ney, rx)?;
        let t2 = g.mul(ex, ry)?;
        let num = g.add(t1, t2)?;
        let arg = g.div(num, len)?;
        let s = g.nonlin(nl, arg);
        acc = Some(match acc {
            None => s,
            Some(p) => g.mul(p, s)?,
        });
    }
    Ok(ShapeExpr::new(acc.unwrap()))
}

/// Disk: `σ_k(R - r(x, y, x0, y0))`.
pub fn circ2d(
    g: &mut Graph,
    frame: &mut Frame,
    nl: Nonlinearity,
    radius: Bind,
    x0: Bind,
    y0: Bind,
    params: &DesignVector,
) -> Result<ShapeExpr> {
    if radius.value(params) <= 0.0 {
        return Err(Error::Validation("circ2d radius must be positive".into()));
    }
    let (px, py) = frame.plane_coords(g)?;
    let x0n = x0.node(g)?;
    let y0n = y0.node(g)?;
    let dx = g.sub(px, x0n)?;
    let dy = g.sub(py, y0n)?;
    let r = g.hypot(dx, dy)?;
    let rn = radius.node(g)?;
    let arg = g.sub(rn, r)?;
    Ok(ShapeExpr::new(g.nonlin(nl, arg)))
}

/// Star-convex flower: `σ_k(R(1 + δ cos(α θ)) - r)`. `α` is a constant
/// positive integer (not design-bindable), keeping the boundary continuous
/// across the θ = π branch cut.
#[allow(clippy::too_many_arguments)]
pub fn polar2d(
    g: &mut Graph,
    frame: &mut Frame,
    nl: Nonlinearity,
    radius: Bind,
    delta: Bind,
    alpha: u32,
    x0: Bind,
    y0: Bind,
    params: &DesignVector,
) -> Result<ShapeExpr> {
    if alpha == 0 {
        return Err(Error::Validation("polar2d lobe count must be >= 1".into()));
    }
    validate_polar_radius(
        |theta| {
            radius.value(params) * (1.0 + delta.value(params) * (alpha as f64 * theta).cos())
        },
        "polar2d",
    )?;
    let (px, py) = frame.plane_coords(g)?;
    let x0n = x0.node(g)?;
    let y0n = y0.node(g)?;
    let dx = g.sub(px, x0n)?;
    let dy = g.sub(py, y0n)?;
    let r = g.hypot(dx, dy)?;
    let theta = g.atan2(dy, dx)?;
    let at = g.affine(theta, alpha as f64, 0.0);
    let c = g.cos(at);
    let dn = delta.node(g)?;
    let dc = g.mul(dn, c)?;
    let one_dc = g.affine(dc, 1.0, 1.0);
    let rn = radius.node(g)?;
    let rtheta = g.mul(rn, one_dc)?;
    let arg = g.sub(rtheta, r)?;
    Ok(ShapeExpr::new(g.nonlin(nl, arg)))
}

/// R(θ) > 0 check on a 720-point θ grid.
fn validate_polar_radius(r_of_theta: impl Fn(f64) -> f64, what: &str) -> Result<()> {
    for i in 0..720 {
        let theta = -std::f64::consts::PI + (i as f64 + 0.5) * std::f64::consts::TAU / 720.0;
        let r = r_of_theta(theta);
        if !(r > 0.0) {
            return Err(Error::Validation(format!(
                "{what}: boundary radius R(θ) = {r} is not positive at θ = {theta:.4}"
            )));
        }
    }
    Ok(())
}

/// Fourier-series polar boundary (order-N sine/cosine basis with the +π
/// phase convention).
#[derive(Debug, Clone)]
pub struct FourierPolarParams {
    pub r0: Bind,
    pub cos_coeffs: Vec<Bind>,
    pub sin_coeffs: Vec<Bind>,
    pub center: (Bind, Bind),
}

impl FourierPolarParams {
    pub fn radius_at(&self, theta: f64, params: &DesignVector) -> f64 {
        let mut r = self.r0.value(params);
        for (n, c) in self.cos_coeffs.iter().enumerate() {
            r += c.value(params) * ((n as f64 + 1.0) * theta + std::f64::consts::PI).cos();
        }
        for (n, s) in self.sin_coeffs.iter().enumerate() {
            r += s.value(params) * ((n as f64 + 1.0) * theta + std::f64::consts::PI).sin();
        }
        r
    }
}

/// Star-convex scatterer with Fourier-parameterized boundary:
/// `σ_k(R(θ) - r)`.
pub fn fourier_polar(
    g: &mut Graph,
    frame: &mut Frame,
    nl: Nonlinearity,
    p: &FourierPolarParams,
    params: &DesignVector,
) -> Result<ShapeExpr> {
    validate_polar_radius(|theta| p.radius_at(theta, params), "fourier_polar")?;
    let (px, py) = frame.plane_coords(g)?;
    let x0n = p.center.0.node(g)?;
    let y0n = p.center.1.node(g)?;
    let dx = g.sub(px, x0n)?;
    let dy = g.sub(py, y0n)?;
    let r = g.hypot(dx, dy)?;
    let theta = g.atan2(dy, dx)?;
    let mut rt = p.r0.node(g)?;
    for (i, &c) in p.cos_coeffs.iter().enumerate() {
        let n = i as f64 + 1.0;
        let phase = g.affine(theta, n, std::f64::consts::PI);
        let basis = g.cos(phase);
        let cn = c.node(g)?;
        let term = g.mul(cn, basis)?;
        let rt_f = g.add(rt, term)?;
        rt = rt_f;
    }
    for (i, &s) in p.sin_coeffs.iter().enumerate() {
        let n = i as f64 + 1.0;
        let phase = g.affine(theta, n, std::f64::consts::PI);
        let basis = g.sin(phase);
        let sn = s.node(g)?;
        let term = g.mul(sn, basis)?;
        let rt_f = g.add(rt, term)?;
        rt = rt_f;
    }
    // R(θ) starts as a scalar node; adding θ-dependent terms lifts it to the
    // plane. A pure-R0 boundary stays scalar, so lift explicitly before
    // subtracting r.
    let arg = g.sub(rt, r)?;
    let arg = match g.shape_of(arg) {
        ValueShape::Scalar => unreachable!("r is a plane field"),
        _ => arg,
    };
    Ok(ShapeExpr::new(g.nonlin(nl, arg)))
}

/// Linear taper boundary perturbed by an enveloped sine series. The envelope
/// and basis functions depend only on x, so they are baked into constant
/// fields; the graph is an affine combination `f = base(x) + Σ v_i b_i(x)`.
#[derive(Debug, Clone)]
pub struct BoundaryFunctionParams {
    pub w_in: f64,
    pub w_out: f64,
    pub length: f64,
    pub x_start: f64,
    pub coeffs: Vec<Bind>,
}

impl BoundaryFunctionParams {
    pub fn envelope(&self, x: f64) -> f64 {
        0.1 + 0.45 * (1.0 - (std::f64::consts::TAU * (x - self.x_start) / self.length).cos())
    }

    pub fn base(&self, x: f64) -> f64 {
        0.5 * self.w_in + 0.5 * (self.w_out - self.w_in) * (x - self.x_start) / self.length
    }

    pub fn basis(&self, i: usize, x: f64) -> f64 {
        self.envelope(x)
            * ((i as f64 + 1.0) * std::f64::consts::PI * (x - self.x_start) / self.length).sin()
    }

    /// Boundary height at `x` for the given coefficient values.
    pub fn boundary(&self, x: f64, params: &DesignVector) -> f64 {
        let mut f = self.base(x);
        for (i, c) in self.coeffs.iter().enumerate() {
            f += c.value(params) * self.basis(i, x);
        }
        f
    }
}

/// Build the boundary function f(x) as a 1D field over the grid's x samples.
pub fn taper_boundary(
    g: &mut Graph,
    grid: &GridSpec,
    p: &BoundaryFunctionParams,
) -> Result<NodeId> {
    if !(p.length > 0.0) {
        return Err(Error::Validation("taper length must be positive".into()));
    }
    let xs = grid.x_coords();
    let base: Vec<f64> = xs.iter().map(|&x| p.base(x)).collect();
    let mut f = g.const_field(Arc::new(base), ValueShape::AlongX(grid.nx))?;
    for (i, &c) in p.coeffs.iter().enumerate() {
        let b: Vec<f64> = xs.iter().map(|&x| p.basis(i, x)).collect();
        let bn = g.const_field(Arc::new(b), ValueShape::AlongX(grid.nx))?;
        let cn = c.node(g)?;
        let term = g.mul(cn, bn)?;
        f = g.add(f, term)?;
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySide {
    /// Interior where f - t > 0 (below the boundary curve).
    Below,
    /// Interior where t - f > 0.
    Above,
}

/// General Cartesian boundary shape `σ_k(±(f(x) - t))`, where `f` is any 1D
/// field along x and `t` a transverse coordinate field (y, or |y| for
/// mirror-symmetric shapes).
pub fn general_cartesian(
    g: &mut Graph,
    f: NodeId,
    transverse: NodeId,
    side: BoundarySide,
    nl: Nonlinearity,
) -> Result<ShapeExpr> {
    let fp = to_plane(g, f)?;
    let tp = to_plane(g, transverse)?;
    let diff = match side {
        BoundarySide::Below => g.sub(fp, tp)?,
        BoundarySide::Above => g.sub(tp, fp)?,
    };
    Ok(ShapeExpr::new(g.nonlin(nl, diff)))
}

/// General polar boundary shape `σ_k(±(f(θ) - r))` from prebuilt f(θ) and r
/// plane fields.
pub fn general_polar(
    g: &mut Graph,
    f_theta: NodeId,
    r: NodeId,
    side: BoundarySide,
    nl: Nonlinearity,
) -> Result<ShapeExpr> {
    let diff = match side {
        BoundarySide::Below => g.sub(f_theta, r)?,
        BoundarySide::Above => g.sub(r, f_theta)?,
    };
    Ok(ShapeExpr::new(g.nonlin(nl, diff)))
}

/// |y| as a constant transverse-coordinate field, for mirror-symmetric
/// Cartesian boundaries.
pub fn abs_y_coords(g: &mut Graph, grid: &GridSpec) -> Result<NodeId> {
    let data: Vec<f64> = grid.y_coords().iter().map(|y| y.abs()).collect();
    g.const_field(Arc::new(data), ValueShape::AlongY(grid.ny))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlin::NonlinKind;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(-1.0, -1.0, 2.0 / n as f64, 2.0 / n as f64, n, n).unwrap()
    }

    fn nl(kind: NonlinKind, k: f64) -> Nonlinearity {
        Nonlinearity::new(kind, k).unwrap()
    }

    fn dummy() -> DesignVector {
        DesignVector::anonymous(vec![0.0]).unwrap()
    }

    #[test]
    fn step1d_half_on_boundary_cell() {
        // Δx = 0.08 grid over [-1, 1]: cell centers at -1 + (i+0.5)·0.08;
        // x = -0.4 is the center of cell 7.
        let gs = GridSpec::new(-1.0, -1.0, 0.08, 0.08, 25, 25).unwrap();
        let mut g = Graph::new(&gs, 1);
        let f = Frame::axes(&mut g, &gs).unwrap();
        let lin = nl(NonlinKind::Linear, 1.0 / 0.08);
        let s = step1d(&mut g, f.x, lin, Bind::Const(-0.4)).unwrap();
        let v = g.forward(s.node, &dummy()).unwrap();
        assert!((v.data[7] - 0.5).abs() < 1e-15);
        assert_eq!(v.data[0], 0.0);
        assert_eq!(v.data[24], 1.0);
    }

    #[test]
    fn rect2d_matches_product_of_rect1d() {
        let gs = grid(16);
        let mut g = Graph::new(&gs, 1);
        let f = Frame::axes(&mut g, &gs).unwrap();
        let s = nl(NonlinKind::Sigmoid, 16.0 / 0.125);
        let r2 = rect2d(
            &mut g,
            &f,
            s,
            s,
            Bind::Const(-0.4),
            Bind::Const(0.5),
            Bind::Const(-0.4),
            Bind::Const(0.7),
        )
        .unwrap();
        let rx = rect1d(&mut g, f.x, s, Bind::Const(-0.4), Bind::Const(0.5)).unwrap();
        let ry = rect1d(&mut g, f.y, s, Bind::Const(-0.4), Bind::Const(0.7)).unwrap();
        let rxp = to_plane(&mut g, rx.node).unwrap();
        let ryp = to_plane(&mut g, ry.node).unwrap();
        let prod = g.mul(rxp, ryp).unwrap();
        let params = dummy();
        let a = g.forward(r2.node, &params).unwrap().data.clone();
        let b = g.forward(prod, &params).unwrap().data.clone();
        assert_eq!(a, b);
    }

    #[test]
    fn rect2d_interior_one_exterior_zero_at_large_k() {
        let gs = GridSpec::new(-1.0, -1.0, 0.08, 0.08, 25, 25).unwrap();
        let mut g = Graph::new(&gs, 1);
        let f = Frame::axes(&mut g, &gs).unwrap();
        let s = nl(NonlinKind::Sigmoid, 16.0 / 0.08);
        let r = rect2d(
            &mut g,
            &f,
            s,
            s,
            Bind::Const(-0.4),
            Bind::Const(0.5),
            Bind::Const(-0.4),
            Bind::Const(0.7),
        )
        .unwrap();
        let v = g.forward(r.node, &dummy()).unwrap();
        let at = |x: f64, y: f64| {
            let i = ((x + 1.0) / 0.08 - 0.5).round() as usize;
            let j = ((y + 1.0) / 0.08 - 0.5).round() as usize;
            v.data[j * 25 + i]
        };
        assert!(at(0.0, 0.0) > 0.999, "deep interior {}", at(0.0, 0.0));
        assert!(at(-0.8, -0.8) < 1e-3, "exterior {}", at(-0.8, -0.8));
        assert!(at(0.9, 0.9) < 1e-3);
    }

    #[test]
    fn all_primitives_bounded_unit_interval() {
        let gs = grid(21);
        let mut g = Graph::new(&gs, 1);
        let mut f = Frame::axes(&mut g, &gs).unwrap();
        let sig = nl(NonlinKind::Sigmoid, 3.0);
        let params = dummy();
        let shapes = vec![
            step1d(&mut g, f.x, sig, Bind::Const(0.1)).unwrap(),
            rect1d(&mut g, f.x, sig, Bind::Const(-0.5), Bind::Const(0.3)).unwrap(),
            step2d(&mut g, &mut f, sig, (0.5, 3f64.sqrt() / 2.0), 0.2.into(), 0.2.into()).unwrap(),
            poly2d(
                &mut g,
                &mut f,
                sig,
                &[
                    (Bind::Const(-0.7), Bind::Const(0.6)),
                    (Bind::Const(0.0), Bind::Const(-0.5)),
                    (Bind::Const(0.7), Bind::Const(0.5)),
                ],
                &params,
            )
            .expect("ccw convex triangle should build"),
            circ2d(&mut g, &mut f, sig, 0.5.into(), 0.0.into(), (-0.5).into(), &params).unwrap(),
            polar2d(
                &mut g, &mut f, sig, 0.5.into(), 0.2.into(), 4, 0.0.into(), 0.0.into(), &params,
            )
            .unwrap(),
        ];
        for s in shapes {
            let v = g.forward(s.node, &params).unwrap().data.clone();
            assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn poly2d_rejects_clockwise_and_concave() {
        let gs = grid(11);
        let params = dummy();
        let mut g = Graph::new(&gs, 1);
        let mut f = Frame::axes(&mut g, &gs).unwrap();
        let sig = nl(NonlinKind::Sigmoid, 4.0);
        // clockwise triangle
        let cw = poly2d(
            &mut g,
            &mut f,
            sig,
            &[
                (Bind::Const(-0.7), Bind::Const(0.6)),
                (Bind::Const(0.7), Bind::Const(0.5)),
                (Bind::Const(0.0), Bind::Const(-0.5)),
            ],
            &params,
        );
        assert!(matches!(cw, Err(Error::Validation(_))));
        // concave quad (dart)
        let concave = poly2d(
            &mut g,
            &mut f,
            sig,
            &[
                (Bind::Const(-0.5), Bind::Const(-0.5)),
                (Bind::Const(0.5), Bind::Const(-0.5)),
                (Bind::Const(0.0), Bind::Const(0.0)),
                (Bind::Const(0.5), Bind::Const(0.5)),
            ],
            &params,
        );
        assert!(matches!(concave, Err(Error::Validation(_))));
    }

    #[test]
    fn polar_positivity_validated() {
        let gs = grid(11);
        let params = dummy();
        let mut g = Graph::new(&gs, 1);
        let mut f = Frame::axes(&mut g, &gs).unwrap();
        let sig = nl(NonlinKind::Sigmoid, 4.0);
        let bad = polar2d(
            &mut g, &mut f, sig, 0.5.into(), 1.5.into(), 4, 0.0.into(), 0.0.into(), &params,
        );
        assert!(matches!(bad, Err(Error::Validation(_))));
    }

    #[test]
    fn fourier_polar_order_zero_equals_circle() {
        let gs = grid(30);
        let params = dummy();
        let mut g = Graph::new(&gs, 1);
        let mut f = Frame::axes(&mut g, &gs).unwrap();
        let sig = nl(NonlinKind::Sigmoid, 20.0);
        let fp = FourierPolarParams {
            r0: 0.55.into(),
            cos_coeffs: vec![],
            sin_coeffs: vec![],
            center: (0.05.into(), (-0.1).into()),
        };
        let a = fourier_polar(&mut g, &mut f, sig, &fp, &params).unwrap();
        let b = circ2d(&mut g, &mut f, sig, 0.55.into(), 0.05.into(), (-0.1).into(), &params)
            .unwrap();
        let va = g.forward(a.node, &params).unwrap().data.clone();
        let vb = g.forward(b.node, &params).unwrap().data.clone();
        for (x, y) in va.iter().zip(&vb) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn fourier_phase_flips_cosine_sign() {
        // c1 > 0 with the +π phase shrinks the boundary at θ = 0.
        let p = FourierPolarParams {
            r0: 0.5.into(),
            cos_coeffs: vec![0.1.into()],
            sin_coeffs: vec![],
            center: (0.0.into(), 0.0.into()),
        };
        let params = dummy();
        assert!((p.radius_at(0.0, &params) - 0.4).abs() < 1e-15);
        assert!((p.radius_at(std::f64::consts::PI, &params) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rotate_zero_is_identity_and_square_symmetry() {
        let gs = grid(20);
        let params = dummy();
        let mut g = Graph::new(&gs, 1);
        let mut f = Frame::axes(&mut g, &gs).unwrap();
        let sig = nl(NonlinKind::Sigmoid, 30.0);
        let square = |g: &mut Graph, fr: &Frame| {
            rect2d(
                g,
                fr,
                sig,
                sig,
                Bind::Const(-0.4),
                Bind::Const(0.4),
                Bind::Const(-0.4),
                Bind::Const(0.4),
            )
            .unwrap()
        };
        let base = square(&mut g, &f);
        let mut rot0 = f.rotated(&mut g, Bind::Const(0.0), (0.0, 0.0)).unwrap();
        let r0 = square(&mut g, &rot0);
        let _ = &mut rot0;
        let mut rot90 = f
            .rotated(&mut g, Bind::Const(std::f64::consts::FRAC_PI_2), (0.0, 0.0))
            .unwrap();
        let r90 = square(&mut g, &rot90);
        let _ = &mut rot90;
        let vb = g.forward(base.node, &params).unwrap().data.clone();
        let v0 = g.forward(r0.node, &params).unwrap().data.clone();
        let v9 = g.forward(r90.node, &params).unwrap().data.clone();
        for i in 0..vb.len() {
            assert!((vb[i] - v0[i]).abs() < 1e-12, "rot 0 differs at {i}");
            assert!((vb[i] - v9[i]).abs() < 1e-9, "rot 90 differs at {i}");
        }
    }

    #[test]
    fn aspect_scale_must_be_positive() {
        let gs = grid(8);
        let params = dummy();
        let mut g = Graph::new(&gs, 1);
        let mut f = Frame::axes(&mut g, &gs).unwrap();
        assert!(f
            .scaled(&mut g, Bind::Const(0.0), Bind::Const(1.0), (0.0, 0.0), &params)
            .is_err());
        assert!(f
            .scaled(&mut g, Bind::Const(2.0), Bind::Const(-1.0), (0.0, 0.0), &params)
            .is_err());
    }

    #[test]
    fn small_shape_interior_stays_below_one() {
        // Rect1D of width 0.5/k: the interior maximum cannot reach 1.
        let gs = GridSpec::new(-1.0, -1.0, 0.01, 0.01, 200, 3).unwrap();
        let mut g = Graph::new(&gs, 1);
        let f = Frame::axes(&mut g, &gs).unwrap();
        let k = 10.0;
        let sig = nl(NonlinKind::Sigmoid, k);
        let w = 0.5 / k;
        let r = rect1d(&mut g, f.x, sig, Bind::Const(-w / 2.0), Bind::Const(w / 2.0)).unwrap();
        let v = g.forward(r.node, &dummy()).unwrap();
        let max = v.data.iter().cloned().fold(0.0, f64::max);
        assert!(max < 0.99, "small-shape interior max {max}");
    }

    #[test]
    fn large_k_converges_to_indicator() {
        let gs = GridSpec::new(-1.0, -1.0, 0.08, 0.08, 25, 25).unwrap();
        let params = dummy();
        for kind in NonlinKind::ALL {
            let mut g = Graph::new(&gs, 1);
            let mut f = Frame::axes(&mut g, &gs).unwrap();
            let s = nl(kind, 200.0 / 0.08);
            let c = circ2d(&mut g, &mut f, s, 0.53.into(), 0.0.into(), 0.0.into(), &params)
                .unwrap();
            let v = g.forward(c.node, &params).unwrap();
            for j in 0..25 {
                for i in 0..25 {
                    let (x, y) = (gs.x(i), gs.y(j));
                    let inside = (x * x + y * y).sqrt() < 0.53;
                    let got = v.data[j * 25 + i];
                    let want = if inside { 1.0 } else { 0.0 };
                    // cells essentially on the boundary are exempt
                    if ((x * x + y * y).sqrt() - 0.53).abs() > 0.04 {
                        assert!(
                            (got - want).abs() < 1e-3,
                            "{kind} at ({x},{y}): {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn taper_boundary_reduces_to_trapezoid_without_coeffs() {
        let gs = GridSpec::new(0.0, -6.5, 0.1, 0.1, 250, 130).unwrap();
        let p = BoundaryFunctionParams {
            w_in: 0.5,
            w_out: 10.5,
            length: 23.0,
            x_start: 1.0,
            coeffs: vec![Bind::Var(0)],
        };
        let params = DesignVector::anonymous(vec![0.0]).unwrap();
        let mut g = Graph::new(&gs, 1);
        let f = taper_boundary(&mut g, &gs, &p).unwrap();
        let v = g.forward(f, &params).unwrap().data.clone();
        for (i, &x) in gs.x_coords().iter().enumerate() {
            let want = 0.25 + 5.0 * (x - 1.0) / 23.0;
            assert!((v[i] - want).abs() < 1e-12);
        }
        // envelope pins the series to 0.1 amplitude at both ends
        assert!((p.envelope(1.0) - 0.1).abs() < 1e-12);
        assert!((p.envelope(24.0) - 0.1).abs() < 1e-12);
        // single coefficient displaces the boundary by envelope·v·sin(π(x-x0)/L)
        let params2 = DesignVector::anonymous(vec![0.1]).unwrap();
        let v2 = g.forward(f, &params2).unwrap().data.clone();
        for (i, &x) in gs.x_coords().iter().enumerate() {
            let want = 0.25 + 5.0 * (x - 1.0) / 23.0
                + p.envelope(x) * 0.1 * (std::f64::consts::PI * (x - 1.0) / 23.0).sin();
            assert!((v2[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn general_cartesian_gradient_matches_fd() {
        let gs = GridSpec::new(0.0, -2.0, 0.05, 0.05, 100, 80).unwrap();
        let p = BoundaryFunctionParams {
            w_in: 0.5,
            w_out: 2.5,
            length: 4.0,
            x_start: 0.5,
            coeffs: vec![Bind::Var(0), Bind::Var(1), Bind::Var(2)],
        };
        let mut g = Graph::new(&gs, 3);
        let f = taper_boundary(&mut g, &gs, &p).unwrap();
        let absy = abs_y_coords(&mut g, &gs).unwrap();
        let lin = nl(NonlinKind::Linear, 1.0 / 0.05);
        let s = general_cartesian(&mut g, f, absy, BoundarySide::Below, lin).unwrap();
        let mean = g.mean(s.node);
        let params = DesignVector::anonymous(vec![0.05, -0.03, 0.08]).unwrap();
        g.forward(mean, &params).unwrap();
        let grad = g.backward(mean, &[1.0]).unwrap();
        for i in 0..3 {
            let h = 1e-5;
            let mut plus = params.clone();
            plus.values[i] += h;
            let mut minus = params.clone();
            minus.values[i] -= h;
            let fp = g.forward(mean, &plus).unwrap().scalar();
            let fm = g.forward(mean, &minus).unwrap().scalar();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (grad[i] - fd).abs() <= 1e-8 + 1e-6 * fd.abs(),
                "coeff {i}: ad {} fd {}",
                grad[i],
                fd
            );
        }
    }
}
