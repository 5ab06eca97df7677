//! Differentiable effective Boolean logic over `[0,1]`-bounded shape fields.
//!
//! The default (clamp) union and intersection are the piecewise-linear
//! truth-table forms: `min{1, Σsᵢ}` and `max{N-1, Σsᵢ} − (N−1)`. Smooth,
//! recursive and product variants are available for experimentation; smooth
//! variants approach the binary truth table only as k grows.

use crate::error::{Error, Result};
use crate::nonlin::Nonlinearity;
use crate::shapes::ShapeExpr;
use crate::tape::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnionVariant {
    Clamp,
    Smooth(Nonlinearity),
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntersectionVariant {
    Clamp,
    Smooth(Nonlinearity),
    Product,
}

fn sum_fields(g: &mut Graph, shapes: &[ShapeExpr]) -> Result<NodeId> {
    let mut acc = shapes[0].node;
    for s in &shapes[1..] {
        acc = g.add(acc, s.node)?;
    }
    Ok(acc)
}

/// Union of one or more shapes on the same grid.
pub fn union(g: &mut Graph, shapes: &[ShapeExpr], variant: UnionVariant) -> Result<ShapeExpr> {
    if shapes.is_empty() {
        return Err(Error::Contract("union of zero shapes".into()));
    }
    let node = match variant {
        UnionVariant::Clamp => {
            let s = sum_fields(g, shapes)?;
            g.clamp_max(s, 1.0)
        }
        UnionVariant::Smooth(nl) => {
            let s = sum_fields(g, shapes)?;
            let arg = g.affine(s, 1.0, -0.5);
            g.nonlin(nl, arg)
        }
        UnionVariant::Recursive => {
            // u ← s + (1 − s)·u, folded over the list.
            let mut u = shapes[0].node;
            for s in &shapes[1..] {
                let one_minus = g.affine(s.node, -1.0, 1.0);
                let scaled = g.mul(one_minus, u)?;
                u = g.add(s.node, scaled)?;
            }
            u
        }
    };
    Ok(ShapeExpr::new(node))
}

/// Intersection of one or more shapes on the same grid.
pub fn intersection(
    g: &mut Graph,
    shapes: &[ShapeExpr],
    variant: IntersectionVariant,
) -> Result<ShapeExpr> {
    if shapes.is_empty() {
        return Err(Error::Contract("intersection of zero shapes".into()));
    }
    let n = shapes.len() as f64;
    let node = match variant {
        IntersectionVariant::Clamp => {
            let s = sum_fields(g, shapes)?;
            let c = g.clamp_min(s, n - 1.0);
            g.affine(c, 1.0, -(n - 1.0))
        }
        IntersectionVariant::Smooth(nl) => {
            let s = sum_fields(g, shapes)?;
            let arg = g.affine(s, 1.0, -(n - 0.5));
            g.nonlin(nl, arg)
        }
        IntersectionVariant::Product => {
            let mut acc = shapes[0].node;
            for s in &shapes[1..] {
                acc = g.mul(acc, s.node)?;
            }
            acc
        }
    };
    Ok(ShapeExpr::new(node))
}

/// Clamped set difference `max{0, base − cut}`; reduces to the binary set
/// difference at binary inputs.
pub fn subtract(g: &mut Graph, base: ShapeExpr, cut: ShapeExpr) -> Result<ShapeExpr> {
    let d = g.sub(base.node, cut.node)?;
    Ok(ShapeExpr::new(g.clamp_min(d, 0.0)))
}

/// One priority level of a non-binary material union: the shapes at this
/// level and the level's material value.
#[derive(Debug, Clone)]
pub struct MaterialLevelSet {
    pub shapes: Vec<ShapeExpr>,
    pub level: f64,
}

/// Union over K material levels: iteratively rescale the lower-priority
/// union by ε^{k−1}/ε^k and union with the next set, finally scaling by ε^K.
/// Level values are constants in the graph; the higher material value wins on
/// overlap, and the output lives in `[background, background + max level]`.
pub fn union_multilevel(
    g: &mut Graph,
    levels: &[MaterialLevelSet],
    background: f64,
    variant: UnionVariant,
) -> Result<ShapeExpr> {
    if levels.is_empty() {
        return Err(Error::Validation("multilevel union needs K >= 1".into()));
    }
    let rel: Vec<f64> = levels.iter().map(|l| l.level - background).collect();
    for (k, &r) in rel.iter().enumerate() {
        if !(r > 0.0) {
            return Err(Error::Validation(format!(
                "material level {} must lie strictly above the background",
                levels[k].level
            )));
        }
        if k > 0 && rel[k - 1] >= r {
            return Err(Error::Validation(
                "material levels must be sorted strictly ascending".into(),
            ));
        }
    }
    let mut s = union(g, &levels[0].shapes, variant)?.node;
    for k in 1..levels.len() {
        let sk = union(g, &levels[k].shapes, variant)?;
        let rescaled = g.affine(s, rel[k - 1] / rel[k], 0.0);
        s = union(
            g,
            &[ShapeExpr::new(rescaled), sk],
            variant,
        )?
        .node;
    }
    let scaled = g.affine(s, rel[levels.len() - 1], 0.0);
    let out = g.affine(scaled, 1.0, background);
    Ok(ShapeExpr::new(out))
}

/// Map a `[0,1]` shape field to material values: `ε_b + (ε_s − ε_b)·s`.
pub fn scale_to_materials(g: &mut Graph, shape: ShapeExpr, eps_b: f64, eps_s: f64) -> ShapeExpr {
    ShapeExpr::new(g.affine(shape.node, eps_s - eps_b, eps_b))
}
