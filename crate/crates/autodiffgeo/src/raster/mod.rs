//! Sampling shape fields onto grids, the exact-overlap oracle, and the
//! finite-difference / AutoDiff material-Jacobian analysis tools.

pub mod exact;

pub use exact::{exact_average, ExactScene, ExactShape};

use crate::design::DesignVector;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, MaterialGrid};
use crate::tape::{Graph, NodeId, ValueShape};
use crate::threads;

/// Threshold below which Jacobian entries are dropped from sparse storage.
pub const JACOBIAN_DROP: f64 = 1e-12;

/// Evaluate a shape graph once per cell (at cell centers) and wrap the plane
/// field as a material grid. The root must already be scaled to material
/// values (or be a bare `[0,1]` shape, with `materials = (0, 1)`).
pub fn rasterize_oneshot(
    g: &mut Graph,
    root: NodeId,
    params: &DesignVector,
    grid: &GridSpec,
    materials: (f64, f64),
) -> Result<MaterialGrid> {
    match g.shape_of(root) {
        ValueShape::Plane(nx, ny) if nx == grid.nx && ny == grid.ny => {}
        s => {
            return Err(Error::Contract(format!(
                "rasterize expects a {}x{} plane root, got {s:?}",
                grid.nx, grid.ny
            )))
        }
    }
    let v = g.forward(root, params)?;
    MaterialGrid::new(v.data.clone(), grid.clone(), materials)
}

/// Per-cell mean of a scene over a q×q uniform subgrid, computed by averaging
/// one-shot rasterizations on fractionally offset grids. `q = 1` is exactly
/// [`rasterize_oneshot`].
pub fn rasterize_supersampled<F>(build: F, grid: &GridSpec, q: usize) -> Result<MaterialGrid>
where
    F: Fn(&GridSpec) -> Result<MaterialGrid> + Sync,
{
    if q == 0 {
        return Err(Error::Contract("supersampling needs q >= 1".into()));
    }
    let offsets: Vec<(f64, f64)> = (0..q * q)
        .map(|idx| {
            let (a, b) = (idx % q, idx / q);
            (
                grid.offset.0 + (a as f64 + 0.5) / q as f64 - 0.5,
                grid.offset.1 + (b as f64 + 0.5) / q as f64 - 0.5,
            )
        })
        .collect();
    let grids: Vec<GridSpec> = offsets
        .iter()
        .map(|&(ox, oy)| grid.clone().with_offset(ox, oy))
        .collect();
    let samples = threads::map_indices(grids.len(), |i| build(&grids[i]));
    let mut acc = vec![0.0; grid.cells()];
    let mut materials = (0.0, 1.0);
    for s in samples {
        let m = s?;
        materials = m.materials;
        for (a, v) in acc.iter_mut().zip(&m.values) {
            *a += v;
        }
    }
    let scale = 1.0 / (q * q) as f64;
    for a in &mut acc {
        *a *= scale;
    }
    MaterialGrid::new(acc, grid.clone(), materials)
}

/// Mean squared error between two grids plus the signed per-cell error map.
pub fn mse_report(approx: &MaterialGrid, truth: &MaterialGrid) -> Result<(f64, MaterialGrid)> {
    if !approx.same_grid(truth) {
        return Err(Error::Contract("mse_report: grids differ".into()));
    }
    let diffs: Vec<f64> = approx
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, t)| a - t)
        .collect();
    let mse = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
    let map = MaterialGrid::new(diffs, approx.grid.clone(), (0.0, 0.0))?;
    Ok((mse, map))
}

/// Sparse m×n material Jacobian stored by column.
#[derive(Debug, Clone)]
pub struct SparseJacobian {
    pub nrows: usize,
    pub ncols: usize,
    pub cols: Vec<Vec<(u32, f64)>>,
}

impl SparseJacobian {
    pub fn nnz(&self) -> usize {
        self.cols.iter().map(|c| c.len()).sum()
    }

    pub fn column_dense(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.nrows];
        for &(r, x) in &self.cols[i] {
            v[r as usize] = x;
        }
        v
    }

    pub fn from_dense_columns(nrows: usize, cols: Vec<Vec<f64>>) -> Self {
        let sparse = cols
            .into_iter()
            .map(|c| {
                c.into_iter()
                    .enumerate()
                    .filter(|(_, v)| v.abs() >= JACOBIAN_DROP)
                    .map(|(r, v)| (r as u32, v))
                    .collect()
            })
            .collect::<Vec<_>>();
        SparseJacobian {
            nrows,
            ncols: sparse.len(),
            cols: sparse,
        }
    }
}

/// Forward-difference material Jacobian: `n + 1` rasterizations of the scene,
/// stored sparse. `rasterize` maps a parameter vector to the flat material
/// field (any representation — exact or one-shot).
pub fn fd_material_jacobian<F>(
    rasterize: F,
    params: &DesignVector,
    h: f64,
) -> Result<SparseJacobian>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if !(h > 0.0) {
        return Err(Error::Contract(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let base = rasterize(&params.values)?;
    let m = base.len();
    let n = params.len();
    let cols = threads::map_indices(n, |i| -> Result<Vec<(u32, f64)>> {
        let mut v = params.values.clone();
        v[i] += h;
        let pert = rasterize(&v)?;
        if pert.len() != m {
            return Err(Error::Contract(
                "rasterizer changed output size across perturbations".into(),
            ));
        }
        Ok(pert
            .iter()
            .zip(&base)
            .enumerate()
            .filter_map(|(j, (p, b))| {
                let d = (p - b) / h;
                (d.abs() >= JACOBIAN_DROP).then_some((j as u32, d))
            })
            .collect())
    });
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SparseJacobian {
        nrows: m,
        ncols: n,
        cols,
    })
}

/// AutoDiff material Jacobian via one forward-mode tangent sweep per
/// parameter; same sparse layout as the FD version.
pub fn ad_material_jacobian(
    g: &mut Graph,
    root: NodeId,
    params: &DesignVector,
) -> Result<SparseJacobian> {
    let m = g.shape_of(root).len();
    g.forward(root, params)?;
    let n = params.len();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut seed = vec![0.0; n];
        seed[i] = 1.0;
        let col = g.forward_tangent(root, &seed)?;
        cols.push(
            col.into_iter()
                .enumerate()
                .filter(|(_, v)| v.abs() >= JACOBIAN_DROP)
                .map(|(r, v)| (r as u32, v))
                .collect(),
        );
    }
    Ok(SparseJacobian {
        nrows: m,
        ncols: n,
        cols,
    })
}

/// Least-squares slope of `ad ≈ slope · fd` through the origin over the union
/// of nonzero entries, plus the RMSE of the fit residuals.
pub fn jacobian_fit(ad: &SparseJacobian, fd: &SparseJacobian) -> Result<(f64, f64)> {
    if ad.nrows != fd.nrows || ad.ncols != fd.ncols {
        return Err(Error::Contract("jacobian_fit: shapes differ".into()));
    }
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for c in 0..ad.ncols {
        let mut merged: std::collections::BTreeMap<u32, (f64, f64)> = std::collections::BTreeMap::new();
        for &(r, v) in &ad.cols[c] {
            merged.entry(r).or_insert((0.0, 0.0)).0 = v;
        }
        for &(r, v) in &fd.cols[c] {
            merged.entry(r).or_insert((0.0, 0.0)).1 = v;
        }
        for (_, (a, f)) in merged {
            sxy += a * f;
            sxx += f * f;
            pairs.push((a, f));
        }
    }
    if pairs.is_empty() || sxx == 0.0 {
        return Err(Error::Contract(
            "jacobian_fit: no nonzero entries to fit".into(),
        ));
    }
    let slope = sxy / sxx;
    let ss: f64 = pairs.iter().map(|(a, f)| (a - slope * f).powi(2)).sum();
    let rmse = (ss / pairs.len() as f64).sqrt();
    Ok((slope, rmse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlin::{NonlinKind, Nonlinearity};
    use crate::shapes::{rect2d, Bind, Frame};

    fn lin(k: f64) -> Nonlinearity {
        Nonlinearity::new(NonlinKind::Linear, k).unwrap()
    }

    /// One-shot linear-σ rasterization of an axis-aligned rectangle equals
    /// the exact overlap fraction in every cell (the zero-error case).
    #[test]
    fn linear_oneshot_equals_exact_for_rects() {
        let grid = GridSpec::new(-1.0, -1.0, 0.08, 0.08, 25, 25)
            .unwrap()
            .with_offset(0.13, -0.21);
        let (x0, x1, y0, y1) = (-0.413, 0.537, -0.391, 0.713);
        let mut g = Graph::new(&grid, 1);
        let f = Frame::axes(&mut g, &grid).unwrap();
        let nl = lin(1.0 / 0.08);
        let r = rect2d(
            &mut g,
            &f,
            nl,
            nl,
            Bind::Const(x0),
            Bind::Const(x1),
            Bind::Const(y0),
            Bind::Const(y1),
        )
        .unwrap();
        let params = DesignVector::anonymous(vec![0.0]).unwrap();
        let oneshot = rasterize_oneshot(&mut g, r.node, &params, &grid, (0.0, 1.0)).unwrap();
        let shape = exact::rect_polygon(x0, x1, y0, y1).unwrap();
        let truth = exact_average(&shape, &grid, (0.0, 1.0)).unwrap();
        let max_err = oneshot
            .values
            .iter()
            .zip(&truth.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1e-12, "max per-cell error {max_err}");
    }

    #[test]
    fn supersample_q1_is_oneshot_and_counts_subsamples() {
        let grid = GridSpec::new(0.0, 0.0, 1.0, 1.0, 4, 4).unwrap();
        // Binary-limit half plane x <= 2.0 (edge through the center of column 1..2 boundary).
        let build = |gs: &GridSpec| -> Result<MaterialGrid> {
            let values: Vec<f64> = (0..gs.cells())
                .map(|idx| {
                    let i = idx % gs.nx;
                    if gs.x(i) <= 2.0 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            MaterialGrid::new(values, gs.clone(), (0.0, 1.0))
        };
        let one = rasterize_supersampled(build, &grid, 1).unwrap();
        let direct = build(&grid).unwrap();
        assert_eq!(one.values, direct.values);
        let q2 = rasterize_supersampled(build, &grid, 2).unwrap();
        for v in &q2.values {
            assert!(
                [0.0, 0.25, 0.5, 0.75, 1.0].iter().any(|w| (v - w).abs() < 1e-15),
                "q=2 cell value {v} not a quarter fraction"
            );
        }
    }

    #[test]
    fn fd_jacobian_zero_column_for_inert_parameter() {
        let params = DesignVector::anonymous(vec![0.5, 0.25]).unwrap();
        // Only parameter 0 moves the field.
        let raster = |v: &[f64]| -> Result<Vec<f64>> { Ok(vec![v[0], 2.0 * v[0], 1.0]) };
        let jac = fd_material_jacobian(raster, &params, 1e-6).unwrap();
        assert_eq!(jac.cols[1].len(), 0);
        let c0 = jac.column_dense(0);
        assert!((c0[0] - 1.0).abs() < 1e-6 && (c0[1] - 2.0).abs() < 1e-5);
        assert!(fd_material_jacobian(raster, &params, 0.0).is_err());
    }

    #[test]
    fn jacobian_fit_recovers_exact_scale() {
        let fd = SparseJacobian::from_dense_columns(
            4,
            vec![vec![1.0, 0.0, -2.0, 0.5], vec![0.0, 3.0, 0.0, -1.0]],
        );
        let (s, r) = jacobian_fit(&fd, &fd).unwrap();
        assert!((s - 1.0).abs() < 1e-15 && r < 1e-15);
        let ad = SparseJacobian::from_dense_columns(
            4,
            vec![
                vec![0.7, 0.0, -1.4, 0.35],
                vec![0.0, 2.1, 0.0, -0.7],
            ],
        );
        let (s2, r2) = jacobian_fit(&ad, &fd).unwrap();
        assert!((s2 - 0.7).abs() < 1e-12 && r2 < 1e-12);
    }

    #[test]
    fn ad_and_fd_jacobians_agree_for_smooth_scene() {
        let grid = GridSpec::new(-1.0, -1.0, 0.1, 0.1, 20, 20).unwrap();
        let params = DesignVector::anonymous(vec![-0.35, 0.4]).unwrap();
        let nl = Nonlinearity::new(NonlinKind::Sigmoid, 6.0).unwrap();
        let build_graph = |params: &DesignVector| -> Result<(Graph, NodeId)> {
            let mut g = Graph::new(&grid, params.len());
            let f = Frame::axes(&mut g, &grid).unwrap();
            let r = rect2d(
                &mut g,
                &f,
                nl,
                nl,
                Bind::Var(0),
                Bind::Var(1),
                Bind::Const(-0.5),
                Bind::Const(0.5),
            )?;
            Ok((g, r.node))
        };
        let (mut g, root) = build_graph(&params).unwrap();
        let ad = ad_material_jacobian(&mut g, root, &params).unwrap();
        let raster = |v: &[f64]| -> Result<Vec<f64>> {
            let p = DesignVector::anonymous(v.to_vec())?;
            let (mut g, root) = build_graph(&p)?;
            Ok(g.forward(root, &p)?.data.clone())
        };
        let fd = fd_material_jacobian(raster, &params, 1e-6).unwrap();
        // h → 0 agreement to O(h): relative error < 1e-4 on matching entries
        for c in 0..2 {
            let a = ad.column_dense(c);
            let f = fd.column_dense(c);
            for j in 0..a.len() {
                if a[j].abs() > 1e-6 || f[j].abs() > 1e-6 {
                    let rel = (a[j] - f[j]).abs() / a[j].abs().max(f[j].abs());
                    assert!(rel < 1e-4, "col {c} row {j}: ad {} fd {}", a[j], f[j]);
                }
            }
        }
    }
}
