//! Uniform rectilinear grid geometry and discretized material values.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Geometry of a uniform rectilinear sampling grid.
///
/// `origin` is the lower-left corner of the domain. Sample point `(i, j)`
/// sits at the center of cell `(i, j)`, shifted by the fractional staggering
/// `offset` (in cell units), so Yee-style half-cell sample sets are expressed
/// as `offset = (0.5, 0.0)` etc. Fields are stored row-major with `x` fastest:
/// `index = j * nx + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub offset: (f64, f64),
}

impl GridSpec {
    pub fn new(x0: f64, y0: f64, dx: f64, dy: f64, nx: usize, ny: usize) -> Result<Self> {
        let g = GridSpec {
            x0,
            y0,
            dx,
            dy,
            nx,
            ny,
            offset: (0.0, 0.0),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dy > 0.0) {
            return Err(Error::Validation("grid spacing must be positive".into()));
        }
        if self.nx < 1 || self.ny < 1 {
            return Err(Error::Validation("grid counts must be >= 1".into()));
        }
        if !(self.x0.is_finite() && self.y0.is_finite()) {
            return Err(Error::Validation("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn with_offset(mut self, ox: f64, oy: f64) -> Self {
        self.offset = (ox, oy);
        self
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// x coordinate of sample column `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + (i as f64 + 0.5 + self.offset.0) * self.dx
    }

    /// y coordinate of sample row `j`.
    pub fn y(&self, j: usize) -> f64 {
        self.y0 + (j as f64 + 0.5 + self.offset.1) * self.dy
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn y_coords(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y(j)).collect()
    }

    /// Cell box `[x_lo, x_hi] × [y_lo, y_hi]` centered on sample `(i, j)`.
    pub fn cell_box(&self, i: usize, j: usize) -> [f64; 4] {
        let cx = self.x(i);
        let cy = self.y(j);
        [
            cx - 0.5 * self.dx,
            cx + 0.5 * self.dx,
            cy - 0.5 * self.dy,
            cy + 0.5 * self.dy,
        ]
    }
}

/// Discretized permittivity (or permeability) samples on a grid, together
/// with the material pair the values interpolate between.
#[derive(Debug, Clone)]
pub struct MaterialGrid {
    pub values: Vec<f64>,
    pub grid: GridSpec,
    /// `(background, shape)` material values; `values` lie inside the span.
    pub materials: (f64, f64),
}

impl MaterialGrid {
    pub fn new(values: Vec<f64>, grid: GridSpec, materials: (f64, f64)) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::Contract(format!(
                "material grid has {} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(MaterialGrid {
            values,
            grid,
            materials,
        })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        MaterialGrid {
            values: vec![value; grid.cells()],
            grid,
            materials: (value, value),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// One vertical slice of values at column `i` (varying y).
    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.grid.ny).map(|j| self.at(i, j)).collect()
    }

    pub fn same_grid(&self, other: &MaterialGrid) -> bool {
        self.grid == other.grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_points_and_offsets() {
        let g = GridSpec::new(-1.0, -1.0, 0.5, 0.5, 4, 4).unwrap();
        assert_eq!(g.x(0), -0.75);
        assert_eq!(g.y(3), 0.75);
        let s = g.clone().with_offset(0.5, 0.0);
        assert_eq!(s.x(0), -0.5);
        assert_eq!(s.y(0), -0.75);
    }

    #[test]
    fn rejects_degenerate_grid() {
        assert!(GridSpec::new(0.0, 0.0, 0.0, 1.0, 4, 4).is_err());
        assert!(GridSpec::new(0.0, 0.0, 1.0, 1.0, 0, 4).is_err());
    }
}
