//! Artifact emission: material grids as CSV and 16-bit graymaps, complex
//! field dumps, optimization histories.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, MaterialGrid};
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;

/// Write a material grid as CSV: a `# grid ...` header carrying the full
/// GridSpec, then one row of values per y line (row-major, x fastest).
pub fn write_material_csv(path: &Path, m: &MaterialGrid) -> Result<()> {
    let g = &m.grid;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# grid x0={} y0={} dx={} dy={} nx={} ny={} ox={} oy={} eps_b={} eps_s={}",
        g.x0, g.y0, g.dx, g.dy, g.nx, g.ny, g.offset.0, g.offset.1, m.materials.0, m.materials.1
    );
    for j in 0..g.ny {
        let row: Vec<String> = (0..g.nx).map(|i| format!("{:.17e}", m.at(i, j))).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Read a material grid written by [`write_material_csv`].
pub fn read_material_csv(path: &Path) -> Result<MaterialGrid> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty file", path.display())))?;
    let mut fields = std::collections::HashMap::new();
    for tok in header.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = tok.split_once('=') {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<f64> {
        fields
            .get(k)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Config(format!("{}: bad header field {k}", path.display())))
    };
    let grid = GridSpec {
        x0: get("x0")?,
        y0: get("y0")?,
        dx: get("dx")?,
        dy: get("dy")?,
        nx: get("nx")? as usize,
        ny: get("ny")? as usize,
        offset: (get("ox")?, get("oy")?),
    };
    grid.validate()?;
    let materials = (get("eps_b")?, get("eps_s")?);
    let mut values = Vec::with_capacity(grid.cells());
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split(',') {
            values.push(tok.trim().parse::<f64>().map_err(|_| {
                Error::Config(format!("{}: bad value `{tok}`", path.display()))
            })?);
        }
    }
    MaterialGrid::new(values, grid, materials)
}

/// Write a 16-bit ASCII portable graymap (PGM, `P2`) of the grid values,
/// linearly mapped from `[lo, hi]` to `[0, 65535]`. Row 0 of the image is
/// the top of the domain.
pub fn write_pgm(path: &Path, m: &MaterialGrid, range: Option<(f64, f64)>) -> Result<()> {
    let (lo, hi) = range.unwrap_or_else(|| {
        let lo = m.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = format!("P2\n{} {}\n65535\n", m.grid.nx, m.grid.ny);
    for j in (0..m.grid.ny).rev() {
        let row: Vec<String> = (0..m.grid.nx)
            .map(|i| {
                let t = ((m.at(i, j) - lo) / span).clamp(0.0, 1.0);
                format!("{}", (t * 65535.0).round() as u32)
            })
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Complex field dump: CSV with `re,im` pairs per cell, row per y line.
pub fn write_field_csv(path: &Path, field: &[Complex64], grid: &GridSpec) -> Result<()> {
    if field.len() != grid.cells() {
        return Err(Error::Contract(format!(
            "field has {} entries for {}x{} grid",
            field.len(),
            grid.nx,
            grid.ny
        )));
    }
    let mut s = format!(
        "# grid x0={} y0={} dx={} dy={} nx={} ny={}\n",
        grid.x0, grid.y0, grid.dx, grid.dy, grid.nx, grid.ny
    );
    for j in 0..grid.ny {
        let row: Vec<String> = (0..grid.nx)
            .map(|i| {
                let c = field[grid.index(i, j)];
                format!("{:.17e} {:.17e}", c.re, c.im)
            })
            .collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Field magnitude as a graymap for quick visual inspection.
pub fn write_field_pgm(path: &Path, field: &[Complex64], grid: &GridSpec) -> Result<()> {
    let mags: Vec<f64> = field.iter().map(|c| c.norm()).collect();
    let m = MaterialGrid::new(mags, grid.clone(), (0.0, 1.0))?;
    write_pgm(path, &m, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn material_csv_round_trip() {
        let grid = GridSpec::new(-1.0, 2.0, 0.25, 0.5, 4, 3)
            .unwrap()
            .with_offset(0.5, 0.0);
        let values: Vec<f64> = (0..12).map(|i| 1.0 + i as f64 * 0.37).collect();
        let m = MaterialGrid::new(values.clone(), grid, (1.0, 12.0)).unwrap();
        let dir = std::env::temp_dir().join("adg_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("grid.csv");
        write_material_csv(&path, &m).unwrap();
        let back = read_material_csv(&path).unwrap();
        assert_eq!(back.values, values);
        assert_eq!(back.grid, m.grid);
        assert_eq!(back.materials, m.materials);
    }

    #[test]
    fn pgm_has_header_and_extent() {
        let grid = GridSpec::new(0.0, 0.0, 1.0, 1.0, 3, 2).unwrap();
        let m = MaterialGrid::new(vec![0.0, 0.5, 1.0, 1.0, 0.5, 0.0], grid, (0.0, 1.0)).unwrap();
        let dir = std::env::temp_dir().join("adg_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("grid.pgm");
        write_pgm(&path, &m, Some((0.0, 1.0))).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("3 2"));
        assert_eq!(lines.next(), Some("65535"));
        assert_eq!(lines.next(), Some("65535 32768 0")); // top row = j=1 reversed
    }
}
