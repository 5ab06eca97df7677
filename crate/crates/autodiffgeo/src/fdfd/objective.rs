//! Overlap-integral objectives and their Wirtinger derivative fields.
//!
//! Both monitors use a two-column (or two-row) discrete directional
//! decomposition: with the per-column phase factor z = e^{iβ̃Δ} of the
//! monitor profile, the forward amplitude is recovered exactly from the
//! overlaps on two adjacent lines, and its carried power uses the discrete
//! Poynting flux sin(β̃Δ)/(2ωΔ). Efficiencies are normalized to a caller
//! supplied injected power (measured by flux in a reference solve).

use super::modes::Mode;
use super::FieldSolution;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use num_complex::Complex64;

/// What is overlapped where.
#[derive(Debug, Clone)]
pub enum Monitor {
    /// Fundamental-mode overlap on the vertical line pair `(i0, i0+1)`,
    /// extracting the +x-going amplitude.
    ModeOverlapX { i0: usize, mode: Mode },
    /// Complex beam-profile overlap on the horizontal line pair `(j0, j0+1)`,
    /// extracting the +y-going amplitude. `lambda_y` is the squared
    /// propagation constant used for the discrete phase.
    GaussianOverlapY {
        j0: usize,
        profile: Vec<Complex64>,
        lambda_y: f64,
    },
}

#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    pub monitor: Monitor,
    /// Power the efficiency is normalized to.
    pub injected_power: f64,
}

impl ObjectiveSpec {
    /// Validate monitor placement against the grid and PML margin.
    pub fn validate(&self, grid: &GridSpec, pml_cells: usize) -> Result<()> {
        match &self.monitor {
            Monitor::ModeOverlapX { i0, mode } => {
                if mode.profile.len() != grid.ny {
                    return Err(Error::Contract(format!(
                        "mode profile has {} samples for ny = {}",
                        mode.profile.len(),
                        grid.ny
                    )));
                }
                if *i0 < pml_cells || i0 + 1 >= grid.nx - pml_cells {
                    return Err(Error::Validation(format!(
                        "monitor columns {}..{} lie inside the {}-cell PML",
                        i0,
                        i0 + 1,
                        pml_cells
                    )));
                }
            }
            Monitor::GaussianOverlapY { j0, profile, .. } => {
                if profile.len() != grid.nx {
                    return Err(Error::Contract(format!(
                        "beam profile has {} samples for nx = {}",
                        profile.len(),
                        grid.nx
                    )));
                }
                if *j0 < pml_cells || j0 + 1 >= grid.ny - pml_cells {
                    return Err(Error::Validation(format!(
                        "monitor rows {}..{} lie inside the {}-cell PML",
                        j0,
                        j0 + 1,
                        pml_cells
                    )));
                }
            }
        }
        if !(self.injected_power > 0.0) {
            return Err(Error::Validation(
                "injected power normalization must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Tilted Gaussian beam profile on the grid's x samples, normalized to
/// `Σ|g|²Δx = 1`, with transverse linear phase for tilt angle `tilt_rad`
/// in a medium of index `n_medium`. Returns the profile and the squared
/// longitudinal propagation constant `(ω n cos θ)²`.
pub fn gaussian_beam_profile(
    grid: &GridSpec,
    omega: f64,
    center_x: f64,
    mfd: f64,
    tilt_rad: f64,
    n_medium: f64,
) -> (Vec<Complex64>, f64) {
    let w0 = 0.5 * mfd;
    let kx = omega * n_medium * tilt_rad.sin();
    let cos_t = tilt_rad.cos();
    let mut g: Vec<Complex64> = (0..grid.nx)
        .map(|i| {
            let x = grid.x(i) - center_x;
            let amp = (-(x * cos_t / w0).powi(2)).exp();
            amp * Complex64::new(0.0, kx * x).exp()
        })
        .collect();
    let norm: f64 = g.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.dx;
    let s = 1.0 / norm.sqrt();
    for c in &mut g {
        *c *= s;
    }
    let beta_y = omega * n_medium * cos_t;
    (g, beta_y * beta_y)
}

/// Efficiency plus its Wirtinger derivative field ∂f/∂E (conjugate-field
/// derivative is the conjugate; the adjoint solve consumes this directly).
pub fn evaluate_objective(
    sol: &FieldSolution,
    spec: &ObjectiveSpec,
) -> Result<(f64, Vec<Complex64>)> {
    let grid = &sol.grid;
    let omega = sol.omega;
    let mut dfde = vec![Complex64::new(0.0, 0.0); grid.cells()];
    match &spec.monitor {
        Monitor::ModeOverlapX { i0, mode } => {
            if mode.profile.len() != grid.ny {
                return Err(Error::Contract("mode profile / grid mismatch".into()));
            }
            let phase = mode.discrete_phase(grid.dx)?;
            let z = Complex64::new(0.0, phase).exp();
            // overlaps on the two columns
            let overlap = |i: usize| -> Complex64 {
                let mut a = Complex64::new(0.0, 0.0);
                for j in 0..grid.ny {
                    a += mode.profile[j] * sol.field[grid.index(i, j)];
                }
                a * grid.dy
            };
            let a0 = overlap(*i0);
            let a1 = overlap(*i0 + 1);
            // a+ z^{i0} = (a1·z^{-1} − a0·z^{-2}) / ... solve the 2×2 system:
            // a0 = p + m, a1 = p z + m / z   (p = a+ z^{i0}, m = a− z^{-i0})
            let det = z - z.inv();
            let p = (a1 - a0 * z.inv()) / det;
            let c_pow = phase.sin() / (2.0 * omega * grid.dx);
            let f = c_pow * p.norm_sqr() / spec.injected_power;
            // ∂p/∂E[i0,j]   = (−z^{-1}/det)·φ_j·Δy
            // ∂p/∂E[i0+1,j] = (1/det)·φ_j·Δy
            let w0 = -z.inv() / det;
            let w1 = Complex64::new(1.0, 0.0) / det;
            let scale = c_pow / spec.injected_power;
            let pbar = p.conj();
            for j in 0..grid.ny {
                let base = scale * pbar * mode.profile[j] * grid.dy;
                dfde[grid.index(*i0, j)] += base * w0;
                dfde[grid.index(*i0 + 1, j)] += base * w1;
            }
            Ok((f, dfde))
        }
        Monitor::GaussianOverlapY {
            j0,
            profile,
            lambda_y,
        } => {
            if profile.len() != grid.nx {
                return Err(Error::Contract("beam profile / grid mismatch".into()));
            }
            let c = 1.0 - 0.5 * lambda_y * grid.dy * grid.dy;
            if c.abs() >= 1.0 {
                return Err(Error::Numeric(
                    "beam is not propagating on this grid".into(),
                ));
            }
            let phase = c.acos();
            let z = Complex64::new(0.0, phase).exp();
            let overlap = |j: usize| -> Complex64 {
                let mut a = Complex64::new(0.0, 0.0);
                for i in 0..grid.nx {
                    a += profile[i].conj() * sol.field[grid.index(i, j)];
                }
                a * grid.dx
            };
            let a0 = overlap(*j0);
            let a1 = overlap(*j0 + 1);
            let det = z - z.inv();
            let p = (a1 - a0 * z.inv()) / det;
            let c_pow = phase.sin() / (2.0 * omega * grid.dy);
            let f = c_pow * p.norm_sqr() / spec.injected_power;
            let w0 = -z.inv() / det;
            let w1 = Complex64::new(1.0, 0.0) / det;
            let scale = c_pow / spec.injected_power;
            let pbar = p.conj();
            for i in 0..grid.nx {
                let base = scale * pbar * profile[i].conj() * grid.dx;
                dfde[grid.index(i, *j0)] += base * w0;
                dfde[grid.index(i, *j0 + 1)] += base * w1;
            }
            Ok((f, dfde))
        }
    }
}

/// Discrete Poynting flux through the vertical line at column `i`, positive
/// in +x.
pub fn flux_x(sol: &FieldSolution, i: usize) -> f64 {
    let grid = &sol.grid;
    assert!(i >= 1 && i + 1 < grid.nx, "flux column needs both neighbors");
    let mut acc = 0.0;
    for j in 0..grid.ny {
        let e = sol.field[grid.index(i, j)];
        let dedx =
            (sol.field[grid.index(i + 1, j)] - sol.field[grid.index(i - 1, j)]) / (2.0 * grid.dx);
        acc += (e.conj() * dedx).im;
    }
    acc * grid.dy / (2.0 * sol.omega)
}

/// Discrete Poynting flux through the horizontal line at row `j`, positive
/// in +y.
pub fn flux_y(sol: &FieldSolution, j: usize) -> f64 {
    let grid = &sol.grid;
    assert!(j >= 1 && j + 1 < grid.ny, "flux row needs both neighbors");
    let mut acc = 0.0;
    for i in 0..grid.nx {
        let e = sol.field[grid.index(i, j)];
        let dedy =
            (sol.field[grid.index(i, j + 1)] - sol.field[grid.index(i, j - 1)]) / (2.0 * grid.dy);
        acc += (e.conj() * dedy).im;
    }
    acc * grid.dx / (2.0 * sol.omega)
}
