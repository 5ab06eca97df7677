//! 1D transverse waveguide-mode eigenproblem.
//!
//! `(d²/dy² + ω²ε(y)) φ = β² φ` discretized on the same second-difference
//! stencil as the 2D operator, so a launched mode propagates cleanly on the
//! 2D grid. The fundamental mode is the largest-β² eigenpair, found by
//! shifted inverse iteration on the symmetric tridiagonal matrix.

use crate::error::{Error, Result};

/// Fundamental guided mode of a 1D permittivity slice.
#[derive(Debug, Clone)]
pub struct Mode {
    /// Real profile, normalized to `Σ φ² Δy = 1`, peak positive.
    pub profile: Vec<f64>,
    /// β² eigenvalue.
    pub lambda: f64,
    /// Continuum propagation constant β = √λ.
    pub beta: f64,
    pub n_eff: f64,
    pub dy: f64,
}

impl Mode {
    /// Discrete per-column phase advance β̃·Δx on a grid with spacing `dx`:
    /// `cos(β̃ Δx) = 1 − λ Δx²/2` (the mode ansatz plugged into the 5-point
    /// stencil).
    pub fn discrete_phase(&self, dx: f64) -> Result<f64> {
        let c = 1.0 - 0.5 * self.lambda * dx * dx;
        if c.abs() >= 1.0 {
            return Err(Error::Numeric(format!(
                "mode is not propagating on this grid (cos β̃Δx = {c})"
            )));
        }
        Ok(c.acos())
    }
}

/// Solve for the fundamental mode. `eps_slice` is ε(y) at the transverse
/// samples with spacing `dy`. Errors when no guided mode exists (the largest
/// eigenvalue does not exceed the edge-cladding light line).
pub fn waveguide_mode(eps_slice: &[f64], omega: f64, dy: f64) -> Result<Mode> {
    let ny = eps_slice.len();
    if ny < 3 {
        return Err(Error::Contract("mode solve needs at least 3 samples".into()));
    }
    if !(omega > 0.0 && dy > 0.0) {
        return Err(Error::Contract("omega and dy must be positive".into()));
    }
    let idy2 = 1.0 / (dy * dy);
    let diag: Vec<f64> = eps_slice
        .iter()
        .map(|&e| -2.0 * idy2 + omega * omega * e)
        .collect();
    let off = idy2;
    let eps_max = eps_slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // Shift strictly above the spectrum: λ_max ≤ ω²ε_max (D² ⪯ 0).
    let shift = omega * omega * eps_max + 1.0;
    let mut phi: Vec<f64> = (0..ny)
        .map(|j| {
            let t = (j as f64 + 0.5) / ny as f64 - 0.5;
            (-8.0 * t * t).exp()
        })
        .collect();
    normalize(&mut phi, dy);
    let mut lambda = 0.0;
    let mut converged = false;
    for _ in 0..500 {
        let next = thomas_solve_shifted(&diag, off, shift, &phi)?;
        let mut next = next;
        normalize(&mut next, dy);
        // Rayleigh quotient with the tridiagonal operator.
        let l = rayleigh(&diag, off, &next, dy);
        let resid = residual_norm(&diag, off, l, &next, dy);
        phi = next;
        lambda = l;
        if resid < 1e-11 * l.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(
            "mode inverse iteration did not converge".into(),
        ));
    }
    // Guided-mode criterion: above the light line of the slice edges.
    let eps_edge = eps_slice[0].max(eps_slice[ny - 1]);
    if lambda <= omega * omega * eps_edge {
        return Err(Error::Numeric(format!(
            "no guided mode: β² = {lambda} does not clear the cladding line {}",
            omega * omega * eps_edge
        )));
    }
    // Fix sign: peak positive.
    let peak = phi
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .unwrap();
    if peak < 0.0 {
        for p in &mut phi {
            *p = -*p;
        }
    }
    let beta = lambda.sqrt();
    Ok(Mode {
        profile: phi,
        lambda,
        beta,
        n_eff: beta / omega,
        dy,
    })
}

fn normalize(phi: &mut [f64], dy: f64) {
    let n2: f64 = phi.iter().map(|p| p * p).sum::<f64>() * dy;
    let s = 1.0 / n2.sqrt();
    for p in phi {
        *p *= s;
    }
}

fn rayleigh(diag: &[f64], off: f64, phi: &[f64], dy: f64) -> f64 {
    let ny = phi.len();
    let mut num = 0.0;
    for j in 0..ny {
        let mut tp = diag[j] * phi[j];
        if j > 0 {
            tp += off * phi[j - 1];
        }
        if j + 1 < ny {
            tp += off * phi[j + 1];
        }
        num += phi[j] * tp;
    }
    num * dy // ‖φ‖² dy = 1
}

fn residual_norm(diag: &[f64], off: f64, lambda: f64, phi: &[f64], dy: f64) -> f64 {
    let ny = phi.len();
    let mut acc = 0.0;
    for j in 0..ny {
        let mut tp = (diag[j] - lambda) * phi[j];
        if j > 0 {
            tp += off * phi[j - 1];
        }
        if j + 1 < ny {
            tp += off * phi[j + 1];
        }
        acc += tp * tp;
    }
    (acc * dy).sqrt()
}

/// Solve `(T − shift·I) x = b` for symmetric tridiagonal `T` (Thomas
/// algorithm; the shifted matrix is negative definite by construction).
fn thomas_solve_shifted(diag: &[f64], off: f64, shift: f64, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0] - shift;
    if denom == 0.0 {
        return Err(Error::Numeric("singular tridiagonal solve".into()));
    }
    c[0] = off / denom;
    d[0] = b[0] / denom;
    for k in 1..n {
        denom = diag[k] - shift - off * c[k - 1];
        if denom == 0.0 {
            return Err(Error::Numeric("singular tridiagonal solve".into()));
        }
        c[k] = off / denom;
        d[k] = (b[k] - off * d[k - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = d[k] - c[k] * x[k + 1];
    }
    Ok(x)
}

/// Root of the symmetric-slab TE dispersion relation
/// `tan(κ w / 2) = γ / κ` for the fundamental mode, by bisection — an
/// independent oracle for [`waveguide_mode`].
pub fn slab_fundamental_neff(n_core: f64, n_clad: f64, width: f64, lambda0: f64) -> f64 {
    let k0 = std::f64::consts::TAU / lambda0;
    let f = |n_eff: f64| {
        let kappa = k0 * (n_core * n_core - n_eff * n_eff).sqrt();
        let gamma = k0 * (n_eff * n_eff - n_clad * n_clad).sqrt();
        (kappa * width / 2.0).tan() - gamma / kappa
    };
    // Fundamental branch: κw/2 ∈ (0, π/2), i.e. n_eff from just above clad
    // down from core.
    let eps = 1e-12;
    let mut lo = n_clad + eps;
    let mut hi = n_core - eps;
    // ensure bracketing within the first branch by shrinking hi until tan is
    // on the principal branch
    let kw = |n_eff: f64| k0 * (n_core * n_core - n_eff * n_eff).sqrt() * width / 2.0;
    while kw(lo) >= std::f64::consts::FRAC_PI_2 {
        lo += (hi - lo) * 0.1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
