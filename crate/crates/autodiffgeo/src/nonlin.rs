//! The five `[0,1]`-bounded boundary nonlinearities σ_k shared by every shape
//! primitive, with analytic derivatives.
//!
//! All five are monotone, map ℝ → [0,1], satisfy σ_k(0) = 1/2 and the odd
//! symmetry σ_k(x) + σ_k(−x) = 1. `k > 0` is the characteristic
//! inverse-length-scale: steeper transition for larger `k`. The `linear` and
//! `quadratic` kinds saturate exactly at `k|x| = 1/2` and `1/√2`; at those
//! breakpoints `deriv` returns the interior-branch one-sided value.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// 1/√π.
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinKind {
    Sigmoid,
    Erf,
    Sin,
    Linear,
    Quadratic,
}

impl NonlinKind {
    pub const ALL: [NonlinKind; 5] = [
        NonlinKind::Sigmoid,
        NonlinKind::Erf,
        NonlinKind::Sin,
        NonlinKind::Linear,
        NonlinKind::Quadratic,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sigmoid" => Ok(NonlinKind::Sigmoid),
            "erf" => Ok(NonlinKind::Erf),
            "sin" => Ok(NonlinKind::Sin),
            "linear" => Ok(NonlinKind::Linear),
            "quadratic" => Ok(NonlinKind::Quadratic),
            other => Err(Error::Config(format!(
                "unknown nonlinearity `{other}` (expected sigmoid|erf|sin|linear|quadratic)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NonlinKind::Sigmoid => "sigmoid",
            NonlinKind::Erf => "erf",
            NonlinKind::Sin => "sin",
            NonlinKind::Linear => "linear",
            NonlinKind::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for NonlinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete σ_k: kind plus inverse length scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub kind: NonlinKind,
    pub k: f64,
}

impl Nonlinearity {
    pub fn new(kind: NonlinKind, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Validation(format!(
                "nonlinearity inverse length scale must be positive and finite, got {k}"
            )));
        }
        Ok(Nonlinearity { kind, k })
    }

    /// Convenience for the `k = k_r / Δx` convention.
    pub fn with_kr(kind: NonlinKind, kr: f64, dx: f64) -> Result<Self> {
        Self::new(kind, kr / dx)
    }

    /// σ_k(x) ∈ [0,1].
    pub fn eval(&self, x: f64) -> f64 {
        let t = self.k * x;
        match self.kind {
            NonlinKind::Sigmoid => 1.0 / (1.0 + (-t).exp()),
            NonlinKind::Erf => 0.5 * (1.0 + erf(t)),
            NonlinKind::Sin => {
                if t < -std::f64::consts::FRAC_PI_2 {
                    0.0
                } else if t > std::f64::consts::FRAC_PI_2 {
                    1.0
                } else {
                    0.5 * (1.0 + t.sin())
                }
            }
            NonlinKind::Linear => (t + 0.5).clamp(0.0, 1.0),
            NonlinKind::Quadratic => {
                // Expanded forms keep σ(0) = 1/2 exact in floating point:
                // (1/√2 ± t)² = 1/2 ± t(√2 ± t).
                if t < -FRAC_1_SQRT_2 {
                    0.0
                } else if t < 0.0 {
                    (0.5 + t * (std::f64::consts::SQRT_2 + t)).clamp(0.0, 1.0)
                } else if t <= FRAC_1_SQRT_2 {
                    (0.5 + t * (std::f64::consts::SQRT_2 - t)).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            }
        }
    }

    /// Analytic dσ_k/dx ≥ 0. At piecewise breakpoints this is the
    /// interior-branch one-sided value.
    pub fn deriv(&self, x: f64) -> f64 {
        let t = self.k * x;
        match self.kind {
            NonlinKind::Sigmoid => {
                let s = 1.0 / (1.0 + (-t).exp());
                self.k * s * (1.0 - s)
            }
            NonlinKind::Erf => self.k * FRAC_1_SQRT_PI * (-t * t).exp(),
            NonlinKind::Sin => {
                if t.abs() <= std::f64::consts::FRAC_PI_2 {
                    0.5 * self.k * t.cos()
                } else {
                    0.0
                }
            }
            NonlinKind::Linear => {
                if t.abs() <= 0.5 {
                    self.k
                } else {
                    0.0
                }
            }
            NonlinKind::Quadratic => {
                if t >= -FRAC_1_SQRT_2 && t < 0.0 {
                    2.0 * self.k * (FRAC_1_SQRT_2 + t)
                } else if t >= 0.0 && t <= FRAC_1_SQRT_2 {
                    2.0 * self.k * (FRAC_1_SQRT_2 - t)
                } else {
                    0.0
                }
            }
        }
    }

    /// Peak of the derivative, attained at x = 0.
    pub fn peak_deriv(&self) -> f64 {
        self.deriv(0.0)
    }
}

/// Double-precision error function (Cody-style rational approximations,
/// relative error ≲ 1e-16 on each branch).
pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        const A: [f64; 5] = [
            3.16112374387056560e0,
            1.13864154151050156e2,
            3.77485237685302021e2,
            3.20937758913846947e3,
            1.85777706184603153e-1,
        ];
        const B: [f64; 4] = [
            2.36012909523441209e1,
            2.44024637934444173e2,
            1.28261652607737228e3,
            2.84423683343917062e3,
        ];
        let z = if y > 1.11e-16 { y * y } else { 0.0 };
        let mut num = A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + A[i]) * z;
            den = (den + B[i]) * z;
        }
        x * (num + A[3]) / (den + B[3])
    } else {
        let erfc = if y <= 4.0 {
            const C: [f64; 9] = [
                5.64188496988670089e-1,
                8.88314979438837594e0,
                6.61191906371416295e1,
                2.98635138197400131e2,
                8.81952221241769090e2,
                1.71204761263407058e3,
                2.05107837782607147e3,
                1.23033935479799725e3,
                2.15311535474403846e-8,
            ];
            const D: [f64; 8] = [
                1.57449261107098347e1,
                1.17693950891312499e2,
                5.37181101862009858e2,
                1.62138957456669019e3,
                3.29079923573345963e3,
                4.36261909014324716e3,
                3.43936767414372164e3,
                1.23033935480374942e3,
            ];
            let mut num = C[8] * y;
            let mut den = y;
            for i in 0..7 {
                num = (num + C[i]) * y;
                den = (den + D[i]) * y;
            }
            let r = (num + C[7]) / (den + D[7]);
            r * exp_split(y)
        } else if y < 26.5 {
            const P: [f64; 6] = [
                3.05326634961232344e-1,
                3.60344899949804439e-1,
                1.25781726111229246e-1,
                1.60837851487422766e-2,
                6.58749161529837803e-4,
                1.63153871373020978e-2,
            ];
            const Q: [f64; 5] = [
                2.56852019228982242e0,
                1.87295284992346047e0,
                5.27905102951428412e-1,
                6.05183413124413191e-2,
                2.33520497626869185e-3,
            ];
            let z = 1.0 / (y * y);
            let mut num = P[5] * z;
            let mut den = z;
            for i in 0..4 {
                num = (num + P[i]) * z;
                den = (den + Q[i]) * z;
            }
            let r = z * (num + P[4]) / (den + Q[4]);
            (FRAC_1_SQRT_PI - r) / y * exp_split(y)
        } else {
            0.0
        };
        if x < 0.0 {
            erfc - 1.0
        } else {
            1.0 - erfc
        }
    }
}

/// exp(−y²) evaluated with the argument split to limit cancellation.
fn exp_split(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}
