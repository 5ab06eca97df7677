//! Limited-memory quasi-Newton direction with box bounds via gradient
//! projection, and a backtracking sufficient-decrease line search.

use std::collections::VecDeque;

/// Curvature-pair memory and line-search parameters.
#[derive(Debug, Clone)]
pub struct QuasiNewtonState {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>, // (s, y, 1/sᵀy)
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant used when deciding to keep a pair.
    pub c2: f64,
}

impl Default for QuasiNewtonState {
    fn default() -> Self {
        QuasiNewtonState {
            pairs: VecDeque::new(),
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

impl QuasiNewtonState {
    /// Two-loop recursion: approximate `H·g` (direction is the negative).
    pub fn apply_inverse_hessian(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let alpha = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= alpha * yi;
            }
            alphas.push(alpha);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y).max(1e-300);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for ((s, y, rho), alpha) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (alpha - beta) * si;
            }
        }
        q
    }

    /// Record a step; pairs with non-positive curvature are skipped.
    pub fn push_pair(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let ss = dot(&s, &s).sqrt();
        let yy = dot(&y, &y).sqrt();
        if sy > 1e-10 * ss * yy && sy.is_finite() {
            if self.pairs.len() == self.memory {
                self.pairs.pop_front();
            }
            let rho = 1.0 / sy;
            self.pairs.push_back((s, y, rho));
        }
    }

    pub fn reset(&mut self) {
        self.pairs.clear();
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// ∞-norm of the projected gradient: the first-order stationarity measure on
/// a box.
pub fn projected_gradient_inf(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..x.len() {
        let step = (x[i] - g[i]).clamp(lower[i], upper[i]) - x[i];
        m = m.max(step.abs());
    }
    m
}
