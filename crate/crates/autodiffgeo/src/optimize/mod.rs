//! Optimization loop over the forward/adjoint pipeline, the AutoDiffGeo ↔
//! exact-representation conversion step, and the gradient-time scaling
//! benchmark.

pub mod lbfgs;

use crate::design::DesignVector;
use crate::error::{Error, Result};
use crate::threads;
use lbfgs::{dot, inf_norm, projected_gradient_inf, QuasiNewtonState};
use std::time::Instant;

/// Which representation drives the simulation and the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Simulate and differentiate on the one-shot AutoDiffGeo grid: exact
    /// gradients of the approximate-geometry objective.
    Prop1Ad,
    /// Simulate on the exact grid, differentiate through the AutoDiffGeo
    /// graph: exact fields, approximate gradients.
    Prop2Ad,
    /// Simulate on the exact grid, gradient via the finite-difference
    /// material Jacobian.
    FdBaseline,
}

impl RunMode {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "prop1-ad" => Ok(RunMode::Prop1Ad),
            "prop2-ad" => Ok(RunMode::Prop2Ad),
            "fd-baseline" => Ok(RunMode::FdBaseline),
            other => Err(Error::Config(format!(
                "unknown run mode `{other}` (expected prop1-ad|prop2-ad|fd-baseline)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunMode::Prop1Ad => "prop1-ad",
            RunMode::Prop2Ad => "prop2-ad",
            RunMode::FdBaseline => "fd-baseline",
        }
    }
}

/// One objective/gradient evaluation with phase timings and representation
/// flags (the flags let tests assert mode isolation).
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f: f64,
    pub grad: Option<Vec<f64>>,
    pub t_raster: f64,
    pub t_solve: f64,
    pub t_grad: f64,
    pub exact_grid_for_solve: bool,
    pub ad_graph_for_grad: bool,
}

/// A minimizable design problem. `f` is the value being minimized (testbeds
/// report the negative coupling efficiency).
pub trait Problem {
    fn initial(&self) -> DesignVector;
    fn eval(&mut self, v: &[f64], mode: RunMode, need_grad: bool) -> Result<Evaluation>;
}

#[derive(Debug, Clone)]
pub struct StopRules {
    pub max_iters: usize,
    /// Projected-gradient ∞-norm tolerance (0 disables).
    pub grad_tol: f64,
    /// ∞-norm step tolerance.
    pub step_tol: f64,
    /// Relative objective-change tolerance (0 disables).
    pub f_tol: f64,
}

impl Default for StopRules {
    fn default() -> Self {
        StopRules {
            max_iters: 100,
            grad_tol: 0.0,
            step_tol: 1e-12,
            f_tol: 0.0,
        }
    }
}

/// Per-iteration record (accepted points only).
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    pub f: f64,
    pub grad_inf: f64,
    pub t_raster: f64,
    pub t_solve: f64,
    pub t_grad: f64,
    /// Seconds since run start at the time the record was written.
    pub wall: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationRun {
    pub mode: RunMode,
    pub history: Vec<IterRecord>,
    pub params: DesignVector,
    pub final_f: f64,
    pub stop_reason: String,
    /// Objective change introduced by re-rasterizing with the exact
    /// representation (set by [`convert_and_refine`]).
    pub conversion_penalty: Option<f64>,
}

impl OptimizationRun {
    pub fn write_history_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut s = String::from("iteration,f,grad_inf,t_raster,t_solve,t_grad,wall\n");
        for r in &self.history {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{:.6},{:.6},{:.6},{:.3}\n",
                r.iter, r.f, r.grad_inf, r.t_raster, r.t_solve, r.t_grad, r.wall
            ));
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Projected L-BFGS descent with a backtracking sufficient-decrease line
/// search. Monotone by construction: a step is only accepted when it
/// strictly improves the Armijo model.
pub fn run(problem: &mut dyn Problem, mode: RunMode, stop: &StopRules) -> Result<OptimizationRun> {
    let started = Instant::now();
    let init = problem.initial();
    let (lower, upper) = (init.lower.clone(), init.upper.clone());
    let mut x = init.values.clone();
    let mut state = QuasiNewtonState::default();
    let mut history: Vec<IterRecord> = Vec::new();

    let mut ev = problem.eval(&x, mode, true)?;
    let mut grad = ev.grad.clone().ok_or_else(|| {
        Error::Contract("problem returned no gradient for a gradient run".into())
    })?;
    let mut stop_reason = format!("max iterations ({}) reached", stop.max_iters);

    let record = |history: &mut Vec<IterRecord>,
                  iter: usize,
                  ev: &Evaluation,
                  pg: f64,
                  started: &Instant| {
        history.push(IterRecord {
            iter,
            f: ev.f,
            grad_inf: pg,
            t_raster: ev.t_raster,
            t_solve: ev.t_solve,
            t_grad: ev.t_grad,
            wall: started.elapsed().as_secs_f64(),
        });
    };

    let pg0 = projected_gradient_inf(&x, &grad, &lower, &upper);
    record(&mut history, 0, &ev, pg0, &started);

    for iter in 1..=stop.max_iters {
        let pg = projected_gradient_inf(&x, &grad, &lower, &upper);
        if stop.grad_tol > 0.0 && pg <= stop.grad_tol {
            stop_reason = format!("projected gradient {pg:.3e} below tolerance");
            break;
        }
        let mut dir = state.apply_inverse_hessian(&grad);
        for d in dir.iter_mut() {
            *d = -*d;
        }
        if dot(&dir, &grad) >= 0.0 {
            state.reset();
            dir = grad.iter().map(|g| -g).collect();
        }

        // Backtracking projected-Armijo search.
        let mut alpha = 1.0f64;
        let mut accepted: Option<(Vec<f64>, Evaluation)> = None;
        for _ in 0..40 {
            let mut xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            for i in 0..xt.len() {
                xt[i] = xt[i].clamp(lower[i], upper[i]);
            }
            let actual_step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            if inf_norm(&actual_step) == 0.0 {
                break;
            }
            let et = problem.eval(&xt, mode, true)?;
            let decrease = state_c1() * dot(&grad, &actual_step);
            if et.f <= ev.f + decrease.min(0.0) {
                accepted = Some((xt, et));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, en)) = accepted else {
            stop_reason = "line search found no improving step".into();
            break;
        };
        let gn = en.grad.clone().unwrap();
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let step_inf = inf_norm(&s);
        state.push_pair(s, y);
        let f_prev = ev.f;
        x = xn;
        ev = en;
        grad = gn;
        let pgn = projected_gradient_inf(&x, &grad, &lower, &upper);
        record(&mut history, iter, &ev, pgn, &started);

        if step_inf < stop.step_tol {
            stop_reason = format!("step {step_inf:.3e} below tolerance");
            break;
        }
        if stop.f_tol > 0.0 && (f_prev - ev.f).abs() <= stop.f_tol * f_prev.abs().max(1.0) {
            stop_reason = "objective change below tolerance".into();
            break;
        }
    }

    let mut params = init;
    params.values = x;
    Ok(OptimizationRun {
        mode,
        history,
        params,
        final_f: ev.f,
        stop_reason,
        conversion_penalty: None,
    })
}

fn state_c1() -> f64 {
    QuasiNewtonState::default().c1
}

/// Prop. 1 epilogue: re-evaluate the optimized parameters on the exact
/// representation, log the conversion penalty, and continue descending in
/// fd-baseline mode.
pub fn convert_and_refine(
    problem: &mut dyn Problem,
    run_result: &OptimizationRun,
    refine: &StopRules,
) -> Result<OptimizationRun> {
    if run_result.mode != RunMode::Prop1Ad {
        return Err(Error::Contract(
            "convert_and_refine expects a finished prop1-ad run".into(),
        ));
    }
    let v = run_result.params.values.clone();
    let before = run_result.final_f;
    let after = problem.eval(&v, RunMode::FdBaseline, false)?.f;
    let penalty = after - before;

    // Continue in fd-baseline mode starting from the converted point.
    let mut seeded = SeededProblem {
        inner: problem,
        start: run_result.params.clone(),
    };
    let mut refined = run(&mut seeded, RunMode::FdBaseline, refine)?;
    refined.conversion_penalty = Some(penalty);
    Ok(refined)
}

struct SeededProblem<'a> {
    inner: &'a mut dyn Problem,
    start: DesignVector,
}

impl Problem for SeededProblem<'_> {
    fn initial(&self) -> DesignVector {
        self.start.clone()
    }

    fn eval(&mut self, v: &[f64], mode: RunMode, need_grad: bool) -> Result<Evaluation> {
        self.inner.eval(v, mode, need_grad)
    }
}

/// One row of the gradient-time scaling table.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub n: usize,
    pub t_fd_median: f64,
    pub t_fd_iqr: (f64, f64),
    pub t_ad_median: f64,
    pub t_ad_iqr: (f64, f64),
}

/// Timing closure pair: `fd()` must compute the finite-difference material
/// Jacobian and reduce it; `ad()` must run the backward pass and scale.
pub struct GradientTimer<'a> {
    pub n: usize,
    pub fd: Box<dyn FnMut() -> Result<()> + 'a>,
    pub ad: Box<dyn FnMut() -> Result<()> + 'a>,
}

/// Median-of-`reps` single-lane timings of both gradient paths.
pub fn bench_gradient_paths(mut timer: GradientTimer<'_>, reps: usize) -> Result<BenchRow> {
    threads::force_lanes(1);
    let result = (|| {
        let time_reps = |f: &mut dyn FnMut() -> Result<()>| -> Result<Vec<f64>> {
            // one warmup
            f()?;
            let mut ts = Vec::with_capacity(reps);
            for _ in 0..reps {
                let t0 = Instant::now();
                f()?;
                ts.push(t0.elapsed().as_secs_f64());
            }
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(ts)
        };
        let fd_ts = time_reps(&mut *timer.fd)?;
        let ad_ts = time_reps(&mut *timer.ad)?;
        let stats = |ts: &[f64]| {
            let q = |p: f64| ts[((ts.len() - 1) as f64 * p).round() as usize];
            (q(0.5), (q(0.25), q(0.75)))
        };
        let (fdm, fdq) = stats(&fd_ts);
        let (adm, adq) = stats(&ad_ts);
        Ok(BenchRow {
            n: timer.n,
            t_fd_median: fdm,
            t_fd_iqr: fdq,
            t_ad_median: adm,
            t_ad_iqr: adq,
        })
    })();
    threads::force_lanes(0);
    result
}

/// Least-squares slope of log(t) against log(n).
pub fn loglog_slope(rows: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|&(n, t)| ((n as f64).ln(), t.ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quadratic toy with a synthetic linear field-product path: closed-form
    /// optimum at x*.
    struct QuadraticToy {
        target: Vec<f64>,
        weights: Vec<f64>,
    }

    impl Problem for QuadraticToy {
        fn initial(&self) -> DesignVector {
            DesignVector::anonymous(vec![0.0; self.target.len()]).unwrap()
        }

        fn eval(&mut self, v: &[f64], _mode: RunMode, need_grad: bool) -> Result<Evaluation> {
            let f: f64 = v
                .iter()
                .zip(&self.target)
                .zip(&self.weights)
                .map(|((x, t), w)| 0.5 * w * (x - t) * (x - t))
                .sum();
            let grad = need_grad.then(|| {
                v.iter()
                    .zip(&self.target)
                    .zip(&self.weights)
                    .map(|((x, t), w)| w * (x - t))
                    .collect()
            });
            Ok(Evaluation {
                f,
                grad,
                t_raster: 0.0,
                t_solve: 0.0,
                t_grad: 0.0,
                exact_grid_for_solve: false,
                ad_graph_for_grad: true,
            })
        }
    }

    #[test]
    fn quadratic_toy_converges_to_analytic_optimum() {
        let mut p = QuadraticToy {
            target: vec![1.0, -2.0, 0.3, 7.0, -0.01],
            weights: vec![2.0, 0.5, 9.0, 1.0, 30.0],
        };
        let stop = StopRules {
            max_iters: 200,
            grad_tol: 1e-9,
            ..Default::default()
        };
        let run_result = run(&mut p, RunMode::Prop1Ad, &stop).unwrap();
        let last = run_result.history.last().unwrap();
        assert!(last.grad_inf < 1e-8, "final grad {}", last.grad_inf);
        for (x, t) in run_result.params.values.iter().zip(&p.target) {
            assert!((x - t).abs() < 1e-8);
        }
        // descent property
        for w in run_result.history.windows(2) {
            assert!(w[1].f <= w[0].f + 1e-12);
        }
        // timestamps monotone
        for w in run_result.history.windows(2) {
            assert!(w[1].wall >= w[0].wall);
        }
    }

    #[test]
    fn bounds_are_respected() {
        struct Bounded;
        impl Problem for Bounded {
            fn initial(&self) -> DesignVector {
                DesignVector::anonymous(vec![0.0])
                    .unwrap()
                    .with_bounds(vec![-0.5], vec![0.5])
                    .unwrap()
            }
            fn eval(&mut self, v: &[f64], _m: RunMode, g: bool) -> Result<Evaluation> {
                // minimum at x = 2, outside the box: solution pins to 0.5
                Ok(Evaluation {
                    f: (v[0] - 2.0) * (v[0] - 2.0),
                    grad: g.then(|| vec![2.0 * (v[0] - 2.0)]),
                    t_raster: 0.0,
                    t_solve: 0.0,
                    t_grad: 0.0,
                    exact_grid_for_solve: false,
                    ad_graph_for_grad: true,
                })
            }
        }
        let stop = StopRules {
            max_iters: 50,
            grad_tol: 1e-12,
            ..Default::default()
        };
        let r = run(&mut Bounded, RunMode::Prop1Ad, &stop).unwrap();
        assert!((r.params.values[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let make = || QuadraticToy {
            target: vec![0.7, -1.3, 2.2],
            weights: vec![1.0, 3.0, 0.2],
        };
        let stop = StopRules::default();
        let a = run(&mut make(), RunMode::Prop1Ad, &stop).unwrap();
        let b = run(&mut make(), RunMode::Prop1Ad, &stop).unwrap();
        assert_eq!(a.history.len(), b.history.len());
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.f.to_bits(), rb.f.to_bits());
        }
    }

    #[test]
    fn loglog_slope_recovers_power_law() {
        let rows: Vec<(usize, f64)> = [8usize, 16, 32, 64]
            .iter()
            .map(|&n| (n, 3.0 * (n as f64).powf(1.3)))
            .collect();
        assert!((loglog_slope(&rows) - 1.3).abs() < 1e-12);
    }
}
