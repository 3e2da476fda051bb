//! Parameter fitting for a predicted equation: multi-start
//! Levenberg-Marquardt on the squared residuals, with a forward-difference
//! Jacobian so any operator in the grammar can be fitted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Interval;
use crate::datagen::DataTable;
use crate::expr::{EvalError, Expr};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Random starts in addition to the all-ones point.
    pub restarts: usize,
    pub seed: u64,
    pub start_range: Interval,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub lambda_init: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Grid step for centring flat coordinates; `None` disables it.
    pub plateau_step: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 16,
            seed: 0,
            start_range: Interval::new(-2.0, 2.0),
            max_iters: 200,
            grad_tol: 1e-8,
            rel_tol: 1e-12,
            lambda_init: 1e-3,
            lambda_min: 1e-12,
            lambda_max: 1e12,
            plateau_step: Some(0.005),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// `params[0]` is `w1`.
    pub params: Vec<f64>,
    pub sse: f64,
    pub rmse: f64,
    pub restarts: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("equation uses x{var} but the table has {d} variables")]
    VariableOutOfRange { var: u8, d: usize },
}

/// Sum of squared residuals; `+inf` if any prediction is non-finite.
pub fn residual_sse(expr: &Expr, params: &[f64], table: &DataTable) -> Result<f64, EvalError> {
    let mut sse = 0.0;
    for (x, y) in table.rows() {
        let r = expr.evaluate(x, params)? - y;
        if !r.is_finite() {
            return Ok(f64::INFINITY);
        }
        sse += r * r;
    }
    Ok(sse)
}

struct Problem<'a> {
    expr: &'a Expr,
    table: &'a DataTable,
}

impl Problem<'_> {
    fn residuals(&self, w: &[f64], out: &mut Vec<f64>) -> bool {
        out.clear();
        for (x, y) in self.table.rows() {
            let r = self.expr.evaluate(x, w).expect("bindings checked") - y;
            if !r.is_finite() {
                return false;
            }
            out.push(r);
        }
        true
    }

    fn sse(&self, w: &[f64]) -> f64 {
        residual_sse(self.expr, w, self.table).expect("bindings checked")
    }

    /// Forward differences, column-major (`k` columns of `n`). Columns whose
    /// perturbed residuals are non-finite are zeroed.
    fn jacobian(&self, w: &[f64], r: &[f64]) -> Vec<Vec<f64>> {
        let mut wp = w.to_vec();
        let mut rp = Vec::with_capacity(r.len());
        (0..w.len())
            .map(|j| {
                let h = 1e-7 * w[j].abs().max(1.0);
                wp[j] = w[j] + h;
                let ok = self.residuals(&wp, &mut rp);
                wp[j] = w[j];
                if ok {
                    rp.iter().zip(r).map(|(a, b)| (a - b) / h).collect()
                } else {
                    vec![0.0; r.len()]
                }
            })
            .collect()
    }
}

struct Run {
    params: Vec<f64>,
    sse: f64,
    converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major `k x k`).
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let s = a[i * k + j] - (0..j).map(|p| l[i * k + p] * l[j * k + p]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        y[i] = (b[i] - (0..i).map(|p| l[i * k + p] * y[p]).sum::<f64>()) / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        x[i] = (y[i] - (i + 1..k).map(|p| l[p * k + i] * x[p]).sum::<f64>()) / l[i * k + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn levenberg_marquardt(problem: &Problem, start: &[f64], cfg: &FitConfig) -> Run {
    let k = start.len();
    let mut w = start.to_vec();
    let mut r = Vec::new();
    if !problem.residuals(&w, &mut r) {
        return Run {
            params: w,
            sse: f64::INFINITY,
            converged: false,
        };
    }
    let mut sse = dot(&r, &r);
    let mut lambda = cfg.lambda_init;
    for _ in 0..cfg.max_iters {
        let jac = problem.jacobian(&w, &r);
        let g: Vec<f64> = jac.iter().map(|col| dot(col, &r)).collect();
        if dot(&g, &g).sqrt() < cfg.grad_tol {
            return Run {
                params: w,
                sse,
                converged: true,
            };
        }
        let mut jtj = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v = dot(&jac[i], &jac[j]);
                jtj[i * k + j] = v;
                jtj[j * k + i] = v;
            }
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        loop {
            let mut a = jtj.clone();
            for i in 0..k {
                a[i * k + i] += lambda;
            }
            let trial = cholesky_solve(&a, &neg_g, k)
                .map(|delta| w.iter().zip(&delta).map(|(a, b)| a + b).collect::<Vec<_>>());
            let trial_sse = trial.as_ref().map_or(f64::INFINITY, |t| problem.sse(t));
            if trial_sse < sse {
                let improvement = (sse - trial_sse) / sse;
                w = trial.expect("finite sse implies a trial point");
                sse = trial_sse;
                problem.residuals(&w, &mut r);
                lambda = (lambda / 10.0).max(cfg.lambda_min);
                if improvement < cfg.rel_tol {
                    return Run {
                        params: w,
                        sse,
                        converged: true,
                    };
                }
                break;
            }
            lambda *= 10.0;
            if lambda > cfg.lambda_max {
                // No damping yields progress: a numerical minimum.
                return Run {
                    params: w,
                    sse,
                    converged: true,
                };
            }
        }
    }
    Run {
        params: w,
        sse,
        converged: false,
    }
}

/// Moves every coordinate along which the objective is locally flat to the
/// centre of the widest grid interval attaining the lowest SSE along that
/// axis. Only applies moves that do not increase the SSE.
fn centre_plateaus(problem: &Problem, run: &mut Run, cfg: &FitConfig, step: f64) {
    let mut r = Vec::new();
    if !problem.residuals(&run.params, &mut r) {
        return;
    }
    let jac = problem.jacobian(&run.params, &r);
    let Interval { lo, hi } = cfg.start_range;
    let m = ((hi - lo) / step).round() as usize + 1;
    for (j, col) in jac.iter().enumerate() {
        if col.iter().any(|&v| v != 0.0) {
            continue;
        }
        let mut w = run.params.clone();
        let grid: Vec<f64> = (0..m).map(|i| lo + i as f64 * step).collect();
        let sse: Vec<f64> = grid
            .iter()
            .map(|&g| {
                w[j] = g;
                problem.sse(&w)
            })
            .collect();
        let best = sse.iter().copied().fold(f64::INFINITY, f64::min);
        if !(best <= run.sse) {
            continue;
        }
        let (mut run_start, mut run_len) = (0, 0);
        let mut i = 0;
        while i < m {
            if sse[i] == best {
                let s = i;
                while i < m && sse[i] == best {
                    i += 1;
                }
                if i - s > run_len {
                    (run_start, run_len) = (s, i - s);
                }
            } else {
                i += 1;
            }
        }
        let centre = 0.5 * (grid[run_start] + grid[run_start + run_len - 1]);
        w[j] = centre;
        if problem.sse(&w) != best {
            w[j] = grid[run_start + run_len / 2];
        }
        run.params = w;
        run.sse = best;
        run.converged = true;
    }
}

fn check_variables(expr: &Expr, table: &DataTable) -> Result<(), FitError> {
    match expr.free_symbols().variables.last() {
        Some(&v) if v as usize > table.d() => Err(FitError::VariableOutOfRange { var: v, d: table.d() }),
        _ => Ok(()),
    }
}

/// Start points: all ones, then `restarts` uniform draws over
/// `start_range^k`.
pub fn start_points(k: usize, cfg: &FitConfig) -> Vec<Vec<f64>> {
    let mut starts = vec![vec![1.0; k]];
    starts.extend((0..cfg.restarts).map(|i| {
        let mut r = rng::stream(cfg.seed, i as u64);
        (0..k).map(|_| cfg.start_range.sample(&mut r)).collect()
    }));
    starts
}

/// Fits `w1..wk` (k = highest parameter index in `expr`) to the table.
pub fn fit_parameters(expr: &Expr, table: &DataTable, cfg: &FitConfig) -> Result<FitResult, FitError> {
    let k = expr.param_count();
    fit_from(expr, table, &start_points(k, cfg), cfg)
}

/// Like [`fit_parameters`] with explicit start points. The best run is
/// chosen by SSE, ties going to the earlier start.
pub fn fit_from(
    expr: &Expr,
    table: &DataTable,
    starts: &[Vec<f64>],
    cfg: &FitConfig,
) -> Result<FitResult, FitError> {
    check_variables(expr, table)?;
    let k = expr.param_count();
    let problem = Problem { expr, table };
    let finish = |params: Vec<f64>, restarts: usize, converged: bool| {
        let sse = problem.sse(&params);
        FitResult {
            rmse: (sse / table.n() as f64).sqrt(),
            params,
            sse,
            restarts,
            converged,
        }
    };
    if k == 0 {
        return Ok(finish(Vec::new(), 0, true));
    }
    let mut best: Option<Run> = None;
    for start in starts {
        assert_eq!(start.len(), k, "start point dimension");
        let run = levenberg_marquardt(&problem, start, cfg);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one start point");
    if let Some(step) = cfg.plateau_step {
        if best.sse.is_finite() {
            centre_plateaus(&problem, &mut best, cfg, step);
        }
    }
    Ok(finish(best.params, starts.len(), best.converged))
}
