//! Unconstrained minimisers for the likelihood fits: BFGS with a monotone
//! backtracking line search, and Nelder–Mead as a derivative-free fallback.

use serde::Serialize;

#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Stop when the gradient's max-norm drops below this.
    pub grad_tol: f64,
    /// Stop when an accepted step improves the objective by less than this
    /// relative amount.
    pub f_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub method: &'static str,
    /// Objective after every accepted iterate.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Central-difference gradient with steps scaled to `|x_i|`.
pub fn numerical_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * x[i].abs().max(1e-2);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// BFGS with central-difference gradients.
pub fn bfgs_numeric(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: OptimOptions) -> OptimResult {
    bfgs(f, &|x: &[f64]| numerical_gradient(f, x), x0, opts)
}

/// BFGS on `f` with gradient `grad`. Accepted iterates never increase `f`.
pub fn bfgs(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    opts: OptimOptions,
) -> OptimResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evals = 1usize;
    let mut g = grad(&x);
    let mut hinv = identity(n);
    let mut trace = vec![fx];
    let mut converged = false;
    let mut iter = 0;
    if !fx.is_finite() {
        return OptimResult {
            x,
            value: fx,
            iterations: 0,
            evaluations: evals,
            converged: false,
            method: "bfgs",
            trace,
        };
    }
    while iter < opts.max_iter {
        iter += 1;
        if max_abs(&g) < opts.grad_tol {
            converged = true;
            break;
        }
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&hinv[i], &g)).collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // not a descent direction; reset to steepest descent
            hinv = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let fnew = f(&xn);
            evals += 1;
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // line search failed; converged if the gradient is already small
            converged = max_abs(&g) < opts.grad_tol.sqrt();
            break;
        };
        let gn = grad(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            update_inverse(&mut hinv, &s, &y, sy);
        }
        let improvement = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        trace.push(fx);
        if improvement <= opts.f_tol * fx.abs().max(1.0) && max_abs(&g) < opts.grad_tol.sqrt() {
            converged = true;
            break;
        }
    }
    OptimResult {
        x,
        value: fx,
        iterations: iter,
        evaluations: evals,
        converged,
        method: "bfgs",
        trace,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn update_inverse(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: OptimOptions) -> OptimResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += 0.1 * x[i].abs().max(0.25);
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut trace = vec![];
    let mut converged = false;
    let max_iter = opts.max_iter * 20;
    let mut iter = 0;
    while iter < max_iter {
        iter += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].1);
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() <= opts.f_tol * simplex[0].1.abs().max(1.0) {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let t = if fr < simplex[n].1 { 0.5 } else { -0.5 };
            let xc = along(t);
            let fc = eval(&xc);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&p.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let v = eval(&x);
                    *p = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    OptimResult {
        x,
        value,
        iterations: iter,
        evaluations: evals,
        converged,
        method: "nelder-mead",
        trace,
    }
}

/// BFGS from every start, polished by Nelder–Mead when BFGS does not report
/// convergence; returns the best candidate.
pub fn minimize_multistart(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    grad: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    starts: &[Vec<f64>],
    opts: OptimOptions,
) -> Option<OptimResult> {
    use rayon::prelude::*;
    starts
        .par_iter()
        .map(|x0| {
            let r = bfgs(f, grad, x0, opts);
            if r.converged {
                return r;
            }
            let nm = nelder_mead(f, &r.x, opts);
            let polished = bfgs(f, grad, &nm.x, opts);
            if polished.value <= nm.value {
                polished
            } else {
                nm
            }
        })
        .filter(|r| r.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value))
}

/// Symmetric numerical Hessian by central differences of the function.
pub fn numerical_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1e-2)).collect();
    let mut xp = x.to_vec();
    let f0 = f(x);
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        out[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut at = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn bfgs_finds_rosenbrock_minimum() {
        let r = bfgs_numeric(&rosenbrock, &[-1.2, 1.0], OptimOptions::default());
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{r:?}");
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let r = nelder_mead(&f, &[0.0, 0.0], OptimOptions { f_tol: 1e-14, ..Default::default() });
        assert!((r.x[0] - 3.0).abs() < 1e-4 && (r.x[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn multistart_skips_infeasible_starts() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let g = |x: &[f64]| vec![2.0 * (x[0] - 2.0)];
        let r = minimize_multistart(&f, &g, &[vec![-1.0], vec![5.0]], OptimOptions::default()).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1] + 2.0 * x[1] * x[1];
        let h = numerical_hessian(&f, &[0.3, -0.7]);
        assert!((h[0][0] - 2.0).abs() < 1e-5);
        assert!((h[0][1] - 3.0).abs() < 1e-5);
        assert!((h[1][1] - 4.0).abs() < 1e-5);
    }
}
