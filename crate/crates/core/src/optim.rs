//! Quasi-Newton maximization with finite-difference derivatives.
//!
//! Objectives return `f64::NEG_INFINITY` (or NaN) outside their feasible
//! region; the line search backtracks until it finds a feasible point, so
//! iterates never leave the region.

/// Stopping rules and derivative step sizes.
#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Stop when the relative change in the objective falls below this.
    pub rel_tol: f64,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Relative step for central-difference gradients.
    pub fd_step: f64,
    /// Newton refinement steps with a finite-difference Hessian after BFGS.
    pub polish_steps: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { max_iter: 500, rel_tol: 1e-10, grad_tol: 1e-8, fd_step: 1e-6, polish_steps: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn ok(v: f64) -> bool {
    v.is_finite()
}

/// Central-difference gradient; falls back to one-sided differences at the
/// edge of the feasible region.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64, rel_step: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = match (ok(fp), ok(fm)) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    g
}

/// Central-difference Hessian with steps `h_i = step * max(|x_i|, 1)`.
/// Returns `None` if any evaluation is infeasible.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: f64) -> Option<Vec<Vec<f64>>> {
    let n = x.len();
    let fx = f(x);
    if !ok(fx) {
        return None;
    }
    let h: Vec<f64> = x.iter().map(|v| step * v.abs().max(1.0)).collect();
    let mut hess = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    let eval = |xp: &mut Vec<f64>, d: &[(usize, f64)]| -> Option<f64> {
        for &(i, s) in d {
            xp[i] += s;
        }
        let v = f(xp);
        for &(i, s) in d {
            xp[i] -= s;
        }
        ok(v).then_some(v)
    };
    for i in 0..n {
        let fp = eval(&mut xp, &[(i, h[i])])?;
        let fm = eval(&mut xp, &[(i, -h[i])])?;
        hess[i][i] = (fp - 2.0 * fx + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = eval(&mut xp, &[(i, h[i]), (j, h[j])])?;
            let fpm = eval(&mut xp, &[(i, h[i]), (j, -h[j])])?;
            let fmp = eval(&mut xp, &[(i, -h[i]), (j, h[j])])?;
            let fmm = eval(&mut xp, &[(i, -h[i]), (j, -h[j])])?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Some(hess)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let chol = nalgebra::linalg::Cholesky::new(m)?;
    let inv = chol.inverse();
    Some((0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximizes `f` starting from `x0` with BFGS and a backtracking Armijo
/// line search, then refines with a few Newton steps.
pub fn maximize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &OptimOptions) -> OptimResult {
    maximize_with_gradient(&f, |x: &[f64], fx: f64| gradient(&f, x, fx, opts.fd_step), x0, opts)
}

/// As [`maximize`], with a caller-supplied gradient `g(x, f(x))`.
pub fn maximize_with_gradient<F, G>(f: &F, g: G, x0: &[f64], opts: &OptimOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], f64) -> Vec<f64>,
{
    let grad = g;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !ok(fx) {
        return OptimResult { x, value: f64::NEG_INFINITY, iterations: 0, converged: false };
    }
    // inverse Hessian approximation of -f
    let mut hinv = identity(n);
    let mut g = grad(&x, fx);
    let mut converged = false;
    let mut iter = 0;
    let mut scaled = false;
    while iter < opts.max_iter {
        iter += 1;
        if norm(&g) < opts.grad_tol {
            converged = true;
            break;
        }
        // ascent direction d = H g
        let mut d: Vec<f64> = (0..n).map(|i| dot(&hinv[i], &g)).collect();
        let mut slope = dot(&g, &d);
        if !(slope > 0.0) {
            hinv = identity(n);
            d = g.clone();
            slope = dot(&g, &g);
        }
        // cap the first step so that a unit-scale inverse Hessian is not wild
        let dn = norm(&d);
        let mut t = if !scaled && dn > 1.0 { 1.0 / dn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let fnew = f(&xn);
            if ok(fnew) && fnew >= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // no ascent possible along d: at the noise floor of the gradient
            converged = norm(&g) < 1e-3 * (1.0 + fx.abs());
            break;
        };
        let gn = grad(&xn, fnew);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        // y for the minimization of -f
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let change = (fnew - fx).abs();
        x = xn;
        let fold = fx;
        fx = fnew;
        g = gn;
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if !scaled {
                let scale = sy / dot(&y, &y);
                hinv = identity(n).into_iter().map(|row| row.into_iter().map(|v| v * scale).collect()).collect();
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        if change <= opts.rel_tol * fold.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    for _ in 0..opts.polish_steps {
        if !newton_step(f, &grad, &mut x, &mut fx) {
            break;
        }
    }
    OptimResult { x, value: fx, iterations: iter, converged }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// One Newton step; returns true if it moved the iterate.
fn newton_step<F: Fn(&[f64]) -> f64, G: Fn(&[f64], f64) -> Vec<f64>>(f: &F, grad: &G, x: &mut Vec<f64>, fx: &mut f64) -> bool {
    let Some(hess) = hessian(f, x, 1e-4) else { return false };
    let neg: Vec<Vec<f64>> = hess.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let Some(inv) = spd_inverse(&neg) else { return false };
    let g = grad(x, *fx);
    let step: Vec<f64> = (0..x.len()).map(|i| dot(&inv[i], &g)).collect();
    if norm(&step) < 1e-13 * (1.0 + norm(x)) {
        return false;
    }
    let xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
    let fnew = f(&xn);
    // accept anything not worse than evaluation noise
    if ok(fnew) && fnew >= *fx - 1e-12 * fx.abs().max(1.0) {
        *x = xn;
        *fx = fnew;
        true
    } else {
        false
    }
}

/// Maximizes a univariate function on `[lo, hi]` by golden-section search.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Finds a root of `f` on `[a, b]` by bisection, given a sign change.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if !(fa.is_finite() && fb.is_finite()) || fa * fb > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol {
            return Some(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}
