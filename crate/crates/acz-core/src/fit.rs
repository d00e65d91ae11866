//! Damped least-squares engine for the small separable models used by the
//! analysis pipeline (at most a handful of parameters, hundreds of points).
//!
//! Levenberg-Marquardt with multiplicative damping on the normal equations,
//! box constraints enforced by projection, analytic Jacobian when the caller
//! provides one and central finite differences otherwise. The parameter
//! covariance is `sigma^2 (J^T J)^{-1}` evaluated at the solution with
//! `sigma^2 = SSR / (m - n)`.

use crate::error::Error;
use crate::Result;

/// Residual vector callback: maps parameters to weighted residuals.
pub type ResidualFn<'a> = &'a dyn Fn(&[f64]) -> Result<Vec<f64>>;

/// Jacobian callback: row i holds d r_i / d theta_j.
pub type JacobianFn<'a> = &'a dyn Fn(&[f64]) -> Result<Vec<Vec<f64>>>;

#[derive(Debug, Clone, Copy)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the largest relative parameter step.
    pub rel_step_tol: f64,
    pub lambda_init: f64,
    /// Relative perturbation for finite-difference Jacobians.
    pub fd_step: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self { max_iterations: 200, rel_step_tol: 1e-10, lambda_init: 1e-3, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct LsqOutcome {
    pub params: Vec<f64>,
    /// n x n; zeros when the normal matrix is singular at the solution.
    pub covariance: Vec<Vec<f64>>,
    /// SSR / (m - n).
    pub residual_variance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub ssr: f64,
}

/// Cholesky factor (lower) of a symmetric positive-definite matrix.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

fn spd_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let l = cholesky(a)?;
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    // Symmetrize against rounding.
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[i][j] + inv[j][i]);
            inv[i][j] = m;
            inv[j][i] = m;
        }
    }
    Some(inv)
}

fn fd_jacobian(r: ResidualFn, x: &[f64], m: usize, rel: f64) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let mut j = vec![vec![0.0; n]; m];
    let mut xp = x.to_vec();
    for k in 0..n {
        let h = rel * x[k].abs().max(1e-8);
        xp[k] = x[k] + h;
        let rp = r(&xp)?;
        xp[k] = x[k] - h;
        let rm = r(&xp)?;
        xp[k] = x[k];
        if rp.len() != m || rm.len() != m {
            return Err(Error::Dataset("residual length changed between calls".into()));
        }
        for i in 0..m {
            j[i][k] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

fn normal_matrix(j: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = j[0].len();
    let mut a = vec![vec![0.0; n]; n];
    for row in j {
        for p in 0..n {
            for q in 0..=p {
                a[p][q] += row[p] * row[q];
            }
        }
    }
    for p in 0..n {
        for q in p + 1..n {
            a[p][q] = a[q][p];
        }
    }
    a
}

fn gradient(j: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let n = j[0].len();
    let mut g = vec![0.0; n];
    for (row, &ri) in j.iter().zip(r) {
        for (gk, &jk) in g.iter_mut().zip(row) {
            *gk += jk * ri;
        }
    }
    g
}

fn ssr_of(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn clamp_to(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(lo, hi);
    }
}

/// Minimizes `||r(theta)||^2` subject to `lower <= theta <= upper`.
///
/// Preconditions: `x0` within bounds and finite; more residuals than
/// parameters. Non-convergence within the iteration budget is reported via
/// the `converged` flag, not an error.
pub fn least_squares(
    r: ResidualFn,
    jac: Option<JacobianFn>,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LsqOptions,
) -> Result<LsqOutcome> {
    let n = x0.len();
    if n == 0 {
        return Err(Error::Domain("no parameters to fit".into()));
    }
    if lower.len() != n || upper.len() != n {
        return Err(Error::Domain("bounds length mismatch".into()));
    }
    for k in 0..n {
        if !(lower[k] <= upper[k]) {
            return Err(Error::Domain(format!("bound {k} inverted: {} > {}", lower[k], upper[k])));
        }
        if !x0[k].is_finite() || x0[k] < lower[k] || x0[k] > upper[k] {
            return Err(Error::Domain(format!("x0[{k}] = {} outside bounds", x0[k])));
        }
    }
    let mut x = x0.to_vec();
    let mut res = r(&x)?;
    let m = res.len();
    if m <= n {
        return Err(Error::Domain(format!("need more residuals ({m}) than parameters ({n})")));
    }
    let mut ssr = ssr_of(&res);
    if !ssr.is_finite() {
        return Err(Error::NonFinite("initial residuals are not finite".into()));
    }
    let eval_jac = |x: &[f64]| -> Result<Vec<Vec<f64>>> {
        match jac {
            Some(jf) => {
                let j = jf(x)?;
                if j.len() != m || j.iter().any(|row| row.len() != n) {
                    return Err(Error::Dataset("jacobian shape mismatch".into()));
                }
                Ok(j)
            }
            None => fd_jacobian(r, x, m, opts.fd_step),
        }
    };

    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iterations {
        iterations += 1;
        let j = eval_jac(&x)?;
        let a = normal_matrix(&j);
        let g = gradient(&j, &res);
        let max_diag = a.iter().enumerate().map(|(i, row)| row[i]).fold(0.0f64, f64::max);
        if max_diag == 0.0 {
            // Flat model: nothing to move.
            converged = true;
            break;
        }
        let floor = 1e-12 * max_diag;
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = a.clone();
            for k in 0..n {
                damped[k][k] += lambda * damped[k][k].max(floor);
            }
            let step = match cholesky(&damped) {
                Some(l) => {
                    let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
                    cholesky_solve(&l, &neg_g)
                }
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut x_new = x.clone();
            for k in 0..n {
                x_new[k] += step[k];
            }
            clamp_to(&mut x_new, lower, upper);
            let res_new = match r(&x_new) {
                Ok(v) => v,
                Err(_) => {
                    lambda *= 3.0;
                    continue;
                }
            };
            let ssr_new = ssr_of(&res_new);
            if ssr_new.is_finite() && ssr_new <= ssr {
                let rel_step = x_new
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1e-30))
                    .fold(0.0f64, f64::max);
                x = x_new;
                res = res_new;
                ssr = ssr_new;
                lambda = (lambda / 3.0).max(1e-14);
                accepted = true;
                if rel_step < opts.rel_step_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 3.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !accepted {
            // No useful step exists at any damping: treat as stationary.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    let j = eval_jac(&x)?;
    let a = normal_matrix(&j);
    let residual_variance = ssr / (m - n) as f64;
    let covariance = match spd_inverse(&a) {
        Some(inv) => inv
            .into_iter()
            .map(|row| row.into_iter().map(|v| v * residual_variance).collect())
            .collect(),
        None => vec![vec![0.0; n]; n],
    };
    Ok(LsqOutcome { params: x, covariance, residual_variance, converged, iterations, ssr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_data() -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        // y = 0.7 + 0.3 t with fixed pseudo-noise.
        let y: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, &ti)| 0.7 + 0.3 * ti + 0.01 * ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.005)
            .collect();
        (t, y)
    }

    #[test]
    fn linear_fit_matches_normal_equation_solution() {
        let (t, y) = line_data();
        let resid = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(t.iter().zip(&y).map(|(&ti, &yi)| p[0] + p[1] * ti - yi).collect())
        };
        let out = least_squares(
            &resid,
            None,
            &[0.0, 0.0],
            &[-10.0, -10.0],
            &[10.0, 10.0],
            &LsqOptions::default(),
        )
        .unwrap();
        assert!(out.converged);

        // Closed-form ordinary least squares as the oracle.
        let n = t.len() as f64;
        let (st, stt) = (t.iter().sum::<f64>(), t.iter().map(|x| x * x).sum::<f64>());
        let (sy, sty) = (
            y.iter().sum::<f64>(),
            t.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>(),
        );
        let det = n * stt - st * st;
        let a_hat = (stt * sy - st * sty) / det;
        let b_hat = (n * sty - st * sy) / det;
        assert_relative_eq!(out.params[0], a_hat, max_relative = 1e-9);
        assert_relative_eq!(out.params[1], b_hat, max_relative = 1e-9);

        // Covariance against the hand-inverted 2x2 normal matrix.
        let s2 = out.residual_variance;
        assert_relative_eq!(out.covariance[0][0], s2 * stt / det, max_relative = 1e-6);
        assert_relative_eq!(out.covariance[1][1], s2 * n / det, max_relative = 1e-6);
        assert_relative_eq!(out.covariance[0][1], -s2 * st / det, max_relative = 1e-6);
    }

    fn damped_cosine(t: f64, p: &[f64]) -> f64 {
        p[3] - 0.5 * p[2] * (1.0 - (std::f64::consts::TAU * p[0] * t).cos() * (-2.0 * t / p[1]).exp())
    }

    #[test]
    fn damped_cosine_recovery_with_and_without_analytic_jacobian() {
        let truth = [0.3, 5.0, 0.05, 0.9];
        let t: Vec<f64> = (0..80).map(|i| i as f64 * 0.15).collect();
        let y: Vec<f64> = t.iter().map(|&ti| damped_cosine(ti, &truth)).collect();
        let resid = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(t.iter().zip(&y).map(|(&ti, &yi)| damped_cosine(ti, p) - yi).collect())
        };
        let x0 = [0.26, 3.0, 0.08, 0.95];
        let lower = [0.0, 0.1, 1e-4, 0.5];
        let upper = [2.0, 1e4, 1.0, 1.5];
        let out =
            least_squares(&resid, None, &x0, &lower, &upper, &LsqOptions::default()).unwrap();
        assert!(out.converged, "iterations {}", out.iterations);
        for (got, want) in out.params.iter().zip(&truth) {
            assert_relative_eq!(got, want, max_relative = 1e-7);
        }
        assert!(out.ssr < 1e-18);

        let jac = |p: &[f64]| -> Result<Vec<Vec<f64>>> {
            Ok(t.iter()
                .map(|&ti| {
                    let env = (-2.0 * ti / p[1]).exp();
                    let arg = std::f64::consts::TAU * p[0] * ti;
                    vec![
                        -0.5 * p[2] * env * arg.sin() * std::f64::consts::TAU * ti,
                        0.5 * p[2] * arg.cos() * env * (2.0 * ti / (p[1] * p[1])),
                        -0.5 * (1.0 - arg.cos() * env),
                        1.0,
                    ]
                })
                .collect())
        };
        let j_an = jac(&x0).unwrap();
        let j_fd = fd_jacobian(&resid, &x0, t.len(), 1e-6).unwrap();
        for (ra, rf) in j_an.iter().zip(&j_fd) {
            for (a, f) in ra.iter().zip(rf) {
                assert_relative_eq!(a, f, max_relative = 1e-4, epsilon = 1e-9);
            }
        }
        let out2 =
            least_squares(&resid, Some(&jac), &x0, &lower, &upper, &LsqOptions::default())
                .unwrap();
        assert!(out2.converged);
        for (got, want) in out2.params.iter().zip(&truth) {
            assert_relative_eq!(got, want, max_relative = 1e-7);
        }
    }

    #[test]
    fn bound_is_respected_when_truth_lies_outside() {
        let y = [2.0; 8];
        let resid = |p: &[f64]| -> Result<Vec<f64>> { Ok(y.iter().map(|&v| p[0] - v).collect()) };
        let out = least_squares(&resid, None, &[1.0], &[0.0], &[1.5], &LsqOptions::default())
            .unwrap();
        assert!(out.converged);
        assert_relative_eq!(out.params[0], 1.5, max_relative = 1e-12);
    }

    #[test]
    fn input_validation() {
        let resid = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![p[0]]) };
        // As many residuals as parameters.
        assert!(least_squares(&resid, None, &[0.5], &[0.0], &[1.0], &LsqOptions::default())
            .is_err());
        let resid2 = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![p[0], p[0] * 2.0]) };
        // x0 outside bounds.
        assert!(least_squares(&resid2, None, &[2.0], &[0.0], &[1.0], &LsqOptions::default())
            .is_err());
        // Inverted bounds.
        assert!(least_squares(&resid2, None, &[0.5], &[1.0], &[0.0], &LsqOptions::default())
            .is_err());
        // Non-finite residuals at x0.
        let bad = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![f64::NAN, 0.0]) };
        assert!(least_squares(&bad, None, &[0.5], &[0.0], &[1.0], &LsqOptions::default())
            .is_err());
    }

    #[test]
    fn cholesky_rejects_indefinite_matrices() {
        assert!(cholesky(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_none());
        assert!(cholesky(&[vec![0.0, 0.0], vec![0.0, 1.0]]).is_none());
        let l = cholesky(&[vec![4.0, 2.0], vec![2.0, 5.0]]).unwrap();
        assert_relative_eq!(l[0][0], 2.0);
        assert_relative_eq!(l[1][0], 1.0);
        assert_relative_eq!(l[1][1], 2.0);
    }
}
