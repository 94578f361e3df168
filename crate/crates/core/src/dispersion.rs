//! Leading-order dispersion relation near the origin.
//!
//! Critical spectrum solves
//!
//! ```text
//! exp((lam / c - i rho) L) = (1 + Y_lf(lam eps^{-1/6}) j_lf) (1 + Y_uf(lam eps^{-1/6}) j_uf)
//! ```
//!
//! with `Y(z) = I0(-z^2 / (theta c^3))` and the fold scattering amplitudes
//! `j_lf`, `j_uf` of [`SingularLimit`]. Taking logarithms gives the explicit
//! fixed-point form `lam = i c rho + (c / L) (Log RHS(lam) + 2 pi i m)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::airy::{i0, i0_prime, upsilon};
use crate::error::{Error, Result};
use crate::model::SingularLimit;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Leading-order predictions for the critical curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionPrediction {
    /// `2 kappa c^3 eps^{2/3} / L0`.
    pub d_eff_leading: f64,
    /// Size of the steady-frame group velocity that the leading-order
    /// formula cannot resolve. The formula itself gives `c_g = 0`; the
    /// neglected period correction is `O(eps^{1/3})` relative.
    pub c_g_bound: f64,
    pub lambda_pp_leading: f64,
    pub epsilon: f64,
    pub c: f64,
    pub l0: f64,
    pub kappa: f64,
}

impl DispersionPrediction {
    pub fn new(sl: &SingularLimit, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon = {epsilon} must be positive")));
        }
        if !(sl.kappa > 0.0) {
            return Err(Error::RegimeViolation(format!("kappa = {} is not positive", sl.kappa)));
        }
        let d = 2.0 * sl.kappa * sl.c.powi(3) * epsilon.powf(2.0 / 3.0) / sl.l0;
        Ok(Self {
            d_eff_leading: d,
            c_g_bound: sl.c * epsilon.cbrt(),
            lambda_pp_leading: -d,
            epsilon,
            c: sl.c,
            l0: sl.l0,
            kappa: sl.kappa,
        })
    }
}

/// Singular estimate `L0 / eps` of the wave-train period.
pub fn singular_period(sl: &SingularLimit, epsilon: f64) -> f64 {
    sl.l0 / epsilon
}

/// Right-hand side of the main formula at `lam`.
pub fn main_formula_rhs(lam: Complex64, sl: &SingularLimit, epsilon: f64) -> Result<Complex64> {
    let z = lam * epsilon.powf(-1.0 / 6.0);
    let lf = 1.0 + upsilon(z, sl.theta_lf, sl.c)? * sl.jump_lf;
    let uf = 1.0 + upsilon(z, sl.theta_uf, sl.c)? * sl.jump_uf;
    Ok(lf * uf)
}

/// `RHS(lam)` together with `d RHS / d lam`.
fn rhs_with_derivative(lam: Complex64, sl: &SingularLimit, epsilon: f64) -> Result<(Complex64, Complex64)> {
    let s = epsilon.powf(-1.0 / 6.0);
    let z = lam * s;
    let c3 = sl.c.powi(3);
    let factor = |theta: f64, jump: f64| -> Result<(Complex64, Complex64)> {
        let w = -z * z / (theta * c3);
        let val = 1.0 + i0(w)? * jump;
        let der = i0_prime(w)? * (-2.0 * z * s / (theta * c3)) * jump;
        Ok((val, der))
    };
    let (a, da) = factor(sl.theta_lf, sl.jump_lf)?;
    let (b, db) = factor(sl.theta_uf, sl.jump_uf)?;
    Ok((a * b, da * b + a * db))
}

/// Limit of the right-hand side as `|lam| eps^{-1/6} -> inf` along the imaginary axis.
pub fn rhs_far_limit(sl: &SingularLimit) -> f64 {
    (1.0 + sl.jump_lf) * (1.0 + sl.jump_uf)
}

/// One solved point of the critical curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalCurveSample {
    pub rho: f64,
    pub lam: Complex64,
    /// Winding index `m` of the complex logarithm relative to the principal branch.
    pub branch_tag: i64,
}

#[derive(Debug, Clone, Copy)]
pub struct CurveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self { tol: 1e-15, max_iter: 50 }
    }
}

struct Solver<'a> {
    sl: &'a SingularLimit,
    eps: f64,
    l: f64,
    opts: CurveOptions,
}

impl Solver<'_> {
    /// Newton on `g(lam) = lam - (c/L)(i rho L + Log RHS + 2 pi i m)`, with `m`
    /// chosen at every iterate so that the unwrapped logarithm stays closest to
    /// `log_ref`. Returns the root, its winding index and unwrapped logarithm.
    fn solve(&self, rho: f64, guess: Complex64, log_ref: Complex64) -> Result<(Complex64, i64, Complex64)> {
        let (c, l) = (self.sl.c, self.l);
        let mut lam = guess;
        for _ in 0..self.opts.max_iter {
            let (r, dr) = rhs_with_derivative(lam, self.sl, self.eps)?;
            if r.norm() == 0.0 {
                return Err(Error::NewtonFailure(format!("RHS vanishes at lam = {lam}")));
            }
            let principal = r.ln();
            let m = ((log_ref.im - principal.im) / TWO_PI).round();
            let log = principal + Complex64::new(0.0, TWO_PI * m);
            let g = lam - Complex64::new(0.0, c * rho) - (c / l) * log;
            let dg = 1.0 - (c / l) * dr / r;
            let mut step = g / dg;
            // damp steps that would leave the neighbourhood where the winding is unambiguous
            let cap = 0.25 * TWO_PI * c / l;
            if step.norm() > cap {
                step *= cap / step.norm();
            }
            lam -= step;
            if step.norm() <= self.opts.tol * (1.0 + lam.norm()) {
                let (r, _) = rhs_with_derivative(lam, self.sl, self.eps)?;
                let principal = r.ln();
                let m = ((log_ref.im - principal.im) / TWO_PI).round();
                return Ok((lam, m as i64, principal + Complex64::new(0.0, TWO_PI * m)));
            }
        }
        Err(Error::NewtonFailure(format!(
            "main formula at rho = {rho}: no convergence in {} iterations",
            self.opts.max_iter
        )))
    }
}

/// Solves the main formula along `rho_grid`, continuing outward from `rho = 0`.
///
/// Samples are returned in the order of `rho_grid`. Consecutive samples whose
/// deviation from the linear predictor exceeds half a winding `pi c / L`
/// raise [`Error::BranchJump`].
pub fn solve_critical_curve(
    sl: &SingularLimit,
    epsilon: f64,
    l_eps: f64,
    rho_grid: &[f64],
) -> Result<Vec<CriticalCurveSample>> {
    solve_critical_curve_with(sl, epsilon, l_eps, rho_grid, CurveOptions::default())
}

pub fn solve_critical_curve_with(
    sl: &SingularLimit,
    epsilon: f64,
    l_eps: f64,
    rho_grid: &[f64],
    opts: CurveOptions,
) -> Result<Vec<CriticalCurveSample>> {
    if !(epsilon > 0.0 && l_eps > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon = {epsilon}, L = {l_eps} must be positive")));
    }
    if rho_grid.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidInput("rho grid contains non-finite values".into()));
    }
    let mut order: Vec<usize> = (0..rho_grid.len()).collect();
    order.sort_by(|&i, &j| rho_grid[i].total_cmp(&rho_grid[j]));
    let zero = order
        .iter()
        .position(|&i| rho_grid[i] == 0.0)
        .ok_or_else(|| Error::InvalidInput("rho grid must contain 0".into()))?;
    let solver = Solver { sl, eps: epsilon, l: l_eps, opts };
    let origin = CriticalCurveSample { rho: 0.0, lam: Complex64::new(0.0, 0.0), branch_tag: 0 };
    let mut out = vec![origin; rho_grid.len()];

    let upward: Vec<usize> = order[zero..].to_vec();
    let downward: Vec<usize> = order[..=zero].iter().rev().copied().collect();
    for path in [upward, downward] {
        // (rho, lam, unwrapped log) of the last two accepted samples
        let mut hist: Vec<(f64, Complex64, Complex64)> = vec![(0.0, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))];
        for &idx in &path[1..] {
            let rho = rho_grid[idx];
            let &(r1, l1, log1) = hist.last().unwrap();
            let pred = if hist.len() >= 2 {
                let (r0, l0, _) = hist[hist.len() - 2];
                if r1 == r0 { l1 } else { l1 + (l1 - l0) * ((rho - r1) / (r1 - r0)) }
            } else {
                Complex64::new(0.0, sl.c * rho)
            };
            let (lam, tag, log) = solver.solve(rho, pred, log1)?;
            let jump = (lam - pred).norm();
            if jump > 0.5 * TWO_PI * sl.c / l_eps {
                return Err(Error::BranchJump { rho, jump });
            }
            out[idx] = CriticalCurveSample { rho, lam, branch_tag: tag };
            hist.push((rho, lam, log));
        }
    }
    Ok(out)
}

/// `lam'(0)` and `lam''(0)` of the main-formula curve from Richardson-extrapolated
/// central differences with steps `h` and `h/2`.
pub fn curve_derivatives(sl: &SingularLimit, epsilon: f64, l_eps: f64, h: f64) -> Result<(Complex64, Complex64)> {
    let grid = [-h, -0.5 * h, 0.0, 0.5 * h, h];
    let s = solve_critical_curve(sl, epsilon, l_eps, &grid)?;
    let (m2, m1, p1, p2) = (s[0].lam, s[1].lam, s[3].lam, s[4].lam);
    let d1 = |a: Complex64, b: Complex64, step: f64| (b - a) / (2.0 * step);
    let d2 = |a: Complex64, b: Complex64, step: f64| (a + b) / (step * step);
    let lp = (4.0 * d1(m1, p1, 0.5 * h) - d1(m2, p2, h)) / 3.0;
    let lpp = (4.0 * d2(m1, p1, 0.5 * h) - d2(m2, p2, h)) / 3.0;
    Ok((lp, lpp))
}

/// Default finite-difference step: a small fraction of the `eps^{1/6}` scale of
/// the fold functions, converted to Bloch frequency.
pub fn default_fd_step(sl: &SingularLimit, epsilon: f64) -> f64 {
    0.02 * epsilon.powf(1.0 / 6.0) / sl.c
}

/// Stability functions `A_lf(z) = 1 + j_lf I0(z^2/(theta_lf c^3))` and `A_uf` at real `z`.
pub fn stability_functions(z: f64, sl: &SingularLimit) -> (f64, f64) {
    let c3 = sl.c.powi(3);
    let k = |theta: f64| {
        i0(Complex64::new(z * z / (theta * c3), 0.0))
            .expect("I0 is defined on the non-negative real axis")
            .re
    };
    (1.0 + sl.jump_lf * k(sl.theta_lf), 1.0 + sl.jump_uf * k(sl.theta_uf))
}

/// Closed-form lower bound on `A_lf A_uf` for the classic model.
pub fn product_lower_bound(a: f64, gamma: f64) -> f64 {
    let num = (1.0 - 2.0 * a).powi(2) * (9.0 + (-2.0 - a + a * a) * gamma).powi(2);
    let den = 27.0 * (9.0 + 2.0 * (2.0 - 5.0 * a + 5.0 * a * a) * gamma + (1.0 - a).powi(2) * a * a * gamma * gamma);
    -num / den
}

/// Summary of a main-formula instability scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityReport {
    pub samples: Vec<CriticalCurveSample>,
    pub max_re: f64,
    pub rho_at_max: f64,
    /// Maximal `rho` intervals (between grid samples) on which `Re lam > 0`.
    pub unstable_windows: Vec<(f64, f64)>,
    /// `(lam, ln|RHS(lam)| - Re(lam) L / c)` on the supplied spectral grid.
    /// Solutions of the main formula are the zeros of this modulus mismatch
    /// (the phase can always be matched by choice of `rho`).
    pub mismatch: Vec<(Complex64, f64)>,
}

impl InstabilityReport {
    pub fn is_stable(&self) -> bool {
        self.unstable_windows.is_empty()
    }
}

/// Solves the curve on `rho_grid`, locates where it enters `Re lam > 0` and
/// evaluates the modulus mismatch on `lam_grid`.
///
/// Positive real parts below `re_floor` are treated as solver noise.
pub fn instability_scan(
    sl: &SingularLimit,
    epsilon: f64,
    l_eps: f64,
    rho_grid: &[f64],
    lam_grid: &[Complex64],
) -> Result<InstabilityReport> {
    let samples = solve_critical_curve(sl, epsilon, l_eps, rho_grid)?;
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    // the origin is an exact root; only count growth clearly above roundoff
    let re_floor = 1e-13 * sl.c / l_eps;
    let mut max_re = f64::NEG_INFINITY;
    let mut rho_at_max = 0.0;
    for s in sorted.iter().filter(|s| s.rho != 0.0) {
        if s.lam.re > max_re {
            max_re = s.lam.re;
            rho_at_max = s.rho;
        }
    }
    if max_re == f64::NEG_INFINITY {
        max_re = 0.0;
    }
    let mut unstable_windows = Vec::new();
    let mut open: Option<f64> = None;
    for (k, s) in sorted.iter().enumerate() {
        let up = s.lam.re > re_floor;
        match (up, open) {
            (true, None) => open = Some(if k > 0 { sorted[k - 1].rho } else { s.rho }),
            (false, Some(start)) => {
                unstable_windows.push((start, s.rho));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        unstable_windows.push((start, sorted.last().map_or(start, |s| s.rho)));
    }
    let mismatch = lam_grid
        .iter()
        .map(|&lam| Ok((lam, main_formula_rhs(lam, sl, epsilon)?.norm().ln() - lam.re * l_eps / sl.c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(InstabilityReport { samples, max_re, rho_at_max, unstable_windows, mismatch })
}

/// CSV with columns `rho,re_lambda,im_lambda,branch_tag`.
pub fn curve_to_csv(samples: &[CriticalCurveSample]) -> String {
    let mut s = String::from("rho,re_lambda,im_lambda,branch_tag\n");
    for p in samples {
        s.push_str(&format!("{:.16e},{:.16e},{:.16e},{}\n", p.rho, p.lam.re, p.lam.im, p.branch_tag));
    }
    s
}
