//! Floquet-Bloch spectra of the linearization about a wave train.
//!
//! In the rescaled variable `theta = ell xi` the Bloch operator at frequency
//! `rho` (with `nu = rho / ell`) reads
//!
//! ```text
//! [ ell^2 (d + i nu)^2 + omega (d + i nu) + F_u     F_w                        ]
//! [ eps G_u                                         omega (d + i nu) + eps G_w ]
//! ```
//!
//! acting on 2pi-periodic functions. The critical curve is the branch through
//! the translation eigenvalue at `rho = 0`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::matvec;
use crate::wavetrain::WaveTrain;

const PI: f64 = std::f64::consts::PI;

/// Collocation matrix of the Bloch operator (unknowns ordered `u` then `w`).
pub fn assemble_bloch(wt: &WaveTrain, rho: f64) -> Mat<Complex64> {
    let n = wt.n();
    let model = &wt.model;
    let eps = model.epsilon();
    let (ell, omega) = (wt.ell, wt.omega);
    let nu = rho / ell;
    let d1 = wt.mesh.d1();
    let d2 = wt.mesh.d2();
    let i = Complex64::i();
    Mat::from_fn(2 * n, 2 * n, |r, s| {
        let (br, rr) = (r / n, r % n);
        let (bs, ss) = (s / n, s % n);
        let diag = rr == ss;
        // (d + i nu) and (d + i nu)^2 = d2 + 2 i nu d1 - nu^2
        let dn = d1[(rr, ss)] + if diag { i * nu } else { Complex64::new(0.0, 0.0) };
        match (br, bs) {
            (0, 0) => {
                let mut v = ell * ell * (d2[(rr, ss)] + 2.0 * i * nu * d1[(rr, ss)]) + omega * dn;
                if diag {
                    v += -ell * ell * nu * nu + model.f_u(wt.u_star[rr], wt.w_star[rr]);
                }
                v
            }
            (0, 1) => {
                if diag {
                    Complex64::new(model.f_w(wt.u_star[rr]), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            (1, 0) => {
                if diag {
                    Complex64::new(eps * model.g_u(), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            _ => omega * dn + if diag { Complex64::new(eps * model.g_w(), 0.0) } else { Complex64::new(0.0, 0.0) },
        }
    })
}

/// Full spectrum of the Bloch operator at `rho`.
pub fn spectrum(wt: &WaveTrain, rho: f64) -> Result<Vec<Complex64>> {
    let m = assemble_bloch(wt, rho);
    m.eigenvalues().map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Real collocation matrix of the linearization at `rho = 0` with the
/// `w`-rows divided by `eps` (the scaling used by the profile solver).
fn scaled_operator(wt: &WaveTrain) -> Mat<f64> {
    let n = wt.n();
    let model = &wt.model;
    let eps = model.epsilon();
    let (ell, omega) = (wt.ell, wt.omega);
    let d1 = wt.mesh.d1();
    let d2 = wt.mesh.d2();
    let mut a = Mat::<f64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] = ell * ell * d2[(i, j)] + omega * d1[(i, j)];
            a[(n + i, n + j)] = omega / eps * d1[(i, j)];
        }
    }
    for i in 0..n {
        a[(i, i)] += model.f_u(wt.u_star[i], wt.w_star[i]);
        a[(i, n + i)] = model.f_w(wt.u_star[i]);
        a[(n + i, i)] = model.g_u();
        a[(n + i, n + i)] += model.g_w();
    }
    a
}

/// Kernel, adjoint kernel and wavenumber derivative of a wave train.
///
/// `u_ad, w_ad` are nodal values of the adjoint eigenfunction, so inner
/// products use the quadrature weights of the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjointTriple {
    pub dtheta_u: Vec<f64>,
    pub dtheta_w: Vec<f64>,
    pub u_ad: Vec<f64>,
    pub w_ad: Vec<f64>,
    pub dl_u: Vec<f64>,
    pub dl_w: Vec<f64>,
    /// `<(dtheta_u, dtheta_w), (u_ad, w_ad)>`.
    pub pairing: f64,
    /// Max-norm of the linearization applied to the kernel.
    pub kernel_residual: f64,
    /// `<(dl_u, dl_w), (u_ad, w_ad)>`, zero by construction.
    pub normalization: f64,
    /// Derivative of the nonlinear dispersion relation `omega(ell)`.
    pub omega_prime: f64,
}

impl AdjointTriple {
    fn inner(&self, wts: &[f64], u: &[f64], w: &[f64]) -> f64 {
        (0..wts.len()).map(|j| wts[j] * (u[j] * self.u_ad[j] + w[j] * self.w_ad[j])).sum()
    }
}

/// Computes the kernel of the linearization, the adjoint kernel (from the
/// transposed collocation matrix) and the solution of the `ell`-derivative
/// equation normalized against the adjoint.
pub fn adjoint_triple(wt: &WaveTrain) -> Result<AdjointTriple> {
    let n = wt.n();
    let eps = wt.epsilon();
    let a = scaled_operator(wt);
    let du = wt.mesh.apply_d1(&wt.u_star);
    let dw = wt.mesh.apply_d1(&wt.w_star);
    let phi: Vec<f64> = du.iter().chain(dw.iter()).cloned().collect();
    let phi_norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();

    let kernel_residual = {
        let r = matvec(&a, &phi);
        // undo the row scaling
        (0..2 * n).map(|i| if i < n { r[i].abs() } else { eps * r[i].abs() }).fold(0.0, f64::max)
    };

    // left null vector psi_s of the scaled matrix from the bordered system
    // [A^T phi; phi^T 0] (psi, mu) = (0, 1)
    let m = 2 * n;
    let bordered_t = Mat::<f64>::from_fn(m + 1, m + 1, |i, j| match (i < m, j < m) {
        (true, true) => a[(j, i)],
        (true, false) => phi[i] / phi_norm,
        (false, true) => phi[j] / phi_norm,
        (false, false) => 0.0,
    });
    let rhs = Mat::<f64>::from_fn(m + 1, 1, |i, _| if i == m { 1.0 } else { 0.0 });
    let sol = bordered_t.partial_piv_lu().solve(&rhs);
    let psi_s: Vec<f64> = (0..m).map(|i| sol[(i, 0)]).collect();
    let psi_size = psi_s.iter().map(|x| x * x).sum::<f64>().sqrt();
    // psi_s . phi / |phi| = 1, so a huge psi_s means the pairing degenerates
    if !psi_size.is_finite() || psi_size > 1e12 {
        return Err(Error::SolvabilityFailure(1.0 / psi_size));
    }
    // Euclidean left null vector of the unscaled operator
    let psi: Vec<f64> = (0..m).map(|i| if i < n { psi_s[i] } else { psi_s[i] / eps }).collect();

    // ell-derivative: A x + omega' phi = -(2 ell u_tt, 0), psi . x = 0,
    // written for the scaled rows
    let ddu = wt.mesh.apply_d2(&wt.u_star);
    let psi_norm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let bordered = Mat::<f64>::from_fn(m + 1, m + 1, |i, j| match (i < m, j < m) {
        (true, true) => a[(i, j)],
        (true, false) => {
            if i < n {
                phi[i]
            } else {
                phi[i] / eps
            }
        }
        (false, true) => psi[j] / psi_norm,
        (false, false) => 0.0,
    });
    let rhs = Mat::<f64>::from_fn(m + 1, 1, |i, _| if i < n { -2.0 * wt.ell * ddu[i] } else { 0.0 });
    let sol = bordered.partial_piv_lu().solve(&rhs);
    if (0..=m).any(|i| !sol[(i, 0)].is_finite()) {
        return Err(Error::SolvabilityFailure(0.0));
    }
    let omega_prime = sol[(m, 0)];

    let wts = wt.mesh.weights();
    let u_ad: Vec<f64> = (0..n).map(|j| psi[j] / wts[j]).collect();
    let w_ad: Vec<f64> = (0..n).map(|j| psi[n + j] / wts[j]).collect();
    let mut triple = AdjointTriple {
        dtheta_u: du,
        dtheta_w: dw,
        u_ad,
        w_ad,
        dl_u: (0..n).map(|i| sol[(i, 0)]).collect(),
        dl_w: (0..n).map(|i| sol[(n + i, 0)]).collect(),
        pairing: 0.0,
        kernel_residual,
        normalization: 0.0,
        omega_prime,
    };
    triple.pairing = triple.inner(&wts, &triple.dtheta_u, &triple.dtheta_w);
    triple.normalization = triple.inner(&wts, &triple.dl_u, &triple.dl_w);
    let scale = triple.inner(&wts, &triple.dtheta_u.iter().map(|x| x.abs()).collect::<Vec<_>>(), &triple.dtheta_w.iter().map(|x| x.abs()).collect::<Vec<_>>());
    if triple.pairing.abs() < 1e-12 * scale.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::SolvabilityFailure(triple.pairing));
    }
    Ok(triple)
}

/// Adjoint-based Taylor coefficients of the critical curve at `rho = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalCoefficients {
    pub omega_prime: f64,
    /// `lambda'(0) = i (c - omega'(ell))`.
    pub lambda_p: Complex64,
    pub lambda_pp: f64,
}

/// `(omega'(ell), lambda''(0))` from the adjoint formula
///
/// ```text
/// lambda''(0) = -<(4 ell d_theta d_ell u + 2 d_theta u, 0), ad> / <d_theta (u, w), ad>
/// ```
pub fn lambda_pp_adjoint(wt: &WaveTrain) -> Result<(f64, f64)> {
    let t = adjoint_triple(wt)?;
    Ok((t.omega_prime, lambda_pp_from_triple(wt, &t)))
}

pub fn lambda_pp_from_triple(wt: &WaveTrain, t: &AdjointTriple) -> f64 {
    let wts = wt.mesh.weights();
    let d_dl_u = wt.mesh.apply_d1(&t.dl_u);
    let top: Vec<f64> = (0..wt.n()).map(|j| 4.0 * wt.ell * d_dl_u[j] + 2.0 * t.dtheta_u[j]).collect();
    let zeros = vec![0.0; wt.n()];
    -t.inner(&wts, &top, &zeros) / t.pairing
}

pub fn critical_coefficients(wt: &WaveTrain) -> Result<CriticalCoefficients> {
    let t = adjoint_triple(wt)?;
    Ok(CriticalCoefficients {
        omega_prime: t.omega_prime,
        lambda_p: Complex64::new(0.0, wt.c - t.omega_prime),
        lambda_pp: lambda_pp_from_triple(wt, &t),
    })
}

/// Second-order eigenvalue perturbation of the assembled Bloch matrices,
/// `lambda'' = [psi L'' phi + 2 psi (L' - lambda') phi_1] / psi phi`, an
/// independent route to `lambda''(0)` used as a consistency check.
pub fn lambda_pp_perturbative(wt: &WaveTrain) -> Result<f64> {
    let n = wt.n();
    let t = adjoint_triple(wt)?;
    let wts = wt.mesh.weights();
    let psi: Vec<f64> = (0..2 * n).map(|i| if i < n { t.u_ad[i] * wts[i] } else { t.w_ad[i - n] * wts[i - n] }).collect();
    let phi: Vec<f64> = t.dtheta_u.iter().chain(t.dtheta_w.iter()).cloned().collect();
    let dot = |a: &[Complex64], b: &[f64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let phi_c: Vec<Complex64> = phi.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let pairing: f64 = psi.iter().zip(&phi).map(|(a, b)| a * b).sum();

    // L' = dL/drho and L'' from the assembled matrices by exact polynomial
    // interpolation in rho (entries are quadratic in rho)
    let h = 0.25 * wt.ell;
    let l0 = assemble_bloch(wt, 0.0);
    let lp = assemble_bloch(wt, h);
    let lm = assemble_bloch(wt, -h);
    let apply = |m: &Mat<Complex64>, v: &[Complex64]| -> Vec<Complex64> {
        (0..v.len()).map(|i| (0..v.len()).map(|j| m[(i, j)] * v[j]).sum()).collect()
    };
    let a_p = apply(&lp, &phi_c);
    let a_m = apply(&lm, &phi_c);
    let a_0 = apply(&l0, &phi_c);
    let l1_phi: Vec<Complex64> = (0..2 * n).map(|i| (a_p[i] - a_m[i]) / (2.0 * h)).collect();
    let l2_phi: Vec<Complex64> = (0..2 * n).map(|i| (a_p[i] - 2.0 * a_0[i] + a_m[i]) / (h * h)).collect();
    let lambda_p = dot(&l1_phi, &psi) / pairing;

    // L0 phi_1 = (lambda' - L') phi, pinned by psi . phi_1 = 0
    let m = 2 * n;
    let rhs: Vec<Complex64> = (0..m).map(|i| lambda_p * phi[i] - l1_phi[i]).collect();
    let bordered = Mat::<Complex64>::from_fn(m + 1, m + 1, |i, j| match (i < m, j < m) {
        (true, true) => l0[(i, j)],
        (true, false) => Complex64::new(phi[i], 0.0),
        (false, true) => Complex64::new(psi[j], 0.0),
        (false, false) => Complex64::new(0.0, 0.0),
    });
    let b = Mat::<Complex64>::from_fn(m + 1, 1, |i, _| if i < m { rhs[i] } else { Complex64::new(0.0, 0.0) });
    let sol = bordered.partial_piv_lu().solve(&b);
    let phi1: Vec<Complex64> = (0..m).map(|i| sol[(i, 0)]).collect();
    let l_p1 = {
        let p = apply(&lp, &phi1);
        let q = apply(&lm, &phi1);
        (0..m).map(|i| (p[i] - q[i]) / (2.0 * h) - lambda_p * phi1[i]).collect::<Vec<_>>()
    };
    let val = (dot(&l2_phi, &psi) + 2.0 * dot(&l_p1, &psi)) / pairing;
    Ok(val.re)
}

/// Adjoint kernel of the separately discretized formal adjoint
///
/// ```text
/// [ ell^2 d^2 - omega d + F_u    eps G_u             ]
/// [ F_w                          -omega d + eps G_w  ]
/// ```
///
/// normalized so that its pairing with the kernel matches `reference`.
pub fn formal_adjoint_kernel(wt: &WaveTrain, reference: &AdjointTriple) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = wt.n();
    let model = &wt.model;
    let eps = model.epsilon();
    let (ell, omega) = (wt.ell, wt.omega);
    let d1 = wt.mesh.d1();
    let d2 = wt.mesh.d2();
    let m = 2 * n;
    let wts = wt.mesh.weights();
    // border with the kernel in the weighted inner product
    let border: Vec<f64> = (0..m).map(|i| if i < n { reference.dtheta_u[i] * wts[i] } else { reference.dtheta_w[i - n] * wts[i - n] }).collect();
    let bn = border.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mat = Mat::<f64>::from_fn(m + 1, m + 1, |i, j| {
        if i == m || j == m {
            return if i == m && j == m {
                0.0
            } else if i == m {
                border[j] / bn
            } else {
                border[i] / bn
            };
        }
        let (bi, ri) = (i / n, i % n);
        let (bj, rj) = (j / n, j % n);
        let diag = ri == rj;
        match (bi, bj) {
            (0, 0) => {
                ell * ell * d2[(ri, rj)] - omega * d1[(ri, rj)]
                    + if diag { model.f_u(wt.u_star[ri], wt.w_star[ri]) } else { 0.0 }
            }
            (0, 1) => {
                if diag {
                    eps * model.g_u()
                } else {
                    0.0
                }
            }
            (1, 0) => {
                if diag {
                    model.f_w(wt.u_star[ri])
                } else {
                    0.0
                }
            }
            _ => -omega * d1[(ri, rj)] + if diag { eps * model.g_w() } else { 0.0 },
        }
    });
    let rhs = Mat::<f64>::from_fn(m + 1, 1, |i, _| if i == m { 1.0 } else { 0.0 });
    let sol = mat.partial_piv_lu().solve(&rhs);
    let mut u: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    let mut w: Vec<f64> = (0..n).map(|i| sol[(n + i, 0)]).collect();
    let pairing: f64 = (0..n).map(|j| wts[j] * (u[j] * reference.dtheta_u[j] + w[j] * reference.dtheta_w[j])).sum();
    if !pairing.is_finite() || pairing == 0.0 {
        return Err(Error::SolvabilityFailure(pairing));
    }
    let s = reference.pairing / pairing;
    u.iter_mut().for_each(|x| *x *= s);
    w.iter_mut().for_each(|x| *x *= s);
    Ok((u, w))
}

/// Real parts below this are within eigenvalue round-off of the dense solves.
pub const UNSTABLE_RE_TOL: f64 = 1e-8;

/// Tracked critical curve over the Brillouin zone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlochCurve {
    pub rho_samples: Vec<f64>,
    pub lam_samples: Vec<Complex64>,
    /// Finite-difference `lambda'(0)`.
    pub lam_p0: Complex64,
    /// Finite-difference `lambda''(0)`, real part.
    pub lam_pp0: f64,
    /// Imaginary part of the finite-difference `lambda''(0)` (zero by symmetry).
    pub lam_pp0_imag: f64,
    /// Largest real part over the samples with `rho != 0`.
    pub max_re: f64,
    /// Frequencies with real part above [`UNSTABLE_RE_TOL`], if any.
    pub unstable_rho: Vec<f64>,
}

impl BlochCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,re_lambda,im_lambda\n");
        for (r, l) in self.rho_samples.iter().zip(&self.lam_samples) {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", r, l.re, l.im));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lam_p0": [self.lam_p0.re, self.lam_p0.im],
            "lam_pp0": self.lam_pp0,
            "max_re": self.max_re,
            "unstable_rho": self.unstable_rho,
        })
    }
}

/// Non-negative Bloch frequencies on `[0, pi / L]`, clustered quadratically
/// towards 0.
pub fn rho_grid_half(l_eps: f64, n_half: usize) -> Vec<f64> {
    let rmax = PI / l_eps;
    let k = (n_half.max(2) - 1) as f64;
    (0..n_half.max(2)).map(|j| rmax * (j as f64 / k).powi(2)).collect()
}

fn nearest_two(spec: &[Complex64], target: Complex64) -> ((usize, f64), (usize, f64)) {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut second = (usize::MAX, f64::INFINITY);
    for (k, z) in spec.iter().enumerate() {
        let d = (z - target).norm();
        if d < best.1 {
            second = best;
            best = (k, d);
        } else if d < second.1 {
            second = (k, d);
        }
    }
    (best, second)
}

/// Eigenvalue nearest to `target` with its runner-up distance.
fn track_step(wt: &WaveTrain, rho: f64, target: Complex64) -> Result<(Complex64, f64, f64)> {
    let spec = spectrum(wt, rho)?;
    let ((k1, d1), (_, d2)) = nearest_two(&spec, target);
    if k1 == usize::MAX {
        return Err(Error::Eigensolver("empty spectrum".into()));
    }
    Ok((spec[k1], d1, d2))
}

/// Critical spectral curve on `n_rho` frequencies spanning the Brillouin
/// zone. Eigenvalues are matched by nearest neighbour against a linear
/// predictor; ambiguous matches trigger local refinement in `rho` before an
/// error is reported. Negative frequencies follow from
/// `lambda(-rho) = conj(lambda(rho))`.
pub fn critical_curve(wt: &WaveTrain, n_rho: usize) -> Result<BlochCurve> {
    let n_half = n_rho.div_ceil(2).max(3);
    let grid = rho_grid_half(wt.l_eps, n_half);

    let (lam0, _, _) = track_step(wt, 0.0, Complex64::new(0.0, 0.0))?;
    let mut rhos = vec![0.0];
    let mut lams = vec![lam0];
    for &target_rho in &grid[1..] {
        // subdivide the step until the match is unambiguous
        let mut pending = vec![target_rho];
        let mut depth = 0;
        while let Some(r) = pending.pop() {
            let k = lams.len();
            let prev = lams[k - 1];
            let pred = if k >= 2 {
                prev + (prev - lams[k - 2]) * ((r - rhos[k - 1]) / (rhos[k - 1] - rhos[k - 2]))
            } else {
                prev
            };
            let (lam, d1, d2) = track_step(wt, r, pred)?;
            let step = (lam - prev).norm();
            // matching radius: five times the local step
            let radius = 5.0 * step.max(d1);
            if d2 < radius && d2 < 3.0 * d1.max(1e-14) {
                depth += 1;
                if depth > 6 {
                    let spec = spectrum(wt, r)?;
                    let (_, (k2, _)) = nearest_two(&spec, pred);
                    return Err(Error::TrackingAmbiguity {
                        rho: r,
                        first: format!("{lam}"),
                        second: format!("{}", spec[k2]),
                    });
                }
                pending.push(r);
                pending.push(0.5 * (rhos[k - 1] + r));
                continue;
            }
            rhos.push(r);
            lams.push(lam);
        }
    }

    let (lam_p0, lam_pp0, lam_pp0_imag) = fd_derivatives(wt)?;
    Ok(assemble_curve(&rhos, &lams, lam_p0, lam_pp0, lam_pp0_imag))
}

/// Critical curve continued beyond the Brillouin zone up to `rho_max`.
///
/// The operator at `nu + 1` is conjugate to the one at `nu`, so spectra on
/// `n_nu` equispaced values of `nu = rho / ell` in `[0, 1/2]` (mirrored by
/// conjugation) contain every copy of the curve; the copies are chained zone
/// by zone with the same nearest-neighbour matching as [`critical_curve`].
/// Resolving large `rho` needs enough grid points for eigenfunctions with
/// `rho / ell` oscillations per period.
pub fn critical_curve_extended(wt: &WaveTrain, n_nu: usize, rho_max: f64) -> Result<BlochCurve> {
    if n_nu < 3 || !(rho_max > 0.0) {
        return Err(Error::InvalidInput("extended scan needs n_nu >= 3 and rho_max > 0".into()));
    }
    let ell = wt.ell;
    let nus: Vec<f64> = (0..n_nu).map(|j| 0.5 * j as f64 / (n_nu - 1) as f64).collect();
    let spectra: Vec<Vec<Complex64>> = nus.iter().map(|&nu| spectrum(wt, nu * ell)).collect::<Result<_>>()?;

    // ordered visits (rho, half-zone index, conjugate?)
    let mut visits: Vec<(f64, usize, bool)> = (0..n_nu).map(|j| (nus[j] * ell, j, false)).collect();
    let mut k = 1.0;
    while visits.last().map(|v| v.0).unwrap_or(0.0) < rho_max {
        for j in (1..n_nu - 1).rev() {
            visits.push(((k - nus[j]) * ell, j, true));
        }
        for (j, &nu) in nus.iter().enumerate() {
            visits.push(((k + nu) * ell, j, false));
        }
        k += 1.0;
    }
    visits.retain(|v| v.0 <= rho_max * (1.0 + 1e-12));

    let mut rhos: Vec<f64> = Vec::with_capacity(visits.len());
    let mut lams: Vec<Complex64> = Vec::with_capacity(visits.len());
    for (idx, &(rho, j, conj)) in visits.iter().enumerate() {
        let spec: Vec<Complex64> = if conj { spectra[j].iter().map(|z| z.conj()).collect() } else { spectra[j].clone() };
        let pred = match idx {
            0 => Complex64::new(0.0, 0.0),
            1 => lams[0],
            _ => {
                let m = lams.len();
                lams[m - 1] + (lams[m - 1] - lams[m - 2]) * ((rho - rhos[m - 1]) / (rhos[m - 1] - rhos[m - 2]))
            }
        };
        let ((k1, d1), (k2, d2)) = nearest_two(&spec, pred);
        if idx > 0 && d2 < 3.0 * d1.max(1e-14) {
            return Err(Error::TrackingAmbiguity { rho, first: format!("{}", spec[k1]), second: format!("{}", spec[k2]) });
        }
        rhos.push(rho);
        lams.push(spec[k1]);
    }

    let (lam_p0, lam_pp0, lam_pp0_imag) = fd_derivatives(wt)?;
    Ok(assemble_curve(&rhos, &lams, lam_p0, lam_pp0, lam_pp0_imag))
}

fn assemble_curve(rhos: &[f64], lams: &[Complex64], lam_p0: Complex64, lam_pp0: f64, lam_pp0_imag: f64) -> BlochCurve {
    let mut rho_samples: Vec<f64> = rhos.iter().skip(1).rev().map(|r| -r).collect();
    let mut lam_samples: Vec<Complex64> = lams.iter().skip(1).rev().map(|l| l.conj()).collect();
    rho_samples.extend(rhos.iter().cloned());
    lam_samples.extend(lams.iter().cloned());
    let mut max_re = f64::NEG_INFINITY;
    let mut unstable = Vec::new();
    for (r, l) in rho_samples.iter().zip(&lam_samples) {
        if *r != 0.0 {
            max_re = max_re.max(l.re);
            if l.re > UNSTABLE_RE_TOL {
                unstable.push(*r);
            }
        }
    }
    BlochCurve { rho_samples, lam_samples, lam_p0, lam_pp0, lam_pp0_imag, max_re, unstable_rho: unstable }
}

/// Central differences at `h` and `h / 2` combined by Richardson
/// extrapolation; the eigenvalue nearest 0 is the critical one for small `h`.
fn fd_derivatives(wt: &WaveTrain) -> Result<(Complex64, f64, f64)> {
    let h = 0.05 * PI / wt.l_eps;
    let near0 = |rho: f64| -> Result<Complex64> { Ok(track_step(wt, rho, Complex64::new(0.0, 0.0))?.0) };
    let l0 = near0(0.0)?;
    let first = |h: f64| -> Result<(Complex64, Complex64)> {
        let lp = near0(h)?;
        let lm = near0(-h)?;
        Ok(((lp - lm) / (2.0 * h), (lp - 2.0 * l0 + lm) / (h * h)))
    };
    let (d1h, d2h) = first(h)?;
    let (d1h2, d2h2) = first(0.5 * h)?;
    let d1 = d1h2 + (d1h2 - d1h) / 3.0;
    let d2 = d2h2 + (d2h2 - d2h) / 3.0;
    Ok((d1, d2.re, d2.im))
}
