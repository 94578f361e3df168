//! Periodic Fourier collocation on [0, 2pi), optionally on a smoothly clustered
//! grid.
//!
//! A clustered grid is the image of a uniform grid in a computational variable
//! `s` under an analytic periodic map `theta(s)`. The map is prescribed through
//! its derivative `theta'(s) = c0 exp(-sum_k D_k V(s - sigma_k))` with periodic
//! Gaussian-like bumps `V(x) = exp((cos x - 1) / w^2)`, so the grid spacing
//! shrinks geometrically towards each bump centre while the map stays smooth
//! on the scale of the grid.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// One refinement zone of a clustered grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    /// Centre in theta; the first bump of a grid is always placed at 0.
    pub center: f64,
    /// Target grid spacing (in theta) at the centre.
    pub min_spacing: f64,
    /// Width of the refinement zone in the computational variable.
    pub width_s: f64,
}

#[derive(Debug, Clone)]
struct SMap {
    sigma: Vec<f64>,
    depth: Vec<f64>,
    width: Vec<f64>,
    c0: f64,
    // sine/cosine series of theta'(s)/c0 without the mean
    a: Vec<f64>,
    b: Vec<f64>,
    mean: f64,
}

impl SMap {
    fn log_g(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.sigma.len() {
            let w = self.width[k];
            acc -= self.depth[k] * (((s - self.sigma[k]).cos() - 1.0) / (w * w)).exp();
        }
        acc
    }

    fn dtheta_ds(&self, s: f64) -> f64 {
        self.c0 * self.log_g(s).exp()
    }

    fn build(sigma: Vec<f64>, depth: Vec<f64>, width: Vec<f64>) -> SMap {
        let mut m = 4096usize;
        let mut map = SMap { sigma, depth, width, c0: 1.0, a: Vec::new(), b: Vec::new(), mean: 1.0 };
        loop {
            let mut buf: Vec<Complex64> =
                (0..m).map(|j| Complex64::new(map.log_g(TWO_PI * j as f64 / m as f64).exp(), 0.0)).collect();
            FftPlanner::new().plan_fft_forward(m).process(&mut buf);
            let mean = buf[0].re / m as f64;
            // g <= 1, so coefficients below ~1e-15 are FFT roundoff
            let tail = buf[m / 2 - 1].norm() / m as f64;
            if tail > 1e-15 && m < (1 << 22) {
                m *= 2;
                continue;
            }
            let mut kmax = 1;
            for k in 1..m / 2 {
                if buf[k].norm() / m as f64 > 1e-15 {
                    kmax = k;
                }
            }
            map.mean = mean;
            map.c0 = 1.0 / mean;
            map.a = (1..=kmax).map(|k| 2.0 * buf[k].re / m as f64).collect();
            map.b = (1..=kmax).map(|k| -2.0 * buf[k].im / m as f64).collect();
            return map;
        }
    }

    fn theta(&self, s: f64) -> f64 {
        let mut acc = self.mean * s;
        let (s1, c1) = s.sin_cos();
        let (mut sn, mut cs) = (s1, c1);
        for k in 0..self.a.len() {
            let kf = (k + 1) as f64;
            acc += (self.a[k] * sn - self.b[k] * (cs - 1.0)) / kf;
            // exact rotation by s; re-anchor periodically to bound drift
            if (k + 1) % 64 == 0 {
                (sn, cs) = ((kf + 1.0) * s).sin_cos();
            } else {
                (sn, cs) = (sn * c1 + cs * s1, cs * c1 - sn * s1);
            }
        }
        self.c0 * acc
    }

    fn s_of_theta(&self, theta: f64) -> f64 {
        let m = (theta / TWO_PI).floor();
        let t = theta - m * TWO_PI;
        let (mut lo, mut hi) = (0.0, TWO_PI);
        let mut s = t;
        for _ in 0..200 {
            let r = self.theta(s) - t;
            if r.abs() < 1e-16 {
                break;
            }
            if r < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let mut ns = s - r / self.dtheta_ds(s);
            if !(ns > lo && ns < hi) {
                ns = 0.5 * (lo + hi);
            }
            if (ns - s).abs() < 1e-16 {
                s = ns;
                break;
            }
            s = ns;
        }
        s + m * TWO_PI
    }
}

/// Collocation grid with its differentiation matrices.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub theta: Vec<f64>,
    /// `d theta / d s` at the nodes.
    pub dtheta_ds: Vec<f64>,
    pub bumps: Vec<Bump>,
    map: Option<SMap>,
    d1: Mat<f64>,
    d2: Mat<f64>,
}

fn circulant_d1(n: usize) -> Vec<f64> {
    let h = TWO_PI / n as f64;
    (0..n)
        .map(|m| {
            if m == 0 {
                return 0.0;
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let x = 0.5 * m as f64 * h;
            if n % 2 == 0 {
                0.5 * sign / x.tan()
            } else {
                0.5 * sign / x.sin()
            }
        })
        .collect()
}

fn circulant_d2(n: usize) -> Vec<f64> {
    let h = TWO_PI / n as f64;
    let nf = n as f64;
    (0..n)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let x = 0.5 * m as f64 * h;
            if n % 2 == 0 {
                if m == 0 {
                    -PI * PI / (3.0 * h * h) - 1.0 / 6.0
                } else {
                    -0.5 * sign / (x.sin() * x.sin())
                }
            } else if m == 0 {
                -(nf * nf - 1.0) / 12.0
            } else {
                -0.5 * sign / (x.sin() * x.tan())
            }
        })
        .collect()
}

fn circulant_matrix(col: &[f64]) -> Mat<f64> {
    let n = col.len();
    Mat::from_fn(n, n, |i, j| col[(i + n - j) % n])
}

impl Mesh {
    /// Uniform grid. For even `n` the Nyquist mode is differentiated with
    /// symbol 0 (first derivative) and `-(n/2)^2` (second derivative), matching
    /// the FFT conventions of the simulator.
    pub fn uniform(n: usize) -> Result<Mesh> {
        if n < 4 {
            return Err(Error::InvalidInput(format!("grid size {n} too small")));
        }
        let h = TWO_PI / n as f64;
        Ok(Mesh {
            theta: (0..n).map(|j| j as f64 * h).collect(),
            dtheta_ds: vec![1.0; n],
            bumps: Vec::new(),
            map: None,
            d1: circulant_matrix(&circulant_d1(n)),
            d2: circulant_matrix(&circulant_d2(n)),
        })
    }

    /// Clustered grid with `n` (odd) points. The first bump is moved to
    /// theta = 0 and the others keep their offsets from it.
    pub fn clustered(n: usize, bumps: &[Bump]) -> Result<Mesh> {
        if n % 2 == 0 || n < 5 {
            return Err(Error::InvalidInput(format!("clustered grids need odd n >= 5, got {n}")));
        }
        if bumps.is_empty()
            || bumps.iter().any(|b| !(b.min_spacing > 0.0) || !(b.width_s > 0.0 && b.width_s < 2.0) || !b.center.is_finite())
        {
            return Err(Error::InvalidInput("invalid clustering bumps".into()));
        }
        let ds = TWO_PI / n as f64;
        let origin = bumps[0].center;
        let targets: Vec<f64> = bumps.iter().map(|b| (b.center - origin).rem_euclid(TWO_PI)).collect();
        let width: Vec<f64> = bumps.iter().map(|b| b.width_s).collect();
        let mut sigma = targets.clone();
        let mut depth = vec![0.0; bumps.len()];
        let mut map = SMap::build(sigma.clone(), depth.clone(), width.clone());
        for _ in 0..30 {
            let mut change = 0.0f64;
            for (k, b) in bumps.iter().enumerate() {
                let d = (map.c0 * ds / b.min_spacing).ln().max(0.0);
                change = change.max((d - depth[k]).abs());
                depth[k] = d;
            }
            map = SMap::build(sigma.clone(), depth.clone(), width.clone());
            for k in 1..bumps.len() {
                let err = targets[k] - map.theta(sigma[k]);
                change = change.max(err.abs());
                sigma[k] = (sigma[k] + err * map.mean).clamp(1e-3, TWO_PI - 1e-3);
            }
            map = SMap::build(sigma.clone(), depth.clone(), width.clone());
            if change < 1e-13 {
                break;
            }
        }
        let theta: Vec<f64> = (0..n).map(|j| map.theta(j as f64 * ds)).collect();
        if theta.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("clustered grid is not monotone; refinement too strong for n".into()));
        }
        let dtheta_ds: Vec<f64> = (0..n).map(|j| map.dtheta_ds(j as f64 * ds)).collect();
        let d1s = circulant_matrix(&circulant_d1(n));
        let d1 = Mat::from_fn(n, n, |i, j| d1s[(i, j)] / dtheta_ds[i]);
        let d2 = &d1 * &d1;
        let placed = bumps
            .iter()
            .zip(&targets)
            .map(|(b, &t)| Bump { center: t, ..*b })
            .collect();
        Ok(Mesh { theta, dtheta_ds, bumps: placed, map: Some(map), d1, d2 })
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn is_uniform(&self) -> bool {
        self.map.is_none()
    }

    /// Computational coordinate of a physical point; monotone, with
    /// `s(theta + 2pi) = s(theta) + 2pi`.
    pub fn s_of_theta(&self, theta: f64) -> f64 {
        match &self.map {
            None => theta,
            Some(m) => m.s_of_theta(theta),
        }
    }

    /// Quadrature weights of the periodic trapezoid rule in `s`.
    pub fn weights(&self) -> Vec<f64> {
        let h = TWO_PI / self.n() as f64;
        self.dtheta_ds.iter().map(|g| g * h).collect()
    }

    pub fn d1(&self) -> &Mat<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &Mat<f64> {
        &self.d2
    }

    pub fn apply_d1(&self, v: &[f64]) -> Vec<f64> {
        matvec(&self.d1, v)
    }

    pub fn apply_d2(&self, v: &[f64]) -> Vec<f64> {
        matvec(&self.d2, v)
    }

    /// Evaluates the trigonometric interpolant (in `s`) of nodal values at
    /// arbitrary physical points.
    pub fn interpolate(&self, values: &[f64], targets: &[f64]) -> Vec<f64> {
        let coeffs = TrigInterpolant::new(values);
        targets.iter().map(|&t| coeffs.eval(self.s_of_theta(t))).collect()
    }

    /// Integral over one period.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        self.weights().iter().zip(v).map(|(w, x)| w * x).sum()
    }
}

/// Derivative of equispaced periodic samples (period 2pi) by FFT, with the
/// Nyquist mode dropped.
pub fn fft_derivative(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = if 2 * k < n {
            k as f64
        } else if 2 * k == n {
            0.0
        } else {
            k as f64 - n as f64
        };
        *c *= Complex64::new(0.0, kk / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

pub(crate) fn matvec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n];
    for (j, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let col = m.col(j);
        for i in 0..n {
            out[i] += col[i] * x;
        }
    }
    out
}

/// Trigonometric interpolant of equispaced periodic samples.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl TrigInterpolant {
    pub fn new(values: &[f64]) -> Self {
        let n = values.len();
        let mut buf: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        TrigInterpolant { n, coeffs: buf }
    }

    /// Value at computational coordinate `s` (period 2pi).
    pub fn eval(&self, s: f64) -> f64 {
        let n = self.n;
        let mut acc = self.coeffs[0].re;
        let kmax = (n - 1) / 2;
        for k in 1..=kmax {
            let (sn, cs) = (k as f64 * s).sin_cos();
            let c = self.coeffs[k];
            acc += 2.0 * (c.re * cs - c.im * sn);
        }
        if n % 2 == 0 {
            acc += self.coeffs[n / 2].re * (0.5 * n as f64 * s).cos();
        }
        acc / n as f64
    }

    /// Largest coefficient magnitude in the upper tenth of the resolved
    /// wavenumbers, relative to the largest coefficient overall. A crude
    /// measure of how well the samples are resolved.
    pub fn tail_ratio(&self) -> f64 {
        let kmax = (self.n - 1) / 2;
        let mags: Vec<f64> = (0..=kmax).map(|k| self.coeffs[k].norm()).collect();
        let top = mags.iter().cloned().fold(0.0, f64::max);
        let tail = mags[kmax - kmax / 10..].iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            0.0
        } else {
            tail / top
        }
    }

    /// Translate of the samples by a fractional number of grid steps:
    /// returns `p(s_j + shift)`.
    pub fn shifted(&self, shift: f64) -> Vec<f64> {
        let n = self.n;
        let mut buf = self.coeffs.clone();
        for (k, c) in buf.iter_mut().enumerate() {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            if n % 2 == 0 && k == n / 2 {
                // Nyquist: keep the real cosine part only
                *c = Complex64::new(c.re * (0.5 * n as f64 * shift).cos(), 0.0);
                continue;
            }
            *c *= Complex64::from_polar(1.0, kk * shift);
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn uniform_derivatives_are_exact_on_trig_polynomials() {
        for n in [16usize, 17] {
            let m = Mesh::uniform(n).unwrap();
            let f: Vec<f64> = m.theta.iter().map(|t| (3.0 * t).sin() + (2.0 * t).cos()).collect();
            let df: Vec<f64> = m.theta.iter().map(|t| 3.0 * (3.0 * t).cos() - 2.0 * (2.0 * t).sin()).collect();
            let ddf: Vec<f64> = m.theta.iter().map(|t| -9.0 * (3.0 * t).sin() - 4.0 * (2.0 * t).cos()).collect();
            assert!(max_err(&m.apply_d1(&f), &df) < 1e-12);
            assert!(max_err(&m.apply_d2(&f), &ddf) < 1e-11);
        }
        // even-n Nyquist conventions
        let m = Mesh::uniform(8).unwrap();
        let saw: Vec<f64> = (0..8).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(m.apply_d1(&saw).iter().all(|x| x.abs() < 1e-12));
        let d2 = m.apply_d2(&saw);
        assert!(d2.iter().zip(&saw).all(|(x, s)| (x + 16.0 * s).abs() < 1e-11));
    }

    fn two_front_mesh(n: usize, delta: f64) -> Mesh {
        let bumps = [
            Bump { center: 0.0, min_spacing: 0.2 * delta, width_s: 0.3 },
            Bump { center: PI, min_spacing: 0.2 * delta, width_s: 0.3 },
        ];
        Mesh::clustered(n, &bumps).unwrap()
    }

    #[test]
    fn clustered_map_is_monotone_and_periodic() {
        let m = two_front_mesh(401, 1e-5);
        assert!(m.theta.windows(2).all(|w| w[1] > w[0]));
        assert!(m.theta[0] == 0.0 && m.theta[400] < TWO_PI);
        assert!((m.bumps[1].center - PI).abs() < 1e-15);
        assert!((m.s_of_theta(PI) - m.s_of_theta(PI - 1e-9) > 0.0));
        assert!((m.s_of_theta(TWO_PI + 0.5) - m.s_of_theta(0.5) - TWO_PI).abs() < 1e-12);
        let dmin = m.theta.windows(2).map(|w| w[1] - w[0]).fold(f64::MAX, f64::min);
        assert!(dmin < 5e-6, "{dmin}");
        let total: f64 = m.weights().iter().sum();
        assert!((total - TWO_PI).abs() < 1e-12, "{}", total - TWO_PI);
        for &t in &[0.3, 2.0, PI + 1e-7, 5.0] {
            let s = m.s_of_theta(t);
            assert!((m.map.as_ref().unwrap().theta(s) - t).abs() < 1e-14);
        }
    }

    #[test]
    fn clustered_derivative_resolves_sharp_fronts() {
        let delta = 1e-5;
        let m = two_front_mesh(601, delta);
        let f = |t: f64| (t.sin() / delta).tanh();
        let df = |t: f64| t.cos() / delta / (t.sin() / delta).cosh().powi(2);
        let g: Vec<f64> = m.theta.iter().map(|&t| f(t)).collect();
        let dg: Vec<f64> = m.theta.iter().map(|&t| df(t)).collect();
        let e = max_err(&m.apply_d1(&g), &dg);
        assert!(e < 1e-7 / delta, "err {e}");
        let targets = [1e-5, -3e-6 + TWO_PI, 0.3, PI + 2e-5];
        let vals = m.interpolate(&g, &targets);
        for (t, v) in targets.iter().zip(vals) {
            assert!((v - f(*t)).abs() < 1e-8, "{t}: {v}");
        }
    }

    #[test]
    fn fractional_shift_translates_samples() {
        let n = 32;
        let h = TWO_PI / n as f64;
        let v: Vec<f64> = (0..n).map(|j| (j as f64 * h).sin() + 0.5 * (2.0 * j as f64 * h).cos()).collect();
        let sh = TrigInterpolant::new(&v).shifted(0.3);
        for (j, x) in sh.iter().enumerate() {
            let t = j as f64 * h + 0.3;
            assert!((x - (t.sin() + 0.5 * (2.0 * t).cos())).abs() < 1e-12);
        }
    }
}
