//! Airy function on the real line and the fold-passage dispersion kernels.
//!
//! `Ai` is evaluated from its Maclaurin series on [-5, 4], from the large-argument
//! asymptotic expansion for s >= 10, and by Taylor stepping of `Ai'' = s Ai`
//! from cached anchor values elsewhere. Stepping always moves away from the
//! region where `Ai` is recessive (towards decreasing s), so it is stable.
//!
//! The kernel `I0` and the fold functions built on it are evaluated with
//! composite Gauss-Legendre panels starting at the largest Airy zero `-Omega0`.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// Ai(0)
pub const AI0: f64 = 0.355_028_053_887_817_24;
/// -Ai'(0)
pub const AIP0_NEG: f64 = 0.258_819_403_792_806_8;

const MACLAURIN_LO: f64 = -5.0;
const MACLAURIN_HI: f64 = 4.0;
const ASYMPTOTIC_START: f64 = 10.0;

const PANEL_WIDTH: f64 = 0.5;
const PANEL_NODES: usize = 16;
const TABLE_END: f64 = 14.0;
const TAIL_EXPONENT: f64 = 40.0;

/// Taylor coefficients of the solution of `y'' = s y` about `s0`, summed at
/// offset `h`. Returns (y(s0+h), y'(s0+h)).
fn taylor_step(s0: f64, y0: f64, yp0: f64, h: f64) -> (f64, f64) {
    // (n+2)(n+1) b_{n+2} = s0 b_n + b_{n-1}
    let mut b_prev2 = 0.0; // b_{n-1}
    let mut b_prev = y0; // b_n, n = 0
    let mut b_cur = yp0; // b_{n+1}
    let mut val = y0 + yp0 * h;
    let mut der = yp0;
    let mut hp = h; // h^{n+1}
    let mut n = 0usize;
    loop {
        let nf = n as f64;
        let b_next = (s0 * b_prev + b_prev2) / ((nf + 2.0) * (nf + 1.0));
        // b_next is coefficient of t^{n+2}
        let term = b_next * hp * h;
        let dterm = (nf + 2.0) * b_next * hp;
        val += term;
        der += dterm;
        hp *= h;
        b_prev2 = b_prev;
        b_prev = b_cur;
        b_cur = b_next;
        n += 1;
        let scale = val.abs().max(der.abs()).max(1e-300);
        if n > 8 && term.abs() < 1e-18 * scale && dterm.abs() < 1e-18 * scale {
            // two consecutive small coefficients guard against the zero pattern
            let nf = n as f64;
            let next = (s0 * b_prev + b_prev2) / ((nf + 2.0) * (nf + 1.0));
            if (next * hp * h).abs() < 1e-18 * scale {
                break;
            }
        }
        if n > 400 {
            break;
        }
    }
    (val, der)
}

fn maclaurin(s: f64) -> (f64, f64) {
    taylor_step(0.0, AI0, -AIP0_NEG, s)
}

fn asymptotic(s: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * s.powf(1.5);
    let pref = (-zeta).exp() / (2.0 * std::f64::consts::PI.sqrt());
    let mut u = 1.0;
    let mut sum_u = 1.0;
    let mut sum_v = 1.0;
    let mut zk = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        let v = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * u;
        zk *= -1.0 / zeta;
        let tu = u * zk;
        let tv = v * zk;
        sum_u += tu;
        sum_v += tv;
        if tu.abs() < 1e-17 && tv.abs() < 1e-17 {
            break;
        }
    }
    let q = s.powf(0.25);
    (pref / q * sum_u, -pref * q * sum_v)
}

struct Anchors {
    // (s, Ai, Ai') at integer points 4..=10 and -5..=-12
    positive: Vec<(f64, f64, f64)>,
    negative: Vec<(f64, f64, f64)>,
}

fn anchors() -> &'static Anchors {
    static ANCHORS: OnceLock<Anchors> = OnceLock::new();
    ANCHORS.get_or_init(|| {
        let mut positive = Vec::new();
        let (mut a, mut ap) = asymptotic(ASYMPTOTIC_START);
        let mut s = ASYMPTOTIC_START;
        positive.push((s, a, ap));
        while s > MACLAURIN_HI + 0.5 {
            for _ in 0..4 {
                let (na, nap) = taylor_step(s, a, ap, -0.25);
                a = na;
                ap = nap;
                s -= 0.25;
            }
            positive.push((s, a, ap));
        }
        positive.reverse();
        let mut negative = Vec::new();
        let (mut a, mut ap) = maclaurin(MACLAURIN_LO);
        let mut s = MACLAURIN_LO;
        negative.push((s, a, ap));
        while s > -12.0 {
            for _ in 0..4 {
                let (na, nap) = taylor_step(s, a, ap, -0.25);
                a = na;
                ap = nap;
                s -= 0.25;
            }
            negative.push((s, a, ap));
        }
        Anchors { positive, negative }
    })
}

/// Airy function `Ai(s)` and its derivative.
pub fn airy_ai(s: f64) -> (f64, f64) {
    if (MACLAURIN_LO..=MACLAURIN_HI).contains(&s) {
        maclaurin(s)
    } else if s >= ASYMPTOTIC_START {
        asymptotic(s)
    } else if s > MACLAURIN_HI {
        // step down from the anchor just above s
        let a = anchors();
        let idx = a.positive.iter().position(|&(x, _, _)| x >= s).unwrap();
        let (x, y, yp) = a.positive[idx];
        taylor_step(x, y, yp, s - x)
    } else {
        let a = anchors();
        match a.negative.iter().position(|&(x, _, _)| x <= s) {
            Some(idx) => {
                // anchor just below s; step up at most one unit in the
                // oscillatory region where both solutions are bounded
                let (x, y, yp) = a.negative[idx.saturating_sub(1)];
                taylor_step(x, y, yp, s - x)
            }
            None => {
                let (mut x, mut y, mut yp) = *a.negative.last().unwrap();
                while x - s > 0.5 {
                    let (ny, nyp) = taylor_step(x, y, yp, -0.5);
                    y = ny;
                    yp = nyp;
                    x -= 0.5;
                }
                taylor_step(x, y, yp, s - x)
            }
        }
    }
}

/// Magnitude of the largest (negative) zero of `Ai`.
pub fn omega0() -> f64 {
    static OMEGA0: OnceLock<f64> = OnceLock::new();
    *OMEGA0.get_or_init(|| {
        let f = |x: f64| airy_ai(-x).0;
        let (mut lo, mut hi) = (2.0, 3.0);
        let mut flo = f(lo);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        // Newton polish: d/dx Ai(-x) = -Ai'(-x)
        let mut x = 0.5 * (lo + hi);
        for _ in 0..5 {
            let (a, ap) = airy_ai(-x);
            if ap == 0.0 {
                break;
            }
            x += a / ap;
        }
        x
    })
}

/// Cached quadrature data for the `I0` integrals.
#[derive(Debug, Clone)]
pub struct AiryTable {
    pub omega0: f64,
    /// Ai'(-Omega0)^2
    pub aip_at_zero_sq: f64,
    /// (s, weight, Ai(s)^2, Ai'(s)^2) on [-Omega0, TABLE_END]
    pub quadrature_nodes: Vec<(f64, f64, f64, f64)>,
}

impl AiryTable {
    pub fn get() -> &'static AiryTable {
        static TABLE: OnceLock<AiryTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let om = omega0();
            let (_, aip) = airy_ai(-om);
            let nodes = panel_nodes(-om, TABLE_END, PANEL_WIDTH);
            AiryTable { omega0: om, aip_at_zero_sq: aip * aip, quadrature_nodes: nodes }
        })
    }
}

fn panel_nodes(start: f64, end: f64, width: f64) -> Vec<(f64, f64, f64, f64)> {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (x, w) = RULE.get_or_init(|| gauss_legendre(PANEL_NODES));
    let panels = ((end - start) / width).ceil() as usize;
    let mut out = Vec::with_capacity(panels * PANEL_NODES);
    for p in 0..panels {
        let a = start + p as f64 * width;
        let b = (a + width).min(end);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in x.iter().zip(w) {
            let s = mid + half * xi;
            let (ai, aip) = airy_ai(s);
            out.push((s, wi * half, ai * ai, aip * aip));
        }
    }
    out
}

/// Upper truncation point of the `I0` integrals: the smallest s >= 0 with
/// (4/3) s^{3/2} - |Re z| s >= 40.
fn truncation(z: Complex64) -> f64 {
    let r = z.re.abs();
    let g = |s: f64| 4.0 / 3.0 * s.powf(1.5) - r * s - TAIL_EXPONENT;
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Which integral representation of `I0` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum I0Form {
    /// z / Ai'(-Omega0)^2 * int e^{-z(s+Omega0)} (Ai'^2 - s Ai^2) ds
    Definition,
    /// 1 - 1/Ai'(-Omega0)^2 * int e^{-z(s+Omega0)} Ai^2 ds
    Complement,
    /// 1/Ai'(-Omega0)^2 * int e^{-z(s+Omega0)} (s+Omega0) Ai^2 ds (the derivative)
    Derivative,
}

/// Evaluate one of the `I0` integral representations.
pub fn i0_form(z: Complex64, form: I0Form) -> Result<Complex64> {
    if z.re < -1.0 {
        return Err(Error::DomainError(z.re));
    }
    let table = AiryTable::get();
    let om = table.omega0;
    let mut s_max = truncation(z);
    if z.re > 0.0 {
        s_max = s_max.min(-om + (TAIL_EXPONENT + 5.0) / z.re);
    }
    let width = (10.0 / z.norm()).min(PANEL_WIDTH);
    let owned;
    let nodes: &[(f64, f64, f64, f64)] = if width >= PANEL_WIDTH && s_max <= TABLE_END {
        &table.quadrature_nodes
    } else {
        owned = panel_nodes(-om, s_max.max(-om + width), width);
        &owned
    };
    let mut acc = Complex64::new(0.0, 0.0);
    for &(s, w, ai2, aip2) in nodes {
        if s > s_max + PANEL_WIDTH {
            break;
        }
        let e = (-z * (s + om)).exp();
        let g = match form {
            I0Form::Definition => aip2 - s * ai2,
            I0Form::Complement => ai2,
            I0Form::Derivative => (s + om) * ai2,
        };
        acc += e * (w * g);
    }
    let acc = acc / table.aip_at_zero_sq;
    Ok(match form {
        I0Form::Definition => z * acc,
        I0Form::Complement => Complex64::new(1.0, 0.0) - acc,
        I0Form::Derivative => acc,
    })
}

/// The fold-passage kernel `I0(z)`.
pub fn i0(z: Complex64) -> Result<Complex64> {
    if z == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if z.re >= 0.0 {
        i0_form(z, I0Form::Complement)
    } else {
        i0_form(z, I0Form::Definition)
    }
}

/// `I0'(z)`.
pub fn i0_prime(z: Complex64) -> Result<Complex64> {
    i0_form(z, I0Form::Derivative)
}

/// Fold function `Upsilon(z) = I0(-z^2 / (theta c^3))`.
pub fn upsilon(z: Complex64, theta: f64, c: f64) -> Result<Complex64> {
    if theta <= 0.0 || c <= 0.0 {
        return Err(Error::InvalidInput(format!("theta = {theta}, c = {c} must be positive")));
    }
    i0(-z * z / (theta * c * c * c))
}
