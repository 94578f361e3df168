//! Reaction kinetics and the epsilon-independent singular-limit quantities.

use serde::{Deserialize, Serialize};

use crate::airy::omega0;
use crate::error::{Error, Result};
use crate::quad::integrate;

const QUAD_TOL: f64 = 1e-12;

/// Cubic `f(u) = u(u-a)(1-u)` and its derivative.
pub fn eval_cubic(u: f64, a: f64) -> (f64, f64) {
    (u * (u - a) * (1.0 - u), -3.0 * u * u + 2.0 * (1.0 + a) * u - a)
}

/// Upper bound on `gamma` for the classic model to sit in the oscillatory regime.
pub fn gamma_star(a: f64) -> f64 {
    9.0 / (1.0 + 2.0 * a - 2.0 * a * a + (1.0 - 2.0 * a) * (a * a - a + 1.0).sqrt())
}

/// Speed separating trigger waves (below) from phase waves (above).
pub fn c_star(a: f64) -> f64 {
    ((1.0 - a + a * a) / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Slope parameter of the modified model; ignored by the classic one.
    #[serde(default)]
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ClassicFhn,
    ModifiedFhn,
}

/// `u_t = u_xx + F(u, w)`, `w_t = eps G(u, w)` with `G = u - gamma w - a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionModel {
    pub kind: ModelKind,
    pub params: ModelParams,
}

impl ReactionModel {
    pub fn classic(a: f64, gamma: f64, epsilon: f64) -> Self {
        ReactionModel { kind: ModelKind::ClassicFhn, params: ModelParams { a, gamma, epsilon, r: 0.0 } }
    }

    pub fn modified(a: f64, gamma: f64, epsilon: f64, r: f64) -> Self {
        ReactionModel { kind: ModelKind::ModifiedFhn, params: ModelParams { a, gamma, epsilon, r } }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.params.epsilon = epsilon;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon
    }

    /// Checks parameter ranges. With `oscillatory` set, the classic model must
    /// additionally satisfy 0 < a < 1/2 and 0 < gamma < gamma_star(a).
    pub fn validate(&self, oscillatory: bool) -> Result<()> {
        let p = &self.params;
        if !(p.epsilon > 0.0) || !p.epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon = {} must be positive", p.epsilon)));
        }
        if !p.a.is_finite() || !p.gamma.is_finite() || !p.r.is_finite() {
            return Err(Error::InvalidInput("non-finite model parameter".into()));
        }
        if oscillatory && self.kind == ModelKind::ClassicFhn {
            if !(p.a > 0.0 && p.a < 0.5) {
                return Err(Error::RegimeViolation(format!("a = {} not in (0, 1/2)", p.a)));
            }
            let gs = gamma_star(p.a);
            if !(p.gamma > 0.0 && p.gamma < gs) {
                return Err(Error::RegimeViolation(format!("gamma = {} not in (0, {gs})", p.gamma)));
            }
        }
        Ok(())
    }

    // Rational part of the modified nonlinearity and its first two derivatives.
    fn modified_q(&self, u: f64) -> (f64, f64, f64) {
        let a = self.params.a;
        let p = u * (u - a) * (1.5 - u);
        let dp = -3.0 * u * u + 2.0 * (1.5 + a) * u - 1.5 * a;
        let ddp = -6.0 * u + 2.0 * (1.5 + a);
        let d = 0.4 + u - a;
        (p / d, dp / d - p / (d * d), ddp / d - 2.0 * dp / (d * d) + 2.0 * p / (d * d * d))
    }

    /// `F(u, w)`.
    pub fn f(&self, u: f64, w: f64) -> f64 {
        match self.kind {
            ModelKind::ClassicFhn => eval_cubic(u, self.params.a).0 - w,
            ModelKind::ModifiedFhn => {
                let p = &self.params;
                self.modified_q(u).0 - w * (1.25 - p.r * (u - p.a))
            }
        }
    }

    pub fn f_u(&self, u: f64, w: f64) -> f64 {
        match self.kind {
            ModelKind::ClassicFhn => eval_cubic(u, self.params.a).1,
            ModelKind::ModifiedFhn => self.modified_q(u).1 + w * self.params.r,
        }
    }

    pub fn f_w(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::ClassicFhn => -1.0,
            ModelKind::ModifiedFhn => -(1.25 - self.params.r * (u - self.params.a)),
        }
    }

    pub fn f_uu(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::ClassicFhn => -6.0 * u + 2.0 * (1.0 + self.params.a),
            ModelKind::ModifiedFhn => self.modified_q(u).2,
        }
    }

    /// `G(u, w) = u - gamma w - a`.
    pub fn g(&self, u: f64, w: f64) -> f64 {
        u - self.params.gamma * w - self.params.a
    }

    pub fn g_u(&self) -> f64 {
        1.0
    }

    pub fn g_w(&self) -> f64 {
        -self.params.gamma
    }

    /// The u-nullcline `w = h(u)` solving `F(u, h(u)) = 0`.
    pub fn nullcline(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::ClassicFhn => eval_cubic(u, self.params.a).0,
            ModelKind::ModifiedFhn => self.modified_q(u).0 / (-self.f_w(u)),
        }
    }

    /// `h'(u) = -F_u / F_w` on the nullcline.
    pub fn nullcline_du(&self, u: f64) -> f64 {
        let w = self.nullcline(u);
        -self.f_u(u, w) / self.f_w(u)
    }

    /// `G` restricted to the nullcline.
    pub fn g_on_nullcline(&self, u: f64) -> f64 {
        self.g(u, self.nullcline(u))
    }

    /// Open u-interval on which the nullcline is finite.
    fn nullcline_domain(&self) -> (f64, f64) {
        match self.kind {
            ModelKind::ClassicFhn => (-10.0, 10.0),
            ModelKind::ModifiedFhn => {
                let p = &self.params;
                let hi = if p.r > 0.0 { p.a + 1.25 / p.r } else { 10.0 };
                (p.a - 0.4, hi)
            }
        }
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fold and jump points of the nullcline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldGeometry {
    pub u1: f64,
    pub ubar1: f64,
    pub u2: f64,
    pub ubar2: f64,
}

/// Locates the lower/upper folds and the opposite-branch jump points.
pub fn fold_geometry(model: &ReactionModel) -> Result<FoldGeometry> {
    match model.kind {
        ModelKind::ClassicFhn => {
            let a = model.params.a;
            let s = (1.0 - a + a * a).sqrt();
            Ok(FoldGeometry {
                u1: (1.0 + a - s) / 3.0,
                ubar1: (1.0 + a + s) / 3.0,
                u2: (1.0 + a + 2.0 * s) / 3.0,
                ubar2: (1.0 + a - 2.0 * s) / 3.0,
            })
        }
        ModelKind::ModifiedFhn => {
            let (lo, hi) = model.nullcline_domain();
            let margin = 1e-6 * (hi - lo);
            let (lo, hi) = (lo + margin, hi - margin);
            let n = 4000;
            let du = (hi - lo) / n as f64;
            let hp = |u: f64| model.nullcline_du(u);
            let mut folds = Vec::new();
            let mut prev = hp(lo);
            for k in 1..=n {
                let u = lo + k as f64 * du;
                let cur = hp(u);
                if prev.signum() != cur.signum() {
                    folds.push(bisect(hp, u - du, u));
                }
                prev = cur;
            }
            if folds.len() != 2 {
                return Err(Error::RegimeViolation(format!(
                    "expected two folds of the nullcline, found {}",
                    folds.len()
                )));
            }
            let (u1, ubar1) = (folds[0], folds[1]);
            let (w_lf, w_uf) = (model.nullcline(u1), model.nullcline(ubar1));
            if w_lf >= w_uf {
                return Err(Error::RegimeViolation("lower fold lies above the upper fold".into()));
            }
            let right = |u: f64| model.nullcline(u) - w_lf;
            let left = |u: f64| model.nullcline(u) - w_uf;
            if right(ubar1) * right(hi) > 0.0 || left(lo) * left(u1) > 0.0 {
                return Err(Error::RegimeViolation("jump points not bracketed".into()));
            }
            Ok(FoldGeometry { u1, ubar1, u2: bisect(right, ubar1, hi), ubar2: bisect(left, lo, u1) })
        }
    }
}

/// Epsilon-independent constants of a model at a given wave speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularLimit {
    pub kind: ModelKind,
    pub a: f64,
    pub gamma: f64,
    pub c: f64,
    pub u1: f64,
    pub ubar1: f64,
    pub u2: f64,
    pub ubar2: f64,
    pub w_lf: f64,
    pub w_uf: f64,
    /// Only defined for the classic model.
    pub c_star: Option<f64>,
    pub gamma_star: Option<f64>,
    pub theta_lf: f64,
    pub theta_uf: f64,
    pub l_l: f64,
    pub l_r: f64,
    pub l0: f64,
    pub kappa: f64,
    /// `(u1 - u2) / G(u2, w_lf)`, the lower-fold scattering amplitude.
    pub jump_lf: f64,
    /// `(ubar1 - ubar2) / G(ubar2, w_uf)`.
    pub jump_uf: f64,
}

fn fold_theta(model: &ReactionModel, u: f64, c: f64) -> f64 {
    let w = model.nullcline(u);
    (0.5 * model.f_uu(u).abs() * model.f_w(u).abs() * model.g(u, w).abs()).cbrt() / c
}

/// Slow-branch traversal length between `from` (a fold) and `to` (a jump point).
fn branch_length(model: &ReactionModel, c: f64, from: f64, to: f64) -> Result<f64> {
    integrate(|u| -c * model.nullcline_du(u) / model.g_on_nullcline(u), from, to, QUAD_TOL)
}

/// Computes fold/jump points, fold constants, branch lengths and the quadratic
/// dispersion coefficient at speed `c`.
///
/// For the modified model the fold constants use the local quadratic normal
/// form `(|F_uu|/2 |F_w| |G|)^{1/3} / c`, which reduces to the classic
/// expressions; whether the dispersion theory applies there is heuristic.
pub fn singular_limit(model: &ReactionModel, c: f64) -> Result<SingularLimit> {
    model.validate(true)?;
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("wave speed c = {c} must be positive")));
    }
    let geo = fold_geometry(model)?;
    let (w_lf, w_uf) = (model.nullcline(geo.u1), model.nullcline(geo.ubar1));
    let g_u1 = model.g(geo.u1, w_lf);
    let g_ub1 = model.g(geo.ubar1, w_uf);
    if !(g_u1 < 0.0 && g_ub1 > 0.0) {
        return Err(Error::RegimeViolation(format!(
            "slow flow does not carry the orbit through both folds (G(u1) = {g_u1}, G(ubar1) = {g_ub1})"
        )));
    }
    let theta_lf = fold_theta(model, geo.u1, c);
    let theta_uf = fold_theta(model, geo.ubar1, c);
    let l_l = branch_length(model, c, geo.u1, geo.ubar2)?;
    let l_r = branch_length(model, c, geo.ubar1, geo.u2)?;
    let jump_lf = (geo.u1 - geo.u2) / model.g(geo.u2, w_lf);
    let jump_uf = (geo.ubar1 - geo.ubar2) / model.g(geo.ubar2, w_uf);
    let kappa = -2.0 * omega0() / (3.0 * c.powi(3)) * (jump_lf / theta_lf + jump_uf / theta_uf);
    let classic = model.kind == ModelKind::ClassicFhn;
    let a = model.params.a;
    Ok(SingularLimit {
        kind: model.kind,
        a,
        gamma: model.params.gamma,
        c,
        u1: geo.u1,
        ubar1: geo.ubar1,
        u2: geo.u2,
        ubar2: geo.ubar2,
        w_lf,
        w_uf,
        c_star: classic.then(|| c_star(a)),
        gamma_star: classic.then(|| gamma_star(a)),
        theta_lf,
        theta_uf,
        l_l,
        l_r,
        l0: l_l + l_r,
        kappa,
        jump_lf,
        jump_uf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Left,
    Right,
}

/// Reduced slow orbit sampled on a uniform grid in the slow variable `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowOrbit {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

/// Leading-order fold departure `u(y) - u_fold` for small `y`.
pub fn fold_expansion(model: &ReactionModel, c: f64, u_fold: f64, y: f64) -> f64 {
    let w = model.nullcline(u_fold);
    let h2 = -model.f_uu(u_fold) / model.f_w(u_fold);
    let g = model.g(u_fold, w);
    let mag = (-2.0 * g * y / (c * h2)).abs().sqrt();
    // departure points away from the fold, towards the branch interior
    if h2 > 0.0 {
        -mag
    } else {
        mag
    }
}

/// Solves `c h'(u) u_y = -G(u, h(u))` along a slow branch, from its fold at
/// `y = 0` to its jump point at `y = L`, on `n` uniformly spaced `y` values.
pub fn slow_orbit(model: &ReactionModel, c: f64, branch: Branch, n: usize) -> Result<SlowOrbit> {
    if n < 2 {
        return Err(Error::InvalidInput("slow orbit needs at least two samples".into()));
    }
    let sl = singular_limit(model, c)?;
    let (start, end, total) = match branch {
        Branch::Left => (sl.u1, sl.ubar2, sl.l_l),
        Branch::Right => (sl.ubar1, sl.u2, sl.l_r),
    };
    let dydu = |u: f64| -c * model.nullcline_du(u) / model.g_on_nullcline(u);
    let y_cut = 1e-6 * total;
    let mut y = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let (mut u_prev, mut y_prev) = (start, 0.0);
    for j in 0..n {
        let yj = total * j as f64 / (n - 1) as f64;
        let uj = if j == 0 {
            start
        } else if j == n - 1 {
            end
        } else if yj <= y_cut {
            start + fold_expansion(model, c, start, yj)
        } else {
            if u_prev == start {
                // leave the fold through the expansion to avoid dy/du = 0
                u_prev = start + fold_expansion(model, c, start, y_cut);
                y_prev = integrate(dydu, start, u_prev, QUAD_TOL)?;
            }
            let target = yj - y_prev;
            let phi = |x: f64| integrate(dydu, u_prev, x, QUAD_TOL).map(|v| v - target);
            // safeguarded Newton between u_prev and the branch end
            let (mut lo, mut hi) = (u_prev, end);
            let mut x = u_prev + (end - u_prev) * (target / (total - y_prev)).clamp(0.0, 1.0);
            for _ in 0..100 {
                let r = phi(x)?;
                if r.abs() < 1e-14 * total {
                    break;
                }
                if r < 0.0 {
                    lo = x;
                } else {
                    hi = x;
                }
                let d = dydu(x);
                let mut nx = x - r / d;
                let inside = (nx - lo) * (nx - hi) < 0.0;
                if !inside || !nx.is_finite() {
                    nx = 0.5 * (lo + hi);
                }
                if (nx - x).abs() < 1e-15 * (1.0 + x.abs()) {
                    x = nx;
                    break;
                }
                x = nx;
            }
            y_prev += phi(x)? + target;
            u_prev = x;
            x
        };
        y.push(yj);
        u.push(uj);
    }
    let w = u.iter().map(|&x| model.nullcline(x)).collect();
    Ok(SlowOrbit { y, u, w })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Front,
    Back,
}

/// Heteroclinic layer solution of `u'' + c u' + F(u, w_level) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerProfile {
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub kind: LayerKind,
    pub w_level: f64,
}

const LAYER_OFFSET: f64 = 1e-7;

/// Shoots the front (from `(u2, 0)` to the lower fold) or back (from
/// `(ubar2, 0)` to the upper fold) out of the saddle's unstable direction.
/// `xi = 0` is placed where `u` crosses the midpoint of its two end states.
pub fn layer_profile(
    model: &ReactionModel,
    c: f64,
    kind: LayerKind,
    xi_span: (f64, f64),
    n: usize,
) -> Result<LayerProfile> {
    layer_profile_with_step(model, c, kind, xi_span, n, 0.005)
}

pub fn layer_profile_with_step(
    model: &ReactionModel,
    c: f64,
    kind: LayerKind,
    xi_span: (f64, f64),
    n: usize,
    h: f64,
) -> Result<LayerProfile> {
    if n < 2 || !(xi_span.1 > xi_span.0) || !(xi_span.1 > 0.0) {
        return Err(Error::InvalidInput("layer grid must have n >= 2 and a span containing positive xi".into()));
    }
    let geo = fold_geometry(model)?;
    let (saddle, fold) = match kind {
        LayerKind::Front => (geo.u2, geo.u1),
        LayerKind::Back => (geo.ubar2, geo.ubar1),
    };
    let w = model.nullcline(fold);
    let dir = (fold - saddle).signum();
    let fu = model.f_u(saddle, w);
    if fu >= 0.0 {
        return Err(Error::ShootingFailure("jump point is not a saddle of the layer problem".into()));
    }
    let mu = 0.5 * (-c + (c * c - 4.0 * fu).sqrt());
    let rhs = |u: f64, v: f64| (v, -c * v - model.f(u, w));
    let mid = 0.5 * (saddle + fold);
    // (xi, u, v) samples with xi relative to the launch point
    let mut traj = vec![(0.0, saddle + dir * LAYER_OFFSET, dir * mu * LAYER_OFFSET)];
    let mut xi_mid = None;
    let max_steps = 20_000_000usize;
    let mut steps = 0usize;
    loop {
        let &(x, u, v) = traj.last().unwrap();
        if let Some(m) = xi_mid {
            if x - m >= xi_span.1 {
                break;
            }
        }
        let (k1u, k1v) = rhs(u, v);
        let (k2u, k2v) = rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v);
        let (k3u, k3v) = rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v);
        let (k4u, k4v) = rhs(u + h * k3u, v + h * k3v);
        let nu = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        let nv = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if nv * dir < 0.0 {
            return Err(Error::ShootingFailure(format!("u' changed sign at u = {nu}; no monotone connection at c = {c}")));
        }
        if (nu - fold) * dir > 0.0 {
            return Err(Error::ShootingFailure(format!("u overshot the fold at c = {c}")));
        }
        if xi_mid.is_none() && (nu - mid) * dir >= 0.0 {
            // linear interpolation of the midpoint crossing
            let t = (mid - u) / (nu - u);
            xi_mid = Some(x + t * h);
        }
        traj.push((x + h, nu, nv));
        steps += 1;
        if steps > max_steps {
            return Err(Error::ShootingFailure("iteration budget exhausted".into()));
        }
    }
    let m = xi_mid.unwrap();
    let x0 = traj[0].0 - m;
    let mut xi = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for j in 0..n {
        let x = xi_span.0 + (xi_span.1 - xi_span.0) * j as f64 / (n - 1) as f64;
        let (u, v) = if x <= x0 {
            // linear unstable manifold of the saddle
            let e = dir * LAYER_OFFSET * (mu * (x - x0)).exp();
            (saddle + e, mu * e)
        } else {
            let s = (x - x0) / h;
            let i = (s.floor() as usize).min(traj.len() - 2);
            let t = s - i as f64;
            let (_, u0, v0) = traj[i];
            let (_, u1, v1) = traj[i + 1];
            let a0 = rhs(u0, v0).1;
            let a1 = rhs(u1, v1).1;
            (hermite(u0, v0, u1, v1, h, t), hermite(v0, a0, v1, a1, h, t))
        };
        xi.push(x);
        us.push(u);
        vs.push(v);
    }
    Ok(LayerProfile { xi, u: us, v: vs, kind, w_level: w })
}

fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classic() -> ReactionModel {
        ReactionModel::classic(0.2, 1.0, 1e-3)
    }

    #[test]
    fn cubic_values() {
        assert_eq!(eval_cubic(0.0, 0.2), (0.0, -0.2));
        let (f, fp) = eval_cubic(0.2, 0.2);
        assert!(f.abs() < 1e-16 && (fp - 0.16).abs() < 1e-15);
        let (f, fp) = eval_cubic(0.094_494_953_669_610_67, 0.2);
        assert!((f + 0.009_027_608_648_339_342).abs() < 1e-15 && fp.abs() < 1e-14);
    }

    #[test]
    fn partials_match_finite_differences() {
        let models = [classic(), ReactionModel::modified(0.25, 0.01, 0.002, 0.998)];
        let h = 1e-5;
        for m in models {
            for i in 0..12 {
                let u = -0.1 + 0.13 * i as f64;
                let w = -0.05 + 0.1 * i as f64;
                let fu = (m.f(u + h, w) - m.f(u - h, w)) / (2.0 * h);
                let fw = (m.f(u, w + h) - m.f(u, w - h)) / (2.0 * h);
                let fuu = (m.f_u(u + h, w) - m.f_u(u - h, w)) / (2.0 * h);
                let gw = (m.g(u, w + h) - m.g(u, w - h)) / (2.0 * h);
                let gu = (m.g(u + h, w) - m.g(u - h, w)) / (2.0 * h);
                let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-3);
                assert!(rel(fu, m.f_u(u, w)) < 1e-6, "F_u at {u}");
                assert!(rel(fw, m.f_w(u)) < 1e-6);
                assert!(rel(fuu, m.f_uu(u)) < 1e-6);
                assert!(rel(gu, m.g_u()) < 1e-6 && rel(gw, m.g_w()) < 1e-6);
            }
        }
    }

    #[test]
    fn regime_bounds() {
        assert!((gamma_star(0.2) - 4.813_068_228_783_12).abs() < 1e-12);
        assert!((c_star(0.2) - 0.648_074_069_840_786).abs() < 1e-14);
        assert!(matches!(ReactionModel::classic(0.6, 1.0, 1e-3).validate(true), Err(Error::RegimeViolation(_))));
        assert!(matches!(ReactionModel::classic(0.2, 5.0, 1e-3).validate(true), Err(Error::RegimeViolation(_))));
        assert!(ReactionModel::classic(0.2, 5.0, 1e-3).validate(false).is_ok());
        assert!(matches!(ReactionModel::classic(0.2, 1.0, 0.0).validate(false), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn singular_limit_reference_values() {
        let sl = singular_limit(&classic(), 2.0).unwrap();
        assert!((sl.u1 - 0.094_494_953_669_610_67).abs() < 1e-14);
        assert!((sl.ubar1 - 0.705_505_046_330_389_3).abs() < 1e-14);
        assert!((sl.u2 - 1.011_010_092_660_778_7).abs() < 1e-14);
        assert!((sl.ubar2 + 0.211_010_092_660_778_67).abs() < 1e-14);
        assert!((sl.l_l - 0.699_162_211_487_554_5).abs() < 1e-10);
        assert!((sl.l_r - 0.350_783_769_988_974_9).abs() < 1e-10);
        assert!((sl.theta_lf - 0.222_753_808_928_639_53).abs() < 1e-12);
        assert!((sl.theta_uf - 0.357_994_128_019_483_8).abs() < 1e-12);
        assert!((sl.kappa - 1.944_247_773_093_088_4).abs() < 1e-10);
    }

    #[test]
    fn kappa_matches_closed_form() {
        let m = ReactionModel::classic(0.3, 2.0, 1e-3);
        let sl = singular_limit(&m, 1.5).unwrap();
        let (a, g) = (0.3, 2.0);
        let gg = |u: f64| u - g * eval_cubic(u, a).0 - a;
        let s = 1.0 - a + a * a;
        let closed = -(2.0 * omega0() * s.cbrt() / (3.0 * 1.5 * 1.5))
            * (1.0 / (gg(sl.u1).cbrt() * gg(sl.u2)) + 1.0 / (gg(sl.ubar1).cbrt() * gg(sl.ubar2)));
        assert!((sl.kappa - closed).abs() < 1e-12 * closed);
        let lf = -s.powf(1.0 / 6.0) * gg(sl.u1).cbrt() / 1.5;
        assert!((sl.theta_lf - lf).abs() < 1e-13);
    }

    #[test]
    fn modified_model_folds() {
        let m = ReactionModel::modified(0.25, 0.01, 0.002, 0.998);
        let geo = fold_geometry(&m).unwrap();
        assert!((geo.u1 - 0.094_84).abs() < 1e-4);
        assert!((geo.ubar1 - 1.448_41).abs() < 1e-4);
        assert!((m.nullcline(geo.u1) + 0.060_12).abs() < 1e-4);
        assert!((m.nullcline(geo.ubar1) - 1.037_74).abs() < 1e-4);
        assert!(m.nullcline_du(geo.u1).abs() < 1e-10);
        let sl = singular_limit(&m, 3.0).unwrap();
        assert!(sl.theta_uf < sl.theta_lf);
        assert!(sl.l_l > 0.0 && sl.l_r > 0.0 && sl.c_star.is_none());
    }

    #[test]
    fn slow_orbit_endpoints_and_fold_expansion() {
        let m = classic();
        let sl = singular_limit(&m, 2.0).unwrap();
        let orb = slow_orbit(&m, 2.0, Branch::Left, 201).unwrap();
        assert_eq!(orb.u[0], sl.u1);
        assert!((orb.u[200] - sl.ubar2).abs() < 1e-8);
        assert!(orb.u.windows(2).all(|p| p[1] < p[0]));
        let right = slow_orbit(&m, 2.0, Branch::Right, 101).unwrap();
        assert!(right.u.windows(2).all(|p| p[1] > p[0]));
        // interior samples satisfy y(u) = int dy/du
        let dydu = |u: f64| -2.0 * m.nullcline_du(u) / m.g_on_nullcline(u);
        for j in [1usize, 50, 150] {
            let y = integrate(dydu, sl.u1, orb.u[j], 1e-13).unwrap();
            assert!((y - orb.y[j]).abs() < 1e-9, "y mismatch at {j}");
        }
        // departure from the fold is sqrt-like with the stated coefficient
        for y in [1e-6, 1e-8] {
            let u = sl.u1 + fold_expansion(&m, 2.0, sl.u1, y);
            let exact = integrate(dydu, sl.u1, u, 1e-16).unwrap();
            assert!((exact - y).abs() / y < 50.0 * y.sqrt());
        }
    }

    #[test]
    fn front_layer_is_monotone_with_algebraic_tail() {
        let m = classic();
        let sl = singular_limit(&m, 2.0).unwrap();
        let p = layer_profile(&m, 2.0, LayerKind::Front, (-60.0, 400.0), 4601).unwrap();
        assert!(p.u.windows(2).all(|w| w[1] <= w[0]));
        assert!((p.u[0] - sl.u2).abs() < 1e-6);
        let n = p.u.len();
        let s = (1.0 - 0.2 + 0.04f64).sqrt();
        let tail = (p.u[n - 1] - sl.u1) * p.xi[n - 1];
        assert!((tail - 2.0 / s).abs() < 0.05 * 2.0 / s, "tail {tail}");
        let back = layer_profile(&m, 2.0, LayerKind::Back, (-20.0, 100.0), 1201).unwrap();
        assert!(back.u.windows(2).all(|w| w[1] >= w[0]));
        // step refinement
        let fine = layer_profile_with_step(&m, 2.0, LayerKind::Front, (-60.0, 400.0), 4601, 0.0025).unwrap();
        let diff = p.u.iter().zip(&fine.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn slow_trigger_front_fails_to_connect_monotonically() {
        let m = classic();
        let r = layer_profile(&m, 0.4, LayerKind::Front, (-20.0, 100.0), 100);
        assert!(matches!(r, Err(Error::ShootingFailure(_))));
    }
}
