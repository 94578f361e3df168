//! Periodic traveling waves of the full system by Newton iteration on the
//! rescaled profile equations
//!
//! ```text
//! 0 = ell^2 u'' + F(u, w) + omega u'
//! 0 = eps G(u, w) + omega w'
//! ```
//!
//! on theta in [0, 2pi), with `theta = ell xi`, `ell = 2pi / L` and
//! `omega = ell c`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dns;
use crate::error::{Error, Result};
use crate::model::{c_star, fold_geometry, ModelKind, ReactionModel};
use crate::spectral::{fft_derivative, Bump, Mesh, TrigInterpolant};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Default collocation size (odd, see [`Mesh::clustered`]).
pub const DEFAULT_N: usize = 1025;

/// Grid spacing in the traveling-wave coordinate at the centre of each layer.
pub const LAYER_SPACING_XI: f64 = 0.15;

/// Width of the refinement zones in the computational variable.
pub const LAYER_WIDTH_S: f64 = 0.35;

/// Starting guess for [`newton_wavetrain`].
#[derive(Debug, Clone)]
pub struct Seed {
    pub mesh: Mesh,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub ell: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolveMode {
    /// Fix the speed and solve for the wavenumber.
    FixC(f64),
    /// Fix the wavenumber and solve for the frequency.
    FixEll(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop once the scaled residual falls below this.
    pub tol: f64,
    /// Residual below which a stalled iteration is accepted.
    pub accept: f64,
    pub max_iter: usize,
    pub min_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-11, accept: 1e-9, max_iter: 60, min_damping: 1.0 / 1024.0 }
    }
}

/// A converged wave train.
#[derive(Debug, Clone)]
pub struct WaveTrain {
    pub mesh: Mesh,
    pub u_star: Vec<f64>,
    pub w_star: Vec<f64>,
    /// Reference profile of the phase condition.
    pub u_ref: Vec<f64>,
    pub ell: f64,
    pub omega: f64,
    pub c: f64,
    pub l_eps: f64,
    pub model: ReactionModel,
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveKind {
    Phase,
    Trigger,
}

impl WaveTrain {
    pub fn theta_grid(&self) -> &[f64] {
        &self.mesh.theta
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }

    pub fn epsilon(&self) -> f64 {
        self.model.epsilon()
    }

    pub fn amplitude(&self) -> f64 {
        let max = self.u_star.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.u_star.iter().cloned().fold(f64::MAX, f64::min);
        max - min
    }

    /// Spectral tail of the `u` profile in the computational variable; small
    /// values mean the grid resolves the layers.
    pub fn resolution(&self) -> f64 {
        TrigInterpolant::new(&self.u_star).tail_ratio()
    }

    /// Phase waves travel faster than the transition speed, trigger waves
    /// slower. Only meaningful for the classic model.
    pub fn kind(&self) -> Option<WaveKind> {
        match self.model.kind {
            ModelKind::ClassicFhn => {
                Some(if self.c > c_star(self.model.params.a) { WaveKind::Phase } else { WaveKind::Trigger })
            }
            ModelKind::ModifiedFhn => None,
        }
    }

    /// Phase condition value against the stored reference.
    pub fn phase_condition(&self) -> f64 {
        let dref = self.mesh.apply_d1(&self.u_ref);
        let wts = self.mesh.weights();
        (0..self.n()).map(|j| wts[j] * dref[j] * (self.u_star[j] - self.u_ref[j])).sum()
    }

    /// Residual max-norm of the profile equations.
    pub fn residual(&self) -> f64 {
        let r = residual(&self.model, &self.mesh, &self.u_star, &self.w_star, self.ell, self.omega);
        unscaled_norm(&r, self.epsilon())
    }

    /// Profile values at arbitrary theta by spectral interpolation.
    pub fn sample(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.mesh.interpolate(&self.u_star, theta), self.mesh.interpolate(&self.w_star, theta))
    }

    /// Profile as CSV with columns `theta,xi,u,w` on the collocation grid.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta,xi,u,w\n");
        for ((t, u), w) in self.mesh.theta.iter().zip(&self.u_star).zip(&self.w_star) {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", t, t / self.ell, u, w));
        }
        s
    }

    /// Scalar data describing the train, for a header next to [`Self::to_csv`].
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "c": self.c,
            "l_eps": self.l_eps,
            "ell": self.ell,
            "omega": self.omega,
            "n": self.n(),
            "amplitude": self.amplitude(),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "resolution": self.resolution(),
        })
    }

    /// Positions (theta) of the steepest descent and ascent of `u`.
    pub fn layer_positions(&self) -> (f64, f64) {
        layer_positions(&self.mesh, &self.u_star)
    }

    /// Re-solves on a fresh grid adapted to the current layers; the front is
    /// moved to theta = 0.
    pub fn remeshed(&self, n: usize) -> Result<WaveTrain> {
        let seed = self.adapted_seed(n, self.model.epsilon(), self.ell)?;
        newton_wavetrain(&seed, &self.model, SolveMode::FixC(self.c), &NewtonOptions::default())
    }

    /// Seed on a grid adapted to the current layers, with refinement sized for
    /// the wavenumber `ell_target`.
    pub fn adapted_seed(&self, n: usize, _epsilon: f64, ell_target: f64) -> Result<Seed> {
        let (front, back) = self.layer_positions();
        let mesh = layer_mesh(n, front, back, ell_target)?;
        let shifted: Vec<f64> = mesh.theta.iter().map(|t| t + front).collect();
        let (u, w) = self.sample(&shifted);
        Ok(Seed { mesh, u, w, ell: ell_target, omega: ell_target * self.c })
    }
}

/// Clustered grid with refinement at the given front and back positions.
pub fn layer_mesh(n: usize, front: f64, back: f64, ell: f64) -> Result<Mesh> {
    let h = LAYER_SPACING_XI * ell;
    Mesh::clustered(
        n,
        &[
            Bump { center: front, min_spacing: h, width_s: LAYER_WIDTH_S },
            Bump { center: back, min_spacing: h, width_s: LAYER_WIDTH_S },
        ],
    )
}

fn layer_positions(mesh: &Mesh, u: &[f64]) -> (f64, f64) {
    layer_positions_from(&mesh.theta, &mesh.apply_d1(u))
}

fn layer_positions_from(theta: &[f64], du: &[f64]) -> (f64, f64) {
    let n = du.len();
    let refine = |j: usize| -> f64 {
        let (a, b, c) = (du[(j + n - 1) % n], du[j], du[(j + 1) % n]);
        let (ta, tb, tc) = {
            let t = theta;
            let prev = if j == 0 { t[n - 1] - TWO_PI } else { t[j - 1] };
            let next = if j == n - 1 { t[0] + TWO_PI } else { t[j + 1] };
            (prev, t[j], next)
        };
        // vertex of the parabola through the three samples
        let d1 = (b - a) / (tb - ta);
        let d2 = (c - b) / (tc - tb);
        let curv = (d2 - d1) / (tc - ta);
        if curv == 0.0 {
            return tb;
        }
        let x = 0.5 * (ta + tb) - d1 / (2.0 * curv);
        if x > ta && x < tc {
            x.rem_euclid(TWO_PI)
        } else {
            tb
        }
    };
    let jf = (0..n).min_by(|&a, &b| du[a].total_cmp(&du[b])).unwrap();
    let jb = (0..n).max_by(|&a, &b| du[a].total_cmp(&du[b])).unwrap();
    (refine(jf), refine(jb))
}

// Residual with the w-equation divided by eps; the last entry (phase
// condition) is appended by the caller.
fn residual(model: &ReactionModel, mesh: &Mesh, u: &[f64], w: &[f64], ell: f64, omega: f64) -> Vec<f64> {
    let n = u.len();
    let eps = model.epsilon();
    let du = mesh.apply_d1(u);
    let ddu = mesh.apply_d2(u);
    let dw = mesh.apply_d1(w);
    let mut r = vec![0.0; 2 * n];
    for j in 0..n {
        r[j] = ell * ell * ddu[j] + model.f(u[j], w[j]) + omega * du[j];
        r[n + j] = model.g(u[j], w[j]) + omega / eps * dw[j];
    }
    r
}

fn unscaled_norm(r: &[f64], eps: f64) -> f64 {
    let n = r.len() / 2;
    let ru = r[..n].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let rw = r[n..2 * n].iter().fold(0.0f64, |m, x| m.max(x.abs())) * eps;
    ru.max(rw)
}

fn scaled_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct System<'a> {
    model: &'a ReactionModel,
    mesh: &'a Mesh,
    mode: SolveMode,
    phase_row: Vec<f64>,
    u_ref: Vec<f64>,
}

impl System<'_> {
    fn unpack(&self, p: f64) -> (f64, f64) {
        match self.mode {
            SolveMode::FixC(c) => (p, p * c),
            SolveMode::FixEll(ell) => (ell, p),
        }
    }

    fn full_residual(&self, u: &[f64], w: &[f64], p: f64) -> Vec<f64> {
        let (ell, omega) = self.unpack(p);
        let mut r = residual(self.model, self.mesh, u, w, ell, omega);
        r.push((0..u.len()).map(|j| self.phase_row[j] * (u[j] - self.u_ref[j])).sum());
        r
    }

    fn jacobian(&self, u: &[f64], w: &[f64], p: f64) -> Mat<f64> {
        let n = u.len();
        let (ell, omega) = self.unpack(p);
        let eps = self.model.epsilon();
        let d1 = self.mesh.d1();
        let d2 = self.mesh.d2();
        let mut jac = Mat::<f64>::zeros(2 * n + 1, 2 * n + 1);
        for j in 0..n {
            for i in 0..n {
                jac[(i, j)] = ell * ell * d2[(i, j)] + omega * d1[(i, j)];
                jac[(n + i, n + j)] = omega / eps * d1[(i, j)];
            }
        }
        for i in 0..n {
            jac[(i, i)] += self.model.f_u(u[i], w[i]);
            jac[(i, n + i)] = self.model.f_w(u[i]);
            jac[(n + i, i)] = self.model.g_u();
            jac[(n + i, n + i)] += self.model.g_w();
        }
        let du = self.mesh.apply_d1(u);
        let dw = self.mesh.apply_d1(w);
        match self.mode {
            SolveMode::FixC(c) => {
                let ddu = self.mesh.apply_d2(u);
                for i in 0..n {
                    jac[(i, 2 * n)] = 2.0 * ell * ddu[i] + c * du[i];
                    jac[(n + i, 2 * n)] = c / eps * dw[i];
                }
            }
            SolveMode::FixEll(_) => {
                for i in 0..n {
                    jac[(i, 2 * n)] = du[i];
                    jac[(n + i, 2 * n)] = dw[i] / eps;
                }
            }
        }
        for j in 0..n {
            jac[(2 * n, j)] = self.phase_row[j];
        }
        jac
    }
}

/// Newton iteration for a wave train from `seed`. In `FixC` mode the unknown
/// scalar is `ell`, in `FixEll` mode it is `omega`. The phase condition pins
/// the translate closest to the seed profile.
pub fn newton_wavetrain(seed: &Seed, model: &ReactionModel, mode: SolveMode, opts: &NewtonOptions) -> Result<WaveTrain> {
    model.validate(false)?;
    let mesh = &seed.mesh;
    let n = mesh.n();
    if seed.u.len() != n || seed.w.len() != n {
        return Err(Error::InvalidInput("seed does not match its grid".into()));
    }
    let dref = mesh.apply_d1(&seed.u);
    let wts = mesh.weights();
    let mut phase_row: Vec<f64> = (0..n).map(|j| wts[j] * dref[j]).collect();
    let scale = phase_row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(Error::JacobianSingular("seed profile is flat; phase condition degenerate".into()));
    }
    phase_row.iter_mut().for_each(|x| *x /= scale);
    let sys = System { model, mesh, mode, phase_row, u_ref: seed.u.clone() };
    let mut u = seed.u.clone();
    let mut w = seed.w.clone();
    let mut p = match mode {
        SolveMode::FixC(c) => {
            if !(c > 0.0) {
                return Err(Error::InvalidInput(format!("wave speed {c} must be positive")));
            }
            seed.ell
        }
        SolveMode::FixEll(_) => seed.omega,
    };
    let mut r = sys.full_residual(&u, &w, p);
    let mut norm = scaled_norm(&r);
    let mut iterations = 0;
    while norm > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NewtonDivergence(format!("no convergence in {iterations} iterations (residual {norm:e})")));
        }
        iterations += 1;
        let jac = sys.jacobian(&u, &w, p);
        let rhs = Mat::<f64>::from_fn(2 * n + 1, 1, |i, _| -r[i]);
        let delta = jac.partial_piv_lu().solve(&rhs);
        if (0..2 * n + 1).any(|i| !delta[(i, 0)].is_finite()) {
            return Err(Error::JacobianSingular("non-finite Newton update".into()));
        }
        // Small eps raises the round-off floor of the residual; a vanishing
        // update below the acceptance threshold is convergence.
        let step = (0..2 * n).fold(0.0f64, |m, i| m.max(delta[(i, 0)].abs()));
        if norm < opts.accept && step < 1e-10 && delta[(2 * n, 0)].abs() < 1e-10 * p.abs() {
            return finish(seed, model, mode, u, w, p, iterations);
        }
        let mut lambda = 1.0;
        loop {
            let nu: Vec<f64> = (0..n).map(|j| u[j] + lambda * delta[(j, 0)]).collect();
            let nw: Vec<f64> = (0..n).map(|j| w[j] + lambda * delta[(n + j, 0)]).collect();
            let np = p + lambda * delta[(2 * n, 0)];
            let valid = match mode {
                SolveMode::FixC(_) => np > 0.0,
                SolveMode::FixEll(_) => np.is_finite(),
            };
            if valid {
                let nr = sys.full_residual(&nu, &nw, np);
                let nn = scaled_norm(&nr);
                if nn.is_finite() && (nn < norm || (lambda == 1.0 && nn < 2.0 * norm && norm < 1e-6)) {
                    u = nu;
                    w = nw;
                    p = np;
                    r = nr;
                    norm = nn;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < opts.min_damping {
                // a full step that stalls at round-off level counts as converged
                if norm < opts.accept {
                    return finish(seed, model, mode, u, w, p, iterations);
                }
                return Err(Error::NewtonDivergence(format!("line search failed at residual {norm:e}")));
            }
        }
    }
    finish(seed, model, mode, u, w, p, iterations)
}

fn finish(
    seed: &Seed,
    model: &ReactionModel,
    mode: SolveMode,
    u: Vec<f64>,
    w: Vec<f64>,
    p: f64,
    iterations: usize,
) -> Result<WaveTrain> {
    let (ell, omega, c) = match mode {
        SolveMode::FixC(c) => (p, p * c, c),
        SolveMode::FixEll(ell) => (ell, p, p / ell),
    };
    let mut wt = WaveTrain {
        mesh: seed.mesh.clone(),
        u_star: u,
        w_star: w,
        u_ref: seed.u.clone(),
        ell,
        omega,
        c,
        l_eps: TWO_PI / ell,
        model: *model,
        residual_norm: 0.0,
        iterations,
    };
    wt.residual_norm = wt.residual();
    Ok(wt)
}

/// Limit cycle of the kinetics `u' = F`, `w' = eps G`, sampled at a fixed
/// time step over one period starting at an upward crossing.
#[derive(Debug, Clone)]
pub struct KineticCycle {
    pub period: f64,
    pub dt: f64,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn kinetic_cycle(model: &ReactionModel) -> Result<KineticCycle> {
    model.validate(false)?;
    let geo = fold_geometry(model)?;
    let eps = model.epsilon();
    let mid = 0.5 * (geo.u1 + geo.ubar1);
    let dt = 0.02f64.min(0.05 / eps.sqrt().max(1.0));
    let rhs = |u: f64, w: f64| (model.f(u, w), eps * model.g(u, w));
    let step = |u: f64, w: f64| {
        let (a1, b1) = rhs(u, w);
        let (a2, b2) = rhs(u + 0.5 * dt * a1, w + 0.5 * dt * b1);
        let (a3, b3) = rhs(u + 0.5 * dt * a2, w + 0.5 * dt * b2);
        let (a4, b4) = rhs(u + dt * a3, w + dt * b3);
        (u + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4), w + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4))
    };
    let (mut u, mut w) = (geo.u1, model.nullcline(geo.u1));
    let max_steps = (200.0 / (eps * dt)) as usize + 100_000;
    let mut crossings: Vec<f64> = Vec::new();
    let mut t = 0.0;
    for _ in 0..max_steps {
        let (nu, nw) = step(u, w);
        if u < mid && nu >= mid {
            crossings.push(t + dt * (mid - u) / (nu - u));
        }
        u = nu;
        w = nw;
        t += dt;
        if crossings.len() >= 5 {
            let k = crossings.len();
            let p1 = crossings[k - 1] - crossings[k - 2];
            let p2 = crossings[k - 2] - crossings[k - 3];
            if (p1 - p2).abs() < 1e-6 * p1 {
                // record one period starting exactly at the crossing level
                let mut us = Vec::new();
                let mut ws = Vec::new();
                let steps = (p1 / dt).round() as usize;
                let (mut cu, mut cw) = (u, w);
                for _ in 0..steps {
                    us.push(cu);
                    ws.push(cw);
                    let (a, b) = step(cu, cw);
                    cu = a;
                    cw = b;
                }
                return Ok(KineticCycle { period: steps as f64 * dt, dt, u: us, w: ws });
            }
        }
    }
    Err(Error::RegimeViolation(format!("kinetics settle without a limit cycle ({} upward crossings)", crossings.len())))
}

/// Seed from the kinetic limit cycle: `u(xi) = U(-xi / c)` with period
/// `L = c T`.
pub fn kinetic_seed(model: &ReactionModel, c: f64, n: usize) -> Result<Seed> {
    let cyc = kinetic_cycle(model)?;
    let m = cyc.u.len();
    let ell = TWO_PI / (c * cyc.period);
    // theta increases as kinetic time decreases
    let sample = |v: &[f64], theta: f64| -> f64 {
        let t = (-(theta / TWO_PI) * cyc.period).rem_euclid(cyc.period) / cyc.dt;
        let i = (t.floor() as usize) % m;
        let f = t - t.floor();
        v[i] * (1.0 - f) + v[(i + 1) % m] * f
    };
    let fine = 8192usize;
    let fine_theta: Vec<f64> = (0..fine).map(|j| TWO_PI * j as f64 / fine as f64).collect();
    let fine_u: Vec<f64> = fine_theta.iter().map(|&t| sample(&cyc.u, t)).collect();
    let (front, back) = layer_positions_from(&fine_theta, &fft_derivative(&fine_u));
    let mesh = layer_mesh(n, front, back, ell)?;
    let u = mesh.theta.iter().map(|&t| sample(&cyc.u, t + front)).collect();
    let w = mesh.theta.iter().map(|&t| sample(&cyc.w, t + front)).collect();
    Ok(Seed { mesh, u, w, ell, omega: ell * c })
}

/// Wave train at speed `c` started from the kinetic limit cycle, solving first
/// at the kinetic wavenumber and then releasing it.
pub fn wavetrain_from_kinetics(model: &ReactionModel, c: f64, n: usize) -> Result<WaveTrain> {
    let seed = kinetic_seed(model, c, n)?;
    let opts = NewtonOptions::default();
    let first = newton_wavetrain(&seed, model, SolveMode::FixEll(seed.ell), &opts)?;
    let seed = first.adapted_seed(n, model.epsilon(), first.ell)?;
    let seed = Seed { omega: seed.ell * first.c, ..seed };
    let second = newton_wavetrain(&seed, model, SolveMode::FixC(first.c), &opts)?;
    if (second.c - c).abs() < 1e-14 {
        return Ok(second);
    }
    let mut rec = continue_from(&second, c, 8)?;
    Ok(rec.pop().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxOptions {
    pub dt: f64,
    pub dx: f64,
    /// Stop once the time derivative, with the drift component removed, is
    /// below this in max-norm.
    pub tol: f64,
    /// Simulation time between convergence checks.
    pub check_every: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self { dt: dns::DEFAULT_DT, dx: dns::DEFAULT_DX, tol: 1e-4, check_every: 10.0 }
    }
}

#[derive(Debug, Clone)]
pub struct RelaxedSeed {
    pub seed: Seed,
    /// Speed of the relaxed profile (the simulation frame moves at `c`).
    pub speed: f64,
    pub derivative_norm: f64,
    pub t: f64,
}

/// Relaxes the kinetic limit cycle, stretched over one period `l_guess`, by
/// direct simulation in a frame moving at `c`, and returns it as a Newton seed
/// on an `n`-point layer-adapted grid.
///
/// A profile that drifts steadily relative to the frame counts as relaxed; its
/// drift corrects the speed of the seed.
pub fn relax_seed(
    model: &ReactionModel,
    c: f64,
    l_guess: f64,
    t_relax: f64,
    n: usize,
    opts: &RelaxOptions,
) -> Result<RelaxedSeed> {
    if !(l_guess > 0.0 && c > 0.0 && t_relax > 0.0) {
        return Err(Error::InvalidInput(format!("L = {l_guess}, c = {c}, t = {t_relax} must be positive")));
    }
    let cyc = kinetic_cycle(model)?;
    let grid = dns::SimGrid::with_spacing(l_guess, opts.dx)?;
    let m = cyc.u.len();
    let sample = |v: &[f64], x: f64| -> f64 {
        let t = (-(x / l_guess) * cyc.period).rem_euclid(cyc.period) / cyc.dt;
        let i = (t.floor() as usize) % m;
        let f = t - t.floor();
        v[i] * (1.0 - f) + v[(i + 1) % m] * f
    };
    let x = grid.x();
    let mut state = dns::SimState {
        u: x.iter().map(|&x| sample(&cyc.u, x)).collect(),
        w: x.iter().map(|&x| sample(&cyc.w, x)).collect(),
        t: 0.0,
        frame_speed: c,
    };
    let mut integ = dns::Etdrk4::new(grid.clone(), *model, opts.dt, c)?;
    let per_check = ((opts.check_every / opts.dt).round() as usize).max(1);
    loop {
        integ.advance(&mut state, per_check)?;
        let (ut, wt) = integ.time_derivative(&state);
        let (ux, wx) = (integ.derivative(&state.u), integ.derivative(&state.w));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let drift = (dot(&ut, &ux) + dot(&wt, &wx)) / (dot(&ux, &ux) + dot(&wx, &wx));
        let norm = ut
            .iter()
            .zip(&ux)
            .chain(wt.iter().zip(&wx))
            .fold(0.0f64, |a, (t, d)| a.max((t - drift * d).abs()));
        if norm < opts.tol {
            let ell = TWO_PI / l_guess;
            let theta: Vec<f64> = (0..grid.n).map(|j| TWO_PI * j as f64 / grid.n as f64).collect();
            let (front, back) = layer_positions_from(&theta, &fft_derivative(&state.u));
            let mesh = layer_mesh(n, front, back, ell)?;
            let (iu, iw) = (TrigInterpolant::new(&state.u), TrigInterpolant::new(&state.w));
            let u = mesh.theta.iter().map(|&t| iu.eval(t + front)).collect();
            let w = mesh.theta.iter().map(|&t| iw.eval(t + front)).collect();
            // u_t = drift u_x in the frame means the profile moves at c - drift
            let speed = c - drift;
            return Ok(RelaxedSeed { seed: Seed { mesh, u, w, ell, omega: ell * speed }, speed, derivative_norm: norm, t: state.t });
        }
        if state.t >= t_relax {
            return Err(Error::NoRelaxation(norm));
        }
    }
}

/// Wave train at speed `c` for `model`. Small epsilon is reached by
/// continuation from `EPS_DIRECT` in half-decade steps.
pub fn wavetrain_at(model: &ReactionModel, c: f64, n: usize) -> Result<WaveTrain> {
    let eps = model.epsilon();
    if eps >= EPS_DIRECT {
        return wavetrain_from_kinetics(model, c, n);
    }
    let start = wavetrain_from_kinetics(&model.with_epsilon(EPS_DIRECT), c, n)?;
    let mut targets = Vec::new();
    let mut e = EPS_DIRECT;
    while e / 10f64.sqrt() > eps * (1.0 + 1e-12) {
        e /= 10f64.sqrt();
        targets.push(e);
    }
    targets.push(eps);
    continue_in_epsilon(&start, &targets, n)?
        .pop()
        .ok_or_else(|| Error::InvalidInput("empty continuation".into()))
}

/// Smallest epsilon solved directly from the kinetic limit cycle.
pub const EPS_DIRECT: f64 = 1e-3;

/// Natural-parameter continuation in `c` from a converged train to `c_end`,
/// returning the trains at each accepted step.
pub fn continue_from(start: &WaveTrain, c_end: f64, steps: usize) -> Result<Vec<WaveTrain>> {
    let n = start.n();
    let mut out = vec![start.clone()];
    let mut dc = (c_end - start.c) / steps.max(1) as f64;
    let min_dc = 1e-4 * (c_end - start.c).abs().max(1e-3);
    let mut prev_slope: Option<f64> = None;
    while (out.last().unwrap().c - c_end).abs() > 1e-14 {
        let cur = out.last().unwrap();
        let mut c_next = cur.c + dc;
        if (c_next - c_end) * dc.signum() > 0.0 {
            c_next = c_end;
        }
        let ell_pred = match prev_slope {
            Some(s) => (cur.ell + s * (c_next - cur.c)).max(0.2 * cur.ell),
            None => cur.ell,
        };
        let attempt = cur
            .adapted_seed(n, cur.epsilon(), ell_pred)
            .and_then(|seed| {
                let seed = Seed { omega: ell_pred * c_next, ..seed };
                newton_wavetrain(&seed, &cur.model, SolveMode::FixC(c_next), &NewtonOptions::default())
            });
        match attempt {
            Ok(wt) => {
                prev_slope = Some((wt.ell - cur.ell) / (wt.c - cur.c));
                out.push(wt);
                dc *= 1.3f64.min((c_end - c_next).abs() / dc.abs().max(1e-300)).max(1.0);
                if dc.abs() > (c_end - start.c).abs() / steps.max(1) as f64 {
                    dc = (c_end - start.c) / steps.max(1) as f64;
                }
            }
            Err(_) => {
                dc *= 0.5;
                if dc.abs() < min_dc {
                    return Err(Error::StepFailure(cur.c));
                }
            }
        }
    }
    Ok(out)
}

/// One sample of a speed continuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSample {
    pub c: f64,
    pub l_eps: f64,
    pub ell: f64,
    pub omega: f64,
    pub amplitude: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub samples: Vec<ContinuationSample>,
    pub direction: String,
}

impl ContinuationRecord {
    pub fn is_monotone_increasing(&self) -> bool {
        let mut s = self.samples.clone();
        s.sort_by(|a, b| a.c.total_cmp(&b.c));
        s.windows(2).all(|p| p[1].l_eps > p[0].l_eps)
    }
}

fn sample_of(wt: &WaveTrain) -> ContinuationSample {
    ContinuationSample {
        c: wt.c,
        l_eps: wt.l_eps,
        ell: wt.ell,
        omega: wt.omega,
        amplitude: wt.amplitude(),
        residual: wt.residual_norm,
    }
}

/// Sweeps the speed from `c_range.0` to `c_range.1`, recording `steps + 1`
/// equally spaced samples. The first train is computed from the kinetics.
pub fn continue_in_c(model: &ReactionModel, c_range: (f64, f64), steps: usize, n: usize) -> Result<ContinuationRecord> {
    let (c0, c1) = c_range;
    if steps == 0 || !(c0 > 0.0 && c1 > 0.0) {
        return Err(Error::InvalidInput("continuation needs positive speeds and at least one step".into()));
    }
    let mut wt = wavetrain_from_kinetics(model, c0, n)?;
    let mut samples = vec![sample_of(&wt)];
    for k in 1..=steps {
        let target = c0 + (c1 - c0) * k as f64 / steps as f64;
        let branch = continue_from(&wt, target, 1)?;
        wt = branch.into_iter().last().unwrap();
        samples.push(sample_of(&wt));
    }
    Ok(ContinuationRecord { samples, direction: "c".into() })
}

/// Continues a train at fixed speed in epsilon through the given values,
/// subdividing steps geometrically when Newton fails.
pub fn continue_in_epsilon(start: &WaveTrain, targets: &[f64], n: usize) -> Result<Vec<WaveTrain>> {
    let mut out = Vec::new();
    let mut cur = start.clone();
    for &eps_t in targets {
        let mut ratio_step = (eps_t / cur.epsilon()).ln();
        let min_step = 1e-3;
        while (cur.epsilon() - eps_t).abs() > 1e-15 * eps_t {
            let remaining = (eps_t / cur.epsilon()).ln();
            let step = if remaining.abs() <= ratio_step.abs() { remaining } else { ratio_step.abs() * remaining.signum() };
            let eps_next = if step == remaining { eps_t } else { cur.epsilon() * step.exp() };
            // to leading order ell scales like eps at fixed speed
            let ell_pred = cur.ell * eps_next / cur.epsilon();
            let model = cur.model.with_epsilon(eps_next);
            let attempt = cur.adapted_seed(n, eps_next, ell_pred).and_then(|seed| {
                newton_wavetrain(&seed, &model, SolveMode::FixC(cur.c), &NewtonOptions::default())
            });
            match attempt {
                Ok(wt) => {
                    cur = wt;
                }
                Err(e) => {
                    ratio_step *= 0.5;
                    if ratio_step.abs() < min_step {
                        return Err(match e {
                            Error::NewtonDivergence(_) | Error::JacobianSingular(_) => Error::StepFailure(eps_next),
                            other => other,
                        });
                    }
                }
            }
        }
        // polish on a grid adapted to the final wavenumber
        cur = cur.remeshed(n)?;
        out.push(cur.clone());
    }
    Ok(out)
}
